#include "timae/run_config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "parse_util.hpp"
#include "timae/error.hpp"

namespace timae {

namespace {

using detail::format_double;
using detail::to_bool;
using detail::to_double;
using detail::to_size;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const char* bool_text(bool b) { return b ? "true" : "false"; }

bool set_data(DataConfig& d, const std::string& key, const std::string& v) {
  if (key == "csv") d.csv = v;
  else if (key == "synthetic") d.synthetic = SyntheticSpec::parse(v).str();
  else if (key == "split") {
    SplitSpec::parse(v);
    d.split = v;
  } else if (key == "timestamp_col") d.timestamp_col = to_bool(key, v);
  else if (key == "forward_fill") d.forward_fill = to_bool(key, v);
  else if (key == "normalize") d.normalize = to_bool(key, v);
  else if (key == "target_channels") d.target_channels = to_size(key, v);
  else if (key == "max_len") d.max_len = to_size(key, v);
  else return false;
  return true;
}

bool set_eval(EvalConfig& e, const std::string& key, const std::string& v) {
  if (key == "history") e.history = to_size(key, v);
  else if (key == "horizon") e.horizon = to_size(key, v);
  else if (key == "stride") e.stride = to_size(key, v);
  else if (key == "mode") {
    if (v != "direct" && v != "finetune" && v != "ridge")
      throw ConfigError("eval.mode must be direct, finetune or ridge, got '" + v + "'");
    e.mode = v;
  } else if (key == "pooling") {
    try {
      parse_pooling(v);
    } catch (const Error& err) {
      throw ConfigError(err.what());
    }
    e.pooling = v;
  } else if (key == "probe_stride") e.probe_stride = to_size(key, v);
  else if (key == "head_pooling") {
    try {
      parse_head_pooling(v);
    } catch (const Error& err) {
      throw ConfigError(err.what());
    }
    e.head_pooling = v;
  } else if (key == "ft_epochs") e.ft_epochs = to_size(key, v);
  else if (key == "ft_lr") e.ft_lr = to_double(key, v);
  else if (key == "ft_batch") e.ft_batch = to_size(key, v);
  else if (key == "transfer_history") e.transfer_history = to_size(key, v);
  else if (key == "transfer_horizon") e.transfer_horizon = to_size(key, v);
  else if (key == "transfer_stride") e.transfer_stride = to_size(key, v);
  else return false;
  return true;
}

std::vector<std::pair<std::string, std::string>> model_entries(const ModelConfig& m) {
  std::vector<std::pair<std::string, std::string>> out;
  const auto j = nlohmann::ordered_json::parse(m.to_json());
  for (const auto& [key, value] : j.items()) {
    if (value.is_string()) out.emplace_back(key, value.get<std::string>());
    else if (value.is_boolean()) out.emplace_back(key, bool_text(value.get<bool>()));
    else if (value.is_number_float()) out.emplace_back(key, format_double(value.get<double>()));
    else out.emplace_back(key, value.dump());
  }
  return out;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "seed") {
    train.seed = detail::to_u64(key, v);
    return;
  }
  const auto dot = key.find('.');
  if (dot == std::string::npos) throw ConfigError("config key needs a section prefix: " + key);
  const std::string section = key.substr(0, dot), name = key.substr(dot + 1);
  bool known = false;
  try {
    if (section == "model") known = model.set(name, v);
    else if (section == "train") known = train.set(name, v);
    else if (section == "data") known = set_data(data, name, v);
    else if (section == "eval") known = set_eval(eval, name, v);
    else throw ConfigError("unknown config section '" + section + "' in key " + key);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(key + ": " + e.what());
  }
  if (!known) throw ConfigError("unknown config key: " + key);
}

void RunConfig::parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " is not key = value: " + line);
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  parse(ss.str());
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (auto& [k, v] : model_entries(model)) out.emplace_back("model." + k, v);
  for (auto& [k, v] : train.entries()) out.emplace_back("train." + k, v);
  const std::pair<const char*, std::string> data_rows[] = {
      {"csv", data.csv},
      {"synthetic", data.synthetic},
      {"split", data.split},
      {"timestamp_col", bool_text(data.timestamp_col)},
      {"forward_fill", bool_text(data.forward_fill)},
      {"normalize", bool_text(data.normalize)},
      {"target_channels", std::to_string(data.target_channels)},
      {"max_len", std::to_string(data.max_len)},
  };
  for (auto& [k, v] : data_rows) out.emplace_back(std::string("data.") + k, v);
  const std::pair<const char*, std::string> eval_rows[] = {
      {"history", std::to_string(eval.history)},
      {"horizon", std::to_string(eval.horizon)},
      {"stride", std::to_string(eval.stride)},
      {"mode", eval.mode},
      {"pooling", eval.pooling},
      {"probe_stride", std::to_string(eval.probe_stride)},
      {"head_pooling", eval.head_pooling},
      {"ft_epochs", std::to_string(eval.ft_epochs)},
      {"ft_lr", format_double(eval.ft_lr)},
      {"ft_batch", std::to_string(eval.ft_batch)},
      {"transfer_history", std::to_string(eval.transfer_history)},
      {"transfer_horizon", std::to_string(eval.transfer_horizon)},
      {"transfer_stride", std::to_string(eval.transfer_stride)},
  };
  for (auto& [k, v] : eval_rows) out.emplace_back(std::string("eval.") + k, v);
  return out;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries()) out += k + " = " + v + "\n";
  return out;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  split_spec().validate();
  if (data.csv.empty()) SyntheticSpec::parse(data.synthetic);
  if (data.target_channels == 0 || data.target_channels > model.in_channels)
    throw ConfigError("data.target_channels must lie in [1, model.in_channels]");
  if (data.target_channels != model.out_channels)
    throw ConfigError("data.target_channels (" + std::to_string(data.target_channels) +
                      ") must equal model.out_channels (" + std::to_string(model.out_channels) + ")");
  if (eval.history == 0 || eval.horizon == 0) throw ConfigError("eval.history and eval.horizon must be positive");
  if (eval.stride == 0 || eval.probe_stride == 0 || eval.transfer_stride == 0)
    throw ConfigError("eval strides must be positive");
  if (eval.ft_epochs == 0 || eval.ft_batch == 0) throw ConfigError("eval.ft_epochs and eval.ft_batch must be positive");
}

ExperimentConfig RunConfig::experiment() const {
  ExperimentConfig e;
  e.model = model;
  e.train = train;
  e.synthetic = SyntheticSpec::parse(data.synthetic);
  e.split = split_spec();
  e.history = eval.history;
  e.horizon = eval.horizon;
  e.eval_stride = eval.stride;
  return e;
}

FinetuneConfig RunConfig::finetune() const {
  FinetuneConfig f;
  f.lr = eval.ft_lr;
  f.epochs = eval.ft_epochs;
  f.batch_size = eval.ft_batch;
  f.pooling = parse_head_pooling(eval.head_pooling);
  f.seed = train.seed;
  return f;
}

Dataset load_dataset(const RunConfig& cfg) {
  TimeSeries raw;
  std::string name;
  if (cfg.data.csv.empty()) {
    raw = generate_synthetic(SyntheticSpec::parse(cfg.data.synthetic), derive_seed(cfg.train.seed, "data"));
    name = "synthetic";
  } else {
    raw = load_csv(cfg.data.csv, CsvSchema{cfg.data.timestamp_col, cfg.data.forward_fill});
    name = std::filesystem::path(cfg.data.csv).stem().string();
  }
  if (cfg.data.max_len > 0) raw = equidistant_subsample(raw, cfg.data.max_len);
  if (raw.channels() != cfg.model.in_channels)
    throw ConfigError("dataset has " + std::to_string(raw.channels()) + " channels, model.in_channels is " +
                      std::to_string(cfg.model.in_channels));
  return prepare_dataset(std::move(name), std::move(raw), cfg.split_spec(), cfg.model.window_len,
                         cfg.data.normalize);
}

}  // namespace timae
