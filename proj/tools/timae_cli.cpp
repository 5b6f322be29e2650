// timae: command-line driver for pretraining, forecasting, probes, ablations.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "timae/checkpoint.hpp"
#include "timae/error.hpp"
#include "timae/evaluation.hpp"
#include "timae/gradcheck.hpp"
#include "timae/run_config.hpp"

namespace fs = std::filesystem;
using namespace timae;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kNumeric = 3, kIo = 4 };

struct Common {
  std::string config_path;
  std::string out = "out";
  std::size_t jobs = 1;
  bool timestamp_col = false;
  bool no_normalize = false;
  bool print_config = false;
  std::vector<std::string> sets;
  // Shorthand overrides; applied in this order after the config file.
  std::vector<std::pair<std::string, std::string>> flags;
};

/// Registers an option that, when given, becomes `key = value`.
void override_flag(CLI::App* app, Common& c, const std::string& flag, const std::string& key,
                   const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&c, key](const std::string& v) { c.flags.emplace_back(key, v); }, help);
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "key = value config file");
  app->add_option_function<std::string>("--seed", [&c](const std::string& v) { c.flags.emplace_back("seed", v); },
                                        "run seed (all randomness derives from it)");
  app->add_option("--out", c.out, "output directory")->capture_default_str();
  app->add_option("--jobs", c.jobs, "parallel cells (ablate only)")->capture_default_str();
  app->add_flag("--timestamp-col", c.timestamp_col, "first CSV column is a timestamp");
  app->add_flag("--no-normalize", c.no_normalize, "skip z-score normalization");
  app->add_flag("--print-config", c.print_config, "print the resolved config and exit");
  app->add_option("--set", c.sets, "override any key, e.g. --set model.d_model=32");
  override_flag(app, c, "--csv", "data.csv", "CSV dataset (header row, numeric columns)");
  override_flag(app, c, "--synthetic", "data.synthetic", "synthetic spec, e.g. alpha=300,beta=3");
  override_flag(app, c, "--split", "data.split", "split ratios, e.g. 6:2:2");
  override_flag(app, c, "--target-channels", "data.target_channels", "forecast the last n channels");
  override_flag(app, c, "--epochs", "train.epochs", "pretraining epochs");
  override_flag(app, c, "--lr", "train.lr", "Adam learning rate");
  override_flag(app, c, "--lr-floor", "train.lr_floor", "cosine schedule floor");
  override_flag(app, c, "--batch-size", "train.batch_size", "windows per optimizer step");
  override_flag(app, c, "--sampling-time", "train.sampling_time", "mask draws per window");
  override_flag(app, c, "--mask-strategy", "train.mask_strategy", "random|continuous|split|periodic");
  override_flag(app, c, "--augmentation", "train.augmentation", "none|scaling|shifting|jittering");
  override_flag(app, c, "--window-stride", "train.window_stride", "pretraining window stride");
  override_flag(app, c, "--mask-ratio", "model.mask_ratio", "fraction of masked tokens");
  override_flag(app, c, "--window-len", "model.window_len", "pretraining window length L");
  override_flag(app, c, "--d-model", "model.d_model", "encoder width");
  override_flag(app, c, "--d-decoder", "model.d_decoder", "decoder width");
  override_flag(app, c, "--heads", "model.n_heads", "attention heads");
  override_flag(app, c, "--enc-layers", "model.enc_layers", "encoder blocks");
  override_flag(app, c, "--dec-layers", "model.dec_layers", "decoder blocks");
  override_flag(app, c, "--dropout", "model.dropout", "decoder input dropout");
  override_flag(app, c, "--norm", "model.norm", "pre|post");
  override_flag(app, c, "--history", "eval.history", "forecast history h");
  override_flag(app, c, "--horizon", "eval.horizon", "forecast horizon k");
  override_flag(app, c, "--eval-stride", "eval.stride", "steps between test origins");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg;
  if (!c.config_path.empty()) cfg.load(c.config_path);
  for (const auto& [k, v] : c.flags) cfg.set(k, v);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.timestamp_col) cfg.data.timestamp_col = true;
  if (c.no_normalize) cfg.data.normalize = false;
  cfg.validate();
  return cfg;
}

void log(const std::string& msg) { std::cerr << msg << std::endl; }

class RunDir {
 public:
  RunDir(const std::string& command, const fs::path& dir) : command_(command), dir_(dir) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

  void write(const std::string& name, const std::string& text) {
    std::ofstream out(path(name), std::ios::binary);
    if (!out) throw IoError("cannot write " + path(name).string());
    out << text;
    if (!out) throw IoError("write failed for " + path(name).string());
    out.close();
    files_.push_back(name);
  }

  /// Registers a file written by someone else.
  void add(const std::string& name) { files_.push_back(name); }

  /// manifest.json: every artifact with its size and CRC-32.
  void finish() {
    nlohmann::ordered_json j;
    j["command"] = command_;
    j["files"] = nlohmann::ordered_json::array();
    for (const auto& f : files_) {
      nlohmann::ordered_json e;
      e["name"] = f;
      e["bytes"] = fs::file_size(path(f));
      char hex[9];
      const bool checkpoint = fs::path(f).extension() == ".timae";
      std::snprintf(hex, sizeof hex, "%08x", checkpoint ? checkpoint_content_crc32(path(f)) : file_crc32(path(f)));
      e["crc32"] = hex;
      j["files"].push_back(e);
    }
    std::ofstream out(path("manifest.json"));
    out << j.dump(2) << "\n";
    if (!out) throw IoError("cannot write manifest");
  }

 private:
  std::string command_;
  fs::path dir_;
  std::vector<std::string> files_;
};

std::string short_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string crc_hex(std::uint32_t crc) {
  char hex[9];
  std::snprintf(hex, sizeof hex, "%08x", crc);
  return hex;
}

std::string scores_json(const ForecastScores& s) {
  nlohmann::ordered_json j;
  j["origins"] = s.origins;
  j["normalized"] = {{"mse", s.mse_normalized}, {"mae", s.mae_normalized}};
  j["raw"] = {{"mse", s.mse_raw}, {"mae", s.mae_raw}};
  return j.dump(2);
}

/// origin,step,<channel...>
std::string predictions_csv(const Dataset& data, std::span<const std::size_t> origins, std::size_t k,
                            std::size_t n, std::span<const double> pred_normalized) {
  std::vector<double> raw(pred_normalized.begin(), pred_normalized.end());
  const std::size_t m = data.raw.channels();
  data.normalizer.inverse(raw, n, m - n);
  std::string out = "origin,step";
  for (std::size_t c = m - n; c < m; ++c) out += "," + data.raw.channel_names[c];
  out += "\n";
  for (std::size_t i = 0; i < origins.size(); ++i)
    for (std::size_t j = 0; j < k; ++j) {
      out += std::to_string(origins[i]) + "," + std::to_string(origins[i] + j);
      for (std::size_t c = 0; c < n; ++c) {
        std::ostringstream v;
        v.precision(10);
        v << raw[(i * k + j) * n + c];
        out += "," + v.str();
      }
      out += "\n";
    }
  return out;
}

TiMaeModel<float> load_for(const std::string& checkpoint, const RunConfig& cfg) {
  auto model = load_model(checkpoint);
  const auto& mc = model.config();
  if (mc.in_channels != cfg.model.in_channels || mc.out_channels != cfg.model.out_channels)
    throw ConfigError("checkpoint expects " + std::to_string(mc.in_channels) + " -> " +
                      std::to_string(mc.out_channels) + " channels, config has " +
                      std::to_string(cfg.model.in_channels) + " -> " + std::to_string(cfg.model.out_channels));
  return model;
}

/// The checkpoint's model settings drive the data checks.
void adopt_model(RunConfig& cfg, const std::string& checkpoint) {
  cfg.model = read_checkpoint_config(checkpoint);
  cfg.data.target_channels = cfg.model.out_channels;
}

// ---------------------------------------------------------------------------

int cmd_pretrain(const Common& c) {
  RunConfig cfg = resolve(c);
  if (c.print_config) return std::cout << cfg.to_text(), kOk;
  RunDir run("pretrain", c.out);
  run.write("config.txt", cfg.to_text());
  const Dataset data = load_dataset(cfg);
  const auto& sp = data.splits;
  WindowSet train(data.normalized.slice(sp.train.begin, sp.train.end),
                  {cfg.model.window_len, cfg.train.window_stride, 0});
  std::unique_ptr<WindowSet> val;
  if (sp.val.size() >= cfg.model.window_len)
    val = std::make_unique<WindowSet>(data.normalized.slice(sp.val.begin, sp.val.end),
                                      WindowSpec{cfg.model.window_len, cfg.train.val_stride, 0});
  TiMaeModel<float> model(cfg.model, cfg.train.seed);
  log("pretraining " + std::to_string(model.parameter_count()) + " parameters on " + std::to_string(train.size()) +
      " windows");
  const auto tl = pretrain(model, train, val.get(), cfg.train, [](const EpochRecord& e) {
    std::ostringstream os;
    os << "epoch " << e.epoch << " train " << e.train_loss << " val " << e.val_loss;
    log(os.str());
  });
  save_checkpoint(model, run.path("checkpoint.timae"));
  run.add("checkpoint.timae");
  run.write("train_log.csv", tl.steps_csv());
  run.write("epochs.csv", tl.epochs_csv());
  run.write("summary.json", tl.summary_json());
  run.finish();
  std::cout << "checkpoint " << run.path("checkpoint.timae").string() << " crc32 "
            << crc_hex(checkpoint_content_crc32(run.path("checkpoint.timae"))) << "\n";
  return kOk;
}

int cmd_forecast(const Common& c, const std::string& checkpoint, const std::string& mode_flag) {
  RunConfig cfg = resolve(c);
  adopt_model(cfg, checkpoint);
  if (!mode_flag.empty()) cfg.set("eval.mode", mode_flag);
  if (c.print_config) return std::cout << cfg.to_text(), kOk;
  RunDir run(cfg.eval.mode == "finetune" ? "finetune" : "forecast", c.out);
  run.write("config.txt", cfg.to_text());
  const Dataset data = load_dataset(cfg);
  const auto model = load_for(checkpoint, cfg);
  const std::size_t n = cfg.model.out_channels, k = cfg.eval.horizon;
  const std::size_t h = cfg.eval.mode == "direct" ? cfg.eval.history : cfg.model.window_len;
  const auto origins = forecast_origins(data.splits.test.begin, data.splits.test.end, h, k, cfg.eval.stride);
  if (origins.empty()) throw ConfigError("the test block fits no " + std::to_string(h) + "+" + std::to_string(k) + " forecast");

  nlohmann::ordered_json metrics;
  metrics["mode"] = cfg.eval.mode;
  metrics["history"] = h;
  metrics["horizon"] = k;
  std::vector<double> pred;
  ForecastScores scores;
  if (cfg.eval.mode == "direct") {
    pred = direct_forecast(model, history_block(data.normalized, origins, h), origins.size(), h, k);
    scores = score_forecast(data, origins, k, n, pred);
  } else if (cfg.eval.mode == "ridge") {
    auto r = ridge_forecast(model, data, origins, k, n, parse_pooling(cfg.eval.pooling), cfg.eval.probe_stride);
    pred = std::move(r.predictions);
    scores = r.scores;
    metrics["alpha"] = r.probe.alpha;
    metrics["validation_mse"] = r.probe.validation_mse;
    std::cout << "ridge alpha " << short_number(r.probe.alpha) << "\n";
  } else {
    auto r = finetune_forecast_eval(model, data, origins, k, n, cfg.finetune(), cfg.eval.probe_stride);
    pred = std::move(r.predictions);
    scores = r.scores;
    metrics["encoder_crc32"] = crc_hex(r.result.encoder_crc);
    metrics["head_parameters"] = r.result.head.parameter_count();
    run.write("finetune_log.csv", r.result.log.steps_csv());
    std::cout << "encoder crc32 " << crc_hex(r.result.encoder_crc) << " (unchanged)\n";
  }
  const auto j = nlohmann::ordered_json::parse(scores_json(scores));
  for (const auto& [key, value] : j.items()) metrics[key] = value;
  run.write("predictions.csv", predictions_csv(data, origins, k, n, pred));
  run.write("metrics.json", metrics.dump(2) + "\n");
  run.finish();
  std::cout << "mse " << scores.mse_normalized << " mae " << scores.mae_normalized << " (normalized); mse "
            << scores.mse_raw << " mae " << scores.mae_raw << " (raw) over " << scores.origins << " origins\n";
  return kOk;
}

/// UCR-style rows: label, v1, v2, ... (no header). Labels are remapped to 0..C-1.
struct Labeled {
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t length = 0;
};

Labeled read_labeled(const std::string& path, std::map<std::string, int>& label_ids) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  Labeled out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    const auto [it, inserted] = label_ids.emplace(cell, static_cast<int>(label_ids.size()));
    out.labels.push_back(it->second);
    std::size_t len = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t pos = 0;
        out.values.push_back(std::stod(cell, &pos));
      } catch (const std::exception&) {
        throw ParseError(path + " row " + std::to_string(row) + ": '" + cell + "' is not a number");
      }
      ++len;
    }
    if (out.length == 0) out.length = len;
    if (len != out.length || len == 0)
      throw FormatError(path + " row " + std::to_string(row) + " has " + std::to_string(len) + " values, expected " +
                        std::to_string(out.length));
  }
  if (out.labels.empty()) throw FormatError(path + " holds no rows");
  return out;
}

/// Two classes of noisy ramps: label 1 rises, label 0 falls.
Labeled trend_sign_task(std::size_t count, std::size_t length, std::uint64_t seed) {
  Rng rng(seed);
  Labeled out;
  out.length = length;
  for (std::size_t i = 0; i < count; ++i) {
    const int y = static_cast<int>(i % 2);
    const double slope = (y ? 1.0 : -1.0) * rng.uniform(0.5, 1.5);
    const double offset = rng.normal(0.0, 0.5);
    for (std::size_t t = 0; t < length; ++t) {
      const double u = static_cast<double>(t) / static_cast<double>(length - 1) - 0.5;
      out.values.push_back(offset + slope * u + rng.normal(0.0, 0.1));
    }
    out.labels.push_back(y);
  }
  return out;
}

int cmd_classify(const Common& c, const std::string& checkpoint, const std::string& train_csv,
                 const std::string& test_csv, std::size_t synthetic_count, std::size_t synthetic_length) {
  RunConfig cfg = resolve(c);
  if (!checkpoint.empty()) adopt_model(cfg, checkpoint);
  if (c.print_config) return std::cout << cfg.to_text(), kOk;
  if (train_csv.empty() != test_csv.empty()) throw ConfigError("give both --train-csv and --test-csv or neither");
  RunDir run("classify", c.out);
  run.write("config.txt", cfg.to_text());
  if (cfg.model.in_channels != 1) throw ConfigError("classification inputs are univariate (model.in_channels = 1)");
  TiMaeModel<float> model = checkpoint.empty() ? TiMaeModel<float>(cfg.model, cfg.train.seed) : load_model(checkpoint);

  Labeled train, test;
  if (train_csv.empty()) {
    train = trend_sign_task(synthetic_count, synthetic_length, derive_seed(cfg.train.seed, "classify-train"));
    test = trend_sign_task(synthetic_count, synthetic_length, derive_seed(cfg.train.seed, "classify-test"));
  } else {
    std::map<std::string, int> ids;
    train = read_labeled(train_csv, ids);
    test = read_labeled(test_csv, ids);
  }
  // Long series are thinned to at most 1024 points before encoding.
  auto thin = [&](Labeled& d) {
    const std::size_t cap = cfg.data.max_len ? cfg.data.max_len : 1024;
    if (d.length <= cap) return;
    Labeled out;
    for (std::size_t i = 0; i < d.labels.size(); ++i) {
      TimeSeries ts;
      ts.channel_names = {"y"};
      ts.values.assign(d.values.begin() + static_cast<long>(i * d.length),
                       d.values.begin() + static_cast<long>((i + 1) * d.length));
      const auto sub = equidistant_subsample(ts, cap);
      out.values.insert(out.values.end(), sub.values.begin(), sub.values.end());
      out.length = sub.length();
    }
    out.labels = d.labels;
    d = std::move(out);
  };
  thin(train);
  thin(test);
  const Pooling pooling = parse_pooling(cfg.eval.pooling);
  const auto xtr = extract_representations(model, train.values, train.labels.size(), pooling);
  const auto xte = extract_representations(model, test.values, test.labels.size(), pooling);
  const std::size_t dim = xtr.size() / train.labels.size();
  ProbeConfig pc;
  pc.seed = cfg.train.seed;
  const auto r = classify_probe(xtr, train.labels, xte, test.labels, dim, pc);

  std::string pred = "index,label,predicted\n";
  for (std::size_t i = 0; i < r.predictions.size(); ++i)
    pred += std::to_string(i) + "," + std::to_string(test.labels[i]) + "," + std::to_string(r.predictions[i]) + "\n";
  nlohmann::ordered_json j;
  j["pooling"] = cfg.eval.pooling;
  j["features"] = dim;
  j["classes"] = r.probe.classes;
  j["lambda"] = r.probe.lambda;
  j["accuracy"] = r.accuracy;
  run.write("predictions.csv", pred);
  run.write("metrics.json", j.dump(2) + "\n");
  run.finish();
  std::cout << "accuracy " << r.accuracy << " (lambda " << short_number(r.probe.lambda) << ")\n";
  return kOk;
}

void write_report(RunDir& run, const EvalReport& report) {
  run.write("report.csv", report.to_csv());
  run.write("report.md", report.to_markdown());
  run.write("report_long.csv", report.to_long_csv());
}

int cmd_ablate(const Common& c, const std::vector<std::string>& axis_names, const std::vector<std::string>& values,
               bool factorial) {
  RunConfig cfg = resolve(c);
  if (c.print_config) return std::cout << cfg.to_text(), kOk;
  if (axis_names.empty()) throw ConfigError("ablate needs at least one --axis");
  if (!values.empty() && axis_names.size() != 1) throw ConfigError("--values applies to a single --axis");
  if (!cfg.data.csv.empty()) throw ConfigError("ablations run on the synthetic benchmark (drop --csv)");
  std::vector<AblationAxis> axes;
  try {
    for (const auto& a : axis_names) axes.push_back(default_axis(a));
    if (!values.empty()) axes[0].values = values;
    validate_axes(axes);
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  RunDir run("ablate", c.out);
  run.write("config.txt", cfg.to_text());
  const auto report = ablation_matrix(cfg.experiment(), axes, factorial, c.jobs,
                                      [](const std::string& cell) { log("done " + cell); });
  write_report(run, report);
  run.finish();
  std::cout << report.to_markdown();
  return kOk;
}

int cmd_transfer(const Common& c) {
  RunConfig cfg = resolve(c);
  if (c.print_config) return std::cout << cfg.to_text(), kOk;
  if (!cfg.data.csv.empty()) throw ConfigError("the transfer study is synthetic (drop --csv)");
  RunDir run("transfer", c.out);
  run.write("config.txt", cfg.to_text());
  TransferConfig tc;
  tc.base = cfg.experiment();
  tc.test_specs = default_transfer_specs();
  tc.history = cfg.eval.transfer_history;
  tc.horizon = cfg.eval.transfer_horizon;
  tc.eval_stride = cfg.eval.transfer_stride;
  auto report = transferability_study(tc, [](const std::string& s) { log(s); });
  report.notes.push_back("Reference (forecast of 400 steps): MSE 0.0134 / 0.0596 / 0.0089 / 0.0232 for "
                         "(300,3) / (600,3) / (300,100) / (600,100).");
  write_report(run, report);
  run.finish();
  std::cout << report.to_markdown();
  return kOk;
}

int cmd_gradcheck(std::size_t trials, std::uint64_t seed) {
  bool ok = true;
  std::printf("%-20s %14s %10s %s\n", "op", "max rel err", "tolerance", "status");
  for (const auto& r : run_op_gradchecks(static_cast<int>(trials), seed)) {
    std::printf("%-20s %14.3e %10.1e %s\n", r.name.c_str(), r.max_relative_error, r.tolerance,
                r.passed() ? "ok" : "FAIL");
    ok &= r.passed();
  }
  const auto m = model_gradcheck(tiny_model_config(), seed);
  const bool model_ok = m.global_relative_error < 1e-3;
  std::printf("%-20s %14.3e %10.1e %s (%zu parameters, worst tensor %s %.3e)\n", "end_to_end",
              m.global_relative_error, 1e-3, model_ok ? "ok" : "FAIL", m.parameters, m.worst_tensor.c_str(),
              m.worst_tensor_error);
  return ok && model_ok ? kOk : kNumeric;
}

int exit_code_for(const Error& e) {
  const auto& k = e.kind();
  if (k == "io" || k == "format" || k == "version") return kIo;
  if (k == "numeric" || k == "solver") return kNumeric;
  if (k == "invariant") return kFailure;
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked time-series autoencoder: pretraining, forecasting and probes"};
  app.require_subcommand(1);
  Common common;

  auto* pre = app.add_subcommand("pretrain", "pretrain on a CSV or synthetic series");
  add_common(pre, common);

  std::string checkpoint, mode;
  auto* fc = app.add_subcommand("forecast", "forecast the test block with a pretrained model");
  add_common(fc, common);
  fc->add_option("--checkpoint", checkpoint, "pretrained checkpoint")->required();
  fc->add_option("--mode", mode, "direct|finetune|ridge")->check(CLI::IsMember({"direct", "finetune", "ridge"}));

  auto* ft = app.add_subcommand("finetune", "train a linear head on the frozen encoder and forecast");
  add_common(ft, common);
  ft->add_option("--checkpoint", checkpoint, "pretrained checkpoint")->required();

  std::string train_csv, test_csv;
  std::size_t syn_count = 200, syn_length = 64;
  auto* cl = app.add_subcommand("classify", "logistic probe on pooled encoder representations");
  add_common(cl, common);
  cl->add_option("--checkpoint", checkpoint, "pretrained checkpoint (default: untrained model)");
  cl->add_option("--train-csv", train_csv, "rows of label,v1,v2,...");
  cl->add_option("--test-csv", test_csv, "rows of label,v1,v2,...");
  cl->add_option("--synthetic-count", syn_count, "series per split for the built-in trend-sign task")
      ->capture_default_str();
  cl->add_option("--synthetic-length", syn_length, "length of the built-in series")->capture_default_str();

  std::vector<std::string> axes, values;
  bool factorial = false;
  auto* ab = app.add_subcommand("ablate", "one pretrained model per ablation cell");
  add_common(ab, common);
  ab->add_option("--axis", axes,
                 "mask_ratio|strategy|sampling_time|augmentation|norm|encoder_pe|decoder_pe (repeatable)");
  ab->add_option("--values", values, "subset of the axis grid")->delimiter(',');
  ab->add_flag("--factorial", factorial, "all combinations instead of one axis at a time");

  auto* tr = app.add_subcommand("transfer", "train on alpha=300,beta=3 and forecast four generator settings");
  add_common(tr, common);

  std::size_t trials = 20;
  std::uint64_t gc_seed = 7;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  gc->add_option("--trials", trials, "random inputs per op")->capture_default_str();
  gc->add_option("--seed", gc_seed, "input seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*pre) return cmd_pretrain(common);
    if (*fc) return cmd_forecast(common, checkpoint, mode);
    if (*ft) return cmd_forecast(common, checkpoint, "finetune");
    if (*cl) return cmd_classify(common, checkpoint, train_csv, test_csv, syn_count, syn_length);
    if (*ab) return cmd_ablate(common, axes, values, factorial);
    if (*tr) return cmd_transfer(common);
    if (*gc) return cmd_gradcheck(trials, gc_seed);
  } catch (const Error& e) {
    std::cerr << "timae: " << e.what() << std::endl;
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "timae: " << e.what() << std::endl;
    return kFailure;
  }
  return kUsage;
}
