#include "timae/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "parse_util.hpp"
#include "timae/error.hpp"

namespace timae {

TimeSeries TimeSeries::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > length())
    throw IndexError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for length " + std::to_string(length()));
  TimeSeries out;
  out.channel_names = channel_names;
  const std::size_t m = channels();
  out.values.assign(values.begin() + static_cast<long>(begin * m),
                    values.begin() + static_cast<long>(end * m));
  if (!timestamps.empty())
    out.timestamps.assign(timestamps.begin() + static_cast<long>(begin),
                          timestamps.begin() + static_cast<long>(end));
  return out;
}

TimeSeries TimeSeries::take_rows(std::span<const std::size_t> rows) const {
  TimeSeries out;
  out.channel_names = channel_names;
  const std::size_t m = channels();
  out.values.reserve(rows.size() * m);
  for (auto r : rows) {
    if (r >= length()) throw IndexError("row " + std::to_string(r) + " out of range");
    for (std::size_t c = 0; c < m; ++c) out.values.push_back(at(r, c));
    if (!timestamps.empty()) out.timestamps.push_back(timestamps[r]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

// Empty or "nan" cells yield NaN; anything else must parse fully.
bool parse_cell(const std::string& raw, double& out) {
  const std::string s = trim(raw);
  if (s.empty() || s == "nan" || s == "NaN" || s == "NA") {
    out = std::nan("");
    return true;
  }
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

TimeSeries parse_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  if (!std::getline(in, line) || trim(line).empty())
    throw FormatError("CSV input is empty (no header row)");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  auto header = split_fields(line);
  const std::size_t offset = schema.timestamp_column ? 1 : 0;
  if (header.size() <= offset) throw FormatError("CSV header has no value columns");

  TimeSeries ts;
  for (std::size_t i = offset; i < header.size(); ++i) ts.channel_names.push_back(trim(header[i]));
  const std::size_t m = ts.channel_names.size();

  std::size_t row = 1;  // header is row 1
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw ParseError("row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                       " fields, header has " + std::to_string(header.size()));
    if (schema.timestamp_column) ts.timestamps.push_back(trim(fields[0]));
    for (std::size_t c = 0; c < m; ++c) {
      double v = 0.0;
      if (!parse_cell(fields[c + offset], v))
        throw ParseError("non-numeric cell \"" + trim(fields[c + offset]) + "\" at row " +
                         std::to_string(row) + ", column " + std::to_string(c + offset + 1));
      if (std::isnan(v)) {
        const std::size_t t = ts.values.size() / m;
        if (!schema.forward_fill || t == 0)
          throw ParseError("missing value at row " + std::to_string(row) + ", column " +
                           std::to_string(c + offset + 1) +
                           (schema.forward_fill ? " (nothing to forward-fill from)" : ""));
        v = ts.values[(t - 1) * m + c];
      }
      ts.values.push_back(v);
    }
  }
  if (ts.values.empty()) throw FormatError("CSV has a header but no data rows");
  return ts;
}

TimeSeries load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_csv(in, schema);
}

// ---------------------------------------------------------------------------
// Synthetic

void SyntheticSpec::validate() const {
  if (!(alpha > 0)) throw ConfigError("synthetic alpha must be positive");
  if (!(noise_sigma >= 0)) throw ConfigError("synthetic noise sigma must be non-negative");
  if (length < 1) throw ConfigError("synthetic length must be at least 1");
  if (!(t_end >= t_begin)) throw ConfigError("synthetic grid end precedes its start");
}

SyntheticSpec SyntheticSpec::parse(const std::string& text) {
  SyntheticSpec spec;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("synthetic spec item without '=': " + item);
    const std::string key = trim(item.substr(0, eq));
    double v = 0.0;
    if (!parse_cell(item.substr(eq + 1), v) || std::isnan(v))
      throw ConfigError("synthetic spec value is not a number: " + item);
    if (key == "alpha") spec.alpha = v;
    else if (key == "beta") spec.beta = v;
    else if (key == "sigma" || key == "noise" || key == "noise_sigma") spec.noise_sigma = v;
    else if (key == "length" || key == "T") spec.length = static_cast<std::size_t>(v);
    else if (key == "t_begin") spec.t_begin = v;
    else if (key == "t_end") spec.t_end = v;
    else throw ConfigError("unknown synthetic spec key: " + key);
  }
  spec.validate();
  return spec;
}

std::string SyntheticSpec::str() const {
  using detail::format_double;
  std::string s = "alpha=" + format_double(alpha) + ",beta=" + format_double(beta) +
                  ",sigma=" + format_double(noise_sigma) + ",length=" + std::to_string(length);
  if (t_begin != 0.0 || t_end != 1.0)
    s += ",t_begin=" + format_double(t_begin) + ",t_end=" + format_double(t_end);
  return s;
}

TimeSeries generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  TimeSeries ts;
  ts.channel_names = {"y"};
  ts.values.resize(spec.length);
  const double step =
      spec.length > 1 ? (spec.t_end - spec.t_begin) / static_cast<double>(spec.length - 1) : 0.0;
  for (std::size_t i = 0; i < spec.length; ++i) {
    const double t = spec.t_begin + step * static_cast<double>(i);
    double y = std::cos(spec.alpha * t) + std::cos(spec.alpha / 2 * t) +
               std::cos(spec.alpha / 4 * t) + spec.beta * t;
    if (spec.noise_sigma > 0) y += rng.normal(0.0, spec.noise_sigma);
    ts.values[i] = y;
  }
  return ts;
}

// ---------------------------------------------------------------------------
// Splits and windows

SplitSpec SplitSpec::parse(const std::string& text) {
  std::vector<double> parts;
  std::string cur;
  for (char ch : text + ":") {
    if (ch == ':' || ch == ',' || ch == '/') {
      double v = 0.0;
      if (!parse_cell(cur, v) || std::isnan(v)) throw ConfigError("bad split ratio: " + text);
      parts.push_back(v);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (parts.size() != 3) throw ConfigError("split needs three ratios, got: " + text);
  const double total = parts[0] + parts[1] + parts[2];
  if (!(total > 0)) throw ConfigError("split ratios must sum to a positive value: " + text);
  SplitSpec s{parts[0] / total, parts[1] / total, parts[2] / total};
  s.validate();
  return s;
}

void SplitSpec::validate() const {
  if (train < 0 || val < 0 || test < 0) throw ConfigError("split ratios must be non-negative");
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
}

Splits split(std::size_t length, const SplitSpec& spec, std::size_t min_length) {
  spec.validate();
  const double T = static_cast<double>(length);
  // The small epsilon absorbs decimal representation error (0.7 + 0.1 < 0.8).
  auto boundary = [&](double cum) {
    return std::min(length, static_cast<std::size_t>(std::floor(cum * T + 1e-9)));
  };
  Splits s;
  s.train = {0, boundary(spec.train)};
  s.val = {s.train.end, boundary(spec.train + spec.val)};
  s.test = {s.val.end, length};
  if (min_length > 0) {
    const std::pair<const char*, Range> named[] = {{"train", s.train}, {"val", s.val}, {"test", s.test}};
    for (const auto& [name, r] : named)
      if (r.size() < min_length)
        throw ConfigError(std::string(name) + " split holds " + std::to_string(r.size()) +
                          " points, fewer than one window of " + std::to_string(min_length));
  }
  return s;
}

std::vector<std::size_t> window_starts(std::size_t series_length, const WindowSpec& spec) {
  if (spec.length == 0) throw ConfigError("window length must be positive");
  if (spec.stride == 0) throw ConfigError("window stride must be positive");
  const std::size_t need = spec.length + spec.horizon;
  if (need > series_length)
    throw ConfigError("window of " + std::to_string(spec.length) + (spec.horizon ? "+" + std::to_string(spec.horizon) : "") +
                      " points does not fit a series of " + std::to_string(series_length));
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + need <= series_length; s += spec.stride) starts.push_back(s);
  return starts;
}

WindowSet::WindowSet(TimeSeries series, WindowSpec spec, std::size_t target_channels)
    : series_(std::move(series)), spec_(spec), target_channels_(target_channels) {
  if (target_channels_ == 0) target_channels_ = series_.channels();
  if (target_channels_ > series_.channels())
    throw ConfigError("target channels exceed series channels");
  starts_ = window_starts(series_.length(), spec_);
}

WindowBatch WindowSet::batch(std::span<const std::size_t> which) const {
  WindowBatch b;
  b.batch = which.size();
  b.length = spec_.length;
  b.channels = series_.channels();
  b.horizon = spec_.horizon;
  b.target_channels = spec_.horizon ? target_channels_ : 0;
  const std::size_t m = b.channels;
  b.inputs.reserve(b.batch * b.length * m);
  b.targets.reserve(b.batch * b.horizon * b.target_channels);
  const std::size_t first_target = m - target_channels_;
  for (auto w : which) {
    if (w >= starts_.size()) throw IndexError("window " + std::to_string(w) + " out of range");
    const std::size_t s = starts_[w];
    b.inputs.insert(b.inputs.end(), series_.values.begin() + static_cast<long>(s * m),
                    series_.values.begin() + static_cast<long>((s + b.length) * m));
    for (std::size_t t = 0; t < b.horizon; ++t)
      for (std::size_t c = 0; c < b.target_channels; ++c)
        b.targets.push_back(series_.at(s + b.length + t, first_target + c));
  }
  return b;
}

WindowBatch WindowSet::all() const {
  std::vector<std::size_t> idx(size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return batch(idx);
}

// ---------------------------------------------------------------------------
// Normalization

Normalizer Normalizer::fit(const TimeSeries& train) {
  const std::size_t T = train.length(), m = train.channels();
  if (T == 0) throw ConfigError("cannot fit normalization on an empty split");
  Normalizer n;
  n.mean_.assign(m, 0.0);
  n.std_.assign(m, 1.0);
  for (std::size_t c = 0; c < m; ++c) {
    double mean = 0.0;
    for (std::size_t t = 0; t < T; ++t) mean += train.at(t, c);
    mean /= static_cast<double>(T);
    double var = 0.0;
    for (std::size_t t = 0; t < T; ++t) var += (train.at(t, c) - mean) * (train.at(t, c) - mean);
    var /= static_cast<double>(T);
    n.mean_[c] = mean;
    if (var > 0) {
      n.std_[c] = std::sqrt(var);
    } else {
      n.mean_[c] = 0.0;
      n.warnings_.push_back("channel '" + train.channel_names[c] +
                            "' has zero variance on the train split; passing it through unscaled");
    }
  }
  return n;
}

Normalizer Normalizer::identity(std::size_t channels) {
  Normalizer n;
  n.mean_.assign(channels, 0.0);
  n.std_.assign(channels, 1.0);
  return n;
}

void Normalizer::apply(std::span<double> values, std::size_t width, std::size_t first) const {
  if (first + width > mean_.size()) throw DimensionError("normalizer channel range out of bounds");
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t c = first + i % width;
    values[i] = (values[i] - mean_[c]) / std_[c];
  }
}

void Normalizer::inverse(std::span<double> values, std::size_t width, std::size_t first) const {
  if (first + width > mean_.size()) throw DimensionError("normalizer channel range out of bounds");
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t c = first + i % width;
    values[i] = values[i] * std_[c] + mean_[c];
  }
}

TimeSeries Normalizer::apply(const TimeSeries& ts) const {
  if (ts.channels() != mean_.size()) throw DimensionError("normalizer fitted on other channels");
  TimeSeries out = ts;
  apply(out.values, ts.channels());
  return out;
}

TimeSeries Normalizer::inverse(const TimeSeries& ts) const {
  if (ts.channels() != mean_.size()) throw DimensionError("normalizer fitted on other channels");
  TimeSeries out = ts;
  inverse(out.values, ts.channels());
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

Augmentation parse_augmentation(const std::string& name) {
  if (name == "none" || name.empty()) return Augmentation::none;
  if (name == "scaling") return Augmentation::scaling;
  if (name == "shifting") return Augmentation::shifting;
  if (name == "jittering") return Augmentation::jittering;
  throw ParameterError("unknown augmentation kind: " + name);
}

std::string to_string(Augmentation kind) {
  switch (kind) {
    case Augmentation::none: return "none";
    case Augmentation::scaling: return "scaling";
    case Augmentation::shifting: return "shifting";
    case Augmentation::jittering: return "jittering";
  }
  return "none";
}

void augment(WindowBatch& batch, Augmentation kind, Rng& rng, const AugmentParams& params) {
  const std::size_t m = batch.channels, L = batch.length;
  if (!params.channel_std.empty() && params.channel_std.size() != m)
    throw ParameterError("augment channel_std has the wrong width");
  auto channel_std = [&](std::size_t c) {
    return params.channel_std.empty() ? 1.0 : params.channel_std[c];
  };
  for (std::size_t b = 0; b < batch.batch; ++b) {
    double* w = batch.inputs.data() + b * L * m;
    switch (kind) {
      case Augmentation::none:
        break;
      case Augmentation::scaling: {
        const double s = params.scale_low == params.scale_high
                             ? params.scale_low
                             : rng.uniform(params.scale_low, params.scale_high);
        for (std::size_t i = 0; i < L * m; ++i) w[i] *= s;
        break;
      }
      case Augmentation::shifting: {
        for (std::size_t c = 0; c < m; ++c) {
          const double f = params.shift_fraction;
          const double shift = (f > 0 ? rng.uniform(-f, f) : 0.0) * channel_std(c);
          for (std::size_t t = 0; t < L; ++t) w[t * m + c] += shift;
        }
        break;
      }
      case Augmentation::jittering: {
        if (params.jitter_fraction <= 0) break;
        for (std::size_t t = 0; t < L; ++t)
          for (std::size_t c = 0; c < m; ++c)
            w[t * m + c] += rng.normal(0.0, params.jitter_fraction * channel_std(c));
        break;
      }
    }
  }
}

TimeSeries equidistant_subsample(const TimeSeries& ts, std::size_t max_len) {
  const std::size_t T = ts.length();
  if (T <= max_len) return ts;
  if (max_len < 2) throw ParameterError("subsample length must be at least 2");
  std::vector<std::size_t> rows(max_len);
  for (std::size_t i = 0; i < max_len; ++i)
    rows[i] = static_cast<std::size_t>(std::llround(static_cast<double>(i) * static_cast<double>(T - 1) /
                                                    static_cast<double>(max_len - 1)));
  return ts.take_rows(rows);
}

}  // namespace timae
