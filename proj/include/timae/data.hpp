#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "timae/rng.hpp"

namespace timae {

/// A [T x m] observation matrix, row-major by time.
struct TimeSeries {
  std::vector<double> values;
  std::vector<std::string> channel_names;
  std::vector<std::string> timestamps;  // optional, never interpreted

  std::size_t length() const { return channel_names.empty() ? 0 : values.size() / channels(); }
  std::size_t channels() const { return channel_names.size(); }
  double at(std::size_t t, std::size_t c) const { return values[t * channels() + c]; }
  double& at(std::size_t t, std::size_t c) { return values[t * channels() + c]; }

  /// Rows [begin, end).
  TimeSeries slice(std::size_t begin, std::size_t end) const;
  /// Keeps the listed rows in order.
  TimeSeries take_rows(std::span<const std::size_t> rows) const;
};

// ---------------------------------------------------------------------------
// Ingestion

struct CsvSchema {
  bool timestamp_column = false;  // first column is an opaque timestamp
  bool forward_fill = false;      // fill NaN / empty cells from the previous row
};

/// Comma-separated, one header row. Errors cite 1-based file rows.
TimeSeries parse_csv(std::istream& in, const CsvSchema& schema);
TimeSeries load_csv(const std::filesystem::path& path, const CsvSchema& schema);

// ---------------------------------------------------------------------------
// Synthetic series

/// y(t) = cos(a t) + cos(a t / 2) + cos(a t / 4) + b t + noise, with t on a
/// uniform grid over [t_begin, t_end].
struct SyntheticSpec {
  double alpha = 300.0;
  double beta = 3.0;
  double noise_sigma = 0.1;
  std::size_t length = 2000;
  double t_begin = 0.0;
  double t_end = 1.0;

  void validate() const;
  /// Parses "alpha=300,beta=3,sigma=0.1,length=2000".
  static SyntheticSpec parse(const std::string& text);
  std::string str() const;
};

TimeSeries generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Splits and windows

struct SplitSpec {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;

  /// "6:2:2", "7:1:2" or "0.7,0.1,0.2"; weights are normalized.
  static SplitSpec parse(const std::string& text);
  void validate() const;
};

struct Range {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

struct Splits {
  Range train, val, test;
};

/// Contiguous chronological blocks with boundaries floor(cumulative_ratio * T).
/// Every block must hold at least `min_length` points (0 disables the check).
Splits split(std::size_t length, const SplitSpec& spec, std::size_t min_length = 0);

struct WindowSpec {
  std::size_t length = 0;   // L
  std::size_t stride = 1;
  std::size_t horizon = 0;  // k; 0 = unsupervised windows
};

/// Start offsets of sliding windows within a series of `series_length` points.
std::vector<std::size_t> window_starts(std::size_t series_length, const WindowSpec& spec);

/// Materialized windows. `inputs` is [batch x length x channels]; `targets`
/// (supervised only) is [batch x horizon x target_channels].
struct WindowBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::size_t channels = 0;
  std::size_t horizon = 0;
  std::size_t target_channels = 0;
  std::vector<double> inputs;
  std::vector<double> targets;
};

/// Windows of one split. Owns a copy of the split's rows, so no window can
/// reach past the split boundary.
class WindowSet {
 public:
  WindowSet(TimeSeries series, WindowSpec spec, std::size_t target_channels = 0);

  std::size_t size() const { return starts_.size(); }
  const WindowSpec& spec() const { return spec_; }
  const TimeSeries& series() const { return series_; }
  std::span<const std::size_t> starts() const { return starts_; }

  /// Windows by position in [0, size()). Targets use the last
  /// `target_channels` channels.
  WindowBatch batch(std::span<const std::size_t> which) const;
  WindowBatch all() const;

 private:
  TimeSeries series_;
  WindowSpec spec_;
  std::size_t target_channels_;
  std::vector<std::size_t> starts_;
};

inline WindowSet make_windows(TimeSeries series, WindowSpec spec, std::size_t target_channels = 0) {
  return WindowSet(std::move(series), spec, target_channels);
}

// ---------------------------------------------------------------------------
// Normalization

/// Per-channel z-score fitted on the train split only. Zero-variance channels
/// pass through unscaled and are reported in warnings().
class Normalizer {
 public:
  Normalizer() = default;
  static Normalizer fit(const TimeSeries& train);
  static Normalizer identity(std::size_t channels);

  TimeSeries apply(const TimeSeries& ts) const;
  TimeSeries inverse(const TimeSeries& ts) const;
  /// In-place transforms of [rows x width] values holding channels
  /// [first_channel, first_channel + width).
  void apply(std::span<double> values, std::size_t width, std::size_t first_channel = 0) const;
  void inverse(std::span<double> values, std::size_t width, std::size_t first_channel = 0) const;

  std::span<const double> means() const { return mean_; }
  std::span<const double> stddevs() const { return std_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::vector<double> mean_;
  std::vector<double> std_;  // 1.0 for pass-through channels
  std::vector<std::string> warnings_;
};

// ---------------------------------------------------------------------------
// Augmentation and subsampling

enum class Augmentation { none, scaling, shifting, jittering };

Augmentation parse_augmentation(const std::string& name);
std::string to_string(Augmentation kind);

struct AugmentParams {
  double scale_low = 0.8;
  double scale_high = 1.2;
  double shift_fraction = 0.1;   // c ~ U(-f, f) * channel_std
  double jitter_fraction = 0.05;  // sigma = f * channel_std
  std::vector<double> channel_std;  // empty -> 1 for every channel
};

/// Augments `batch.inputs` in place. Scaling draws one factor per window;
/// shifting one offset per window and channel; jittering per element.
void augment(WindowBatch& batch, Augmentation kind, Rng& rng, const AugmentParams& params = {});

/// Keeps rows round(i * (T - 1) / (max_len - 1)) when T > max_len.
TimeSeries equidistant_subsample(const TimeSeries& ts, std::size_t max_len = 1024);

}  // namespace timae
