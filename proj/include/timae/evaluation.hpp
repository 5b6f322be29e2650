#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "timae/data.hpp"
#include "timae/model.hpp"
#include "timae/training.hpp"

namespace timae {

// ---------------------------------------------------------------------------
// Metrics

double mse(std::span<const double> pred, std::span<const double> target);
double mae(std::span<const double> pred, std::span<const double> target);

// ---------------------------------------------------------------------------
// Forecasting

/// Runs the model on a window of h + k steps whose last k positions are
/// masked and returns the reconstruction of those k positions.
/// `histories` is [N x h x m]; the result is [N x k x n]. The masked inputs
/// are filled with the last observed row (never seen by the encoder, but
/// read by the embedding convolution at the boundary).
std::vector<double> direct_forecast(const TiMaeModel<float>& model, std::span<const double> histories,
                                    std::size_t count, std::size_t h, std::size_t k,
                                    std::size_t micro_batch = 16);

/// Repeats the last row's final n channels k times: [N x k x n].
std::vector<double> last_value_forecast(std::span<const double> histories, std::size_t count,
                                        std::size_t h, std::size_t m, std::size_t k, std::size_t n);

/// x[t + j - period] for the final n channels of `series`, j in [0, k).
std::vector<double> seasonal_naive_forecast(const TimeSeries& series, std::size_t origin,
                                            std::size_t period, std::size_t k, std::size_t n);

/// Dominant period, in samples, of the synthetic generator: the slowest
/// cosine cos(alpha t / 4) sampled on `length` points over [t_begin, t_end].
double synthetic_period(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// Ridge probe

inline constexpr std::array<double, 13> kRidgeAlphaGrid = {0.1, 0.2, 0.5, 1,   2,   5,   10,
                                                           20,  50,  100, 200, 500, 1000};

struct RidgeProbe {
  double alpha = 0.0;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> weights;  // [in_dim x out_dim]
  bool fitted = false;
  double validation_mse = 0.0;

  /// X [rows x in_dim] -> [rows x out_dim].
  std::vector<double> predict(std::span<const double> x, std::size_t rows) const;
};

/// Closed-form ridge without intercept. The objective is the per-row mean
/// squared error plus alpha |W|^2, so the solve is (X^T X / N + alpha I) W =
/// X^T Y / N and repeating the training rows leaves W unchanged. Uses the
/// dual form when N < in_dim.
RidgeProbe ridge_solve(std::span<const double> x, std::size_t rows, std::size_t in_dim,
                       std::span<const double> y, std::size_t out_dim, double alpha);

/// Solves for every alpha in `grid` on the train rows and keeps the one with
/// the lowest validation MSE; ties go to the smaller alpha.
RidgeProbe ridge_fit(std::span<const double> x_train, std::size_t n_train,
                     std::span<const double> y_train, std::span<const double> x_val,
                     std::size_t n_val, std::span<const double> y_val, std::size_t in_dim,
                     std::size_t out_dim, std::span<const double> grid = kRidgeAlphaGrid);

// ---------------------------------------------------------------------------
// Representations and classification

enum class Pooling { mean, max, none };
Pooling parse_pooling(const std::string& name);
std::string to_string(Pooling p);

/// Encoder outputs of full windows [N x L x m], pooled over time:
/// [N x d_model], or [N x L*d_model] for `none`.
std::vector<double> extract_representations(const TiMaeModel<float>& model,
                                            std::span<const double> windows, std::size_t count,
                                            Pooling pooling, std::size_t micro_batch = 32);

struct LogisticProbe {
  std::size_t dim = 0;
  std::size_t classes = 0;
  double lambda = 0.0;
  std::vector<double> mean, scale;  // feature standardization
  std::vector<double> weights;      // [(dim + 1) x classes], last row is the bias

  /// Class scores [rows x classes] before the softmax.
  std::vector<double> decision_function(std::span<const double> x, std::size_t rows) const;
  std::vector<int> predict(std::span<const double> x, std::size_t rows) const;
};

struct ProbeConfig {
  std::vector<double> lambdas = {1e-4, 1e-3, 1e-2, 1e-1};
  std::size_t iterations = 500;
  double step = 1.0;  // fraction of 1 / (curvature bound)
  double val_fraction = 0.2;  // held out (by seeded shuffle) to pick lambda
  std::uint64_t seed = 0;
};

/// Multinomial logistic regression with L2 (mean cross-entropy plus
/// lambda/2 |W|^2, bias unpenalized), full-batch gradient descent from zero
/// on standardized features. `step` scales 1 / L for the curvature bound L.
LogisticProbe fit_logistic(std::span<const double> x, std::size_t rows, std::size_t dim,
                           std::span<const int> labels, double lambda, std::size_t iterations,
                           double step = 1.0);

struct ProbeResult {
  LogisticProbe probe;
  std::vector<int> predictions;
  double accuracy = 0.0;  // NaN without test labels
};

/// Picks lambda on a validation split of the train rows, refits on all train
/// rows and predicts the test rows.
ProbeResult classify_probe(std::span<const double> train_x, std::span<const int> train_labels,
                           std::span<const double> test_x, std::span<const int> test_labels,
                           std::size_t dim, const ProbeConfig& cfg = {});

// ---------------------------------------------------------------------------
// Reports

struct EvalRow {
  std::string task;
  std::string mode;
  std::size_t horizon = 0;
  std::string strategy;
  double ratio = 0.0;
  double mse = 0.0;
  double mae = 0.0;
  std::string scale;  // normalized | raw
  std::uint64_t seed = 0;
  std::string cell;   // ablation or study cell label, may be empty
};

/// Rows keyed uniquely by every field except the metrics.
class EvalReport {
 public:
  std::string title;
  std::vector<std::string> notes;  // printed above the Markdown table

  void add(EvalRow row);
  void merge(const EvalReport& other);
  const std::vector<EvalRow>& rows() const { return rows_; }
  const EvalRow* find(const std::string& task, const std::string& mode, const std::string& cell,
                      const std::string& scale, std::uint64_t seed) const;

  std::string to_csv() const;
  std::string to_markdown() const;
  /// One line per (row, metric): x, series, metric, value.
  std::string to_long_csv() const;

 private:
  std::vector<EvalRow> rows_;
};

// ---------------------------------------------------------------------------
// Experiments

/// A normalized series with its chronological splits.
struct Dataset {
  std::string name;
  TimeSeries raw;
  TimeSeries normalized;
  Normalizer normalizer;
  Splits splits;
};

/// Splits `raw` and fits the normalizer on the train block (identity when
/// `normalize` is false).
Dataset prepare_dataset(std::string name, TimeSeries raw, const SplitSpec& split_spec,
                        std::size_t min_split, bool normalize = true);

struct ForecastScores {
  double mse_normalized = 0.0;
  double mae_normalized = 0.0;
  double mse_raw = 0.0;
  double mae_raw = 0.0;
  std::size_t origins = 0;
};

enum class ForecastMethod { direct, last_value, seasonal_naive };

/// Forecast origins t (first predicted step) with t - h >= 0, t + k <= end
/// and t >= begin, every `stride` steps. History may reach before `begin`.
std::vector<std::size_t> forecast_origins(std::size_t begin, std::size_t end, std::size_t h,
                                          std::size_t k, std::size_t stride);

/// History rows [t - h, t) for each origin: [N x h x m].
std::vector<double> history_block(const TimeSeries& series, std::span<const std::size_t> origins,
                                  std::size_t h);
/// Rows [t, t + k) of the last n channels: [N x k x n].
std::vector<double> target_block(const TimeSeries& series, std::span<const std::size_t> origins,
                                 std::size_t k, std::size_t n);

/// Scores normalized-scale predictions [N x k x n] in both scales.
ForecastScores score_forecast(const Dataset& data, std::span<const std::size_t> origins,
                              std::size_t k, std::size_t n, std::span<const double> pred);

/// Scores one method over `origins` on the last n channels.
ForecastScores evaluate_forecast(const Dataset& data, const TiMaeModel<float>* model,
                                 ForecastMethod method, std::span<const std::size_t> origins,
                                 std::size_t h, std::size_t k, std::size_t n,
                                 std::size_t period = 0);

struct ProbeForecast {
  RidgeProbe probe;
  ForecastScores scores;
  std::vector<double> predictions;  // normalized, [N x k x n]
};

/// Ridge on pooled encoder representations of the window_len history before
/// each origin. Fits on train-split origins, picks alpha on validation
/// origins, scores `test_origins`.
ProbeForecast ridge_forecast(const TiMaeModel<float>& model, const Dataset& data,
                             std::span<const std::size_t> test_origins, std::size_t k,
                             std::size_t n, Pooling pooling, std::size_t stride = 1);

struct FinetuneForecast {
  FinetuneResult result;
  ForecastScores scores;
  std::vector<double> predictions;  // normalized, [N x k x n]
};

/// Trains a head on train-split windows of window_len + k and scores
/// `test_origins`.
FinetuneForecast finetune_forecast_eval(const TiMaeModel<float>& model, const Dataset& data,
                                        std::span<const std::size_t> test_origins, std::size_t k,
                                        std::size_t n, const FinetuneConfig& cfg,
                                        std::size_t stride = 1);

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  SyntheticSpec synthetic;
  SplitSpec split{0.6, 0.2, 0.2};
  std::size_t history = 100;     // h
  std::size_t horizon = 100;     // k
  std::size_t eval_stride = 10;  // between forecast origins
  std::string task = "synthetic";
  std::string cell;
};

struct ExperimentResult {
  TiMaeModel<float> model;
  TrainLog log;
  EvalReport report;
  ForecastScores direct, last_value, seasonal;
};

/// Builds the synthetic series from `cfg.synthetic` and `cfg.train.seed`.
Dataset synthetic_dataset(const ExperimentConfig& cfg);

/// Pretrains on the train split and scores direct forecasting plus both
/// naive baselines on the test split.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const EpochCallback& on_epoch = {});

struct AblationAxis {
  std::string name;                 // mask_ratio, strategy, sampling_time, augmentation,
  std::vector<std::string> values;  // norm, encoder_pe, decoder_pe
};

/// The axis with its standard grid.
AblationAxis default_axis(const std::string& name);

/// Validates axis names and values; unknown ones raise ParameterError.
void validate_axes(std::span<const AblationAxis> axes);

/// Applies one axis value to a config.
void apply_axis(ExperimentConfig& cfg, const std::string& axis, const std::string& value);

/// One pretrained model per cell. With `factorial` every combination of the
/// axes is run; otherwise each axis is varied alone around `base`. Cells run
/// on up to `jobs` threads; rows are merged in cell order.
EvalReport ablation_matrix(const ExperimentConfig& base, std::span<const AblationAxis> axes,
                           bool factorial = false, std::size_t jobs = 1,
                           const std::function<void(const std::string&)>& progress = {});

struct TransferConfig {
  ExperimentConfig base;  // its synthetic spec is the training distribution
  std::vector<SyntheticSpec> test_specs;
  std::size_t history = 400;
  std::size_t horizon = 400;
  std::size_t eval_stride = 50;
};

/// The four generator settings of the standard study.
std::vector<SyntheticSpec> default_transfer_specs();

/// Pretrains once on the base distribution, then direct-forecasts a fresh
/// series from each test spec (normalized with its own train-block stats).
EvalReport transferability_study(const TransferConfig& cfg,
                                 const std::function<void(const std::string&)>& progress = {});
/// Same, reusing an already pretrained model.
EvalReport transferability_study(const TransferConfig& cfg, const TiMaeModel<float>& model);

}  // namespace timae
