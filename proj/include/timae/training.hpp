#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "timae/data.hpp"
#include "timae/model.hpp"

namespace timae {

/// Mean squared error over masked positions only, averaged over batch,
/// masked steps and channels. `masks` holds one shared mask or one per batch
/// entry. An empty masked set is a contract violation.
template <typename T>
Tensor<T> masked_mse(const Tensor<T>& pred, const Tensor<T>& target,
                     std::span<const MaskSpec> masks);

/// Mean squared error over every element.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments for one parameter tensor.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
};

/// One bias-corrected Adam update; `step` counts from 1. Moments are kept in
/// double precision.
template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, AdamState& state, double lr,
               std::uint64_t step, const AdamConfig& cfg = {});

/// Adam over a fixed parameter list. Parameters without a gradient are
/// skipped for that step.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamConfig cfg = {});
  void step(double lr);
  std::uint64_t steps() const { return t_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<AdamState> state_;
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
};

/// floor + (lr0 - floor) * (1 + cos(pi * step / total)) / 2.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0, double floor);

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(std::span<const Tensor<T>> params, double max_norm);

struct TrainConfig {
  double lr = 1e-3;
  double lr_floor = 0.0;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  std::size_t sampling_time = 30;  // mask draws per window per batch
  MaskStrategy strategy = MaskStrategy::random;
  Augmentation augmentation = Augmentation::none;
  std::uint64_t seed = 0;
  std::size_t window_stride = 1;
  std::size_t val_stride = 1;
  std::size_t val_masks = 4;    // fixed mask draws per validation window
  std::size_t micro_batch = 16;  // sequences per forward/backward pass
  double grad_clip = 0.0;        // 0 disables
  AdamConfig adam;

  void validate() const;
  /// Sets one field from text; returns false for an unknown key.
  bool set(const std::string& key, const std::string& value);
  /// (key, value) pairs in a fixed order, as accepted by set().
  std::vector<std::pair<std::string, std::string>> entries() const;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN when no validation windows
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::size_t total_steps = 0;
  double seconds = 0.0;  // wall clock, not part of the written artifacts

  /// step,epoch,lr,loss
  std::string steps_csv() const;
  /// epoch,train_loss,val_loss
  std::string epochs_csv() const;
  /// JSON summary without timing, so reruns compare byte for byte.
  std::string summary_json() const;
};

/// Called after each epoch; useful for progress output.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Masked-autoencoder pretraining. For every batch of windows, draws
/// `sampling_time` masks per window, averages the masked MSE over all draws
/// and takes one Adam step. The reconstruction target is the last
/// `out_channels` input channels. `val` may be null.
TrainLog pretrain(TiMaeModel<float>& model, const WindowSet& train, const WindowSet* val,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Masked MSE over fixed masks drawn from `seed` (`masks_per_window` each).
double masked_validation_loss(const TiMaeModel<float>& model, const WindowSet& windows,
                              MaskStrategy strategy, std::size_t masks_per_window,
                              std::uint64_t seed, std::size_t micro_batch = 16);

// ---------------------------------------------------------------------------
// Fine-tuning

enum class HeadPooling { flatten, mean };
HeadPooling parse_head_pooling(const std::string& name);
std::string to_string(HeadPooling p);

/// Linear map from encoder features to a [horizon x channels] forecast.
struct ForecastHead {
  HeadPooling pooling = HeadPooling::flatten;
  std::size_t window_len = 0;
  std::size_t d_model = 0;
  std::size_t horizon = 0;
  std::size_t channels = 0;
  Tensor<float> weight;  // [features, horizon * channels]
  Tensor<float> bias;    // [horizon * channels]

  std::size_t features() const;
  std::size_t parameter_count() const;
  /// features [N x features()] -> [N x horizon * channels].
  std::vector<double> predict(std::span<const double> features, std::size_t rows) const;
};

struct FinetuneConfig {
  double lr = 1e-3;
  double lr_floor = 0.0;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  HeadPooling pooling = HeadPooling::flatten;
  std::uint64_t seed = 0;
};

struct FinetuneResult {
  ForecastHead head;
  TrainLog log;
  std::uint32_t encoder_crc = 0;  // identical before and after
};

/// Encoder features of full (unmasked) windows, [N x features] row-major.
std::vector<double> encoder_features(const TiMaeModel<float>& model,
                                     std::span<const double> inputs, std::size_t windows,
                                     HeadPooling pooling, std::size_t micro_batch = 32);

/// Trains a linear head on frozen encoder features of supervised windows
/// (`train.spec().horizon` > 0). The encoder's bytes are checked before and
/// after; any change raises InvariantError.
FinetuneResult finetune(const TiMaeModel<float>& model, const WindowSet& train,
                        const FinetuneConfig& cfg);

/// Forecasts [N x horizon x channels] for full windows [N x L x m].
std::vector<double> finetune_forecast(const TiMaeModel<float>& model, const ForecastHead& head,
                                      std::span<const double> inputs, std::size_t windows);

}  // namespace timae
