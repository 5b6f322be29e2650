#include "timae/training.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "parse_util.hpp"
#include "timae/checkpoint.hpp"
#include "timae/error.hpp"
#include "timae/ops.hpp"

namespace timae {

template <typename T>
Tensor<T> masked_mse(const Tensor<T>& pred, const Tensor<T>& target,
                     std::span<const MaskSpec> masks) {
  if (pred.shape() != target.shape())
    throw DimensionError("masked_mse shapes differ: " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
  if (pred.rank() != 3)
    throw DimensionError("masked_mse expects [B, L, n], got " + shape_str(pred.shape()));
  if (masks.empty() || masks[0].masked.empty())
    throw ContractError("masked_mse needs at least one masked position");
  if (masks.size() != 1 && masks.size() != pred.dim(0))
    throw DimensionError("masked_mse got " + std::to_string(masks.size()) + " masks for batch " +
                         std::to_string(pred.dim(0)));
  for (const auto& m : masks) {
    if (m.length != pred.dim(1))
      throw DimensionError("mask length " + std::to_string(m.length) + " != sequence length " +
                           std::to_string(pred.dim(1)));
    if (m.masked.size() != masks[0].masked.size())
      throw DimensionError("masks in one batch must hide the same number of positions");
  }
  auto hidden = gather_rows(sub(pred, target), mask_row_index(masks, false));
  return reduce_mean(mul(hidden, hidden));
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape())
    throw DimensionError("mse shapes differ: " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
  auto diff = sub(pred, target);
  return reduce_mean(mul(diff, diff));
}

// ---------------------------------------------------------------------------
// Optimizer and schedule

template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, AdamState& state, double lr,
               std::uint64_t step, const AdamConfig& cfg) {
  if (grad.size() != param.size())
    throw DimensionError("adam gradient size " + std::to_string(grad.size()) + " != parameter size " +
                         std::to_string(param.size()));
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
  }
  if (state.m.size() != param.size() || state.v.size() != param.size())
    throw DimensionError("adam state does not match parameter size");
  if (step == 0) throw ParameterError("adam step counts from 1");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    double& m = state.m[i];
    double& v = state.v[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    const double update = lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
    param[i] = static_cast<T>(static_cast<double>(param[i]) - update);
  }
}

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamConfig cfg)
    : params_(std::move(params)), state_(params_.size()), cfg_(cfg) {}

template <typename T>
void Adam<T>::step(double lr) {
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    adam_step<T>(p.data(), p.grad(), state_[i], lr, t_, cfg_);
  }
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0, double floor) {
  if (total_steps == 0 || step > total_steps)
    throw ParameterError("cosine_lr needs 0 <= step <= total_steps, got " + std::to_string(step) +
                         "/" + std::to_string(total_steps));
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return floor + (lr0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

template <typename T>
double clip_grad_norm(std::span<const Tensor<T>> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    if (p.has_grad())
      for (auto g : p.grad()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto p : params)
      if (p.has_grad())
        for (auto& g : p.mutable_grad()) g *= factor;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Config and log

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (sampling_time < 1) throw ConfigError("sampling_time must be >= 1");
  if (window_stride < 1 || val_stride < 1) throw ConfigError("window strides must be >= 1");
  if (micro_batch < 1) throw ConfigError("micro_batch must be >= 1");
  if (!(lr >= 0) || !(lr_floor >= 0) || lr_floor > lr)
    throw ConfigError("need 0 <= lr_floor <= lr");
  if (!(grad_clip >= 0)) throw ConfigError("grad_clip must be >= 0");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1 && adam.eps > 0))
    throw ConfigError("adam betas must lie in [0, 1) and eps must be positive");
}

bool TrainConfig::set(const std::string& key, const std::string& v) {
  using detail::to_double;
  using detail::to_size;
  if (key == "lr") lr = to_double(key, v);
  else if (key == "lr_floor") lr_floor = to_double(key, v);
  else if (key == "epochs") epochs = to_size(key, v);
  else if (key == "batch_size") batch_size = to_size(key, v);
  else if (key == "sampling_time") sampling_time = to_size(key, v);
  else if (key == "mask_strategy") {
    try {
      strategy = parse_mask_strategy(v);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "augmentation") {
    try {
      augmentation = parse_augmentation(v);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "seed") seed = detail::to_u64(key, v);
  else if (key == "window_stride") window_stride = to_size(key, v);
  else if (key == "val_stride") val_stride = to_size(key, v);
  else if (key == "val_masks") val_masks = to_size(key, v);
  else if (key == "micro_batch") micro_batch = to_size(key, v);
  else if (key == "grad_clip") grad_clip = to_double(key, v);
  else if (key == "adam_beta1") adam.beta1 = to_double(key, v);
  else if (key == "adam_beta2") adam.beta2 = to_double(key, v);
  else if (key == "adam_eps") adam.eps = to_double(key, v);
  else return false;
  return true;
}

std::vector<std::pair<std::string, std::string>> TrainConfig::entries() const {
  using detail::format_double;
  return {
      {"lr", format_double(lr)},
      {"lr_floor", format_double(lr_floor)},
      {"epochs", std::to_string(epochs)},
      {"batch_size", std::to_string(batch_size)},
      {"sampling_time", std::to_string(sampling_time)},
      {"mask_strategy", to_string(strategy)},
      {"augmentation", to_string(augmentation)},
      {"seed", std::to_string(seed)},
      {"window_stride", std::to_string(window_stride)},
      {"val_stride", std::to_string(val_stride)},
      {"val_masks", std::to_string(val_masks)},
      {"micro_batch", std::to_string(micro_batch)},
      {"grad_clip", format_double(grad_clip)},
      {"adam_beta1", format_double(adam.beta1)},
      {"adam_beta2", format_double(adam.beta2)},
      {"adam_eps", format_double(adam.eps)},
  };
}

std::string TrainLog::steps_csv() const {
  std::ostringstream os;
  os << "step,epoch,lr,loss\n";
  for (const auto& s : steps)
    os << s.step << ',' << s.epoch << ',' << detail::format_double(s.lr) << ','
       << detail::format_double(s.loss) << '\n';
  return os.str();
}

std::string TrainLog::epochs_csv() const {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss\n";
  for (const auto& e : epochs)
    os << e.epoch << ',' << detail::format_double(e.train_loss) << ','
       << detail::format_double(e.val_loss) << '\n';
  return os.str();
}

std::string TrainLog::summary_json() const {
  nlohmann::ordered_json j;
  auto num = [](double v) -> nlohmann::ordered_json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  j["total_steps"] = total_steps;
  j["epochs"] = epochs.size();
  if (!epochs.empty()) {
    j["first_train_loss"] = num(epochs.front().train_loss);
    j["final_train_loss"] = num(epochs.back().train_loss);
    j["first_val_loss"] = num(epochs.front().val_loss);
    j["final_val_loss"] = num(epochs.back().val_loss);
  }
  nlohmann::ordered_json per_epoch = nlohmann::ordered_json::array();
  for (const auto& e : epochs)
    per_epoch.push_back({{"epoch", e.epoch}, {"train_loss", num(e.train_loss)},
                         {"val_loss", num(e.val_loss)}});
  j["per_epoch"] = per_epoch;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Pretraining

namespace {

void check_windows(const TiMaeModel<float>& model, const WindowSet& windows, const char* what) {
  const auto& c = model.config();
  if (windows.spec().length != c.window_len)
    throw ConfigError(std::string(what) + " windows have length " +
                      std::to_string(windows.spec().length) + ", model expects " +
                      std::to_string(c.window_len));
  if (windows.series().channels() != c.in_channels)
    throw ConfigError(std::string(what) + " series has " +
                      std::to_string(windows.series().channels()) + " channels, model expects " +
                      std::to_string(c.in_channels));
  if (c.out_channels > c.in_channels)
    throw ConfigError("out_channels exceeds in_channels; targets are the last input channels");
}

/// One micro-batch of (window, mask) pairs laid out as a [B, L, C] buffer.
struct MicroBatch {
  std::vector<double> inputs;
  std::vector<MaskSpec> masks;
};

void copy_window(const WindowBatch& wb, std::size_t w, std::vector<double>& out) {
  const std::size_t n = wb.length * wb.channels;
  const auto* src = wb.inputs.data() + w * n;
  out.insert(out.end(), src, src + n);
}

double sequence_loss(const TiMaeModel<float>& model, const MicroBatch& mb, const ForwardContext& ctx,
                     double weight, bool backprop) {
  const auto& c = model.config();
  const std::size_t B = mb.masks.size();
  auto x = batch_tensor<float>(mb.inputs, B, c.window_len, c.in_channels);
  auto target = channel_tail_tensor<float>(mb.inputs, B, c.window_len, c.in_channels, c.out_channels);
  auto recon = model.reconstruct(x, mb.masks, ctx);
  auto loss = masked_mse(recon, target, mb.masks);
  const double value = loss.item();
  if (backprop && std::isfinite(value)) scale(loss, static_cast<float>(weight)).backward();
  return value;
}

}  // namespace

double masked_validation_loss(const TiMaeModel<float>& model, const WindowSet& windows,
                              MaskStrategy strategy, std::size_t masks_per_window,
                              std::uint64_t seed, std::size_t micro_batch) {
  if (windows.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  if (masks_per_window == 0 || micro_batch == 0)
    throw ConfigError("validation needs at least one mask per window and a positive micro batch");
  NoGradGuard no_grad;
  const auto& c = model.config();
  Rng rng(seed);
  const WindowBatch all = windows.all();
  const std::size_t total = all.batch * masks_per_window;
  double sum = 0.0;
  MicroBatch mb;
  auto flush = [&] {
    if (mb.masks.empty()) return;
    sum += sequence_loss(model, mb, {}, 0.0, false) * static_cast<double>(mb.masks.size());
    mb.inputs.clear();
    mb.masks.clear();
  };
  for (std::size_t q = 0; q < total; ++q) {
    copy_window(all, q / masks_per_window, mb.inputs);
    mb.masks.push_back(make_mask(c.window_len, strategy, c.mask_ratio, rng));
    if (mb.masks.size() == micro_batch) flush();
  }
  flush();
  return sum / static_cast<double>(total);
}

TrainLog pretrain(TiMaeModel<float>& model, const WindowSet& train, const WindowSet* val,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  model.config().validate();
  check_windows(model, train, "train");
  if (val) check_windows(model, *val, "validation");
  if (train.size() == 0) throw ConfigError("train split yields no windows");
  tune_allocator();

  const auto& c = model.config();
  const auto start = std::chrono::steady_clock::now();
  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  Rng mask_rng(derive_seed(cfg.seed, "mask"));
  Rng dropout_rng(derive_seed(cfg.seed, "dropout"));
  Rng augment_rng(derive_seed(cfg.seed, "augment"));
  const std::uint64_t val_seed = derive_seed(cfg.seed, "val-mask");

  std::vector<Tensor<float>> params;
  for (auto& [name, t] : model.parameters()) params.push_back(t);
  Adam<float> opt(params, cfg.adam);

  const std::size_t n_windows = train.size();
  const std::size_t batches = (n_windows + cfg.batch_size - 1) / cfg.batch_size;
  TrainLog log;
  log.total_steps = batches * cfg.epochs;
  std::vector<std::size_t> order(n_windows);
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * cfg.batch_size, hi = std::min(n_windows, lo + cfg.batch_size);
      std::vector<std::size_t> which(order.begin() + lo, order.begin() + hi);
      WindowBatch wb = train.batch(which);
      if (cfg.augmentation != Augmentation::none) augment(wb, cfg.augmentation, augment_rng);

      const double lr = cosine_lr(step, log.total_steps, cfg.lr, cfg.lr_floor);
      model.zero_grad();
      const std::size_t total = wb.batch * cfg.sampling_time;
      const ForwardContext ctx{true, &dropout_rng};
      double batch_loss = 0.0;
      MicroBatch mb;
      auto flush = [&] {
        if (mb.masks.empty()) return;
        const double w = static_cast<double>(mb.masks.size()) / static_cast<double>(total);
        const double value = sequence_loss(model, mb, ctx, w, true);
        if (!std::isfinite(value))
          throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch) +
                             ", step " + std::to_string(step) + " (lr " +
                             detail::format_double(lr) + "); try a lower lr or grad_clip");
        batch_loss += value * w;
        mb.inputs.clear();
        mb.masks.clear();
      };
      // S independent mask draws per window, window-major.
      for (std::size_t q = 0; q < total; ++q) {
        copy_window(wb, q / cfg.sampling_time, mb.inputs);
        mb.masks.push_back(make_mask(c.window_len, cfg.strategy, c.mask_ratio, mask_rng));
        if (mb.masks.size() == cfg.micro_batch) flush();
      }
      flush();

      const double norm = clip_grad_norm<float>(params, cfg.grad_clip);
      if (!std::isfinite(norm))
        throw NumericError("gradient became non-finite at epoch " + std::to_string(epoch) +
                           ", step " + std::to_string(step));
      opt.step(lr);
      log.steps.push_back({step, epoch, lr, batch_loss});
      epoch_loss += batch_loss * static_cast<double>(wb.batch);
      ++step;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(n_windows);
    rec.val_loss = val ? masked_validation_loss(model, *val, cfg.strategy, cfg.val_masks, val_seed,
                                                cfg.micro_batch)
                       : std::numeric_limits<double>::quiet_NaN();
    log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  model.zero_grad();
  log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return log;
}

// ---------------------------------------------------------------------------
// Fine-tuning

HeadPooling parse_head_pooling(const std::string& name) {
  if (name == "flatten" || name == "none") return HeadPooling::flatten;
  if (name == "mean") return HeadPooling::mean;
  throw ParameterError("unknown head pooling '" + name + "' (flatten, mean)");
}

std::string to_string(HeadPooling p) { return p == HeadPooling::flatten ? "flatten" : "mean"; }

std::size_t ForecastHead::features() const {
  return pooling == HeadPooling::flatten ? window_len * d_model : d_model;
}

std::size_t ForecastHead::parameter_count() const {
  return features() * horizon * channels + horizon * channels;
}

std::vector<double> ForecastHead::predict(std::span<const double> x, std::size_t rows) const {
  const std::size_t D = features(), K = horizon * channels;
  if (x.size() != rows * D)
    throw DimensionError("head expects " + std::to_string(D) + " features per row");
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::MatrixXf wf =
      Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          weight.values().data(), static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(K));
  const Eigen::MatrixXd w = wf.cast<double>();
  const Eigen::RowVectorXd b =
      Eigen::Map<const Eigen::RowVectorXf>(bias.values().data(), static_cast<Eigen::Index>(K))
          .cast<double>();
  std::vector<double> out(rows * K);
  Eigen::Map<RowMat> Y(out.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(K));
  Y.noalias() = Eigen::Map<const RowMat>(x.data(), static_cast<Eigen::Index>(rows),
                                         static_cast<Eigen::Index>(D)) * w;
  Y.rowwise() += b;
  return out;
}

std::vector<double> encoder_features(const TiMaeModel<float>& model, std::span<const double> inputs,
                                     std::size_t windows, HeadPooling pooling,
                                     std::size_t micro_batch) {
  const auto& c = model.config();
  const std::size_t per = c.window_len * c.in_channels;
  if (inputs.size() != windows * per)
    throw DimensionError("encoder_features expects " + std::to_string(windows) + " windows of " +
                         std::to_string(per) + " values");
  NoGradGuard no_grad;
  const std::size_t D = pooling == HeadPooling::flatten ? c.window_len * c.d_model : c.d_model;
  std::vector<double> out;
  out.reserve(windows * D);
  for (std::size_t lo = 0; lo < windows; lo += micro_batch) {
    const std::size_t B = std::min(micro_batch, windows - lo);
    auto x = batch_tensor<float>(inputs.subspan(lo * per, B * per), B, c.window_len, c.in_channels);
    auto z = model.encode_full(x);
    if (pooling == HeadPooling::mean) z = reduce_mean(z, 1);
    for (auto v : z.values()) out.push_back(v);
  }
  return out;
}

FinetuneResult finetune(const TiMaeModel<float>& model, const WindowSet& train,
                        const FinetuneConfig& cfg) {
  check_windows(model, train, "fine-tune");
  const auto& c = model.config();
  const std::size_t k = train.spec().horizon;
  if (k == 0) throw ConfigError("fine-tuning needs supervised windows (horizon >= 1)");
  if (train.size() == 0) throw ConfigError("fine-tune split yields no windows");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw ConfigError("fine-tune epochs and batch size >= 1");
  tune_allocator();

  const auto encoder = model.encoder_parameters();
  const std::uint32_t crc_before = parameters_crc32(encoder);

  const WindowBatch all = train.all();
  if (all.target_channels != c.out_channels)
    throw ConfigError("fine-tune targets have " + std::to_string(all.target_channels) +
                      " channels, model predicts " + std::to_string(c.out_channels));
  const std::size_t N = all.batch;
  const std::vector<double> feats = encoder_features(model, all.inputs, N, cfg.pooling);

  FinetuneResult result;
  ForecastHead& head = result.head;
  head.pooling = cfg.pooling;
  head.window_len = c.window_len;
  head.d_model = c.d_model;
  head.horizon = k;
  head.channels = c.out_channels;
  const std::size_t D = head.features(), K = k * c.out_channels;
  head.weight = Tensor<float>::zeros({D, K}, true);
  head.bias = Tensor<float>::zeros({K}, true);

  Adam<float> opt({head.weight, head.bias});
  Rng shuffle_rng(derive_seed(cfg.seed, "finetune-shuffle"));
  const std::size_t batches = (N + cfg.batch_size - 1) / cfg.batch_size;
  TrainLog& log = result.log;
  log.total_steps = batches * cfg.epochs;
  std::vector<std::size_t> order(N);
  std::size_t step = 0;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * cfg.batch_size, hi = std::min(N, lo + cfg.batch_size);
      const std::size_t B = hi - lo;
      std::vector<float> xb, yb;
      xb.reserve(B * D);
      yb.reserve(B * K);
      for (std::size_t i = lo; i < hi; ++i) {
        const std::size_t r = order[i];
        xb.insert(xb.end(), feats.begin() + r * D, feats.begin() + (r + 1) * D);
        yb.insert(yb.end(), all.targets.begin() + r * K, all.targets.begin() + (r + 1) * K);
      }
      const double lr = cosine_lr(step, log.total_steps, cfg.lr, cfg.lr_floor);
      head.weight.zero_grad();
      head.bias.zero_grad();
      auto pred = add(matmul(Tensor<float>::from({B, D}, std::move(xb)), head.weight), head.bias);
      auto loss = mse_loss(pred, Tensor<float>::from({B, K}, std::move(yb)));
      const double value = loss.item();
      if (!std::isfinite(value))
        throw NumericError("fine-tune loss became non-finite at epoch " + std::to_string(epoch));
      loss.backward();
      opt.step(lr);
      log.steps.push_back({step, epoch, lr, value});
      epoch_loss += value * static_cast<double>(B);
      ++step;
    }
    log.epochs.push_back({epoch, epoch_loss / static_cast<double>(N),
                          std::numeric_limits<double>::quiet_NaN()});
  }
  head.weight.zero_grad();
  head.bias.zero_grad();
  log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const std::uint32_t crc_after = parameters_crc32(model.encoder_parameters());
  if (crc_after != crc_before)
    throw InvariantError("encoder parameters changed during fine-tuning");
  result.encoder_crc = crc_after;
  return result;
}

std::vector<double> finetune_forecast(const TiMaeModel<float>& model, const ForecastHead& head,
                                      std::span<const double> inputs, std::size_t windows) {
  if (head.window_len != model.config().window_len || head.d_model != model.config().d_model)
    throw ConfigError("forecast head does not match the model");
  return head.predict(encoder_features(model, inputs, windows, head.pooling), windows);
}

template Tensor<float> masked_mse(const Tensor<float>&, const Tensor<float>&,
                                  std::span<const MaskSpec>);
template Tensor<double> masked_mse(const Tensor<double>&, const Tensor<double>&,
                                   std::span<const MaskSpec>);
template Tensor<float> mse_loss(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> mse_loss(const Tensor<double>&, const Tensor<double>&);
template void adam_step(std::span<float>, std::span<const float>, AdamState&, double,
                        std::uint64_t, const AdamConfig&);
template void adam_step(std::span<double>, std::span<const double>, AdamState&, double,
                        std::uint64_t, const AdamConfig&);
template class Adam<float>;
template class Adam<double>;
template double clip_grad_norm(std::span<const Tensor<float>>, double);
template double clip_grad_norm(std::span<const Tensor<double>>, double);

}  // namespace timae
