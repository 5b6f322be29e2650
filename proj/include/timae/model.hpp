#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "timae/ops.hpp"
#include "timae/rng.hpp"
#include "timae/tensor.hpp"

namespace timae {

enum class MaskStrategy { random, continuous, split, periodic };
enum class NormPlacement { pre, post };
enum class MaskTokenInit { zero, random };

MaskStrategy parse_mask_strategy(const std::string& name);
std::string to_string(MaskStrategy s);
NormPlacement parse_norm_placement(const std::string& name);
std::string to_string(NormPlacement n);
Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

struct ModelConfig {
  std::size_t in_channels = 1;   // m
  std::size_t out_channels = 1;  // n
  std::size_t window_len = 300;  // L
  std::size_t d_model = 64;
  std::size_t d_decoder = 32;
  std::size_t n_heads = 4;
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 2;
  std::size_t ffn_mult = 4;
  double dropout = 0.1;
  double mask_ratio = 0.75;
  std::size_t conv_kernel = 3;
  std::size_t conv_stride = 1;
  std::size_t conv_padding = 1;
  bool use_encoder_pe = true;
  bool use_decoder_pe = true;
  NormPlacement norm = NormPlacement::pre;
  Activation activation = Activation::gelu;
  MaskTokenInit mask_token_init = MaskTokenInit::zero;
  double layer_norm_eps = 1e-5;

  void validate() const;
  /// Canonical JSON text (stable key order); used as the checkpoint header.
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  /// Sets one field from text; returns false for an unknown key.
  bool set(const std::string& key, const std::string& value);

  bool operator==(const ModelConfig&) const = default;
};

/// Partition of L token positions into visible and masked sets.
struct MaskSpec {
  MaskStrategy strategy = MaskStrategy::random;
  double ratio = 0.0;
  std::size_t length = 0;
  std::vector<std::size_t> visible;  // sorted
  std::vector<std::size_t> masked;   // sorted
};

/// round(r * L).
std::size_t masked_count(std::size_t length, double ratio);

/// Draws a mask. random: uniform without replacement; continuous: the final
/// block; split: final or initial block (coin flip per draw); periodic:
/// runs of four spaced evenly over the window with a random lead offset.
MaskSpec make_mask(std::size_t length, MaskStrategy strategy, double ratio, Rng& rng);

/// Row selection of the visible (or masked) positions of one shared mask or
/// one mask per batch entry.
RowIndex mask_row_index(std::span<const MaskSpec> masks, bool visible);

/// Masks exactly the last `count` positions (forecasting layout).
MaskSpec tail_mask(std::size_t length, std::size_t count);

/// Fixed sinusoidal table [length x d]: sin at even columns, cos at odd.
std::vector<double> positional_encoding(std::size_t length, std::size_t d);

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]
  Tensor<T> operator()(const Tensor<T>& x) const { return add(matmul(x, weight), bias); }
};

template <typename T>
struct LayerNormParams {
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <typename T>
struct TransformerBlock {
  LayerNormParams<T> ln1, ln2;
  Linear<T> query, key, value, out;
  Linear<T> fc1, fc2;
};

/// Per-call forward options. Dropout draws from `rng` in training mode.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
};

template <typename T>
using NamedTensor = std::pair<std::string, Tensor<T>>;

/// The masked autoencoder: conv embedding + PE, a Transformer encoder over
/// visible tokens, and a narrower decoder over the full padded sequence that
/// projects every position back to `out_channels` values.
template <typename T>
class TiMaeModel {
 public:
  TiMaeModel(ModelConfig config, std::uint64_t seed);
  TiMaeModel(const TiMaeModel&) = delete;
  TiMaeModel& operator=(const TiMaeModel&) = delete;
  TiMaeModel(TiMaeModel&&) noexcept = default;
  TiMaeModel& operator=(TiMaeModel&&) noexcept = default;

  /// Deep copy of every parameter.
  TiMaeModel clone() const;

  const ModelConfig& config() const { return config_; }

  /// x[B, L, m] -> tokens[B, L, d_model].
  Tensor<T> embed(const Tensor<T>& x) const;
  /// Runs the encoder on the visible rows only. `masks` holds one mask
  /// shared by the batch or one per batch entry.
  Tensor<T> encode(const Tensor<T>& tokens, std::span<const MaskSpec> masks) const;
  /// latents[B, V, d_model] -> reconstruction[B, L, out_channels].
  Tensor<T> decode(const Tensor<T>& latents, std::span<const MaskSpec> masks,
                   const ForwardContext& ctx = {}) const;
  Tensor<T> reconstruct(const Tensor<T>& x, std::span<const MaskSpec> masks,
                        const ForwardContext& ctx = {}) const;
  /// Encoder output for the whole (unmasked) window: [B, L, d_model].
  Tensor<T> encode_full(const Tensor<T>& x) const;

  std::vector<NamedTensor<T>> parameters() const;
  /// Embedding and encoder parameters (the part frozen for fine-tuning).
  std::vector<NamedTensor<T>> encoder_parameters() const;
  std::size_t parameter_count() const;
  void zero_grad() const;

  /// Cached PE table [length, d].
  Tensor<T> pe_table(std::size_t length, std::size_t d) const;

  // Direct access for tests and tooling.
  Tensor<T>& conv_weight() { return conv_weight_; }
  Tensor<T>& conv_bias() { return conv_bias_; }
  Tensor<T>& mask_token() { return mask_token_; }
  Linear<T>& decoder_reduce() { return reduce_; }
  Linear<T>& projection() { return projection_; }
  std::vector<TransformerBlock<T>>& encoder_blocks() { return encoder_; }
  std::vector<TransformerBlock<T>>& decoder_blocks() { return decoder_; }

 private:
  struct PeCache {
    std::mutex mutex;
    std::map<std::pair<std::size_t, std::size_t>, Tensor<T>> tables;
  };

  TiMaeModel() = default;
  Tensor<T> attention(const Tensor<T>& x, const TransformerBlock<T>& block) const;
  Tensor<T> mlp(const Tensor<T>& x, const TransformerBlock<T>& block) const;
  Tensor<T> block_forward(const Tensor<T>& x, const TransformerBlock<T>& block) const;
  Tensor<T> layer_norm_apply(const Tensor<T>& x, const LayerNormParams<T>& ln) const;

  ModelConfig config_;
  Tensor<T> conv_weight_;  // [k, m, d_model]
  Tensor<T> conv_bias_;    // [d_model]
  std::vector<TransformerBlock<T>> encoder_;
  Linear<T> reduce_;       // d_model -> d_decoder
  Tensor<T> mask_token_;   // [d_decoder]
  std::vector<TransformerBlock<T>> decoder_;
  Linear<T> projection_;   // d_decoder -> out_channels
  std::shared_ptr<PeCache> pe_cache_ = std::make_shared<PeCache>();
};

extern template class TiMaeModel<float>;
extern template class TiMaeModel<double>;

/// Copies a [B x L x channels] buffer into a constant tensor.
template <typename T>
Tensor<T> batch_tensor(std::span<const double> values, std::size_t batch, std::size_t length,
                       std::size_t channels);

/// Last `width` channels of a [B x L x channels] buffer as a tensor.
template <typename T>
Tensor<T> channel_tail_tensor(std::span<const double> values, std::size_t batch, std::size_t length,
                              std::size_t channels, std::size_t width);

}  // namespace timae
