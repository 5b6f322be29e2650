#include "timae/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "timae/error.hpp"
#include "parse_util.hpp"

namespace timae {

// ---------------------------------------------------------------------------
// Enum names

MaskStrategy parse_mask_strategy(const std::string& name) {
  if (name == "random") return MaskStrategy::random;
  if (name == "continuous") return MaskStrategy::continuous;
  if (name == "split") return MaskStrategy::split;
  if (name == "periodic") return MaskStrategy::periodic;
  throw ParameterError("unknown mask strategy: " + name);
}

std::string to_string(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::random: return "random";
    case MaskStrategy::continuous: return "continuous";
    case MaskStrategy::split: return "split";
    case MaskStrategy::periodic: return "periodic";
  }
  return "random";
}

NormPlacement parse_norm_placement(const std::string& name) {
  if (name == "pre") return NormPlacement::pre;
  if (name == "post") return NormPlacement::post;
  throw ParameterError("unknown norm placement: " + name);
}

std::string to_string(NormPlacement n) { return n == NormPlacement::pre ? "pre" : "post"; }

Activation parse_activation(const std::string& name) {
  if (name == "gelu") return Activation::gelu;
  if (name == "relu") return Activation::relu;
  throw ParameterError("unknown activation: " + name);
}

std::string to_string(Activation a) { return a == Activation::gelu ? "gelu" : "relu"; }

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
  if (in_channels == 0) throw ConfigError("model.in_channels must be at least 1");
  if (out_channels == 0) throw ConfigError("model.out_channels must be at least 1");
  if (window_len == 0) throw ConfigError("model.window_len must be positive");
  if (d_model == 0 || d_decoder == 0) throw ConfigError("model widths must be positive");
  if (n_heads == 0 || d_model % n_heads != 0)
    throw ConfigError("model.d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
  if (d_decoder % n_heads != 0)
    throw ConfigError("model.d_decoder (" + std::to_string(d_decoder) +
                      ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
  if (d_model % 2 != 0 || d_decoder % 2 != 0)
    throw ConfigError("positional encoding needs even model widths");
  if (ffn_mult == 0) throw ConfigError("model.ffn_mult must be positive");
  if (!(dropout >= 0 && dropout < 1)) throw ConfigError("model.dropout must lie in [0, 1)");
  if (!(mask_ratio >= 0 && mask_ratio < 1)) throw ConfigError("model.mask_ratio must lie in [0, 1)");
  if (conv_kernel == 0 || conv_stride != 1 || conv_kernel != 2 * conv_padding + 1)
    throw ConfigError("embedding conv must preserve length (odd kernel, padding (k-1)/2, stride 1)");
  if (!(layer_norm_eps > 0)) throw ConfigError("model.layer_norm_eps must be positive");
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["in_channels"] = in_channels;
  j["out_channels"] = out_channels;
  j["window_len"] = window_len;
  j["d_model"] = d_model;
  j["d_decoder"] = d_decoder;
  j["n_heads"] = n_heads;
  j["enc_layers"] = enc_layers;
  j["dec_layers"] = dec_layers;
  j["ffn_mult"] = ffn_mult;
  j["dropout"] = dropout;
  j["mask_ratio"] = mask_ratio;
  j["conv_kernel"] = conv_kernel;
  j["conv_stride"] = conv_stride;
  j["conv_padding"] = conv_padding;
  j["use_encoder_pe"] = use_encoder_pe;
  j["use_decoder_pe"] = use_decoder_pe;
  j["norm"] = to_string(norm);
  j["activation"] = to_string(activation);
  j["mask_token_init"] = mask_token_init == MaskTokenInit::zero ? "zero" : "random";
  j["layer_norm_eps"] = layer_norm_eps;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model config is not valid JSON: ") + e.what());
  }
  ModelConfig c;
  try {
    c.in_channels = j.at("in_channels").get<std::size_t>();
    c.out_channels = j.at("out_channels").get<std::size_t>();
    c.window_len = j.at("window_len").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.d_decoder = j.at("d_decoder").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.enc_layers = j.at("enc_layers").get<std::size_t>();
    c.dec_layers = j.at("dec_layers").get<std::size_t>();
    c.ffn_mult = j.at("ffn_mult").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.mask_ratio = j.at("mask_ratio").get<double>();
    c.conv_kernel = j.at("conv_kernel").get<std::size_t>();
    c.conv_stride = j.at("conv_stride").get<std::size_t>();
    c.conv_padding = j.at("conv_padding").get<std::size_t>();
    c.use_encoder_pe = j.at("use_encoder_pe").get<bool>();
    c.use_decoder_pe = j.at("use_decoder_pe").get<bool>();
    c.norm = parse_norm_placement(j.at("norm").get<std::string>());
    c.activation = parse_activation(j.at("activation").get<std::string>());
    c.mask_token_init =
        j.at("mask_token_init").get<std::string>() == "random" ? MaskTokenInit::random : MaskTokenInit::zero;
    c.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model config header incomplete: ") + e.what());
  }
  return c;
}

namespace {

using detail::to_bool;
using detail::to_double;
using detail::to_size;

}  // namespace

bool ModelConfig::set(const std::string& key, const std::string& v) {
  if (key == "in_channels") in_channels = to_size(key, v);
  else if (key == "out_channels") out_channels = to_size(key, v);
  else if (key == "window_len") window_len = to_size(key, v);
  else if (key == "d_model") d_model = to_size(key, v);
  else if (key == "d_decoder") d_decoder = to_size(key, v);
  else if (key == "n_heads") n_heads = to_size(key, v);
  else if (key == "enc_layers") enc_layers = to_size(key, v);
  else if (key == "dec_layers") dec_layers = to_size(key, v);
  else if (key == "ffn_mult") ffn_mult = to_size(key, v);
  else if (key == "dropout") dropout = to_double(key, v);
  else if (key == "mask_ratio") mask_ratio = to_double(key, v);
  else if (key == "conv_kernel") conv_kernel = to_size(key, v);
  else if (key == "conv_stride") conv_stride = to_size(key, v);
  else if (key == "conv_padding") conv_padding = to_size(key, v);
  else if (key == "use_encoder_pe") use_encoder_pe = to_bool(key, v);
  else if (key == "use_decoder_pe") use_decoder_pe = to_bool(key, v);
  else if (key == "norm") norm = parse_norm_placement(v);
  else if (key == "activation") activation = parse_activation(v);
  else if (key == "mask_token_init") {
    if (v != "zero" && v != "random") throw ConfigError("mask_token_init must be zero or random");
    mask_token_init = v == "zero" ? MaskTokenInit::zero : MaskTokenInit::random;
  } else if (key == "layer_norm_eps") layer_norm_eps = to_double(key, v);
  else return false;
  return true;
}

// ---------------------------------------------------------------------------
// Masks

std::size_t masked_count(std::size_t length, double ratio) {
  return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(length)));
}

namespace {

MaskSpec from_masked(std::size_t length, MaskStrategy strategy, double ratio,
                     std::vector<std::size_t> masked) {
  std::sort(masked.begin(), masked.end());
  MaskSpec spec{strategy, ratio, length, {}, std::move(masked)};
  std::vector<bool> hidden(length, false);
  for (auto i : spec.masked) hidden[i] = true;
  for (std::size_t i = 0; i < length; ++i)
    if (!hidden[i]) spec.visible.push_back(i);
  return spec;
}

}  // namespace

MaskSpec make_mask(std::size_t length, MaskStrategy strategy, double ratio, Rng& rng) {
  if (!(ratio >= 0 && ratio < 1))
    throw ParameterError("mask ratio must lie in [0, 1), got " + std::to_string(ratio));
  if (length == 0) throw ParameterError("mask length must be positive");
  const std::size_t count = masked_count(length, ratio);
  if (count >= length)
    throw ParameterError("mask ratio " + std::to_string(ratio) + " hides all " +
                         std::to_string(length) + " tokens");

  std::vector<std::size_t> masked;
  switch (strategy) {
    case MaskStrategy::random: {
      std::vector<std::size_t> perm(length);
      std::iota(perm.begin(), perm.end(), 0);
      // Partial Fisher-Yates: the first `count` entries are a uniform sample.
      for (std::size_t i = 0; i < count; ++i) std::swap(perm[i], perm[i + rng.index(length - i)]);
      masked.assign(perm.begin(), perm.begin() + static_cast<long>(count));
      break;
    }
    case MaskStrategy::continuous:
      for (std::size_t i = length - count; i < length; ++i) masked.push_back(i);
      break;
    case MaskStrategy::split: {
      const bool tail = rng.bernoulli(0.5);
      const std::size_t begin = tail ? length - count : 0;
      for (std::size_t i = begin; i < begin + count; ++i) masked.push_back(i);
      break;
    }
    case MaskStrategy::periodic: {
      if (count == 0) break;
      constexpr std::size_t run = 4;
      const std::size_t runs = (count + run - 1) / run;
      const std::size_t free = length - count;
      // Free cells are spread over the `runs` gaps that follow each run; the
      // trailing gap is split between the front and back by a random offset.
      std::vector<std::size_t> gaps(runs);
      for (std::size_t i = 0; i < runs; ++i) gaps[i] = (i + 1) * free / runs - i * free / runs;
      const std::size_t lead = gaps.back() ? rng.index(gaps.back() + 1) : 0;
      std::size_t pos = lead;
      for (std::size_t i = 0; i < runs; ++i) {
        const std::size_t len = i + 1 < runs ? run : count - run * (runs - 1);
        for (std::size_t j = 0; j < len; ++j) masked.push_back(pos + j);
        pos += len + gaps[i];
      }
      break;
    }
  }
  return from_masked(length, strategy, ratio, std::move(masked));
}

MaskSpec tail_mask(std::size_t length, std::size_t count) {
  if (count >= length) throw ParameterError("tail mask leaves no visible tokens");
  std::vector<std::size_t> masked;
  for (std::size_t i = length - count; i < length; ++i) masked.push_back(i);
  return from_masked(length, MaskStrategy::continuous,
                     static_cast<double>(count) / static_cast<double>(length), std::move(masked));
}

std::vector<double> positional_encoding(std::size_t length, std::size_t d) {
  if (d == 0 || d % 2 != 0)
    throw ConfigError("positional encoding width must be even, got " + std::to_string(d));
  std::vector<double> pe(length * d);
  for (std::size_t pos = 0; pos < length; ++pos)
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d));
      pe[pos * d + 2 * i] = std::sin(angle);
      pe[pos * d + 2 * i + 1] = std::cos(angle);
    }
  return pe;
}

// ---------------------------------------------------------------------------
// Model

namespace {

template <typename T>
Tensor<T> xavier(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-a, a));
  return Tensor<T>::from(std::move(shape), std::move(v), true);
}

template <typename T>
Linear<T> make_linear(std::size_t in, std::size_t out, Rng& rng) {
  return {xavier<T>({in, out}, in, out, rng), Tensor<T>::zeros({out}, true)};
}

template <typename T>
TransformerBlock<T> make_block(std::size_t d, std::size_t hidden, Rng& rng) {
  TransformerBlock<T> b;
  b.ln1 = {Tensor<T>::full({d}, T(1), true), Tensor<T>::zeros({d}, true)};
  b.ln2 = {Tensor<T>::full({d}, T(1), true), Tensor<T>::zeros({d}, true)};
  b.query = make_linear<T>(d, d, rng);
  b.key = make_linear<T>(d, d, rng);
  b.value = make_linear<T>(d, d, rng);
  b.out = make_linear<T>(d, d, rng);
  b.fc1 = make_linear<T>(d, hidden, rng);
  b.fc2 = make_linear<T>(hidden, d, rng);
  return b;
}

template <typename T>
void add_block_params(std::vector<NamedTensor<T>>& out, const std::string& prefix,
                      const TransformerBlock<T>& b) {
  out.emplace_back(prefix + ".ln1.gamma", b.ln1.gamma);
  out.emplace_back(prefix + ".ln1.beta", b.ln1.beta);
  const std::pair<const char*, const Linear<T>*> linears[] = {
      {"attn.query", &b.query}, {"attn.key", &b.key}, {"attn.value", &b.value},
      {"attn.out", &b.out}};
  for (const auto& [name, l] : linears) {
    out.emplace_back(prefix + "." + name + ".weight", l->weight);
    out.emplace_back(prefix + "." + name + ".bias", l->bias);
  }
  out.emplace_back(prefix + ".ln2.gamma", b.ln2.gamma);
  out.emplace_back(prefix + ".ln2.beta", b.ln2.beta);
  out.emplace_back(prefix + ".mlp.fc1.weight", b.fc1.weight);
  out.emplace_back(prefix + ".mlp.fc1.bias", b.fc1.bias);
  out.emplace_back(prefix + ".mlp.fc2.weight", b.fc2.weight);
  out.emplace_back(prefix + ".mlp.fc2.bias", b.fc2.bias);
}


void check_masks(std::span<const MaskSpec> masks, std::size_t batch, std::size_t length) {
  if (masks.empty()) throw ContractError("no mask supplied");
  if (masks.size() != 1 && masks.size() != batch)
    throw DimensionError("got " + std::to_string(masks.size()) + " masks for a batch of " +
                         std::to_string(batch));
  const std::size_t visible = masks[0].visible.size();
  for (const auto& m : masks) {
    if (m.length != length)
      throw DimensionError("mask covers " + std::to_string(m.length) + " positions, sequence has " +
                           std::to_string(length));
    if (m.visible.size() != visible)
      throw DimensionError("masks in one batch must hide the same number of tokens");
  }
  if (visible == 0) throw ContractError("mask leaves no visible tokens for the encoder");
}

}  // namespace

RowIndex mask_row_index(std::span<const MaskSpec> masks, bool visible) {
  if (masks.size() == 1) return RowIndex::shared(visible ? masks[0].visible : masks[0].masked);
  std::vector<std::vector<std::size_t>> rows;
  rows.reserve(masks.size());
  for (const auto& m : masks) rows.push_back(visible ? m.visible : m.masked);
  return RowIndex::per_batch(rows);
}

template <typename T>
TiMaeModel<T>::TiMaeModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(derive_seed(seed, "model-init"));
  const auto& c = config_;
  // Xavier over the flattened receptive field, as for a k*m -> d linear map.
  conv_weight_ = xavier<T>({c.conv_kernel, c.in_channels, c.d_model}, c.conv_kernel * c.in_channels,
                           c.d_model, rng);
  conv_bias_ = Tensor<T>::zeros({c.d_model}, true);
  for (std::size_t i = 0; i < c.enc_layers; ++i)
    encoder_.push_back(make_block<T>(c.d_model, c.ffn_mult * c.d_model, rng));
  reduce_ = make_linear<T>(c.d_model, c.d_decoder, rng);
  if (c.mask_token_init == MaskTokenInit::zero) {
    mask_token_ = Tensor<T>::zeros({c.d_decoder}, true);
  } else {
    std::vector<T> v(c.d_decoder);
    for (auto& x : v) x = static_cast<T>(rng.normal(0.0, 0.02));
    mask_token_ = Tensor<T>::from({c.d_decoder}, std::move(v), true);
  }
  for (std::size_t i = 0; i < c.dec_layers; ++i)
    decoder_.push_back(make_block<T>(c.d_decoder, c.ffn_mult * c.d_decoder, rng));
  projection_ = make_linear<T>(c.d_decoder, c.out_channels, rng);
}

template <typename T>
TiMaeModel<T> TiMaeModel<T>::clone() const {
  TiMaeModel copy;
  copy.config_ = config_;
  auto dup = [](const Tensor<T>& t) { return Tensor<T>::from(t.shape(), t.values(), t.requires_grad()); };
  auto dup_linear = [&](const Linear<T>& l) { return Linear<T>{dup(l.weight), dup(l.bias)}; };
  auto dup_block = [&](const TransformerBlock<T>& b) {
    TransformerBlock<T> r;
    r.ln1 = {dup(b.ln1.gamma), dup(b.ln1.beta)};
    r.ln2 = {dup(b.ln2.gamma), dup(b.ln2.beta)};
    r.query = dup_linear(b.query);
    r.key = dup_linear(b.key);
    r.value = dup_linear(b.value);
    r.out = dup_linear(b.out);
    r.fc1 = dup_linear(b.fc1);
    r.fc2 = dup_linear(b.fc2);
    return r;
  };
  copy.conv_weight_ = dup(conv_weight_);
  copy.conv_bias_ = dup(conv_bias_);
  for (const auto& b : encoder_) copy.encoder_.push_back(dup_block(b));
  copy.reduce_ = dup_linear(reduce_);
  copy.mask_token_ = dup(mask_token_);
  for (const auto& b : decoder_) copy.decoder_.push_back(dup_block(b));
  copy.projection_ = dup_linear(projection_);
  return copy;
}

template <typename T>
Tensor<T> TiMaeModel<T>::pe_table(std::size_t length, std::size_t d) const {
  std::lock_guard lock(pe_cache_->mutex);
  auto& slot = pe_cache_->tables[{length, d}];
  if (!slot.defined()) {
    const auto pe = positional_encoding(length, d);
    slot = Tensor<T>::from({length, d}, std::vector<T>(pe.begin(), pe.end()));
  }
  return slot;
}

template <typename T>
Tensor<T> TiMaeModel<T>::embed(const Tensor<T>& x) const {
  if (x.rank() != 3 || x.dim(2) != config_.in_channels)
    throw DimensionError("embed expects [B, L, " + std::to_string(config_.in_channels) + "], got " +
                         shape_str(x.shape()));
  auto tokens = conv1d(x, conv_weight_, conv_bias_, config_.conv_stride, config_.conv_padding);
  if (config_.use_encoder_pe) tokens = add(tokens, pe_table(x.dim(1), config_.d_model));
  return tokens;
}

template <typename T>
Tensor<T> TiMaeModel<T>::layer_norm_apply(const Tensor<T>& x, const LayerNormParams<T>& ln) const {
  return layer_norm(x, ln.gamma, ln.beta, config_.layer_norm_eps);
}

template <typename T>
Tensor<T> TiMaeModel<T>::attention(const Tensor<T>& x, const TransformerBlock<T>& block) const {
  return block.out(timae::attention(block.query(x), block.key(x), block.value(x), config_.n_heads));
}

template <typename T>
Tensor<T> TiMaeModel<T>::mlp(const Tensor<T>& x, const TransformerBlock<T>& block) const {
  return block.fc2(activate(block.fc1(x), config_.activation));
}

template <typename T>
Tensor<T> TiMaeModel<T>::block_forward(const Tensor<T>& x, const TransformerBlock<T>& block) const {
  if (config_.norm == NormPlacement::pre) {
    auto h = add(x, attention(layer_norm_apply(x, block.ln1), block));
    return add(h, mlp(layer_norm_apply(h, block.ln2), block));
  }
  auto h = layer_norm_apply(add(x, attention(x, block)), block.ln1);
  return layer_norm_apply(add(h, mlp(h, block)), block.ln2);
}

template <typename T>
Tensor<T> TiMaeModel<T>::encode(const Tensor<T>& tokens, std::span<const MaskSpec> masks) const {
  if (tokens.rank() != 3 || tokens.dim(2) != config_.d_model)
    throw DimensionError("encode expects [B, L, " + std::to_string(config_.d_model) + "], got " +
                         shape_str(tokens.shape()));
  check_masks(masks, tokens.dim(0), tokens.dim(1));
  auto z = masks[0].masked.empty() && masks.size() == 1 ? tokens
                                                        : gather_rows(tokens, mask_row_index(masks, true));
  for (const auto& block : encoder_) z = block_forward(z, block);
  return z;
}

template <typename T>
Tensor<T> TiMaeModel<T>::decode(const Tensor<T>& latents, std::span<const MaskSpec> masks,
                                const ForwardContext& ctx) const {
  if (latents.rank() != 3 || latents.dim(2) != config_.d_model)
    throw DimensionError("decode expects [B, V, " + std::to_string(config_.d_model) + "], got " +
                         shape_str(latents.shape()));
  const std::size_t B = latents.dim(0);
  if (masks.empty()) throw ContractError("no mask supplied");
  const std::size_t L = masks[0].length;
  check_masks(masks, B, L);
  if (latents.dim(1) != masks[0].visible.size())
    throw DimensionError("decode got " + std::to_string(latents.dim(1)) + " latents for " +
                         std::to_string(masks[0].visible.size()) + " visible positions");

  auto z = reduce_(latents);
  auto full = scatter_rows(z, mask_row_index(masks, true), L);
  const std::size_t hidden = masks[0].masked.size();
  if (hidden > 0) {
    RowIndex repeat;
    repeat.batch = B;
    repeat.count = hidden;
    repeat.rows.assign(B * hidden, 0);
    auto fill = gather_rows(reshape(mask_token_, {1, config_.d_decoder}), repeat);
    full = add(full, scatter_rows(fill, mask_row_index(masks, false), L));
  }
  if (config_.use_decoder_pe) full = add(full, pe_table(L, config_.d_decoder));
  if (ctx.training && config_.dropout > 0) {
    if (!ctx.rng) throw ContractError("training-mode decode needs an Rng for dropout");
    full = dropout(full, config_.dropout, true, *ctx.rng);
  }
  for (const auto& block : decoder_) full = block_forward(full, block);
  return projection_(full);
}

template <typename T>
Tensor<T> TiMaeModel<T>::reconstruct(const Tensor<T>& x, std::span<const MaskSpec> masks,
                                     const ForwardContext& ctx) const {
  return decode(encode(embed(x), masks), masks, ctx);
}

template <typename T>
Tensor<T> TiMaeModel<T>::encode_full(const Tensor<T>& x) const {
  const MaskSpec all = tail_mask(x.dim(1), 0);
  return encode(embed(x), std::span<const MaskSpec>(&all, 1));
}

template <typename T>
std::vector<NamedTensor<T>> TiMaeModel<T>::encoder_parameters() const {
  std::vector<NamedTensor<T>> out;
  out.emplace_back("embed.conv.weight", conv_weight_);
  out.emplace_back("embed.conv.bias", conv_bias_);
  for (std::size_t i = 0; i < encoder_.size(); ++i)
    add_block_params(out, "encoder." + std::to_string(i), encoder_[i]);
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> TiMaeModel<T>::parameters() const {
  auto out = encoder_parameters();
  out.emplace_back("decoder.reduce.weight", reduce_.weight);
  out.emplace_back("decoder.reduce.bias", reduce_.bias);
  out.emplace_back("decoder.mask_token", mask_token_);
  for (std::size_t i = 0; i < decoder_.size(); ++i)
    add_block_params(out, "decoder." + std::to_string(i), decoder_[i]);
  out.emplace_back("decoder.projection.weight", projection_.weight);
  out.emplace_back("decoder.projection.bias", projection_.bias);
  return out;
}

template <typename T>
std::size_t TiMaeModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : parameters()) n += t.numel();
  return n;
}

template <typename T>
void TiMaeModel<T>::zero_grad() const {
  for (auto [name, t] : parameters()) t.zero_grad();
}

template class TiMaeModel<float>;
template class TiMaeModel<double>;

template <typename T>
Tensor<T> batch_tensor(std::span<const double> values, std::size_t batch, std::size_t length,
                       std::size_t channels) {
  if (values.size() != batch * length * channels)
    throw DimensionError("buffer of " + std::to_string(values.size()) + " values is not [" +
                         std::to_string(batch) + "," + std::to_string(length) + "," +
                         std::to_string(channels) + "]");
  return Tensor<T>::from({batch, length, channels}, std::vector<T>(values.begin(), values.end()));
}

template <typename T>
Tensor<T> channel_tail_tensor(std::span<const double> values, std::size_t batch, std::size_t length,
                              std::size_t channels, std::size_t width) {
  if (width > channels) throw DimensionError("target width exceeds channel count");
  if (values.size() != batch * length * channels) throw DimensionError("buffer shape mismatch");
  std::vector<T> out;
  out.reserve(batch * length * width);
  for (std::size_t r = 0; r < batch * length; ++r)
    for (std::size_t c = channels - width; c < channels; ++c)
      out.push_back(static_cast<T>(values[r * channels + c]));
  return Tensor<T>::from({batch, length, width}, std::move(out));
}

template Tensor<float> batch_tensor(std::span<const double>, std::size_t, std::size_t, std::size_t);
template Tensor<double> batch_tensor(std::span<const double>, std::size_t, std::size_t, std::size_t);
template Tensor<float> channel_tail_tensor(std::span<const double>, std::size_t, std::size_t,
                                           std::size_t, std::size_t);
template Tensor<double> channel_tail_tensor(std::span<const double>, std::size_t, std::size_t,
                                            std::size_t, std::size_t);

}  // namespace timae
