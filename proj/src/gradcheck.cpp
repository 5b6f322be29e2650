#include "timae/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "timae/error.hpp"
#include "timae/model.hpp"
#include "timae/ops.hpp"
#include "timae/rng.hpp"
#include "timae/training.hpp"

namespace timae {

namespace {

using TD = Tensor<double>;

std::vector<TD> fresh_leaves(const std::vector<TD>& inputs) {
  std::vector<TD> out;
  out.reserve(inputs.size());
  for (const auto& t : inputs) out.push_back(TD::from(t.shape(), t.values(), t.requires_grad()));
  return out;
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (auto x : v) s += x * x;
  return std::sqrt(s);
}

TD random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return TD::from(std::move(shape), std::move(v), true);
}

/// Weighted sum with fixed random weights, so every output element matters.
TD weighted(const TD& y, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(y.numel());
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  return reduce_sum(mul(y, TD::from(y.shape(), std::move(w))));
}

}  // namespace

std::vector<double> numeric_gradient(const ScalarFn& fn, const std::vector<TD>& inputs,
                                     std::size_t which, double h) {
  if (which >= inputs.size()) throw IndexError("numeric_gradient input index out of range");
  auto work = fresh_leaves(inputs);
  for (auto& t : work) t.set_requires_grad(false);
  NoGradGuard no_grad;
  std::vector<double> g(work[which].numel());
  auto data = work[which].data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double orig = data[i];
    data[i] = orig + h;
    const double up = fn(work).item();
    data[i] = orig - h;
    const double down = fn(work).item();
    data[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double gradient_relative_error(const ScalarFn& fn, const std::vector<TD>& inputs, double h) {
  auto leaves = fresh_leaves(inputs);
  fn(leaves).backward();
  double worst = 0.0;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    if (!leaves[i].requires_grad()) continue;
    const auto fd = numeric_gradient(fn, inputs, i, h);
    const auto ad = leaves[i].grad();
    std::vector<double> diff(fd.size());
    for (std::size_t j = 0; j < fd.size(); ++j) diff[j] = ad[j] - fd[j];
    const double denom = std::max({norm(ad), norm(fd), 1e-8});
    worst = std::max(worst, norm(diff) / denom);
  }
  return worst;
}

std::vector<GradCheckResult> run_op_gradchecks(int trials, std::uint64_t seed, double tolerance) {
  struct Case {
    std::string name;
    // Builds inputs and the scalar function for one trial.
    std::function<std::pair<std::vector<TD>, ScalarFn>(Rng&)> make;
  };
  auto small = [](Rng& r, std::size_t lo, std::size_t hi) { return lo + r.index(hi - lo + 1); };

  std::vector<Case> cases;
  cases.push_back({"add", [&](Rng& r) {
    const std::size_t a = small(r, 1, 3), b = small(r, 1, 4);
    std::vector<TD> in{random_tensor({a, b}, r), random_tensor({b}, r)};
    return std::pair{in, ScalarFn([s = r.seed()](const std::vector<TD>& x) {
      return weighted(add(x[0], x[1]), s);
    })};
  }});
  cases.push_back({"sub", [&](Rng& r) {
    const std::size_t a = small(r, 1, 3), b = small(r, 1, 4);
    std::vector<TD> in{random_tensor({a, b}, r), random_tensor({a, b}, r)};
    return std::pair{in, ScalarFn([](const std::vector<TD>& x) { return weighted(sub(x[0], x[1]), 5); })};
  }});
  cases.push_back({"mul", [&](Rng& r) {
    const std::size_t a = small(r, 1, 3), b = small(r, 1, 4);
    std::vector<TD> in{random_tensor({a, b}, r), random_tensor({b}, r)};
    return std::pair{in, ScalarFn([](const std::vector<TD>& x) { return weighted(mul(x[0], x[1]), 6); })};
  }});
  cases.push_back({"scale", [&](Rng& r) {
    std::vector<TD> in{random_tensor({small(r, 1, 4), 3}, r)};
    const double f = r.uniform(-2.0, 2.0);
    return std::pair{in, ScalarFn([f](const std::vector<TD>& x) { return weighted(scale(x[0], f), 7); })};
  }});
  cases.push_back({"gelu", [&](Rng& r) {
    std::vector<TD> in{random_tensor({small(r, 1, 4), 5}, r, -3.0, 3.0)};
    return std::pair{in, ScalarFn([](const std::vector<TD>& x) { return weighted(gelu(x[0]), 8); })};
  }});
  cases.push_back({"relu", [&](Rng& r) {
    // Keep inputs away from the kink at zero.
    std::vector<double> v(8);
    for (auto& x : v) x = (r.bernoulli(0.5) ? 1.0 : -1.0) * r.uniform(0.1, 2.0);
    std::vector<TD> in{TD::from({2, 4}, v, true)};
    return std::pair{in, ScalarFn([](const std::vector<TD>& x) { return weighted(relu(x[0]), 9); })};
  }});
  cases.push_back({"matmul", [&](Rng& r) {
    const std::size_t p = small(r, 1, 4), q = small(r, 1, 4), s = small(r, 1, 4), b = small(r, 1, 3);
    std::vector<TD> in{random_tensor({b, p, q}, r), random_tensor({b, q, s}, r)};
    return std::pair{in, ScalarFn([](const std::vector<TD>& x) { return weighted(matmul(x[0], x[1]), 10); })};
  }});
  cases.push_back({"matmul_shared", [&](Rng& r) {
    const std::size_t p = small(r, 1, 4), q = small(r, 1, 4), s = small(r, 1, 4);
    std::vector<TD> in{random_tensor({2, p, q}, r), random_tensor({q, s}, r)};
    return std::pair{in, ScalarFn([](const std::vector<TD>& x) { return weighted(matmul(x[0], x[1]), 11); })};
  }});
  cases.push_back({"transpose", [&](Rng& r) {
    std::vector<TD> in{random_tensor({2, small(r, 1, 3), small(r, 1, 4)}, r)};
    return std::pair{in, ScalarFn([](const std::vector<TD>& x) { return weighted(transpose(x[0], 0, 2), 12); })};
  }});
  cases.push_back({"reshape", [&](Rng& r) {
    std::vector<TD> in{random_tensor({2, 6}, r)};
    return std::pair{in, ScalarFn([](const std::vector<TD>& x) { return weighted(reshape(x[0], {3, 4}), 13); })};
  }});
  cases.push_back({"concat", [&](Rng& r) {
    std::vector<TD> in{random_tensor({2, small(r, 1, 3)}, r), random_tensor({2, small(r, 1, 3)}, r)};
    return std::pair{in, ScalarFn([](const std::vector<TD>& x) {
      std::vector<TD> parts{x[0], x[1]};
      return weighted(concat<double>(parts, 1), 14);
    })};
  }});
  cases.push_back({"gather_rows", [&](Rng& r) {
    const std::size_t L = small(r, 2, 6);
    std::vector<std::size_t> rows{r.index(L), r.index(L), r.index(L)};
    std::vector<TD> in{random_tensor({2, L, 3}, r)};
    return std::pair{in, ScalarFn([rows](const std::vector<TD>& x) {
      return weighted(gather_rows(x[0], RowIndex::shared(rows)), 15);
    })};
  }});
  cases.push_back({"scatter_rows", [&](Rng& r) {
    const std::size_t L = small(r, 3, 6);
    std::vector<std::vector<std::size_t>> rows{{r.index(L), r.index(L)}, {r.index(L), r.index(L)}};
    std::vector<TD> in{random_tensor({2, 2, 3}, r)};
    return std::pair{in, ScalarFn([rows, L](const std::vector<TD>& x) {
      return weighted(scatter_rows(x[0], RowIndex::per_batch(rows), L), 16);
    })};
  }});
  cases.push_back({"reduce_sum", [&](Rng& r) {
    std::vector<TD> in{random_tensor({small(r, 1, 4), 3}, r)};
    return std::pair{in, ScalarFn([](const std::vector<TD>& x) { return reduce_sum(mul(x[0], x[0])); })};
  }});
  cases.push_back({"reduce_mean", [&](Rng& r) {
    std::vector<TD> in{random_tensor({small(r, 1, 4), 3}, r)};
    return std::pair{in, ScalarFn([](const std::vector<TD>& x) { return reduce_mean(mul(x[0], x[0])); })};
  }});
  cases.push_back({"reduce_mean_axis", [&](Rng& r) {
    std::vector<TD> in{random_tensor({2, small(r, 1, 4), 3}, r)};
    return std::pair{in, ScalarFn([](const std::vector<TD>& x) { return weighted(reduce_mean(x[0], 1), 17); })};
  }});
  cases.push_back({"softmax", [&](Rng& r) {
    std::vector<TD> in{random_tensor({small(r, 1, 3), small(r, 2, 5)}, r, -2.0, 2.0)};
    const int axis = r.bernoulli(0.5) ? -1 : 0;
    return std::pair{in, ScalarFn([axis](const std::vector<TD>& x) { return weighted(softmax(x[0], axis), 18); })};
  }});
  cases.push_back({"attention", [&](Rng& r) {
    const std::size_t B = small(r, 1, 2), N = small(r, 1, 5), H = small(r, 1, 2), dh = small(r, 1, 3);
    std::vector<TD> in{random_tensor({B, N, H * dh}, r), random_tensor({B, N, H * dh}, r),
                       random_tensor({B, N, H * dh}, r)};
    return std::pair{in, ScalarFn([H](const std::vector<TD>& x) {
      return weighted(attention(x[0], x[1], x[2], H), 19);
    })};
  }});
  cases.push_back({"layer_norm", [&](Rng& r) {
    const std::size_t d = small(r, 2, 6);
    std::vector<TD> in{random_tensor({small(r, 1, 3), d}, r), random_tensor({d}, r, 0.5, 1.5),
                       random_tensor({d}, r)};
    return std::pair{in, ScalarFn([](const std::vector<TD>& x) {
      return weighted(layer_norm(x[0], x[1], x[2]), 20);
    })};
  }});
  cases.push_back({"conv1d", [&](Rng& r) {
    const std::size_t L = small(r, 3, 6), m = small(r, 1, 2), d = small(r, 1, 3);
    const std::size_t k = r.bernoulli(0.5) ? 3 : 1, pad = k / 2;
    std::vector<TD> in{random_tensor({2, L, m}, r), random_tensor({k, m, d}, r), random_tensor({d}, r)};
    return std::pair{in, ScalarFn([pad](const std::vector<TD>& x) {
      return weighted(conv1d(x[0], x[1], x[2], 1, pad), 21);
    })};
  }});
  cases.push_back({"dropout", [&](Rng& r) {
    std::vector<TD> in{random_tensor({3, 4}, r)};
    const std::uint64_t s = r.seed() ^ 0x9e37u;
    return std::pair{in, ScalarFn([s](const std::vector<TD>& x) {
      Rng mask_rng(s);  // same mask on every evaluation
      return weighted(dropout(x[0], 0.3, true, mask_rng), 22);
    })};
  }});

  std::vector<GradCheckResult> results;
  Rng master(seed);
  for (const auto& c : cases) {
    GradCheckResult res{c.name, 0.0, tolerance, trials};
    for (int t = 0; t < trials; ++t) {
      Rng rng(derive_seed(master.seed(), c.name + "#" + std::to_string(t)));
      auto [inputs, fn] = c.make(rng);
      res.max_relative_error = std::max(res.max_relative_error, gradient_relative_error(fn, inputs));
    }
    results.push_back(res);
  }
  return results;
}

ModelConfig tiny_model_config() {
  ModelConfig c;
  c.in_channels = 2;
  c.out_channels = 1;
  c.window_len = 8;
  c.d_model = 8;
  c.d_decoder = 4;
  c.n_heads = 2;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.ffn_mult = 2;
  c.mask_ratio = 0.5;
  c.mask_token_init = MaskTokenInit::random;
  return c;
}

ModelGradCheck model_gradcheck(const ModelConfig& config, std::uint64_t seed, MaskStrategy strategy,
                               double h) {
  TiMaeModel<double> model(config, derive_seed(seed, "model-init"));
  Rng rng(derive_seed(seed, "gradcheck"));
  const std::size_t B = 2, L = config.window_len, m = config.in_channels;
  std::vector<double> x(B * L * m);
  for (auto& v : x) v = rng.normal();
  std::vector<MaskSpec> masks;
  for (std::size_t b = 0; b < B; ++b) masks.push_back(make_mask(L, strategy, config.mask_ratio, rng));
  const auto input = batch_tensor<double>(x, B, L, m);
  const auto target = channel_tail_tensor<double>(x, B, L, m, config.out_channels);
  auto loss = [&] { return masked_mse(model.reconstruct(input, masks), target, masks); };

  model.zero_grad();
  loss().backward();

  struct Stats {
    std::string name;
    double d2 = 0.0, a2 = 0.0, f2 = 0.0;
  };
  std::vector<Stats> stats;
  ModelGradCheck out;
  NoGradGuard no_grad;
  for (auto& [name, t] : model.parameters()) {
    const std::vector<double> ad(t.grad().begin(), t.grad().end());
    auto data = t.data();
    Stats s{name};
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + h;
      const double up = loss().item();
      data[i] = orig - h;
      const double down = loss().item();
      data[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      s.d2 += (ad[i] - fd) * (ad[i] - fd);
      s.a2 += ad[i] * ad[i];
      s.f2 += fd * fd;
    }
    out.parameters += data.size();
    stats.push_back(s);
  }
  double d2 = 0.0, a2 = 0.0, f2 = 0.0;
  for (const auto& s : stats) {
    d2 += s.d2;
    a2 += s.a2;
    f2 += s.f2;
  }
  const double scale_norm = std::max({std::sqrt(a2), std::sqrt(f2), 1e-8});
  out.global_relative_error = std::sqrt(d2) / scale_norm;
  // Tensors whose true gradient vanishes (e.g. attention key biases, which
  // softmax ignores) are measured against a floor tied to the global norm.
  for (const auto& s : stats) {
    const double denom = std::max({std::sqrt(s.a2), std::sqrt(s.f2), 1e-6 * scale_norm});
    const double err = std::sqrt(s.d2) / denom;
    if (err >= out.worst_tensor_error) {
      out.worst_tensor_error = err;
      out.worst_tensor = s.name;
    }
  }
  model.zero_grad();
  return out;
}

}  // namespace timae
