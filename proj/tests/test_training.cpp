#include <cmath>
#include <numbers>

#include "doctest.h"
#include "timae/checkpoint.hpp"
#include "timae/error.hpp"
#include "timae/training.hpp"

using namespace timae;

namespace {

ModelConfig small_config(std::size_t L = 16) {
  ModelConfig c;
  c.window_len = L;
  c.d_model = 16;
  c.d_decoder = 8;
  c.n_heads = 2;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.ffn_mult = 2;
  c.dropout = 0.0;
  return c;
}

TimeSeries sine_series(std::size_t T, double period = 12.0) {
  TimeSeries ts;
  ts.channel_names = {"y"};
  for (std::size_t t = 0; t < T; ++t) ts.values.push_back(std::sin(2 * std::numbers::pi * static_cast<double>(t) / period));
  return ts;
}

TrainConfig quick_train(std::uint64_t seed) {
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 8;
  t.sampling_time = 2;
  t.seed = seed;
  t.window_stride = 4;
  return t;
}

}  // namespace

TEST_CASE("masked mse counts masked positions only") {
  MaskSpec m = tail_mask(4, 2);  // masked {2, 3}
  const auto pred = Tensor<double>::from({1, 4, 1}, {0, 0, 1, 2});
  const auto target = Tensor<double>::from({1, 4, 1}, {0, 0, 3, 4});
  CHECK(masked_mse(pred, target, std::span<const MaskSpec>(&m, 1)).item() == doctest::Approx(4.0));

  // The worked example: errors 1 and 2 squared over two masked steps.
  const auto p2 = Tensor<double>::from({1, 3, 1}, {9, 1, 2});
  const auto t2 = Tensor<double>::from({1, 3, 1}, {-5, 0, 0});
  MaskSpec m2 = tail_mask(3, 2);
  CHECK(masked_mse(p2, t2, std::span<const MaskSpec>(&m2, 1)).item() == doctest::Approx(2.5));

  // Changing predictions at visible positions leaves the loss unchanged and
  // their gradient is zero.
  auto leaf = Tensor<double>::from({1, 3, 1}, {100, 1, 2}, true);
  auto loss = masked_mse(leaf, t2, std::span<const MaskSpec>(&m2, 1));
  CHECK(loss.item() == doctest::Approx(2.5));
  loss.backward();
  CHECK(leaf.grad()[0] == 0);
  CHECK(leaf.grad()[1] == doctest::Approx(1.0));
  CHECK(leaf.grad()[2] == doctest::Approx(2.0));

  MaskSpec none = tail_mask(3, 0);
  CHECK_THROWS_AS(masked_mse(p2, t2, std::span<const MaskSpec>(&none, 1)), ContractError);
}

TEST_CASE("adam") {
  std::vector<double> p{1.0, -2.0};
  AdamState st;
  adam_step<double>(p, std::vector<double>{0, 0}, st, 0.1, 1);
  CHECK(p == std::vector<double>{1.0, -2.0});

  p = {1.0, 1.0};
  AdamState s2;
  adam_step<double>(p, std::vector<double>{3.0, -0.5}, s2, 0.1, 1);
  // The first bias-corrected step moves each weight by lr * sign(g).
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(1.1).epsilon(1e-6));
  CHECK_THROWS_AS(adam_step<double>(p, std::vector<double>{1.0}, s2, 0.1, 2), DimensionError);
  CHECK_THROWS_AS(adam_step<double>(p, std::vector<double>{1.0, 1.0}, s2, 0.1, 0), ParameterError);

  // Minimizes a quadratic.
  auto w = Tensor<double>::from({1}, {5.0}, true);
  Adam<double> opt({w});
  for (int i = 0; i < 500; ++i) {
    w.zero_grad();
    reduce_sum(mul(w, w)).backward();
    opt.step(0.05);
  }
  CHECK(std::abs(w.values()[0]) < 0.05);
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(0, 100, 1e-3, 0) == doctest::Approx(1e-3));
  CHECK(cosine_lr(50, 100, 1e-3, 0) == doctest::Approx(5e-4));
  CHECK(cosine_lr(100, 100, 1e-3, 1e-5) == doctest::Approx(1e-5));
  double prev = 1;
  for (std::size_t s = 0; s <= 100; ++s) {
    const double lr = cosine_lr(s, 100, 1e-3, 1e-5);
    CHECK(lr <= prev);
    prev = lr;
  }
  CHECK_THROWS_AS(cosine_lr(101, 100, 1e-3, 0), ParameterError);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  TiMaeModel<float> model(small_config(), 3);
  const auto before = parameters_crc32(model.parameters());
  WindowSet train(sine_series(100), {16, 4, 0});
  auto cfg = quick_train(1);
  cfg.lr = 0;
  const auto log = pretrain(model, train, nullptr, cfg);
  CHECK(parameters_crc32(model.parameters()) == before);
  CHECK(log.epochs.size() == 2);
  CHECK(std::isnan(log.epochs[0].val_loss));
}

TEST_CASE("pretraining is deterministic and lowers the loss") {
  const auto series = sine_series(400);
  WindowSet train(series.slice(0, 300), {16, 2, 0});
  WindowSet val(series.slice(300, 400), {16, 4, 0});
  auto cfg = quick_train(5);
  cfg.epochs = 6;
  cfg.lr = 3e-3;
  TiMaeModel<float> a(small_config(), 5), b(small_config(), 5);
  const auto la = pretrain(a, train, &val, cfg);
  const auto lb = pretrain(b, train, &val, cfg);
  CHECK(la.steps_csv() == lb.steps_csv());
  CHECK(la.epochs_csv() == lb.epochs_csv());
  CHECK(la.summary_json() == lb.summary_json());
  CHECK(serialize_checkpoint(a) == serialize_checkpoint(b));
  CHECK(la.epochs.back().val_loss < la.epochs.front().val_loss);
  CHECK(la.total_steps == la.steps.size());

  cfg.seed = 6;
  TiMaeModel<float> c(small_config(), 5);
  CHECK(pretrain(c, train, &val, cfg).steps_csv() != la.steps_csv());
}

TEST_CASE("pretraining rejects mismatched windows") {
  TiMaeModel<float> model(small_config(16), 1);
  WindowSet wrong(sine_series(100), {20, 4, 0});
  CHECK_THROWS_AS(pretrain(model, wrong, nullptr, quick_train(1)), ConfigError);
  auto bad = quick_train(1);
  bad.sampling_time = 0;
  WindowSet ok(sine_series(100), {16, 4, 0});
  CHECK_THROWS_AS(pretrain(model, ok, nullptr, bad), ConfigError);
}

TEST_CASE("the step loss averages the masked loss over all mask draws") {
  const auto cfg_model = small_config();
  TiMaeModel<float> model(cfg_model, 2);
  const auto reference = model.clone();
  WindowSet one(sine_series(16), {16, 1, 0});
  auto cfg = quick_train(9);
  cfg.epochs = 1;
  cfg.batch_size = 1;
  cfg.sampling_time = 30;
  cfg.micro_batch = 7;
  const auto log = pretrain(model, one, nullptr, cfg);
  REQUIRE(log.steps.size() == 1);

  // Replay the same mask stream by hand.
  Rng rng(derive_seed(9, "mask"));
  const auto w = one.all();
  const auto x = batch_tensor<float>(w.inputs, 1, 16, 1);
  double sum = 0;
  std::vector<double> losses;
  for (int s = 0; s < 30; ++s) {
    const auto m = make_mask(16, MaskStrategy::random, cfg_model.mask_ratio, rng);
    NoGradGuard guard;
    const double l = masked_mse(reference.reconstruct(x, std::span<const MaskSpec>(&m, 1)), x,
                                std::span<const MaskSpec>(&m, 1)).item();
    losses.push_back(l);
    sum += l;
  }
  CHECK(log.steps[0].loss == doctest::Approx(sum / 30).epsilon(1e-5));

  // Averaging S draws shrinks the spread of the estimate by about sqrt(S).
  double mean = sum / 30, var = 0;
  for (double l : losses) var += (l - mean) * (l - mean) / 29;
  CHECK(var > 0);
  std::vector<double> means;
  Rng rng2(77);
  for (int rep = 0; rep < 40; ++rep) {
    double acc = 0;
    for (int s = 0; s < 30; ++s) {
      const auto m = make_mask(16, MaskStrategy::random, cfg_model.mask_ratio, rng2);
      NoGradGuard guard;
      acc += masked_mse(reference.reconstruct(x, std::span<const MaskSpec>(&m, 1)), x,
                        std::span<const MaskSpec>(&m, 1)).item();
    }
    means.push_back(acc / 30);
  }
  double mm = 0, vm = 0;
  for (double v : means) mm += v / 40;
  for (double v : means) vm += (v - mm) * (v - mm) / 39;
  CHECK(vm < var / 10);
}

TEST_CASE("fine-tuning keeps the encoder frozen") {
  TiMaeModel<float> model(small_config(), 4);
  const auto crc = parameters_crc32(model.encoder_parameters());
  WindowSet train(sine_series(200), {16, 2, 4}, 1);
  FinetuneConfig fc;
  fc.epochs = 3;
  fc.batch_size = 16;
  const auto r = finetune(model, train, fc);
  CHECK(r.encoder_crc == crc);
  CHECK(parameters_crc32(model.encoder_parameters()) == crc);
  CHECK(r.head.parameter_count() == 16 * 16 * 4 + 4);
  fc.pooling = HeadPooling::mean;
  CHECK(finetune(model, train, fc).head.parameter_count() == 16 * 4 + 4);
  CHECK_THROWS_AS(finetune(model, WindowSet(sine_series(200), {16, 2, 0}), fc), ConfigError);
}

TEST_CASE("a fine-tuned head beats last value on a noiseless trend") {
  TimeSeries ts;
  ts.channel_names = {"y"};
  for (int t = 0; t < 300; ++t) ts.values.push_back(0.01 * t);
  TiMaeModel<float> model(small_config(), 7);
  WindowSet train(ts.slice(0, 200), {16, 1, 1}, 1);
  FinetuneConfig fc;
  fc.epochs = 1000;
  fc.batch_size = 32;
  fc.lr = 1e-2;
  const auto r = finetune(model, train, fc);

  WindowSet test(ts.slice(200, 300), {16, 1, 1}, 1);
  const auto all = test.all();
  const auto pred = finetune_forecast(model, r.head, all.inputs, all.batch);
  double err_head = 0, err_last = 0;
  for (std::size_t i = 0; i < all.batch; ++i) {
    const double last = all.inputs[i * 16 + 15];
    err_head += std::pow(pred[i] - all.targets[i], 2);
    err_last += std::pow(last - all.targets[i], 2);
  }
  CHECK(err_head < err_last);
}

TEST_CASE("train config text round trip") {
  TrainConfig t;
  t.lr = 3e-4;
  t.strategy = MaskStrategy::periodic;
  TrainConfig u;
  for (const auto& [k, v] : t.entries()) CHECK(u.set(k, v));
  CHECK(u.entries() == t.entries());
  CHECK_FALSE(u.set("bogus", "1"));
  CHECK_THROWS_AS(u.set("mask_strategy", "zigzag"), ConfigError);
}
