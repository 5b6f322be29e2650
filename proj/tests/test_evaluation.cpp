#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "doctest.h"
#include "timae/error.hpp"
#include "timae/evaluation.hpp"
#include "timae/run_config.hpp"

using namespace timae;

namespace {

ModelConfig small_config(std::size_t L = 32) {
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

ExperimentConfig tiny_experiment(std::uint64_t seed) {
  ExperimentConfig e;
  e.model = small_config(32);
  e.train.epochs = 1;
  e.train.batch_size = 16;
  e.train.sampling_time = 2;
  e.train.window_stride = 8;
  e.train.val_stride = 8;
  e.train.seed = seed;
  e.synthetic.length = 400;
  e.history = 16;
  e.horizon = 16;
  e.eval_stride = 8;
  return e;
}

std::vector<double> gaussian(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// Gradient descent on (1/2N)|XW - Y|^2 + (alpha/2)|W|^2.
std::vector<double> ridge_by_descent(const std::vector<double>& x, std::size_t N, std::size_t D,
                                     const std::vector<double>& y, std::size_t K, double alpha) {
  std::vector<double> w(D * K, 0.0);
  for (int it = 0; it < 200000; ++it) {
    std::vector<double> g(D * K, 0.0);
    for (std::size_t r = 0; r < N; ++r)
      for (std::size_t k = 0; k < K; ++k) {
        double p = 0;
        for (std::size_t d = 0; d < D; ++d) p += x[r * D + d] * w[d * K + k];
        const double e = (p - y[r * K + k]) / static_cast<double>(N);
        for (std::size_t d = 0; d < D; ++d) g[d * K + k] += x[r * D + d] * e;
      }
    double change = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double step = 0.1 * (g[i] + alpha * w[i]);
      w[i] -= step;
      change = std::max(change, std::abs(step));
    }
    if (change < 1e-15) break;
  }
  return w;
}

}  // namespace

TEST_CASE("metrics") {
  const std::vector<double> p{1, 2, 3, 4}, t{2, 2, 5, 2};
  CHECK(mse(p, t) == doctest::Approx(9.0 / 4));
  CHECK(mae(p, t) == doctest::Approx(5.0 / 4));
  CHECK(mse(std::vector<double>{0, 0}, std::vector<double>{1, 2}) == 2.5);
  CHECK(mae(std::vector<double>{0, 0}, std::vector<double>{1, 2}) == 1.5);
  CHECK(mse(p, p) == 0);
  // MSE >= MAE^2 for any pair.
  const auto a = gaussian(50, 1), b = gaussian(50, 2);
  CHECK(mse(a, b) >= mae(a, b) * mae(a, b));
  CHECK_THROWS_AS(mse(p, std::vector<double>{1}), DimensionError);
}

TEST_CASE("naive baselines") {
  const std::vector<double> hist{1, 10, 2, 20, 3, 30};  // h=3, m=2
  CHECK(last_value_forecast(hist, 1, 3, 2, 2, 1) == std::vector<double>{30, 30});
  CHECK(last_value_forecast(hist, 1, 3, 2, 1, 2) == std::vector<double>{3, 30});

  TimeSeries ts;
  ts.channel_names = {"y"};
  for (int t = 0; t < 20; ++t) ts.values.push_back(t % 4);
  const auto s = seasonal_naive_forecast(ts, 10, 4, 6, 1);
  for (std::size_t j = 0; j < 6; ++j) CHECK(s[j] == static_cast<double>((10 + j) % 4));
  CHECK_THROWS_AS(seasonal_naive_forecast(ts, 3, 4, 2, 1), ParameterError);

  SyntheticSpec spec;
  CHECK(synthetic_period(spec) == doctest::Approx(8 * std::numbers::pi / 300 * 1999));
}

TEST_CASE("forecast origins and blocks") {
  CHECK(forecast_origins(100, 200, 20, 30, 10) == std::vector<std::size_t>{100, 110, 120, 130, 140, 150, 160, 170});
  CHECK(forecast_origins(0, 50, 20, 10, 5).front() == 20);
  CHECK(forecast_origins(0, 10, 20, 10, 5).empty());
  TimeSeries ts;
  ts.channel_names = {"a", "b"};
  for (int t = 0; t < 10; ++t) ts.values.insert(ts.values.end(), {double(t), 100.0 + t});
  const std::vector<std::size_t> o{3, 5};
  CHECK(history_block(ts, o, 2) == std::vector<double>{1, 101, 2, 102, 3, 103, 4, 104});
  CHECK(target_block(ts, o, 2, 1) == std::vector<double>{103, 104, 105, 106});
  CHECK_THROWS_AS(history_block(ts, std::vector<std::size_t>{1}, 2), IndexError);
  CHECK_THROWS_AS(target_block(ts, std::vector<std::size_t>{9}, 2, 1), IndexError);
}

TEST_CASE("ridge solve") {
  const std::size_t N = 30, D = 4, K = 2;
  const auto x = gaussian(N * D, 3);
  const std::vector<double> w_true{1, -2, 0.5, 3, 0, 1, -1, 2};
  std::vector<double> y(N * K, 0.0);
  for (std::size_t r = 0; r < N; ++r)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t d = 0; d < D; ++d) y[r * K + k] += x[r * D + d] * w_true[d * K + k];

  // Realizable targets are recovered as alpha -> 0.
  const auto p = ridge_solve(x, N, D, y, K, 1e-10);
  for (std::size_t i = 0; i < w_true.size(); ++i) CHECK(p.weights[i] == doctest::Approx(w_true[i]).epsilon(1e-6));
  CHECK(mse(p.predict(x, N), y) < 1e-12);

  // Heavy regularization shrinks toward zero.
  const auto big = ridge_solve(x, N, D, y, K, 1e9);
  for (double w : big.weights) CHECK(std::abs(w) < 1e-6);

  // Repeating rows changes nothing.
  std::vector<double> x2(x), y2(y);
  x2.insert(x2.end(), x.begin(), x.end());
  y2.insert(y2.end(), y.begin(), y.end());
  const auto a = ridge_solve(x, N, D, y, K, 2.0), b = ridge_solve(x2, 2 * N, D, y2, K, 2.0);
  for (std::size_t i = 0; i < a.weights.size(); ++i) CHECK(std::abs(a.weights[i] - b.weights[i]) < 1e-9);

  CHECK_THROWS_AS(ridge_solve(x, N, D, y, K, -1), ParameterError);
  RidgeProbe unfitted;
  CHECK_THROWS_AS(unfitted.predict(x, N), ContractError);
}

TEST_CASE("ridge matches gradient descent, both primal and dual") {
  for (std::size_t N : {10, 3}) {
    const std::size_t D = 3, K = 1;
    const auto x = gaussian(N * D, 10 + N);
    const auto y = gaussian(N * K, 20 + N);
    for (double alpha : {0.1, 1.0, 5.0}) {
      const auto closed = ridge_solve(x, N, D, y, K, alpha);
      const auto gd = ridge_by_descent(x, N, D, y, K, alpha);
      for (std::size_t i = 0; i < D * K; ++i) CHECK(std::abs(closed.weights[i] - gd[i]) < 1e-6);
    }
  }
}

TEST_CASE("ridge alpha selection") {
  const std::vector<double> want{0.1, 0.2, 0.5, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000};
  CHECK(std::vector<double>(kRidgeAlphaGrid.begin(), kRidgeAlphaGrid.end()) == want);

  const std::size_t N = 40, D = 5;
  const auto x = gaussian(N * D, 5), xv = gaussian(20 * D, 6);
  std::vector<double> y(N), yv(20);
  auto target = [](const double* row) { return row[0] - row[3] + 0.5 * row[4]; };
  for (std::size_t r = 0; r < N; ++r) y[r] = target(&x[r * D]);
  for (std::size_t r = 0; r < 20; ++r) yv[r] = target(&xv[r * D]);
  const auto fit = ridge_fit(x, N, y, xv, 20, yv, D, 1);
  CHECK(fit.alpha == 0.1);
  double best = 1e30;
  for (double a : want) best = std::min(best, mse(ridge_solve(x, N, D, y, 1, a).predict(xv, 20), yv));
  CHECK(fit.validation_mse == doctest::Approx(best));

  // Zero features give identical validation error for every alpha: the tie
  // goes to the smallest.
  const std::vector<double> zeros(N * D, 0.0), vzeros(20 * D, 0.0);
  CHECK(ridge_fit(zeros, N, y, vzeros, 20, yv, D, 1).alpha == 0.1);
}

TEST_CASE("logistic probe") {
  const std::size_t N = 200, D = 3;
  auto x = gaussian(N * D, 8);
  std::vector<int> labels(N);
  for (std::size_t r = 0; r < N; ++r) {
    labels[r] = x[r * D] > 0 ? 1 : 0;
    x[r * D] += labels[r] ? 1.0 : -1.0;
  }
  const auto res = classify_probe(x, labels, x, labels, D);
  CHECK(res.accuracy == 1.0);

  // Duplicating the train rows leaves the fitted weights unchanged.
  auto x2 = x;
  x2.insert(x2.end(), x.begin(), x.end());
  auto l2 = labels;
  l2.insert(l2.end(), labels.begin(), labels.end());
  const auto a = fit_logistic(x, N, D, labels, 1e-2, 300);
  const auto b = fit_logistic(x2, 2 * N, D, l2, 1e-2, 300);
  for (std::size_t i = 0; i < a.weights.size(); ++i) CHECK(std::abs(a.weights[i] - b.weights[i]) < 1e-9);

  // Random labels on fresh test data hover around chance.
  const auto noise_x = gaussian(400 * D, 12), test_x = gaussian(2000 * D, 13);
  Rng rng(14);
  std::vector<int> noise_y(400), test_y(2000);
  for (auto& y : noise_y) y = rng.bernoulli(0.5);
  for (auto& y : test_y) y = rng.bernoulli(0.5);
  const auto chance = classify_probe(noise_x, noise_y, test_x, test_y, D);
  CHECK(std::abs(chance.accuracy - 0.5) < 0.1);

  const std::vector<int> one_class(N, 1);
  CHECK_THROWS_AS(fit_logistic(x, N, D, one_class, 1e-2, 10), ParameterError);
  CHECK(std::isnan(classify_probe(x, labels, x, {}, D).accuracy));

  // Three classes.
  std::vector<int> three(N);
  for (std::size_t r = 0; r < N; ++r) {
    three[r] = static_cast<int>(r % 3);
    x[r * D + 1] = 4.0 * three[r];
  }
  CHECK(classify_probe(x, three, x, three, D).accuracy > 0.95);
}

TEST_CASE("representation pooling") {
  TiMaeModel<float> model(small_config(32), 3);
  const auto w = gaussian(2 * 20, 4);  // two windows of length 20
  const auto none = extract_representations(model, w, 2, Pooling::none);
  const auto mean = extract_representations(model, w, 2, Pooling::mean);
  const auto max = extract_representations(model, w, 2, Pooling::max);
  CHECK(none.size() == 2 * 20 * 16);
  CHECK(mean.size() == 2 * 16);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t j = 0; j < 16; ++j) {
      double acc = 0, top = -1e30;
      for (std::size_t t = 0; t < 20; ++t) {
        acc += none[(b * 20 + t) * 16 + j];
        top = std::max(top, none[(b * 20 + t) * 16 + j]);
      }
      CHECK(mean[b * 16 + j] == doctest::Approx(acc / 20).epsilon(1e-9));
      CHECK(max[b * 16 + j] == top);
    }
  // Micro-batching does not change the result.
  CHECK(extract_representations(model, w, 2, Pooling::mean, 1) == mean);
  CHECK_THROWS_AS(parse_pooling("median"), ParameterError);
}

TEST_CASE("direct forecast") {
  TiMaeModel<float> model(small_config(32), 6);
  const auto hist = gaussian(3 * 24, 7);
  const auto out = direct_forecast(model, hist, 3, 24, 8);
  CHECK(out.size() == 3 * 8);
  CHECK(direct_forecast(model, hist, 3, 24, 8, 1) == out);
  CHECK_THROWS_AS(direct_forecast(model, hist, 3, 24, 0), ParameterError);
  CHECK_THROWS_AS(direct_forecast(model, hist, 2, 24, 8), DimensionError);

  // h = k masks exactly half of the window.
  CHECK(direct_forecast(model, std::span<const double>(hist).first(16), 1, 16, 16).size() == 16);

  // A zeroed output projection predicts its bias everywhere.
  auto& proj = model.projection();
  std::fill(proj.weight.data().begin(), proj.weight.data().end(), 0.0f);
  proj.bias.data()[0] = 0.25f;
  for (double v : direct_forecast(model, hist, 3, 24, 8)) CHECK(v == 0.25);
}

TEST_CASE("report") {
  EvalReport r;
  r.title = "t";
  EvalRow row{"synthetic", "direct", 100, "random", 0.75, 0.5, 0.25, "normalized", 1, ""};
  r.add(row);
  row.scale = "raw";
  r.add(row);
  CHECK_THROWS_AS(r.add(row), InvariantError);
  row.seed = 2;
  row.mse = -1;
  CHECK_THROWS_AS(r.add(row), InvariantError);
  CHECK(r.rows().size() == 2);
  CHECK(r.find("synthetic", "direct", "", "raw", 1) != nullptr);
  CHECK(r.find("synthetic", "direct", "", "raw", 9) == nullptr);
  const auto csv = r.to_csv();
  CHECK(csv.rfind("task,mode,horizon,strategy,ratio,mse,mae,scale,seed,cell\n", 0) == 0);
  CHECK(csv.find("synthetic,direct,100,random,0.75,0.5,0.25,normalized,1,\n") != std::string::npos);
  const auto md = r.to_markdown();
  CHECK(md.find("| - | synthetic | direct | 100 | random | 0.75 | normalized | 1 | 0.5000 | 0.2500 |") !=
        std::string::npos);
  CHECK(r.to_long_csv().find("random@0.75,synthetic/direct/raw/seed1,mse,0.5") != std::string::npos);

  EvalReport other;
  EvalRow cell_row{"synthetic", "direct", 100, "random", 0.75, 0.5, 0.25, "normalized", 1, "a,b"};
  other.add(cell_row);
  r.merge(other);
  CHECK(r.rows().size() == 3);
  CHECK(r.to_csv().find("\"a,b\"") != std::string::npos);
}

TEST_CASE("ablation axes") {
  const auto ratio = default_axis("mask_ratio");
  CHECK(ratio.values.size() == 5);
  CHECK(default_axis("strategy").values.size() == 4);
  CHECK_THROWS_AS(default_axis("learning_rate"), ParameterError);
  const std::vector<AblationAxis> bad{{"strategy", {"spiral"}}};
  CHECK_THROWS_AS(validate_axes(bad), ParameterError);
  const std::vector<AblationAxis> twice{{"norm", {"pre"}}, {"norm", {"post"}}};
  CHECK_THROWS_AS(validate_axes(twice), ParameterError);
  ExperimentConfig e;
  apply_axis(e, "mask_ratio", "0.3");
  CHECK(e.model.mask_ratio == 0.3);
  apply_axis(e, "encoder_pe", "off");
  CHECK_FALSE(e.model.use_encoder_pe);
  CHECK_THROWS_AS(apply_axis(e, "mask_ratio", "0.31"), ParameterError);
}

TEST_CASE("a one-cell ablation reproduces a plain run exactly") {
  auto base = tiny_experiment(4);
  const std::vector<AblationAxis> axes{{"strategy", {"periodic"}}};
  const auto matrix = ablation_matrix(base, axes);
  auto plain = base;
  plain.train.strategy = MaskStrategy::periodic;
  plain.cell = "strategy=periodic";
  const auto run = run_experiment(plain);
  CHECK(matrix.to_csv() == run.report.to_csv());
  CHECK(run.direct.origins > 0);
  CHECK(run.report.rows().size() == 6);

  // Parallel cells give the same report as serial ones.
  const std::vector<AblationAxis> two{{"norm", {"pre", "post"}}};
  CHECK(ablation_matrix(base, two, false, 2).to_csv() == ablation_matrix(base, two, false, 1).to_csv());
  const std::vector<AblationAxis> grid{{"norm", {"pre", "post"}}, {"decoder_pe", {"on", "off"}}};
  const auto fact = ablation_matrix(base, grid, true);
  CHECK(fact.rows().size() == 4 * 6);
  CHECK(fact.find("synthetic", "direct", "norm=post;decoder_pe=off", "raw", 4) != nullptr);
}

TEST_CASE("transfer study cells") {
  auto base = tiny_experiment(2);
  TiMaeModel<float> model(base.model, 2);
  TransferConfig tc;
  tc.base = base;
  tc.test_specs = default_transfer_specs();
  tc.history = 24;
  tc.horizon = 24;
  tc.eval_stride = 200;
  const auto rep = transferability_study(tc, model);
  CHECK(rep.rows().size() == 8);
  CHECK(rep.find("transfer", "direct", "alpha=300,beta=3", "normalized", 2) != nullptr);
  CHECK(rep.find("transfer", "direct", "alpha=600,beta=100", "raw", 2) != nullptr);
}

TEST_CASE("ridge and fine-tune forecasting on a dataset") {
  const auto e = tiny_experiment(3);
  const auto data = synthetic_dataset(e);
  TiMaeModel<float> model(e.model, 3);
  const auto origins = forecast_origins(data.splits.test.begin, data.splits.test.end, 32, 8, 10);
  const auto r = ridge_forecast(model, data, origins, 8, 1, Pooling::mean, 4);
  CHECK(r.predictions.size() == origins.size() * 8);
  CHECK(r.scores.origins == origins.size());
  CHECK(std::find(kRidgeAlphaGrid.begin(), kRidgeAlphaGrid.end(), r.probe.alpha) != kRidgeAlphaGrid.end());

  FinetuneConfig fc;
  fc.epochs = 2;
  const auto f = finetune_forecast_eval(model, data, origins, 8, 1, fc, 4);
  CHECK(f.predictions.size() == origins.size() * 8);
  CHECK(f.scores.mse_raw >= 0);
}

TEST_CASE("run config text") {
  RunConfig c;
  c.parse("# comment\nseed = 7\nmodel.d_model = 32\ntrain.lr = 0.002\ndata.split = 7:1:2\neval.mode = ridge\n");
  CHECK(c.train.seed == 7);
  CHECK(c.model.d_model == 32);
  CHECK(c.train.lr == 0.002);
  CHECK(c.eval.mode == "ridge");
  RunConfig d;
  d.parse(c.to_text());
  CHECK(d.to_text() == c.to_text());
  CHECK(d.model == c.model);

  try {
    c.parse("model.d_model = 32\nmodel.wingspan = 3\n");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(c.set("eval.mode", "psychic"), ConfigError);
  CHECK_THROWS_AS(c.set("lr", "1"), ConfigError);
  CHECK_THROWS_AS(c.set("train.epochs", "many"), ConfigError);
  RunConfig v;
  v.data.target_channels = 2;
  CHECK_THROWS_AS(v.validate(), ConfigError);
}
