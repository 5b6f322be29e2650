#include "timae/evaluation.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

#include "parse_util.hpp"
#include "timae/error.hpp"

namespace timae {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const Mat>;

// ---------------------------------------------------------------------------
// Metrics

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size())
    throw DimensionError(std::string(what) + " of " + std::to_string(a.size()) + " predictions against " +
                         std::to_string(b.size()) + " targets");
  if (a.empty()) throw ParameterError(std::string(what) + " of empty arrays");
}

}  // namespace

double mse(std::span<const double> pred, std::span<const double> target) {
  check_pair(pred, target, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

double mae(std::span<const double> pred, std::span<const double> target) {
  check_pair(pred, target, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------
// Forecasting

std::vector<double> direct_forecast(const TiMaeModel<float>& model, std::span<const double> histories,
                                    std::size_t count, std::size_t h, std::size_t k,
                                    std::size_t micro_batch) {
  if (k == 0) throw ParameterError("direct forecast horizon k must be at least 1");
  if (h == 0) throw ParameterError("direct forecast needs at least one history step");
  if (micro_batch == 0) throw ParameterError("micro batch must be positive");
  const auto& c = model.config();
  const std::size_t m = c.in_channels, n = c.out_channels, L = h + k;
  if (histories.size() != count * h * m)
    throw DimensionError("direct forecast expects " + std::to_string(count) + " histories of " +
                         std::to_string(h) + "x" + std::to_string(m) + " values, got " +
                         std::to_string(histories.size()));
  NoGradGuard no_grad;
  const MaskSpec mask = tail_mask(L, k);
  std::vector<double> out;
  out.reserve(count * k * n);
  std::vector<double> buf;
  for (std::size_t lo = 0; lo < count; lo += micro_batch) {
    const std::size_t B = std::min(micro_batch, count - lo);
    buf.assign(B * L * m, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      const double* src = histories.data() + (lo + b) * h * m;
      double* dst = buf.data() + b * L * m;
      std::copy(src, src + h * m, dst);
      for (std::size_t t = h; t < L; ++t) std::copy(src + (h - 1) * m, src + h * m, dst + t * m);
    }
    const auto y = model.reconstruct(batch_tensor<float>(buf, B, L, m), std::span<const MaskSpec>(&mask, 1));
    const auto& v = y.values();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = h; t < L; ++t)
        for (std::size_t j = 0; j < n; ++j) out.push_back(v[(b * L + t) * n + j]);
  }
  return out;
}

std::vector<double> last_value_forecast(std::span<const double> histories, std::size_t count,
                                        std::size_t h, std::size_t m, std::size_t k, std::size_t n) {
  if (h == 0 || k == 0) throw ParameterError("last-value forecast needs h >= 1 and k >= 1");
  if (n == 0 || n > m) throw DimensionError("forecast channels must lie in [1, m]");
  if (histories.size() != count * h * m) throw DimensionError("history buffer shape mismatch");
  std::vector<double> out;
  out.reserve(count * k * n);
  for (std::size_t b = 0; b < count; ++b) {
    const double* last = histories.data() + (b * h + h - 1) * m;
    for (std::size_t t = 0; t < k; ++t)
      for (std::size_t j = m - n; j < m; ++j) out.push_back(last[j]);
  }
  return out;
}

std::vector<double> seasonal_naive_forecast(const TimeSeries& series, std::size_t origin,
                                            std::size_t period, std::size_t k, std::size_t n) {
  if (period == 0) throw ParameterError("seasonal period must be positive");
  if (k == 0) throw ParameterError("seasonal forecast horizon must be positive");
  const std::size_t m = series.channels();
  if (n == 0 || n > m) throw DimensionError("forecast channels must lie in [1, m]");
  if (origin < period)
    throw ParameterError("seasonal forecast at origin " + std::to_string(origin) +
                         " needs a full period of history (" + std::to_string(period) + ")");
  std::vector<double> out;
  out.reserve(k * n);
  for (std::size_t j = 0; j < k; ++j) {
    // Latest observed step with the same phase: go back whole periods.
    const std::size_t back = period * (j / period + 1);
    for (std::size_t c = m - n; c < m; ++c) out.push_back(series.at(origin + j - back, c));
  }
  return out;
}

double synthetic_period(const SyntheticSpec& spec) {
  spec.validate();
  const double per_unit = static_cast<double>(spec.length - 1) / (spec.t_end - spec.t_begin);
  return 8.0 * std::numbers::pi / spec.alpha * per_unit;
}

// ---------------------------------------------------------------------------
// Ridge

std::vector<double> RidgeProbe::predict(std::span<const double> x, std::size_t rows) const {
  if (!fitted) throw ContractError("ridge probe used before fitting");
  if (x.size() != rows * in_dim)
    throw DimensionError("ridge probe expects " + std::to_string(in_dim) + " features per row");
  std::vector<double> out(rows * out_dim);
  Eigen::Map<Mat>(out.data(), static_cast<long>(rows), static_cast<long>(out_dim)) =
      ConstMap(x.data(), static_cast<long>(rows), static_cast<long>(in_dim)) *
      ConstMap(weights.data(), static_cast<long>(in_dim), static_cast<long>(out_dim));
  return out;
}

RidgeProbe ridge_solve(std::span<const double> x, std::size_t rows, std::size_t in_dim,
                       std::span<const double> y, std::size_t out_dim, double alpha) {
  if (rows < 1 || in_dim < 1 || out_dim < 1) throw DimensionError("ridge needs non-empty X and Y");
  if (x.size() != rows * in_dim || y.size() != rows * out_dim)
    throw DimensionError("ridge inputs do not match [" + std::to_string(rows) + " x " +
                         std::to_string(in_dim) + "] and [" + std::to_string(rows) + " x " +
                         std::to_string(out_dim) + "]");
  if (!(alpha >= 0) || !std::isfinite(alpha)) throw ParameterError("ridge alpha must be >= 0");
  const long N = static_cast<long>(rows), D = static_cast<long>(in_dim), K = static_cast<long>(out_dim);
  const ConstMap X(x.data(), N, D);
  const ConstMap Y(y.data(), N, K);
  const double inv_n = 1.0 / static_cast<double>(rows);

  Mat W;
  if (N >= D) {
    Mat A = (X.transpose() * X) * inv_n;
    A.diagonal().array() += alpha;
    Eigen::LDLT<Mat> solver(A);
    if (solver.info() != Eigen::Success) throw SolverError("ridge normal equations could not be factored");
    W = solver.solve((X.transpose() * Y) * inv_n);
  } else {
    // W = X^T (X X^T + N alpha I)^-1 Y, the same minimizer via the N x N system.
    Mat G = X * X.transpose();
    G.diagonal().array() += alpha * static_cast<double>(rows);
    Eigen::LDLT<Mat> solver(G);
    if (solver.info() != Eigen::Success) throw SolverError("ridge dual system could not be factored");
    W = X.transpose() * solver.solve(Y);
  }
  if (!W.allFinite()) throw SolverError("ridge solution is not finite (alpha " + detail::format_double(alpha) + ")");

  RidgeProbe p;
  p.alpha = alpha;
  p.in_dim = in_dim;
  p.out_dim = out_dim;
  p.weights.assign(W.data(), W.data() + W.size());
  p.fitted = true;
  return p;
}

RidgeProbe ridge_fit(std::span<const double> x_train, std::size_t n_train,
                     std::span<const double> y_train, std::span<const double> x_val,
                     std::size_t n_val, std::span<const double> y_val, std::size_t in_dim,
                     std::size_t out_dim, std::span<const double> grid) {
  if (grid.empty()) throw ParameterError("ridge alpha grid is empty");
  if (n_train < 2) throw ParameterError("ridge needs at least two training rows");
  if (n_val < 1) throw ParameterError("ridge alpha selection needs validation rows");
  if (x_val.size() != n_val * in_dim || y_val.size() != n_val * out_dim)
    throw DimensionError("ridge validation inputs have the wrong shape");
  std::vector<double> alphas(grid.begin(), grid.end());
  std::sort(alphas.begin(), alphas.end());
  RidgeProbe best;
  double best_mse = std::numeric_limits<double>::infinity();
  for (double a : alphas) {
    RidgeProbe p = ridge_solve(x_train, n_train, in_dim, y_train, out_dim, a);
    const double v = mse(p.predict(x_val, n_val), y_val);
    if (!std::isfinite(v)) throw SolverError("ridge validation error is not finite");
    // Strict comparison over ascending alphas keeps the smaller alpha on ties.
    if (v < best_mse) {
      best_mse = v;
      best = std::move(p);
    }
  }
  best.validation_mse = best_mse;
  return best;
}

// ---------------------------------------------------------------------------
// Representations

Pooling parse_pooling(const std::string& name) {
  if (name == "mean") return Pooling::mean;
  if (name == "max") return Pooling::max;
  if (name == "none") return Pooling::none;
  throw ParameterError("unknown pooling: " + name);
}

std::string to_string(Pooling p) {
  switch (p) {
    case Pooling::mean: return "mean";
    case Pooling::max: return "max";
    case Pooling::none: return "none";
  }
  return "mean";
}

std::vector<double> extract_representations(const TiMaeModel<float>& model,
                                            std::span<const double> windows, std::size_t count,
                                            Pooling pooling, std::size_t micro_batch) {
  const auto& c = model.config();
  if (count == 0) return {};
  if (micro_batch == 0) throw ParameterError("micro batch must be positive");
  const std::size_t m = c.in_channels;
  if (windows.size() % (count * m) != 0)
    throw DimensionError("window buffer does not split into " + std::to_string(count) + " windows of " +
                         std::to_string(m) + " channels");
  const std::size_t L = windows.size() / (count * m);
  if (L == 0) throw DimensionError("windows are empty");
  const std::size_t d = c.d_model;
  NoGradGuard no_grad;
  std::vector<double> out;
  out.reserve(count * (pooling == Pooling::none ? L * d : d));
  for (std::size_t lo = 0; lo < count; lo += micro_batch) {
    const std::size_t B = std::min(micro_batch, count - lo);
    const auto z = model.encode_full(batch_tensor<float>(windows.subspan(lo * L * m, B * L * m), B, L, m));
    const auto& v = z.values();
    for (std::size_t b = 0; b < B; ++b) {
      const float* base = v.data() + b * L * d;
      if (pooling == Pooling::none) {
        out.insert(out.end(), base, base + L * d);
        continue;
      }
      for (std::size_t j = 0; j < d; ++j) {
        double acc = pooling == Pooling::mean ? 0.0 : -std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < L; ++t) {
          const double x = base[t * d + j];
          acc = pooling == Pooling::mean ? acc + x : std::max(acc, x);
        }
        out.push_back(pooling == Pooling::mean ? acc / static_cast<double>(L) : acc);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Logistic probe

namespace {

std::size_t class_count(std::span<const int> labels) {
  int top = -1;
  for (int y : labels) {
    if (y < 0) throw ParameterError("class labels must be non-negative");
    top = std::max(top, y);
  }
  return static_cast<std::size_t>(top + 1);
}

Mat standardized(const LogisticProbe& p, std::span<const double> x, std::size_t rows) {
  if (x.size() != rows * p.dim)
    throw DimensionError("probe expects " + std::to_string(p.dim) + " features per row");
  Mat out(static_cast<long>(rows), static_cast<long>(p.dim) + 1);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < p.dim; ++j)
      out(static_cast<long>(r), static_cast<long>(j)) = (x[r * p.dim + j] - p.mean[j]) / p.scale[j];
    out(static_cast<long>(r), static_cast<long>(p.dim)) = 1.0;
  }
  return out;
}

void softmax_rows(Mat& z) {
  for (long r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

double mean_log_loss(const LogisticProbe& p, std::span<const double> x, std::size_t rows,
                     std::span<const int> labels) {
  auto s = p.decision_function(x, rows);
  Mat z = Eigen::Map<Mat>(s.data(), static_cast<long>(rows), static_cast<long>(p.classes));
  softmax_rows(z);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto y = static_cast<std::size_t>(labels[r]);
    const double q = y < p.classes ? z(static_cast<long>(r), static_cast<long>(y)) : 0.0;
    loss -= std::log(std::max(q, 1e-300));
  }
  return loss / static_cast<double>(rows);
}

double accuracy(std::span<const int> pred, std::span<const int> truth) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

}  // namespace

std::vector<double> LogisticProbe::decision_function(std::span<const double> x, std::size_t rows) const {
  const Mat xs = standardized(*this, x, rows);
  std::vector<double> out(rows * classes);
  Eigen::Map<Mat>(out.data(), static_cast<long>(rows), static_cast<long>(classes)) =
      xs * Eigen::Map<const Mat>(weights.data(), static_cast<long>(dim) + 1, static_cast<long>(classes));
  return out;
}

std::vector<int> LogisticProbe::predict(std::span<const double> x, std::size_t rows) const {
  const auto s = decision_function(x, rows);
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = s.data() + r * classes;
    out[r] = static_cast<int>(std::max_element(row, row + classes) - row);
  }
  return out;
}

LogisticProbe fit_logistic(std::span<const double> x, std::size_t rows, std::size_t dim,
                           std::span<const int> labels, double lambda, std::size_t iterations,
                           double step) {
  if (rows == 0 || dim == 0) throw DimensionError("probe needs a non-empty feature matrix");
  if (x.size() != rows * dim) throw DimensionError("probe feature buffer shape mismatch");
  if (labels.size() != rows) throw DimensionError("probe needs one label per row");
  if (!(lambda >= 0)) throw ParameterError("probe lambda must be >= 0");
  if (!(step > 0)) throw ParameterError("probe step must be positive");
  const std::size_t C = class_count(labels);
  {
    std::vector<bool> seen(C, false);
    std::size_t distinct = 0;
    for (int y : labels)
      if (!seen[static_cast<std::size_t>(y)]) seen[static_cast<std::size_t>(y)] = true, ++distinct;
    if (distinct < 2) throw ParameterError("probe training set holds a single class");
  }

  LogisticProbe p;
  p.dim = dim;
  p.classes = C;
  p.lambda = lambda;
  p.mean.assign(dim, 0.0);
  p.scale.assign(dim, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < dim; ++j) p.mean[j] += x[r * dim + j];
  for (auto& m : p.mean) m /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < dim; ++j) {
      const double e = x[r * dim + j] - p.mean[j];
      p.scale[j] += e * e;
    }
  for (auto& s : p.scale) {
    s = std::sqrt(s / static_cast<double>(rows));
    if (!(s > 1e-12)) s = 1.0;
  }

  const Mat X = standardized(p, x, rows);
  const long N = X.rows(), D1 = X.cols(), K = static_cast<long>(C);
  Mat Y = Mat::Zero(N, K);
  for (long r = 0; r < N; ++r) Y(r, labels[static_cast<std::size_t>(r)]) = 1.0;

  // Curvature bound of the mean softmax cross-entropy: lambda_max(X^T X / N) / 2.
  Eigen::VectorXd v = Eigen::VectorXd::Ones(D1) / std::sqrt(static_cast<double>(D1));
  double top = 0.0;
  for (int it = 0; it < 200; ++it) {
    Eigen::VectorXd w = X.transpose() * (X * v) / static_cast<double>(N);
    const double norm = w.norm();
    if (norm == 0) break;
    if (std::abs(norm - top) <= 1e-12 * norm) {
      top = norm;
      break;
    }
    top = norm;
    v = w / norm;
  }
  const double lr = step / (0.5 * top * 1.05 + lambda);

  Mat W = Mat::Zero(D1, K);
  Mat P;
  for (std::size_t it = 0; it < iterations; ++it) {
    P = X * W;
    softmax_rows(P);
    Mat G = X.transpose() * (P - Y) / static_cast<double>(N);
    G.topRows(D1 - 1) += lambda * W.topRows(D1 - 1);
    W -= lr * G;
  }
  if (!W.allFinite()) throw SolverError("logistic probe diverged");
  p.weights.assign(W.data(), W.data() + W.size());
  return p;
}

ProbeResult classify_probe(std::span<const double> train_x, std::span<const int> train_labels,
                           std::span<const double> test_x, std::span<const int> test_labels,
                           std::size_t dim, const ProbeConfig& cfg) {
  if (dim == 0) throw DimensionError("probe feature width must be positive");
  if (cfg.lambdas.empty()) throw ParameterError("probe lambda grid is empty");
  const std::size_t n_train = train_labels.size();
  if (train_x.size() != n_train * dim) throw DimensionError("probe train features do not match labels");
  if (test_x.size() % dim != 0) throw DimensionError("probe test features are not a multiple of dim");
  const std::size_t n_test = test_x.size() / dim;
  if (!test_labels.empty() && test_labels.size() != n_test)
    throw DimensionError("probe test labels do not match test rows");

  double lambda = cfg.lambdas.front();
  const std::size_t n_val = static_cast<std::size_t>(std::floor(cfg.val_fraction * static_cast<double>(n_train)));
  if (cfg.lambdas.size() > 1 && n_val >= 1 && n_train - n_val >= 2) {
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, "probe-split"));
    std::shuffle(order.begin(), order.end(), rng.engine());
    std::vector<double> fx, vx;
    std::vector<int> fy, vy;
    for (std::size_t i = 0; i < n_train; ++i) {
      const std::size_t r = order[i];
      auto& xs = i < n_val ? vx : fx;
      auto& ys = i < n_val ? vy : fy;
      xs.insert(xs.end(), train_x.begin() + static_cast<long>(r * dim),
                train_x.begin() + static_cast<long>((r + 1) * dim));
      ys.push_back(train_labels[r]);
    }
    bool usable = false;
    for (int y : fy) usable |= y != fy.front();
    if (usable) {
      double best = std::numeric_limits<double>::infinity();
      for (double l : cfg.lambdas) {
        const auto probe = fit_logistic(fx, fy.size(), dim, fy, l, cfg.iterations, cfg.step);
        const double loss = mean_log_loss(probe, vx, vy.size(), vy);
        if (loss < best) {
          best = loss;
          lambda = l;
        }
      }
    }
  }

  ProbeResult out;
  out.probe = fit_logistic(train_x, n_train, dim, train_labels, lambda, cfg.iterations, cfg.step);
  out.predictions = n_test ? out.probe.predict(test_x, n_test) : std::vector<int>{};
  out.accuracy = test_labels.empty() || n_test == 0 ? std::numeric_limits<double>::quiet_NaN()
                                                     : accuracy(out.predictions, test_labels);
  return out;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

bool same_key(const EvalRow& a, const EvalRow& b) {
  return a.task == b.task && a.mode == b.mode && a.horizon == b.horizon && a.strategy == b.strategy &&
         a.ratio == b.ratio && a.scale == b.scale && a.seed == b.seed && a.cell == b.cell;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return detail::format_double(v);
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

}  // namespace

void EvalReport::add(EvalRow row) {
  if (!(row.mse >= 0) || !(row.mae >= 0))
    throw InvariantError("report metrics must be non-negative, got mse " + detail::format_double(row.mse) +
                         " mae " + detail::format_double(row.mae));
  for (const auto& r : rows_)
    if (same_key(r, row))
      throw InvariantError("duplicate report row: " + row.task + "/" + row.mode + "/" + row.cell + "/" +
                           row.scale + "/seed " + std::to_string(row.seed));
  rows_.push_back(std::move(row));
}

void EvalReport::merge(const EvalReport& other) {
  for (const auto& r : other.rows_) add(r);
  for (const auto& n : other.notes)
    if (std::find(notes.begin(), notes.end(), n) == notes.end()) notes.push_back(n);
}

const EvalRow* EvalReport::find(const std::string& task, const std::string& mode, const std::string& cell,
                                const std::string& scale, std::uint64_t seed) const {
  for (const auto& r : rows_)
    if (r.task == task && r.mode == mode && r.cell == cell && r.scale == scale && r.seed == seed) return &r;
  return nullptr;
}

std::string EvalReport::to_csv() const {
  std::string out = "task,mode,horizon,strategy,ratio,mse,mae,scale,seed,cell\n";
  for (const auto& r : rows_) {
    out += csv_field(r.task) + ',' + csv_field(r.mode) + ',' + std::to_string(r.horizon) + ',' +
           csv_field(r.strategy) + ',' + detail::format_double(r.ratio) + ',' + detail::format_double(r.mse) +
           ',' + detail::format_double(r.mae) + ',' + csv_field(r.scale) + ',' + std::to_string(r.seed) +
           ',' + csv_field(r.cell) + '\n';
  }
  return out;
}

std::string EvalReport::to_markdown() const {
  std::string out;
  if (!title.empty()) out += "## " + title + "\n\n";
  for (const auto& n : notes) out += "> " + n + "\n";
  if (!notes.empty()) out += "\n";
  out += "| cell | task | mode | horizon | strategy | ratio | scale | seed | MSE | MAE |\n";
  out += "|---|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows_) {
    out += "| " + (r.cell.empty() ? std::string("-") : r.cell) + " | " + r.task + " | " + r.mode + " | " +
           std::to_string(r.horizon) + " | " + r.strategy + " | " + fixed(r.ratio, 2) + " | " + r.scale +
           " | " + std::to_string(r.seed) + " | " + fixed(r.mse, 4) + " | " + fixed(r.mae, 4) + " |\n";
  }
  return out;
}

std::string EvalReport::to_long_csv() const {
  std::string out = "x,series,metric,value\n";
  for (const auto& r : rows_) {
    const std::string x = r.cell.empty() ? r.strategy + "@" + detail::format_double(r.ratio) : r.cell;
    const std::string series = r.task + "/" + r.mode + "/" + r.scale + "/seed" + std::to_string(r.seed);
    out += csv_field(x) + ',' + csv_field(series) + ",mse," + detail::format_double(r.mse) + '\n';
    out += csv_field(x) + ',' + csv_field(series) + ",mae," + detail::format_double(r.mae) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Datasets and forecast scoring

Dataset prepare_dataset(std::string name, TimeSeries raw, const SplitSpec& split_spec,
                        std::size_t min_split, bool normalize) {
  Dataset d;
  d.name = std::move(name);
  d.splits = split(raw.length(), split_spec, min_split);
  d.normalizer = normalize ? Normalizer::fit(raw.slice(d.splits.train.begin, d.splits.train.end))
                           : Normalizer::identity(raw.channels());
  d.normalized = d.normalizer.apply(raw);
  d.raw = std::move(raw);
  return d;
}

std::vector<std::size_t> forecast_origins(std::size_t begin, std::size_t end, std::size_t h,
                                          std::size_t k, std::size_t stride) {
  if (stride == 0) throw ParameterError("forecast origin stride must be positive");
  if (k == 0) throw ParameterError("forecast horizon must be positive");
  std::vector<std::size_t> out;
  for (std::size_t t = std::max(begin, h); t + k <= end; t += stride) out.push_back(t);
  return out;
}

std::vector<double> history_block(const TimeSeries& series, std::span<const std::size_t> origins,
                                  std::size_t h) {
  const std::size_t m = series.channels();
  std::vector<double> out;
  out.reserve(origins.size() * h * m);
  for (auto t : origins) {
    if (t < h || t > series.length())
      throw IndexError("origin " + std::to_string(t) + " lacks " + std::to_string(h) + " history steps");
    out.insert(out.end(), series.values.begin() + static_cast<long>((t - h) * m),
               series.values.begin() + static_cast<long>(t * m));
  }
  return out;
}

std::vector<double> target_block(const TimeSeries& series, std::span<const std::size_t> origins,
                                 std::size_t k, std::size_t n) {
  const std::size_t m = series.channels();
  if (n == 0 || n > m) throw DimensionError("target channels must lie in [1, m]");
  std::vector<double> out;
  out.reserve(origins.size() * k * n);
  for (auto t : origins) {
    if (t + k > series.length())
      throw IndexError("origin " + std::to_string(t) + " + horizon runs past the series end");
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t c = m - n; c < m; ++c) out.push_back(series.at(t + j, c));
  }
  return out;
}

ForecastScores score_forecast(const Dataset& data, std::span<const std::size_t> origins,
                              std::size_t k, std::size_t n, std::span<const double> pred) {
  if (origins.empty()) throw ParameterError("no forecast origins to score");
  const std::size_t m = data.normalized.channels();
  ForecastScores s;
  s.origins = origins.size();
  const auto truth = target_block(data.normalized, origins, k, n);
  s.mse_normalized = mse(pred, truth);
  s.mae_normalized = mae(pred, truth);
  std::vector<double> raw_pred(pred.begin(), pred.end());
  data.normalizer.inverse(raw_pred, n, m - n);
  const auto raw_truth = target_block(data.raw, origins, k, n);
  s.mse_raw = mse(raw_pred, raw_truth);
  s.mae_raw = mae(raw_pred, raw_truth);
  return s;
}

ForecastScores evaluate_forecast(const Dataset& data, const TiMaeModel<float>* model,
                                 ForecastMethod method, std::span<const std::size_t> origins,
                                 std::size_t h, std::size_t k, std::size_t n, std::size_t period) {
  const auto& z = data.normalized;
  const std::size_t m = z.channels();
  std::vector<double> pred;
  switch (method) {
    case ForecastMethod::direct: {
      if (!model) throw ContractError("direct forecast needs a model");
      if (model->config().in_channels != m || model->config().out_channels != n)
        throw ConfigError("model channels (" + std::to_string(model->config().in_channels) + " -> " +
                          std::to_string(model->config().out_channels) + ") do not match the data (" +
                          std::to_string(m) + " -> " + std::to_string(n) + ")");
      pred = direct_forecast(*model, history_block(z, origins, h), origins.size(), h, k);
      break;
    }
    case ForecastMethod::last_value:
      pred = last_value_forecast(history_block(z, origins, h), origins.size(), h, m, k, n);
      break;
    case ForecastMethod::seasonal_naive:
      for (auto t : origins) {
        const auto p = seasonal_naive_forecast(z, t, period, k, n);
        pred.insert(pred.end(), p.begin(), p.end());
      }
      break;
  }
  return score_forecast(data, origins, k, n, pred);
}

namespace {

struct OriginSet {
  std::vector<std::size_t> origins;
  std::vector<double> inputs;   // [N x h x m]
  std::vector<double> targets;  // [N x k x n]
};

OriginSet split_origins(const Dataset& data, Range r, std::size_t h, std::size_t k, std::size_t n,
                        std::size_t stride) {
  OriginSet s;
  // Keep the whole window (history and target) inside the block.
  if (r.size() >= h + k) s.origins = forecast_origins(r.begin + h, r.end, h, k, stride);
  s.inputs = history_block(data.normalized, s.origins, h);
  s.targets = target_block(data.normalized, s.origins, k, n);
  return s;
}

}  // namespace

ProbeForecast ridge_forecast(const TiMaeModel<float>& model, const Dataset& data,
                             std::span<const std::size_t> test_origins, std::size_t k,
                             std::size_t n, Pooling pooling, std::size_t stride) {
  const auto& c = model.config();
  const std::size_t h = c.window_len, m = c.in_channels;
  if (m != data.normalized.channels()) throw ConfigError("model input channels do not match the data");
  const auto train = split_origins(data, data.splits.train, h, k, n, stride);
  const auto val = split_origins(data, data.splits.val, h, k, n, stride);
  if (train.origins.size() < 2 || val.origins.empty())
    throw ConfigError("ridge probe needs train and validation blocks of at least " + std::to_string(h + k) +
                      " steps");
  const auto xtr = extract_representations(model, train.inputs, train.origins.size(), pooling);
  const auto xva = extract_representations(model, val.inputs, val.origins.size(), pooling);
  const std::size_t D = xtr.size() / train.origins.size();

  ProbeForecast out;
  out.probe = ridge_fit(xtr, train.origins.size(), train.targets, xva, val.origins.size(), val.targets, D,
                        k * n);
  const auto xte = extract_representations(model, history_block(data.normalized, test_origins, h),
                                           test_origins.size(), pooling);
  out.predictions = out.probe.predict(xte, test_origins.size());
  out.scores = score_forecast(data, test_origins, k, n, out.predictions);
  return out;
}

FinetuneForecast finetune_forecast_eval(const TiMaeModel<float>& model, const Dataset& data,
                                        std::span<const std::size_t> test_origins, std::size_t k,
                                        std::size_t n, const FinetuneConfig& cfg, std::size_t stride) {
  const auto& c = model.config();
  if (n != c.out_channels) throw ConfigError("fine-tune channels do not match the model's output channels");
  const auto& tr = data.splits.train;
  WindowSet train(data.normalized.slice(tr.begin, tr.end), {c.window_len, stride, k}, n);
  FinetuneForecast out;
  out.result = finetune(model, train, cfg);
  const auto inputs = history_block(data.normalized, test_origins, c.window_len);
  out.predictions = finetune_forecast(model, out.result.head, inputs, test_origins.size());
  out.scores = score_forecast(data, test_origins, k, n, out.predictions);
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

Dataset synthetic_dataset(const ExperimentConfig& cfg) {
  return prepare_dataset("synthetic", generate_synthetic(cfg.synthetic, derive_seed(cfg.train.seed, "data")),
                         cfg.split, cfg.model.window_len);
}

namespace {

void add_scores(EvalReport& report, const ExperimentConfig& cfg, const std::string& mode,
                const ForecastScores& s) {
  EvalRow row;
  row.task = cfg.task;
  row.mode = mode;
  row.horizon = cfg.horizon;
  row.strategy = to_string(cfg.train.strategy);
  row.ratio = cfg.model.mask_ratio;
  row.seed = cfg.train.seed;
  row.cell = cfg.cell;
  row.scale = "normalized";
  row.mse = s.mse_normalized;
  row.mae = s.mae_normalized;
  report.add(row);
  row.scale = "raw";
  row.mse = s.mse_raw;
  row.mae = s.mae_raw;
  report.add(row);
}

const char* kSyntheticNote =
    "Synthetic benchmark (cosine mixture with linear trend) stands in for the real datasets; "
    "values are MSE/MAE on the test block.";

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const EpochCallback& on_epoch) {
  cfg.model.validate();
  cfg.train.validate();
  if (cfg.model.in_channels != 1 || cfg.model.out_channels != 1)
    throw ConfigError("the synthetic benchmark is univariate (in_channels = out_channels = 1)");
  const Dataset data = synthetic_dataset(cfg);
  const auto& sp = data.splits;
  const std::size_t L = cfg.model.window_len;
  WindowSet train(data.normalized.slice(sp.train.begin, sp.train.end), {L, cfg.train.window_stride, 0});
  WindowSet val(data.normalized.slice(sp.val.begin, sp.val.end), {L, cfg.train.val_stride, 0});

  ExperimentResult r{TiMaeModel<float>(cfg.model, cfg.train.seed), {}, {}, {}, {}, {}};
  r.log = pretrain(r.model, train, &val, cfg.train, on_epoch);

  const auto origins = forecast_origins(sp.test.begin, sp.test.end, cfg.history, cfg.horizon, cfg.eval_stride);
  if (origins.empty())
    throw ConfigError("test block of " + std::to_string(sp.test.size()) + " steps fits no forecast of " +
                      std::to_string(cfg.horizon));
  const auto period = static_cast<std::size_t>(std::llround(synthetic_period(cfg.synthetic)));
  r.direct = evaluate_forecast(data, &r.model, ForecastMethod::direct, origins, cfg.history, cfg.horizon, 1);
  r.last_value = evaluate_forecast(data, nullptr, ForecastMethod::last_value, origins, cfg.history, cfg.horizon, 1);
  r.seasonal = evaluate_forecast(data, nullptr, ForecastMethod::seasonal_naive, origins, cfg.history,
                                 cfg.horizon, 1, period);
  r.report.title = "Direct forecasting";
  r.report.notes.push_back(kSyntheticNote);
  add_scores(r.report, cfg, "direct", r.direct);
  add_scores(r.report, cfg, "last_value", r.last_value);
  add_scores(r.report, cfg, "seasonal_naive", r.seasonal);
  return r;
}

// ---------------------------------------------------------------------------
// Ablations

namespace {

const std::vector<std::pair<std::string, std::vector<std::string>>>& axis_grids() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> grids = {
      {"mask_ratio", {"0.30", "0.45", "0.60", "0.75", "0.90"}},
      {"strategy", {"random", "continuous", "split", "periodic"}},
      {"sampling_time", {"20", "25", "30", "35"}},
      {"augmentation", {"none", "scaling", "shifting", "jittering"}},
      {"norm", {"pre", "post"}},
      {"encoder_pe", {"on", "off"}},
      {"decoder_pe", {"on", "off"}},
  };
  return grids;
}

const std::vector<std::string>& grid_for(const std::string& axis) {
  for (const auto& [name, values] : axis_grids())
    if (name == axis) return values;
  throw ParameterError("unknown ablation axis: " + axis);
}

bool in_grid(const std::string& axis, const std::string& value) {
  const auto& grid = grid_for(axis);
  if (axis == "mask_ratio") {
    double v = 0;
    try {
      std::size_t pos = 0;
      v = std::stod(value, &pos);
      if (pos != value.size()) return false;
    } catch (const std::exception&) {
      return false;
    }
    for (const auto& g : grid)
      if (std::abs(std::stod(g) - v) < 1e-9) return true;
    return false;
  }
  return std::find(grid.begin(), grid.end(), value) != grid.end();
}

struct Cell {
  std::string label;
  std::vector<std::pair<std::string, std::string>> settings;
};

std::vector<Cell> make_cells(std::span<const AblationAxis> axes, bool factorial) {
  std::vector<Cell> cells;
  if (factorial) {
    cells.push_back({});
    for (const auto& axis : axes) {
      std::vector<Cell> next;
      for (const auto& c : cells)
        for (const auto& v : axis.values) {
          Cell n = c;
          n.label += (n.label.empty() ? "" : ";") + axis.name + "=" + v;
          n.settings.emplace_back(axis.name, v);
          next.push_back(std::move(n));
        }
      cells = std::move(next);
    }
  } else {
    for (const auto& axis : axes)
      for (const auto& v : axis.values) cells.push_back({axis.name + "=" + v, {{axis.name, v}}});
  }
  return cells;
}

}  // namespace

AblationAxis default_axis(const std::string& name) { return {name, grid_for(name)}; }

void validate_axes(std::span<const AblationAxis> axes) {
  if (axes.empty()) throw ParameterError("ablation needs at least one axis");
  for (std::size_t i = 0; i < axes.size(); ++i) {
    const auto& a = axes[i];
    grid_for(a.name);
    if (a.values.empty()) throw ParameterError("ablation axis " + a.name + " has no values");
    for (std::size_t j = 0; j < i; ++j)
      if (axes[j].name == a.name) throw ParameterError("ablation axis " + a.name + " given twice");
    for (const auto& v : a.values)
      if (!in_grid(a.name, v)) throw ParameterError("unknown value '" + v + "' for ablation axis " + a.name);
  }
}

void apply_axis(ExperimentConfig& cfg, const std::string& axis, const std::string& value) {
  if (!in_grid(axis, value)) throw ParameterError("unknown value '" + value + "' for ablation axis " + axis);
  if (axis == "mask_ratio") cfg.model.mask_ratio = std::stod(value);
  else if (axis == "strategy") cfg.train.strategy = parse_mask_strategy(value);
  else if (axis == "sampling_time") cfg.train.sampling_time = std::stoul(value);
  else if (axis == "augmentation") cfg.train.augmentation = parse_augmentation(value);
  else if (axis == "norm") cfg.model.norm = parse_norm_placement(value);
  else if (axis == "encoder_pe") cfg.model.use_encoder_pe = value == "on";
  else if (axis == "decoder_pe") cfg.model.use_decoder_pe = value == "on";
}

EvalReport ablation_matrix(const ExperimentConfig& base, std::span<const AblationAxis> axes, bool factorial,
                           std::size_t jobs, const std::function<void(const std::string&)>& progress) {
  validate_axes(axes);
  const auto cells = make_cells(axes, factorial);
  std::vector<EvalReport> parts(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        ExperimentConfig cfg = base;
        for (const auto& [axis, value] : cells[i].settings) apply_axis(cfg, axis, value);
        cfg.cell = cells[i].label;
        parts[i] = run_experiment(cfg).report;
        if (progress) {
          std::lock_guard lock(progress_mutex);
          progress(cells[i].label);
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, cells.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  EvalReport report;
  std::string names;
  for (const auto& a : axes) names += (names.empty() ? "" : ", ") + a.name;
  report.title = "Ablation over " + names;
  report.notes.push_back(kSyntheticNote);
  for (const auto& p : parts) report.merge(p);
  return report;
}

// ---------------------------------------------------------------------------
// Transferability

std::vector<SyntheticSpec> default_transfer_specs() {
  std::vector<SyntheticSpec> specs;
  for (double beta : {3.0, 100.0})
    for (double alpha : {300.0, 600.0}) {
      SyntheticSpec s;
      s.alpha = alpha;
      s.beta = beta;
      specs.push_back(s);
    }
  return specs;
}

namespace {

std::string spec_label(const SyntheticSpec& s) {
  return "alpha=" + detail::format_double(s.alpha) + ",beta=" + detail::format_double(s.beta);
}

}  // namespace

EvalReport transferability_study(const TransferConfig& cfg, const TiMaeModel<float>& model) {
  if (cfg.test_specs.empty()) throw ParameterError("transfer study needs at least one test spec");
  if (cfg.horizon == 0 || cfg.history == 0) throw ParameterError("transfer study needs h >= 1 and k >= 1");
  EvalReport report;
  report.title = "Transferability";
  report.notes.push_back("Trained on " + spec_label(cfg.base.synthetic) +
                         "; each cell forecasts a fresh series z-scored with its own train-block statistics.");
  ExperimentConfig row_cfg = cfg.base;
  row_cfg.task = "transfer";
  row_cfg.horizon = cfg.horizon;
  for (std::size_t i = 0; i < cfg.test_specs.size(); ++i) {
    const auto& spec = cfg.test_specs[i];
    spec.validate();
    const auto seed = derive_seed(cfg.base.train.seed, "transfer-data-" + std::to_string(i));
    const Dataset data = prepare_dataset("transfer", generate_synthetic(spec, seed), cfg.base.split, 0);
    const auto origins = forecast_origins(0, data.raw.length(), cfg.history, cfg.horizon, cfg.eval_stride);
    if (origins.empty())
      throw ConfigError("series of " + std::to_string(data.raw.length()) + " steps fits no " +
                        std::to_string(cfg.history) + "+" + std::to_string(cfg.horizon) + " forecast");
    row_cfg.cell = spec_label(spec);
    add_scores(report, row_cfg, "direct",
               evaluate_forecast(data, &model, ForecastMethod::direct, origins, cfg.history, cfg.horizon, 1));
  }
  return report;
}

EvalReport transferability_study(const TransferConfig& cfg,
                                 const std::function<void(const std::string&)>& progress) {
  const ExperimentConfig& b = cfg.base;
  b.model.validate();
  b.train.validate();
  const Dataset data = synthetic_dataset(b);
  const auto& sp = data.splits;
  WindowSet train(data.normalized.slice(sp.train.begin, sp.train.end), {b.model.window_len, b.train.window_stride, 0});
  WindowSet val(data.normalized.slice(sp.val.begin, sp.val.end), {b.model.window_len, b.train.val_stride, 0});
  TiMaeModel<float> model(b.model, b.train.seed);
  pretrain(model, train, &val, b.train, [&](const EpochRecord& e) {
    if (progress) progress("epoch " + std::to_string(e.epoch));
  });
  return transferability_study(cfg, model);
}

}  // namespace timae
