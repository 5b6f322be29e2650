#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "timae/model.hpp"
#include "timae/tensor.hpp"

namespace timae {

/// Scalar-valued function of several 64-bit tensors.
using ScalarFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

struct GradCheckResult {
  std::string name;
  double max_relative_error = 0.0;  // worst over inputs and trials
  double tolerance = 0.0;
  int trials = 0;
  bool passed() const { return max_relative_error < tolerance; }
};

/// Compares autodiff gradients of `fn` at `inputs` against central finite
/// differences with step `h`. Returns the largest norm-wise relative error
/// ||g_auto - g_fd|| / max(||g_auto||, ||g_fd||, 1e-8) over all inputs.
double gradient_relative_error(const ScalarFn& fn, const std::vector<Tensor<double>>& inputs,
                               double h = 1e-5);

/// Finite-difference gradient of `fn` w.r.t. input `which` (forward values only).
std::vector<double> numeric_gradient(const ScalarFn& fn, const std::vector<Tensor<double>>& inputs,
                                     std::size_t which, double h = 1e-5);

/// Runs the per-op suite on random small inputs, `trials` draws per op.
std::vector<GradCheckResult> run_op_gradchecks(int trials = 20, std::uint64_t seed = 7,
                                               double tolerance = 1e-4);

struct ModelGradCheck {
  double global_relative_error = 0.0;  // over all parameters at once
  double worst_tensor_error = 0.0;
  std::string worst_tensor;
  std::size_t parameters = 0;
};

/// Masked-MSE gradient of a whole (small) 64-bit model against central
/// differences on every parameter, with one random mask per batch entry.
ModelGradCheck model_gradcheck(const ModelConfig& config, std::uint64_t seed,
                               MaskStrategy strategy = MaskStrategy::random, double h = 1e-5);

/// A model small enough for exhaustive finite differences.
ModelConfig tiny_model_config();

}  // namespace timae
