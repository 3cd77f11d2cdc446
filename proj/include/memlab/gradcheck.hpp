#pragma once

#include <functional>
#include <vector>

#include "memlab/rng.hpp"
#include "memlab/tensor.hpp"

namespace memlab {

/// A scalar objective over a list of input tensors, paired with its
/// analytic gradient. Non-scalar ops are reduced to a scalar through a
/// fixed random projection before checking.
struct DiffProblem {
  std::function<double(const std::vector<Tensor>&)> value;
  std::function<std::vector<Tensor>(const std::vector<Tensor>&)> gradient;
};

/// Max over all input coordinates of
///   |analytic - central_difference| / max(1, |analytic|)
/// using central differences with step h (h must lie in [1e-6, 1e-4]).
double finite_diff_check(const DiffProblem& problem, std::vector<Tensor> inputs, double h);

/// Ready-made projected check cases for the core ops.
struct GradCheckCase {
  DiffProblem problem;
  std::vector<Tensor> inputs;
};

GradCheckCase matmul_check_case(long m, long k, long n, RngState& rng);
GradCheckCase softmax_check_case(long m, long n, RngState& rng);
GradCheckCase layer_norm_check_case(long n, RngState& rng);
GradCheckCase gelu_check_case(long n, RngState& rng);
GradCheckCase cross_entropy_check_case(long t, long v, RngState& rng);

}  // namespace memlab
