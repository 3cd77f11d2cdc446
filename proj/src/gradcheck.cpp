#include "memlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace memlab {

double finite_diff_check(const DiffProblem& problem, std::vector<Tensor> inputs, double h) {
  if (h < 1e-6 || h > 1e-4) {
    throw std::invalid_argument("finite_diff_check: h must lie in [1e-6, 1e-4]");
  }
  const std::vector<Tensor> analytic = problem.gradient(inputs);
  if (analytic.size() != inputs.size()) {
    throw std::invalid_argument("finite_diff_check: gradient count mismatch");
  }
  double worst = 0.0;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    Tensor& input = inputs[which];
    const Tensor& grad = analytic[which];
    for (long c = 0; c < input.size(); ++c) {
      const double saved = input.at(c);
      input.at(c) = saved + h;
      const double up = problem.value(inputs);
      input.at(c) = saved - h;
      const double down = problem.value(inputs);
      input.at(c) = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = grad.at(c);
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

namespace {

Tensor random_tensor(std::initializer_list<long> shape, RngState& rng) {
  return Tensor::randn(shape, rng, 1.0);
}

}  // namespace

GradCheckCase matmul_check_case(long m, long k, long n, RngState& rng) {
  Tensor proj = random_tensor({m, n}, rng);
  GradCheckCase cs;
  cs.inputs = {random_tensor({m, k}, rng), random_tensor({k, n}, rng)};
  cs.problem.value = [proj](const std::vector<Tensor>& in) {
    return dot(matmul(in[0], in[1]), proj);
  };
  cs.problem.gradient = [proj](const std::vector<Tensor>& in) {
    Tensor da, db;
    matmul_backward(in[0], in[1], proj, da, db);
    return std::vector<Tensor>{da, db};
  };
  return cs;
}

GradCheckCase softmax_check_case(long m, long n, RngState& rng) {
  Tensor proj = random_tensor({m, n}, rng);
  GradCheckCase cs;
  cs.inputs = {random_tensor({m, n}, rng)};
  cs.problem.value = [proj](const std::vector<Tensor>& in) {
    return dot(softmax_rows(in[0]), proj);
  };
  cs.problem.gradient = [proj](const std::vector<Tensor>& in) {
    return std::vector<Tensor>{softmax_rows_backward(softmax_rows(in[0]), proj)};
  };
  return cs;
}

GradCheckCase layer_norm_check_case(long n, RngState& rng) {
  Tensor proj = random_tensor({n}, rng);
  GradCheckCase cs;
  cs.inputs = {random_tensor({n}, rng), random_tensor({n}, rng), random_tensor({n}, rng)};
  constexpr double kEps = 1e-5;
  cs.problem.value = [proj](const std::vector<Tensor>& in) {
    return dot(layer_norm(in[0], in[1], in[2], kEps), proj);
  };
  cs.problem.gradient = [proj](const std::vector<Tensor>& in) {
    Tensor dx, dgamma, dbeta;
    layer_norm_backward(in[0], in[1], kEps, proj, dx, dgamma, dbeta);
    return std::vector<Tensor>{dx, dgamma, dbeta};
  };
  return cs;
}

GradCheckCase gelu_check_case(long n, RngState& rng) {
  Tensor proj = random_tensor({n}, rng);
  GradCheckCase cs;
  cs.inputs = {random_tensor({n}, rng)};
  cs.problem.value = [proj](const std::vector<Tensor>& in) { return dot(gelu(in[0]), proj); };
  cs.problem.gradient = [proj](const std::vector<Tensor>& in) {
    return std::vector<Tensor>{gelu_backward(in[0], proj)};
  };
  return cs;
}

GradCheckCase cross_entropy_check_case(long t, long v, RngState& rng) {
  std::vector<int> targets(static_cast<std::size_t>(t));
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(t));
  bool any = false;
  for (long i = 0; i < t; ++i) {
    targets[static_cast<std::size_t>(i)] = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(v)));
    mask[static_cast<std::size_t>(i)] = rng.next_double() < 0.7 ? 1 : 0;
    any = any || mask[static_cast<std::size_t>(i)];
  }
  if (!any) mask[0] = 1;
  GradCheckCase cs;
  cs.inputs = {random_tensor({t, v}, rng)};
  cs.problem.value = [targets, mask](const std::vector<Tensor>& in) {
    return masked_cross_entropy(in[0], targets, mask);
  };
  cs.problem.gradient = [targets, mask](const std::vector<Tensor>& in) {
    return std::vector<Tensor>{masked_cross_entropy_backward(in[0], targets, mask)};
  };
  return cs;
}

}  // namespace memlab
