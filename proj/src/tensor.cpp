#include "memlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace memlab {

namespace {

long shape_product(const std::vector<long>& shape) {
  long n = 1;
  for (long d : shape) n *= d;
  return n;
}

void check_shape(const std::vector<long>& shape) {
  if (shape.empty() || shape.size() > 3) {
    throw std::invalid_argument("Tensor: rank must be 1..3, got rank " +
                                std::to_string(shape.size()));
  }
  for (long d : shape) {
    if (d <= 0) throw std::invalid_argument("Tensor: dimensions must be positive");
  }
}

}  // namespace

Tensor::Tensor(std::vector<long> shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(static_cast<std::size_t>(shape_product(shape_)), 0.0);
}

Tensor Tensor::zeros(std::initializer_list<long> shape) { return Tensor(std::vector<long>(shape)); }

Tensor Tensor::from(std::initializer_list<long> shape, std::vector<double> values) {
  Tensor t{std::vector<long>(shape)};
  if (static_cast<long>(values.size()) != t.size()) {
    throw std::invalid_argument("Tensor::from: " + std::to_string(values.size()) +
                                " values for shape " + t.shape_str());
  }
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::randn(std::initializer_list<long> shape, RngState& rng, double stddev) {
  Tensor t{std::vector<long>(shape)};
  for (double& v : t.data_) v = stddev * rng.next_gaussian();
  return t;
}

Tensor Tensor::full(std::initializer_list<long> shape, double value) {
  Tensor t{std::vector<long>(shape)};
  t.fill(value);
  return t;
}

std::string Tensor::shape_str() const {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) out << "x";
    out << shape_[i];
  }
  out << "]";
  return out.str();
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Parameter::Parameter(std::string param_name, Tensor initial, bool weight_decay)
    : name(std::move(param_name)),
      value(std::move(initial)),
      grad(value.shape()),
      decay(weight_decay) {}

void Parameter::zero_grad() { grad.fill(0.0); }

// ---- forward ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: dimension mismatch " + a.shape_str() + " x " +
                                b.shape_str());
  }
  const long m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c{{m, n}};
  for (long i = 0; i < m; ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (long t = 0; t < k; ++t) {
      const double av = ai[t];
      const double* bt = b.row(t);
      for (long j = 0; j < n; ++j) ci[j] += av * bt[j];
    }
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("transpose: rank-2 tensor required");
  const long m = a.dim(0), n = a.dim(1);
  Tensor t{{n, m}};
  for (long i = 0; i < m; ++i) {
    const double* ai = a.row(i);
    for (long j = 0; j < n; ++j) t.at(j, i) = ai[j];
  }
  return t;
}

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("softmax_rows: rank-2 tensor required");
  const long m = x.dim(0), n = x.dim(1);
  Tensor y{{m, n}};
  for (long i = 0; i < m; ++i) {
    const double* xi = x.row(i);
    double* yi = y.row(i);
    double mx = xi[0];
    for (long j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (long j = 0; j < n; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      sum += yi[j];
    }
    for (long j = 0; j < n; ++j) yi[j] /= sum;
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() != 2 && x.rank() != 1) {
    throw std::invalid_argument("layer_norm: rank-1 or rank-2 tensor required");
  }
  if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
  const long rows = x.rank() == 2 ? x.dim(0) : 1;
  const long n = x.rank() == 2 ? x.dim(1) : x.dim(0);
  if (gamma.size() != n || beta.size() != n) {
    throw std::invalid_argument("layer_norm: gamma/beta length mismatch");
  }
  Tensor y{x.shape()};
  for (long i = 0; i < rows; ++i) {
    const double* xi = x.data() + i * n;
    double* yi = y.data() + i * n;
    double mean = 0.0;
    for (long j = 0; j < n; ++j) mean += xi[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (long j = 0; j < n; ++j) {
      const double d = xi[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);  // population variance
    const double inv = 1.0 / std::sqrt(var + eps);
    for (long j = 0; j < n; ++j) {
      yi[j] = gamma.at(j) * (xi[j] - mean) * inv + beta.at(j);
    }
  }
  return y;
}

namespace {
constexpr double kGeluCoeff = 0.044715;
inline double gelu_scalar(double v) {
  const double c = std::numbers::sqrt2 / std::sqrt(std::numbers::pi);  // sqrt(2/pi)
  const double u = c * (v + kGeluCoeff * v * v * v);
  return 0.5 * v * (1.0 + std::tanh(u));
}
}  // namespace

Tensor gelu(const Tensor& x) {
  Tensor y{x.shape()};
  const double* xs = x.data();
  double* ys = y.data();
  for (long i = 0; i < x.size(); ++i) ys[i] = gelu_scalar(xs[i]);
  return y;
}

double masked_cross_entropy(const Tensor& logits, std::span<const int> targets,
                            std::span<const std::uint8_t> mask) {
  if (logits.rank() != 2) throw std::invalid_argument("masked_cross_entropy: rank-2 logits");
  const long t = logits.dim(0), v = logits.dim(1);
  if (static_cast<long>(targets.size()) != t || static_cast<long>(mask.size()) != t) {
    throw std::invalid_argument("masked_cross_entropy: targets/mask length mismatch");
  }
  double total = 0.0;
  long count = 0;
  for (long i = 0; i < t; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const int target = targets[static_cast<std::size_t>(i)];
    if (target < 0 || target >= v) {
      throw std::invalid_argument("masked_cross_entropy: target id " + std::to_string(target) +
                                  " out of range for vocab " + std::to_string(v));
    }
    const double* row = logits.row(i);
    double mx = row[0];
    for (long j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (long j = 0; j < v; ++j) sum += std::exp(row[j] - mx);
    total += mx + std::log(sum) - row[target];
    ++count;
  }
  if (count == 0) throw std::invalid_argument("masked_cross_entropy: empty loss (all masked out)");
  return total / static_cast<double>(count);
}

// ---- backward ops ----

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dc, Tensor& da, Tensor& db) {
  // dA = dC * B^T, dB = A^T * dC
  da = matmul(dc, transpose(b));
  db = matmul(transpose(a), dc);
}

Tensor softmax_rows_backward(const Tensor& y, const Tensor& dy) {
  if (!y.same_shape(dy)) throw std::invalid_argument("softmax_rows_backward: shape mismatch");
  const long m = y.dim(0), n = y.dim(1);
  Tensor dx{{m, n}};
  for (long i = 0; i < m; ++i) {
    const double* yi = y.row(i);
    const double* gi = dy.row(i);
    double* di = dx.row(i);
    double inner = 0.0;
    for (long j = 0; j < n; ++j) inner += gi[j] * yi[j];
    for (long j = 0; j < n; ++j) di[j] = yi[j] * (gi[j] - inner);
  }
  return dx;
}

void layer_norm_backward(const Tensor& x, const Tensor& gamma, double eps, const Tensor& dy,
                         Tensor& dx, Tensor& dgamma, Tensor& dbeta) {
  const long rows = x.rank() == 2 ? x.dim(0) : 1;
  const long n = x.rank() == 2 ? x.dim(1) : x.dim(0);
  dx = Tensor{x.shape()};
  dgamma = Tensor{gamma.shape()};
  dbeta = Tensor{gamma.shape()};
  for (long i = 0; i < rows; ++i) {
    const double* xi = x.data() + i * n;
    const double* gi = dy.data() + i * n;
    double* di = dx.data() + i * n;
    double mean = 0.0;
    for (long j = 0; j < n; ++j) mean += xi[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (long j = 0; j < n; ++j) {
      const double d = xi[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    // xhat_j = (x_j - mean) * inv; dy flows through gamma first.
    double sum_g = 0.0, sum_gx = 0.0;
    for (long j = 0; j < n; ++j) {
      const double xhat = (xi[j] - mean) * inv;
      const double gj = gi[j] * gamma.at(j);
      sum_g += gj;
      sum_gx += gj * xhat;
      dgamma.at(j) += gi[j] * xhat;
      dbeta.at(j) += gi[j];
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (long j = 0; j < n; ++j) {
      const double xhat = (xi[j] - mean) * inv;
      const double gj = gi[j] * gamma.at(j);
      di[j] = inv * (gj - inv_n * sum_g - xhat * inv_n * sum_gx);
    }
  }
}

Tensor gelu_backward(const Tensor& x, const Tensor& dy) {
  if (!x.same_shape(dy)) throw std::invalid_argument("gelu_backward: shape mismatch");
  Tensor dx{x.shape()};
  const double c = std::numbers::sqrt2 / std::sqrt(std::numbers::pi);
  const double* xs = x.data();
  const double* gs = dy.data();
  double* ds = dx.data();
  for (long i = 0; i < x.size(); ++i) {
    const double v = xs[i];
    const double u = c * (v + kGeluCoeff * v * v * v);
    const double th = std::tanh(u);
    const double sech2 = 1.0 - th * th;
    const double du = c * (1.0 + 3.0 * kGeluCoeff * v * v);
    ds[i] = gs[i] * (0.5 * (1.0 + th) + 0.5 * v * sech2 * du);
  }
  return dx;
}

Tensor masked_cross_entropy_backward(const Tensor& logits, std::span<const int> targets,
                                     std::span<const std::uint8_t> mask) {
  const long t = logits.dim(0), v = logits.dim(1);
  long count = 0;
  for (std::uint8_t m : mask) count += m ? 1 : 0;
  if (count == 0) throw std::invalid_argument("masked_cross_entropy: empty loss (all masked out)");
  Tensor dl{{t, v}};
  const double inv_count = 1.0 / static_cast<double>(count);
  for (long i = 0; i < t; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const double* row = logits.row(i);
    double* drow = dl.row(i);
    double mx = row[0];
    for (long j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (long j = 0; j < v; ++j) sum += std::exp(row[j] - mx);
    for (long j = 0; j < v; ++j) drow[j] = std::exp(row[j] - mx) / sum * inv_count;
    drow[targets[static_cast<std::size_t>(i)]] -= inv_count;
  }
  return dl;
}

// ---- elementwise helpers ----

void add_inplace(Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("add_inplace: shape mismatch");
  double* as = a.data();
  const double* bs = b.data();
  for (long i = 0; i < a.size(); ++i) as[i] += bs[i];
}

void axpy_inplace(Tensor& a, double scale, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("axpy_inplace: shape mismatch");
  double* as = a.data();
  const double* bs = b.data();
  for (long i = 0; i < a.size(); ++i) as[i] += scale * bs[i];
}

void scale_inplace(Tensor& a, double scale) {
  for (double& v : a.values()) v *= scale;
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  double s = 0.0;
  const double* as = a.data();
  const double* bs = b.data();
  for (long i = 0; i < a.size(); ++i) s += as[i] * bs[i];
  return s;
}

}  // namespace memlab
