#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "memlab/rng.hpp"

namespace memlab {

/// Dense row-major array of 64-bit reals, at most 3 axes.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<long> shape);

  static Tensor zeros(std::initializer_list<long> shape);
  static Tensor from(std::initializer_list<long> shape, std::vector<double> values);
  static Tensor randn(std::initializer_list<long> shape, RngState& rng, double stddev = 1.0);
  static Tensor full(std::initializer_list<long> shape, double value);

  const std::vector<long>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  long dim(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  long size() const { return static_cast<long>(data_.size()); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& at(long i) { return data_[static_cast<std::size_t>(i)]; }
  double at(long i) const { return data_[static_cast<std::size_t>(i)]; }
  double& at(long i, long j) { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
  double at(long i, long j) const { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
  double& at(long i, long j, long k) {
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  double at(long i, long j, long k) const {
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }

  double* row(long i) { return data_.data() + i * shape_.back(); }
  const double* row(long i) const { return data_.data() + i * shape_.back(); }

  void fill(double value);
  bool all_finite() const;

 private:
  std::vector<long> shape_;
  std::vector<double> data_;
};

/// A named trainable value with an additively accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool decay = true;  // participates in decoupled weight decay

  Parameter() = default;
  Parameter(std::string param_name, Tensor initial, bool weight_decay = true);
  void zero_grad();
};

// ---- forward ops ----

/// c[i][j] = sum_t a[i][t] * b[t][j]. Accumulation order over t is fixed,
/// so results are bit-reproducible.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor gelu(const Tensor& x);
double masked_cross_entropy(const Tensor& logits, std::span<const int> targets,
                            std::span<const std::uint8_t> mask);

// ---- backward ops (each returns fresh gradients; callers accumulate) ----

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dc, Tensor& da, Tensor& db);
Tensor softmax_rows_backward(const Tensor& y, const Tensor& dy);
void layer_norm_backward(const Tensor& x, const Tensor& gamma, double eps, const Tensor& dy,
                         Tensor& dx, Tensor& dgamma, Tensor& dbeta);
Tensor gelu_backward(const Tensor& x, const Tensor& dy);
Tensor masked_cross_entropy_backward(const Tensor& logits, std::span<const int> targets,
                                     std::span<const std::uint8_t> mask);

// ---- elementwise helpers ----

void add_inplace(Tensor& a, const Tensor& b);
void axpy_inplace(Tensor& a, double scale, const Tensor& b);  // a += scale * b
void scale_inplace(Tensor& a, double scale);
double dot(const Tensor& a, const Tensor& b);

}  // namespace memlab
