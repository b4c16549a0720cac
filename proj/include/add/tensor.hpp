#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace add {

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense row-major tensor of 64-bit reals.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor identity(std::size_t n);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;
  double& at(std::size_t i, std::size_t j, std::size_t k);
  double at(std::size_t i, std::size_t j, std::size_t k) const;

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  Tensor reshaped(std::vector<std::size_t> shape) const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Per-position channel index, e.g. the output of channel_argmax.
struct IndexMap {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::size_t> idx;  // row-major, length h*w
};

enum class Activation { Identity, Relu };

struct MlpLayer {
  Tensor weight;  // in x out
  Tensor bias;    // length out
  Activation act = Activation::Identity;
};

/// Stack of per-position affine layers (equivalent to 1x1 convolutions).
struct MlpParams {
  std::vector<MlpLayer> layers;
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  void validate() const;  // throws DimensionError if layer dims do not chain
};

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor mlp_apply(const MlpParams& params, const Tensor& x);
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);
IndexMap channel_argmax(const Tensor& x);
Tensor embedding_lookup(const Tensor& table, const IndexMap& idx);

}  // namespace add
