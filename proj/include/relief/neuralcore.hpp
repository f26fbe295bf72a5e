#ifndef RELIEF_NEURALCORE_HPP_
#define RELIEF_NEURALCORE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "relief/io.hpp"

// Minimal differentiable building blocks. Everything is templated on the
// scalar type and instantiated for float (training) and double (gradient
// verification).
namespace relief::nn {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <class T>
using MatrixRef = Eigen::Ref<const Matrix<T>>;

// Heap storage aligned for Eigen's vector kernels. Their summation order
// depends on buffer alignment, so unaligned storage makes results vary
// from run to run.
template <class T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

template <class T>
struct Tensor {
  std::vector<int> shape;
  AlignedVector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> dims, T fill = T(0));

  std::size_t size() const noexcept { return data.size(); }
  int dim(std::size_t i) const { return shape.at(i); }

  // Rank-2 view; rank-1 tensors are viewed as a single row.
  Eigen::Map<Matrix<T>> matrix();
  Eigen::Map<const Matrix<T>> matrix() const;
  Eigen::Map<RowVector<T>> row();
  Eigen::Map<const RowVector<T>> row() const;

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }

  bool operator==(const Tensor&) const = default;
};

std::size_t shape_size(const std::vector<int>& shape);
std::string shape_string(const std::vector<int>& shape);

template <class T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> accum;  // RMSProp running mean of squared gradients
};

template <class T>
using GradientSet = std::map<std::string, Tensor<T>>;

/// Named parameters, iterated in name order.
template <class T>
class ParameterSet {
 public:
  using Storage = std::map<std::string, Parameter<T>>;

  void add(const std::string& name, Tensor<T> value);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Tensor<T>& at(const std::string& name);
  const Tensor<T>& at(const std::string& name) const;
  Parameter<T>& parameter(const std::string& name);

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const noexcept;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  // Zero-filled gradient set with matching keys and shapes.
  GradientSet<T> zero_gradients() const;

  // Copies values only; accumulators restart at zero.
  template <class U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& [name, p] : params_) out.add(name, p.value.template cast<U>());
    return out;
  }

  // Value equality; optimizer state is ignored.
  bool same_values(const ParameterSet& other) const;

 private:
  Storage params_;
};

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <class T>
Tensor<T> glorot_uniform(std::vector<int> shape, int fan_in, int fan_out, std::mt19937_64& rng);

// ---- dense: y = x W + b, x is batch x in, W is in x out ----
template <class T>
struct DenseGrads {
  Matrix<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <class T>
Matrix<T> dense_forward(const MatrixRef<T>& x, const Tensor<T>& w, const Tensor<T>& b);
template <class T>
DenseGrads<T> dense_backward(const MatrixRef<T>& x, const Tensor<T>& w, const MatrixRef<T>& dy);

// ---- conv2d: 3x3 kernel, stride 1, zero padding 1, dilation 1 ----
// input N x Cin x H x W (a rank-3 input is treated as N = 1), kernels
// Cout x Cin x 3 x 3, bias Cout. Output keeps the spatial size.
template <class T>
struct Conv2dGrads {
  Tensor<T> input;
  Tensor<T> kernels;
  Tensor<T> bias;
};

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias);
template <class T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& dy);

// ---- 2x2 non-overlapping average pooling over N x C x H x W ----
template <class T>
Tensor<T> avg_pool2_forward(const Tensor<T>& input);
template <class T>
Tensor<T> avg_pool2_backward(const std::vector<int>& input_shape, const Tensor<T>& dy);

// ---- relu ----
template <class T>
Matrix<T> relu_forward(const MatrixRef<T>& x);
// Subgradient at 0 is 0.
template <class T>
Matrix<T> relu_backward(const MatrixRef<T>& x, const MatrixRef<T>& dy);
template <class T>
Tensor<T> relu_forward(const Tensor<T>& x);
template <class T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy);

// Mean squared error over a vector of predictions.
template <class T>
struct LossResult {
  T loss = T(0);
  std::vector<T> grad;  // d loss / d prediction
};
template <class T>
LossResult<T> squared_error(const std::vector<T>& prediction, const std::vector<T>& target);

struct RmsPropOptions {
  double rho = 0.99;
  double epsilon = 1e-8;
};

// v <- rho v + (1 - rho) g^2 ; x <- x - lr g / sqrt(v + eps)
template <class T>
void rmsprop_step(ParameterSet<T>& params, const GradientSet<T>& grads, double lr,
                  const RmsPropOptions& options = {});

/// Central-difference check of `analytic` against `loss` at `probes`
/// randomly sampled coordinates. Returns the largest relative discrepancy
/// |a - n| / max(|a|, |n|, floor).
struct GradCheckOptions {
  int probes = 20;
  double step = 1e-5;
  double floor = 1e-6;
  std::uint64_t seed = 0;
};
double grad_check(const std::function<double(const ParameterSet<double>&)>& loss,
                  const GradientSet<double>& analytic, const ParameterSet<double>& params,
                  const GradCheckOptions& options = {});

// ---- checkpoint files ----
// Layout: 8-byte magic "RSWCKPT1", little-endian u64 header length, a JSON
// header {format, schema_version, dtype, endianness, params:[{name,shape}],
// ...meta}, then each parameter as little-endian float32 in name order.
void save_parameters(const std::filesystem::path& path, const ParameterSet<float>& params, const Json& meta);

struct LoadedParameters {
  Json header;
  ParameterSet<float> params;
};
LoadedParameters load_parameters(const std::filesystem::path& path);

std::string serialize_parameters(const ParameterSet<float>& params, const Json& meta);
LoadedParameters deserialize_parameters(const std::string& bytes, const std::string& origin);

}  // namespace relief::nn

#endif  // RELIEF_NEURALCORE_HPP_
