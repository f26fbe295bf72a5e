#include "relief/neuralcore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "relief/error.hpp"

namespace relief::nn {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw Error(ErrorCode::Dimension, "negative dimension in shape " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const std::vector<int>& shape) {
  std::ostringstream s;
  s << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) s << (i ? "x" : "") << shape[i];
  s << ']';
  return s.str();
}

template <class T>
Tensor<T>::Tensor(std::vector<int> dims, T fill) : shape(std::move(dims)), data(shape_size(shape), fill) {}

namespace {

template <class T>
std::pair<Eigen::Index, Eigen::Index> matrix_dims(const Tensor<T>& t) {
  if (t.shape.size() == 2) return {t.shape[0], t.shape[1]};
  if (t.shape.size() == 1) return {1, t.shape[0]};
  throw Error(ErrorCode::Dimension, "matrix view needs rank 1 or 2, got " + shape_string(t.shape));
}

}  // namespace

template <class T>
Eigen::Map<Matrix<T>> Tensor<T>::matrix() {
  auto [r, c] = matrix_dims(*this);
  return Eigen::Map<Matrix<T>>(data.data(), r, c);
}
template <class T>
Eigen::Map<const Matrix<T>> Tensor<T>::matrix() const {
  auto [r, c] = matrix_dims(*this);
  return Eigen::Map<const Matrix<T>>(data.data(), r, c);
}
template <class T>
Eigen::Map<RowVector<T>> Tensor<T>::row() {
  return Eigen::Map<RowVector<T>>(data.data(), static_cast<Eigen::Index>(data.size()));
}
template <class T>
Eigen::Map<const RowVector<T>> Tensor<T>::row() const {
  return Eigen::Map<const RowVector<T>>(data.data(), static_cast<Eigen::Index>(data.size()));
}

template <class T>
void ParameterSet<T>::add(const std::string& name, Tensor<T> value) {
  if (params_.count(name)) throw Error(ErrorCode::InvalidArgument, "duplicate parameter '" + name + "'");
  Parameter<T> p;
  p.accum = Tensor<T>(value.shape);
  p.value = std::move(value);
  params_.emplace(name, std::move(p));
}

template <class T>
Tensor<T>& ParameterSet<T>::at(const std::string& name) {
  return parameter(name).value;
}

template <class T>
const Tensor<T>& ParameterSet<T>::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(ErrorCode::InvalidArgument, "no parameter '" + name + "'");
  return it->second.value;
}

template <class T>
Parameter<T>& ParameterSet<T>::parameter(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(ErrorCode::InvalidArgument, "no parameter '" + name + "'");
  return it->second;
}

template <class T>
std::size_t ParameterSet<T>::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

template <class T>
GradientSet<T> ParameterSet<T>::zero_gradients() const {
  GradientSet<T> g;
  for (const auto& [name, p] : params_) g.emplace(name, Tensor<T>(p.value.shape));
  return g;
}

template <class T>
bool ParameterSet<T>::same_values(const ParameterSet& other) const {
  if (params_.size() != other.params_.size()) return false;
  auto a = params_.begin();
  auto b = other.params_.begin();
  for (; a != params_.end(); ++a, ++b) {
    if (a->first != b->first || !(a->second.value == b->second.value)) return false;
  }
  return true;
}

template <class T>
Tensor<T> glorot_uniform(std::vector<int> shape, int fan_in, int fan_out, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  for (T& v : t.data) v = static_cast<T>(dist(rng));
  return t;
}

template <class T>
Matrix<T> dense_forward(const MatrixRef<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (w.shape.size() != 2 || x.cols() != w.shape[0] || b.size() != static_cast<std::size_t>(w.shape[1])) {
    std::ostringstream msg;
    msg << "dense: input " << x.rows() << "x" << x.cols() << ", weights " << shape_string(w.shape)
        << ", bias " << shape_string(b.shape);
    throw Error(ErrorCode::Dimension, msg.str());
  }
  Matrix<T> y = x * w.matrix();
  y.rowwise() += b.row();
  return y;
}

template <class T>
DenseGrads<T> dense_backward(const MatrixRef<T>& x, const Tensor<T>& w, const MatrixRef<T>& dy) {
  if (w.shape.size() != 2 || x.cols() != w.shape[0] || dy.cols() != w.shape[1] || dy.rows() != x.rows()) {
    throw Error(ErrorCode::Dimension, "dense backward: shape mismatch");
  }
  DenseGrads<T> g;
  g.input = dy * w.matrix().transpose();
  g.weights = Tensor<T>(w.shape);
  g.weights.matrix().noalias() = x.transpose() * dy;
  g.bias = Tensor<T>({w.shape[1]});
  g.bias.row() = dy.colwise().sum();
  return g;
}

namespace {

struct Dims4 {
  int n, c, h, w;
};

template <class T>
Dims4 as_nchw(const Tensor<T>& t, const char* what) {
  if (t.shape.size() == 4) return {t.shape[0], t.shape[1], t.shape[2], t.shape[3]};
  if (t.shape.size() == 3) return {1, t.shape[0], t.shape[1], t.shape[2]};
  throw Error(ErrorCode::Dimension, std::string(what) + ": expected rank 3 or 4, got " + shape_string(t.shape));
}

template <class T>
void check_kernels(const Tensor<T>& kernels, int channels_in) {
  if (kernels.shape.size() != 4 || kernels.shape[2] != 3 || kernels.shape[3] != 3) {
    throw Error(ErrorCode::Dimension, "conv2d: kernels must be Cout x Cin x 3 x 3, got " +
                                          shape_string(kernels.shape));
  }
  if (kernels.shape[1] != channels_in) {
    throw Error(ErrorCode::Dimension, "conv2d: kernels expect " + std::to_string(kernels.shape[1]) +
                                          " input channels, got " + std::to_string(channels_in));
  }
}

}  // namespace

namespace {

// Unfolds one C x H x W sample into a (C*9) x (H*W) patch matrix.
template <class T>
void im2col(const T* src, int c, int h, int w, Matrix<T>& cols) {
  cols.setZero(static_cast<Eigen::Index>(c) * 9, static_cast<Eigen::Index>(h) * w);
  for (int ch = 0; ch < c; ++ch) {
    const T* plane = src + static_cast<std::size_t>(ch) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = cols.row(ch * 9 + ky * 3 + kx).data();
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - 1;
            if (sx >= 0 && sx < w) row[y * w + x] = plane[sy * w + sx];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const Matrix<T>& cols, int c, int h, int w, T* dst) {
  for (int ch = 0; ch < c; ++ch) {
    T* plane = dst + static_cast<std::size_t>(ch) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = cols.row(ch * 9 + ky * 3 + kx).data();
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - 1;
            if (sx >= 0 && sx < w) plane[sy * w + sx] += row[y * w + x];
          }
        }
      }
    }
  }
}

}  // namespace

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias) {
  const Dims4 d = as_nchw(input, "conv2d");
  check_kernels(kernels, d.c);
  const int cout = kernels.shape[0];
  if (bias.size() != static_cast<std::size_t>(cout)) throw Error(ErrorCode::Dimension, "conv2d: bias size");
  Tensor<T> out({d.n, cout, d.h, d.w});
  const Eigen::Index plane = static_cast<Eigen::Index>(d.h) * d.w;
  const Eigen::Map<const Matrix<T>> k(kernels.data.data(), cout, static_cast<Eigen::Index>(d.c) * 9);
  const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias.data.data(), cout);
  Matrix<T> cols;
  for (int n = 0; n < d.n; ++n) {
    im2col(&input.data[static_cast<std::size_t>(n) * d.c * plane], d.c, d.h, d.w, cols);
    Eigen::Map<Matrix<T>> y(&out.data[static_cast<std::size_t>(n) * cout * plane], cout, plane);
    y.noalias() = k * cols;
    y.colwise() += b;
  }
  if (input.shape.size() == 3) out.shape = {cout, d.h, d.w};
  return out;
}

template <class T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& dy) {
  const Dims4 d = as_nchw(input, "conv2d backward");
  check_kernels(kernels, d.c);
  const int cout = kernels.shape[0];
  if (dy.size() != static_cast<std::size_t>(d.n) * cout * d.h * d.w) {
    throw Error(ErrorCode::Dimension, "conv2d backward: output gradient size");
  }
  Conv2dGrads<T> g{Tensor<T>(input.shape), Tensor<T>(kernels.shape), Tensor<T>({cout})};
  const Eigen::Index plane = static_cast<Eigen::Index>(d.h) * d.w;
  const Eigen::Map<const Matrix<T>> k(kernels.data.data(), cout, static_cast<Eigen::Index>(d.c) * 9);
  Eigen::Map<Matrix<T>> gk(g.kernels.data.data(), cout, static_cast<Eigen::Index>(d.c) * 9);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gb(g.bias.data.data(), cout);
  Matrix<T> cols, dcols;
  for (int n = 0; n < d.n; ++n) {
    const std::size_t in_off = static_cast<std::size_t>(n) * d.c * plane;
    im2col(&input.data[in_off], d.c, d.h, d.w, cols);
    const Eigen::Map<const Matrix<T>> go(&dy.data[static_cast<std::size_t>(n) * cout * plane], cout, plane);
    gk.noalias() += go * cols.transpose();
    gb += go.rowwise().sum();
    dcols.noalias() = k.transpose() * go;
    col2im_add(dcols, d.c, d.h, d.w, &g.input.data[in_off]);
  }
  return g;
}

template <class T>
Tensor<T> avg_pool2_forward(const Tensor<T>& input) {
  const Dims4 d = as_nchw(input, "avg_pool");
  if (d.h % 2 != 0 || d.w % 2 != 0) {
    throw Error(ErrorCode::Dimension, "avg_pool: spatial dims must be even, got " + shape_string(input.shape));
  }
  const int oh = d.h / 2, ow = d.w / 2;
  Tensor<T> out({d.n, d.c, oh, ow});
  for (int p = 0; p < d.n * d.c; ++p) {
    const T* src = &input.data[static_cast<std::size_t>(p) * d.h * d.w];
    T* dst = &out.data[static_cast<std::size_t>(p) * oh * ow];
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        const T* s = src + 2 * y * d.w + 2 * x;
        dst[y * ow + x] = (s[0] + s[1] + s[d.w] + s[d.w + 1]) * T(0.25);
      }
    }
  }
  if (input.shape.size() == 3) out.shape = {d.c, oh, ow};
  return out;
}

template <class T>
Tensor<T> avg_pool2_backward(const std::vector<int>& input_shape, const Tensor<T>& dy) {
  Tensor<T> probe(input_shape);
  const Dims4 d = as_nchw(probe, "avg_pool backward");
  if (d.h % 2 != 0 || d.w % 2 != 0) throw Error(ErrorCode::Dimension, "avg_pool backward: odd dims");
  const int oh = d.h / 2, ow = d.w / 2;
  if (dy.size() != static_cast<std::size_t>(d.n) * d.c * oh * ow) {
    throw Error(ErrorCode::Dimension, "avg_pool backward: output gradient size");
  }
  for (int p = 0; p < d.n * d.c; ++p) {
    T* dst = &probe.data[static_cast<std::size_t>(p) * d.h * d.w];
    const T* src = &dy.data[static_cast<std::size_t>(p) * oh * ow];
    for (int y = 0; y < d.h; ++y) {
      for (int x = 0; x < d.w; ++x) dst[y * d.w + x] = src[(y / 2) * ow + x / 2] * T(0.25);
    }
  }
  return probe;
}

template <class T>
Matrix<T> relu_forward(const MatrixRef<T>& x) {
  return x.cwiseMax(T(0));
}

template <class T>
Matrix<T> relu_backward(const MatrixRef<T>& x, const MatrixRef<T>& dy) {
  if (x.rows() != dy.rows() || x.cols() != dy.cols()) throw Error(ErrorCode::Dimension, "relu backward: shape");
  return (x.array() > T(0)).select(dy, T(0));
}

template <class T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (T& v : y.data) v = std::max(v, T(0));
  return y;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  if (x.size() != dy.size()) throw Error(ErrorCode::Dimension, "relu backward: size");
  Tensor<T> g = dy;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(x.data[i] > T(0))) g.data[i] = T(0);
  }
  return g;
}

template <class T>
LossResult<T> squared_error(const std::vector<T>& prediction, const std::vector<T>& target) {
  if (prediction.size() != target.size() || prediction.empty()) {
    throw Error(ErrorCode::Dimension, "squared_error: prediction/target size mismatch or empty");
  }
  LossResult<T> r;
  r.grad.resize(prediction.size());
  const T n = static_cast<T>(prediction.size());
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const T diff = prediction[i] - target[i];
    r.loss += diff * diff / n;
    r.grad[i] = T(2) * diff / n;
  }
  return r;
}

template <class T>
void rmsprop_step(ParameterSet<T>& params, const GradientSet<T>& grads, double lr, const RmsPropOptions& options) {
  if (grads.size() != params.size()) throw Error(ErrorCode::InvalidArgument, "rmsprop: gradient keys differ");
  for (auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw Error(ErrorCode::InvalidArgument, "rmsprop: no gradient for '" + name + "'");
    const Tensor<T>& g = it->second;
    if (g.shape != p.value.shape) throw Error(ErrorCode::Dimension, "rmsprop: gradient shape for '" + name + "'");
    const T rho = static_cast<T>(options.rho);
    const T eps = static_cast<T>(options.epsilon);
    const T rate = static_cast<T>(lr);
    for (std::size_t i = 0; i < g.size(); ++i) {
      T& v = p.accum.data[i];
      v = rho * v + (T(1) - rho) * g.data[i] * g.data[i];
      p.value.data[i] -= rate * g.data[i] / std::sqrt(v + eps);
    }
  }
}

double grad_check(const std::function<double(const ParameterSet<double>&)>& loss,
                  const GradientSet<double>& analytic, const ParameterSet<double>& params,
                  const GradCheckOptions& options) {
  std::vector<std::pair<std::string, std::size_t>> coords;
  for (const auto& [name, p] : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) coords.emplace_back(name, i);
  }
  if (coords.empty()) return 0.0;
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, coords.size() - 1);
  ParameterSet<double> probe = params;
  double worst = 0.0;
  for (int k = 0; k < options.probes; ++k) {
    const auto& [name, i] = coords[pick(rng)];
    auto it = analytic.find(name);
    if (it == analytic.end()) throw Error(ErrorCode::InvalidArgument, "grad_check: no gradient for '" + name + "'");
    double& x = probe.at(name).data[i];
    const double saved = x;
    x = saved + options.step;
    const double up = loss(probe);
    x = saved - options.step;
    const double down = loss(probe);
    x = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw Error(ErrorCode::Numeric, "grad_check: non-finite loss while probing '" + name + "'");
    }
    const double numeric = (up - down) / (2.0 * options.step);
    const double a = it->second.data.at(i);
    if (!std::isfinite(a)) throw Error(ErrorCode::Numeric, "grad_check: non-finite analytic gradient");
    const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

namespace {

constexpr char kMagic[8] = {'R', 'S', 'W', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace

std::string serialize_parameters(const ParameterSet<float>& params, const Json& meta) {
  Json header = meta.is_object() ? meta : Json::object();
  header["format"] = "relief-swarm-checkpoint";
  header["schema_version"] = kSchemaVersion;
  header["dtype"] = "f32";
  header["endianness"] = "little";
  Json list = Json::array();
  for (const auto& [name, p] : params) list.push_back({{"name", name}, {"shape", p.value.shape}});
  header["params"] = list;
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + params.scalar_count() * 4);
  for (const auto& [name, p] : params) {
    for (float f : p.value.data) {
      const auto bits = std::bit_cast<std::uint32_t>(f);
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
    }
  }
  return out;
}

LoadedParameters deserialize_parameters(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::Parse, origin + ": not a relief-swarm checkpoint");
  }
  const std::uint64_t len = get_u64(bytes, 8);
  if (16 + len > bytes.size()) throw Error(ErrorCode::Parse, origin + ": truncated header");
  LoadedParameters out;
  out.header = parse_json(bytes.substr(16, len), origin);
  check_schema_version(out.header, origin);
  if (out.header.value("dtype", "") != "f32") throw Error(ErrorCode::Parse, origin + ": unsupported dtype");
  std::size_t at = 16 + len;
  for (const Json& entry : out.header.at("params")) {
    Tensor<float> t(entry.at("shape").get<std::vector<int>>());
    if (at + t.size() * 4 > bytes.size()) throw Error(ErrorCode::Parse, origin + ": truncated parameter data");
    for (float& f : t.data) {
      std::uint32_t bits = 0;
      for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
      f = std::bit_cast<float>(bits);
      at += 4;
    }
    out.params.add(entry.at("name").get<std::string>(), std::move(t));
  }
  if (at != bytes.size()) throw Error(ErrorCode::Parse, origin + ": trailing bytes after parameter data");
  return out;
}

void save_parameters(const std::filesystem::path& path, const ParameterSet<float>& params, const Json& meta) {
  write_text_file(path, serialize_parameters(params, meta));
}

LoadedParameters load_parameters(const std::filesystem::path& path) {
  return deserialize_parameters(read_text_file(path), path.string());
}

#define RELIEF_NN_INSTANTIATE(T)                                                                         \
  template struct Tensor<T>;                                                                             \
  template class ParameterSet<T>;                                                                        \
  template Tensor<T> glorot_uniform<T>(std::vector<int>, int, int, std::mt19937_64&);                    \
  template Matrix<T> dense_forward<T>(const MatrixRef<T>&, const Tensor<T>&, const Tensor<T>&);          \
  template DenseGrads<T> dense_backward<T>(const MatrixRef<T>&, const Tensor<T>&, const MatrixRef<T>&);  \
  template Tensor<T> conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);            \
  template Conv2dGrads<T> conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T> avg_pool2_forward<T>(const Tensor<T>&);                                             \
  template Tensor<T> avg_pool2_backward<T>(const std::vector<int>&, const Tensor<T>&);                   \
  template Matrix<T> relu_forward<T>(const MatrixRef<T>&);                                               \
  template Matrix<T> relu_backward<T>(const MatrixRef<T>&, const MatrixRef<T>&);                         \
  template Tensor<T> relu_forward<T>(const Tensor<T>&);                                                  \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template LossResult<T> squared_error<T>(const std::vector<T>&, const std::vector<T>&);                 \
  template void rmsprop_step<T>(ParameterSet<T>&, const GradientSet<T>&, double, const RmsPropOptions&);

RELIEF_NN_INSTANTIATE(float)
RELIEF_NN_INSTANTIATE(double)

#undef RELIEF_NN_INSTANTIATE

}  // namespace relief::nn
