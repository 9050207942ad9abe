#pragma once

#include <qent/error.hpp>
#include <qent/linalg.hpp>
#include <qent/rng.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace qent::nn {

/// Flat parameter or gradient storage, aligned so vectorized reductions see the same layout every run.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

/// Activation tensor shape: channels x height x width, stored channel-major then row-major.
/// Vectors are {n, 1, 1}.
struct Shape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const { return channels * height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

enum class LayerKind { Dense, Conv2D, MaxPool2D, Flatten, ReLU };
enum class Padding { Valid, Same };

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  std::size_t units = 0;    // dense
  std::size_t filters = 0;  // conv2d
  std::size_t window = 0;   // conv2d kernel / maxpool2d pool
  std::size_t stride = 1;
  Padding padding = Padding::Valid;

  static LayerSpec dense(std::size_t units) { return {LayerKind::Dense, units}; }
  static LayerSpec conv2d(std::size_t filters, std::size_t kernel, std::size_t stride = 1, Padding pad = Padding::Valid) {
    return {LayerKind::Conv2D, 0, filters, kernel, stride, pad};
  }
  static LayerSpec maxpool2d(std::size_t pool, std::size_t stride = 1, Padding pad = Padding::Valid) {
    return {LayerKind::MaxPool2D, 0, 0, pool, stride, pad};
  }
  static LayerSpec flatten() { return {LayerKind::Flatten}; }
  static LayerSpec relu() { return {LayerKind::ReLU}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

inline std::string_view kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2D: return "conv2d";
    case LayerKind::MaxPool2D: return "maxpool2d";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::ReLU: return "relu";
  }
  return "?";
}

/// A spec with resolved shapes and its slice of the model's parameter vector.
struct Layer {
  LayerSpec spec;
  Shape in;
  Shape out;
  std::size_t offset = 0;   // first weight in Model::params()
  std::size_t weights = 0;  // weight count (rows x cols)
  std::size_t biases = 0;
  std::size_t pad_before = 0;  // top/left padding; bottom/right is window - 1 - pad_before

  std::size_t param_count() const { return weights + biases; }
};

namespace detail {

/// Output side of a sliding window; 0 on underflow.
inline std::size_t window_out(std::size_t side, std::size_t window, std::size_t stride, Padding pad) {
  if (pad == Padding::Same) return (side + stride - 1) / stride;
  if (side < window) return 0;
  return (side - window) / stride + 1;
}

inline std::size_t same_pad_before(std::size_t side, std::size_t window, std::size_t stride) {
  const std::size_t out = (side + stride - 1) / stride;
  const std::size_t needed = (out - 1) * stride + window;
  const std::size_t total = needed > side ? needed - side : 0;
  return total / 2;
}

}  // namespace detail

using RowMajorMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Model {
 public:
  static constexpr int kFormatVersion = 1;

  Model() = default;

  /// Resolves shapes; throws ConfigError when a layer's output would be empty.
  Model(Shape input, std::vector<LayerSpec> specs) : input_(input) {
    if (input.size() == 0) throw ConfigError("model input must be non-empty");
    Shape cur = input;
    std::size_t offset = 0;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto& s = specs[i];
      Layer l{s, cur, cur, offset};
      switch (s.kind) {
        case LayerKind::Dense:
          if (s.units == 0) throw ConfigError("dense layer needs units > 0");
          l.out = {s.units, 1, 1};
          l.weights = s.units * cur.size();
          l.biases = s.units;
          break;
        case LayerKind::Conv2D:
        case LayerKind::MaxPool2D: {
          if (s.window == 0 || s.stride == 0) throw ConfigError("window and stride must be positive");
          if (s.kind == LayerKind::Conv2D && s.filters == 0) throw ConfigError("conv2d needs filters > 0");
          const auto oh = detail::window_out(cur.height, s.window, s.stride, s.padding);
          const auto ow = detail::window_out(cur.width, s.window, s.stride, s.padding);
          if (oh == 0 || ow == 0)
            throw ConfigError("layer " + std::to_string(i) + " (" + std::string(kind_name(s.kind)) + " " +
                              std::to_string(s.window) + "x" + std::to_string(s.window) + ") underflows input side " +
                              std::to_string(cur.height));
          if (s.padding == Padding::Same) l.pad_before = detail::same_pad_before(cur.height, s.window, s.stride);
          if (s.kind == LayerKind::Conv2D) {
            l.out = {s.filters, oh, ow};
            l.weights = s.filters * cur.channels * s.window * s.window;
            l.biases = s.filters;
          } else {
            l.out = {cur.channels, oh, ow};
          }
          break;
        }
        case LayerKind::Flatten:
          l.out = {cur.size(), 1, 1};
          break;
        case LayerKind::ReLU:
          break;
      }
      offset += l.param_count();
      cur = l.out;
      layers_.push_back(l);
    }
    params_.assign(offset, 0.0);
  }

  const Shape& input_shape() const { return input_; }
  Shape output_shape() const { return layers_.empty() ? input_ : layers_.back().out; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<LayerSpec> specs() const {
    std::vector<LayerSpec> s;
    for (const auto& l : layers_) s.push_back(l.spec);
    return s;
  }
  std::size_t parameter_count() const { return params_.size(); }
  ParamVector& params() { return params_; }
  const ParamVector& params() const { return params_; }

  /// He-style fan-in scaled uniform weights U(-sqrt(6/fan_in), sqrt(6/fan_in)); zero biases.
  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    std::fill(params_.begin(), params_.end(), 0.0);
    for (const auto& l : layers_) {
      if (l.weights == 0) continue;
      const std::size_t fan_in = l.weights / (l.spec.kind == LayerKind::Dense ? l.spec.units : l.spec.filters);
      const double limit = std::sqrt(6.0 / double(fan_in));
      for (std::size_t k = 0; k < l.weights; ++k) params_[l.offset + k] = rng.uniform(-limit, limit);
    }
  }

  bool finite() const {
    return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Model& a, const Model& b) {
    return a.input_ == b.input_ && a.specs() == b.specs() && a.params_ == b.params_;
  }

 private:
  Shape input_;
  std::vector<Layer> layers_;
  ParamVector params_;
};

// ---------------------------------------------------------------------------
// Builders

/// Dense ReLU layers of the given widths, then a single linear output.
inline Model build_mlp(std::size_t input_len, const std::vector<std::size_t>& hidden, std::uint64_t seed) {
  if (input_len == 0) throw ConfigError("input_len must be positive");
  if (hidden.empty()) throw ConfigError("hidden widths must be non-empty");
  std::vector<LayerSpec> specs;
  for (auto w : hidden) {
    specs.push_back(LayerSpec::dense(w));
    specs.push_back(LayerSpec::relu());
  }
  specs.push_back(LayerSpec::dense(1));
  Model m({input_len, 1, 1}, std::move(specs));
  m.initialize(seed);
  return m;
}

enum class CnnPadding {
  Valid,  // never pad; underflow is a configuration error
  Auto,   // switch a layer to same padding when its valid output would be empty
};

/// conv(32)-pool-conv(64)-pool-conv(64)-flatten-dense(32)-dense(1), stride 1 throughout, ReLU
/// after every conv and the hidden dense layer.
inline Model build_cnn(std::size_t input_side, std::size_t kernel, std::size_t pool, std::uint64_t seed,
                       CnnPadding padding = CnnPadding::Valid) {
  if (input_side < 2 || input_side % 2 != 0) throw ConfigError("cnn input side must be 2d");
  if ((kernel != 2 && kernel != 3) || (pool != 2 && pool != 3)) throw ConfigError("kernel and pool must be 2 or 3");
  std::vector<LayerSpec> specs;
  std::size_t side = input_side;
  auto windowed = [&](LayerSpec s) {
    if (detail::window_out(side, s.window, s.stride, Padding::Valid) == 0) {
      if (padding == CnnPadding::Valid)
        throw ConfigError(std::string(kind_name(s.kind)) + " " + std::to_string(s.window) + "x" +
                          std::to_string(s.window) + " underflows side " + std::to_string(side) +
                          " with padding disabled");
      s.padding = Padding::Same;
    }
    side = detail::window_out(side, s.window, s.stride, s.padding);
    specs.push_back(s);
  };
  windowed(LayerSpec::conv2d(32, kernel));
  specs.push_back(LayerSpec::relu());
  windowed(LayerSpec::maxpool2d(pool));
  windowed(LayerSpec::conv2d(64, kernel));
  specs.push_back(LayerSpec::relu());
  windowed(LayerSpec::maxpool2d(pool));
  windowed(LayerSpec::conv2d(64, kernel));
  specs.push_back(LayerSpec::relu());
  specs.push_back(LayerSpec::flatten());
  specs.push_back(LayerSpec::dense(32));
  specs.push_back(LayerSpec::relu());
  specs.push_back(LayerSpec::dense(1));
  Model m({1, input_side, input_side}, std::move(specs));
  m.initialize(seed);
  return m;
}

/// Output sides of the conv and pool layers in order.
inline std::vector<std::size_t> windowed_output_sides(const Model& m) {
  std::vector<std::size_t> out;
  for (const auto& l : m.layers())
    if (l.spec.kind == LayerKind::Conv2D || l.spec.kind == LayerKind::MaxPool2D) out.push_back(l.out.height);
  return out;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace detail {

inline Eigen::Map<const Eigen::MatrixXd> weight_map(const Model& m, const Layer& l, std::size_t rows) {
  return {m.params().data() + l.offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(l.weights / rows)};
}
inline Eigen::Map<const Eigen::VectorXd> bias_map(const Model& m, const Layer& l) {
  return {m.params().data() + l.offset + l.weights, static_cast<Eigen::Index>(l.biases)};
}

/// im2col for one sample: rows (c, ky, kx), columns output positions (oy, ox).
inline void im2col(const double* x, const Layer& l, Eigen::MatrixXd& cols) {
  const auto& in = l.in;
  const std::size_t k = l.spec.window, s = l.spec.stride;
  const std::size_t oh = l.out.height, ow = l.out.width;
  cols.setZero(static_cast<Eigen::Index>(in.channels * k * k), static_cast<Eigen::Index>(oh * ow));
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        const auto row = static_cast<Eigen::Index>((c * k + ky) * k + kx);
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const long iy = long(oy * s + ky) - long(l.pad_before);
          if (iy < 0 || iy >= long(in.height)) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long ix = long(ox * s + kx) - long(l.pad_before);
            if (ix < 0 || ix >= long(in.width)) continue;
            cols(row, static_cast<Eigen::Index>(oy * ow + ox)) = x[(c * in.height + std::size_t(iy)) * in.width + std::size_t(ix)];
          }
        }
      }
}

inline void col2im_add(const Eigen::MatrixXd& cols, const Layer& l, double* dx) {
  const auto& in = l.in;
  const std::size_t k = l.spec.window, s = l.spec.stride;
  const std::size_t oh = l.out.height, ow = l.out.width;
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        const auto row = static_cast<Eigen::Index>((c * k + ky) * k + kx);
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const long iy = long(oy * s + ky) - long(l.pad_before);
          if (iy < 0 || iy >= long(in.height)) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long ix = long(ox * s + kx) - long(l.pad_before);
            if (ix < 0 || ix >= long(in.width)) continue;
            dx[(c * in.height + std::size_t(iy)) * in.width + std::size_t(ix)] +=
                cols(row, static_cast<Eigen::Index>(oy * ow + ox));
          }
        }
      }
}

}  // namespace detail

/// Per-layer activations kept for backpropagation.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;                 // input of each layer, features x batch
  std::vector<std::vector<std::size_t>> pool_argmax;   // per pool layer: batch x outputs flat input index
  Eigen::MatrixXd output;
};

inline void forward(const Model& m, const Eigen::MatrixXd& x, ForwardCache& cache) {
  if (static_cast<std::size_t>(x.rows()) != m.input_shape().size())
    throw DataError("input has " + std::to_string(x.rows()) + " features, model expects " +
                    std::to_string(m.input_shape().size()));
  const auto batch = x.cols();
  cache.inputs.resize(m.layers().size());
  cache.pool_argmax.resize(m.layers().size());
  Eigen::MatrixXd a = x;
  for (std::size_t i = 0; i < m.layers().size(); ++i) {
    const auto& l = m.layers()[i];
    cache.inputs[i] = a;
    switch (l.spec.kind) {
      case LayerKind::Dense: {
        const auto w = detail::weight_map(m, l, l.spec.units);
        const auto b = detail::bias_map(m, l);
        Eigen::MatrixXd z = w * a;
        z.colwise() += b;
        a = std::move(z);
        break;
      }
      case LayerKind::Conv2D: {
        const auto w = detail::weight_map(m, l, l.spec.filters);
        const auto b = detail::bias_map(m, l);
        const auto positions = static_cast<Eigen::Index>(l.out.height * l.out.width);
        Eigen::MatrixXd z(static_cast<Eigen::Index>(l.out.size()), batch);
        Eigen::MatrixXd cols;
        for (Eigen::Index n = 0; n < batch; ++n) {
          detail::im2col(cache.inputs[i].col(n).data(), l, cols);
          Eigen::Map<RowMajorMat> y(z.col(n).data(), static_cast<Eigen::Index>(l.spec.filters), positions);
          y.noalias() = w * cols;
          y.colwise() += b;
        }
        a = std::move(z);
        break;
      }
      case LayerKind::MaxPool2D: {
        const auto& in = l.in;
        const std::size_t p = l.spec.window, s = l.spec.stride;
        const std::size_t outs = l.out.size();
        auto& arg = cache.pool_argmax[i];
        arg.assign(static_cast<std::size_t>(batch) * outs, 0);
        Eigen::MatrixXd z(static_cast<Eigen::Index>(outs), batch);
        for (Eigen::Index n = 0; n < batch; ++n) {
          const double* src = cache.inputs[i].col(n).data();
          for (std::size_t c = 0; c < in.channels; ++c)
            for (std::size_t oy = 0; oy < l.out.height; ++oy)
              for (std::size_t ox = 0; ox < l.out.width; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_idx = 0;
                // row-major scan with strict '>' keeps the first maximum
                for (std::size_t py = 0; py < p; ++py) {
                  const long iy = long(oy * s + py) - long(l.pad_before);
                  if (iy < 0 || iy >= long(in.height)) continue;
                  for (std::size_t px = 0; px < p; ++px) {
                    const long ix = long(ox * s + px) - long(l.pad_before);
                    if (ix < 0 || ix >= long(in.width)) continue;
                    const std::size_t idx = (c * in.height + std::size_t(iy)) * in.width + std::size_t(ix);
                    if (src[idx] > best) best = src[idx], best_idx = idx;
                  }
                }
                const std::size_t o = (c * l.out.height + oy) * l.out.width + ox;
                z(static_cast<Eigen::Index>(o), n) = best;
                arg[static_cast<std::size_t>(n) * outs + o] = best_idx;
              }
        }
        a = std::move(z);
        break;
      }
      case LayerKind::Flatten:
        break;
      case LayerKind::ReLU:
        a = a.cwiseMax(0.0);
        break;
    }
  }
  cache.output = std::move(a);
}

/// Predictions for a feature matrix (features x batch), evaluated in chunks of `chunk` columns.
inline Eigen::VectorXd predict(const Model& m, const Eigen::MatrixXd& x, Eigen::Index chunk = 256) {
  Eigen::VectorXd out(x.cols());
  ForwardCache cache;
  for (Eigen::Index start = 0; start < x.cols(); start += chunk) {
    const Eigen::Index n = std::min(chunk, x.cols() - start);
    forward(m, x.middleCols(start, n), cache);
    out.segment(start, n) = cache.output.row(0).transpose();
  }
  if (x.cols() == 0) forward(m, x, cache);
  return out;
}

/// Single-sample prediction.
inline double forward(const Model& m, std::span<const double> features) {
  if (features.size() != m.input_shape().size())
    throw DataError("feature vector has length " + std::to_string(features.size()) + ", model expects " +
                    std::to_string(m.input_shape().size()));
  const Eigen::MatrixXd x = Eigen::Map<const Eigen::VectorXd>(features.data(), static_cast<Eigen::Index>(features.size()));
  return predict(m, x)(0);
}

/// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output) (1 x batch).
inline void backward(const Model& m, const ForwardCache& cache, Eigen::MatrixXd delta, ParamVector& grad) {
  grad.assign(m.parameter_count(), 0.0);
  const auto batch = delta.cols();
  for (std::size_t i = m.layers().size(); i-- > 0;) {
    const auto& l = m.layers()[i];
    const auto& a = cache.inputs[i];
    switch (l.spec.kind) {
      case LayerKind::Dense: {
        const auto w = detail::weight_map(m, l, l.spec.units);
        Eigen::Map<Eigen::MatrixXd> gw(grad.data() + l.offset, w.rows(), w.cols());
        Eigen::Map<Eigen::VectorXd> gb(grad.data() + l.offset + l.weights, static_cast<Eigen::Index>(l.biases));
        gw.noalias() += delta * a.transpose();
        gb += delta.rowwise().sum();
        if (i > 0) delta = w.transpose() * delta;
        break;
      }
      case LayerKind::Conv2D: {
        const auto w = detail::weight_map(m, l, l.spec.filters);
        Eigen::Map<Eigen::MatrixXd> gw(grad.data() + l.offset, w.rows(), w.cols());
        Eigen::Map<Eigen::VectorXd> gb(grad.data() + l.offset + l.weights, static_cast<Eigen::Index>(l.biases));
        const auto positions = static_cast<Eigen::Index>(l.out.height * l.out.width);
        Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(l.in.size()), batch);
        Eigen::MatrixXd cols, dcols;
        for (Eigen::Index n = 0; n < batch; ++n) {
          detail::im2col(a.col(n).data(), l, cols);
          Eigen::Map<const RowMajorMat> dy(delta.col(n).data(), static_cast<Eigen::Index>(l.spec.filters), positions);
          gw.noalias() += dy * cols.transpose();
          gb += dy.rowwise().sum();
          if (i > 0) {
            dcols.noalias() = w.transpose() * dy;
            detail::col2im_add(dcols, l, dx.col(n).data());
          }
        }
        delta = std::move(dx);
        break;
      }
      case LayerKind::MaxPool2D: {
        const std::size_t outs = l.out.size();
        const auto& arg = cache.pool_argmax[i];
        Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(l.in.size()), batch);
        for (Eigen::Index n = 0; n < batch; ++n)
          for (std::size_t o = 0; o < outs; ++o)
            dx(static_cast<Eigen::Index>(arg[static_cast<std::size_t>(n) * outs + o]), n) +=
                delta(static_cast<Eigen::Index>(o), n);
        delta = std::move(dx);
        break;
      }
      case LayerKind::Flatten:
        break;
      case LayerKind::ReLU:
        delta = delta.cwiseProduct((a.array() > 0.0).cast<double>().matrix());
        break;
    }
  }
}

/// Mean squared error of a batch and its parameter gradient.
inline double loss_and_gradient(const Model& m, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                ParamVector& grad) {
  ForwardCache cache;
  forward(m, x, cache);
  const Eigen::RowVectorXd err = cache.output.row(0) - y.transpose();
  const double n = static_cast<double>(y.size());
  const double loss = err.squaredNorm() / n;
  backward(m, cache, (2.0 / n) * err, grad);
  return loss;
}

inline double mean_squared_loss(const Model& m, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  return (predict(m, x) - y).squaredNorm() / static_cast<double>(y.size());
}

/// Backprop gradient of (f(x) - label)^2.
inline ParamVector gradients(const Model& m, std::span<const double> features, double label) {
  const Eigen::MatrixXd x = Eigen::Map<const Eigen::VectorXd>(features.data(), static_cast<Eigen::Index>(features.size()));
  Eigen::VectorXd y(1);
  y << label;
  ParamVector g;
  loss_and_gradient(m, x, y, g);
  return g;
}

/// Max over parameters of |g_bp - g_fd| / max(|g_bp| + |g_fd|, 1e-6), with central differences.
inline double gradient_check(const Model& model, std::span<const double> features, double label, double step = 1e-5) {
  const auto g = gradients(model, features, label);
  Model probe = model;
  auto loss = [&] {
    const double e = forward(probe, features) - label;
    return e * e;
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < probe.parameter_count(); ++k) {
    const double orig = probe.params()[k];
    probe.params()[k] = orig + step;
    const double up = loss();
    probe.params()[k] = orig - step;
    const double down = loss();
    probe.params()[k] = orig;
    const double fd = (up - down) / (2.0 * step);
    const double rel = std::abs(g[k] - fd) / std::max(std::abs(g[k]) + std::abs(fd), 1e-6);
    worst = std::max(worst, rel);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Training

enum class Optimizer { Adam, Sgd };

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;  // 0: full batch
  double learning_rate = 1e-3;
  /// Learning rate multiplier reached by the last epoch (geometric decay); 1 keeps it constant.
  double final_lr_fraction = 1.0;
  Optimizer optimizer = Optimizer::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  double validation_fraction = 0.0;
  bool shuffle = true;
};

struct EpochStats {
  double train_loss = 0.0;
  double validation_loss = std::numeric_limits<double>::quiet_NaN();
  double learning_rate = 0.0;
};

using History = std::vector<EpochStats>;

struct TrainResult {
  Model model;
  History history;
};

namespace detail {

class AdamState {
 public:
  explicit AdamState(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

  void step(ParamVector& p, const ParamVector& g, const TrainConfig& c, double lr) {
    ++t_;
    const double b1t = 1.0 - std::pow(c.beta1, double(t_));
    const double b2t = 1.0 - std::pow(c.beta2, double(t_));
    for (std::size_t k = 0; k < p.size(); ++k) {
      m_[k] = c.beta1 * m_[k] + (1.0 - c.beta1) * g[k];
      v_[k] = c.beta2 * v_[k] + (1.0 - c.beta2) * g[k] * g[k];
      p[k] -= lr * (m_[k] / b1t) / (std::sqrt(v_[k] / b2t) + c.epsilon);
    }
  }

 private:
  ParamVector m_, v_;
  std::size_t t_ = 0;
};

}  // namespace detail

/// Mini-batch minimization of mean squared error. Features are columns of `x`.
/// Loss history is evaluated on the full training (and validation) split after each epoch.
inline TrainResult train(Model model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const TrainConfig& config) {
  if (x.cols() != y.size()) throw DataError("feature and label counts differ");
  if (static_cast<std::size_t>(x.rows()) != model.input_shape().size())
    throw DataError("dataset feature length " + std::to_string(x.rows()) + " does not match model input " +
                    std::to_string(model.input_shape().size()));
  if (!(config.learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (!(config.validation_fraction >= 0.0 && config.validation_fraction < 1.0))
    throw ConfigError("validation fraction must lie in [0, 1)");
  const auto n = static_cast<std::size_t>(y.size());
  if (n == 0) throw DataError("empty training set");

  Rng rng(config.seed);
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (config.shuffle) std::shuffle(order.begin(), order.end(), rng.engine());
  const auto n_val = static_cast<std::size_t>(std::floor(config.validation_fraction * double(n)));
  std::vector<Eigen::Index> train_idx(order.begin(), order.end() - static_cast<long>(n_val));
  std::vector<Eigen::Index> val_idx(order.end() - static_cast<long>(n_val), order.end());
  if (train_idx.empty()) throw DataError("validation split leaves no training samples");
  if (!config.shuffle) std::sort(train_idx.begin(), train_idx.end());

  const Eigen::MatrixXd x_train = x(Eigen::all, train_idx);
  const Eigen::VectorXd y_train = y(train_idx);
  const Eigen::MatrixXd x_val = x(Eigen::all, val_idx);
  const Eigen::VectorXd y_val = y(val_idx);

  const std::size_t bs = config.batch_size == 0 ? train_idx.size() : std::min(config.batch_size, train_idx.size());
  detail::AdamState adam(model.parameter_count());
  ParamVector grad;
  std::vector<Eigen::Index> perm(train_idx.size());
  std::iota(perm.begin(), perm.end(), 0);
  History history;
  const double decay =
      config.epochs > 1 ? std::pow(config.final_lr_fraction, 1.0 / double(config.epochs - 1)) : 1.0;
  double lr = config.learning_rate;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle && bs < perm.size()) std::shuffle(perm.begin(), perm.end(), rng.engine());
    for (std::size_t start = 0, b = 0; start < perm.size(); start += bs, ++b) {
      const std::size_t end = std::min(start + bs, perm.size());
      double loss;
      if (start == 0 && end == perm.size()) {
        loss = loss_and_gradient(model, x_train, y_train, grad);
      } else {
        const std::vector<Eigen::Index> idx(perm.begin() + long(start), perm.begin() + long(end));
        loss = loss_and_gradient(model, x_train(Eigen::all, idx), y_train(idx), grad);
      }
      if (!std::isfinite(loss))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      if (config.optimizer == Optimizer::Adam) {
        adam.step(model.params(), grad, config, lr);
      } else {
        for (std::size_t k = 0; k < grad.size(); ++k) model.params()[k] -= lr * grad[k];
      }
    }
    EpochStats stats;
    stats.learning_rate = lr;
    stats.train_loss = mean_squared_loss(model, x_train, y_train);
    if (!std::isfinite(stats.train_loss))
      throw TrainingError("non-finite training loss after epoch " + std::to_string(epoch));
    if (n_val > 0) stats.validation_loss = mean_squared_loss(model, x_val, y_val);
    history.push_back(stats);
    lr *= decay;
  }
  return {std::move(model), std::move(history)};
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   qent-model 1
//   input <channels> <height> <width>
//   layers <n>
//   dense <units> | relu | flatten | conv2d <filters> <kernel> <stride> <valid|same>
//   | maxpool2d <pool> <stride> <valid|same>
//   params <count>
//   <one value per line, 17 significant digits>

inline void write_model(std::ostream& os, const Model& m) {
  const auto& in = m.input_shape();
  os << "qent-model " << Model::kFormatVersion << '\n'
     << "input " << in.channels << ' ' << in.height << ' ' << in.width << '\n'
     << "layers " << m.layers().size() << '\n';
  for (const auto& l : m.layers()) {
    const auto& s = l.spec;
    os << kind_name(s.kind);
    const char* pad = s.padding == Padding::Same ? "same" : "valid";
    if (s.kind == LayerKind::Dense) os << ' ' << s.units;
    if (s.kind == LayerKind::Conv2D) os << ' ' << s.filters << ' ' << s.window << ' ' << s.stride << ' ' << pad;
    if (s.kind == LayerKind::MaxPool2D) os << ' ' << s.window << ' ' << s.stride << ' ' << pad;
    os << '\n';
  }
  os << "params " << m.parameter_count() << '\n';
  char buf[64];
  for (double v : m.params()) {
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, 16);
    os.write(buf, res.ptr - buf);
    os.put('\n');
  }
}

inline Model read_model(std::istream& is, const std::string& name = "<stream>") {
  std::string line;
  auto next = [&](const char* field) {
    if (!std::getline(is, line)) throw DataError(name + ": missing field '" + field + "'");
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key != field) throw DataError(name + ": expected field '" + field + "', found '" + key + "'");
    return ss;
  };
  auto bad = [&](const char* field) { return DataError(name + ": corrupt field '" + std::string(field) + "'"); };

  int version = 0;
  if (!(next("qent-model") >> version)) throw bad("qent-model");
  if (version != Model::kFormatVersion)
    throw DataError(name + ": unsupported model version " + std::to_string(version) + " (expected " +
                    std::to_string(Model::kFormatVersion) + ")");
  Shape in;
  if (!(next("input") >> in.channels >> in.height >> in.width)) throw bad("input");
  std::size_t nlayers = 0;
  if (!(next("layers") >> nlayers)) throw bad("layers");
  std::vector<LayerSpec> specs;
  auto parse_pad = [&](const std::string& p) {
    if (p == "valid") return Padding::Valid;
    if (p == "same") return Padding::Same;
    throw bad("layer padding");
  };
  for (std::size_t i = 0; i < nlayers; ++i) {
    if (!std::getline(is, line)) throw DataError(name + ": missing layer " + std::to_string(i));
    std::istringstream ss(line);
    std::string kind, pad;
    ss >> kind;
    LayerSpec s;
    if (kind == "dense") {
      s.kind = LayerKind::Dense;
      if (!(ss >> s.units)) throw bad("dense");
    } else if (kind == "conv2d") {
      s.kind = LayerKind::Conv2D;
      if (!(ss >> s.filters >> s.window >> s.stride >> pad)) throw bad("conv2d");
      s.padding = parse_pad(pad);
    } else if (kind == "maxpool2d") {
      s.kind = LayerKind::MaxPool2D;
      if (!(ss >> s.window >> s.stride >> pad)) throw bad("maxpool2d");
      s.padding = parse_pad(pad);
    } else if (kind == "flatten") {
      s.kind = LayerKind::Flatten;
    } else if (kind == "relu") {
      s.kind = LayerKind::ReLU;
    } else {
      throw DataError(name + ": unknown layer kind '" + kind + "'");
    }
    specs.push_back(s);
  }
  Model m;
  try {
    m = Model(in, std::move(specs));
  } catch (const ConfigError& e) {
    throw DataError(name + ": inconsistent layer specs: " + e.what());
  }
  std::size_t count = 0;
  if (!(next("params") >> count)) throw bad("params");
  if (count != m.parameter_count())
    throw DataError(name + ": field 'params' declares " + std::to_string(count) + " values, layers need " +
                    std::to_string(m.parameter_count()));
  for (std::size_t k = 0; k < count; ++k) {
    if (!std::getline(is, line)) throw DataError(name + ": truncated at parameter " + std::to_string(k));
    double v = 0.0;
    const auto res = std::from_chars(line.data(), line.data() + line.size(), v);
    if (res.ec != std::errc{} || res.ptr != line.data() + line.size() || !std::isfinite(v))
      throw DataError(name + ": corrupt parameter " + std::to_string(k));
    m.params()[k] = v;
  }
  return m;
}

inline void save_model(const Model& m, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
  write_model(os, m);
  if (!os) throw DataError("write failed for '" + path.string() + "'");
}

inline Model load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open model '" + path.string() + "'");
  return read_model(is, path.string());
}

}  // namespace qent::nn
