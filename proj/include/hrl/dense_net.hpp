#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hrl/random.hpp"

namespace hrl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation : std::uint8_t { RELU = 0, LINEAR = 1, SOFTMAX = 2 };

struct DenseLayer {
  Matrix weights;  // out x in
  Vector biases;   // out
  Activation activation = Activation::LINEAR;

  int in_dim() const { return static_cast<int>(weights.cols()); }
  int out_dim() const { return static_cast<int>(weights.rows()); }
};

/// Parameter gradients with the owning network's shapes, plus the gradient
/// with respect to the network input (one column per sample).
struct GradientTape {
  std::vector<Matrix> weight_grads;
  std::vector<Vector> bias_grads;
  Matrix input_grad;

  bool all_zero() const {
    for (const auto& w : weight_grads)
      if (!w.isZero(0.0)) return false;
    for (const auto& b : bias_grads)
      if (!b.isZero(0.0)) return false;
    return true;
  }
};

namespace detail {

inline void apply_activation(Matrix& z, Activation act) {
  switch (act) {
    case Activation::RELU:
      z = z.cwiseMax(0.0);
      break;
    case Activation::LINEAR:
      break;
    case Activation::SOFTMAX:
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        auto col = z.col(c);
        const double m = col.maxCoeff();
        col = (col.array() - m).exp().matrix();
        col /= col.sum();
      }
      break;
  }
}

}  // namespace detail

/// Fully-connected feed-forward network with cached activations for backprop.
///
/// Inputs are columns: a batch of B samples is an (in x B) matrix.
class DenseNet {
 public:
  DenseNet() = default;

  explicit DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { check_chain(); }

  /// Scaled-uniform initialization, limit sqrt(6 / (fan_in + fan_out)); zero biases.
  static DenseNet make(const std::vector<int>& sizes, Activation hidden, Activation output, Rng& rng) {
    auto net = zeros(sizes, hidden, output);
    for (auto& layer : net.layers_) {
      const double limit = std::sqrt(6.0 / (layer.in_dim() + layer.out_dim()));
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
          layer.weights(r, c) = rng.uniform(-limit, limit);
    }
    return net;
  }

  static DenseNet zeros(const std::vector<int>& sizes, Activation hidden, Activation output) {
    if (sizes.size() < 2) throw std::invalid_argument("DenseNet needs at least input and output sizes");
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      DenseLayer l;
      l.weights = Matrix::Zero(sizes[i + 1], sizes[i]);
      l.biases = Vector::Zero(sizes[i + 1]);
      l.activation = i + 2 == sizes.size() ? output : hidden;
      layers.push_back(std::move(l));
    }
    return DenseNet(std::move(layers));
  }

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  int in_dim() const { return layers_.front().in_dim(); }
  int out_dim() const { return layers_.back().out_dim(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.biases.size();
    return n;
  }

  Matrix forward_batch(const Matrix& input) {
    check_input(input.rows());
    cache_inputs_.clear();
    cache_outputs_.clear();
    Matrix x = input;
    for (const auto& l : layers_) {
      cache_inputs_.push_back(x);
      Matrix z = l.weights * x;
      z.colwise() += l.biases;
      detail::apply_activation(z, l.activation);
      cache_outputs_.push_back(z);
      x = std::move(z);
    }
    return x;
  }

  Vector forward(const Vector& input) { return forward_batch(input); }

  /// Forward pass without touching the backprop cache.
  Matrix predict_batch(const Matrix& input) const {
    check_input(input.rows());
    Matrix x = input;
    for (const auto& l : layers_) {
      Matrix z = l.weights * x;
      z.colwise() += l.biases;
      detail::apply_activation(z, l.activation);
      x = std::move(z);
    }
    return x;
  }

  Vector predict(const Vector& input) const { return predict_batch(input); }

  /// Backpropagates dL/d(output) through the cached forward pass. Parameter
  /// gradients are summed over the batch columns.
  GradientTape backward_batch(const Matrix& output_grad) const {
    if (cache_outputs_.empty()) throw std::logic_error("DenseNet::backward called without a cached forward pass");
    if (output_grad.rows() != out_dim() || output_grad.cols() != cache_outputs_.back().cols())
      throw std::invalid_argument("DenseNet::backward: gradient shape does not match cached output");
    GradientTape tape;
    tape.weight_grads.resize(layers_.size());
    tape.bias_grads.resize(layers_.size());
    Matrix g = output_grad;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      const auto& l = layers_[k];
      const Matrix& y = cache_outputs_[k];
      switch (l.activation) {
        case Activation::RELU:
          g = (y.array() > 0.0).select(g, 0.0);
          break;
        case Activation::LINEAR:
          break;
        case Activation::SOFTMAX: {
          // dz = y * (g - <y, g>) per column.
          const Eigen::RowVectorXd dots = (y.array() * g.array()).colwise().sum();
          g = (y.array() * (g.rowwise() - dots).array()).matrix();
          break;
        }
      }
      tape.weight_grads[k] = g * cache_inputs_[k].transpose();
      tape.bias_grads[k] = g.rowwise().sum();
      g = l.weights.transpose() * g;
    }
    tape.input_grad = std::move(g);
    return tape;
  }

  GradientTape backward(const Vector& output_grad) const { return backward_batch(output_grad); }

  /// theta <- theta - lr * sample_weight * grad
  void sgd_step(const GradientTape& tape, double lr, double sample_weight = 1.0) {
    if (tape.weight_grads.size() != layers_.size()) throw std::invalid_argument("sgd_step: tape shape mismatch");
    const double scale = lr * sample_weight;
    if (scale == 0.0) return;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      if (tape.weight_grads[k].rows() != layers_[k].weights.rows() ||
          tape.weight_grads[k].cols() != layers_[k].weights.cols())
        throw std::invalid_argument("sgd_step: tape shape mismatch");
      layers_[k].weights -= scale * tape.weight_grads[k];
      layers_[k].biases -= scale * tape.bias_grads[k];
    }
  }

  bool same_architecture(const DenseNet& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const auto& a = layers_[k];
      const auto& b = other.layers_[k];
      if (a.in_dim() != b.in_dim() || a.out_dim() != b.out_dim() || a.activation != b.activation) return false;
    }
    return true;
  }

  /// Copies parameters only; the destination keeps its own (cleared) cache.
  void copy_weights_from(const DenseNet& src) {
    if (!same_architecture(src)) throw std::invalid_argument("copy_weights: architecture mismatch");
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      layers_[k].weights = src.layers_[k].weights;
      layers_[k].biases = src.layers_[k].biases;
    }
    cache_inputs_.clear();
    cache_outputs_.clear();
  }

  bool parameters_equal(const DenseNet& other) const {
    if (!same_architecture(other)) return false;
    for (std::size_t k = 0; k < layers_.size(); ++k)
      if (layers_[k].weights != other.layers_[k].weights || layers_[k].biases != other.layers_[k].biases)
        return false;
    return true;
  }

  // Checkpoint: "HRLN", u32 version, u32 layer count, then per layer
  // {u32 in, u32 out, u8 activation, f64 weights row-major, f64 biases}.
  // All integers and doubles little-endian.
  static constexpr std::uint32_t kFormatVersion = 1;

  void write(std::ostream& out) const {
    out.write("HRLN", 4);
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(layers_.size()));
    for (const auto& l : layers_) {
      put_u32(out, static_cast<std::uint32_t>(l.in_dim()));
      put_u32(out, static_cast<std::uint32_t>(l.out_dim()));
      out.put(static_cast<char>(l.activation));
      for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weights.cols(); ++c) put_f64(out, l.weights(r, c));
      for (Eigen::Index r = 0; r < l.biases.size(); ++r) put_f64(out, l.biases(r));
    }
    if (!out) throw std::runtime_error("DenseNet::write: stream error");
  }

  static DenseNet read(std::istream& in) {
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (!in || std::memcmp(magic.data(), "HRLN", 4) != 0) throw std::runtime_error("DenseNet::read: bad magic");
    if (get_u32(in) != kFormatVersion) throw std::runtime_error("DenseNet::read: unsupported version");
    const std::uint32_t count = get_u32(in);
    if (count == 0 || count > 1024) throw std::runtime_error("DenseNet::read: bad layer count");
    std::vector<DenseLayer> layers(count);
    for (auto& l : layers) {
      const std::uint32_t in_dim = get_u32(in);
      const std::uint32_t out_dim = get_u32(in);
      const int act = in.get();
      if (!in || act < 0 || act > 2 || in_dim == 0 || out_dim == 0 || in_dim > (1u << 20) || out_dim > (1u << 20))
        throw std::runtime_error("DenseNet::read: bad layer header");
      l.activation = static_cast<Activation>(act);
      l.weights.resize(out_dim, in_dim);
      l.biases.resize(out_dim);
      for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = get_f64(in);
      for (Eigen::Index r = 0; r < l.biases.size(); ++r) l.biases(r) = get_f64(in);
    }
    if (!in) throw std::runtime_error("DenseNet::read: truncated stream");
    return DenseNet(std::move(layers));
  }

 private:
  void check_chain() const {
    if (layers_.empty()) throw std::invalid_argument("DenseNet: no layers");
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      if (layers_[k].biases.size() != layers_[k].weights.rows())
        throw std::invalid_argument("DenseNet: bias length does not match layer width");
      if (k > 0 && layers_[k].in_dim() != layers_[k - 1].out_dim())
        throw std::invalid_argument("DenseNet: layer dimensions do not chain");
    }
  }

  void check_input(Eigen::Index rows) const {
    if (rows != in_dim())
      throw std::invalid_argument("DenseNet: input length " + std::to_string(rows) + " != " +
                                  std::to_string(in_dim()));
  }

  static void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
  }
  static void put_f64(std::ostream& out, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, sizeof v);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
  }
  static std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4] = {};
    in.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  static double get_f64(std::istream& in) {
    unsigned char b[8] = {};
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double d;
    std::memcpy(&d, &v, sizeof d);
    return d;
  }

  std::vector<DenseLayer> layers_;
  std::vector<Matrix> cache_inputs_;
  std::vector<Matrix> cache_outputs_;
};

inline Vector forward(DenseNet& net, const Vector& input) { return net.forward(input); }
inline GradientTape backward(const DenseNet& net, const Vector& loss_grad) { return net.backward(loss_grad); }
inline void sgd_step(DenseNet& net, const GradientTape& tape, double lr, double sample_weight) {
  net.sgd_step(tape, lr, sample_weight);
}
inline void copy_weights(const DenseNet& src, DenseNet& dst) { dst.copy_weights_from(src); }

}  // namespace hrl
