#pragma once

// Minimal feedforward layer stack with hand-derived backward passes.
//
// Batches are matrices with one sample per column. Multi-channel signals are
// flattened channel-major: element (c, t) of a C x L signal sits at row c*L + t.
//
// Flat parameter ordering (also the checkpoint ordering):
//   vp_feature / vp_filter : tau, lambda
//   fully_connected        : W (output x input, row-major), then bias (output)
//   conv1d                 : kernels [k][c][j] (k-major, then input channel,
//                            then tap), then bias (k)
//   relu, softmax, pooling : none

#include "vpnet/vp.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace vpnet {

enum class LayerKind { vp_feature, vp_filter, fully_connected, relu, softmax, conv1d, pool_mean, pool_max };

inline std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::vp_feature: return "vp_feature";
    case LayerKind::vp_filter: return "vp_filter";
    case LayerKind::fully_connected: return "fully_connected";
    case LayerKind::relu: return "relu";
    case LayerKind::softmax: return "softmax";
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::pool_mean: return "pool_mean";
    case LayerKind::pool_max: return "pool_max";
  }
  return "unknown";
}

inline std::optional<LayerKind> layer_kind_from_string(std::string_view s) {
  for (auto k : {LayerKind::vp_feature, LayerKind::vp_filter, LayerKind::fully_connected,
                 LayerKind::relu, LayerKind::softmax, LayerKind::conv1d, LayerKind::pool_mean,
                 LayerKind::pool_max})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

inline bool is_vp(LayerKind k) { return k == LayerKind::vp_feature || k == LayerKind::vp_filter; }

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t input = 0;        // flat input size
  std::size_t output = 0;       // flat output size
  std::size_t basis = 0;        // vp: number of basis functions
  std::size_t in_channels = 1;  // conv1d / pooling
  std::size_t channels = 0;     // conv1d: number of kernels
  std::size_t kernel = 0;       // conv1d: kernel width
  std::size_t pool = 0;         // pooling window
  VpParams vp_init{};           // vp: initial (tau, lambda)

  std::size_t parameter_count() const {
    switch (kind) {
      case LayerKind::vp_feature:
      case LayerKind::vp_filter: return 2;
      case LayerKind::fully_connected: return output * input + output;
      case LayerKind::conv1d: return channels * in_channels * kernel + channels;
      default: return 0;
    }
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkSpec {
  std::size_t input_length = 0;
  double interval_a = 0.0;  // sampling interval of the VP grid
  double interval_b = 0.0;
  std::vector<LayerSpec> layers;

  std::size_t output_size() const { return layers.empty() ? input_length : layers.back().output; }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (const auto& l : layers) total += l.parameter_count();
    return total;
  }

  SampleGrid grid() const { return SampleGrid::uniform(input_length, interval_a, interval_b); }

  void validate() const {
    if (layers.empty()) throw InvalidArgument("NetworkSpec: no layers");
    if (input_length < 1) throw InvalidArgument("NetworkSpec: input_length must be >= 1");
    std::size_t size = input_length;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const LayerSpec& l = layers[i];
      const std::string where = "NetworkSpec: layer " + std::to_string(i) + " (" +
                                std::string(to_string(l.kind)) + ")";
      if (l.input != size)
        throw InvalidArgument(where + ": input size " + std::to_string(l.input) +
                              " does not match previous output " + std::to_string(size));
      if (l.output < 1) throw InvalidArgument(where + ": output size must be >= 1");
      switch (l.kind) {
        case LayerKind::vp_feature:
        case LayerKind::vp_filter:
          if (i != 0) throw InvalidArgument(where + ": VP layers must come first");
          if (l.basis < 1 || l.basis > l.input) throw InvalidArgument(where + ": need 1 <= n <= m");
          if (l.output != (l.kind == LayerKind::vp_feature ? l.basis : l.input))
            throw InvalidArgument(where + ": output size inconsistent with mode");
          if (!(interval_a < interval_b)) throw InvalidArgument(where + ": need interval a < b");
          require_valid(l.vp_init);
          break;
        case LayerKind::relu:
        case LayerKind::softmax:
          if (l.output != l.input) throw InvalidArgument(where + ": output must equal input");
          break;
        case LayerKind::conv1d:
          if (l.in_channels < 1 || l.channels < 1 || l.input % l.in_channels != 0)
            throw InvalidArgument(where + ": bad channel configuration");
          if (l.kernel < 1 || l.kernel > l.input / l.in_channels)
            throw InvalidArgument(where + ": kernel wider than input");
          if (l.output != l.channels * (l.input / l.in_channels))
            throw InvalidArgument(where + ": output must be channels * length");
          break;
        case LayerKind::pool_mean:
        case LayerKind::pool_max: {
          if (l.in_channels < 1 || l.input % l.in_channels != 0)
            throw InvalidArgument(where + ": bad channel configuration");
          const std::size_t len = l.input / l.in_channels;
          if (l.pool < 1 || l.pool > len) throw InvalidArgument(where + ": bad pool size");
          if (l.output != l.in_channels * (len / l.pool))
            throw InvalidArgument(where + ": output must be channels * floor(length / pool)");
          break;
        }
        case LayerKind::fully_connected: break;
      }
      size = l.output;
    }
  }
};

namespace layers {

inline LayerSpec vp(std::size_t m, std::size_t n, VpParams init, LayerKind mode = LayerKind::vp_feature) {
  LayerSpec s;
  s.kind = mode;
  s.input = m;
  s.basis = n;
  s.output = mode == LayerKind::vp_feature ? n : m;
  s.vp_init = init;
  return s;
}

inline LayerSpec dense(std::size_t in, std::size_t out) {
  LayerSpec s;
  s.kind = LayerKind::fully_connected;
  s.input = in;
  s.output = out;
  return s;
}

inline LayerSpec relu(std::size_t size) {
  LayerSpec s;
  s.kind = LayerKind::relu;
  s.input = s.output = size;
  return s;
}

inline LayerSpec softmax(std::size_t size) {
  LayerSpec s;
  s.kind = LayerKind::softmax;
  s.input = s.output = size;
  return s;
}

inline LayerSpec conv1d(std::size_t length, std::size_t in_channels, std::size_t kernels, std::size_t width) {
  LayerSpec s;
  s.kind = LayerKind::conv1d;
  s.input = length * in_channels;
  s.in_channels = in_channels;
  s.channels = kernels;
  s.kernel = width;
  s.output = kernels * length;
  return s;
}

inline LayerSpec pool(std::size_t length, std::size_t channels, std::size_t size, LayerKind mode) {
  LayerSpec s;
  s.kind = mode;
  s.input = length * channels;
  s.in_channels = channels;
  s.pool = size;
  s.output = channels * (size > 0 ? length / size : 0);
  return s;
}

}  // namespace layers

/// VP layer -> FC + ReLU -> FC + SoftMax on the sample-index interval [0, m-1].
inline NetworkSpec make_vpnet(std::size_t m, std::size_t n, std::size_t hidden, std::size_t classes,
                              VpParams init, LayerKind mode = LayerKind::vp_feature) {
  NetworkSpec s{m, 0.0, static_cast<double>(m) - 1.0, {}};
  s.layers.push_back(layers::vp(m, n, init, mode));
  const std::size_t width = s.layers.back().output;
  s.layers.push_back(layers::dense(width, hidden));
  s.layers.push_back(layers::relu(hidden));
  s.layers.push_back(layers::dense(hidden, classes));
  s.layers.push_back(layers::softmax(classes));
  return s;
}

/// One or more FC + ReLU layers followed by FC + SoftMax.
inline NetworkSpec make_fcnn(std::size_t m, const std::vector<std::size_t>& hidden, std::size_t classes) {
  NetworkSpec s{m, 0.0, static_cast<double>(m) - 1.0, {}};
  std::size_t width = m;
  for (std::size_t h : hidden) {
    s.layers.push_back(layers::dense(width, h));
    s.layers.push_back(layers::relu(h));
    width = h;
  }
  s.layers.push_back(layers::dense(width, classes));
  s.layers.push_back(layers::softmax(classes));
  return s;
}

/// conv1d (same length, zero padded) -> pooling -> FC + ReLU -> FC + SoftMax.
inline NetworkSpec make_cnn(std::size_t m, std::size_t kernels, std::size_t width, std::size_t pool_size,
                            LayerKind pool_mode, std::size_t hidden, std::size_t classes) {
  NetworkSpec s{m, 0.0, static_cast<double>(m) - 1.0, {}};
  s.layers.push_back(layers::conv1d(m, 1, kernels, width));
  s.layers.push_back(layers::pool(m, kernels, pool_size, pool_mode));
  const std::size_t features = s.layers.back().output;
  s.layers.push_back(layers::dense(features, hidden));
  s.layers.push_back(layers::relu(hidden));
  s.layers.push_back(layers::dense(hidden, classes));
  s.layers.push_back(layers::softmax(classes));
  return s;
}

/// Gradients of one layer: with respect to its input batch and its flat parameters.
struct GradientBundle {
  Matrix d_input;
  Vector d_params;
};

class Layer {
 public:
  explicit Layer(LayerSpec spec) : spec_(spec), params_(Vector::Zero(static_cast<Index>(spec.parameter_count()))) {}
  virtual ~Layer() = default;

  const LayerSpec& spec() const noexcept { return spec_; }
  LayerKind kind() const noexcept { return spec_.kind; }
  const Vector& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return static_cast<std::size_t>(params_.size()); }

  /// Replaces the parameters and drops every cached forward intermediate.
  void set_parameters(const Vector& p) {
    if (p.size() != params_.size())
      throw InvalidArgument("Layer::set_parameters: expected " + std::to_string(params_.size()) +
                            " values, got " + std::to_string(p.size()));
    params_ = p;
    invalidate();
  }

  /// Forward pass for a batch (one sample per column); caches what backward needs.
  virtual Matrix forward(const Matrix& x) = 0;

  /// Backward pass given d loss / d output for the cached batch.
  virtual GradientBundle backward(const Matrix& upstream) const = 0;

  virtual std::unique_ptr<Layer> clone() const = 0;

 protected:
  virtual void invalidate() {}

  void require_input(const Matrix& x) const {
    if (x.rows() != static_cast<Index>(spec_.input))
      throw InvalidArgument(std::string(to_string(spec_.kind)) + ": input has " +
                            std::to_string(x.rows()) + " rows, expected " + std::to_string(spec_.input));
  }

  void require_upstream(const Matrix& upstream, Index batch) const {
    if (upstream.rows() != static_cast<Index>(spec_.output) || upstream.cols() != batch)
      throw InvalidArgument(std::string(to_string(spec_.kind)) + ": upstream gradient shape mismatch");
  }

  [[noreturn]] void missing_cache() const {
    throw ContractViolation(std::string(to_string(spec_.kind)) + ": backward called without a cached forward pass");
  }

  LayerSpec spec_;
  Vector params_;
};

/// Feature (c = Phi^+ x) or filter (x_hat = Phi Phi^+ x) VP layer over the
/// adaptive Hermite system. theta is shared by all samples, so the basis is
/// rebuilt once per parameter update.
class VpLayer final : public Layer {
 public:
  VpLayer(LayerSpec spec, SampleGrid grid, bool fast_path = false)
      : Layer(spec), grid_(std::move(grid)), fast_path_(fast_path) {
    if (!is_vp(spec.kind)) throw InvalidArgument("VpLayer: not a VP layer spec");
    if (grid_.size() != spec.input) throw InvalidArgument("VpLayer: grid size does not match input");
    params_ << spec.vp_init.tau, spec.vp_init.lambda;
  }

  VpParams theta() const { return {params_(0), params_(1)}; }
  const SampleGrid& grid() const noexcept { return grid_; }
  bool feature_mode() const noexcept { return spec_.kind == LayerKind::vp_feature; }

  /// Basis and pseudoinverse for the current theta (built on demand).
  const SampledBasis& basis() {
    ensure_basis();
    return *basis_;
  }
  const PinvBundle& bundle() {
    ensure_basis();
    return *bundle_;
  }
  const SampledBasis* cached_basis() const { return basis_ ? &*basis_ : nullptr; }
  const PinvBundle* cached_bundle() const { return bundle_ ? &*bundle_ : nullptr; }
  const Matrix* cached_input() const { return input_ ? &*input_ : nullptr; }

  Matrix forward(const Matrix& x) override {
    require_input(x);
    ensure_basis();
    input_ = x;
    const Matrix c = bundle_->pinv * x;
    if (feature_mode()) return c;
    return bundle_->phi * c;
  }

  GradientBundle backward(const Matrix& upstream) const override {
    if (!input_ || !bundle_) missing_cache();
    const Matrix& x = *input_;
    require_upstream(upstream, x.cols());
    const PinvBundle& b = *bundle_;
    GradientBundle g;
    g.d_params = Vector::Zero(2);
    if (feature_mode()) {
      g.d_input = b.pinv.transpose() * upstream;
      for (std::size_t j = 0; j < 2; ++j) {
        const Matrix dp = d_pinv(b, basis_->dphi[j]);
        g.d_params(static_cast<Index>(j)) = (upstream.array() * (dp * x).array()).sum();
      }
    } else {
      g.d_input = b.pinv.transpose() * (b.phi.transpose() * upstream);
      const Matrix c = b.pinv * x;
      for (std::size_t j = 0; j < 2; ++j) {
        // dP x = A x + A^T x with A = (I - P) dPhi Phi^+, applied without forming P.
        const Matrix& dphi = basis_->dphi[j];
        const Matrix q = dphi - b.phi * (b.pinv * dphi);  // (I - P) dPhi, m x n
        const Matrix dpx = q * c + b.pinv.transpose() * (q.transpose() * x);
        g.d_params(static_cast<Index>(j)) = (upstream.array() * dpx.array()).sum();
      }
    }
    return g;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<VpLayer>(*this); }

 protected:
  void invalidate() override {
    basis_.reset();
    bundle_.reset();
    input_.reset();
  }

 private:
  void ensure_basis() {
    if (basis_) return;
    const VpParams p = theta();
    basis_ = fast_path_ ? adaptive_hermite_checked(grid_, spec_.basis, p)
                        : adaptive_hermite(grid_, spec_.basis, p);
    bundle_ = pseudoinverse(*basis_);
    if (last_rank_ && *last_rank_ != bundle_->rank)
      warn("VP layer: rank of Phi changed from " + std::to_string(*last_rank_) + " to " +
           std::to_string(bundle_->rank) + "; derivative formulas assume constant rank");
    last_rank_ = bundle_->rank;
  }

  SampleGrid grid_;
  bool fast_path_;
  std::optional<SampledBasis> basis_;
  std::optional<PinvBundle> bundle_;
  std::optional<Matrix> input_;
  std::optional<Index> last_rank_;
};

/// y = W x + b.
class DenseLayer final : public Layer {
 public:
  explicit DenseLayer(LayerSpec spec) : Layer(spec) {}

  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Eigen::Map<const RowMajor> weights() const {
    return {params_.data(), static_cast<Index>(spec_.output), static_cast<Index>(spec_.input)};
  }
  Eigen::Map<const Vector> bias() const {
    return {params_.data() + spec_.output * spec_.input, static_cast<Index>(spec_.output)};
  }

  Matrix forward(const Matrix& x) override {
    require_input(x);
    input_ = x;
    return (weights() * x).colwise() + bias();
  }

  GradientBundle backward(const Matrix& upstream) const override {
    if (!input_) missing_cache();
    require_upstream(upstream, input_->cols());
    GradientBundle g;
    g.d_input = weights().transpose() * upstream;
    g.d_params.resize(params_.size());
    Eigen::Map<RowMajor> dw(g.d_params.data(), static_cast<Index>(spec_.output), static_cast<Index>(spec_.input));
    dw.noalias() = upstream * input_->transpose();
    g.d_params.tail(static_cast<Index>(spec_.output)) = upstream.rowwise().sum();
    return g;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<DenseLayer>(*this); }

 protected:
  void invalidate() override { input_.reset(); }

 private:
  std::optional<Matrix> input_;
};

/// max(0, x); the subgradient at 0 is 0.
class ReluLayer final : public Layer {
 public:
  explicit ReluLayer(LayerSpec spec) : Layer(spec) {}

  Matrix forward(const Matrix& x) override {
    require_input(x);
    input_ = x;
    return x.cwiseMax(0.0);
  }

  GradientBundle backward(const Matrix& upstream) const override {
    if (!input_) missing_cache();
    require_upstream(upstream, input_->cols());
    GradientBundle g;
    g.d_input = (input_->array() > 0.0).select(upstream, 0.0);
    g.d_params = Vector(0);
    return g;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReluLayer>(*this); }

 private:
  std::optional<Matrix> input_;
};

/// Column-wise softmax with max subtraction.
inline Matrix softmax_columns(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (Index j = 0; j < z.cols(); ++j) {
    const double mx = z.col(j).maxCoeff();
    out.col(j) = (z.col(j).array() - mx).exp();
    out.col(j) /= out.col(j).sum();
  }
  return out;
}

class SoftmaxLayer final : public Layer {
 public:
  explicit SoftmaxLayer(LayerSpec spec) : Layer(spec) {}

  Matrix forward(const Matrix& x) override {
    require_input(x);
    output_ = softmax_columns(x);
    return *output_;
  }

  /// Jacobian-vector product p * (u - <p, u>). Training uses the fused
  /// softmax + cross-entropy gradient instead.
  GradientBundle backward(const Matrix& upstream) const override {
    if (!output_) missing_cache();
    require_upstream(upstream, output_->cols());
    const Matrix& p = *output_;
    const Eigen::RowVectorXd dots = (p.array() * upstream.array()).colwise().sum();
    GradientBundle g;
    g.d_input = p.array() * (upstream.rowwise() - dots).array();
    g.d_params = Vector(0);
    return g;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<SoftmaxLayer>(*this); }

 private:
  std::optional<Matrix> output_;
};

/// Cross-correlation, stride 1, zero padding to keep the length; for even
/// widths the extra tap sits on the right: left pad = (w - 1) / 2.
class Conv1dLayer final : public Layer {
 public:
  explicit Conv1dLayer(LayerSpec spec) : Layer(spec) {}

  Index length() const { return static_cast<Index>(spec_.input / spec_.in_channels); }
  Index taps() const { return static_cast<Index>(spec_.in_channels * spec_.kernel); }

  Eigen::Map<const DenseLayer::RowMajor> kernels() const {
    return {params_.data(), static_cast<Index>(spec_.channels), taps()};
  }
  Eigen::Map<const Vector> bias() const {
    return {params_.data() + spec_.channels * taps(), static_cast<Index>(spec_.channels)};
  }

  Matrix forward(const Matrix& x) override {
    require_input(x);
    input_ = x;
    const Index len = length();
    const Index k = static_cast<Index>(spec_.channels);
    Matrix out(static_cast<Index>(spec_.output), x.cols());
    Matrix patches;
    for (Index b = 0; b < x.cols(); ++b) {
      im2col(x.col(b), patches);
      Matrix y = kernels() * patches;  // k x len
      y.colwise() += bias();
      for (Index o = 0; o < k; ++o) out.col(b).segment(o * len, len) = y.row(o).transpose();
    }
    return out;
  }

  GradientBundle backward(const Matrix& upstream) const override {
    if (!input_) missing_cache();
    const Matrix& x = *input_;
    require_upstream(upstream, x.cols());
    const Index len = length();
    const Index k = static_cast<Index>(spec_.channels);
    GradientBundle g;
    g.d_input = Matrix::Zero(x.rows(), x.cols());
    g.d_params = Vector::Zero(params_.size());
    Eigen::Map<DenseLayer::RowMajor> dk(g.d_params.data(), k, taps());
    Eigen::Map<Vector> db(g.d_params.data() + k * taps(), k);
    Matrix patches;
    Matrix u(k, len);
    for (Index b = 0; b < x.cols(); ++b) {
      im2col(x.col(b), patches);
      for (Index o = 0; o < k; ++o) u.row(o) = upstream.col(b).segment(o * len, len).transpose();
      dk.noalias() += u * patches.transpose();
      db += u.rowwise().sum();
      const Matrix dpatch = kernels().transpose() * u;  // taps x len
      col2im_add(dpatch, g.d_input.col(b));
    }
    return g;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv1dLayer>(*this); }

 protected:
  void invalidate() override { input_.reset(); }

 private:
  Index left_pad() const { return static_cast<Index>((spec_.kernel - 1) / 2); }

  template <typename Col>
  void im2col(const Col& x, Matrix& patches) const {
    const Index len = length();
    const Index w = static_cast<Index>(spec_.kernel);
    const Index pad = left_pad();
    patches.setZero(taps(), len);
    for (Index c = 0; c < static_cast<Index>(spec_.in_channels); ++c)
      for (Index j = 0; j < w; ++j)
        for (Index t = 0; t < len; ++t) {
          const Index src = t + j - pad;
          if (src >= 0 && src < len) patches(c * w + j, t) = x(c * len + src);
        }
  }

  template <typename Col>
  void col2im_add(const Matrix& dpatch, Col&& dx) const {
    const Index len = length();
    const Index w = static_cast<Index>(spec_.kernel);
    const Index pad = left_pad();
    for (Index c = 0; c < static_cast<Index>(spec_.in_channels); ++c)
      for (Index j = 0; j < w; ++j)
        for (Index t = 0; t < len; ++t) {
          const Index src = t + j - pad;
          if (src >= 0 && src < len) dx(c * len + src) += dpatch(c * w + j, t);
        }
  }

  std::optional<Matrix> input_;
};

/// Non-overlapping mean or max pooling per channel; a trailing remainder
/// shorter than the window is dropped. Max ties go to the first index.
class PoolLayer final : public Layer {
 public:
  explicit PoolLayer(LayerSpec spec) : Layer(spec) {}

  Matrix forward(const Matrix& x) override {
    require_input(x);
    const Index channels = static_cast<Index>(spec_.in_channels);
    const Index len = static_cast<Index>(spec_.input / spec_.in_channels);
    const Index size = static_cast<Index>(spec_.pool);
    const Index outlen = len / size;
    Matrix out(static_cast<Index>(spec_.output), x.cols());
    const bool is_max = spec_.kind == LayerKind::pool_max;
    if (is_max) argmax_.resize(out.rows(), out.cols());
    for (Index b = 0; b < x.cols(); ++b)
      for (Index c = 0; c < channels; ++c)
        for (Index o = 0; o < outlen; ++o) {
          const Index start = c * len + o * size;
          const Index dst = c * outlen + o;
          if (is_max) {
            Index best = start;
            for (Index i = start + 1; i < start + size; ++i)
              if (x(i, b) > x(best, b)) best = i;
            argmax_(dst, b) = best;
            out(dst, b) = x(best, b);
          } else {
            out(dst, b) = x.col(b).segment(start, size).mean();
          }
        }
    batch_ = x.cols();
    return out;
  }

  GradientBundle backward(const Matrix& upstream) const override {
    if (!batch_) missing_cache();
    require_upstream(upstream, *batch_);
    const Index channels = static_cast<Index>(spec_.in_channels);
    const Index len = static_cast<Index>(spec_.input / spec_.in_channels);
    const Index size = static_cast<Index>(spec_.pool);
    const Index outlen = len / size;
    GradientBundle g;
    g.d_input = Matrix::Zero(static_cast<Index>(spec_.input), upstream.cols());
    g.d_params = Vector(0);
    const bool is_max = spec_.kind == LayerKind::pool_max;
    for (Index b = 0; b < upstream.cols(); ++b)
      for (Index c = 0; c < channels; ++c)
        for (Index o = 0; o < outlen; ++o) {
          const Index dst = c * outlen + o;
          if (is_max) {
            g.d_input(argmax_(dst, b), b) += upstream(dst, b);
          } else {
            g.d_input.col(b).segment(c * len + o * size, size).array() +=
                upstream(dst, b) / static_cast<double>(size);
          }
        }
    return g;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<PoolLayer>(*this); }

 private:
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> argmax_;
  std::optional<Index> batch_;
};

inline std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const NetworkSpec& net) {
  switch (spec.kind) {
    case LayerKind::vp_feature:
    case LayerKind::vp_filter: return std::make_unique<VpLayer>(spec, net.grid());
    case LayerKind::fully_connected: return std::make_unique<DenseLayer>(spec);
    case LayerKind::relu: return std::make_unique<ReluLayer>(spec);
    case LayerKind::softmax: return std::make_unique<SoftmaxLayer>(spec);
    case LayerKind::conv1d: return std::make_unique<Conv1dLayer>(spec);
    case LayerKind::pool_mean:
    case LayerKind::pool_max: return std::make_unique<PoolLayer>(spec);
  }
  throw InvalidArgument("make_layer: unknown layer kind");
}

/// Ordered layer stack. Copies are deep.
class Network {
 public:
  explicit Network(NetworkSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    for (const auto& l : spec_.layers) layers_.push_back(make_layer(l, spec_));
  }

  Network(const Network& other) : spec_(other.spec_) {
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
  }
  Network& operator=(const Network& other) {
    if (this != &other) {
      Network tmp(other);
      *this = std::move(tmp);
    }
    return *this;
  }
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const NetworkSpec& spec() const noexcept { return spec_; }
  std::size_t size() const noexcept { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }

  /// The leading VP layer, if any.
  VpLayer* vp_layer() {
    return layers_.empty() ? nullptr : dynamic_cast<VpLayer*>(layers_.front().get());
  }

  std::size_t parameter_count() const { return spec_.parameter_count(); }

  /// Runs the first `end` layers (all by default) on a batch.
  Matrix forward(const Matrix& x, std::optional<std::size_t> end = std::nullopt) {
    Matrix h = x;
    const std::size_t stop = end.value_or(layers_.size());
    for (std::size_t i = 0; i < stop; ++i) h = layers_[i]->forward(h);
    return h;
  }

  Vector predict(const Vector& x) { return forward(Matrix(x)).col(0); }

  /// Reverse-order chain rule starting from d loss / d (output of layer end-1).
  /// Layers at index >= end get empty bundles.
  std::vector<GradientBundle> backward(const Matrix& upstream, std::optional<std::size_t> end = std::nullopt) const {
    const std::size_t stop = end.value_or(layers_.size());
    std::vector<GradientBundle> grads(layers_.size());
    Matrix u = upstream;
    for (std::size_t i = stop; i-- > 0;) {
      grads[i] = layers_[i]->backward(u);
      u = grads[i].d_input;
    }
    return grads;
  }

  Vector flat_parameters() const {
    Vector out(static_cast<Index>(parameter_count()));
    Index at = 0;
    for (const auto& l : layers_) {
      out.segment(at, l->parameters().size()) = l->parameters();
      at += l->parameters().size();
    }
    return out;
  }

  void set_flat_parameters(const Vector& p) {
    if (p.size() != static_cast<Index>(parameter_count()))
      throw InvalidArgument("Network::set_flat_parameters: size mismatch");
    Index at = 0;
    for (auto& l : layers_) {
      const Index k = l->parameters().size();
      l->set_parameters(p.segment(at, k));
      at += k;
    }
  }

  /// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases;
  /// VP layers restart from their spec's initial theta.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& l : layers_) {
      const LayerSpec& s = l->spec();
      Vector p = Vector::Zero(l->parameters().size());
      std::size_t weights = 0;
      double fan_in = 0, fan_out = 0;
      if (s.kind == LayerKind::fully_connected) {
        weights = s.input * s.output;
        fan_in = static_cast<double>(s.input);
        fan_out = static_cast<double>(s.output);
      } else if (s.kind == LayerKind::conv1d) {
        weights = s.channels * s.in_channels * s.kernel;
        fan_in = static_cast<double>(s.in_channels * s.kernel);
        fan_out = static_cast<double>(s.channels * s.kernel);
      } else if (is_vp(s.kind)) {
        p << s.vp_init.tau, s.vp_init.lambda;
      }
      if (weights > 0) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (std::size_t i = 0; i < weights; ++i) p(static_cast<Index>(i)) = dist(rng);
      }
      l->set_parameters(p);
    }
  }

 private:
  NetworkSpec spec_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace vpnet
