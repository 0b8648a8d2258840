#pragma once

// Losses, the VP reconstruction penalty, Adam, the mini-batch training loop,
// evaluation metrics and hyperparameter grid search.

#include "vpnet/dataset.hpp"
#include "vpnet/nn.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace vpnet {

// ---------------------------------------------------------------- config

struct AdamConstants {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamConstants&, const AdamConstants&) = default;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double vp_penalty_alpha = 0.1;
  std::size_t batch_size = 512;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  AdamConstants adam{};

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw InvalidArgument("TrainConfig: learning_rate must be > 0");
    if (!(vp_penalty_alpha >= 0.0) || !std::isfinite(vp_penalty_alpha))
      throw InvalidArgument("TrainConfig: vp_penalty_alpha must be >= 0");
    if (batch_size < 1) throw InvalidArgument("TrainConfig: batch_size must be >= 1");
    if (epochs < 1) throw InvalidArgument("TrainConfig: epochs must be >= 1");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.epsilon > 0.0))
      throw InvalidArgument("TrainConfig: Adam constants need 0 <= beta < 1 and epsilon > 0");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// ---------------------------------------------------------------- losses

inline constexpr double kProbabilityClamp = 1e-12;

inline double clamp_probability(double p) {
  return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

/// (1/N) sum_i ||y_i - yhat_i||^2, one sample per column.
inline double loss_mse(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw InvalidArgument("loss_mse: shape mismatch");
  if (pred.cols() == 0) throw InvalidArgument("loss_mse: empty batch");
  return (pred - target).squaredNorm() / static_cast<double>(pred.cols());
}

/// -(1/N) sum_i [y log yhat + (1 - y) log(1 - yhat)], summed over output rows.
inline double loss_bce(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw InvalidArgument("loss_bce: shape mismatch");
  if (pred.cols() == 0) throw InvalidArgument("loss_bce: empty batch");
  double total = 0.0;
  for (Index j = 0; j < pred.cols(); ++j)
    for (Index i = 0; i < pred.rows(); ++i) {
      const double p = clamp_probability(pred(i, j));
      const double y = target(i, j);
      total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
  return total / static_cast<double>(pred.cols());
}

/// -(1/N) sum_i log p_i[label_i] for class probabilities stored per column.
inline double loss_ce(const Matrix& probs, std::span<const int> labels) {
  if (probs.cols() != static_cast<Index>(labels.size())) throw InvalidArgument("loss_ce: shape mismatch");
  if (labels.empty()) throw InvalidArgument("loss_ce: empty batch");
  double total = 0.0;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const int y = labels[j];
    if (y < 0 || y >= probs.rows()) throw InvalidArgument("loss_ce: label out of range");
    total -= std::log(clamp_probability(probs(y, static_cast<Index>(j))));
  }
  return total / static_cast<double>(labels.size());
}

/// d CE / d logits for softmax outputs: (p - onehot) / N.
inline Matrix softmax_ce_gradient(const Matrix& probs, std::span<const int> labels) {
  Matrix g = probs;
  for (std::size_t j = 0; j < labels.size(); ++j) g(labels[j], static_cast<Index>(j)) -= 1.0;
  return g / static_cast<double>(labels.size());
}

struct PenaltyResult {
  double value = 0.0;              // (alpha/N) sum r2(x_i) / ||x_i||^2
  Vector grad = Vector::Zero(2);   // gradient with respect to (tau, lambda)
  std::size_t skipped = 0;         // zero-energy samples left out
};

/// Reconstruction penalty of a feature VP layer for a batch (one signal per
/// column) and its gradient with respect to the VP parameters only.
inline PenaltyResult vp_penalty(const Matrix& x, const PinvBundle& bundle, const SampledBasis& basis, double alpha) {
  if (!(alpha >= 0.0)) throw InvalidArgument("vp_penalty: alpha must be >= 0");
  if (x.rows() != bundle.rows()) throw InvalidArgument("vp_penalty: signal length mismatch");
  PenaltyResult out;
  out.grad = Vector::Zero(static_cast<Index>(basis.dphi.size()));
  if (alpha == 0.0 || x.cols() == 0) return out;
  const Matrix c = bundle.pinv * x;
  const Matrix residual = x - bundle.phi * c;
  const double scale = alpha / static_cast<double>(x.cols());
  for (Index i = 0; i < x.cols(); ++i) {
    const double energy = x.col(i).squaredNorm();
    if (energy == 0.0) {
      ++out.skipped;
      continue;
    }
    out.value += scale * residual.col(i).squaredNorm() / energy;
    for (std::size_t j = 0; j < basis.dphi.size(); ++j)
      out.grad(static_cast<Index>(j)) +=
          scale * (-2.0 * residual.col(i).dot(basis.dphi[j] * c.col(i))) / energy;
  }
  if (out.skipped > 0)
    warn("vp_penalty: skipped " + std::to_string(out.skipped) + " zero-energy sample(s)");
  return out;
}

/// J_VP = J_CE + (alpha/N) sum r2(x_i)/||x_i||^2 for the VP layer's current basis.
inline double loss_vp(const Matrix& probs, std::span<const int> labels, const Matrix& x, VpLayer& vp, double alpha) {
  const double ce = loss_ce(probs, labels);
  if (alpha == 0.0) return ce;
  return ce + vp_penalty(x, vp.bundle(), vp.basis(), alpha).value;
}

// ---------------------------------------------------------------- Adam

struct AdamState {
  Vector m;
  Vector v;
  std::size_t t = 0;
};

/// One bias-corrected Adam update; `state.t` is incremented first so the
/// first call uses t = 1.
inline void adam_step(Vector& params, const Vector& grads, AdamState& state, double learning_rate,
                      const AdamConstants& c) {
  if (grads.size() != params.size()) throw InvalidArgument("adam_step: gradient size mismatch");
  if (!grads.allFinite()) throw NumericalError("adam_step: non-finite gradient", state.t + 1);
  if (state.m.size() != params.size()) {
    state.m = Vector::Zero(params.size());
    state.v = Vector::Zero(params.size());
    state.t = 0;
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  state.m = c.beta1 * state.m + (1.0 - c.beta1) * grads;
  state.v = c.beta2 * state.v + (1.0 - c.beta2) * grads.cwiseAbs2();
  const double corr1 = 1.0 - std::pow(c.beta1, t);
  const double corr2 = 1.0 - std::pow(c.beta2, t);
  for (Index i = 0; i < params.size(); ++i) {
    const double mhat = state.m(i) / corr1;
    const double vhat = state.v(i) / corr2;
    params(i) -= learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
  }
}

// ---------------------------------------------------------------- metrics

/// Unreduced fraction num / den.
struct Ratio {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Ratio& a, const Ratio& b) {
    return static_cast<unsigned __int128>(a.num) * b.den == static_cast<unsigned __int128>(b.num) * a.den;
  }
};

struct ClassCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  /// Se = TP / (TP + FN); empty when the denominator is zero.
  std::optional<Ratio> sensitivity() const {
    if (tp + fn == 0) return std::nullopt;
    return Ratio{tp, tp + fn};
  }
  /// +P = TP / (TP + FP); empty when the denominator is zero.
  std::optional<Ratio> positive_predictivity() const {
    if (tp + fp == 0) return std::nullopt;
    return Ratio{tp, tp + fp};
  }
};

struct ConfusionCounts {
  std::vector<ClassCounts> classes;
  std::uint64_t total = 0;
  std::uint64_t correct = 0;

  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }

  static ConfusionCounts from_predictions(std::span<const int> predicted, std::span<const int> labels,
                                          std::size_t class_count) {
    if (predicted.size() != labels.size()) throw InvalidArgument("ConfusionCounts: size mismatch");
    ConfusionCounts out;
    out.classes.resize(class_count);
    out.total = labels.size();
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto p = static_cast<std::size_t>(predicted[i]);
      const auto y = static_cast<std::size_t>(labels[i]);
      if (p >= class_count || y >= class_count) throw InvalidArgument("ConfusionCounts: class out of range");
      if (p == y) {
        ++out.correct;
        ++out.classes[y].tp;
      } else {
        ++out.classes[p].fp;
        ++out.classes[y].fn;
      }
    }
    for (auto& c : out.classes) c.tn = out.total - c.tp - c.fp - c.fn;
    return out;
  }
};

/// Lowest index wins ties.
inline std::vector<int> argmax_columns(const Matrix& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.cols()));
  for (Index j = 0; j < scores.cols(); ++j) {
    Index best = 0;
    for (Index i = 1; i < scores.rows(); ++i)
      if (scores(i, j) > scores(best, j)) best = i;
    out[static_cast<std::size_t>(j)] = static_cast<int>(best);
  }
  return out;
}

struct EvalResult {
  double accuracy = 0.0;
  ConfusionCounts counts;
};

inline constexpr std::size_t kEvalChunk = 2048;

inline std::vector<int> predict_labels(Network& net, const LabeledDataset& data) {
  std::vector<int> predicted;
  predicted.reserve(data.size());
  const Index n = static_cast<Index>(data.size());
  for (Index start = 0; start < n; start += static_cast<Index>(kEvalChunk)) {
    const Index count = std::min<Index>(static_cast<Index>(kEvalChunk), n - start);
    const Matrix out = net.forward(data.signals.middleRows(start, count).transpose());
    const auto chunk = argmax_columns(out);
    predicted.insert(predicted.end(), chunk.begin(), chunk.end());
  }
  return predicted;
}

inline EvalResult evaluate(Network& net, const LabeledDataset& data) {
  if (data.empty()) throw InvalidArgument("evaluate: empty dataset");
  if (data.signal_length() != net.spec().input_length)
    throw InvalidArgument("evaluate: signal length " + std::to_string(data.signal_length()) +
                          " does not match network input " + std::to_string(net.spec().input_length));
  const auto predicted = predict_labels(net, data);
  EvalResult r;
  r.counts = ConfusionCounts::from_predictions(predicted, data.labels,
                                               std::max(data.class_count, net.spec().output_size()));
  r.accuracy = r.counts.accuracy();
  return r;
}

// ---------------------------------------------------------------- training

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> train_accuracy;
  std::vector<double> test_accuracy;
  std::vector<double> epoch_seconds;
  bool diverged = false;
  std::size_t diverged_epoch = 0;
  std::string divergence_reason;
  EvalResult final_test;

  std::size_t epochs_run() const { return train_loss.size(); }
  double final_test_accuracy() const { return test_accuracy.empty() ? 0.0 : test_accuracy.back(); }
  double best_test_accuracy() const {
    return test_accuracy.empty() ? 0.0 : *std::max_element(test_accuracy.begin(), test_accuracy.end());
  }
};

/// Fisher-Yates driven directly by mt19937_64 so the order is the same on
/// every standard library.
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

/// Admissible dilation range used to clamp lambda after each update:
/// [6 / (b - a), m / (2h)], i.e. [6/(m-1), m/2] on the sample-index grid.
inline std::pair<double, double> lambda_bounds(const NetworkSpec& spec) {
  const double width = spec.interval_b - spec.interval_a;
  const double h = width / static_cast<double>(spec.input_length - 1);
  return {6.0 / width, 0.5 * static_cast<double>(spec.input_length) / h};
}

/// Mini-batch training with Adam, softmax + cross-entropy and (when the first
/// layer is a feature VP layer and alpha > 0) the VP reconstruction penalty.
/// Shuffling uses seed XOR epoch; a NaN loss or non-finite gradient stops
/// training and flags the report as diverged.
inline TrainReport train(Network& net, const LabeledDataset& train_data, const LabeledDataset& test_data,
                         const TrainConfig& config) {
  config.validate();
  if (train_data.empty()) throw InvalidArgument("train: empty training set");
  const NetworkSpec& spec = net.spec();
  if (spec.layers.back().kind != LayerKind::softmax)
    throw InvalidArgument("train: classification networks must end with a softmax layer");
  if (train_data.signal_length() != spec.input_length)
    throw InvalidArgument("train: signal length " + std::to_string(train_data.signal_length()) +
                          " does not match network input " + std::to_string(spec.input_length));
  if (spec.output_size() != train_data.class_count)
    throw InvalidArgument("train: network has " + std::to_string(spec.output_size()) + " outputs but data has " +
                          std::to_string(train_data.class_count) + " classes");

  const std::size_t n_layers = net.size();
  const std::size_t logits_end = n_layers - 1;  // softmax handled jointly with CE
  VpLayer* vp = net.vp_layer();
  const bool penalize = vp != nullptr && vp->feature_mode() && config.vp_penalty_alpha > 0.0;
  const auto [lambda_lo, lambda_hi] = lambda_bounds(spec);

  std::vector<AdamState> adam(n_layers);
  const Matrix xt = train_data.signals.transpose();  // m x N
  const std::size_t n = train_data.size();
  const Index m = static_cast<Index>(spec.input_length);

  TrainReport report;
  std::vector<int> batch_labels;
  Matrix xb;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = seeded_permutation(n, config.seed ^ static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    try {
      for (std::size_t start = 0; start < n; start += config.batch_size) {
        const std::size_t count = std::min(config.batch_size, n - start);
        xb.resize(m, static_cast<Index>(count));
        batch_labels.resize(count);
        for (std::size_t j = 0; j < count; ++j) {
          xb.col(static_cast<Index>(j)) = xt.col(static_cast<Index>(order[start + j]));
          batch_labels[j] = train_data.labels[order[start + j]];
        }

        const Matrix probs = net.forward(xb);
        double loss = loss_ce(probs, batch_labels);
        const auto predicted = argmax_columns(probs);
        for (std::size_t j = 0; j < count; ++j) correct += predicted[j] == batch_labels[j];

        auto grads = net.backward(softmax_ce_gradient(probs, batch_labels), logits_end);
        if (penalize) {
          const PenaltyResult pen = vp_penalty(xb, vp->bundle(), vp->basis(), config.vp_penalty_alpha);
          loss += pen.value;
          grads[0].d_params += pen.grad;
        }
        if (!std::isfinite(loss)) throw NumericalError("train: loss is not finite", epoch);
        loss_sum += loss * static_cast<double>(count);

        for (std::size_t l = 0; l < n_layers; ++l) {
          Layer& layer = net.layer(l);
          if (layer.parameter_count() == 0) continue;
          Vector p = layer.parameters();
          adam_step(p, grads[l].d_params, adam[l], config.learning_rate, config.adam);
          if (is_vp(layer.kind())) p(1) = std::clamp(p(1), lambda_lo, lambda_hi);
          if (!p.allFinite()) throw NumericalError("train: parameters are not finite", epoch);
          layer.set_parameters(p);
        }
      }
    } catch (const NumericalError& e) {
      report.diverged = true;
      report.diverged_epoch = epoch;
      report.divergence_reason = e.what();
      break;
    }
    report.train_loss.push_back(loss_sum / static_cast<double>(n));
    report.train_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(n));
    if (!test_data.empty()) {
      report.final_test = evaluate(net, test_data);
      report.test_accuracy.push_back(report.final_test.accuracy);
    } else {
      report.test_accuracy.push_back(0.0);
    }
    report.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return report;
}

inline void write_report_csv(std::ostream& os, const TrainReport& r) {
  os << "epoch,train_loss,train_acc,test_acc\n";
  char buf[128];
  for (std::size_t e = 0; e < r.epochs_run(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", e + 1, r.train_loss[e], r.train_accuracy[e],
                  r.test_accuracy[e]);
    os << buf;
  }
}

inline std::string format_ratio(const std::optional<Ratio>& r) {
  if (!r) return "undefined";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f%%", 100.0 * r->value());
  return buf;
}

/// Plain-text summary: accuracy and per-class Se / +P with raw counts.
inline void write_metrics_summary(std::ostream& os, const EvalResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "accuracy %.6f (%llu / %llu)\n", r.accuracy,
                static_cast<unsigned long long>(r.counts.correct), static_cast<unsigned long long>(r.counts.total));
  os << buf;
  os << "class,tp,fp,fn,tn,se,ppv\n";
  for (std::size_t k = 0; k < r.counts.classes.size(); ++k) {
    const auto& c = r.counts.classes[k];
    os << k << ',' << c.tp << ',' << c.fp << ',' << c.fn << ',' << c.tn << ',' << format_ratio(c.sensitivity())
       << ',' << format_ratio(c.positive_predictivity()) << '\n';
  }
}

// ---------------------------------------------------------------- architectures

enum class ArchKind { vpnet, fcnn, cnn };
enum class VpInit { fixed, grid, pretrain };

inline std::string_view to_string(ArchKind k) {
  switch (k) {
    case ArchKind::vpnet: return "vpnet";
    case ArchKind::fcnn: return "fcnn";
    case ArchKind::cnn: return "cnn";
  }
  return "unknown";
}

inline std::string_view to_string(VpInit k) {
  switch (k) {
    case VpInit::fixed: return "fixed";
    case VpInit::grid: return "grid";
    case VpInit::pretrain: return "pretrain";
  }
  return "unknown";
}

inline std::optional<ArchKind> arch_kind_from_string(std::string_view s) {
  for (auto k : {ArchKind::vpnet, ArchKind::fcnn, ArchKind::cnn})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

inline std::optional<VpInit> vp_init_from_string(std::string_view s) {
  for (auto k : {VpInit::fixed, VpInit::grid, VpInit::pretrain})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

/// One network family member. Unused fields are ignored by the other kinds.
struct ArchConfig {
  ArchKind kind = ArchKind::vpnet;
  std::size_t vp_dim = 7;
  std::size_t hidden = 8;
  std::size_t hidden2 = 0;  // fcnn: optional second hidden layer
  std::size_t kernel = 5;   // cnn
  std::size_t channels = 1;
  std::size_t pool = 4;
  LayerKind pool_mode = LayerKind::pool_max;
  VpInit init = VpInit::grid;
  VpParams theta{};  // used by VpInit::fixed
  LayerKind vp_mode = LayerKind::vp_feature;

  std::string label() const {
    switch (kind) {
      case ArchKind::vpnet:
        return "vpnet(n=" + std::to_string(vp_dim) + ",h=" + std::to_string(hidden) + "," +
               std::string(to_string(init)) + ")";
      case ArchKind::fcnn:
        return "fcnn(h=" + std::to_string(hidden) + (hidden2 ? "," + std::to_string(hidden2) : "") + ")";
      case ArchKind::cnn:
        return "cnn(k=" + std::to_string(kernel) + ",c=" + std::to_string(channels) + ",p=" + std::to_string(pool) +
               (pool_mode == LayerKind::pool_max ? "max" : "mean") + ",h=" + std::to_string(hidden) + ")";
    }
    return "unknown";
  }
};

inline NetworkSpec architecture_spec(const ArchConfig& a, std::size_t m, std::size_t classes, VpParams theta = {}) {
  switch (a.kind) {
    case ArchKind::vpnet: return make_vpnet(m, a.vp_dim, a.hidden, classes, theta, a.vp_mode);
    case ArchKind::fcnn: {
      std::vector<std::size_t> hidden{a.hidden};
      if (a.hidden2 > 0) hidden.push_back(a.hidden2);
      return make_fcnn(m, hidden, classes);
    }
    case ArchKind::cnn: return make_cnn(m, a.channels, a.kernel, a.pool, a.pool_mode, a.hidden, classes);
  }
  throw InvalidArgument("architecture_spec: unknown kind");
}

inline constexpr std::size_t kInitSubset = 256;

/// Exhaustive search over Gamma-feasible (tau, lambda) on a tau x lambda grid
/// (lambda geometric from 6/(b-a) upward by a factor 32) minimizing the mean
/// normalized residual over the first rows of `signals`.
inline VpParams grid_init(const Matrix& signals, const SampleGrid& grid, std::size_t n,
                          std::size_t tau_points = 25, std::size_t lambda_points = 16) {
  if (signals.rows() == 0) throw InvalidArgument("grid_init: no signals");
  const Matrix sample = signals.topRows(std::min<Index>(signals.rows(), static_cast<Index>(kInitSubset)));
  const double a = grid.a();
  const double b = grid.b();
  const double lambda_min = 6.0 / (b - a);
  VpParams best{0.5 * (a + b), lambda_min};
  double best_value = std::numeric_limits<double>::infinity();
  for (std::size_t li = 0; li < lambda_points; ++li) {
    const double lam = lambda_min * std::pow(32.0, static_cast<double>(li) / static_cast<double>(lambda_points - 1));
    for (std::size_t ti = 0; ti < tau_points; ++ti) {
      const double tau = a + (b - a) * static_cast<double>(ti) / static_cast<double>(tau_points - 1);
      const VpParams p{tau, lam};
      if (!feasible_region_check(p, a, b)) continue;
      const double value = vp_objective(sample, adaptive_hermite(grid, n, p)).value;
      if (value < best_value) {
        best_value = value;
        best = p;
      }
    }
  }
  return best;
}

/// Initial VP parameters for `arch` from training signals.
inline VpParams initial_vp_params(const ArchConfig& arch, const LabeledDataset& train_data,
                                  const VpFitOptions& fit = {}) {
  const SampleGrid grid = SampleGrid::index(train_data.signal_length());
  switch (arch.init) {
    case VpInit::fixed: return arch.theta;
    case VpInit::grid: return grid_init(train_data.signals, grid, arch.vp_dim);
    case VpInit::pretrain: {
      const VpParams start = grid_init(train_data.signals, grid, arch.vp_dim);
      const Matrix sample =
          train_data.signals.topRows(std::min<Index>(train_data.signals.rows(), static_cast<Index>(kInitSubset)));
      return vp_fit(sample, HermiteBasisBuilder{grid, arch.vp_dim}, start, fit);
    }
  }
  return arch.theta;
}

/// Builds and initializes a network for `arch` on the given data.
inline Network build_network(const ArchConfig& arch, const LabeledDataset& train_data, std::uint64_t seed) {
  const VpParams theta = arch.kind == ArchKind::vpnet ? initial_vp_params(arch, train_data) : VpParams{};
  Network net(architecture_spec(arch, train_data.signal_length(), train_data.class_count, theta));
  net.initialize(seed);
  return net;
}

// ---------------------------------------------------------------- grid search

struct GridSpace {
  std::vector<double> learning_rates{1e-4, 3e-4, 1e-3, 3e-3, 1e-2};
  std::vector<ArchConfig> architectures;

  std::size_t size() const { return learning_rates.size() * architectures.size(); }
};

/// VPNet grid over n values x hidden sizes x init strategies.
inline std::vector<ArchConfig> vpnet_architectures(const std::vector<std::size_t>& n_values,
                                                   const std::vector<std::size_t>& hidden_sizes,
                                                   const std::vector<VpInit>& inits) {
  std::vector<ArchConfig> out;
  for (std::size_t n : n_values)
    for (std::size_t h : hidden_sizes)
      for (VpInit init : inits) {
        ArchConfig a;
        a.kind = ArchKind::vpnet;
        a.vp_dim = n;
        a.hidden = h;
        a.init = init;
        out.push_back(a);
      }
  return out;
}

struct GridResult {
  std::size_t config_index = 0;  // architecture-major, then learning rate
  std::size_t rank = 0;          // 1 = best
  ArchConfig arch;
  double learning_rate = 0.0;
  std::size_t parameters = 0;
  double test_accuracy = 0.0;       // after the last epoch
  double best_test_accuracy = 0.0;  // max over epochs
  double train_accuracy = 0.0;
  bool diverged = false;
  TrainReport report;
};

/// Trains every (architecture, learning rate) pair and ranks by final test
/// accuracy, then fewer parameters, then lower learning rate, then index.
/// Up to `jobs` configurations train concurrently; results do not depend on
/// completion order.
inline std::vector<GridResult> grid_search(const GridSpace& space, const LabeledDataset& train_data,
                                           const LabeledDataset& test_data, const TrainConfig& config,
                                           std::size_t jobs = 1) {
  if (space.learning_rates.empty() || space.architectures.empty())
    throw InvalidArgument("grid_search: empty search space");
  config.validate();
  const std::size_t total = space.size();
  std::vector<GridResult> results(total);
  std::vector<std::exception_ptr> errors(total);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      try {
        GridResult& r = results[i];
        r.config_index = i;
        r.arch = space.architectures[i / space.learning_rates.size()];
        r.learning_rate = space.learning_rates[i % space.learning_rates.size()];
        TrainConfig cfg = config;
        cfg.learning_rate = r.learning_rate;
        Network net = build_network(r.arch, train_data, cfg.seed);
        r.parameters = net.parameter_count();
        r.report = train(net, train_data, test_data, cfg);
        r.test_accuracy = r.report.final_test_accuracy();
        r.best_test_accuracy = r.report.best_test_accuracy();
        r.train_accuracy = r.report.train_accuracy.empty() ? 0.0 : r.report.train_accuracy.back();
        r.diverged = r.report.diverged;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, total));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<GridResult> ranked = std::move(results);
  std::stable_sort(ranked.begin(), ranked.end(), [](const GridResult& a, const GridResult& b) {
    if (a.test_accuracy != b.test_accuracy) return a.test_accuracy > b.test_accuracy;
    if (a.parameters != b.parameters) return a.parameters < b.parameters;
    if (a.learning_rate != b.learning_rate) return a.learning_rate < b.learning_rate;
    return a.config_index < b.config_index;
  });
  for (std::size_t i = 0; i < ranked.size(); ++i) ranked[i].rank = i + 1;
  return ranked;
}

inline void write_grid_csv(std::ostream& os, const std::vector<GridResult>& rows) {
  os << "rank,config,arch,vp_dim,hidden,kernel,channels,pool,init,learning_rate,parameters,test_acc,best_test_acc,"
        "train_acc,diverged\n";
  char buf[512];
  for (const auto& r : rows) {
    const bool vp = r.arch.kind == ArchKind::vpnet;
    const bool cnn = r.arch.kind == ArchKind::cnn;
    std::snprintf(buf, sizeof buf, "%zu,%zu,%s,%zu,%zu,%zu,%zu,%zu,%s,%.17g,%zu,%.17g,%.17g,%.17g,%d\n", r.rank,
                  r.config_index, std::string(to_string(r.arch.kind)).c_str(), vp ? r.arch.vp_dim : 0,
                  r.arch.hidden, cnn ? r.arch.kernel : 0, cnn ? r.arch.channels : 0, cnn ? r.arch.pool : 0,
                  vp ? std::string(to_string(r.arch.init)).c_str() : "-", r.learning_rate, r.parameters,
                  r.test_accuracy, r.best_test_accuracy, r.train_accuracy, r.diverged ? 1 : 0);
    os << buf;
  }
}

}  // namespace vpnet
