#pragma once

// Synthetic three-class data: adaptive Hermite expansions whose first three
// coefficients lie on concentric spherical shells, with jittered (tau, lambda).

#include "vpnet/dataset.hpp"
#include "vpnet/vp.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace vpnet {

struct SynthConfig {
  std::size_t samples_per_class = 5000;
  std::size_t m = 100;
  std::size_t n_gen = 5;
  std::array<double, 3> shell_radii{1.0, 2.0, 3.0};
  double shell_thickness = 0.2;
  double nuisance_std = 0.3;
  // Unset values follow m: tau m/2 (std m/200), lambda 12/m (std lambda/50).
  std::optional<double> tau_mean;
  std::optional<double> tau_std;
  std::optional<double> lambda_mean;
  std::optional<double> lambda_std;
  std::uint64_t seed = 1;

  double tau_mean_value() const { return tau_mean.value_or(0.5 * static_cast<double>(m)); }
  double tau_std_value() const { return tau_std.value_or(static_cast<double>(m) / 200.0); }
  double lambda_mean_value() const { return lambda_mean.value_or(12.0 / static_cast<double>(m)); }
  double lambda_std_value() const { return lambda_std.value_or(lambda_mean_value() / 50.0); }

  /// Norm of the full coefficient vector before amplitude normalization.
  double coefficient_energy() const { return shell_radii[2] + shell_thickness + nuisance_std; }

  void validate() const {
    if (samples_per_class < 1) throw InvalidArgument("SynthConfig: samples_per_class must be >= 1");
    if (m < 2) throw InvalidArgument("SynthConfig: m must be >= 2");
    if (n_gen < 3) throw InvalidArgument("SynthConfig: n_gen must be >= 3");
    if (!(shell_thickness >= 0.0)) throw InvalidArgument("SynthConfig: shell_thickness must be >= 0");
    if (!(nuisance_std >= 0.0)) throw InvalidArgument("SynthConfig: nuisance_std must be >= 0");
    if (!(shell_radii[0] > shell_thickness))
      throw InvalidArgument("SynthConfig: innermost shell radius must exceed the thickness");
    for (std::size_t k = 1; k < shell_radii.size(); ++k)
      if (!(shell_radii[k] - shell_radii[k - 1] > 2.0 * shell_thickness))
        throw InvalidArgument("SynthConfig: shell radii must be sorted with gaps larger than 2 * thickness");
    if (!(tau_std_value() >= 0.0) || !(lambda_std_value() >= 0.0))
      throw InvalidArgument("SynthConfig: jitter standard deviations must be >= 0");
    if (!(lambda_mean_value() > 0.0)) throw InvalidArgument("SynthConfig: lambda_mean must be > 0");
    if (!feasible_region_check({tau_mean_value(), lambda_mean_value()}, 0.0, static_cast<double>(m) - 1.0))
      throw InvalidArgument("SynthConfig: (tau_mean, lambda_mean) lies outside the feasible region");
  }
};

/// Direction uniform on the unit sphere, radius uniform in radius +- thickness.
template <typename Rng>
std::array<double, 3> shell_point(double radius, double thickness, Rng& rng) {
  if (!(thickness >= 0.0) || !(radius > thickness))
    throw InvalidArgument("shell_point: need radius > thickness >= 0");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::array<double, 3> d{};
  double norm = 0.0;
  while (norm == 0.0) {
    for (double& v : d) v = normal(rng);
    norm = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
  }
  double r = radius;
  if (thickness > 0.0) r = std::uniform_real_distribution<double>(radius - thickness, radius + thickness)(rng);
  for (double& v : d) v *= r / norm;
  return d;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename Rng>
double truncated_normal(double mean, double std, Rng& rng, auto accept) {
  if (std == 0.0) return mean;
  std::normal_distribution<double> dist(mean, std);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const double v = dist(rng);
    if (accept(v)) return v;
  }
  throw InvalidArgument("SynthConfig: jitter distribution almost never lands in the feasible region");
}

inline LabeledDataset generate_split(const SynthConfig& cfg, std::uint64_t stream_seed) {
  std::mt19937_64 rng(stream_seed);
  const std::size_t classes = cfg.shell_radii.size();
  const std::size_t total = cfg.samples_per_class * classes;
  const SampleGrid grid = SampleGrid::index(cfg.m);
  const double a = grid.a();
  const double b = grid.b();
  const double energy = cfg.coefficient_energy();
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> normal(0.0, 1.0);

  LabeledDataset out;
  out.class_count = classes;
  out.signals.resize(static_cast<Index>(total), static_cast<Index>(cfg.m));
  out.labels.resize(total);
  out.meta_columns = {"class", "tau", "lambda", "scale"};
  out.meta.resize(static_cast<Index>(total), 4);

  Vector c(static_cast<Index>(cfg.n_gen));
  for (std::size_t i = 0; i < total; ++i) {
    const int label = static_cast<int>(i % classes);
    const auto shell = shell_point(cfg.shell_radii[static_cast<std::size_t>(label)], cfg.shell_thickness, rng);
    c.setZero();
    double shell_sq = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      c(static_cast<Index>(k)) = shell[k];
      shell_sq += shell[k] * shell[k];
    }
    // Remaining coefficients: random direction filling the fixed energy.
    const double rest = std::sqrt(std::max(0.0, energy * energy - shell_sq));
    if (cfg.n_gen == 5) {
      const double phi = angle(rng);
      c(3) = rest * std::cos(phi);
      c(4) = rest * std::sin(phi);
    } else if (cfg.n_gen > 3) {
      Vector d(static_cast<Index>(cfg.n_gen - 3));
      double dn = 0.0;
      while (dn == 0.0) {
        for (Index k = 0; k < d.size(); ++k) d(k) = normal(rng);
        dn = d.norm();
      }
      c.tail(d.size()) = rest * d / dn;
    }

    const double lam = truncated_normal(cfg.lambda_mean_value(), cfg.lambda_std_value(), rng, [&](double v) {
      return v > 0.0 && 6.0 / v <= b - a;
    });
    const double tau = truncated_normal(cfg.tau_mean_value(), cfg.tau_std_value(), rng, [&](double v) {
      return feasible_region_check({v, lam}, a, b);
    });

    const SampledBasis basis = adaptive_hermite(grid, cfg.n_gen, {tau, lam});
    Vector x = basis.phi * c;
    const double norm = x.norm();
    const double scale = norm > 0.0 ? 1.0 / norm : 1.0;
    x *= scale;

    out.signals.row(static_cast<Index>(i)) = x.transpose();
    out.labels[i] = label;
    out.meta.row(static_cast<Index>(i)) << static_cast<double>(label), tau, lam, scale;
  }
  return out;
}

}  // namespace detail

struct SynthData {
  LabeledDataset train;
  LabeledDataset test;
};

/// Train and test splits from independent streams derived from `cfg.seed`.
/// Labels cycle 0, 1, 2, so every class has exactly samples_per_class rows.
/// Each signal is scaled to unit norm; meta column `scale` holds the factor.
inline SynthData generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthData out;
  out.train = detail::generate_split(cfg, detail::splitmix64(cfg.seed * 2));
  out.test = detail::generate_split(cfg, detail::splitmix64(cfg.seed * 2 + 1));
  return out;
}

/// Nearest-shell classification from the first three coefficients at the
/// generator's mean parameters, undoing the amplitude scale.
inline std::vector<int> shell_classify(const LabeledDataset& data, const SynthConfig& cfg) {
  const SampleGrid grid = SampleGrid::index(cfg.m);
  const PinvBundle b = pseudoinverse(adaptive_hermite(grid, cfg.n_gen, {cfg.tau_mean_value(), cfg.lambda_mean_value()}).phi);
  const Index scale_col = data.meta_column("scale");
  const Matrix coeffs = b.pinv * data.signals.transpose();
  std::vector<int> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double r = coeffs.col(static_cast<Index>(i)).head(3).norm() / data.meta(static_cast<Index>(i), scale_col);
    int best = 0;
    for (int k = 1; k < static_cast<int>(cfg.shell_radii.size()); ++k)
      if (std::abs(r - cfg.shell_radii[static_cast<std::size_t>(k)]) <
          std::abs(r - cfg.shell_radii[static_cast<std::size_t>(best)]))
        best = k;
    out[i] = best;
  }
  return out;
}

}  // namespace vpnet
