#ifndef TAIG_ATTRIBUTION_HPP
#define TAIG_ATTRIBUTION_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "taig/net.hpp"
#include "taig/rng.hpp"
#include "taig/tensor.hpp"

namespace taig {

enum class PathKind { Straight, RandomPiecewise };

/// Description of an integration path. For the straight line only
/// samples_per_segment matters; a random piecewise path has `segments`
/// pieces, per-component noise bound `tau` at interior turning points, and
/// a seed that fully determines it.
struct PathSpec {
  PathKind kind = PathKind::Straight;
  std::size_t segments = 1;
  double tau = 0.0;
  std::uint64_t seed = 0;
  std::size_t samples_per_segment = 30;

  void validate() const {
    if (segments < 1) throw SpecError("path segments must be >= 1");
    if (tau < 0) throw SpecError("path noise bound tau must be >= 0");
    if (samples_per_segment < 1) throw SpecError("samples per segment must be >= 1");
  }
};

struct Attribution {
  Tensor values;
  std::size_t class_index = 0;
  PathSpec path;
  Tensor reference;
};

/// Average input gradient of f_k over the right-endpoint Riemann partition
/// of the segment from `from` to `to`: sample points from + (s/S)(to-from),
/// s = 1..S.
inline Tensor segment_avg_gradient(const ReluNet& net, const Tensor& from,
                                   const Tensor& to, std::size_t k, std::size_t steps) {
  Tensor acc = Tensor::zeros(from.shape);
  Tensor point = Tensor::zeros(from.shape);
  for (std::size_t s = 1; s <= steps; ++s) {
    double t = static_cast<double>(s) / static_cast<double>(steps);
    for (std::size_t i = 0; i < point.size(); ++i)
      point.data[i] = from[i] + t * (to[i] - from[i]);
    acc += grad_input(net, point, k);
  }
  acc *= 1.0 / static_cast<double>(steps);
  return acc;
}

/// Integrated gradients on the straight line from r to x:
///   values_i = (x_i - r_i) * (1/S) * sum_s df_k/dx_i at r + (s/S)(x-r).
inline Attribution ig_straight(const ReluNet& net, const Tensor& x, const Tensor& r,
                               std::size_t k, std::size_t steps) {
  x.require_same_shape(r, "ig_straight");
  if (steps < 1) throw SpecError("ig_straight: S must be >= 1");
  Tensor avg = segment_avg_gradient(net, r, x, k, steps);
  for (std::size_t i = 0; i < avg.size(); ++i) avg.data[i] *= (x[i] - r[i]);
  Attribution a;
  a.values = std::move(avg);
  a.class_index = k;
  a.path.kind = PathKind::Straight;
  a.path.samples_per_segment = steps;
  a.reference = r;
  return a;
}

/// Turning points of the random piecewise linear path. Noise is drawn for
/// interior points only; both endpoints stay exact so the telescoped total
/// targets f(x) - f(r).
inline std::vector<Tensor> random_path(const Tensor& x, const Tensor& r,
                                       std::size_t segments, double tau,
                                       std::uint64_t seed) {
  x.require_same_shape(r, "random_path");
  if (segments < 1) throw SpecError("random_path: E must be >= 1");
  if (tau < 0) throw SpecError("random_path: tau must be >= 0");
  Rng rng(derive_seed(seed, "path"));
  std::vector<Tensor> points;
  points.reserve(segments + 1);
  for (std::size_t e = 0; e <= segments; ++e) {
    double t = static_cast<double>(e) / static_cast<double>(segments);
    Tensor p = Tensor::zeros(x.shape);
    for (std::size_t i = 0; i < p.size(); ++i) p.data[i] = r[i] + t * (x[i] - r[i]);
    if (e > 0 && e < segments && tau > 0)
      for (std::size_t i = 0; i < p.size(); ++i) p.data[i] += rng.uniform(-tau, tau);
    points.push_back(std::move(p));
  }
  return points;
}

/// Integrated gradients accumulated along a random piecewise linear path;
/// each segment uses its start point as reference.
inline Attribution rig(const ReluNet& net, const Tensor& x, const Tensor& r,
                       std::size_t k, const PathSpec& spec) {
  spec.validate();
  if (spec.kind != PathKind::RandomPiecewise)
    throw SpecError("rig requires a random-piecewise PathSpec");
  auto points = random_path(x, r, spec.segments, spec.tau, spec.seed);
  Tensor total = Tensor::zeros(x.shape);
  for (std::size_t e = 0; e + 1 < points.size(); ++e) {
    Tensor avg = segment_avg_gradient(net, points[e], points[e + 1], k,
                                      spec.samples_per_segment);
    for (std::size_t i = 0; i < avg.size(); ++i)
      total.data[i] += avg.data[i] * (points[e + 1][i] - points[e][i]);
  }
  Attribution a;
  a.values = std::move(total);
  a.class_index = k;
  a.path = spec;
  a.reference = r;
  return a;
}

inline Attribution attribute(const ReluNet& net, const Tensor& x, const Tensor& r,
                             std::size_t k, const PathSpec& spec) {
  return spec.kind == PathKind::Straight
             ? ig_straight(net, x, r, k, spec.samples_per_segment)
             : rig(net, x, r, k, spec);
}

/// |f_k(x) - f_k(r) - sum_i values_i|. For a piecewise path the endpoints of
/// the attribution's own path are the right comparison, which coincide with
/// (r, x) under the exact-endpoint policy.
inline double completeness_gap(const ReluNet& net, const Attribution& a,
                               const Tensor& x, const Tensor& r, std::size_t k) {
  double fx = logits(net, x)[k];
  double fr = logits(net, r)[k];
  return std::abs(fx - fr - sum(a.values));
}

struct JacobianCheck {
  double max_offdiag = 0;
  double diag_rel_err = 0;
};

/// Estimates dIG_i/dx_j by central differences of ig_straight and checks the
/// ReLU structure: off-diagonal entries vanish and the diagonal equals the
/// path-averaged gradient. Returns nullopt when a sample point sits too
/// close to a ReLU kink (caller should resample x).
inline std::optional<JacobianCheck> offdiag_jacobian_check(const ReluNet& net,
                                                           const Tensor& x,
                                                           const Tensor& r,
                                                           std::size_t k,
                                                           std::size_t steps,
                                                           double h = 1e-4) {
  const std::size_t n = x.size();
  // Kink safety along the sampled path and in the probe neighborhood.
  for (std::size_t s = 1; s <= steps; ++s) {
    double t = static_cast<double>(s) / static_cast<double>(steps);
    Tensor p = Tensor::zeros(x.shape);
    for (std::size_t i = 0; i < n; ++i) p.data[i] = r[i] + t * (x[i] - r[i]);
    if (min_preact_margin(net, p) < 10 * h) return std::nullopt;
  }

  Tensor base_avg = segment_avg_gradient(net, r, x, k, steps);

  JacobianCheck out;
  double max_diag = 0;
  Tensor probe = x;
  for (std::size_t j = 0; j < n; ++j) {
    probe.data[j] = x[j] + h;
    Tensor ig_p = ig_straight(net, probe, r, k, steps).values;
    probe.data[j] = x[j] - h;
    Tensor ig_m = ig_straight(net, probe, r, k, steps).values;
    probe.data[j] = x[j];
    for (std::size_t i = 0; i < n; ++i) {
      double d = (ig_p[i] - ig_m[i]) / (2 * h);
      if (i == j) {
        // Expected diagonal: the path-integral term; the second-derivative
        // term is identically zero for ReLU nets.
        double expected = base_avg[i];
        double denom = std::max(std::abs(expected), 1e-8);
        out.diag_rel_err = std::max(out.diag_rel_err, std::abs(d - expected) / denom);
        max_diag = std::max(max_diag, std::abs(d));
      } else {
        out.max_offdiag = std::max(out.max_offdiag, std::abs(d));
      }
    }
  }
  (void)max_diag;
  return out;
}

/// || sum_i grad(IG_i)(x) - grad f_k(x) ||_inf with finite-difference
/// gradients of the total attribution.
inline double grad_total_check(const ReluNet& net, const Tensor& x, const Tensor& r,
                               std::size_t k, std::size_t steps, double h = 1e-4) {
  Tensor g = grad_input(net, x, k);
  Tensor probe = x;
  double worst = 0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    probe.data[j] = x[j] + h;
    double tp = sum(ig_straight(net, probe, r, k, steps).values);
    probe.data[j] = x[j] - h;
    double tm = sum(ig_straight(net, probe, r, k, steps).values);
    probe.data[j] = x[j];
    worst = std::max(worst, std::abs((tp - tm) / (2 * h) - g[j]));
  }
  return worst;
}

/// Fraction of components where sign(values_i) == sign(df_k/dx_i); zeros
/// agree only with zero.
inline double sign_agreement(const ReluNet& net, const Tensor& x, std::size_t k,
                             const Attribution& a) {
  Tensor g = grad_input(net, x, k);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (sgn(a.values[i]) == sgn(g[i])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(g.size());
}

}  // namespace taig

#endif
