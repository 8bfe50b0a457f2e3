#ifndef TAIG_ATTACKS_HPP
#define TAIG_ATTACKS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "taig/attribution.hpp"
#include "taig/data.hpp"
#include "taig/net.hpp"
#include "taig/tensor.hpp"

namespace taig {

enum class GradKind { Standard, IgStraight, RigPath };
enum class AttackMode { Untargeted, Targeted };
enum class Direction { Descend, Ascend };

/// What drives each step: the plain gradient, IG on the straight line, or
/// RIG on a random piecewise path. Momentum decay mu > 0 switches on the
/// MIFGSM-style accumulator.
struct GradientSource {
  GradKind kind = GradKind::Standard;
  PathSpec path;
  double momentum_mu = 0.0;
};

struct AttackConfig {
  double epsilon = 8.0 / 255.0;
  double alpha = 1.0 / 255.0;
  std::size_t iterations = 20;
  AttackMode mode = AttackMode::Untargeted;
  std::size_t target_class = 0;
  Direction direction = Direction::Descend;
  GradientSource source;
  std::uint64_t seed = 0;

  void validate(std::size_t num_classes) const {
    // epsilon == 0 is the degenerate empty budget (attack is a no-op).
    if (!(epsilon >= 0)) throw SpecError("attack epsilon must be >= 0");
    if (epsilon > 0 && !(alpha > 0 && alpha <= epsilon))
      throw SpecError("attack alpha must satisfy 0 < alpha <= epsilon");
    if (iterations < 1) throw SpecError("attack iterations must be >= 1");
    if (mode == AttackMode::Targeted && target_class >= num_classes)
      throw SpecError("targeted class out of range");
    if (source.kind != GradKind::Standard) source.path.validate();
  }
};

struct AttackResult {
  Tensor adversarial;
  std::size_t iterations_used = 0;
  std::vector<double> logit_trace;  // f_class at the start of every iteration + final
  bool success_on_surrogate = false;
};

namespace detail {

inline Tensor source_direction(const ReluNet& net, const Tensor& x, std::size_t k,
                               const GradientSource& src, std::uint64_t iter_seed) {
  switch (src.kind) {
    case GradKind::Standard:
      return grad_input(net, x, k);
    case GradKind::IgStraight:
      return ig_straight(net, x, black_reference(x.shape), k,
                         src.path.samples_per_segment)
          .values;
    case GradKind::RigPath: {
      PathSpec p = src.path;
      p.kind = PathKind::RandomPiecewise;
      p.seed = iter_seed;
      return rig(net, x, black_reference(x.shape), k, p).values;
    }
  }
  throw SpecError("unreachable gradient source kind");
}

/// l-inf projection against the original, then range clip; order is fixed.
/// The budget must hold exactly under the |x_i - origin_i| <= eps check, but
/// origin + eps can round upward past the true bound, so nudge offending
/// components back toward the origin by ulps after clamping.
inline void project_and_clip(Tensor& x, const Tensor& origin, double epsilon) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    double lo = std::max(0.0, origin[i] - epsilon);
    double hi = std::min(1.0, origin[i] + epsilon);
    double v = std::clamp(x.data[i], lo, hi);
    while (std::abs(v - origin[i]) > epsilon) v = std::nextafter(v, origin[i]);
    x.data[i] = v;
  }
}

}  // namespace detail

/// One attack step from the current iterate:
///   x' = clip_[0,1]( clip_{|.-origin|_inf <= eps}( x -/+ alpha * sign(g) ) )
/// minus for descend, plus for ascend; sign(0) = 0.
inline Tensor apply_step(const Tensor& x, const Tensor& origin, const AttackConfig& cfg,
                         const Tensor& g) {
  double s = cfg.direction == Direction::Descend ? -cfg.alpha : cfg.alpha;
  Tensor next = x;
  for (std::size_t i = 0; i < next.size(); ++i) next.data[i] += s * sgn(g[i]);
  detail::project_and_clip(next, origin, cfg.epsilon);
  return next;
}

/// Single step from x itself (origin = x) with the configured source.
inline Tensor step(const ReluNet& net, const Tensor& x, std::size_t y,
                   const AttackConfig& cfg) {
  cfg.validate(net.num_classes);
  std::size_t klass = cfg.mode == AttackMode::Targeted ? cfg.target_class : y;
  Tensor g = detail::source_direction(net, x, klass, cfg.source,
                                      derive_seed(cfg.seed, "attack-iter", 0));
  return apply_step(x, x, cfg, g);
}

/// Iterative attack. The random path is resampled fresh each iteration; the
/// momentum accumulator is g~ <- mu*g~ + g/|g|_1 with sign(g~) driving the
/// step.
inline AttackResult run(const ReluNet& net, const Tensor& x, std::size_t y,
                        const AttackConfig& cfg) {
  cfg.validate(net.num_classes);
  if (x.shape != net.input_shape) throw ShapeError("attack: input shape mismatch");
  std::size_t klass = cfg.mode == AttackMode::Targeted ? cfg.target_class : y;

  AttackResult result;
  Tensor cur = x;
  Tensor momentum = Tensor::zeros(x.shape);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    result.logit_trace.push_back(logits(net, cur)[klass]);
    Tensor g = detail::source_direction(net, cur, klass, cfg.source,
                                        derive_seed(cfg.seed, "attack-iter", it));
    if (cfg.source.momentum_mu > 0) {
      double norm = l1_norm(g);
      if (norm > 0) g *= 1.0 / norm;
      momentum *= cfg.source.momentum_mu;
      momentum += g;
      g = momentum;
    }
    cur = apply_step(cur, x, cfg, g);
  }
  result.logit_trace.push_back(logits(net, cur)[klass]);
  result.iterations_used = cfg.iterations;
  std::size_t pred = predict(net, cur);
  result.success_on_surrogate =
      cfg.mode == AttackMode::Targeted ? pred == cfg.target_class : pred != y;
  result.adversarial = std::move(cur);
  return result;
}

// Baselines: the same loop with the standard gradient source. The untargeted
// convention throughout is descend on the true-class logit f_y, which matches
// ascending the cross-entropy loss in sign.

inline AttackResult fgsm(const ReluNet& net, const Tensor& x, std::size_t y,
                         double epsilon) {
  AttackConfig cfg;
  cfg.epsilon = epsilon;
  cfg.alpha = epsilon;
  cfg.iterations = 1;
  return run(net, x, y, cfg);
}

inline AttackResult ifgsm(const ReluNet& net, const Tensor& x, std::size_t y,
                          double epsilon, double alpha, std::size_t iterations) {
  AttackConfig cfg;
  cfg.epsilon = epsilon;
  cfg.alpha = alpha;
  cfg.iterations = iterations;
  return run(net, x, y, cfg);
}

inline AttackResult mifgsm(const ReluNet& net, const Tensor& x, std::size_t y,
                           double epsilon, double alpha, std::size_t iterations,
                           double mu) {
  AttackConfig cfg;
  cfg.epsilon = epsilon;
  cfg.alpha = alpha;
  cfg.iterations = iterations;
  cfg.source.momentum_mu = mu;
  return run(net, x, y, cfg);
}

}  // namespace taig

#endif
