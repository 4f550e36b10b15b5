#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "expsgd/errors.hpp"

namespace expsgd {

enum class LossKind { logistic, squared, smoothed_hinge, exponential };

namespace detail {

/// Numerically stable sigmoid 1/(1+exp(-s)).
inline double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

inline double logistic_phi(double v) {
  // log(1 + exp(-v)) with the large-|v| branch split.
  if (v >= 0.0) return std::log1p(std::exp(-v));
  return -v + std::log1p(std::exp(v));
}

inline double logistic_phi_prime(double v) { return -sigmoid(-v); }

}  // namespace detail

/// A margin loss l(score, y) = phi(y * score) for binary labels y in {-1,+1},
/// together with its link function h*(mu) = argmin_h mu*phi(h)+(1-mu)*phi(-h),
/// the pointwise minimal conditional risk l*, the Bregman divergence of l*,
/// and the low-noise margin constant m(delta). All link quantities are closed
/// forms; finite-difference and minimizer cross-checks live in the tests.
///
/// Loss objects are immutable and safe for unrestricted concurrent reads.
class Loss {
 public:
  static Loss logistic() { return Loss(LossKind::logistic); }
  static Loss squared() { return Loss(LossKind::squared); }
  static Loss smoothed_hinge() { return Loss(LossKind::smoothed_hinge); }

  /// Exponential loss. The gradient bound exists only on a bounded score
  /// domain, so a projection radius B (hypothesis-norm ball) is required
  /// before the loss can report M; pass it here or leave training to
  /// projected mode configured separately.
  static Loss exponential(std::optional<double> projection_radius = std::nullopt) {
    Loss l(LossKind::exponential);
    l.projection_radius_ = projection_radius;
    return l;
  }

  static Loss squared_bounded(double projection_radius) {
    Loss l(LossKind::squared);
    l.projection_radius_ = projection_radius;
    return l;
  }

  static Loss from_name(std::string_view name,
                        std::optional<double> projection_radius = std::nullopt) {
    if (name == "logistic") return logistic();
    if (name == "squared") {
      return projection_radius ? squared_bounded(*projection_radius) : squared();
    }
    if (name == "smoothed_hinge") return smoothed_hinge();
    if (name == "exponential") return exponential(projection_radius);
    throw ConfigError("unknown loss: " + std::string(name));
  }

  LossKind kind() const { return kind_; }

  std::string_view name() const {
    switch (kind_) {
      case LossKind::logistic: return "logistic";
      case LossKind::squared: return "squared";
      case LossKind::smoothed_hinge: return "smoothed_hinge";
      case LossKind::exponential: return "exponential";
    }
    return "?";
  }

  std::optional<double> projection_radius() const { return projection_radius_; }

  double phi(double v) const {
    switch (kind_) {
      case LossKind::logistic: return detail::logistic_phi(v);
      case LossKind::squared: return (1.0 - v) * (1.0 - v);
      case LossKind::smoothed_hinge:
        if (v >= 1.0) return 0.0;
        if (v >= 0.0) return 0.5 * (1.0 - v) * (1.0 - v);
        return 0.5 - v;
      case LossKind::exponential: return std::exp(-v);
    }
    return 0.0;
  }

  double phi_prime(double v) const {
    switch (kind_) {
      case LossKind::logistic: return detail::logistic_phi_prime(v);
      case LossKind::squared: return -2.0 * (1.0 - v);
      case LossKind::smoothed_hinge:
        if (v >= 1.0) return 0.0;
        if (v >= 0.0) return v - 1.0;
        return -1.0;
      case LossKind::exponential: return -std::exp(-v);
    }
    return 0.0;
  }

  /// d/d(score) of l(score, y) = y * phi(y * score).
  double pointwise_grad(double score, int label) const {
    return label * phi_prime(label * score);
  }

  /// True when |phi'| is bounded on the domain the loss will ever see:
  /// globally for logistic and smoothed hinge, on the projection ball for
  /// squared and exponential when a radius was supplied.
  bool grad_bounded() const {
    switch (kind_) {
      case LossKind::logistic:
      case LossKind::smoothed_hinge: return true;
      case LossKind::squared:
      case LossKind::exponential: return projection_radius_.has_value();
    }
    return false;
  }

  /// Gradient bound M with |d_score l(score,y)| <= M, given the kernel bound
  /// R (scores satisfy |score| <= R * ||g||). Throws when unbounded.
  double grad_bound(double kernel_bound_R) const {
    switch (kind_) {
      case LossKind::logistic: return 1.0;
      case LossKind::smoothed_hinge: return 1.0;
      case LossKind::squared:
        if (!projection_radius_) {
          throw ConfigError("squared loss: gradient bound requires a projection radius");
        }
        return 2.0 * (1.0 + kernel_bound_R * *projection_radius_);
      case LossKind::exponential:
        if (!projection_radius_) {
          throw ConfigError("exponential loss: gradient bound requires a projection radius");
        }
        return kernel_bound_R * std::exp(kernel_bound_R * *projection_radius_);
    }
    return 0.0;
  }

  /// Smoothness constant L of the expected risk: sup phi'' times R^2.
  double smoothness(double kernel_bound_R) const {
    const double r2 = kernel_bound_R * kernel_bound_R;
    switch (kind_) {
      case LossKind::logistic: return 0.25 * r2;
      case LossKind::squared: return 2.0 * r2;
      case LossKind::smoothed_hinge: return r2;
      case LossKind::exponential:
        if (!projection_radius_) {
          throw ConfigError("exponential loss: smoothness requires a projection radius");
        }
        return r2 * std::exp(kernel_bound_R * *projection_radius_);
    }
    return 0.0;
  }

  /// Link function h*(mu), the pointwise optimal score at conditional
  /// probability mu in (0,1).
  double link(double mu) const {
    check_prob(mu, "link");
    switch (kind_) {
      case LossKind::logistic: return std::log(mu / (1.0 - mu));
      case LossKind::squared: return 2.0 * mu - 1.0;
      case LossKind::smoothed_hinge:
        return mu >= 0.5 ? (2.0 * mu - 1.0) / mu : (2.0 * mu - 1.0) / (1.0 - mu);
      case LossKind::exponential: return 0.5 * std::log(mu / (1.0 - mu));
    }
    return 0.0;
  }

  /// Inverse link, clamped into [kProbEps, 1-kProbEps] where the natural
  /// range of h* does not cover the whole real line.
  double link_inverse(double score) const {
    switch (kind_) {
      case LossKind::logistic: return clamp_prob(detail::sigmoid(score));
      case LossKind::squared: return clamp_prob(0.5 * (score + 1.0));
      case LossKind::smoothed_hinge: {
        // h* maps (0,1) onto (-1,1); clamp outside.
        const double s = std::clamp(score, -1.0, 1.0);
        return clamp_prob(s >= 0.0 ? 1.0 / (2.0 - s) : (1.0 + s) / (2.0 + s));
      }
      case LossKind::exponential: return clamp_prob(detail::sigmoid(2.0 * score));
    }
    return 0.5;
  }

  /// Pointwise minimal conditional risk l*(mu) = min_h mu phi(h)+(1-mu)phi(-h).
  double min_risk(double mu) const {
    check_prob(mu, "min_risk");
    switch (kind_) {
      case LossKind::logistic: return -mu * std::log(mu) - (1.0 - mu) * std::log1p(-mu);
      case LossKind::squared: return 4.0 * mu * (1.0 - mu);
      case LossKind::smoothed_hinge:
        return mu >= 0.5 ? (1.0 - mu) * (4.0 * mu - 1.0) / (2.0 * mu)
                         : mu * (3.0 - 4.0 * mu) / (2.0 * (1.0 - mu));
      case LossKind::exponential: return 2.0 * std::sqrt(mu * (1.0 - mu));
    }
    return 0.0;
  }

  double min_risk_prime(double mu) const {
    check_prob(mu, "min_risk_prime");
    switch (kind_) {
      case LossKind::logistic: return std::log((1.0 - mu) / mu);
      case LossKind::squared: return 4.0 * (1.0 - 2.0 * mu);
      case LossKind::smoothed_hinge:
        return mu >= 0.5 ? 0.5 / (mu * mu) - 2.0
                         : 2.0 - 0.5 / ((1.0 - mu) * (1.0 - mu));
      case LossKind::exponential:
        return (1.0 - 2.0 * mu) / std::sqrt(mu * (1.0 - mu));
    }
    return 0.0;
  }

  /// Bregman divergence of l*: d(eta1, eta2) = -l*(eta2) + l*(eta1)
  /// + l*'(eta1)(eta2 - eta1). Non-negative since l* is concave; zero iff
  /// eta1 == eta2 for the catalog losses.
  double bregman(double eta1, double eta2) const {
    check_prob(eta1, "bregman");
    check_prob(eta2, "bregman");
    return -min_risk(eta2) + min_risk(eta1) + min_risk_prime(eta1) * (eta2 - eta1);
  }

  /// Low-noise margin constant m(delta) = max{h*(1/2+delta), |h*(1/2-delta)|},
  /// a lower bound on the magnitude of the optimal score under the strong
  /// low-noise condition at level delta.
  double margin(double delta) const {
    if (!(delta > 0.0 && delta < 0.5)) {
      throw std::domain_error("margin: delta must lie in (0, 1/2)");
    }
    return std::max(link(0.5 + delta), std::abs(link(0.5 - delta)));
  }

  static constexpr double kProbEps = 1e-12;

 private:
  explicit Loss(LossKind kind) : kind_(kind) {}

  static void check_prob(double mu, const char* where) {
    if (!(mu > 0.0 && mu < 1.0)) {
      throw std::domain_error(std::string(where) + ": probability must lie in (0, 1)");
    }
  }

  static double clamp_prob(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

  LossKind kind_;
  std::optional<double> projection_radius_;
};

}  // namespace expsgd
