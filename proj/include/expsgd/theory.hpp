#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

#include "expsgd/errors.hpp"
#include "expsgd/hypothesis.hpp"
#include "expsgd/loss.hpp"
#include "expsgd/synthdata.hpp"

namespace expsgd {

/// Constants entering the convergence theorems. sigma_sq bounds the variance
/// of the unregularized stochastic gradient, init_gap is
/// L_lambda(g_1) - L_lambda(g_lambda), init_dist is ||g_1 - g_lambda||.
struct ProblemConstants {
  double M = 1.0;
  double L = 1.0;
  double R = 1.0;
  double delta = 0.25;
  double lambda = 0.01;
  double gamma = 1.0;
  double sigma_sq = 0.0;
  double init_gap = 0.0;
  double init_dist = 0.0;

  void validate() const {
    if (!(M > 0)) throw ConfigError("constants: M must be > 0");
    if (!(L > 0)) throw ConfigError("constants: L must be > 0");
    if (!(R > 0)) throw ConfigError("constants: R must be > 0");
    if (!(delta > 0 && delta < 0.5)) throw ConfigError("constants: delta must lie in (0, 1/2)");
    if (!(lambda > 0)) throw ConfigError("constants: lambda must be > 0");
    if (!(gamma > 0)) throw ConfigError("constants: gamma must be > 0");
    if (sigma_sq < 0) throw ConfigError("constants: sigma_sq must be >= 0");
    if (init_gap < 0) throw ConfigError("constants: init_gap must be >= 0");
    if (init_dist < 0) throw ConfigError("constants: init_dist must be >= 0");
  }

  double eta1() const { return 2.0 / (lambda * (gamma + 1.0)); }

  bool eta1_ok_last_iterate() const {
    return eta1() <= std::min(1.0 / (L + lambda), 0.5 / lambda) * (1.0 + 1e-12);
  }
  bool eta1_ok_averaged() const {
    return eta1() <= std::min(1.0 / L, 0.5 / lambda) * (1.0 + 1e-12);
  }
};

/// nu = max{ (2/lambda^2)(L+lambda) sigma^2, (1+gamma)(L_lambda(g_1)-L_lambda(g_lambda)) }.
inline double nu(const ProblemConstants& c) {
  c.validate();
  return std::max(2.0 / (c.lambda * c.lambda) * (c.L + c.lambda) * c.sigma_sq,
                  (1.0 + c.gamma) * c.init_gap);
}

/// Iteration threshold for the last-iterate rate: 32 R^2 nu / (m^2(delta) lambda) - gamma.
inline double sgd_threshold(const ProblemConstants& c, const Loss& loss) {
  c.validate();
  const double m = loss.margin(c.delta);
  return 32.0 * c.R * c.R * nu(c) / (m * m * c.lambda) - c.gamma;
}

/// Last-iterate excess-classification-error bound
/// 2 exp(-m^2 lambda^2 (gamma+T) / (2^9 * 9 M^2 R^4)), valid past the threshold.
inline double sgd_bound(const ProblemConstants& c, const Loss& loss, double T,
                        bool force = false) {
  c.validate();
  if (!force && T < sgd_threshold(c, loss)) {
    throw ConfigError("sgd_bound: T is below the threshold (pass force to compute anyway)");
  }
  const double m = loss.margin(c.delta);
  const double r2 = c.R * c.R;
  const double exponent = m * m * c.lambda * c.lambda * (c.gamma + T) /
                          (512.0 * 9.0 * c.M * c.M * r2 * r2);
  return 2.0 * std::exp(-exponent);
}

struct ThresholdCheck {
  bool satisfied = false;
  double lhs = 0.0;
  double rhs = 0.0;
};

/// Averaged-iterate threshold: max{ 36 M^2 R^2 / (lambda^2 (2 gamma + T)),
/// gamma(gamma-1) ||g_1-g_lambda||^2 / ((2 gamma + T)(T+1)) } <= m^2 / (32 R^2).
inline ThresholdCheck asgd_threshold_check(const ProblemConstants& c, const Loss& loss,
                                           double T) {
  c.validate();
  const double m = loss.margin(c.delta);
  const double first = 36.0 * c.M * c.M * c.R * c.R / (c.lambda * c.lambda * (2.0 * c.gamma + T));
  const double second = c.gamma * (c.gamma - 1.0) * c.init_dist * c.init_dist /
                        ((2.0 * c.gamma + T) * (T + 1.0));
  const double lhs = std::max(first, std::max(second, 0.0));
  const double rhs = m * m / (32.0 * c.R * c.R);
  return {lhs <= rhs, lhs, rhs};
}

/// Averaged-iterate bound 2 exp(-m^2 lambda^2 (2 gamma + T) / (2^10 * 9 M^2 R^4)).
inline double asgd_bound(const ProblemConstants& c, const Loss& loss, double T,
                         bool force = false) {
  c.validate();
  if (!force && !asgd_threshold_check(c, loss, T).satisfied) {
    throw ConfigError("asgd_bound: threshold violated (pass force to compute anyway)");
  }
  const double m = loss.margin(c.delta);
  const double r2 = c.R * c.R;
  const double exponent = m * m * c.lambda * c.lambda * (2.0 * c.gamma + T) /
                          (1024.0 * 9.0 * c.M * c.M * r2 * r2);
  return 2.0 * std::exp(-exponent);
}

/// Specialization of the averaged bound to the logistic loss with M = R = 1:
/// 2 exp(-lambda^2 (2 gamma + T) log^2((1+2 delta)/(1-2 delta)) / (2^10 * 9)).
inline double corollary_bound(double delta, double lambda, double gamma, double T) {
  if (!(delta > 0 && delta < 0.5)) throw ConfigError("corollary: delta must lie in (0, 1/2)");
  const double m = std::log((1.0 + 2.0 * delta) / (1.0 - 2.0 * delta));
  return 2.0 * std::exp(-m * m * lambda * lambda * (2.0 * gamma + T) / (1024.0 * 9.0));
}

/// Smallest T making the averaged bound <= eps, by explicit inversion:
/// T = (2^10 * 9 M^2 R^4 / (m^2 lambda^2)) log(2/eps) - 2 gamma.
inline double iteration_complexity(const ProblemConstants& c, const Loss& loss, double eps) {
  c.validate();
  if (!(eps > 0 && eps < 1)) throw ConfigError("iteration_complexity: eps must lie in (0, 1)");
  const double m = loss.margin(c.delta);
  const double r2 = c.R * c.R;
  return 1024.0 * 9.0 * c.M * c.M * r2 * r2 / (m * m * c.lambda * c.lambda) *
             std::log(2.0 / eps) -
         2.0 * c.gamma;
}

/// Expected-iterate convergence ||E[g_T] - g_lambda||^2 <= 2 nu / (lambda (gamma + T));
/// requires eta_1 <= 1/(L + lambda).
inline double expected_iterate_bound(const ProblemConstants& c, double T) {
  c.validate();
  if (c.eta1() > 1.0 / (c.L + c.lambda) * (1.0 + 1e-12)) {
    throw ConfigError("expected_iterate_bound: eta_1 exceeds 1/(L+lambda)");
  }
  return 2.0 * nu(c) / (c.lambda * (c.gamma + T));
}

/// Bound on the martingale difference sum c_T^2: 144 M^2 R^2 / (lambda^2 (gamma+T))
/// for the last iterate and 288 M^2 R^2 / (lambda^2 (2 gamma + T)) for the average.
/// Requires eta_1 <= min{1/L, 1/(2 lambda)} unless forced.
inline double martingale_sum_bound(const ProblemConstants& c, double T, bool averaged,
                                   bool force = false) {
  c.validate();
  if (!force && !c.eta1_ok_averaged()) {
    throw ConfigError("martingale_sum_bound: eta_1 condition violated (pass force)");
  }
  const double mr2 = c.M * c.M * c.R * c.R;
  if (averaged) return 288.0 * mr2 / (c.lambda * c.lambda * (2.0 * c.gamma + T));
  return 144.0 * mr2 / (c.lambda * c.lambda * (c.gamma + T));
}

/// Concentration form 2 exp(-m^2 / (32 R^2 c_T^2)) with c_T^2 the martingale
/// sum bound. Recovers the theorem bounds exactly; the acceptance suite
/// checks the residual between the two routes.
inline double bound_from_martingale(const ProblemConstants& c, const Loss& loss, double T,
                                    bool averaged, bool force = false) {
  const double m = loss.margin(c.delta);
  const double ct2 = martingale_sum_bound(c, T, averaged, force);
  return 2.0 * std::exp(-m * m / (32.0 * c.R * c.R * ct2));
}

/// Radius m(delta) / (2R) of the ball around g_lambda consisting of Bayes
/// classifiers (for suitable lambda).
inline double bayes_region_radius(const ProblemConstants& c, const Loss& loss) {
  c.validate();
  return loss.margin(c.delta) / (2.0 * c.R);
}

struct VarianceEstimate {
  double sigma_sq = 0.0;
  long long n = 0;
};

/// Empirical estimate of the stochastic-gradient variance at g:
/// sample variance of dl(g(X), Y) feature(X) over n draws. This is an
/// estimate at one point, not the uniform bound the theorems assume.
inline VarianceEstimate estimate_gradient_variance(const SynthDistribution& dist,
                                                   const FeatureMap& map, const Loss& loss,
                                                   const Hypothesis& g, long long n,
                                                   std::uint64_t seed) {
  if (n < 2) throw ConfigError("variance estimate: need n >= 2");
  const auto score_of = [&](const Sample& s, const Eigen::VectorXd& f) {
    return g.representation() == Representation::weights ? g.evaluate_featurized(f)
                                                         : g.evaluate(map, s.x);
  };
  // Two passes over the same counter-based stream (replayable by seed), so
  // memory stays O(dim) even for wide feature maps.
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(map.output_dim());
  {
    SampleStream stream(dist, seed, CounterRng::kGeneric);
    for (long long i = 0; i < n; ++i) {
      const Sample s = stream.next();
      const Eigen::VectorXd f = map.featurize(s.x);
      mean += loss.pointwise_grad(score_of(s, f), s.y) * f;
    }
    mean /= static_cast<double>(n);
  }
  double sum_sq = 0.0;
  {
    SampleStream stream(dist, seed, CounterRng::kGeneric);
    for (long long i = 0; i < n; ++i) {
      const Sample s = stream.next();
      const Eigen::VectorXd f = map.featurize(s.x);
      const double scale = loss.pointwise_grad(score_of(s, f), s.y);
      sum_sq += (scale * f - mean).squaredNorm();
    }
  }
  return {sum_sq / static_cast<double>(n - 1), n};
}

}  // namespace expsgd
