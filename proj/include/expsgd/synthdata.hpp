#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "expsgd/errors.hpp"
#include "expsgd/hypothesis.hpp"
#include "expsgd/loss.hpp"
#include "expsgd/quadrature.hpp"
#include "expsgd/rng.hpp"

namespace expsgd {

struct Sample {
  Eigen::Vector2d x;
  int y;  // -1 or +1
};

using Dataset = std::vector<Sample>;

/// Two-rectangle mixture on the plane with fixed conditional probabilities:
/// x is uniform on the left box [-1+r, 1-r] x [-1, 1] or the right box
/// [1+r, 3-r] x [-1, 1], and P(Y=+1 | x) is 0.5 - delta on the left part and
/// 0.5 + delta on the right part. The Bayes decision boundary is the vertical
/// line x1 = 1 through the empty margin strip, and the Bayes classification
/// error equals 0.5 - delta on either box.
struct SynthDistribution {
  double delta;
  double margin_r = 0.1;
  double weight_left = 0.5;

  SynthDistribution(double delta_, double margin_r_ = 0.1, double weight_left_ = 0.5)
      : delta(delta_), margin_r(margin_r_), weight_left(weight_left_) {
    if (!(delta > 0.0 && delta < 0.5)) throw ConfigError("delta must lie in (0, 1/2)");
    if (!(margin_r > 0.0 && margin_r < 1.0)) throw ConfigError("margin_r must lie in (0, 1)");
    if (!(weight_left > 0.0 && weight_left < 1.0)) {
      throw ConfigError("region weight must lie in (0, 1)");
    }
  }

  Rect left_box() const { return {-1.0 + margin_r, 1.0 - margin_r, -1.0, 1.0}; }
  Rect right_box() const { return {1.0 + margin_r, 3.0 - margin_r, -1.0, 1.0}; }

  /// P(Y=+1 | x); the boxes are separated by x1 = 1.
  double conditional_prob_pos(const Eigen::Vector2d& x) const {
    return x(0) < 1.0 ? 0.5 - delta : 0.5 + delta;
  }

  double bayes_error() const { return 0.5 - delta; }

  /// Largest ||x|| over the support (right box corner), used for the linear
  /// feature map's kernel bound.
  double max_input_norm() const {
    const Rect r = right_box();
    return std::hypot(r.x1_hi, std::max(std::abs(r.x2_lo), r.x2_hi));
  }
};

/// Streaming sampler; each call draws 4 fixed-layout variates, so a stream is
/// reproducible from (seed, stream id) alone.
class SampleStream {
 public:
  SampleStream(const SynthDistribution& dist, std::uint64_t seed,
               std::uint64_t stream = CounterRng::kTrainSamples)
      : dist_(dist), rng_(seed, stream) {}

  Sample next() {
    const bool left = rng_.next_double() < dist_.weight_left;
    const Rect box = left ? dist_.left_box() : dist_.right_box();
    Sample s;
    s.x(0) = rng_.uniform(box.x1_lo, box.x1_hi);
    s.x(1) = rng_.uniform(box.x2_lo, box.x2_hi);
    const double p_pos = left ? 0.5 - dist_.delta : 0.5 + dist_.delta;
    s.y = rng_.bernoulli(p_pos) ? +1 : -1;
    return s;
  }

 private:
  SynthDistribution dist_;
  CounterRng rng_;
};

/// Draws from a finite set, uniformly with replacement.
class FiniteSampleStream {
 public:
  FiniteSampleStream(Dataset data, std::uint64_t seed)
      : data_(std::move(data)), rng_(seed, CounterRng::kFiniteTrainIndex) {
    if (data_.empty()) throw ConfigError("finite training set must be non-empty");
  }

  Sample next() {
    const auto i = static_cast<std::size_t>(rng_.next_double() * data_.size());
    return data_[std::min(i, data_.size() - 1)];
  }

  const Dataset& data() const { return data_; }

 private:
  Dataset data_;
  CounterRng rng_;
};

inline Dataset sample_dataset(const SynthDistribution& dist, long long n, std::uint64_t seed,
                              std::uint64_t stream = CounterRng::kTrainSamples) {
  if (n < 1) throw ConfigError("sample size must be >= 1");
  SampleStream s(dist, seed, stream);
  Dataset out;
  out.reserve(static_cast<std::size_t>(n));
  for (long long i = 0; i < n; ++i) out.push_back(s.next());
  return out;
}

/// Tensor Gauss-Legendre grid over both boxes with probability weights
/// (region weight times the normalized in-box rule; weights sum to 1) and
/// the per-node conditional probability.
struct QuadGrid {
  std::vector<Eigen::Vector2d> points;
  Eigen::VectorXd prob_weight;
  Eigen::VectorXd cond_prob;

  static QuadGrid build(const SynthDistribution& dist, int order = 64) {
    QuadGrid grid;
    const Rect boxes[2] = {dist.left_box(), dist.right_box()};
    const double region_w[2] = {dist.weight_left, 1.0 - dist.weight_left};
    const double cond[2] = {0.5 - dist.delta, 0.5 + dist.delta};
    const std::size_t per_box = static_cast<std::size_t>(order) * order;
    grid.prob_weight.resize(2 * per_box);
    grid.cond_prob.resize(2 * per_box);
    grid.points.reserve(2 * per_box);
    std::size_t at = 0;
    for (int b = 0; b < 2; ++b) {
      const TensorRule rule = TensorRule::over(boxes[b], order);
      const double area = boxes[b].area();
      for (std::size_t i = 0; i < per_box; ++i, ++at) {
        grid.points.emplace_back(rule.x1[i], rule.x2[i]);
        grid.prob_weight(at) = region_w[b] * rule.weight[i] / area;
        grid.cond_prob(at) = cond[b];
      }
    }
    return grid;
  }
};

inline double bayes_error(const SynthDistribution& dist) { return dist.bayes_error(); }

/// Minimal expected surrogate risk over all measurable functions,
/// E[l*(rho(1|X))]; piecewise-constant conditionals make it a two-term sum.
inline double bayes_risk(const SynthDistribution& dist, const Loss& loss) {
  return dist.weight_left * loss.min_risk(0.5 - dist.delta) +
         (1.0 - dist.weight_left) * loss.min_risk(0.5 + dist.delta);
}

namespace detail {

inline Eigen::VectorXd scores_on_grid(const QuadGrid& grid, const Hypothesis& g,
                                      const FeatureMap& map) {
  Eigen::VectorXd s(static_cast<Eigen::Index>(grid.points.size()));
  for (std::size_t i = 0; i < grid.points.size(); ++i) {
    s(static_cast<Eigen::Index>(i)) = g.evaluate(map, grid.points[i]);
    if (!std::isfinite(s(static_cast<Eigen::Index>(i)))) {
      throw DivergenceError("non-finite hypothesis value inside the support",
                            static_cast<long long>(i));
    }
  }
  return s;
}

}  // namespace detail

/// Regularized expected risk L_lambda(g) = E[phi(Y g(X))] + (lambda/2)||g||^2,
/// with the expectation computed by the tensor Gauss-Legendre rule.
inline double expected_risk(const SynthDistribution& dist, const Hypothesis& g,
                            const FeatureMap& map, const Loss& loss, double lambda,
                            int order = 64) {
  const QuadGrid grid = QuadGrid::build(dist, order);
  const Eigen::VectorXd s = detail::scores_on_grid(grid, g, map);
  double risk = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double rho = grid.cond_prob(i);
    risk += grid.prob_weight(i) * (rho * loss.phi(s(i)) + (1.0 - rho) * loss.phi(-s(i)));
  }
  return risk + 0.5 * lambda * g.norm_sq();
}

namespace detail {

/// Area of {a1 x1 + a2 x2 + c >= 0} intersected with the box, by
/// Sutherland-Hodgman clipping. Handles the degenerate a = 0 case via the
/// sign-of-c rule (score identically c; ties classify as +1).
inline double positive_halfplane_area(const Rect& box, double a1, double a2, double c) {
  if (a1 == 0.0 && a2 == 0.0) return c >= 0.0 ? box.area() : 0.0;
  std::vector<Eigen::Vector2d> poly = {{box.x1_lo, box.x2_lo},
                                       {box.x1_hi, box.x2_lo},
                                       {box.x1_hi, box.x2_hi},
                                       {box.x1_lo, box.x2_hi}};
  std::vector<Eigen::Vector2d> clipped;
  const auto side = [&](const Eigen::Vector2d& p) { return a1 * p(0) + a2 * p(1) + c; };
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Eigen::Vector2d& p = poly[i];
    const Eigen::Vector2d& q = poly[(i + 1) % poly.size()];
    const double sp = side(p), sq = side(q);
    if (sp >= 0.0) clipped.push_back(p);
    if ((sp >= 0.0) != (sq >= 0.0)) {
      const double t = sp / (sp - sq);
      clipped.push_back(p + t * (q - p));
    }
  }
  if (clipped.size() < 3) return 0.0;
  double twice_area = 0.0;
  for (std::size_t i = 0; i < clipped.size(); ++i) {
    const Eigen::Vector2d& p = clipped[i];
    const Eigen::Vector2d& q = clipped[(i + 1) % clipped.size()];
    twice_area += p(0) * q(1) - q(0) * p(1);
  }
  return 0.5 * std::abs(twice_area);
}

/// Fraction of the box where g >= 0, for arbitrary g: per-scanline measure of
/// the positive set (bisection on sign changes) integrated over x2 with a
/// composite Gauss rule. Documented tolerance ~1e-4 for smooth boundaries.
template <class ScoreFn>
double positive_fraction_scanline(const Rect& box, const ScoreFn& score) {
  constexpr int kPanels = 16, kNodesPerPanel = 16, kScanCells = 256, kBisectIters = 60;
  const auto gauss = gauss_legendre(kNodesPerPanel);
  const double panel_h = (box.x2_hi - box.x2_lo) / kPanels;
  const double width = box.x1_hi - box.x1_lo;
  double integral = 0.0;
  for (int p = 0; p < kPanels; ++p) {
    const double lo = box.x2_lo + p * panel_h;
    for (const auto& node : gauss) {
      const double x2 = lo + 0.5 * panel_h * (node.x + 1.0);
      // Measure of {x1 : score(x1, x2) >= 0} on the scanline.
      double measure = 0.0;
      double prev_x = box.x1_lo;
      double prev_s = score(prev_x, x2);
      for (int cidx = 1; cidx <= kScanCells; ++cidx) {
        const double cur_x = box.x1_lo + width * cidx / kScanCells;
        const double cur_s = score(cur_x, x2);
        if ((prev_s >= 0.0) == (cur_s >= 0.0)) {
          if (prev_s >= 0.0) measure += cur_x - prev_x;
        } else {
          double a = prev_x, b = cur_x, sa = prev_s;
          for (int it = 0; it < kBisectIters; ++it) {
            const double mid = 0.5 * (a + b);
            const double sm = score(mid, x2);
            if ((sm >= 0.0) == (sa >= 0.0)) {
              a = mid;
              sa = sm;
            } else {
              b = mid;
            }
          }
          const double root = 0.5 * (a + b);
          if (prev_s >= 0.0) measure += root - prev_x;
          else measure += cur_x - root;
        }
        prev_x = cur_x;
        prev_s = cur_s;
      }
      integral += 0.5 * panel_h * node.weight * measure;
    }
  }
  return integral / box.area();
}

}  // namespace detail

/// Expected classification error R(g) = E[ 1{sgn(g(X)) != Y} ], with the tie
/// at score 0 classified as +1. For a linear score (weights representation
/// over the linear-with-bias map) the sign regions are clipped exactly
/// against each box; otherwise a scanline quadrature fallback is used.
inline double expected_classification_error(const SynthDistribution& dist, const Hypothesis& g,
                                            const FeatureMap& map) {
  const Rect boxes[2] = {dist.left_box(), dist.right_box()};
  const double region_w[2] = {dist.weight_left, 1.0 - dist.weight_left};
  const double cond[2] = {0.5 - dist.delta, 0.5 + dist.delta};
  const bool exact_linear = map.kind() == FeatureKind::linear_with_bias &&
                            g.representation() == Representation::weights;
  double err = 0.0;
  for (int b = 0; b < 2; ++b) {
    double frac_pos;  // P(predict +1 | box)
    if (exact_linear) {
      const auto& w = g.weights();
      frac_pos = detail::positive_halfplane_area(boxes[b], w(0), w(1), w(2)) / boxes[b].area();
    } else {
      frac_pos = detail::positive_fraction_scanline(
          boxes[b], [&](double x1, double x2) {
            return g.evaluate(map, Eigen::Vector2d(x1, x2));
          });
    }
    err += region_w[b] * (cond[b] * (1.0 - frac_pos) + (1.0 - cond[b]) * frac_pos);
  }
  return err;
}

/// Expected Bregman divergence E_X[ d_{l*}(h*^{-1}(g(X)), rho(1|X)) ] by the
/// same tensor rule as expected_risk; equals the excess risk over the Bayes
/// rule when the link machinery is consistent.
inline double expected_link_bregman(const SynthDistribution& dist, const Hypothesis& g,
                                    const FeatureMap& map, const Loss& loss, int order = 64) {
  const QuadGrid grid = QuadGrid::build(dist, order);
  const Eigen::VectorXd s = detail::scores_on_grid(grid, g, map);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    acc += grid.prob_weight(i) * loss.bregman(loss.link_inverse(s(i)), grid.cond_prob(i));
  }
  return acc;
}

/// Same expectation but against the conditional probability implied by a
/// reference hypothesis, E_X[ d_{l*}(h*^{-1}(g(X)), h*^{-1}(ref(X))) ].
inline double expected_link_bregman_vs(const SynthDistribution& dist, const Hypothesis& g,
                                       const Hypothesis& ref, const FeatureMap& map,
                                       const Loss& loss, int order = 64) {
  const QuadGrid grid = QuadGrid::build(dist, order);
  const Eigen::VectorXd sg = detail::scores_on_grid(grid, g, map);
  const Eigen::VectorXd sr = detail::scores_on_grid(grid, ref, map);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < sg.size(); ++i) {
    acc += grid.prob_weight(i) *
           loss.bregman(loss.link_inverse(sg(i)), loss.link_inverse(sr(i)));
  }
  return acc;
}

struct OracleResult {
  Hypothesis minimizer;
  double regularized_risk;   // L_lambda at the minimizer
  double risk;               // unregularized L
  double norm;
  long long iterations;
  double grad_norm;
};

/// Deterministic minimizer of the quadrature-exact L_lambda over a
/// weights-mode feature map: full-gradient descent with Armijo backtracking,
/// run until the gradient norm falls below tol. Throws on non-convergence.
inline OracleResult g_lambda_oracle(const SynthDistribution& dist, const FeatureMap& map,
                                    const Loss& loss, double lambda, double tol = 1e-10,
                                    long long max_iters = 1000000, int order = 64) {
  if (!(lambda > 0.0)) throw ConfigError("g_lambda_oracle: lambda must be > 0");
  const QuadGrid grid = QuadGrid::build(dist, order);
  const Eigen::Index n = static_cast<Eigen::Index>(grid.points.size());
  const int dim = map.output_dim();
  Eigen::MatrixXd features(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    features.row(i) = map.featurize(grid.points[i]).transpose();
  }

  const auto objective = [&](const Eigen::VectorXd& w) {
    const Eigen::VectorXd s = features * w;
    double risk = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double rho = grid.cond_prob(i);
      risk += grid.prob_weight(i) * (rho * loss.phi(s(i)) + (1.0 - rho) * loss.phi(-s(i)));
    }
    return risk + 0.5 * lambda * w.squaredNorm();
  };
  const auto gradient = [&](const Eigen::VectorXd& w) {
    const Eigen::VectorXd s = features * w;
    Eigen::VectorXd node_factor(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double rho = grid.cond_prob(i);
      node_factor(i) = grid.prob_weight(i) *
                       (rho * loss.phi_prime(s(i)) - (1.0 - rho) * loss.phi_prime(-s(i)));
    }
    return (features.transpose() * node_factor + lambda * w).eval();
  };

  // Gradient descent with backtracking. The initial trial step is the
  // Barzilai-Borwein spectral estimate (plain step doubling is hopeless on
  // the geometrically decaying spectra of random Fourier features), vetted
  // by a non-monotone Armijo search. Once the requested decrease falls under
  // the floating-point resolution of the objective, acceptance switches to a
  // gradient-growth safeguard: near the floor the objective can no longer
  // certify progress that the gradient norm still resolves.
  Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
  double fw = objective(w);
  Eigen::VectorXd grad = gradient(w);
  std::vector<double> recent_f(10, fw);
  double step = 1.0;
  long long iter = 0;
  for (; iter < max_iters; ++iter) {
    const double gnorm = grad.norm();
    if (gnorm <= tol) break;
    const double f_ref = *std::max_element(recent_f.begin(), recent_f.end());
    const double resolution =
        16.0 * std::numeric_limits<double>::epsilon() * (std::abs(f_ref) + 1.0);
    double trial = std::clamp(step, 1e-12, 1e8);
    bool floor_regime = true;
    while (0.5 * trial * gnorm * gnorm > resolution) {
      const Eigen::VectorXd w_try = w - trial * grad;
      const double f_try = objective(w_try);
      if (f_try <= f_ref - 0.5 * trial * gnorm * gnorm) {
        w = w_try;
        fw = f_try;
        floor_regime = false;
        break;
      }
      trial *= 0.5;
    }
    if (floor_regime) {
      w -= trial * grad;
      fw = objective(w);
    }
    recent_f[static_cast<std::size_t>(iter % 10)] = fw;

    const Eigen::VectorXd new_grad = gradient(w);
    const Eigen::VectorXd dg = new_grad - grad;
    const double dw_dg = -trial * grad.dot(dg);  // (w_new - w) . (g_new - g)
    const double dw_dw = trial * trial * gnorm * gnorm;
    step = dw_dg > 0.0 ? dw_dw / dw_dg : trial * 2.0;  // BB1, else grow back
    if (floor_regime && new_grad.norm() > gnorm) step = 0.5 * trial;
    grad = new_grad;
  }
  if (grad.norm() > tol) {
    throw std::runtime_error("g_lambda_oracle: no convergence after " +
                             std::to_string(max_iters) + " iterations, grad norm " +
                             std::to_string(grad.norm()));
  }

  OracleResult res{Hypothesis::from_weights(w), fw, fw - 0.5 * lambda * w.squaredNorm(),
                   w.norm(), iter, grad.norm()};
  return res;
}

}  // namespace expsgd
