#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "expsgd/errors.hpp"
#include "expsgd/feature_map.hpp"
#include "expsgd/hypothesis.hpp"
#include "expsgd/loss.hpp"
#include "expsgd/synthdata.hpp"

namespace expsgd {

/// Which theorem's step-size condition a configuration is validated against.
/// The first-iterate condition is eta_1 <= min{1/(L+lambda), 1/(2 lambda)}
/// for the last-iterate analysis and eta_1 <= min{1/L, 1/(2 lambda)} for the
/// averaged one.
enum class LrRegime { last_iterate, averaged };

/// Learning rate eta_t = 2 / (lambda (gamma + t)).
inline double learning_rate(double lambda, double gamma, long long t) {
  if (!(lambda > 0.0)) throw std::domain_error("learning_rate: lambda must be > 0");
  if (!(gamma > 0.0)) throw std::domain_error("learning_rate: gamma must be > 0");
  if (t < 1) throw std::domain_error("learning_rate: t must be >= 1");
  return 2.0 / (lambda * (gamma + static_cast<double>(t)));
}

/// Averaging weight alpha_t = 2 (gamma + t - 1) / ((2 gamma + T)(T + 1)),
/// for t in [1, T+1]. The weights sum to one.
inline double averaging_weight(double gamma, long long t, long long T) {
  if (!(gamma > 0.0)) throw std::domain_error("averaging_weight: gamma must be > 0");
  if (T < 1) throw std::domain_error("averaging_weight: T must be >= 1");
  if (t < 1 || t > T + 1) throw std::domain_error("averaging_weight: t out of [1, T+1]");
  return 2.0 * (gamma + static_cast<double>(t) - 1.0) /
         ((2.0 * gamma + static_cast<double>(T)) * (static_cast<double>(T) + 1.0));
}

/// Recursion coefficient beta_t = 2 (gamma + t) / ((t + 1)(2 gamma + t)); the
/// update avg <- (1 - beta_t) avg + beta_t g_{t+1} starting from avg = g_1
/// reproduces the alpha-weighted average without storing iterates.
inline double averaging_beta(double gamma, long long t) {
  if (!(gamma > 0.0)) throw std::domain_error("averaging_beta: gamma must be > 0");
  if (t < 1) throw std::domain_error("averaging_beta: t must be >= 1");
  return 2.0 * (gamma + static_cast<double>(t)) /
         ((static_cast<double>(t) + 1.0) * (2.0 * gamma + static_cast<double>(t)));
}

/// Smallest integer gamma satisfying the regime's eta_1 condition.
inline double gamma_min(double lambda, double smoothness_L, LrRegime regime) {
  const double denom = regime == LrRegime::last_iterate
                           ? std::max(smoothness_L + lambda, 2.0 * lambda)
                           : std::max(smoothness_L, 2.0 * lambda);
  return std::ceil(std::max(1.0, 2.0 * denom / lambda - 1.0));
}

struct TrainConfig {
  double lambda = 0.01;
  double gamma = 1.0;
  long long iterations = 1000;       // T
  bool averaging = false;
  std::optional<double> projection_radius;
  std::uint64_t seed = 0;
  long long checkpoint_every = 100;
  std::optional<LrRegime> regime;    // defaults to the method's own theorem
  bool allow_lr_violation = false;   // exploration mode: warn instead of throw

  LrRegime effective_regime() const {
    return regime.value_or(averaging ? LrRegime::averaged : LrRegime::last_iterate);
  }

  /// Validates ranges and the eta_1 step-size condition against the loss
  /// smoothness. Returns a warning string when a violation is tolerated.
  std::string validate(const Loss& loss, const FeatureMap& map) const {
    if (!(lambda > 0.0)) throw ConfigError("train config: lambda must be > 0");
    if (!(gamma > 0.0)) throw ConfigError("train config: gamma must be > 0");
    if (iterations < 1) throw ConfigError("train config: iterations must be >= 1");
    if (checkpoint_every < 1) throw ConfigError("train config: checkpoint_every must be >= 1");
    if (projection_radius && !(*projection_radius > 0.0)) {
      throw ConfigError("train config: projection radius must be > 0");
    }
    const double eta1 = learning_rate(lambda, gamma, 1);
    double L = 0.0;
    try {
      L = loss.smoothness(map.kernel_bound());
    } catch (const ConfigError&) {
      // no projection radius, so no smoothness constant exists
      if (!allow_lr_violation) throw;
      return "warning: smoothness constant unavailable; step-size condition unchecked";
    }
    const double cap = effective_regime() == LrRegime::last_iterate
                           ? std::min(1.0 / (L + lambda), 0.5 / lambda)
                           : std::min(1.0 / L, 0.5 / lambda);
    if (eta1 > cap * (1.0 + 1e-12)) {
      const std::string msg = "eta_1 = " + std::to_string(eta1) +
                              " exceeds the regime cap " + std::to_string(cap) +
                              "; increase gamma";
      if (!allow_lr_violation) throw ConfigError("train config: " + msg);
      return "warning: " + msg;
    }
    return {};
  }
};

/// Per-checkpoint metrics; excess_err is relative to the true Bayes error
/// and excess_risk to the best-in-class risk (see the metrics context).
struct TraceRow {
  long long iter = 0;
  double train_loss = 0, test_loss = 0;
  double train_err = 0, test_err = 0;
  double excess_err = 0, excess_risk = 0;
  double ratio = 0;  // NaN when the excess risk is at the guard floor
  double norm = 0;
};

using EvalHook = std::function<TraceRow(long long iter, const Hypothesis& g)>;

/// One step of Algorithm 1: g <- (1 - eta_t lambda) g - eta_t dl(g(x), y) k(x, .),
/// followed by radial projection when a ball constraint is configured.
inline void sgd_step(Hypothesis& g, const Sample& sample, long long t, const TrainConfig& cfg,
                     const Loss& loss, const FeatureMap& map) {
  if (sample.y != 1 && sample.y != -1) throw ConfigError("sgd_step: label must be -1 or +1");
  const double eta = learning_rate(cfg.lambda, cfg.gamma, t);
  const double shrink = 1.0 - eta * cfg.lambda;
  const double score = g.evaluate(map, sample.x);
  if (!std::isfinite(score)) throw DivergenceError("non-finite score", t);
  const double grad = loss.pointwise_grad(score, sample.y);
  if (g.representation() == Representation::weights) {
    g.axpy_feature(shrink, map.featurize(sample.x), -eta * grad);
  } else {
    g.axpy_center(shrink, sample.x, -eta * grad, map);
  }
  if (cfg.projection_radius) {
    const double n = g.norm();
    if (n > *cfg.projection_radius) g.scale_by(*cfg.projection_radius / n);
  }
  if (!std::isfinite(g.norm_sq())) throw DivergenceError("non-finite norm", t);
}

struct TrainResult {
  Hypothesis final_iterate;
  std::optional<Hypothesis> averaged;
  std::vector<TraceRow> trace;       // metrics of the returned object
  std::vector<TraceRow> trace_last;  // non-averaged iterate, when requested
};

namespace detail {

/// Averaged-iterate state. In weights mode the recursion is a dense axpy; in
/// kernel mode true (unscaled) coefficients are kept aligned with the
/// iterate's growing center list.
class AveragedState {
 public:
  AveragedState(const Hypothesis& g1, Representation rep) : rep_(rep) {
    if (rep_ == Representation::weights) {
      w_ = g1.weights();
    } else {
      sync_with(g1);
    }
  }

  void update(double beta, const Hypothesis& g) {
    if (rep_ == Representation::weights) {
      w_ = (1.0 - beta) * w_ + beta * g.weights();
      return;
    }
    sync_with(g);
    const double scale = g.lazy_scale();
    const auto& raw = g.raw_coefficients();
    for (std::size_t i = 0; i < coeffs_.size(); ++i) {
      coeffs_[i] = (1.0 - beta) * coeffs_[i] + beta * scale * raw[i];
    }
  }

  Hypothesis materialize(const Hypothesis& g, const FeatureMap& map) const {
    if (rep_ == Representation::weights) return Hypothesis::from_weights(w_);
    return Hypothesis::kernel_expansion_from(g.kernel_spec(), g.centers(), coeffs_, map);
  }

 private:
  void sync_with(const Hypothesis& g) { coeffs_.resize(g.centers().size(), 0.0); }

  Representation rep_;
  Eigen::VectorXd w_;
  std::vector<double> coeffs_;
};

}  // namespace detail

/// Runs Algorithm 1 for T steps over the given sample stream. When averaging
/// is on, the weighted average is maintained by the beta recursion and the
/// trace reports the averaged iterate (the object the run returns); pass
/// trace_last to additionally trace the raw iterate. Deterministic given
/// (config, loss, map, stream).
template <class Stream>
TrainResult train(const TrainConfig& cfg, const Loss& loss, const FeatureMap& map,
                  Stream& stream, const EvalHook& eval_hook = nullptr,
                  Representation rep = Representation::weights,
                  const Hypothesis* g1 = nullptr, bool trace_last = false,
                  KernelSpec kernel = {}) {
  cfg.validate(loss, map);

  Hypothesis g = g1 ? *g1
                    : (rep == Representation::weights
                           ? Hypothesis::zero_weights(map.output_dim())
                           : Hypothesis::kernel_expansion(kernel));
  if (g.representation() != rep) throw ConfigError("train: initial iterate representation mismatch");

  TrainResult result{g, std::nullopt, {}, {}};
  std::optional<detail::AveragedState> avg;
  if (cfg.averaging) avg.emplace(g, rep);

  for (long long t = 1; t <= cfg.iterations; ++t) {
    const Sample s = stream.next();
    sgd_step(g, s, t, cfg, loss, map);
    if (avg) avg->update(averaging_beta(cfg.gamma, t), g);

    const bool checkpoint = eval_hook && (t % cfg.checkpoint_every == 0 || t == cfg.iterations);
    if (checkpoint) {
      if (avg) {
        result.trace.push_back(eval_hook(t, avg->materialize(g, map)));
        if (trace_last) result.trace_last.push_back(eval_hook(t, g));
      } else {
        result.trace.push_back(eval_hook(t, g));
      }
    }
  }

  result.final_iterate = g;
  if (avg) result.averaged = avg->materialize(g, map);
  return result;
}

/// Couples two chains sharing one sample stream, with the sample at
/// replace_index redrawn independently in the second chain. Returns the
/// deviations ||g_{s+1} - g'_{s+1}|| for s = replace_index .. T. Both chains
/// run in the weights representation, where the pairwise distance is exact
/// and cheap; the bounds it verifies are representation-independent.
template <class Stream>
std::vector<double> stability_coupled_run(const TrainConfig& cfg, const Loss& loss,
                                          const FeatureMap& map, Stream& stream,
                                          const Sample& replacement, long long replace_index) {
  if (replace_index < 1 || replace_index > cfg.iterations) {
    throw ConfigError("stability run: replace index out of [1, T]");
  }
  cfg.validate(loss, map);
  Hypothesis a = Hypothesis::zero_weights(map.output_dim());
  Hypothesis b = a;
  std::vector<double> deviations;
  deviations.reserve(static_cast<std::size_t>(cfg.iterations - replace_index + 1));
  for (long long t = 1; t <= cfg.iterations; ++t) {
    const Sample s = stream.next();
    sgd_step(a, s, t, cfg, loss, map);
    sgd_step(b, t == replace_index ? replacement : s, t, cfg, loss, map);
    if (t >= replace_index) {
      deviations.push_back((a.weights() - b.weights()).norm());
    }
  }
  return deviations;
}

}  // namespace expsgd
