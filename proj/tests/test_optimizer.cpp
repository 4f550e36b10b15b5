#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "expsgd/experiment.hpp"
#include "expsgd/io.hpp"
#include "expsgd/optimizer.hpp"

using namespace expsgd;

namespace {

// Compensated summation; the oracle for the weight-normalization identity.
double kahan_sum_alpha(double gamma, long long T) {
  double sum = 0.0, comp = 0.0;
  for (long long t = 1; t <= T + 1; ++t) {
    const double y = averaging_weight(gamma, t, T) - comp;
    const double s = sum + y;
    comp = (s - sum) - y;
    sum = s;
  }
  return sum;
}

TrainConfig base_config(double lambda, double gamma, long long T, bool averaging) {
  TrainConfig cfg;
  cfg.lambda = lambda;
  cfg.gamma = gamma;
  cfg.iterations = T;
  cfg.averaging = averaging;
  cfg.checkpoint_every = 100;
  return cfg;
}

}  // namespace

TEST_CASE("learning rate schedule") {
  REQUIRE(learning_rate(0.01, 99.0, 1) == Catch::Approx(2.0).epsilon(1e-15));
  REQUIRE(learning_rate(1.0, 1.0, 1) == Catch::Approx(1.0).epsilon(1e-15));
  double prev = learning_rate(0.1, 5.0, 1);
  for (long long t = 2; t < 100; ++t) {
    const double eta = learning_rate(0.1, 5.0, t);
    REQUIRE(eta < prev);
    prev = eta;
  }
  REQUIRE_THROWS_AS(learning_rate(0.0, 1.0, 1), std::domain_error);
  REQUIRE_THROWS_AS(learning_rate(0.1, -1.0, 1), std::domain_error);
  REQUIRE_THROWS_AS(learning_rate(0.1, 1.0, 0), std::domain_error);
}

TEST_CASE("averaging weights normalize and match the stated values") {
  REQUIRE(averaging_weight(1.0, 1, 3) == Catch::Approx(0.1).epsilon(1e-15));
  REQUIRE(averaging_weight(1.0, 4, 3) == Catch::Approx(0.4).epsilon(1e-15));
  for (long long T : {1LL, 10LL, 1000LL, 1000000LL}) {
    for (double gamma : {1.0, 7.5, 2048.0}) {
      REQUIRE(std::abs(kahan_sum_alpha(gamma, T) - 1.0) <= 1e-12);
    }
  }
  REQUIRE_THROWS_AS(averaging_weight(1.0, 0, 3), std::domain_error);
  REQUIRE_THROWS_AS(averaging_weight(1.0, 5, 3), std::domain_error);
}

TEST_CASE("beta recursion reproduces the weighted average") {
  REQUIRE(averaging_beta(1.0, 1) == Catch::Approx(2.0 / 3.0).epsilon(1e-15));
  // gamma -> infinity limit: uniform averaging
  for (long long t : {1LL, 5LL, 17LL}) {
    REQUIRE(averaging_beta(1e12, t) ==
            Catch::Approx(1.0 / (static_cast<double>(t) + 1.0)).epsilon(1e-9));
  }

  CounterRng rng(2, CounterRng::kGeneric);
  for (long long T : {1LL, 5LL, 50LL}) {
    const double gamma = rng.uniform(0.5, 20.0);
    std::vector<Eigen::Vector3d> iterates;
    for (long long t = 1; t <= T + 1; ++t) {
      iterates.emplace_back(rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian());
    }
    Eigen::Vector3d recursion = iterates[0];
    for (long long t = 1; t <= T; ++t) {
      const double beta = averaging_beta(gamma, t);
      recursion = (1.0 - beta) * recursion + beta * iterates[static_cast<std::size_t>(t)];
    }
    Eigen::Vector3d direct = Eigen::Vector3d::Zero();
    for (long long t = 1; t <= T + 1; ++t) {
      direct += averaging_weight(gamma, t, T) * iterates[static_cast<std::size_t>(t - 1)];
    }
    REQUIRE((recursion - direct).norm() <= 1e-10);
  }
}

TEST_CASE("single step: hand-checked update and pure shrinkage") {
  const SynthDistribution dist(0.4);

  // eta = 0.1 with a negligible lambda: starting from zero the update is
  // -eta * dl(0, +1) * feature(x) = 0.05 * (1, 0, 1)
  {
    const FeatureMap map = FeatureMap::linear_with_bias(2, std::sqrt(2.0));
    TrainConfig cfg = base_config(1e-12, 2e13 - 1.0, 1, false);
    Hypothesis g = Hypothesis::zero_weights(3);
    sgd_step(g, {Eigen::Vector2d(1.0, 0.0), +1}, 1, cfg, Loss::logistic(), map);
    REQUIRE(g.weights()(0) == Catch::Approx(0.05).epsilon(1e-12));
    REQUIRE(g.weights()(1) == 0.0);
    REQUIRE(g.weights()(2) == Catch::Approx(0.05).epsilon(1e-12));
  }

  // smoothed hinge with score >= 1 has zero loss gradient: exact shrinkage
  {
    const FeatureMap map = FeatureMap::linear_with_bias(2, std::sqrt(2.0));
    TrainConfig cfg = base_config(0.05, 50.0, 1, false);
    Eigen::VectorXd w(3);
    w << 0.0, 0.0, 5.0;
    Hypothesis g = Hypothesis::from_weights(w);
    sgd_step(g, {Eigen::Vector2d(0.3, 0.3), +1}, 7, cfg, Loss::smoothed_hinge(), map);
    const double shrink = 1.0 - learning_rate(0.05, 50.0, 7) * 0.05;
    REQUIRE(g.weights()(2) == shrink * 5.0);
    REQUIRE(g.weights()(0) == 0.0);
  }

  // invalid label
  {
    const FeatureMap map = FeatureMap::linear_with_bias(2, std::sqrt(2.0));
    TrainConfig cfg = base_config(0.05, 50.0, 1, false);
    Hypothesis g = Hypothesis::zero_weights(3);
    REQUIRE_THROWS_AS(sgd_step(g, {Eigen::Vector2d(0.3, 0.3), 2}, 1, cfg, Loss::logistic(), map),
                      ConfigError);
  }
}

TEST_CASE("config validation") {
  const SynthDistribution dist(0.4);
  const FeatureMap map = FeatureMap::linear_with_bias(2, dist.max_input_norm());
  const Loss loss = Loss::logistic();

  TrainConfig bad = base_config(0.01, 1.0, 100, false);  // eta_1 = 100, way too big
  REQUIRE_THROWS_AS(bad.validate(loss, map), ConfigError);
  bad.allow_lr_violation = true;
  REQUIRE(bad.validate(loss, map).find("warning") == 0);

  TrainConfig zero_T = base_config(0.01, 1000.0, 0, false);
  REQUIRE_THROWS_AS(zero_T.validate(loss, map), ConfigError);

  const double L = loss.smoothness(map.kernel_bound());
  TrainConfig ok = base_config(0.01, gamma_min(0.01, L, LrRegime::last_iterate), 100, false);
  REQUIRE(ok.validate(loss, map).empty());
  // the selected gamma is minimal: halving it breaks the condition
  TrainConfig tight = ok;
  tight.gamma = (ok.gamma + 1.0) / 2.0 - 1.0;
  if (tight.gamma > 0.0) REQUIRE_THROWS_AS(tight.validate(loss, map), ConfigError);
}

TEST_CASE("training is deterministic and respects the iterate ball") {
  const SynthDistribution dist(0.4);
  const FeatureMap map = FeatureMap::linear_with_bias(2, dist.max_input_norm());
  const Loss loss = Loss::logistic();
  const double lambda = 0.01;
  const double gamma = gamma_min(lambda, loss.smoothness(map.kernel_bound()), LrRegime::averaged);

  TrainConfig cfg = base_config(lambda, gamma, 2000, true);
  cfg.seed = 99;

  MetricsContext::Options mopt;
  mopt.test_n = 5000;
  mopt.train_metric_n = 2000;
  mopt.data_seed = 1;
  const MetricsContext metrics(dist, map, loss, mopt);

  SampleStream s1(dist, cfg.seed, CounterRng::kTrainSamples);
  SampleStream s2(dist, cfg.seed, CounterRng::kTrainSamples);
  const TrainResult r1 = train(cfg, loss, map, s1, metrics.hook());
  const TrainResult r2 = train(cfg, loss, map, s2, metrics.hook());
  REQUIRE(r1.final_iterate.weights() == r2.final_iterate.weights());
  REQUIRE(r1.averaged->weights() == r2.averaged->weights());
  std::ostringstream csv1, csv2;
  write_trace_csv(csv1, r1.trace);
  write_trace_csv(csv2, r2.trace);
  REQUIRE(csv1.str() == csv2.str());

  // ball invariance, asserted at every step
  const double M = loss.grad_bound(map.kernel_bound());
  const double R = map.kernel_bound();
  const double bound = (2.0 * learning_rate(lambda, gamma, 1) + 1.0 / lambda) * M * R;
  Hypothesis g = Hypothesis::zero_weights(3);
  SampleStream s3(dist, 123, CounterRng::kTrainSamples);
  for (long long t = 1; t <= 10000; ++t) {
    sgd_step(g, s3.next(), t, cfg, loss, map);
    REQUIRE(g.norm() <= bound);
  }
}

TEST_CASE("averaged output equals the alpha-weighted sum of iterates") {
  const SynthDistribution dist(0.4);
  const FeatureMap map = FeatureMap::linear_with_bias(2, dist.max_input_norm());
  const Loss loss = Loss::logistic();
  const double lambda = 0.05;
  const double gamma = gamma_min(lambda, loss.smoothness(map.kernel_bound()), LrRegime::averaged);
  const long long T = 5;

  TrainConfig cfg = base_config(lambda, gamma, T, true);
  cfg.seed = 31;

  // oracle: replay the identical stream, collecting every iterate
  const Dataset samples = sample_dataset(dist, T, cfg.seed);
  std::vector<Eigen::VectorXd> iterates;
  Hypothesis g = Hypothesis::zero_weights(3);
  iterates.push_back(g.weights());
  for (long long t = 1; t <= T; ++t) {
    sgd_step(g, samples[static_cast<std::size_t>(t - 1)], t, cfg, loss, map);
    iterates.push_back(g.weights());
  }
  Eigen::VectorXd direct = Eigen::VectorXd::Zero(3);
  for (long long t = 1; t <= T + 1; ++t) {
    direct += averaging_weight(gamma, t, T) * iterates[static_cast<std::size_t>(t - 1)];
  }

  SampleStream stream(dist, cfg.seed, CounterRng::kTrainSamples);
  const TrainResult run = train(cfg, loss, map, stream);
  REQUIRE((run.averaged->weights() - direct).norm() <= 1e-10);
  REQUIRE((run.final_iterate.weights() - iterates.back()).norm() == 0.0);
}

TEST_CASE("weights and kernel expansion trajectories coincide under training") {
  const SynthDistribution dist(0.25);
  const FeatureMap map = FeatureMap::linear_with_bias(2, dist.max_input_norm());
  const Loss loss = Loss::logistic();
  const double lambda = 0.02;
  const double gamma = gamma_min(lambda, loss.smoothness(map.kernel_bound()), LrRegime::averaged);

  TrainConfig cfg = base_config(lambda, gamma, 400, true);
  cfg.seed = 5;

  SampleStream sw(dist, cfg.seed, CounterRng::kTrainSamples);
  const TrainResult wrun = train(cfg, loss, map, sw);
  SampleStream sk(dist, cfg.seed, CounterRng::kTrainSamples);
  const TrainResult krun = train(cfg, loss, map, sk, nullptr, Representation::kernel_expansion);

  CounterRng rng(77, CounterRng::kGeneric);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector2d x(rng.uniform(-1, 3), rng.uniform(-1, 1));
    REQUIRE(krun.final_iterate.evaluate(map, x) ==
            Catch::Approx(wrun.final_iterate.evaluate(map, x)).margin(1e-9));
    REQUIRE(krun.averaged->evaluate(map, x) ==
            Catch::Approx(wrun.averaged->evaluate(map, x)).margin(1e-9));
  }
  REQUIRE(krun.final_iterate.norm() == Catch::Approx(wrun.final_iterate.norm()).margin(1e-9));
  REQUIRE(krun.averaged->norm() == Catch::Approx(wrun.averaged->norm()).margin(1e-9));
}

TEST_CASE("divergence is reported with its iteration index") {
  const SynthDistribution dist(0.4);
  const FeatureMap map = FeatureMap::linear_with_bias(2, dist.max_input_norm());
  // exponential loss without projection: the step-size condition cannot even
  // be formed, and an aggressive schedule blows the scores up
  const Loss loss = Loss::exponential();
  TrainConfig cfg = base_config(1e-6, 1.5, 1000, false);  // eta_1 = 8e5
  cfg.allow_lr_violation = true;  // smoothness is unavailable; warn and proceed
  cfg.checkpoint_every = 1000000;
  SampleStream stream(dist, 1, CounterRng::kTrainSamples);
  try {
    train(cfg, loss, map, stream);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    REQUIRE(e.iteration() >= 1);
  }
}

TEST_CASE("projection keeps the iterate inside the configured ball") {
  const SynthDistribution dist(0.4);
  const FeatureMap map = FeatureMap::linear_with_bias(2, dist.max_input_norm());
  const double B = 1.5;
  const Loss loss = Loss::exponential(B);
  const double lambda = 0.05;
  // deliberately aggressive schedule so the ball constraint actually binds
  TrainConfig cfg = base_config(lambda, 100.0, 2000, false);
  cfg.projection_radius = B;
  cfg.allow_lr_violation = true;
  Hypothesis g = Hypothesis::zero_weights(3);
  SampleStream stream(dist, 3, CounterRng::kTrainSamples);
  bool projected = false;
  for (long long t = 1; t <= cfg.iterations; ++t) {
    sgd_step(g, stream.next(), t, cfg, loss, map);
    REQUIRE(g.norm() <= B + 1e-12);
    if (g.norm() >= B - 1e-9) projected = true;
  }
  REQUIRE(projected);
}

TEST_CASE("coupled stability runs: zero deviation on identical redraw, contraction otherwise") {
  const SynthDistribution dist(0.4);
  const FeatureMap map = FeatureMap::linear_with_bias(2, dist.max_input_norm());
  const Loss loss = Loss::logistic();
  const double lambda = 0.01;
  const double gamma = gamma_min(lambda, loss.smoothness(map.kernel_bound()), LrRegime::averaged);
  TrainConfig cfg = base_config(lambda, gamma, 300, false);
  cfg.regime = LrRegime::averaged;
  cfg.seed = 11;

  const long long replace_at = 50;
  const Dataset samples = sample_dataset(dist, cfg.iterations, cfg.seed);

  {
    DatasetStream stream(samples);
    const auto devs = stability_coupled_run(cfg, loss, map, stream,
                                            samples[replace_at - 1], replace_at);
    for (double d : devs) REQUIRE(d == 0.0);
  }
  {
    DatasetStream stream(samples);
    SampleStream redraw(dist, 1234, CounterRng::kStabilityRedraw);
    const auto devs = stability_coupled_run(cfg, loss, map, stream, redraw.next(), replace_at);
    REQUIRE(devs.size() == static_cast<std::size_t>(cfg.iterations - replace_at + 1));
    const double M = loss.grad_bound(map.kernel_bound());
    const double R = map.kernel_bound();
    REQUIRE(devs.front() <= 6.0 * M * R * learning_rate(lambda, gamma, replace_at));
    for (std::size_t i = 1; i < devs.size(); ++i) REQUIRE(devs[i] <= devs[i - 1] + 1e-15);
    REQUIRE(devs.back() <=
            12.0 * M * R / (lambda * (gamma + static_cast<double>(cfg.iterations))) + 1e-9);
  }
}

TEST_CASE("training over random Fourier features") {
  const SynthDistribution dist(0.4);
  const FeatureMap map = FeatureMap::random_fourier(2, 64, 0.7, 21);
  const Loss loss = Loss::logistic();
  const double lambda = 0.01;
  const double gamma = gamma_min(lambda, loss.smoothness(map.kernel_bound()), LrRegime::averaged);

  MetricsContext::Options mopt;
  mopt.test_n = 5000;
  mopt.train_metric_n = 2000;
  mopt.data_seed = 8;
  // the vanishing-regularization baseline is ill-conditioned over RFF
  // features; a 1e-4 baseline keeps this smoke test quick
  mopt.best_risk_lambda = 1e-4;
  const MetricsContext metrics(dist, map, loss, mopt);

  TrainConfig cfg = base_config(lambda, gamma, 3000, true);
  cfg.seed = 2;
  cfg.checkpoint_every = 3000;
  SampleStream stream(dist, cfg.seed, CounterRng::kTrainSamples);
  const TrainResult run = train(cfg, loss, map, stream, metrics.hook());
  // a 64-feature Gaussian approximation separates this task comfortably
  REQUIRE(run.trace.back().test_err < 0.2);
  REQUIRE(run.trace.back().norm <= map.kernel_bound() / lambda);  // loose sanity
}

TEST_CASE("averaged test error does not regress between early and late checkpoints") {
  const SynthDistribution dist(0.4);
  const FeatureMap map = FeatureMap::linear_with_bias(2, dist.max_input_norm());
  const Loss loss = Loss::logistic();
  const double lambda = 1e-4;
  const double gamma = gamma_min(lambda, loss.smoothness(map.kernel_bound()), LrRegime::averaged);

  MetricsContext::Options mopt;
  mopt.test_n = 100000;
  mopt.train_metric_n = 2000;
  mopt.data_seed = 42;
  const MetricsContext metrics(dist, map, loss, mopt);

  std::vector<double> early, late;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    TrainConfig cfg = base_config(lambda, gamma, 20000, true);
    cfg.seed = seed;
    cfg.checkpoint_every = 200;
    SampleStream stream(dist, seed, CounterRng::kTrainSamples);
    const TrainResult run = train(cfg, loss, map, stream, metrics.hook());
    double err200 = 0, err20000 = 0;
    for (const auto& row : run.trace) {
      if (row.iter == 200) err200 = row.test_err;
      if (row.iter == 20000) err20000 = row.test_err;
    }
    early.push_back(err200);
    late.push_back(err20000);
  }
  std::sort(early.begin(), early.end());
  std::sort(late.begin(), late.end());
  REQUIRE(late[2] <= early[2]);  // medians over the five seeds
}
