// Command-line front end: data generation, training, evaluation, the
// g_lambda oracle, theory reports, the stability harness, the full synthetic
// experiment grid, and figure regeneration from traces.
//
// Exit codes: 0 success, 1 usage/config error, 2 numerical failure
// (divergence, non-convergence), 3 assertion failure in stability checks.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "expsgd/experiment.hpp"
#include "expsgd/io.hpp"
#include "expsgd/optimizer.hpp"
#include "expsgd/serialize.hpp"
#include "expsgd/theory.hpp"

namespace fs = std::filesystem;
using namespace expsgd;

namespace {

struct CommonModelArgs {
  std::string loss_name = "logistic";
  std::string features = "linear_with_bias";
  int rff_dim = 512;
  double rff_bandwidth = 0.5;
  std::uint64_t rff_seed = 7;
  std::optional<double> projection_radius;

  void attach(CLI::App* cmd) {
    cmd->add_option("--loss", loss_name, "logistic | squared | smoothed_hinge | exponential");
    cmd->add_option("--features", features, "linear_with_bias | random_fourier");
    cmd->add_option("--rff-dim", rff_dim, "random Fourier feature count");
    cmd->add_option("--bandwidth", rff_bandwidth, "Gaussian kernel bandwidth sigma");
    cmd->add_option("--rff-seed", rff_seed, "seed for the random Fourier map");
    cmd->add_option_function<double>(
        "--projection-radius", [this](double v) { projection_radius = v; },
        "ball constraint for unbounded-gradient losses");
  }

  Loss make_loss() const { return Loss::from_name(loss_name, projection_radius); }

  FeatureMap make_map(const SynthDistribution& dist) const {
    if (features == "random_fourier") {
      return FeatureMap::random_fourier(2, rff_dim, rff_bandwidth, rff_seed);
    }
    if (features == "linear_with_bias") {
      return FeatureMap::linear_with_bias(2, dist.max_input_norm());
    }
    throw ConfigError("unknown feature kind: " + features);
  }
};

Json theory_report(const ProblemConstants& c, const Loss& loss, const std::vector<double>& T_list,
                   const std::vector<double>& eps_list) {
  c.validate();
  Json report;
  report["constants"] = {{"M", c.M},         {"L", c.L},
                         {"R", c.R},         {"delta", c.delta},
                         {"lambda", c.lambda}, {"gamma", c.gamma},
                         {"sigma_sq", c.sigma_sq}, {"init_gap", c.init_gap},
                         {"init_dist", c.init_dist}};
  report["eta1"] = c.eta1();
  report["eta1_ok_last_iterate"] = c.eta1_ok_last_iterate();
  report["eta1_ok_averaged"] = c.eta1_ok_averaged();
  report["regime_conflict"] = c.eta1_ok_averaged() != c.eta1_ok_last_iterate();
  report["nu"] = nu(c);
  report["sgd_threshold"] = sgd_threshold(c, loss);
  report["bayes_radius"] = bayes_region_radius(c, loss);

  const double T0 = T_list.front();
  const ThresholdCheck check0 = asgd_threshold_check(c, loss, T0);
  report["sgd_bound"] = sgd_bound(c, loss, T0, /*force=*/true);
  report["asgd_threshold_lhs"] = check0.lhs;
  report["asgd_threshold_rhs"] = check0.rhs;
  report["asgd_threshold_ok"] = check0.satisfied;
  report["asgd_bound"] = asgd_bound(c, loss, T0, /*force=*/true);
  report["martingale_bounds"] = {{"last_iterate", martingale_sum_bound(c, T0, false)},
                                 {"averaged", martingale_sum_bound(c, T0, true)}};
  const double direct0 = asgd_bound(c, loss, T0, true);
  const double composed0 = bound_from_martingale(c, loss, T0, true);
  report["crosscheck_residual"] = std::abs(direct0 - composed0) / direct0;

  Json per_T = Json::array();
  for (double T : T_list) {
    Json row;
    row["T"] = T;
    row["sgd_bound"] = sgd_bound(c, loss, T, true);
    const ThresholdCheck check = asgd_threshold_check(c, loss, T);
    row["asgd_threshold_lhs"] = check.lhs;
    row["asgd_threshold_rhs"] = check.rhs;
    row["asgd_threshold_ok"] = check.satisfied;
    row["asgd_bound"] = asgd_bound(c, loss, T, true);
    row["martingale_bounds"] = {{"last_iterate", martingale_sum_bound(c, T, false)},
                                {"averaged", martingale_sum_bound(c, T, true)}};
    const double direct = asgd_bound(c, loss, T, true);
    row["crosscheck_residual"] =
        std::abs(direct - bound_from_martingale(c, loss, T, true)) / direct;
    row["crosscheck_residual_sgd"] =
        std::abs(sgd_bound(c, loss, T, true) - bound_from_martingale(c, loss, T, false)) /
        sgd_bound(c, loss, T, true);
    per_T.push_back(row);
  }
  report["per_T"] = per_T;

  Json complexity = Json::array();
  for (double eps : eps_list) {
    complexity.push_back({{"eps", eps}, {"T", iteration_complexity(c, loss, eps)}});
  }
  report["complexity"] = complexity;
  return report;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regularized (averaged) SGD for binary classification with "
               "exponential-rate theory calculators and the synthetic low-noise experiment"};
  app.require_subcommand(1);

  int exit_code = 0;

  // ---------------------------------------------------------------- generate-data
  auto* gen = app.add_subcommand("generate-data", "sample the two-rectangle distribution to CSV");
  struct {
    double delta = 0.4;
    double margin_r = 0.1;
    double weight_left = 0.5;
    long long n = 1000;
    std::uint64_t seed = 0;
    std::string out = "data.csv";
  } gen_args;
  gen->add_option("--delta", gen_args.delta, "low-noise level in (0, 1/2)")->required();
  gen->add_option("--n", gen_args.n, "number of samples")->required();
  gen->add_option("--seed", gen_args.seed, "RNG seed");
  gen->add_option("--margin-r", gen_args.margin_r, "margin parameter r");
  gen->add_option("--weight-left", gen_args.weight_left, "probability of the left box");
  gen->add_option("--out", gen_args.out, "output CSV path")->required();
  gen->callback([&] {
    SynthDistribution dist(gen_args.delta, gen_args.margin_r, gen_args.weight_left);
    write_dataset_csv(gen_args.out, sample_dataset(dist, gen_args.n, gen_args.seed));
    std::cout << "wrote " << gen_args.n << " samples to " << gen_args.out << "\n";
  });

  // ---------------------------------------------------------------- train
  auto* tr = app.add_subcommand("train", "run (averaged) SGD and write trace + model");
  struct {
    double delta = 0.4;
    double lambda = 1e-4;
    double gamma = 0.0;  // 0 = smallest value satisfying the regime condition
    long long iterations = 20000;
    bool averaging = false;
    std::uint64_t seed = 0;
    long long checkpoint_every = 250;
    long long test_n = 100000;
    long long train_metric_n = 10000;
    std::optional<long long> finite_train;
    bool exact_error = false;
    bool trace_last = false;
    bool allow_lr_violation = false;
    double best_risk_lambda = 1e-8;
    std::string out_dir = "run";
  } tr_args;
  CommonModelArgs tr_model;
  tr->add_option("--delta", tr_args.delta, "low-noise level")->required();
  tr->add_option("--lambda", tr_args.lambda, "regularization")->required();
  tr->add_option("--gamma", tr_args.gamma, "time offset; 0 selects the smallest valid value");
  tr->add_option("--iterations", tr_args.iterations, "iteration count T");
  tr->add_flag("--averaging", tr_args.averaging, "return the weighted average of the iterates");
  tr->add_option("--seed", tr_args.seed, "stream seed");
  tr->add_option("--checkpoint-every", tr_args.checkpoint_every, "trace granularity");
  tr->add_option("--test-n", tr_args.test_n, "test set size");
  tr->add_option("--train-metric-n", tr_args.train_metric_n, "train metric set size");
  tr->add_option_function<long long>(
      "--finite-train", [&](long long v) { tr_args.finite_train = v; },
      "train on a fixed set of this size instead of fresh draws");
  tr->add_flag("--exact-error", tr_args.exact_error,
               "compute test error by clipping/quadrature instead of the test sample");
  tr->add_flag("--trace-last", tr_args.trace_last,
               "additionally trace the non-averaged iterate");
  tr->add_flag("--allow-lr-violation", tr_args.allow_lr_violation,
               "warn instead of failing when eta_1 violates the regime condition");
  tr->add_option("--best-risk-lambda", tr_args.best_risk_lambda,
                 "regularization of the excess-risk baseline (raise for RFF features)");
  tr->add_option("--out-dir", tr_args.out_dir, "output directory");
  tr_model.attach(tr);
  tr->callback([&] {
    SynthDistribution dist(tr_args.delta);
    const Loss loss = tr_model.make_loss();
    const FeatureMap map = tr_model.make_map(dist);
    MetricsContext::Options mopt;
    mopt.test_n = tr_args.test_n;
    mopt.train_metric_n = tr_args.train_metric_n;
    mopt.data_seed = detail::data_seed_for(tr_args.delta);
    mopt.exact_error = tr_args.exact_error;
    mopt.best_risk_lambda = tr_args.best_risk_lambda;
    const MetricsContext metrics(dist, map, loss, mopt);

    TrainConfig cfg;
    cfg.lambda = tr_args.lambda;
    cfg.gamma = tr_args.gamma > 0.0
                    ? tr_args.gamma
                    : gamma_min(tr_args.lambda, loss.smoothness(map.kernel_bound()),
                                tr_args.averaging ? LrRegime::averaged : LrRegime::last_iterate);
    cfg.iterations = tr_args.iterations;
    cfg.averaging = tr_args.averaging;
    cfg.projection_radius = tr_model.projection_radius;
    cfg.seed = tr_args.seed;
    cfg.checkpoint_every = tr_args.checkpoint_every;
    cfg.allow_lr_violation = tr_args.allow_lr_violation;
    const std::string warning = cfg.validate(loss, map);
    if (!warning.empty()) std::cerr << warning << "\n";

    TrainResult run = [&] {
      if (tr_args.finite_train) {
        FiniteSampleStream stream(sample_dataset(dist, *tr_args.finite_train, tr_args.seed),
                                  tr_args.seed);
        return train(cfg, loss, map, stream, metrics.hook(), Representation::weights, nullptr,
                     tr_args.trace_last);
      }
      SampleStream stream(dist, tr_args.seed, CounterRng::kTrainSamples);
      return train(cfg, loss, map, stream, metrics.hook(), Representation::weights, nullptr,
                   tr_args.trace_last);
    }();

    fs::create_directories(tr_args.out_dir);
    write_trace_csv((fs::path(tr_args.out_dir) / "trace.csv").string(), run.trace);
    if (tr_args.trace_last && cfg.averaging) {
      write_trace_csv((fs::path(tr_args.out_dir) / "trace_last.csv").string(), run.trace_last);
    }
    const Hypothesis& out = cfg.averaging ? *run.averaged : run.final_iterate;
    write_json((fs::path(tr_args.out_dir) / "model.json").string(),
               model_to_json(out, map, std::string(loss.name())));
    const TraceRow last = run.trace.back();
    std::cout << "gamma " << format_g17(cfg.gamma) << " final test_err "
              << format_g17(last.test_err) << " norm " << format_g17(last.norm) << "\n";
  });

  // ---------------------------------------------------------------- evaluate
  auto* ev = app.add_subcommand("evaluate", "evaluate a saved model");
  struct {
    std::string model;
    std::string data;
    double delta = 0.0;
    std::string loss_override;
  } ev_args;
  ev->add_option("--model", ev_args.model, "model JSON path")->required();
  ev->add_option("--data", ev_args.data, "CSV dataset for empirical metrics");
  ev->add_option("--delta", ev_args.delta,
                 "distribution parameter for exact (quadrature) metrics");
  ev->callback([&] {
    const Json mj = read_json(ev_args.model);
    const FeatureMap map = feature_map_from_json(mj.at("feature_map"));
    const Hypothesis g = hypothesis_from_json(mj.at("hypothesis"), map);
    const Loss loss = Loss::from_name(mj.value("loss", "logistic"));
    Json out;
    out["norm"] = g.norm();
    if (!ev_args.data.empty()) {
      const Dataset data = read_dataset_csv(ev_args.data);
      double loss_sum = 0, err_sum = 0;
      for (const auto& s : data) {
        const double score = g.evaluate(map, s.x);
        loss_sum += loss.phi(s.y * score);
        if ((score >= 0.0 ? +1 : -1) != s.y) err_sum += 1.0;
      }
      out["data"] = {{"n", data.size()},
                     {"loss", loss_sum / static_cast<double>(data.size())},
                     {"err", err_sum / static_cast<double>(data.size())}};
    }
    if (ev_args.delta > 0.0) {
      SynthDistribution dist(ev_args.delta);
      out["exact"] = {{"risk", expected_risk(dist, g, map, loss, 0.0)},
                      {"classification_error", expected_classification_error(dist, g, map)},
                      {"bayes_error", dist.bayes_error()}};
    }
    std::cout << out.dump(2) << "\n";
  });

  // ---------------------------------------------------------------- oracle
  auto* orc = app.add_subcommand("oracle", "minimize the quadrature-exact regularized risk");
  struct {
    double delta = 0.4;
    double lambda = 1e-4;
    std::string out = "oracle.json";
  } orc_args;
  CommonModelArgs orc_model;
  orc->add_option("--delta", orc_args.delta, "low-noise level")->required();
  orc->add_option("--lambda", orc_args.lambda, "regularization")->required();
  orc->add_option("--out", orc_args.out, "output model JSON path");
  orc_model.attach(orc);
  orc->callback([&] {
    SynthDistribution dist(orc_args.delta);
    const Loss loss = orc_model.make_loss();
    const FeatureMap map = orc_model.make_map(dist);
    const OracleResult res = g_lambda_oracle(dist, map, loss, orc_args.lambda);
    write_json(orc_args.out, model_to_json(res.minimizer, map, std::string(loss.name())));
    Json out;
    out["regularized_risk"] = res.regularized_risk;
    out["risk"] = res.risk;
    out["norm"] = res.norm;
    out["iterations"] = res.iterations;
    out["grad_norm"] = res.grad_norm;
    std::cout << out.dump(2) << "\n";
  });

  // ---------------------------------------------------------------- theory
  auto* th = app.add_subcommand("theory", "closed-form bound calculators as a JSON report");
  struct {
    ProblemConstants c;
    std::vector<double> T_list{20000};
    std::vector<double> eps_list{0.01};
    std::string loss_name = "logistic";
    std::string out;
  } th_args;
  th->add_option("--M", th_args.c.M, "gradient bound");
  th->add_option("--L", th_args.c.L, "smoothness of the expected risk");
  th->add_option("--R", th_args.c.R, "kernel bound");
  th->add_option("--delta", th_args.c.delta, "low-noise level")->required();
  th->add_option("--lambda", th_args.c.lambda, "regularization")->required();
  th->add_option("--gamma", th_args.c.gamma, "time offset");
  th->add_option("--sigma-sq", th_args.c.sigma_sq, "stochastic gradient variance bound");
  th->add_option("--init-gap", th_args.c.init_gap, "L_lambda(g_1) - L_lambda(g_lambda)");
  th->add_option("--init-dist", th_args.c.init_dist, "||g_1 - g_lambda||");
  th->add_option("--T", th_args.T_list, "iteration counts to evaluate");
  th->add_option("--eps", th_args.eps_list, "target accuracies for the complexity formula");
  th->add_option("--loss", th_args.loss_name, "loss for the margin constant");
  th->add_option("--out", th_args.out, "also write the report to this path");
  th->callback([&] {
    const Loss loss = Loss::from_name(th_args.loss_name);
    const Json report = theory_report(th_args.c, loss, th_args.T_list, th_args.eps_list);
    if (!th_args.out.empty()) write_json(th_args.out, report);
    std::cout << report.dump(2) << "\n";
  });

  // ---------------------------------------------------------------- stability
  auto* st = app.add_subcommand("stability", "coupled-run deviation bounds check");
  struct {
    double delta = 0.4;
    double lambda = 0.01;
    double gamma = 0.0;
    long long iterations = 2000;
    std::vector<long long> replace_indices{1, 500, 1000, 1500, 2000};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::string out = "stability.csv";
  } st_args;
  CommonModelArgs st_model;
  st->add_option("--delta", st_args.delta, "low-noise level");
  st->add_option("--lambda", st_args.lambda, "regularization")->required();
  st->add_option("--gamma", st_args.gamma, "time offset; 0 selects the smallest valid value");
  st->add_option("--iterations", st_args.iterations, "chain length T");
  st->add_option("--replace-index", st_args.replace_indices, "indices whose sample is redrawn");
  st->add_option("--seed", st_args.seeds, "stream seeds");
  st->add_option("--out", st_args.out, "measured-vs-bound CSV path");
  st_model.attach(st);
  st->callback([&] {
    SynthDistribution dist(st_args.delta);
    const Loss loss = st_model.make_loss();
    const FeatureMap map = st_model.make_map(dist);
    TrainConfig base;
    base.lambda = st_args.lambda;
    base.gamma = st_args.gamma > 0.0
                     ? st_args.gamma
                     : gamma_min(st_args.lambda, loss.smoothness(map.kernel_bound()),
                                 LrRegime::averaged);
    base.iterations = st_args.iterations;
    base.regime = LrRegime::averaged;  // the coupled-run analysis uses eta_1 <= 1/L
    base.projection_radius = st_model.projection_radius;
    const StabilityReport report =
        run_stability(dist, map, loss, base, st_args.replace_indices, st_args.seeds);
    write_stability_csv(st_args.out, report);
    for (const auto& f : report.failures) std::cerr << "FAIL " << f << "\n";
    std::cout << (report.all_passed() ? "all bounds hold" : "bound violations found") << " ("
              << report.rows.size() << " rows, " << report.failures.size() << " failures)\n";
    if (!report.all_passed()) exit_code = 3;
  });

  // ---------------------------------------------------------------- experiment
  auto* ex = app.add_subcommand("experiment", "full (delta, lambda, seed, method) grid");
  struct {
    std::string config;
    std::string out_dir = "experiment";
    std::vector<double> deltas, lambdas;
    std::vector<std::uint64_t> seeds;
    long long iterations = -1, test_n = -1, train_metric_n = -1;
    long long gamma_tuning_steps = -1, checkpoint_every = -1, finite_train = -1;
    int jobs = -1;
    bool exact_error = false;
    std::string loss_name, features;
  } ex_args;
  ex->add_option("--config", ex_args.config, "JSON file with experiment fields");
  ex->add_option("--out-dir", ex_args.out_dir, "output directory");
  ex->add_option("--delta", ex_args.deltas, "low-noise levels");
  ex->add_option("--lambda", ex_args.lambdas, "regularization grid");
  ex->add_option("--seed", ex_args.seeds, "run seeds");
  ex->add_option("--iterations", ex_args.iterations, "iteration count T");
  ex->add_option("--test-n", ex_args.test_n, "test set size");
  ex->add_option("--train-metric-n", ex_args.train_metric_n, "train metric set size");
  ex->add_option("--gamma-tuning-steps", ex_args.gamma_tuning_steps, "tuning run length");
  ex->add_option("--checkpoint-every", ex_args.checkpoint_every, "trace granularity");
  ex->add_option("--finite-train", ex_args.finite_train, "finite training set size");
  ex->add_option("--jobs", ex_args.jobs, "parallel grid cells");
  ex->add_flag("--exact-error", ex_args.exact_error, "clipping/quadrature test error");
  ex->add_option("--loss", ex_args.loss_name, "loss name");
  ex->add_option("--features", ex_args.features, "feature kind");
  ex->callback([&] {
    ExperimentSpec spec;
    if (!ex_args.config.empty()) {
      const Json j = read_json(ex_args.config);
      if (j.contains("deltas")) spec.deltas = j["deltas"].get<std::vector<double>>();
      if (j.contains("lambdas")) spec.lambdas = j["lambdas"].get<std::vector<double>>();
      if (j.contains("iterations")) spec.iterations = j["iterations"];
      if (j.contains("seeds")) spec.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
      if (j.contains("test_n")) spec.test_n = j["test_n"];
      if (j.contains("train_metric_n")) spec.train_metric_n = j["train_metric_n"];
      if (j.contains("loss")) spec.loss_name = j["loss"];
      if (j.contains("features")) spec.feature_kind = j["features"];
      if (j.contains("rff_dim")) spec.rff_dim = j["rff_dim"];
      if (j.contains("rff_bandwidth")) spec.rff_bandwidth = j["rff_bandwidth"];
      if (j.contains("rff_seed")) spec.rff_seed = j["rff_seed"];
      if (j.contains("gamma_tuning_steps")) spec.gamma_tuning_steps = j["gamma_tuning_steps"];
      if (j.contains("checkpoint_every")) spec.checkpoint_every = j["checkpoint_every"];
      if (j.contains("jobs")) spec.jobs = j["jobs"];
      if (j.contains("exact_error")) spec.exact_error = j["exact_error"];
      if (j.contains("finite_train") && !j["finite_train"].is_null()) {
        spec.finite_train = j["finite_train"].get<long long>();
      }
    }
    if (!ex_args.deltas.empty()) spec.deltas = ex_args.deltas;
    if (!ex_args.lambdas.empty()) spec.lambdas = ex_args.lambdas;
    if (!ex_args.seeds.empty()) spec.seeds = ex_args.seeds;
    if (ex_args.iterations > 0) spec.iterations = ex_args.iterations;
    if (ex_args.test_n > 0) spec.test_n = ex_args.test_n;
    if (ex_args.train_metric_n > 0) spec.train_metric_n = ex_args.train_metric_n;
    if (ex_args.gamma_tuning_steps > 0) spec.gamma_tuning_steps = ex_args.gamma_tuning_steps;
    if (ex_args.checkpoint_every > 0) spec.checkpoint_every = ex_args.checkpoint_every;
    if (ex_args.finite_train > 0) spec.finite_train = ex_args.finite_train;
    if (ex_args.jobs > 0) spec.jobs = ex_args.jobs;
    if (ex_args.exact_error) spec.exact_error = true;
    if (!ex_args.loss_name.empty()) spec.loss_name = ex_args.loss_name;
    if (!ex_args.features.empty()) spec.feature_kind = ex_args.features;

    const ExperimentReport report = run_experiment(spec, ex_args.out_dir);
    for (const auto& sel : report.selections) {
      std::cout << "delta " << format_compact(sel.delta) << ": lambda " << sel.chosen_lambda
                << ", mean final test err (averaged) "
                << format_g17(sel.mean_final_test_err_averaged) << ", bayes "
                << format_g17(sel.bayes_error) << "\n";
    }
  });

  // ---------------------------------------------------------------- plot
  auto* pl = app.add_subcommand("plot", "regenerate SVGs from manifest and trace CSVs");
  struct {
    std::string dir = "experiment";
  } pl_args;
  pl->add_option("--dir", pl_args.dir, "experiment output directory")->required();
  pl->callback([&] { replot_from_traces(pl_args.dir); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DivergenceError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  }
  return exit_code;
}
