#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "expsgd/io.hpp"
#include "expsgd/optimizer.hpp"
#include "expsgd/serialize.hpp"
#include "expsgd/svg.hpp"
#include "expsgd/synthdata.hpp"

namespace expsgd {

/// Replays a pre-drawn dataset in order. Used by coupled stability runs and
/// tests that need full control of the stream.
class DatasetStream {
 public:
  explicit DatasetStream(const Dataset& data) : data_(&data) {}

  Sample next() {
    if (at_ >= data_->size()) throw ConfigError("dataset stream exhausted");
    return (*data_)[at_++];
  }

 private:
  const Dataset* data_;
  std::size_t at_ = 0;
};

/// Precomputed evaluation state for one (distribution, feature map, loss):
/// featurized test and train-metric sets, the quadrature grid, the Bayes
/// error, and the best-in-class risk baseline. Immutable after construction
/// and shared read-only across concurrent runs.
///
/// Excess error is reported against the exact Bayes error 0.5 - delta.
/// Excess risk is reported against the best risk attainable in the feature
/// span (the oracle minimizer at a vanishing lambda), since the pointwise
/// optimal score function is generally not inside the span.
class MetricsContext {
 public:
  struct Options {
    long long test_n = 100000;
    long long train_metric_n = 10000;
    std::uint64_t data_seed = 0;
    bool exact_error = false;  // polygon/quadrature error instead of the test set
    int quad_order = 64;
    double best_risk_lambda = 1e-8;
  };

  MetricsContext(const SynthDistribution& dist, const FeatureMap& map, const Loss& loss,
                 Options opt)
      : dist_(dist), map_(map), loss_(loss), opt_(opt) {
    test_set_ = sample_dataset(dist, opt.test_n, opt.data_seed, CounterRng::kTestSet);
    train_set_ =
        sample_dataset(dist, opt.train_metric_n, opt.data_seed, CounterRng::kTrainMetricSet);
    featurize_set(test_set_, test_features_, test_labels_);
    featurize_set(train_set_, train_features_, train_labels_);
    grid_ = QuadGrid::build(dist, opt.quad_order);
    quad_features_.resize(static_cast<Eigen::Index>(grid_.points.size()), map.output_dim());
    for (std::size_t i = 0; i < grid_.points.size(); ++i) {
      quad_features_.row(static_cast<Eigen::Index>(i)) = map.featurize(grid_.points[i]).transpose();
    }
    bayes_error_ = dist.bayes_error();
    bayes_risk_ = bayes_risk(dist, loss);
    best_risk_ = g_lambda_oracle(dist, map, loss, opt.best_risk_lambda, 1e-10, 1000000,
                                 opt.quad_order)
                     .risk;
  }

  const SynthDistribution& distribution() const { return dist_; }
  const FeatureMap& feature_map() const { return map_; }
  const Loss& loss() const { return loss_; }
  const Options& options() const { return opt_; }
  double bayes_error() const { return bayes_error_; }
  double bayes_risk_value() const { return bayes_risk_; }
  double best_in_class_risk() const { return best_risk_; }
  const Dataset& test_set() const { return test_set_; }

  struct SetMetrics {
    double loss = 0, err = 0;
  };

  SetMetrics train_metrics(const Hypothesis& g) const {
    return set_metrics(train_features_, train_labels_, train_set_, g);
  }

  SetMetrics test_metrics(const Hypothesis& g) const {
    return set_metrics(test_features_, test_labels_, test_set_, g);
  }

  /// Unregularized quadrature risk of g.
  double quadrature_risk(const Hypothesis& g) const {
    Eigen::VectorXd scores;
    if (g.representation() == Representation::weights) {
      scores = quad_features_ * g.weights();
    } else {
      scores.resize(static_cast<Eigen::Index>(grid_.points.size()));
      for (std::size_t i = 0; i < grid_.points.size(); ++i) {
        scores(static_cast<Eigen::Index>(i)) = g.evaluate(map_, grid_.points[i]);
      }
    }
    double risk = 0.0;
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
      if (!std::isfinite(scores(i))) {
        throw DivergenceError("non-finite hypothesis value inside the support", i);
      }
      const double rho = grid_.cond_prob(i);
      risk += grid_.prob_weight(i) *
              (rho * loss_.phi(scores(i)) + (1.0 - rho) * loss_.phi(-scores(i)));
    }
    return risk;
  }

  TraceRow row(long long iter, const Hypothesis& g) const {
    TraceRow r;
    r.iter = iter;
    const SetMetrics train = train_metrics(g);
    r.train_loss = train.loss;
    r.train_err = train.err;
    if (opt_.exact_error) {
      r.test_loss = quadrature_risk(g);
      r.test_err = expected_classification_error(dist_, g, map_);
    } else {
      const SetMetrics test = test_metrics(g);
      r.test_loss = test.loss;
      r.test_err = test.err;
    }
    r.excess_err = r.test_err - bayes_error_;
    r.excess_risk = quadrature_risk(g) - best_risk_;
    r.ratio =
        r.excess_risk > kExcessRiskFloor ? r.excess_err / r.excess_risk : std::nan("");
    r.norm = g.norm();
    return r;
  }

  EvalHook hook() const {
    return [this](long long iter, const Hypothesis& g) { return row(iter, g); };
  }

 private:
  void featurize_set(const Dataset& data, Eigen::MatrixXd& features,
                     std::vector<int>& labels) const {
    features.resize(static_cast<Eigen::Index>(data.size()), map_.output_dim());
    labels.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      features.row(static_cast<Eigen::Index>(i)) = map_.featurize(data[i].x).transpose();
      labels[i] = data[i].y;
    }
  }

  SetMetrics set_metrics(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                         const Dataset& raw, const Hypothesis& g) const {
    Eigen::VectorXd scores;
    if (g.representation() == Representation::weights) {
      scores = features * g.weights();
    } else {
      scores.resize(static_cast<Eigen::Index>(raw.size()));
      for (std::size_t i = 0; i < raw.size(); ++i) {
        scores(static_cast<Eigen::Index>(i)) = g.evaluate(map_, raw[i].x);
      }
    }
    SetMetrics m;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const double s = scores(static_cast<Eigen::Index>(i));
      m.loss += loss_.phi(labels[i] * s);
      if ((s >= 0.0 ? +1 : -1) != labels[i]) m.err += 1.0;
    }
    m.loss /= static_cast<double>(labels.size());
    m.err /= static_cast<double>(labels.size());
    return m;
  }

  SynthDistribution dist_;
  FeatureMap map_;
  Loss loss_;
  Options opt_;
  Dataset test_set_, train_set_;
  Eigen::MatrixXd test_features_, train_features_, quad_features_;
  std::vector<int> test_labels_, train_labels_;
  QuadGrid grid_;
  double bayes_error_ = 0, bayes_risk_ = 0, best_risk_ = 0;
};

/// Deterministic gamma tuning: the grid {gamma_min * 2^k, k = 0..7} is scored
/// by the training loss of the method's returned object after a short run,
/// smaller gamma winning ties.
struct GammaTuneResult {
  double gamma = 1.0;
  std::vector<std::pair<double, double>> scores;  // (gamma, training loss)
};

inline GammaTuneResult tune_gamma(const MetricsContext& metrics, double lambda, bool averaging,
                                  long long steps, std::uint64_t tune_seed) {
  const Loss& loss = metrics.loss();
  const FeatureMap& map = metrics.feature_map();
  const double L = loss.smoothness(map.kernel_bound());
  const double base =
      gamma_min(lambda, L, averaging ? LrRegime::averaged : LrRegime::last_iterate);
  GammaTuneResult result;
  double best_score = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 8; ++k) {
    const double gamma = base * static_cast<double>(1 << k);
    TrainConfig cfg;
    cfg.lambda = lambda;
    cfg.gamma = gamma;
    cfg.iterations = steps;
    cfg.averaging = averaging;
    cfg.seed = tune_seed;
    cfg.checkpoint_every = steps;
    SampleStream stream(metrics.distribution(), tune_seed, CounterRng::kTrainSamples);
    const TrainResult run = train(cfg, loss, map, stream);
    const Hypothesis& out = cfg.averaging ? *run.averaged : run.final_iterate;
    const double score = metrics.train_metrics(out).loss;
    result.scores.emplace_back(gamma, score);
    if (score < best_score) {
      best_score = score;
      result.gamma = gamma;
    }
  }
  return result;
}

struct ExperimentSpec {
  std::vector<double> deltas{0.1, 0.25, 0.4};
  std::vector<double> lambdas{0.1, 0.01, 0.001, 0.0001};
  long long iterations = 20000;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  long long test_n = 100000;
  long long train_metric_n = 10000;
  std::string loss_name = "logistic";
  std::string feature_kind = "linear_with_bias";
  int rff_dim = 512;
  double rff_bandwidth = 0.5;
  std::uint64_t rff_seed = 7;
  long long gamma_tuning_steps = 1000;
  long long checkpoint_every = 250;
  int jobs = 1;
  bool exact_error = false;
  std::optional<long long> finite_train;

  void validate() const {
    if (deltas.empty() || lambdas.empty() || seeds.empty()) {
      throw ConfigError("experiment: deltas, lambdas and seeds must be non-empty");
    }
    for (double d : deltas) {
      if (!(d > 0 && d < 0.5)) throw ConfigError("experiment: delta must lie in (0, 1/2)");
    }
    for (double l : lambdas) {
      if (!(l > 0)) throw ConfigError("experiment: lambda must be > 0");
    }
    if (iterations < 1 || test_n < 1 || train_metric_n < 1 || gamma_tuning_steps < 1 ||
        checkpoint_every < 1) {
      throw ConfigError("experiment: counts must be >= 1");
    }
    if (finite_train && *finite_train < 1) throw ConfigError("experiment: finite_train must be >= 1");
  }
};

inline std::string format_compact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

inline std::string trace_filename(double delta, double lambda, std::uint64_t seed,
                                  bool averaged) {
  return "trace_delta" + format_compact(delta) + "_lambda" + format_compact(lambda) + "_seed" +
         std::to_string(seed) + (averaged ? "_averaged" : "_sgd") + ".csv";
}

/// Result grid of a full experiment: one cell per (delta, lambda, method).
struct ExperimentCell {
  double delta = 0, lambda = 0;
  bool averaged = false;
  double gamma = 1;
  std::vector<std::vector<TraceRow>> traces;  // per seed
  double mean_final_train_acc = 0;
  double mean_best_anytime_train_acc = 0;
  double mean_final_test_err = 0;
};

struct DeltaSelection {
  double delta = 0;
  double chosen_lambda = 0;            // best mean final training accuracy (averaged runs)
  double anytime_lambda = 0;           // alternative rule, recorded only
  double mean_final_test_err_averaged = 0;
  double mean_final_test_err_sgd = 0;
  double bayes_error = 0;
};

struct ExperimentReport {
  std::vector<ExperimentCell> cells;
  std::vector<DeltaSelection> selections;
};

namespace detail {

inline void parallel_cells(int jobs, int n, const std::function<void(int)>& work) {
  if (jobs <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) work(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  const int workers = std::min(jobs, n);
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) work(i);
    });
  }
  for (auto& t : pool) t.join();
}

inline std::uint64_t tuning_seed(double delta, double lambda, bool averaged) {
  const auto bits = [](double v) { return std::bit_cast<std::uint64_t>(v); };
  return mix64(bits(delta) ^ mix64(bits(lambda)) ^ (averaged ? 0x5851f42d4c957f2dULL : 0));
}

inline std::uint64_t data_seed_for(double delta) {
  return mix64(std::bit_cast<std::uint64_t>(delta));
}

}  // namespace detail

/// Mean and standard deviation across seeds at matching checkpoints, skipping
/// non-finite values (empty ratio fields).
inline PlotSeries band_series(const std::vector<std::vector<TraceRow>>& traces,
                              double (*field)(const TraceRow&), const std::string& label,
                              const std::string& color) {
  PlotSeries s;
  s.label = label;
  s.color = color;
  if (traces.empty()) return s;
  const std::size_t rows = traces.front().size();
  for (std::size_t i = 0; i < rows; ++i) {
    double sum = 0, sum_sq = 0;
    int n = 0;
    for (const auto& t : traces) {
      if (i >= t.size()) continue;
      const double v = field(t[i]);
      if (!std::isfinite(v)) continue;
      sum += v;
      sum_sq += v * v;
      ++n;
    }
    if (n == 0) continue;
    const double mean = sum / n;
    const double var = n > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1)) : 0.0;
    const double sd = std::sqrt(var);
    s.x.push_back(static_cast<double>(traces.front()[i].iter));
    s.y.push_back(mean);
    s.y_lo.push_back(mean - sd);
    s.y_hi.push_back(mean + sd);
  }
  return s;
}

/// Renders the three per-delta panels (loss, classification error, ratio)
/// from trace rows alone, mirroring the experiment figure layout: last
/// iterate in purple, averaged iterate in blue, mean +- std across seeds.
inline void render_delta_figures(const std::filesystem::path& out_dir, double delta,
                                 double lambda,
                                 const std::vector<std::vector<TraceRow>>& sgd_traces,
                                 const std::vector<std::vector<TraceRow>>& avg_traces) {
  const std::string suffix = "delta" + format_compact(delta);
  const char* purple = "#7b2d8b";
  const char* blue = "#1f5fbf";
  struct Panel {
    const char* name;
    const char* ylabel;
    double (*field)(const TraceRow&);
    bool log_y;
  };
  const Panel panels[] = {
      {"loss", "test loss", [](const TraceRow& r) { return r.test_loss; }, false},
      {"error", "test classification error", [](const TraceRow& r) { return r.test_err; }, false},
      {"ratio", "excess error / excess risk", [](const TraceRow& r) { return r.ratio; }, false},
  };
  for (const auto& p : panels) {
    PlotSpec spec;
    spec.title = std::string(p.name) + ", delta=" + format_compact(delta) +
                 ", lambda=" + format_compact(lambda);
    spec.xlabel = "iteration";
    spec.ylabel = p.ylabel;
    spec.log_x = true;
    spec.log_y = p.log_y;
    std::vector<PlotSeries> series;
    series.push_back(band_series(sgd_traces, p.field, "sgd", purple));
    series.push_back(band_series(avg_traces, p.field, "averaged", blue));
    const std::string svg = render_line_plot(spec, series);
    std::ofstream out(out_dir / ("fig_" + suffix + "_" + p.name + ".svg"), std::ios::binary);
    if (!out) throw ConfigError("cannot write figure for delta " + format_compact(delta));
    out << svg;
  }
}

/// Full reproduction of the synthetic experiment: the (delta, lambda, seed,
/// method) grid with per-cell gamma tuning, per-run trace CSVs, a selection
/// manifest, and three SVG panels per delta for the selected lambda. Grid
/// cells are independent; execution order never changes any output byte.
inline ExperimentReport run_experiment(const ExperimentSpec& spec,
                                       const std::filesystem::path& out_dir) {
  spec.validate();
  std::filesystem::create_directories(out_dir / "traces");

  const Loss loss = Loss::from_name(spec.loss_name);

  // One metrics context per delta, shared read-only by all its cells.
  std::vector<std::unique_ptr<MetricsContext>> contexts;
  std::vector<std::unique_ptr<FeatureMap>> maps;
  for (double delta : spec.deltas) {
    SynthDistribution dist(delta);
    auto map = std::make_unique<FeatureMap>(
        spec.feature_kind == "random_fourier"
            ? FeatureMap::random_fourier(2, spec.rff_dim, spec.rff_bandwidth, spec.rff_seed)
            : FeatureMap::linear_with_bias(2, dist.max_input_norm()));
    MetricsContext::Options opt;
    opt.test_n = spec.test_n;
    opt.train_metric_n = spec.train_metric_n;
    opt.data_seed = detail::data_seed_for(delta);
    opt.exact_error = spec.exact_error;
    contexts.push_back(std::make_unique<MetricsContext>(dist, *map, loss, opt));
    maps.push_back(std::move(map));
  }

  const int n_delta = static_cast<int>(spec.deltas.size());
  const int n_lambda = static_cast<int>(spec.lambdas.size());
  const int n_cells = n_delta * n_lambda * 2;

  ExperimentReport report;
  report.cells.resize(static_cast<std::size_t>(n_cells));

  detail::parallel_cells(spec.jobs, n_cells, [&](int idx) {
    const int d = idx / (n_lambda * 2);
    const int l = (idx / 2) % n_lambda;
    const bool averaged = (idx % 2) == 1;
    const double delta = spec.deltas[static_cast<std::size_t>(d)];
    const double lambda = spec.lambdas[static_cast<std::size_t>(l)];
    const MetricsContext& metrics = *contexts[static_cast<std::size_t>(d)];

    ExperimentCell cell;
    cell.delta = delta;
    cell.lambda = lambda;
    cell.averaged = averaged;
    cell.gamma = tune_gamma(metrics, lambda, averaged, spec.gamma_tuning_steps,
                            detail::tuning_seed(delta, lambda, averaged))
                     .gamma;

    double final_acc = 0, anytime_acc = 0, final_err = 0;
    for (std::uint64_t seed : spec.seeds) {
      TrainConfig cfg;
      cfg.lambda = lambda;
      cfg.gamma = cell.gamma;
      cfg.iterations = spec.iterations;
      cfg.averaging = averaged;
      cfg.seed = seed;
      cfg.checkpoint_every = spec.checkpoint_every;

      TrainResult run = [&] {
        if (spec.finite_train) {
          FiniteSampleStream stream(
              sample_dataset(metrics.distribution(), *spec.finite_train, seed), seed);
          return train(cfg, loss, metrics.feature_map(), stream, metrics.hook());
        }
        SampleStream stream(metrics.distribution(), seed, CounterRng::kTrainSamples);
        return train(cfg, loss, metrics.feature_map(), stream, metrics.hook());
      }();

      const auto& trace = run.trace;
      final_acc += 1.0 - trace.back().train_err;
      final_err += trace.back().test_err;
      double best = 0;
      for (const auto& r : trace) best = std::max(best, 1.0 - r.train_err);
      anytime_acc += best;
      write_trace_csv((out_dir / "traces" / trace_filename(delta, lambda, seed, averaged)).string(),
                      trace);
      cell.traces.push_back(trace);
    }
    const double n_seeds = static_cast<double>(spec.seeds.size());
    cell.mean_final_train_acc = final_acc / n_seeds;
    cell.mean_best_anytime_train_acc = anytime_acc / n_seeds;
    cell.mean_final_test_err = final_err / n_seeds;
    report.cells[static_cast<std::size_t>(idx)] = std::move(cell);
  });

  // Per-delta lambda selection on the averaged runs' final training accuracy;
  // ties broken toward the larger (more regularized) lambda.
  const auto cell_at = [&](int d, int l, bool averaged) -> const ExperimentCell& {
    return report.cells[static_cast<std::size_t>(d * n_lambda * 2 + l * 2 + (averaged ? 1 : 0))];
  };
  for (int d = 0; d < n_delta; ++d) {
    DeltaSelection sel;
    sel.delta = spec.deltas[static_cast<std::size_t>(d)];
    sel.bayes_error = contexts[static_cast<std::size_t>(d)]->bayes_error();
    double best_final = -1, best_anytime = -1;
    int best_l = 0, best_anytime_l = 0;
    for (int l = 0; l < n_lambda; ++l) {
      const ExperimentCell& cell = cell_at(d, l, true);
      if (cell.mean_final_train_acc > best_final ||
          (cell.mean_final_train_acc == best_final &&
           spec.lambdas[static_cast<std::size_t>(l)] >
               spec.lambdas[static_cast<std::size_t>(best_l)])) {
        best_final = cell.mean_final_train_acc;
        best_l = l;
      }
      if (cell.mean_best_anytime_train_acc > best_anytime) {
        best_anytime = cell.mean_best_anytime_train_acc;
        best_anytime_l = l;
      }
    }
    sel.chosen_lambda = spec.lambdas[static_cast<std::size_t>(best_l)];
    sel.anytime_lambda = spec.lambdas[static_cast<std::size_t>(best_anytime_l)];
    sel.mean_final_test_err_averaged = cell_at(d, best_l, true).mean_final_test_err;
    sel.mean_final_test_err_sgd = cell_at(d, best_l, false).mean_final_test_err;
    report.selections.push_back(sel);

    render_delta_figures(out_dir, sel.delta, sel.chosen_lambda, cell_at(d, best_l, false).traces,
                         cell_at(d, best_l, true).traces);
  }

  // Manifest, written once after a deterministic merge.
  Json manifest;
  manifest["spec"] = {{"deltas", spec.deltas},
                      {"lambdas", spec.lambdas},
                      {"iterations", spec.iterations},
                      {"seeds", spec.seeds},
                      {"test_n", spec.test_n},
                      {"train_metric_n", spec.train_metric_n},
                      {"loss", spec.loss_name},
                      {"features", spec.feature_kind},
                      {"gamma_tuning_steps", spec.gamma_tuning_steps},
                      {"checkpoint_every", spec.checkpoint_every},
                      {"exact_error", spec.exact_error},
                      {"selection_rule", "max mean final train accuracy, averaged runs"}};
  Json cells = Json::array();
  for (const auto& cell : report.cells) {
    Json jc;
    jc["delta"] = cell.delta;
    jc["lambda"] = cell.lambda;
    jc["method"] = cell.averaged ? "averaged" : "sgd";
    jc["gamma"] = cell.gamma;
    jc["mean_final_train_acc"] = cell.mean_final_train_acc;
    jc["mean_best_anytime_train_acc"] = cell.mean_best_anytime_train_acc;
    jc["mean_final_test_err"] = cell.mean_final_test_err;
    Json files = Json::array();
    for (std::uint64_t seed : spec.seeds) {
      files.push_back("traces/" + trace_filename(cell.delta, cell.lambda, seed, cell.averaged));
    }
    jc["traces"] = files;
    cells.push_back(jc);
  }
  manifest["cells"] = cells;
  Json sels = Json::array();
  for (const auto& sel : report.selections) {
    Json js;
    js["delta"] = sel.delta;
    js["chosen_lambda"] = sel.chosen_lambda;
    js["anytime_lambda"] = sel.anytime_lambda;
    js["mean_final_test_err_averaged"] = sel.mean_final_test_err_averaged;
    js["mean_final_test_err_sgd"] = sel.mean_final_test_err_sgd;
    js["bayes_error"] = sel.bayes_error;
    sels.push_back(js);
  }
  manifest["selection"] = sels;
  write_json((out_dir / "manifest.json").string(), manifest);
  return report;
}

/// Regenerates every figure from the manifest and trace CSVs alone; running
/// it twice on the same directory produces identical bytes.
inline void replot_from_traces(const std::filesystem::path& out_dir) {
  const Json manifest = read_json((out_dir / "manifest.json").string());
  const std::vector<std::uint64_t> seeds = manifest.at("spec").at("seeds");
  for (const auto& sel : manifest.at("selection")) {
    const double delta = sel.at("delta");
    const double lambda = sel.at("chosen_lambda");
    std::vector<std::vector<TraceRow>> sgd_traces, avg_traces;
    for (std::uint64_t seed : seeds) {
      sgd_traces.push_back(
          read_trace_csv((out_dir / "traces" / trace_filename(delta, lambda, seed, false)).string()));
      avg_traces.push_back(
          read_trace_csv((out_dir / "traces" / trace_filename(delta, lambda, seed, true)).string()));
    }
    render_delta_figures(out_dir, delta, lambda, sgd_traces, avg_traces);
  }
}

/// Coupled-run stability harness: for each (seed, replace index) the measured
/// deviations are compared against the one-step bound 6 M R eta_t, the
/// running contraction product, and the telescoped final bound
/// 12 M R / (lambda (gamma + T)).
struct StabilityReport {
  struct Row {
    std::uint64_t seed;
    long long replace_index;
    long long s;
    double measured;
    double product_bound;
  };
  std::vector<Row> rows;
  std::vector<std::string> failures;
  bool all_passed() const { return failures.empty(); }
};

inline StabilityReport run_stability(const SynthDistribution& dist, const FeatureMap& map,
                                     const Loss& loss, const TrainConfig& base,
                                     const std::vector<long long>& replace_indices,
                                     const std::vector<std::uint64_t>& seeds) {
  StabilityReport report;
  const double R = map.kernel_bound();
  const double M = loss.grad_bound(R);
  const double lambda = base.lambda;
  const double gamma = base.gamma;
  const long long T = base.iterations;
  const double final_bound = 12.0 * M * R / (lambda * (gamma + static_cast<double>(T))) + 1e-9;

  for (std::uint64_t seed : seeds) {
    SampleStream redraws(dist, seed, CounterRng::kStabilityRedraw);
    for (long long t : replace_indices) {
      const Sample replacement = redraws.next();
      TrainConfig cfg = base;
      cfg.seed = seed;
      SampleStream stream(dist, seed, CounterRng::kTrainSamples);
      const std::vector<double> devs =
          stability_coupled_run(cfg, loss, map, stream, replacement, t);

      double product_bound = 6.0 * M * R * learning_rate(lambda, gamma, t);
      const auto tag = [&](const char* what, double measured, double bound) {
        return "seed " + std::to_string(seed) + " t " + std::to_string(t) + ": " + what +
               " measured " + format_g17(measured) + " > bound " + format_g17(bound);
      };
      for (std::size_t i = 0; i < devs.size(); ++i) {
        const long long s = t + static_cast<long long>(i);
        if (i > 0) product_bound *= 1.0 - learning_rate(lambda, gamma, s) * lambda;
        report.rows.push_back({seed, t, s, devs[i], product_bound});
        if (devs[i] > product_bound + 1e-12) {
          report.failures.push_back(tag("contraction product", devs[i], product_bound));
        }
      }
      if (devs.back() > final_bound) {
        report.failures.push_back(tag("final deviation", devs.back(), final_bound));
      }
    }
  }
  return report;
}

inline void write_stability_csv(const std::string& path, const StabilityReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << "seed,replace_index,s,measured,product_bound\n";
  for (const auto& r : report.rows) {
    out << r.seed << ',' << r.replace_index << ',' << r.s << ',' << format_g17(r.measured) << ','
        << format_g17(r.product_bound) << '\n';
  }
}

}  // namespace expsgd
