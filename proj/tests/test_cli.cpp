#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const std::string kCli = EXPSGD_CLI_PATH;

struct CommandResult {
  int exit_code;
  std::string out;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CommandResult run_cli(const std::string& args, const fs::path& dir) {
  const fs::path out_file = dir / "stdout.txt";
  const std::string cmd = kCli + " " + args + " >" + out_file.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  CommandResult r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out_file);
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("expsgd_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("generate-data writes a deterministic CSV") {
  const fs::path dir = fresh_dir("gen");
  const std::string f1 = (dir / "a.csv").string();
  const std::string f2 = (dir / "b.csv").string();
  REQUIRE(run_cli("generate-data --delta 0.4 --n 500 --seed 7 --out " + f1, dir).exit_code == 0);
  REQUIRE(run_cli("generate-data --delta 0.4 --n 500 --seed 7 --out " + f2, dir).exit_code == 0);
  const std::string c1 = slurp(f1);
  REQUIRE(c1 == slurp(f2));
  REQUIRE(c1.rfind("x1,x2,y\n", 0) == 0);
  REQUIRE(std::count(c1.begin(), c1.end(), '\n') == 501);

  // different seed differs
  const std::string f3 = (dir / "c.csv").string();
  REQUIRE(run_cli("generate-data --delta 0.4 --n 500 --seed 8 --out " + f3, dir).exit_code == 0);
  REQUIRE(slurp(f3) != c1);
}

TEST_CASE("train emits a trace with the exact header and a loadable model") {
  const fs::path dir = fresh_dir("train");
  const std::string args =
      "train --delta 0.4 --lambda 0.01 --iterations 400 --averaging --seed 3 "
      "--checkpoint-every 100 --test-n 2000 --train-metric-n 1000 --out-dir " +
      (dir / "run").string();
  REQUIRE(run_cli(args, dir).exit_code == 0);

  const std::string trace = slurp(dir / "run" / "trace.csv");
  REQUIRE(trace.rfind("iter,train_loss,test_loss,train_err,test_err,excess_err,excess_risk,"
                      "ratio,norm\n",
                      0) == 0);
  REQUIRE(std::count(trace.begin(), trace.end(), '\n') == 5);  // header + 4 checkpoints

  const auto model = nlohmann::json::parse(slurp(dir / "run" / "model.json"));
  REQUIRE(model.contains("feature_map"));
  REQUIRE(model.contains("hypothesis"));
  REQUIRE(model.at("loss") == "logistic");

  // byte-identical rerun
  const std::string again =
      "train --delta 0.4 --lambda 0.01 --iterations 400 --averaging --seed 3 "
      "--checkpoint-every 100 --test-n 2000 --train-metric-n 1000 --out-dir " +
      (dir / "run2").string();
  REQUIRE(run_cli(again, dir).exit_code == 0);
  REQUIRE(slurp(dir / "run2" / "trace.csv") == trace);
  REQUIRE(slurp(dir / "run2" / "model.json") == slurp(dir / "run" / "model.json"));

  // evaluate on generated data and on the exact distribution
  const std::string data = (dir / "eval.csv").string();
  REQUIRE(run_cli("generate-data --delta 0.4 --n 1000 --seed 5 --out " + data, dir).exit_code ==
          0);
  const CommandResult ev = run_cli(
      "evaluate --model " + (dir / "run" / "model.json").string() + " --data " + data +
          " --delta 0.4",
      dir);
  REQUIRE(ev.exit_code == 0);
  const auto report = nlohmann::json::parse(ev.out);
  REQUIRE(report.contains("norm"));
  REQUIRE(report.at("data").contains("err"));
  REQUIRE(report.at("exact").contains("classification_error"));
}

TEST_CASE("oracle subcommand reports the minimizer") {
  const fs::path dir = fresh_dir("oracle");
  const CommandResult r = run_cli(
      "oracle --delta 0.4 --lambda 0.01 --out " + (dir / "oracle.json").string(), dir);
  REQUIRE(r.exit_code == 0);
  const auto report = nlohmann::json::parse(r.out);
  REQUIRE(report.at("grad_norm").get<double>() <= 1e-10);
  REQUIRE(report.at("risk").get<double>() < report.at("regularized_risk").get<double>());
  REQUIRE(fs::exists(dir / "oracle.json"));
}

TEST_CASE("theory subcommand prints the full report schema") {
  const fs::path dir = fresh_dir("theory");
  const CommandResult r = run_cli(
      "theory --delta 0.4 --lambda 1 --gamma 3 --M 1 --L 1 --R 1 --T 141 --T 4605 --eps 0.01 "
      "--eps 0.005",
      dir);
  REQUIRE(r.exit_code == 0);
  const auto report = nlohmann::json::parse(r.out);
  for (const char* key :
       {"constants", "nu", "sgd_threshold", "sgd_bound", "asgd_threshold_lhs",
        "asgd_threshold_rhs", "asgd_bound", "complexity", "martingale_bounds", "bayes_radius",
        "crosscheck_residual", "eta1"}) {
    INFO(key);
    REQUIRE(report.contains(key));
  }
  REQUIRE(report.at("crosscheck_residual").get<double>() <= 1e-12);
  REQUIRE(report.at("per_T").size() == 2);
  REQUIRE(report.at("complexity").size() == 2);
  // eps halving adds the log-2 quantum
  const double t1 = report.at("complexity")[0].at("T").get<double>();
  const double t2 = report.at("complexity")[1].at("T").get<double>();
  REQUIRE(t2 > t1);
}

TEST_CASE("stability subcommand passes its bounds on a small run") {
  const fs::path dir = fresh_dir("stab");
  const CommandResult r = run_cli(
      "stability --delta 0.4 --lambda 0.01 --iterations 300 --replace-index 1 "
      "--replace-index 150 --seed 1 --seed 2 --out " +
          (dir / "stab.csv").string(),
      dir);
  REQUIRE(r.exit_code == 0);
  const std::string csv = slurp(dir / "stab.csv");
  REQUIRE(csv.rfind("seed,replace_index,s,measured,product_bound\n", 0) == 0);
}

TEST_CASE("experiment grid writes traces, manifest and reproducible figures") {
  const fs::path dir = fresh_dir("exp");
  const std::string out = (dir / "out").string();
  const CommandResult r = run_cli(
      "experiment --delta 0.4 --lambda 0.01 --lambda 0.1 --seed 1 --seed 2 --iterations 300 "
      "--test-n 2000 --train-metric-n 1000 --gamma-tuning-steps 100 --checkpoint-every 100 "
      "--out-dir " +
          out,
      dir);
  REQUIRE(r.exit_code == 0);

  REQUIRE(fs::exists(fs::path(out) / "manifest.json"));
  const auto manifest = nlohmann::json::parse(slurp(fs::path(out) / "manifest.json"));
  REQUIRE(manifest.at("cells").size() == 4);  // 1 delta x 2 lambda x 2 methods
  REQUIRE(manifest.at("selection").size() == 1);
  // 2 lambdas x 2 seeds x 2 methods trace files
  REQUIRE(std::distance(fs::directory_iterator(fs::path(out) / "traces"),
                        fs::directory_iterator{}) == 8);
  for (const char* panel : {"loss", "error", "ratio"}) {
    REQUIRE(fs::exists(fs::path(out) / ("fig_delta0.4_" + std::string(panel) + ".svg")));
  }

  // plot regenerates byte-identical SVGs from the CSVs alone
  const std::string fig = (fs::path(out) / "fig_delta0.4_error.svg").string();
  const std::string before = slurp(fig);
  REQUIRE(run_cli("plot --dir " + out, dir).exit_code == 0);
  REQUIRE(slurp(fig) == before);
}

TEST_CASE("experiment config file with flag overrides") {
  const fs::path dir = fresh_dir("config");
  const std::string out = (dir / "out").string();
  {
    std::ofstream cfg(dir / "spec.json");
    cfg << R"({"deltas":[0.25],"lambdas":[0.1],"seeds":[1],"iterations":200,)"
        << R"("test_n":1500,"train_metric_n":800,"gamma_tuning_steps":50,)"
        << R"("checkpoint_every":100})";
  }
  // the flag overrides the file's lambda grid
  const CommandResult r = run_cli("experiment --config " + (dir / "spec.json").string() +
                                      " --lambda 0.01 --out-dir " + out,
                                  dir);
  REQUIRE(r.exit_code == 0);
  const auto manifest = nlohmann::json::parse(slurp(fs::path(out) / "manifest.json"));
  REQUIRE(manifest.at("spec").at("lambdas") == nlohmann::json::array({0.01}));
  REQUIRE(manifest.at("spec").at("iterations") == 200);
  REQUIRE(manifest.at("cells").size() == 2);
}

TEST_CASE("trace-last and finite-train options") {
  const fs::path dir = fresh_dir("opts");
  const std::string args =
      "train --delta 0.4 --lambda 0.01 --iterations 300 --averaging --seed 9 "
      "--checkpoint-every 150 --test-n 1500 --train-metric-n 800 --trace-last "
      "--finite-train 120 --out-dir " +
      (dir / "run").string();
  REQUIRE(run_cli(args, dir).exit_code == 0);
  REQUIRE(fs::exists(dir / "run" / "trace.csv"));
  REQUIRE(fs::exists(dir / "run" / "trace_last.csv"));
  // the averaged and last-iterate traces genuinely differ
  REQUIRE(slurp(dir / "run" / "trace.csv") != slurp(dir / "run" / "trace_last.csv"));
  // deterministic rerun over the same finite training set
  const std::string again = args.substr(0, args.size() - (dir / "run").string().size()) +
                            (dir / "run2").string();
  REQUIRE(run_cli(again, dir).exit_code == 0);
  REQUIRE(slurp(dir / "run2" / "trace.csv") == slurp(dir / "run" / "trace.csv"));
}

TEST_CASE("exit codes: usage errors and numerical failures") {
  const fs::path dir = fresh_dir("exit");
  REQUIRE(run_cli("no-such-command", dir).exit_code == 1);
  REQUIRE(run_cli("train --delta 0.4", dir).exit_code == 1);  // missing --lambda
  REQUIRE(run_cli("generate-data --delta 0.7 --n 10 --out " + (dir / "x.csv").string(), dir)
              .exit_code == 1);
  // eta_1 condition violated without the escape hatch
  REQUIRE(run_cli("train --delta 0.4 --lambda 0.01 --gamma 1 --iterations 50 --test-n 500 "
                  "--train-metric-n 500 --out-dir " +
                      (dir / "r").string(),
                  dir)
              .exit_code == 1);
  // divergence reports exit code 2
  REQUIRE(run_cli("train --delta 0.4 --lambda 1e-6 --gamma 1.5 --iterations 500 --test-n 500 "
                  "--train-metric-n 500 --loss exponential --allow-lr-violation --out-dir " +
                      (dir / "d").string(),
                  dir)
              .exit_code == 2);
}
