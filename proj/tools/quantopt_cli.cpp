// Experiment CLI: runs one algorithm/measure pair on an svmlight file and
// writes trace tables. See --help for the flag set.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "quantopt/quantopt.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;
constexpr int kExitTruncated = 3;

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> parts;
  size_t start = 0;
  while (start <= s.size()) {
    size_t comma = s.find(',', start);
    if (comma == std::string::npos) {
      parts.push_back(s.substr(start));
      break;
    }
    parts.push_back(s.substr(start, comma - start));
    start = comma + 1;
  }
  return parts;
}

// "--sweep param=v1,v2,..." -> (param, values)
std::optional<std::pair<std::string, std::vector<double>>> parse_sweep_arg(
    const std::string& arg, std::string& err) {
  size_t eq = arg.find('=');
  if (eq == std::string::npos || eq == 0) {
    err = "--sweep expects <param>=<v1,v2,...>";
    return std::nullopt;
  }
  std::string param = arg.substr(0, eq);
  std::vector<double> values;
  for (const auto& tok : split_commas(arg.substr(eq + 1))) {
    try {
      size_t used = 0;
      double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      values.push_back(v);
    } catch (const std::exception&) {
      err = "--sweep: '" + tok + "' is not a number";
      return std::nullopt;
    }
  }
  if (values.empty()) {
    err = "--sweep needs at least one value";
    return std::nullopt;
  }
  return std::make_pair(param, values);
}

void print_final_metrics(const quantopt::EvalMetrics& m) {
  std::printf("final: objective=%.6g kld=%.6g ba=%.6g nss=%.6g measure=%.6g p_hat=%.6g\n",
              m.objective, m.kld, m.ba, m.nss, m.measure_value, m.p_hat);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming optimization of quantification measures for linear classifiers"};

  quantopt::ExperimentConfig cfg;
  std::string algo = "nemsis";
  std::string measure = "negkld";
  std::string reward = "hinge";
  std::string mode = "surrogate";
  std::string format = "csv";
  std::string sweep_arg;
  std::string tune_arg;
  double epsilon = 0.0;
  double drift_p = 0.0;

  app.add_option("--algo", algo,
                 "algorithm: nemsis, nemsis-ns, can, scan, scan-ns, cc-baseline")
      ->capture_default_str();
  app.add_option("--measure", measure,
                 "measure: negkld, qmeasure, bakld, nss, ba, cqreward, bkreward, cqb")
      ->capture_default_str();
  app.add_option("--data", cfg.data_path, "svmlight data file")->required();
  app.add_option("--train-frac", cfg.train_frac, "training fraction of the split")
      ->capture_default_str();
  app.add_option("--seed", cfg.seed, "master seed")->capture_default_str();
  app.add_option("--eta0", cfg.eta0, "step size scale, eta_t = eta0/sqrt(t)")
      ->capture_default_str();
  app.add_option("--radius", cfg.radius, "L2 ball radius for the weights")
      ->capture_default_str();
  app.add_option("--reward", reward, "surrogate reward: hinge, logistic")
      ->capture_default_str();
  app.add_option("--mode", mode, "reward bookkeeping: surrogate, ns")->capture_default_str();
  app.add_option("--clamp", cfg.reward_clamp, "reward clamp bound")->capture_default_str();
  app.add_option("--cweight", cfg.cweight, "BA weight of the bakld tradeoff")
      ->capture_default_str();
  app.add_option("--qbeta", cfg.qbeta, "beta of the qmeasure F-style tradeoff")
      ->capture_default_str();
  auto* eps_opt =
      app.add_option("--epsilon", epsilon, "KLD smoothing (default: 1/(2 |eval set|))");
  app.add_option("--s0", cfg.s0, "first epoch length for scan")->capture_default_str();
  app.add_option("--growth", cfg.growth, "epoch growth factor for scan")
      ->capture_default_str();
  app.add_option("--max-samples", cfg.max_samples, "training stream budget")
      ->capture_default_str();
  app.add_option("--trace-every", cfg.trace_every,
                 "trace cadence in samples (0: powers of two only)")
      ->capture_default_str();
  auto* drift_opt = app.add_option(
      "--drift-p", drift_p, "resample the evaluation side to this positive prevalence");
  app.add_option("--sweep", sweep_arg, "run one experiment per value: <param>=<v1,v2,...>");
  app.add_option("--tune", tune_arg, "grid-tune these parameters first: eta0,radius,clamp");
  app.add_option("--out", cfg.out_path, "trace output path (default: stdout)");
  app.add_option("--format", format, "trace format: csv, jsonl")->capture_default_str();
  app.add_flag("!--no-scale", cfg.scale_features, "disable per-feature max-abs scaling");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  std::vector<std::string> errs;
  if (auto a = quantopt::parse_algo(algo))
    cfg.algo = *a;
  else
    errs.push_back("unknown --algo '" + algo + "'");
  if (auto m = quantopt::parse_measure(measure))
    cfg.measure = *m;
  else
    errs.push_back("unknown --measure '" + measure + "'");
  if (reward == "hinge")
    cfg.reward = quantopt::RewardKind::Hinge;
  else if (reward == "logistic")
    cfg.reward = quantopt::RewardKind::Logistic;
  else
    errs.push_back("unknown --reward '" + reward + "' (hinge, logistic)");
  if (mode == "surrogate")
    cfg.mode = quantopt::RewardMode::Surrogate;
  else if (mode == "ns")
    cfg.mode = quantopt::RewardMode::NonSurrogate;
  else
    errs.push_back("unknown --mode '" + mode + "' (surrogate, ns)");
  if (format == "csv")
    cfg.format = quantopt::TraceFormat::Csv;
  else if (format == "jsonl")
    cfg.format = quantopt::TraceFormat::Jsonl;
  else
    errs.push_back("unknown --format '" + format + "' (csv, jsonl)");
  if (eps_opt->count() > 0) cfg.epsilon = epsilon;
  if (drift_opt->count() > 0) cfg.drift_p = drift_p;
  if (!sweep_arg.empty()) {
    std::string err;
    if (auto sw = parse_sweep_arg(sweep_arg, err))
      cfg.sweep = std::move(*sw);
    else
      errs.push_back(err);
  }
  if (!tune_arg.empty()) cfg.tune_params = split_commas(tune_arg);

  quantopt::reconcile_mode(cfg);
  for (const auto& e : quantopt::validate_config(cfg)) errs.push_back(e);
  if (!errs.empty()) {
    for (const auto& e : errs) std::cerr << "error: " << e << '\n';
    return kExitValidation;
  }

  try {
    quantopt::Dataset full = quantopt::load_svmlight_file(cfg.data_path);
    if (cfg.scale_features) full = quantopt::scale_features_maxabs(std::move(full));

    if (cfg.sweep) {
      auto rows = quantopt::run_sweep(full, cfg);
      std::string table = quantopt::sweep_csv(cfg.sweep->first, rows);
      if (cfg.out_path.empty())
        std::cout << table;
      else
        quantopt::write_text_file(cfg.out_path, table);
      size_t failed = 0;
      for (const auto& r : rows)
        if (!r.ok) {
          std::cerr << "sweep cell " << r.value << " failed: " << r.error << '\n';
          ++failed;
        }
      return failed == rows.size() ? kExitValidation : kExitOk;
    }

    quantopt::ExperimentConfig run_cfg = cfg;
    if (!cfg.tune_params.empty()) {
      quantopt::TuneReport report = quantopt::tune_grid(full, cfg);
      std::printf("tune: %zu cells, best eta0=%g radius=%g clamp=%g (score %.6g)\n",
                  report.cells.size(), report.best.eta0, report.best.radius,
                  report.best.clamp, report.best.score);
      run_cfg = report.tuned;
    }

    quantopt::ExperimentResult res = quantopt::run_experiment_on(full, run_cfg);
    if (run_cfg.out_path.empty())
      std::cout << quantopt::emit_traces(res.records, run_cfg.format);
    else
      quantopt::write_experiment_outputs(run_cfg, res);
    print_final_metrics(res.final_metrics);
    if (res.truncated) {
      std::cerr << "warning: run truncated before the configured budget\n";
      return kExitTruncated;
    }
    return kExitOk;
  } catch (const quantopt::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const quantopt::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const quantopt::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
}
