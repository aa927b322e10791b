#pragma once

// Experiment harness: configuration, metric evaluation, trace emission, the
// classify-and-count baseline, grid tuning and parameter sweeps. This is the
// layer the CLI drives; everything below it is deterministic given the
// configuration, so traces are bitwise reproducible modulo wall-clock fields.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "quantopt/can_scan.hpp"
#include "quantopt/core.hpp"
#include "quantopt/data_io.hpp"
#include "quantopt/measures.hpp"
#include "quantopt/nemsis.hpp"
#include "quantopt/rewards.hpp"

namespace quantopt {

// Exit codes the CLI maps these to: config 1, I/O 2 (truncation reports 3).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AlgoId { Nemsis, NemsisNs, Can, Scan, ScanNs, CcBaseline };
enum class MeasureId { NegKld, QMeasure, Bakld, Nss, Ba, CqReward, BkReward, Cqb };
enum class TraceFormat { Csv, Jsonl };

inline std::optional<AlgoId> parse_algo(const std::string& s) {
  if (s == "nemsis") return AlgoId::Nemsis;
  if (s == "nemsis-ns") return AlgoId::NemsisNs;
  if (s == "can") return AlgoId::Can;
  if (s == "scan") return AlgoId::Scan;
  if (s == "scan-ns") return AlgoId::ScanNs;
  if (s == "cc-baseline") return AlgoId::CcBaseline;
  return std::nullopt;
}

inline std::optional<MeasureId> parse_measure(const std::string& s) {
  if (s == "negkld") return MeasureId::NegKld;
  if (s == "qmeasure") return MeasureId::QMeasure;
  if (s == "bakld") return MeasureId::Bakld;
  if (s == "nss") return MeasureId::Nss;
  if (s == "ba") return MeasureId::Ba;
  if (s == "cqreward") return MeasureId::CqReward;
  if (s == "bkreward") return MeasureId::BkReward;
  if (s == "cqb") return MeasureId::Cqb;
  return std::nullopt;
}

inline const char* algo_name(AlgoId a) {
  switch (a) {
    case AlgoId::Nemsis: return "nemsis";
    case AlgoId::NemsisNs: return "nemsis-ns";
    case AlgoId::Can: return "can";
    case AlgoId::Scan: return "scan";
    case AlgoId::ScanNs: return "scan-ns";
    case AlgoId::CcBaseline: return "cc-baseline";
  }
  return "?";
}

inline const char* measure_name(MeasureId m) {
  switch (m) {
    case MeasureId::NegKld: return "negkld";
    case MeasureId::QMeasure: return "qmeasure";
    case MeasureId::Bakld: return "bakld";
    case MeasureId::Nss: return "nss";
    case MeasureId::Ba: return "ba";
    case MeasureId::CqReward: return "cqreward";
    case MeasureId::BkReward: return "bkreward";
    case MeasureId::Cqb: return "cqb";
  }
  return "?";
}

inline bool is_nested_measure(MeasureId m) {
  return m == MeasureId::NegKld || m == MeasureId::QMeasure || m == MeasureId::Bakld ||
         m == MeasureId::Nss || m == MeasureId::Ba;
}

inline bool is_pseudo_measure(MeasureId m) {
  return m == MeasureId::CqReward || m == MeasureId::BkReward;
}

struct ExperimentConfig {
  AlgoId algo = AlgoId::Nemsis;
  MeasureId measure = MeasureId::NegKld;
  std::string data_path;
  double train_frac = 0.7;
  uint64_t seed = 42;

  double eta0 = 1.0;
  double radius = 10.0;
  RewardKind reward = RewardKind::Hinge;
  double reward_clamp = 10.0;
  RewardMode mode = RewardMode::Surrogate;

  double cweight = 0.5;
  double qbeta = 1.0;
  std::optional<double> epsilon;  // default 1/(2 |eval set|)

  int64_t s0 = 500;
  double growth = 2.0;
  int64_t max_samples = 50000;
  int64_t trace_every = 1000;
  size_t probe_size = 2000;

  std::optional<double> drift_p;

  std::vector<std::string> tune_params;                  // subset of eta0, radius, clamp
  std::optional<std::pair<std::string, std::vector<double>>> sweep;  // cweight | target_p

  std::string out_path;  // empty: no files written
  TraceFormat format = TraceFormat::Csv;
  bool scale_features = true;
};

// "--algo nemsis --mode ns" and "--algo nemsis-ns" name the same run; keep the
// two fields consistent whichever one the caller set.
inline void reconcile_mode(ExperimentConfig& cfg) {
  if (cfg.algo == AlgoId::NemsisNs || cfg.algo == AlgoId::ScanNs)
    cfg.mode = RewardMode::NonSurrogate;
  else if (cfg.mode == RewardMode::NonSurrogate) {
    if (cfg.algo == AlgoId::Nemsis) cfg.algo = AlgoId::NemsisNs;
    if (cfg.algo == AlgoId::Scan) cfg.algo = AlgoId::ScanNs;
  }
}

inline std::vector<std::string> validate_config(const ExperimentConfig& cfg) {
  std::vector<std::string> errs;
  auto require = [&](bool ok, const std::string& msg) {
    if (!ok) errs.push_back(msg);
  };
  require(!cfg.data_path.empty(), "--data is required");
  require(cfg.train_frac > 0.0 && cfg.train_frac < 1.0, "--train-frac must lie inside (0, 1)");
  require(cfg.eta0 > 0.0, "--eta0 must be positive");
  require(cfg.radius > 0.0, "--radius must be positive");
  require(cfg.reward_clamp > 0.0, "reward clamp bound must be positive");
  require(cfg.cweight >= 0.0 && cfg.cweight <= 1.0, "--cweight must lie in [0, 1]");
  require(cfg.qbeta > 0.0, "--qbeta must be positive");
  if (cfg.epsilon) require(*cfg.epsilon > 0.0, "--epsilon must be positive");
  require(cfg.s0 >= 1, "--s0 must be at least 1");
  require(cfg.growth >= 1.0, "--growth must be at least 1");
  require(cfg.max_samples >= 1, "--max-samples must be at least 1");
  require(cfg.trace_every >= 0, "--trace-every must be nonnegative");
  require(cfg.probe_size >= 1, "probe size must be positive");
  if (cfg.drift_p) require(*cfg.drift_p > 0.0 && *cfg.drift_p < 1.0,
                           "--drift-p must lie inside (0, 1)");

  bool optimizer = cfg.algo != AlgoId::CcBaseline;
  if (cfg.measure == MeasureId::Cqb && optimizer)
    errs.push_back("cqb is an evaluation-only measure; use it with cc-baseline");
  if ((cfg.algo == AlgoId::Nemsis || cfg.algo == AlgoId::NemsisNs) &&
      !is_nested_measure(cfg.measure))
    errs.push_back(std::string(measure_name(cfg.measure)) +
                   " is not a nested concave measure; nemsis optimizes "
                   "negkld, qmeasure, bakld, nss or ba");
  if ((cfg.algo == AlgoId::Can || cfg.algo == AlgoId::Scan || cfg.algo == AlgoId::ScanNs) &&
      !is_pseudo_measure(cfg.measure))
    errs.push_back(std::string(measure_name(cfg.measure)) +
                   " is not a pseudo-concave measure; can/scan optimize cqreward or bkreward");
  if (cfg.mode == RewardMode::NonSurrogate &&
      (cfg.algo == AlgoId::Can || cfg.algo == AlgoId::CcBaseline))
    errs.push_back("--mode ns applies to nemsis and scan only");

  for (const auto& p : cfg.tune_params)
    if (p != "eta0" && p != "radius" && p != "clamp")
      errs.push_back("unknown tuning parameter '" + p + "' (eta0, radius, clamp)");
  if (cfg.sweep) {
    const auto& [param, values] = *cfg.sweep;
    if (param != "cweight" && param != "target_p")
      errs.push_back("unknown sweep parameter '" + param + "' (cweight, target_p)");
    if (values.empty()) errs.push_back("--sweep needs at least one value");
    for (double v : values) {
      if (param == "cweight" && (v < 0.0 || v > 1.0))
        errs.push_back("sweep cweight values must lie in [0, 1]");
      if (param == "target_p" && (v <= 0.0 || v >= 1.0))
        errs.push_back("sweep target_p values must lie inside (0, 1)");
    }
  }
  return errs;
}

// ---------------------------------------------------------------------------
// Metric evaluation
// ---------------------------------------------------------------------------

struct EvalMetrics {
  double objective = 0.0;      // canonical objective of the configured measure
  double kld = 0.0;            // smoothed KLD(true prevalence, classify-and-count)
  double ba = 0.0;
  double nss = 0.0;
  double measure_value = 0.0;  // the configured measure evaluated on this set
  double p_hat = 0.0;
  ConfusionCounts confusion;
};

namespace detail {

inline ClassPrior eval_prior(const ConfusionCounts& c) {
  if (c.positives() == 0 || c.negatives() == 0) {
    double p = (1.0 + static_cast<double>(c.positives())) / (2.0 + static_cast<double>(c.total()));
    return ClassPrior::of(p);
  }
  return ClassPrior::of(static_cast<double>(c.positives()) / static_cast<double>(c.total()));
}

}  // namespace detail

template <class PointRange>
inline EvalMetrics evaluate_model(const LinearModel& model, const PointRange& points,
                                  MeasureId measure, const MeasureParams& params,
                                  ClassPrior train_prior, std::optional<double> epsilon) {
  EvalMetrics m;
  m.confusion = empirical_confusion(model.weights, points);
  const ConfusionCounts& c = m.confusion;
  double P = c.tpr(), N = c.tnr();
  ClassPrior prior = detail::eval_prior(c);
  double total = static_cast<double>(c.total());
  double eps = epsilon.value_or(1.0 / (2.0 * total));

  m.p_hat = static_cast<double>(c.predicted_positive()) / total;
  Vec2 truth{static_cast<double>(c.positives()) / total,
             static_cast<double>(c.negatives()) / total};
  m.kld = eval_kld(truth, {m.p_hat, 1.0 - m.p_hat}, {eps});
  m.ba = eval_ba(P, N);
  m.nss = eval_nss(P, N, prior);

  switch (measure) {
    case MeasureId::NegKld:
      m.measure_value = -m.kld;
      m.objective = eval_negkld_objective(P, N, train_prior, eps);
      break;
    case MeasureId::QMeasure:
      m.measure_value = eval_qmeasure(P, N, prior, params.qbeta);
      m.objective = make_qmeasure(train_prior, params.qbeta).objective(P, N);
      break;
    case MeasureId::Bakld:
      m.measure_value = params.cweight * m.ba - (1.0 - params.cweight) * m.kld;
      m.objective = eval_bakld(P, N, train_prior, params.cweight, eps);
      break;
    case MeasureId::Nss:
      m.measure_value = m.nss;
      m.objective = eval_nss(P, N, train_prior);
      break;
    case MeasureId::Ba:
      m.measure_value = m.ba;
      m.objective = m.ba;
      break;
    case MeasureId::CqReward:
      m.measure_value = m.ba / (2.0 - m.nss);
      m.objective = eval_pseudo(P, N, make_cqreward(train_prior));
      break;
    case MeasureId::BkReward:
      m.measure_value = m.ba / (1.0 + m.kld);
      m.objective = eval_pseudo(P, N, make_bkreward(train_prior, eps));
      break;
    case MeasureId::Cqb:
      m.measure_value = eval_cqb(c.fp, c.fn);
      m.objective = m.measure_value;
      break;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Trace records
// ---------------------------------------------------------------------------

struct TraceRecord {
  int64_t t = 0;
  int64_t epoch = 0;
  double wall_clock_seconds = 0.0;
  double objective = 0.0;
  double kld = 0.0;
  double ba = 0.0;
  double nss = 0.0;
  double measure_value = 0.0;
  double model_norm = 0.0;
};

inline constexpr const char* kTraceCsvHeader =
    "t,epoch,wall_clock_seconds,objective,kld,ba,nss,measure_value,model_norm";

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void emit_trace_csv(const std::vector<TraceRecord>& records, std::ostream& out) {
  out << kTraceCsvHeader << '\n';
  for (const auto& r : records) {
    out << r.t << ',' << r.epoch << ',' << detail::fmt17(r.wall_clock_seconds) << ','
        << detail::fmt17(r.objective) << ',' << detail::fmt17(r.kld) << ','
        << detail::fmt17(r.ba) << ',' << detail::fmt17(r.nss) << ','
        << detail::fmt17(r.measure_value) << ',' << detail::fmt17(r.model_norm) << '\n';
  }
}

inline void emit_trace_jsonl(const std::vector<TraceRecord>& records, std::ostream& out) {
  for (const auto& r : records) {
    out << "{\"t\":" << r.t << ",\"epoch\":" << r.epoch << ",\"wall_clock_seconds\":"
        << detail::fmt17(r.wall_clock_seconds) << ",\"objective\":" << detail::fmt17(r.objective)
        << ",\"kld\":" << detail::fmt17(r.kld) << ",\"ba\":" << detail::fmt17(r.ba)
        << ",\"nss\":" << detail::fmt17(r.nss) << ",\"measure_value\":"
        << detail::fmt17(r.measure_value) << ",\"model_norm\":" << detail::fmt17(r.model_norm)
        << "}\n";
  }
}

inline void emit_traces(const std::vector<TraceRecord>& records, TraceFormat fmt,
                        std::ostream& out) {
  fmt == TraceFormat::Csv ? emit_trace_csv(records, out) : emit_trace_jsonl(records, out);
}

inline std::string emit_traces(const std::vector<TraceRecord>& records, TraceFormat fmt) {
  std::ostringstream out;
  emit_traces(records, fmt, out);
  return out.str();
}

inline std::vector<TraceRecord> parse_trace_csv(std::istream& in) {
  std::vector<TraceRecord> out;
  std::string line;
  if (!std::getline(in, line) || line != kTraceCsvHeader)
    throw IoError("trace csv: missing or unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 9) throw IoError("trace csv: malformed row '" + line + "'");
    TraceRecord r;
    r.t = std::stoll(cells[0]);
    r.epoch = std::stoll(cells[1]);
    r.wall_clock_seconds = std::stod(cells[2]);
    r.objective = std::stod(cells[3]);
    r.kld = std::stod(cells[4]);
    r.ba = std::stod(cells[5]);
    r.nss = std::stod(cells[6]);
    r.measure_value = std::stod(cells[7]);
    r.model_norm = std::stod(cells[8]);
    out.push_back(r);
  }
  return out;
}

inline std::vector<TraceRecord> parse_trace_jsonl(std::istream& in) {
  std::vector<TraceRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw IoError("trace jsonl: malformed line '" + line + "'");
    TraceRecord r;
    r.t = j.at("t").get<int64_t>();
    r.epoch = j.at("epoch").get<int64_t>();
    r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    r.objective = j.at("objective").get<double>();
    r.kld = j.at("kld").get<double>();
    r.ba = j.at("ba").get<double>();
    r.nss = j.at("nss").get<double>();
    r.measure_value = j.at("measure_value").get<double>();
    r.model_norm = j.at("model_norm").get<double>();
    out.push_back(r);
  }
  return out;
}

inline std::vector<TraceRecord> parse_traces(std::istream& in, TraceFormat fmt) {
  return fmt == TraceFormat::Csv ? parse_trace_csv(in) : parse_trace_jsonl(in);
}

// ---------------------------------------------------------------------------
// Experiment driver
// ---------------------------------------------------------------------------

struct ExperimentResult {
  std::vector<TraceRecord> records;  // probe-set rows plus a final full-eval row
  EvalMetrics final_metrics;
  LinearModel model;
  bool truncated = false;
  std::vector<double> levels;  // can/scan level trajectory
};

// Classify-and-count baseline: a plain logistic SGD classifier on the same
// step schedule and radius; prevalence is then read off its predictions.
inline LinearModel baseline_classify_count(const Dataset& train, const ExperimentConfig& cfg) {
  LinearModel model;
  model.radius = cfg.radius;
  model.weights.assign(train.dim, 0.0);
  SampleStream stream(train, {derive_seed(cfg.seed, 0x57e4), StreamOrder::IidWithReplacement});
  StepSchedule sched{cfg.eta0};
  for (int64_t t = 0; t < cfg.max_samples; ++t) {
    const LabeledPoint& pt = *stream.next();
    double z = pt.label * dot(model.weights, pt);
    double g = pt.label / (1.0 + std::exp(z));  // d/dw log sigmoid(y w.x)
    axpy(model.weights, sched.at(t + 1) * g, pt);
    project_ball(model.weights, cfg.radius);
  }
  return model;
}

namespace detail {

struct EvalContext {
  MeasureId measure;
  MeasureParams params;
  ClassPrior train_prior{0.5, 0.5};
  std::optional<double> epsilon;
  const std::vector<LabeledPoint>* probe = nullptr;
  const std::vector<LabeledPoint>* final_set = nullptr;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  }

  TraceRecord record(const LinearModel& model, int64_t t, int64_t epoch, bool final_row) const {
    const auto& pts = final_row ? *final_set : *probe;
    EvalMetrics m = evaluate_model(model, pts, measure, params, train_prior, epsilon);
    TraceRecord r;
    r.t = t;
    r.epoch = epoch;
    r.wall_clock_seconds = elapsed();
    r.objective = m.objective;
    r.kld = m.kld;
    r.ba = m.ba;
    r.nss = m.nss;
    r.measure_value = m.measure_value;
    r.model_norm = norm2(model.weights);
    return r;
  }
};

inline NemsisConfig inner_config(const ExperimentConfig& cfg, ClassPrior prior) {
  NemsisConfig nc;
  nc.schedule = {cfg.eta0};
  nc.radius = cfg.radius;
  nc.reward = {cfg.reward, cfg.reward_clamp};
  nc.mode = cfg.algo == AlgoId::NemsisNs ? RewardMode::NonSurrogate : RewardMode::Surrogate;
  nc.fixed_prior = prior;
  return nc;
}

inline NestedMeasureSpec nested_spec_for(MeasureId measure, ClassPrior prior,
                                         const MeasureParams& params) {
  switch (measure) {
    case MeasureId::NegKld: return make_negkld(prior, params.epsilon);
    case MeasureId::QMeasure: return make_qmeasure(prior, params.qbeta);
    case MeasureId::Bakld: return make_bakld(prior, params.cweight, params.epsilon);
    case MeasureId::Nss: return make_nss_only(prior);
    case MeasureId::Ba: return make_ba_only(prior);
    default: throw ConfigError("measure is not nested concave");
  }
}

inline PseudoMeasureSpec pseudo_spec_for(MeasureId measure, ClassPrior prior,
                                         const MeasureParams& params) {
  switch (measure) {
    case MeasureId::CqReward: return make_cqreward(prior);
    case MeasureId::BkReward: return make_bkreward(prior, params.epsilon);
    default: throw ConfigError("measure is not pseudo-concave");
  }
}

}  // namespace detail

// Probe: a deterministic subset of the evaluation side used for cheap trace
// checkpoints. Drawn from the evaluation side only, never the training side
// (the split partitions the dataset, so disjointness is structural).
inline Dataset make_probe(const Dataset& eval_set, size_t probe_size, uint64_t seed) {
  Dataset probe;
  probe.dim = eval_set.dim;
  std::vector<size_t> order(eval_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x9208e));
  rng.shuffle(order);
  size_t k = std::min(probe_size, eval_set.size());
  probe.points.reserve(k);
  for (size_t i = 0; i < k; ++i) probe.points.push_back(eval_set.points[order[i]]);
  return probe;
}

// Core driver over an already loaded (and, per config, already scaled)
// dataset; run_experiment is the file-path front end.
inline ExperimentResult run_experiment_on(const Dataset& full, ExperimentConfig cfg) {
  reconcile_mode(cfg);
  auto [train, test] = split_train_test(full, cfg.train_frac, cfg.seed);
  if (train.positives() == 0 || train.positives() == static_cast<int64_t>(train.size()))
    throw ConfigError("training split contains a single class; cannot form a prior");
  ClassPrior prior = train.prior();

  Dataset eval_set = cfg.drift_p ? drift_resample(test, *cfg.drift_p, test.size(),
                                                  derive_seed(cfg.seed, 0xd21f7))
                                 : std::move(test);
  Dataset probe = make_probe(eval_set, cfg.probe_size, cfg.seed);

  detail::EvalContext ctx;
  ctx.measure = cfg.measure;
  ctx.params = {cfg.cweight, cfg.qbeta,
                cfg.epsilon.value_or(1.0 / (2.0 * static_cast<double>(eval_set.size())))};
  ctx.train_prior = prior;
  ctx.epsilon = cfg.epsilon;
  ctx.probe = &probe.points;
  ctx.final_set = &eval_set.points;

  ExperimentResult out;
  SampleStream stream(train, {derive_seed(cfg.seed, 0x57e4), StreamOrder::IidWithReplacement});

  switch (cfg.algo) {
    case AlgoId::Nemsis:
    case AlgoId::NemsisNs: {
      NestedMeasureSpec spec = detail::nested_spec_for(cfg.measure, prior, ctx.params);
      NemsisConfig nc = detail::inner_config(cfg, prior);
      NemsisState st = nemsis_init(spec, full.dim, nc);
      for (int64_t i = 0; i < cfg.max_samples; ++i) {
        nemsis_step(st, *stream.next(), spec, nc);
        if (st.t < cfg.max_samples && detail::trace_due(st.t, cfg.trace_every))
          out.records.push_back(ctx.record(st.averaged(), st.t, 0, false));
      }
      out.model = st.averaged();
      out.records.push_back(ctx.record(out.model, st.t, 0, true));
      break;
    }

    case AlgoId::Scan:
    case AlgoId::ScanNs: {
      PseudoMeasureSpec spec = detail::pseudo_spec_for(cfg.measure, prior, ctx.params);
      ScanConfig sc;
      sc.epochs = {cfg.s0, cfg.s0, cfg.growth, 64};
      sc.inner = detail::inner_config(cfg, prior);
      sc.level_mode =
          cfg.algo == AlgoId::ScanNs ? RewardMode::NonSurrogate : RewardMode::Surrogate;
      sc.max_samples = cfg.max_samples;
      sc.epoch_callback = [&](const ScanEpochRecord& er, const LinearModel& model) {
        out.levels.push_back(er.level);
        out.records.push_back(ctx.record(model, er.samples_consumed, er.epoch, false));
      };
      ScanResult res = scan_run(stream, spec, full.dim, sc);
      out.truncated = res.truncated;
      out.model = res.model;
      out.records.push_back(
          ctx.record(out.model, res.samples_consumed,
                     res.trace.empty() ? 0 : res.trace.back().epoch, true));
      break;
    }

    case AlgoId::Can: {
      PseudoMeasureSpec spec = detail::pseudo_spec_for(cfg.measure, prior, ctx.params);
      NemsisConfig nc = detail::inner_config(cfg, prior);
      const int64_t per_iter = std::max<int64_t>(1000, cfg.max_samples / 8);
      int64_t consumed = 0;
      LinearModel current;
      current.radius = cfg.radius;
      current.weights.assign(full.dim, 0.0);

      const double tol = 1e-4;
      const int max_iterations = 1000;
      double level = 0.0;
      bool converged = false;
      int iter = 0;
      for (; iter < max_iterations && cfg.max_samples - consumed >= per_iter; ++iter) {
        NestedMeasureSpec val = spec.valuation_nested(level);
        NemsisConfig inner = nc;
        inner.initial_model = current.weights;
        TakeStream<SampleStream> bounded(stream, per_iter);
        NemsisResult r = nemsis_run(bounded, val, full.dim, inner);
        consumed += r.steps;
        current = r.averaged;
        ConfusionCounts c = empirical_confusion(current.weights, train.points);
        double next = eval_pseudo(c.tpr(), c.tnr(), spec);
        out.levels.push_back(next);
        out.records.push_back(ctx.record(current, consumed, iter, false));
        out.model = current;
        if (next <= level + tol) {
          converged = true;
          break;
        }
        level = next;
      }
      out.truncated = !converged && iter == max_iterations;
      out.records.push_back(ctx.record(out.model, consumed,
                                       out.levels.empty() ? 0 : int64_t(out.levels.size()) - 1,
                                       true));
      break;
    }

    case AlgoId::CcBaseline: {
      out.model = baseline_classify_count(train, cfg);
      out.records.push_back(ctx.record(out.model, cfg.max_samples, 0, true));
      break;
    }
  }

  out.final_metrics = evaluate_model(out.model, eval_set.points, cfg.measure, ctx.params, prior,
                                     cfg.epsilon);
  return out;
}

inline ExperimentResult run_experiment(ExperimentConfig cfg) {
  reconcile_mode(cfg);
  if (auto errs = validate_config(cfg); !errs.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  Dataset full = load_svmlight_file(cfg.data_path);
  if (cfg.scale_features) full = scale_features_maxabs(std::move(full));
  return run_experiment_on(full, cfg);
}

// ---------------------------------------------------------------------------
// Parallel helpers, tuning, sweeps
// ---------------------------------------------------------------------------

// Worker count: QUANTOPT_THREADS caps the pool, hardware concurrency is the
// default. Results are aggregated by task index, so the outcome does not
// depend on the pool width.
inline unsigned thread_pool_width(size_t tasks) {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("QUANTOPT_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v >= 1) hw = static_cast<unsigned>(std::min<long>(v, 1024));
  }
  return static_cast<unsigned>(std::min<size_t>(hw, std::max<size_t>(tasks, 1)));
}

inline void run_parallel(size_t count, const std::function<void(size_t)>& task) {
  unsigned width = thread_pool_width(count);
  if (width <= 1) {
    for (size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<size_t> next(0);
  std::vector<std::thread> workers;
  workers.reserve(width);
  for (unsigned w = 0; w < width; ++w)
    workers.emplace_back([&] {
      for (size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) task(i);
    });
  for (auto& th : workers) th.join();
}

struct TuneCell {
  double eta0 = 0.0;
  double radius = 0.0;
  double clamp = 0.0;
  double score = 0.0;
  bool ok = false;
  std::string error;
};

struct TuneReport {
  std::vector<TuneCell> cells;
  TuneCell best;
  ExperimentConfig tuned;
};

// Grid search over {1e-4 .. 1e4} per tuned parameter, scored by the final
// measure value on a 20% validation carve of the training side. Ties prefer
// the smaller eta0, then the smaller radius, then the smaller clamp.
inline TuneReport tune_grid(const Dataset& full, const ExperimentConfig& cfg) {
  if (cfg.tune_params.empty()) throw ConfigError("tune_grid: no parameters selected");
  auto tuned_param = [&](const std::string& name) {
    for (const auto& p : cfg.tune_params)
      if (p == name) return true;
    return false;
  };

  std::vector<double> grid;
  for (int e = -4; e <= 4; ++e) grid.push_back(std::pow(10.0, e));
  std::vector<double> etas = tuned_param("eta0") ? grid : std::vector<double>{cfg.eta0};
  std::vector<double> radii = tuned_param("radius") ? grid : std::vector<double>{cfg.radius};
  std::vector<double> clamps =
      tuned_param("clamp") ? grid : std::vector<double>{cfg.reward_clamp};

  TuneReport report;
  for (double e : etas)
    for (double r : radii)
      for (double c : clamps) report.cells.push_back({e, r, c, 0.0, false, ""});

  // Validation carve: each cell trains on 80% of the training side and scores
  // on the remaining 20%; the real test side is never touched here. Reuses the
  // driver with the training side standing in as the whole dataset.
  Dataset train_side = split_train_test(full, cfg.train_frac, cfg.seed).first;
  double sign = cfg.measure == MeasureId::Cqb ? -1.0 : 1.0;
  run_parallel(report.cells.size(), [&](size_t i) {
    TuneCell& cell = report.cells[i];
    ExperimentConfig sub = cfg;
    sub.eta0 = cell.eta0;
    sub.radius = cell.radius;
    sub.reward_clamp = cell.clamp;
    sub.tune_params.clear();
    sub.sweep.reset();
    sub.out_path.clear();
    sub.drift_p.reset();
    sub.train_frac = 0.8;
    sub.seed = derive_seed(cfg.seed, 0x743e);
    try {
      ExperimentResult res = run_experiment_on(train_side, sub);
      cell.score = sign * res.final_metrics.measure_value;
      cell.ok = true;
    } catch (const std::exception& ex) {
      cell.error = ex.what();
    }
  });

  const TuneCell* best = nullptr;
  for (const auto& cell : report.cells) {
    if (!cell.ok) continue;
    if (!best || cell.score > best->score ||
        (cell.score == best->score &&
         std::tie(cell.eta0, cell.radius, cell.clamp) <
             std::tie(best->eta0, best->radius, best->clamp)))
      best = &cell;
  }
  if (!best) throw ConfigError("tune_grid: every cell failed");
  report.best = *best;
  report.tuned = cfg;
  report.tuned.eta0 = best->eta0;
  report.tuned.radius = best->radius;
  report.tuned.reward_clamp = best->clamp;
  report.tuned.tune_params.clear();
  return report;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepRow {
  double value = 0.0;  // swept parameter value
  double ba = 0.0;
  double kld = 0.0;
  double measure_value = 0.0;
  bool ok = false;
  std::string error;
};

// One full experiment per swept value. "cweight" sweeps the tradeoff weight of
// the combined measure; "target_p" resamples the evaluation side to the given
// positive prevalence.
inline std::vector<SweepRow> run_sweep(const Dataset& full, const ExperimentConfig& cfg) {
  if (!cfg.sweep) throw ConfigError("run_sweep: no sweep configured");
  const auto& [param, values] = *cfg.sweep;
  std::vector<SweepRow> rows(values.size());
  run_parallel(values.size(), [&](size_t i) {
    SweepRow& row = rows[i];
    row.value = values[i];
    ExperimentConfig sub = cfg;
    sub.sweep.reset();
    sub.out_path.clear();
    if (param == "cweight")
      sub.cweight = values[i];
    else
      sub.drift_p = values[i];
    try {
      ExperimentResult res = run_experiment_on(full, sub);
      row.ba = res.final_metrics.ba;
      row.kld = res.final_metrics.kld;
      row.measure_value = res.final_metrics.measure_value;
      row.ok = true;
    } catch (const std::exception& ex) {
      row.error = ex.what();
    }
  });
  return rows;
}

inline std::string sweep_csv(const std::string& param, const std::vector<SweepRow>& rows) {
  std::string out = param + ",ba,kld,measure_value,status\n";
  for (const auto& r : rows) {
    out += detail::fmt17(r.value) + ',' + detail::fmt17(r.ba) + ',' + detail::fmt17(r.kld) +
           ',' + detail::fmt17(r.measure_value) + ',' + (r.ok ? "ok" : "failed") + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file: " + path);
  out << content;
  if (!out) throw IoError("failed writing output file: " + path);
}

// Sidecar describing the run: enough to re-run it and to interpret the trace.
inline std::string experiment_meta_json(const ExperimentConfig& cfg,
                                        const ExperimentResult& res) {
  nlohmann::json j;
  j["algo"] = algo_name(cfg.algo);
  j["measure"] = measure_name(cfg.measure);
  j["data"] = cfg.data_path;
  j["train_frac"] = cfg.train_frac;
  j["seed"] = cfg.seed;
  j["eta0"] = cfg.eta0;
  j["radius"] = cfg.radius;
  j["reward"] = cfg.reward == RewardKind::Hinge      ? "hinge"
                : cfg.reward == RewardKind::Logistic ? "logistic"
                                                     : "zero-one";
  j["reward_clamp"] = cfg.reward_clamp;
  j["mode"] = cfg.mode == RewardMode::NonSurrogate ? "ns" : "surrogate";
  j["cweight"] = cfg.cweight;
  j["qbeta"] = cfg.qbeta;
  if (cfg.epsilon) j["epsilon"] = *cfg.epsilon;
  j["s0"] = cfg.s0;
  j["growth"] = cfg.growth;
  j["max_samples"] = cfg.max_samples;
  if (cfg.drift_p) j["drift_p"] = *cfg.drift_p;
  j["truncated"] = res.truncated;
  j["final"] = {{"objective", res.final_metrics.objective},
                {"kld", res.final_metrics.kld},
                {"ba", res.final_metrics.ba},
                {"nss", res.final_metrics.nss},
                {"measure_value", res.final_metrics.measure_value},
                {"p_hat", res.final_metrics.p_hat}};
  if (!res.levels.empty()) j["levels"] = res.levels;
  return j.dump(2) + "\n";
}

inline void write_experiment_outputs(const ExperimentConfig& cfg, const ExperimentResult& res) {
  if (cfg.out_path.empty()) return;
  write_text_file(cfg.out_path, emit_traces(res.records, cfg.format));
  write_text_file(cfg.out_path + ".meta.json", experiment_meta_json(cfg, res));
}

}  // namespace quantopt
