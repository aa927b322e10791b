#pragma once

// Level-set optimizers for pseudo-concave measures. CAN alternates an inner
// valuation maximization with a level update v <- P(w) and enjoys linear
// convergence with rate (1 - m/M). SCAN interleaves epochs of streaming
// valuation optimization with level estimation on fresh samples.

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "quantopt/core.hpp"
#include "quantopt/measures.hpp"
#include "quantopt/nemsis.hpp"
#include "quantopt/rewards.hpp"

namespace quantopt {

// What the inner maximization hands back: a model together with the rates it
// achieves, from which the next level is computed.
template <class Model>
struct CanStep {
  Model model;
  double P = 0.0;
  double N = 0.0;
};

struct CanConfig {
  double initial_level = 0.0;
  double tol = 1e-9;
  int max_iterations = 1000;
  // Optional bounded perturbation added to each level update (robustness
  // experiments; the alternation tolerates noisy levels).
  std::function<double(int)> level_noise;
};

template <class Model>
struct CanResult {
  CanStep<Model> final_step;
  std::vector<double> levels;  // v_1, v_2, ... (post-update levels)
  int iterations = 0;
  bool truncated = false;
};

// oracle(level) must return an (approximate) argmax of V(., level) with its
// rates. Iterates while the level improves by more than tol.
template <class Model, class Oracle>
inline CanResult<Model> can_run(const PseudoMeasureSpec& spec, Oracle&& oracle,
                                const CanConfig& cfg) {
  CanResult<Model> out;
  double level = cfg.initial_level;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    CanStep<Model> step = oracle(level);
    double next = eval_pseudo(step.P, step.N, spec);
    if (cfg.level_noise) next += cfg.level_noise(it);
    out.final_step = std::move(step);
    out.levels.push_back(next);
    out.iterations = it + 1;
    if (next <= level + cfg.tol) return out;
    level = next;
  }
  out.truncated = true;
  return out;
}

// Mean class-conditional rewards over a sample list, clamped into [0, 1],
// fed through pclass / pquant. Surrogate mode scores with the given reward;
// non-surrogate mode uses the 0-1 prediction reward (tie -> negative).
template <class PointRange>
inline double estimate_level(const LinearModel& model, const PointRange& samples,
                             const PseudoMeasureSpec& spec, RewardMode mode,
                             const RewardFunction& reward, ClassPrior prior) {
  double sum_pos = 0.0, sum_neg = 0.0;
  int64_t count = 0;
  for (const auto& entry : samples) {
    const LabeledPoint& pt = [&]() -> const LabeledPoint& {
      if constexpr (std::is_pointer_v<std::decay_t<decltype(entry)>>)
        return *entry;
      else
        return entry;
    }();
    double y_hat = dot(model.weights, pt);
    double raw = mode == RewardMode::Surrogate ? reward(y_hat, pt.label)
                                               : prediction_reward(y_hat, pt.label);
    Vec2 scaled = class_conditional_reward(raw, pt.label, prior);
    sum_pos += scaled.x;
    sum_neg += scaled.y;
    ++count;
  }
  if (count == 0) throw std::invalid_argument("estimate_level: empty sample list");
  double P = std::clamp(sum_pos / static_cast<double>(count), 0.0, 1.0);
  double N = std::clamp(sum_neg / static_cast<double>(count), 0.0, 1.0);
  return eval_pseudo(P, N, spec);
}

// Epoch e runs ceil(s0 * growth^e) learning samples followed by
// ceil(s0_estimate * growth^e) estimation samples.
struct EpochSchedule {
  int64_t s0 = 500;
  int64_t s0_estimate = 500;
  double growth = 2.0;
  int max_epochs = 16;

  int64_t learn_length(int epoch) const { return scaled(s0, epoch); }
  int64_t estimate_length(int epoch) const { return scaled(s0_estimate, epoch); }

 private:
  int64_t scaled(int64_t base, int epoch) const {
    double v = static_cast<double>(base) * std::pow(growth, epoch);
    return static_cast<int64_t>(std::ceil(v));
  }
};

struct ScanEpochRecord {
  int epoch = 0;
  int64_t samples_consumed = 0;  // cumulative, learning + estimation
  double level = 0.0;            // v_{e+1} estimated at the end of the epoch
};

struct ScanConfig {
  EpochSchedule epochs;
  NemsisConfig inner;              // schedule, radius, reward, prior for learning phases
  RewardMode level_mode = RewardMode::Surrogate;  // NonSurrogate: 0-1 estimation
  int64_t max_samples = 0;         // total budget across both phases (0: schedule only)
  // Observes each completed epoch with the model that produced its level.
  std::function<void(const ScanEpochRecord&, const LinearModel&)> epoch_callback;
};

struct ScanResult {
  LinearModel model;
  std::vector<ScanEpochRecord> trace;
  int64_t samples_consumed = 0;
  bool truncated = false;  // stream ended (or budget ran out) mid-epoch
};

// Streaming level-set optimization: each epoch warm-starts the valuation
// optimizer at the previous model, then re-estimates the level on fresh
// samples. Returns the last completed epoch's model.
template <class Stream>
inline ScanResult scan_run(Stream& stream, const PseudoMeasureSpec& spec, size_t dim,
                           const ScanConfig& cfg) {
  if (!spec.valuation_nested)
    throw std::invalid_argument("scan_run: measure lacks a valuation for the inner optimizer");
  ClassPrior prior = cfg.inner.fixed_prior.value_or(ClassPrior{0.5, 0.5});

  ScanResult out;
  out.model.radius = cfg.inner.radius;
  out.model.weights.assign(dim, 0.0);
  if (cfg.inner.initial_model) {
    out.model.weights = *cfg.inner.initial_model;
    project_ball(out.model.weights, cfg.inner.radius);
  }

  double level = 0.0;
  int64_t consumed = 0;
  auto budget_left = [&]() {
    return cfg.max_samples <= 0 ? std::numeric_limits<int64_t>::max()
                                : cfg.max_samples - consumed;
  };

  for (int epoch = 0; epoch < cfg.epochs.max_epochs; ++epoch) {
    int64_t learn_len = cfg.epochs.learn_length(epoch);
    int64_t est_len = cfg.epochs.estimate_length(epoch);
    if (learn_len + est_len > budget_left()) break;  // clean stop between epochs

    // Learning phase: fresh optimizer state on V(., level), warm-started model.
    NestedMeasureSpec val = spec.valuation_nested(level);
    NemsisConfig inner = cfg.inner;
    inner.initial_model = out.model.weights;
    inner.max_samples = learn_len;
    inner.trace_every = 0;
    inner.probe_objective = nullptr;
    NemsisState st = nemsis_init(val, dim, inner);
    bool exhausted = false;
    for (int64_t i = 0; i < learn_len; ++i) {
      const LabeledPoint* pt = stream.next();
      if (!pt) {
        exhausted = true;
        break;
      }
      nemsis_step(st, *pt, val, inner);
    }
    if (exhausted) {
      out.truncated = true;
      break;
    }
    LinearModel epoch_model = st.averaged();

    // Estimation phase: fresh samples only.
    std::vector<const LabeledPoint*> fresh;
    fresh.reserve(static_cast<size_t>(est_len));
    for (int64_t i = 0; i < est_len; ++i) {
      const LabeledPoint* pt = stream.next();
      if (!pt) {
        exhausted = true;
        break;
      }
      fresh.push_back(pt);
    }
    if (exhausted) {
      out.truncated = true;
      break;
    }
    level = estimate_level(epoch_model, fresh, spec, cfg.level_mode, cfg.inner.reward, prior);

    consumed += learn_len + est_len;
    out.model = std::move(epoch_model);
    out.trace.push_back({epoch, consumed, level});
    if (cfg.epoch_callback) cfg.epoch_callback(out.trace.back(), out.model);
  }

  out.samples_consumed = consumed;
  if (out.trace.empty()) out.truncated = true;
  return out;
}

}  // namespace quantopt
