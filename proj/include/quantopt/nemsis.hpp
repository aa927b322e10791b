#pragma once

// Streaming optimizer for nested concave measures. One pass per sample:
// primal ascent on the reward supergradient weighted by the current duals,
// followed by follow-the-leader dual refreshes, which reduce to gradients of
// the concave components at the running averages. The returned model is the
// average of the primal iterates.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "quantopt/core.hpp"
#include "quantopt/measures.hpp"
#include "quantopt/rewards.hpp"

namespace quantopt {

struct LinearModel {
  std::vector<double> weights;
  double radius = 0.0;  // L2 ball the weights live in; 0 disables projection
};

// Project w onto the L2 ball of the given radius (no-op inside the ball).
inline void project_ball(std::vector<double>& w, double radius) {
  if (radius <= 0.0) return;
  double nrm = norm2(w);
  if (nrm <= radius) return;
  double s = radius / nrm;
  for (double& v : w) v *= s;
}

// eta_t = eta0 / sqrt(t), t counted from 1.
struct StepSchedule {
  double eta0 = 1.0;

  double at(int64_t t) const {
    if (t < 1) throw std::invalid_argument("step schedule is indexed from t = 1");
    return eta0 / std::sqrt(static_cast<double>(t));
  }
};

// Dual variables for the two inner components and the outer combiner.
struct DualState {
  Vec2 alpha;  // dual of zeta1 at r_avg
  Vec2 beta;   // dual of zeta2 at r_avg
  Vec2 gamma;  // dual of psi at q_vec
};

inline DualState refresh_duals(const NestedMeasureSpec& spec, const RewardState& rewards) {
  return {dual_update(spec.zeta1, rewards.r_avg), dual_update(spec.zeta2, rewards.r_avg),
          dual_update(spec.psi, rewards.q_vec)};
}

// True when every dual equals the component gradient at the current averages.
inline bool duals_consistent(const DualState& duals, const NestedMeasureSpec& spec,
                             const RewardState& rewards, double tol = 1e-12) {
  DualState fresh = refresh_duals(spec, rewards);
  return linf_dist(duals.alpha, fresh.alpha) <= tol &&
         linf_dist(duals.beta, fresh.beta) <= tol &&
         linf_dist(duals.gamma, fresh.gamma) <= tol;
}

enum class RewardMode { Surrogate, NonSurrogate };

struct NemsisConfig {
  StepSchedule schedule;
  double radius = 10.0;
  RewardFunction reward;                       // surrogate driving the primal step
  RewardMode mode = RewardMode::Surrogate;     // NonSurrogate: duals track 0-1 rates
  std::optional<ClassPrior> fixed_prior;       // else running Laplace estimate
  std::optional<std::vector<double>> initial_model;
  int64_t max_samples = 0;                     // 0: consume the stream fully
  int64_t trace_every = 0;                     // extra trace cadence (0: geometric only)
  std::function<double(const LinearModel&)> probe_objective;  // optional trace metric
};

struct NemsisState {
  LinearModel model;
  std::vector<double> model_sum;  // running sum of post-step iterates
  RewardState rewards;
  DualState duals;
  PriorTracker prior;
  int64_t t = 0;

  LinearModel averaged() const {
    LinearModel avg = model;
    if (t > 0) {
      double inv = 1.0 / static_cast<double>(t);
      for (size_t i = 0; i < avg.weights.size(); ++i) avg.weights[i] = model_sum[i] * inv;
    }
    return avg;
  }
};

inline NemsisState nemsis_init(const NestedMeasureSpec& spec, size_t dim,
                               const NemsisConfig& cfg) {
  NemsisState st;
  st.model.radius = cfg.radius;
  if (cfg.initial_model) {
    if (cfg.initial_model->size() != dim)
      throw std::invalid_argument("nemsis: initial model dimension mismatch");
    st.model.weights = *cfg.initial_model;
    project_ball(st.model.weights, cfg.radius);
  } else {
    st.model.weights.assign(dim, 0.0);
  }
  st.model_sum.assign(dim, 0.0);
  st.prior = cfg.fixed_prior ? PriorTracker(*cfg.fixed_prior) : PriorTracker();
  st.rewards = RewardState{};  // r0 = q0 = (1/2, 1/2)
  st.duals = refresh_duals(spec, st.rewards);
  return st;
}

// Derivative of the surrogate reward with respect to the raw prediction y_hat
// (supergradient at the hinge kink, where the margin-active branch is kept).
inline double reward_slope(const RewardFunction& reward, double y_hat, int y) {
  switch (reward.kind) {
    case RewardKind::Hinge:
      return y * y_hat <= 1.0 ? static_cast<double>(y) : 0.0;
    case RewardKind::Logistic: {
      double z = y * y_hat;
      return y / (1.0 + std::exp(z));  // y * sigmoid(-z)
    }
    case RewardKind::ZeroOne:
      return 0.0;  // flat almost everywhere
  }
  return 0.0;
}

// Dense supergradient of the class-conditional reward r^{+/-} at y_hat, i.e.
// slope * x / p_class with the masked class contributing nothing.
inline std::vector<double> supergradient_reward(const RewardFunction& reward, double y_hat,
                                                int y, const LabeledPoint& pt,
                                                ClassPrior prior, size_t dim) {
  std::vector<double> g(dim, 0.0);
  double scale = reward_slope(reward, y_hat, y) / (y > 0 ? prior.p : prior.n);
  for (const Feature& f : pt.features) {
    if (f.index >= dim) throw std::invalid_argument("supergradient: feature index out of range");
    g[f.index] = scale * f.value;
  }
  return g;
}

// One optimizer step. Uses the duals held at entry, then refreshes them from
// the updated running averages, so duals_consistent holds on exit.
inline void nemsis_step(NemsisState& st, const LabeledPoint& pt, const NestedMeasureSpec& spec,
                        const NemsisConfig& cfg) {
  if (pt.label != 1 && pt.label != -1)
    throw std::invalid_argument("nemsis_step: labels must be +/-1");
  if (!pt.features.empty() && max_feature_index(pt) >= st.model.weights.size())
    throw std::invalid_argument("nemsis_step: sample dimension exceeds model dimension");

  st.prior.observe(pt.label);
  ClassPrior prior = st.prior.current();

  double y_hat = dot(st.model.weights, pt);
  int y = pt.label;

  // Conjugate values must be taken at the duals chosen from the *previous*
  // averages, before r_avg rolls forward.
  double conj1 = conjugate_value_at_dual(spec.zeta1, st.rewards.r_avg);
  double conj2 = conjugate_value_at_dual(spec.zeta2, st.rewards.r_avg);

  // Primal ascent with the dual-weighted reward supergradient.
  double dual_weight = y > 0 ? st.duals.gamma.x * st.duals.alpha.x + st.duals.gamma.y * st.duals.beta.x
                             : st.duals.gamma.x * st.duals.alpha.y + st.duals.gamma.y * st.duals.beta.y;
  double eta = cfg.schedule.at(st.t + 1);
  double slope = reward_slope(cfg.reward, y_hat, y) / (y > 0 ? prior.p : prior.n);
  axpy(st.model.weights, eta * dual_weight * slope, pt);
  project_ball(st.model.weights, cfg.radius);

  // Bookkeeping rewards: the surrogate, or the 0-1 prediction reward in
  // non-surrogate mode (tie -> negative, matching empirical_confusion).
  double raw = cfg.mode == RewardMode::Surrogate ? cfg.reward(y_hat, y)
                                                 : prediction_reward(y_hat, y);
  Vec2 scaled = class_conditional_reward(raw, y, prior);

  double t = static_cast<double>(st.t);
  Vec2 q_sum = t * st.rewards.q_vec;
  if (y > 0)
    q_sum = q_sum + scaled.x * Vec2{st.duals.alpha.x, st.duals.beta.x};
  else
    q_sum = q_sum + scaled.y * Vec2{st.duals.alpha.y, st.duals.beta.y};
  st.rewards.q_vec = (1.0 / (t + 1.0)) * (q_sum - Vec2{conj1, conj2});

  st.rewards = update_running_averages(st.rewards, scaled);
  st.duals = refresh_duals(spec, st.rewards);
  st.t += 1;
  for (size_t i = 0; i < st.model_sum.size(); ++i) st.model_sum[i] += st.model.weights[i];
}

struct NemsisTraceRecord {
  int64_t t = 0;
  double objective = 0.0;  // probe objective of the averaged model (NaN if unprobed)
  DualState duals;
};

struct NemsisResult {
  LinearModel averaged;
  LinearModel last;
  std::vector<NemsisTraceRecord> trace;
  int64_t steps = 0;
  NemsisState final_state;
};

namespace detail {
inline bool is_power_of_two(int64_t t) { return t > 0 && (t & (t - 1)) == 0; }

inline bool trace_due(int64_t t, int64_t trace_every) {
  return is_power_of_two(t) || (trace_every > 0 && t % trace_every == 0);
}
}  // namespace detail

// Run the optimizer over a stream (next() -> const LabeledPoint*, null when
// exhausted) until max_samples or exhaustion. Streams must yield at least one
// sample.
template <class Stream>
inline NemsisResult nemsis_run(Stream& stream, const NestedMeasureSpec& spec, size_t dim,
                               const NemsisConfig& cfg) {
  NemsisState st = nemsis_init(spec, dim, cfg);
  NemsisResult out;
  auto record = [&]() {
    double obj = std::numeric_limits<double>::quiet_NaN();
    if (cfg.probe_objective) obj = cfg.probe_objective(st.averaged());
    out.trace.push_back({st.t, obj, st.duals});
  };
  while (cfg.max_samples <= 0 || st.t < cfg.max_samples) {
    const LabeledPoint* pt = stream.next();
    if (!pt) break;
    nemsis_step(st, *pt, spec, cfg);
    if (detail::trace_due(st.t, cfg.trace_every)) record();
  }
  if (st.t == 0) throw std::invalid_argument("nemsis_run: stream yielded no samples");
  if (out.trace.empty() || out.trace.back().t != st.t) record();
  out.averaged = st.averaged();
  out.last = st.model;
  out.steps = st.t;
  out.final_state = st;
  return out;
}

}  // namespace quantopt
