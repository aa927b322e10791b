#pragma once

// Surrogate reward functions for binary linear classifiers, their
// class-conditional scaled variants, running-average state, and empirical
// confusion summaries. Rewards are surrogates of the accuracy indicator:
// concave in the prediction, upper-bounded by 1, and clamped to a bounded
// range so running averages stay well behaved.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "quantopt/core.hpp"

namespace quantopt {

enum class RewardKind { Hinge, Logistic, ZeroOne };

// Inverted hinge: min{1, y * y_hat}.
inline double reward_hinge(double y_hat, int y) { return std::min(1.0, y * y_hat); }

// Inverted logistic: 1 - log(1 + exp(-y * y_hat)), computed overflow-safe.
inline double reward_logistic(double y_hat, int y) { return 1.0 - softplus(-y * y_hat); }

// Zero-one reward 1[y * y_hat > 0]. A tie (y_hat = 0) counts as an error for
// both classes. Prediction-side bookkeeping uses prediction_reward below
// instead, which follows the tie -> negative sign rule.
inline double reward_zero_one(double y_hat, int y) { return y * y_hat > 0.0 ? 1.0 : 0.0; }

// The sign rule used everywhere predictions are materialized: positive iff
// y_hat > 0 (ties predict negative).
inline int predict_sign(double y_hat) { return y_hat > 0.0 ? 1 : -1; }

// 1 iff the sign rule classifies the point correctly. This is the bookkeeping
// reward for non-surrogate (NS) mode and level estimation; it agrees with
// empirical_confusion on ties, where reward_zero_one does not.
inline double prediction_reward(double y_hat, int y) {
  return predict_sign(y_hat) == y ? 1.0 : 0.0;
}

struct RewardFunction {
  RewardKind kind = RewardKind::Hinge;
  double clamp_bound = 10.0;  // rewards are clamped to [-clamp_bound, clamp_bound]

  double operator()(double y_hat, int y) const {
    double r = 0.0;
    switch (kind) {
      case RewardKind::Hinge: r = reward_hinge(y_hat, y); break;
      case RewardKind::Logistic: r = reward_logistic(y_hat, y); break;
      case RewardKind::ZeroOne: r = reward_zero_one(y_hat, y); break;
    }
    return std::clamp(r, -clamp_bound, clamp_bound);
  }
};

// Class-conditional scaling: positives contribute r/p to the first slot,
// negatives r/(1-p) to the second, the other slot is masked to zero. Running
// averages of these pairs are unbiased estimates of (surrogate TPR, TNR).
inline Vec2 class_conditional_reward(double raw_reward, int y, ClassPrior prior) {
  if (y > 0) return {raw_reward / prior.p, 0.0};
  return {0.0, raw_reward / prior.n};
}

inline Vec2 class_conditional_reward(double y_hat, int y, ClassPrior prior,
                                     const RewardFunction& reward) {
  return class_conditional_reward(reward(y_hat, y), y, prior);
}

// Class prior used for reward scaling: either fixed by the caller or a
// running empirical estimate with Laplace smoothing, p = (1 + #pos) / (2 + t).
class PriorTracker {
 public:
  PriorTracker() = default;
  explicit PriorTracker(ClassPrior fixed) : fixed_(fixed) {}

  void observe(int label) {
    ++seen_;
    if (label > 0) ++positives_;
  }

  ClassPrior current() const {
    if (fixed_) return *fixed_;
    double p = (1.0 + static_cast<double>(positives_)) / (2.0 + static_cast<double>(seen_));
    return ClassPrior::of(p);
  }

  bool fixed() const { return fixed_.has_value(); }

 private:
  std::optional<ClassPrior> fixed_;
  int64_t seen_ = 0;
  int64_t positives_ = 0;
};

// Running averages of class-conditional rewards plus the dual-weighted
// accumulator q maintained by the optimizer.
struct RewardState {
  Vec2 r_avg{0.5, 0.5};
  Vec2 q_vec{0.5, 0.5};
  int64_t t = 0;
};

// One running-average step: avg' = (t * avg + sample) / (t + 1). Only r_avg
// and t roll forward here; q_vec has its own recursion in the optimizer.
inline RewardState update_running_averages(RewardState state, Vec2 sample_rewards) {
  double t = static_cast<double>(state.t);
  state.r_avg = (1.0 / (t + 1.0)) * (t * state.r_avg + sample_rewards);
  state.t += 1;
  return state;
}

struct ConfusionCounts {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t tn = 0;
  int64_t fn = 0;

  int64_t positives() const { return tp + fn; }
  int64_t negatives() const { return tn + fp; }
  int64_t total() const { return tp + fp + tn + fn; }
  int64_t predicted_positive() const { return tp + fp; }

  // Empty-class conventions: a rate over an empty class is 1 (no mistakes
  // were possible).
  double tpr() const { return positives() == 0 ? 1.0 : static_cast<double>(tp) / positives(); }
  double tnr() const { return negatives() == 0 ? 1.0 : static_cast<double>(tn) / negatives(); }
};

template <class PointRange>
inline ConfusionCounts empirical_confusion(const std::vector<double>& weights,
                                           const PointRange& points) {
  ConfusionCounts c;
  for (const auto& entry : points) {
    const LabeledPoint& pt = [&]() -> const LabeledPoint& {
      if constexpr (std::is_pointer_v<std::decay_t<decltype(entry)>>)
        return *entry;
      else
        return entry;
    }();
    int pred = predict_sign(dot(weights, pt));
    if (pt.label > 0)
      pred > 0 ? ++c.tp : ++c.fn;
    else
      pred > 0 ? ++c.fp : ++c.tn;
  }
  if (c.total() == 0) throw std::invalid_argument("empirical_confusion: empty sample set");
  return c;
}

template <class PointRange>
inline int64_t count_predicted_positive(const std::vector<double>& weights,
                                        const PointRange& points) {
  return empirical_confusion(weights, points).predicted_positive();
}

}  // namespace quantopt
