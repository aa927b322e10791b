#pragma once

// Quantification performance measures and the concave calculus behind their
// online optimization.
//
// Nested concave measures are written in canonical form Psi(zeta1(P, N),
// zeta2(P, N)) where P and N are (surrogate) TPR and TNR, Psi is concave and
// non-decreasing in each argument and the zetas are concave. The follow-the-
// leader dual updates used by the optimizer reduce, through the concave
// Fenchel conjugate, to plain gradients of these components at the running
// averages, so every component carries an eval and a grad plus the domain box
// on which it is cleanly concave.
//
// Pseudo-concave measures are ratios pclass / pquant of a concave numerator
// and a convex denominator bounded in [m, M]; they are optimized through
// their level sets via the valuation V(w, v) = pclass - v * pquant.

#include <functional>
#include <stdexcept>
#include <string>

#include "quantopt/core.hpp"

namespace quantopt {

// ---------------------------------------------------------------------------
// Smoothing and evaluation metrics
// ---------------------------------------------------------------------------

// Additive smoothing for prevalence estimates. epsilon defaults to 1/(2|S|)
// with |S| the size of the evaluation sample.
struct SmoothingConfig {
  double epsilon = 0.005;

  static SmoothingConfig for_sample_count(int64_t n) {
    if (n <= 0) throw std::invalid_argument("smoothing: sample count must be positive");
    return {1.0 / (2.0 * static_cast<double>(n))};
  }
};

// (eps + p_i) / (eps * k + sum_j p_j) over k = 2 cells; strictly positive for
// nonnegative input with eps > 0.
inline Vec2 smooth_distribution(Vec2 dist, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("smoothing epsilon must be positive");
  if (dist.x < 0.0 || dist.y < 0.0)
    throw std::invalid_argument("smooth_distribution: negative mass");
  double denom = 2.0 * epsilon + dist.x + dist.y;
  return {(epsilon + dist.x) / denom, (epsilon + dist.y) / denom};
}

namespace detail {
inline void check_distribution(Vec2 d, const char* who) {
  if (d.x < 0.0 || d.y < 0.0 || std::abs(d.x + d.y - 1.0) > 1e-9)
    throw std::invalid_argument(std::string(who) + ": argument is not a binary distribution");
}
}  // namespace detail

// KL divergence between two binary distributions, both smoothed. Zero when
// the arguments coincide; bounded by O(log 1/eps) for any pair.
inline double eval_kld(Vec2 p_true, Vec2 p_hat, SmoothingConfig cfg) {
  detail::check_distribution(p_true, "eval_kld");
  detail::check_distribution(p_hat, "eval_kld");
  Vec2 ps = smooth_distribution(p_true, cfg.epsilon);
  Vec2 qs = smooth_distribution(p_hat, cfg.epsilon);
  return ps.x * std::log(ps.x / qs.x) + ps.y * std::log(ps.y / qs.y);
}

namespace detail {
constexpr double kRateClamp = 1e-8;  // rates are pulled into [delta, 1-delta]

inline double clamp_rate(double v) { return std::clamp(v, kRateClamp, 1.0 - kRateClamp); }

// Predicted-positive / predicted-negative mass induced by rates (P, N) under
// a prior: (p P + n (1-N), n N + p (1-P)). The two always sum to one.
inline Vec2 predicted_mass(double P, double N, ClassPrior prior) {
  return {prior.p * P + prior.n * (1.0 - N), prior.n * N + prior.p * (1.0 - P)};
}

// Signed difference between false-negative and false-positive mass.
inline double mass_diff(double P, double N, ClassPrior prior) {
  return prior.p * (1.0 - P) - prior.n * (1.0 - N);
}
}  // namespace detail

// NegKLD objective at rates (P, N): -KLD(prior, predicted mass) up to the
// entropy constant, i.e. p log(pP + n(1-N)) + n log(nN + p(1-P)). Maximized
// exactly when false-negative mass equals false-positive mass.
inline double eval_negkld_objective(double P, double N, ClassPrior prior, double epsilon) {
  Vec2 mass = detail::predicted_mass(detail::clamp_rate(P), detail::clamp_rate(N), prior);
  double floor = epsilon / 2.0;
  return prior.p * std::log(std::max(mass.x, floor)) +
         prior.n * std::log(std::max(mass.y, floor));
}

inline double eval_ba(double P, double N) { return 0.5 * (P + N); }

// Normalized squared-score NSS at rates: 1 - (p(1-P) - n(1-N))^2.
inline double eval_nss(double P, double N, ClassPrior prior) {
  double d = detail::mass_diff(P, N, prior);
  return 1.0 - d * d;
}

// Q-measure: harmonic-style combination of BA (classification) and NSS
// (quantification), Q_beta = (1+beta^2) * BA * NSS / (beta^2 BA + NSS).
inline double eval_qmeasure(double P, double N, ClassPrior prior, double beta) {
  double x = std::max(eval_ba(P, N), 1e-12);
  double y = std::max(eval_nss(P, N, prior), 1e-12);
  double b2 = beta * beta;
  return (1.0 + b2) * x * y / (b2 * x + y);
}

// BAKLD: C * BA + (1 - C) * NegKLD objective.
inline double eval_bakld(double P, double N, ClassPrior prior, double cweight, double epsilon) {
  return cweight * eval_ba(P, N) + (1.0 - cweight) * eval_negkld_objective(P, N, prior, epsilon);
}

// Count-based CQB = |FP^2 - FN^2| (evaluation only; lower is better).
inline double eval_cqb(int64_t fp, int64_t fn) {
  double a = static_cast<double>(fp), b = static_cast<double>(fn);
  return std::abs(a * a - b * b);
}

// ---------------------------------------------------------------------------
// Concave components and Fenchel machinery
// ---------------------------------------------------------------------------

// Box (plus optional convex feasibility cut) on which a component is smooth
// and cleanly concave. Averages are clamped into the box before gradients are
// taken; the feasibility cut is advisory and used by conjugate oracles.
struct ComponentDomain {
  Vec2 lo{-6.0, -6.0};
  Vec2 hi{6.0, 6.0};
  std::function<bool(Vec2)> feasible;  // null means the whole box

  Vec2 clamp(Vec2 v) const {
    return {std::clamp(v.x, lo.x, hi.x), std::clamp(v.y, lo.y, hi.y)};
  }
  bool contains(Vec2 v) const {
    if (v.x < lo.x || v.x > hi.x || v.y < lo.y || v.y > hi.y) return false;
    return !feasible || feasible(v);
  }
};

// A concave scalar field on 2-vectors with its gradient (a supergradient at
// kinks) and domain. grad must match finite differences of eval at interior
// points: the dual updates below are exactly these gradients.
struct ConcaveComponent {
  std::string name;
  std::function<double(Vec2)> eval;
  std::function<Vec2(Vec2)> grad;
  ComponentDomain domain;
};

// Same shape, convex semantics (pseudo-measure denominators).
struct ConvexComponent {
  std::string name;
  std::function<double(Vec2)> eval;
  std::function<Vec2(Vec2)> grad;
};

// Follow-the-leader dual update: the argmin of <d, avg> - f*(d) over duals d
// is the gradient of f at avg (inverse-gradient rule for the concave Fenchel
// conjugate f*(u) = inf_x {<u, x> - f(x)}).
inline Vec2 dual_update(const ConcaveComponent& c, Vec2 avg) {
  return c.grad(c.domain.clamp(avg));
}

// f*(grad f(avg)) = <grad f(avg), avg> - f(avg): the conjugate evaluated at
// the dual the optimizer just chose (Fenchel-Young holds with equality there).
inline double conjugate_value_at_dual(const ConcaveComponent& c, Vec2 avg) {
  Vec2 v = c.domain.clamp(avg);
  return dot(c.grad(v), v) - c.eval(v);
}

namespace components {

inline ConcaveComponent affine(double cx, double cy, double c0 = 0.0,
                               std::string name = "affine") {
  ConcaveComponent c;
  c.name = std::move(name);
  c.eval = [=](Vec2 v) { return cx * v.x + cy * v.y + c0; };
  c.grad = [=](Vec2) { return Vec2{cx, cy}; };
  return c;
}

inline ConcaveComponent zero() { return affine(0.0, 0.0, 0.0, "zero"); }

// Balanced accuracy (x + y) / 2 with the constant dual (1/2, 1/2).
inline ConcaveComponent ba() {
  ConcaveComponent c;
  c.name = "ba";
  c.eval = [](Vec2 v) { return 0.5 * (v.x + v.y); };
  c.grad = [](Vec2) { return Vec2{0.5, 0.5}; };
  return c;
}

// Prior-free NSS 1 - (y - x)^2 whose gradient is the closed-form inner dual
// 2(z, -z), z = y - x. This is the Q-measure's inner quantification slot; the
// prior-weighted variant below is the evaluation metric.
inline ConcaveComponent nss_centered() {
  ConcaveComponent c;
  c.name = "nss-centered";
  c.eval = [](Vec2 v) {
    double z = v.y - v.x;
    return 1.0 - z * z;
  };
  c.grad = [](Vec2 v) {
    double z = v.y - v.x;
    return Vec2{2.0 * z, -2.0 * z};
  };
  return c;
}

// Negated squared mass difference -(p(1-x) - n(1-y))^2; adding 1 gives the
// prior-weighted NSS.
inline ConcaveComponent neg_sq_mass_diff(ClassPrior prior, double offset = 0.0,
                                         std::string name = "neg-sq-mass-diff") {
  ConcaveComponent c;
  c.name = std::move(name);
  c.eval = [=](Vec2 v) {
    double d = detail::mass_diff(v.x, v.y, prior);
    return offset - d * d;
  };
  c.grad = [=](Vec2 v) {
    double d = detail::mass_diff(v.x, v.y, prior);
    return Vec2{2.0 * prior.p * d, -2.0 * prior.n * d};
  };
  return c;
}

inline ConcaveComponent nss_mass(ClassPrior prior) {
  return neg_sq_mass_diff(prior, 1.0, "nss-mass");
}

namespace impl {
inline ComponentDomain positive_arg_domain(std::function<double(Vec2)> arg) {
  ComponentDomain d;
  d.feasible = [arg = std::move(arg)](Vec2 v) { return arg(v) >= 0.02; };
  return d;
}
}  // namespace impl

// log(p x + n (1 - y)): log predicted-positive mass as a function of the
// reward averages. Gradient (p, -n) / mass is the rate-space rendering of the
// count-space closed form 1/r1.
inline ConcaveComponent log_pos_mass(ClassPrior prior, double floor) {
  ConcaveComponent c;
  c.name = "log-pos-mass";
  auto arg = [prior](Vec2 v) { return prior.p * v.x + prior.n * (1.0 - v.y); };
  c.eval = [=](Vec2 v) { return std::log(std::max(arg(v), floor)); };
  c.grad = [=](Vec2 v) {
    double a = std::max(arg(v), floor);
    return Vec2{prior.p / a, -prior.n / a};
  };
  c.domain = impl::positive_arg_domain(arg);
  return c;
}

// log(n y + p (1 - x)): log predicted-negative mass.
inline ConcaveComponent log_neg_mass(ClassPrior prior, double floor) {
  ConcaveComponent c;
  c.name = "log-neg-mass";
  auto arg = [prior](Vec2 v) { return prior.n * v.y + prior.p * (1.0 - v.x); };
  c.eval = [=](Vec2 v) { return std::log(std::max(arg(v), floor)); };
  c.grad = [=](Vec2 v) {
    double a = std::max(arg(v), floor);
    return Vec2{-prior.p / a, prior.n / a};
  };
  c.domain = impl::positive_arg_domain(arg);
  return c;
}

// Full NegKLD objective as one component (BAKLD's quantification slot):
// p log(p x + n(1-y)) + n log(n y + p(1-x)).
inline ConcaveComponent negkld_objective(ClassPrior prior, double floor) {
  ConcaveComponent c;
  c.name = "negkld-objective";
  auto pos = [prior](Vec2 v) { return prior.p * v.x + prior.n * (1.0 - v.y); };
  auto neg = [prior](Vec2 v) { return prior.n * v.y + prior.p * (1.0 - v.x); };
  c.eval = [=](Vec2 v) {
    return prior.p * std::log(std::max(pos(v), floor)) +
           prior.n * std::log(std::max(neg(v), floor));
  };
  c.grad = [=](Vec2 v) {
    double a = std::max(pos(v), floor), b = std::max(neg(v), floor);
    return Vec2{prior.p * prior.p / a - prior.p * prior.n / b,
                -prior.p * prior.n / a + prior.n * prior.n / b};
  };
  c.domain.feasible = [=](Vec2 v) { return pos(v) >= 0.02 && neg(v) >= 0.02; };
  return c;
}

// Q-measure outer combiner (1+b^2) x y / (b^2 x + y) on the positive orthant,
// with gradient (1+b^2) (z^2, (1-z)^2 / b^2), z = y / (b^2 x + y).
inline ConcaveComponent qmeasure_outer(double beta, double floor = 1e-12) {
  ConcaveComponent c;
  c.name = "qmeasure-outer";
  double b2 = beta * beta;
  c.eval = [=](Vec2 v) {
    double x = std::max(v.x, floor), y = std::max(v.y, floor);
    return (1.0 + b2) * x * y / (b2 * x + y);
  };
  c.grad = [=](Vec2 v) {
    double x = std::max(v.x, floor), y = std::max(v.y, floor);
    double z = y / (b2 * x + y);
    return Vec2{(1.0 + b2) * z * z, (1.0 + b2) * (1.0 - z) * (1.0 - z) / b2};
  };
  c.domain.lo = {0.02, 0.02};
  return c;
}

// Negated smoothed KLD between the prior and the predicted mass induced by
// rates (x, y); BKReward's quantification slot.
inline ConcaveComponent neg_kld_smoothed(ClassPrior prior, double epsilon) {
  ConcaveComponent c;
  c.name = "neg-kld-smoothed";
  Vec2 prior_s = smooth_distribution({prior.p, prior.n}, epsilon);
  double scale = 1.0 / (1.0 + 2.0 * epsilon);
  double floor = epsilon / 2.0 * scale;
  auto smoothed_mass = [=](Vec2 v) -> Vec2 {
    Vec2 mass = detail::predicted_mass(v.x, v.y, prior);
    return {std::max((epsilon + mass.x) * scale, floor),
            std::max((epsilon + mass.y) * scale, floor)};
  };
  c.eval = [=](Vec2 v) {
    Vec2 m = smoothed_mass(v);
    return -(prior_s.x * std::log(prior_s.x / m.x) + prior_s.y * std::log(prior_s.y / m.y));
  };
  c.grad = [=](Vec2 v) {
    Vec2 m = smoothed_mass(v);
    double common = prior_s.x / m.x - prior_s.y / m.y;
    return Vec2{scale * prior.p * common, -scale * prior.n * common};
  };
  c.domain.feasible = [=](Vec2 v) {
    Vec2 mass = detail::predicted_mass(v.x, v.y, prior);
    return mass.x >= 0.02 && mass.y >= 0.02;
  };
  return c;
}

}  // namespace components

// ---------------------------------------------------------------------------
// Measure specifications
// ---------------------------------------------------------------------------

struct MeasureParams {
  double cweight = 0.5;   // BAKLD mixing weight C
  double qbeta = 1.0;     // Q-measure beta
  double epsilon = 0.005; // additive smoothing
};

// Nested concave measure Psi(zeta1(P, N), zeta2(P, N)).
struct NestedMeasureSpec {
  std::string name;
  ClassPrior prior{0.5, 0.5};
  ConcaveComponent psi;
  ConcaveComponent zeta1;
  ConcaveComponent zeta2;

  double objective(double P, double N) const {
    Vec2 v{P, N};
    return psi.eval({zeta1.eval(v), zeta2.eval(v)});
  }
};

inline NestedMeasureSpec make_negkld(ClassPrior prior, double epsilon) {
  NestedMeasureSpec s;
  s.name = "negkld";
  s.prior = prior;
  s.psi = components::affine(prior.p, prior.n, 0.0, "negkld-outer");
  s.zeta1 = components::log_pos_mass(prior, epsilon / 2.0);
  s.zeta2 = components::log_neg_mass(prior, epsilon / 2.0);
  return s;
}

inline NestedMeasureSpec make_qmeasure(ClassPrior prior, double beta) {
  NestedMeasureSpec s;
  s.name = "qmeasure";
  s.prior = prior;
  s.psi = components::qmeasure_outer(beta);
  s.zeta1 = components::ba();
  s.zeta2 = components::nss_centered();
  return s;
}

inline NestedMeasureSpec make_bakld(ClassPrior prior, double cweight, double epsilon) {
  if (cweight < 0.0 || cweight > 1.0)
    throw std::invalid_argument("bakld: cweight must lie in [0, 1]");
  NestedMeasureSpec s;
  s.name = "bakld";
  s.prior = prior;
  s.psi = components::affine(cweight, 1.0 - cweight, 0.0, "bakld-outer");
  s.zeta1 = components::ba();
  s.zeta2 = components::negkld_objective(prior, epsilon / 2.0);
  return s;
}

inline NestedMeasureSpec make_ba_only(ClassPrior prior) {
  NestedMeasureSpec s;
  s.name = "ba";
  s.prior = prior;
  s.psi = components::affine(1.0, 0.0, 0.0, "select-first");
  s.zeta1 = components::ba();
  s.zeta2 = components::zero();
  return s;
}

inline NestedMeasureSpec make_nss_only(ClassPrior prior) {
  NestedMeasureSpec s;
  s.name = "nss";
  s.prior = prior;
  s.psi = components::affine(1.0, 0.0, 0.0, "select-first");
  s.zeta1 = components::nss_mass(prior);
  s.zeta2 = components::zero();
  return s;
}

// Pseudo-concave measure pclass / pquant with denominator range [m, M].
struct PseudoMeasureSpec {
  std::string name;
  ClassPrior prior{0.5, 0.5};
  ConcaveComponent pclass;
  ConvexComponent pquant;
  double denom_min = 1.0;  // m
  double denom_max = 2.0;  // M
  // Valuation V(., v) = pclass - v * pquant as a nested concave measure, so
  // the inner optimization reuses the same machinery.
  std::function<NestedMeasureSpec(double)> valuation_nested;
};

namespace detail {
inline Vec2 clamp_rates01(double P, double N) {
  return {std::clamp(P, 0.0, 1.0), std::clamp(N, 0.0, 1.0)};
}
}  // namespace detail

inline double eval_pseudo(double P, double N, const PseudoMeasureSpec& spec) {
  Vec2 v = detail::clamp_rates01(P, N);
  return spec.pclass.eval(v) / spec.pquant.eval(v);
}

// V(P, N, v) = pclass - v * pquant. sign(V) = sign(pseudo value - v): the
// level set {P >= v} is exactly {V >= 0}.
inline double valuation(double P, double N, const PseudoMeasureSpec& spec, double level) {
  Vec2 v = detail::clamp_rates01(P, N);
  return spec.pclass.eval(v) - level * spec.pquant.eval(v);
}

namespace detail {
// Psi for a valuation at a fixed level: x + level * y - level, pairing the
// concave numerator with the negated convex denominator (offset so that
// zeta2 = -(pquant - base), base chosen with pquant = base + (-zeta2)).
inline NestedMeasureSpec valuation_spec(std::string name, ClassPrior prior, double level,
                                        ConcaveComponent pclass, ConcaveComponent neg_quant,
                                        double quant_base) {
  NestedMeasureSpec s;
  s.name = std::move(name);
  s.prior = prior;
  s.psi = components::affine(1.0, level, -level * quant_base, "valuation-outer");
  s.zeta1 = std::move(pclass);
  s.zeta2 = std::move(neg_quant);
  return s;
}
}  // namespace detail

// CQReward = BA / (2 - NSS) = BA / (1 + (p(1-P) - n(1-N))^2), denominator in
// [1, 2].
inline PseudoMeasureSpec make_cqreward(ClassPrior prior) {
  PseudoMeasureSpec s;
  s.name = "cqreward";
  s.prior = prior;
  s.pclass = components::ba();
  ConcaveComponent negq = components::neg_sq_mass_diff(prior);
  s.pquant.name = "one-plus-sq-mass-diff";
  s.pquant.eval = [negq](Vec2 v) { return 1.0 - negq.eval(v); };
  s.pquant.grad = [negq](Vec2 v) { return -1.0 * negq.grad(v); };
  s.denom_min = 1.0;
  s.denom_max = 2.0;
  s.valuation_nested = [prior](double level) {
    return detail::valuation_spec("cqreward-valuation", prior, level, components::ba(),
                                  components::neg_sq_mass_diff(prior), 1.0);
  };
  return s;
}

// BKReward = BA / (1 + KLD_smoothed(prior, predicted mass)), denominator in
// [1, 1 + log(1/eps) + 1].
inline PseudoMeasureSpec make_bkreward(ClassPrior prior, double epsilon) {
  PseudoMeasureSpec s;
  s.name = "bkreward";
  s.prior = prior;
  s.pclass = components::ba();
  ConcaveComponent negk = components::neg_kld_smoothed(prior, epsilon);
  s.pquant.name = "one-plus-kld";
  s.pquant.eval = [negk](Vec2 v) { return 1.0 - negk.eval(v); };
  s.pquant.grad = [negk](Vec2 v) { return -1.0 * negk.grad(v); };
  s.denom_min = 1.0;
  s.denom_max = 1.0 + std::log(1.0 / epsilon) + 1.0;
  s.valuation_nested = [prior, epsilon](double level) {
    return detail::valuation_spec("bkreward-valuation", prior, level, components::ba(),
                                  components::neg_kld_smoothed(prior, epsilon), 1.0);
  };
  return s;
}

}  // namespace quantopt
