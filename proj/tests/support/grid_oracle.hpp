#pragma once

// Test-side oracles for the Fenchel machinery, independent of the library's
// gradient formulas: the concave conjugate f*(u) = inf_x {<u,x> - f(x)} is
// computed by direct minimization over the component's feasible box (lattice
// scan plus compass refinement; the objective is convex there), and the
// follow-the-leader dual argmin_d {<d,avg> - f*(d)} by a coarse-to-fine
// 2-D lattice over duals. Only component evals are consulted for values;
// gradients are used at most to size search boxes.

#include <cmath>
#include <limits>
#include <vector>

#include "quantopt/measures.hpp"

namespace testsupport {

using quantopt::ConcaveComponent;
using quantopt::Vec2;

inline bool feasible_point(const ConcaveComponent& c, Vec2 v) {
  return c.domain.contains(v);
}

// inf over the feasible box of <u,x> - f(x). The integrand is convex on the
// feasible set (f concave), so lattice + compass search finds the global
// minimum; `step_tol` bounds the final compass step.
inline double conjugate_grid(const ConcaveComponent& c, Vec2 u, double step_tol = 1e-7) {
  auto g = [&](Vec2 x) { return u.x * x.x + u.y * x.y - c.eval(x); };

  const Vec2 lo = c.domain.lo, hi = c.domain.hi;
  const int kLattice = 48;
  Vec2 best{};
  double best_val = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kLattice; ++i) {
    for (int j = 0; j <= kLattice; ++j) {
      Vec2 x{lo.x + (hi.x - lo.x) * i / kLattice, lo.y + (hi.y - lo.y) * j / kLattice};
      if (!feasible_point(c, x)) continue;
      double v = g(x);
      if (v < best_val) {
        best_val = v;
        best = x;
      }
    }
  }

  double step = std::max(hi.x - lo.x, hi.y - lo.y) / kLattice;
  while (step > step_tol) {
    bool moved = false;
    const Vec2 probes[8] = {{step, 0.0},  {-step, 0.0}, {0.0, step},   {0.0, -step},
                            {step, step}, {step, -step}, {-step, step}, {-step, -step}};
    for (const Vec2& d : probes) {
      Vec2 x = c.domain.clamp({best.x + d.x, best.y + d.y});
      if (!feasible_point(c, x)) continue;
      double v = g(x);
      if (v < best_val - 1e-15) {
        best_val = v;
        best = x;
        moved = true;
      }
    }
    if (!moved) step *= 0.5;
  }
  return best_val;
}

// Scan a lattice of duals for the minimizer of h(d) = <d,avg> - f*(d),
// refining around the incumbent until the lattice spacing drops below
// `resolution`. h is convex in d, so the incumbent basin contains the global
// minimizer once the lattice is fine enough.
inline Vec2 ftl_dual_grid(const ConcaveComponent& c, Vec2 avg, Vec2 d_lo, Vec2 d_hi,
                          double resolution = 1e-3, double conj_tol = 1e-6) {
  auto h = [&](Vec2 d) { return d.x * avg.x + d.y * avg.y - conjugate_grid(c, d, conj_tol); };

  const int kCoarse = 24;
  Vec2 best{};
  double best_val = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kCoarse; ++i) {
    for (int j = 0; j <= kCoarse; ++j) {
      Vec2 d{d_lo.x + (d_hi.x - d_lo.x) * i / kCoarse, d_lo.y + (d_hi.y - d_lo.y) * j / kCoarse};
      double v = h(d);
      if (v < best_val) {
        best_val = v;
        best = d;
      }
    }
  }

  double sx = (d_hi.x - d_lo.x) / kCoarse;
  double sy = (d_hi.y - d_lo.y) / kCoarse;
  const int kHalf = 3;  // refine on a 7x7 patch around the incumbent
  while (sx > resolution || sy > resolution) {
    sx /= 3.0;
    sy /= 3.0;
    Vec2 center = best;
    for (int i = -kHalf; i <= kHalf; ++i) {
      for (int j = -kHalf; j <= kHalf; ++j) {
        if (i == 0 && j == 0) continue;
        Vec2 d{center.x + sx * i, center.y + sy * j};
        double v = h(d);
        if (v < best_val) {
          best_val = v;
          best = d;
        }
      }
    }
  }
  return best;
}

// Dual search box: the span of the component's gradients over its feasible
// box, generously padded. Only the box comes from grad; argmin values do not.
inline void dual_box(const ConcaveComponent& c, Vec2& d_lo, Vec2& d_hi) {
  const int kLattice = 25;
  const Vec2 lo = c.domain.lo, hi = c.domain.hi;
  d_lo = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  d_hi = {-d_lo.x, -d_lo.y};
  for (int i = 0; i <= kLattice; ++i) {
    for (int j = 0; j <= kLattice; ++j) {
      Vec2 x{lo.x + (hi.x - lo.x) * i / kLattice, lo.y + (hi.y - lo.y) * j / kLattice};
      if (!feasible_point(c, x)) continue;
      Vec2 g = c.grad(x);
      d_lo = {std::min(d_lo.x, g.x), std::min(d_lo.y, g.y)};
      d_hi = {std::max(d_hi.x, g.x), std::max(d_hi.y, g.y)};
    }
  }
  double pad_x = 0.5 * (d_hi.x - d_lo.x) + 1.0;
  double pad_y = 0.5 * (d_hi.y - d_lo.y) + 1.0;
  d_lo = {d_lo.x - pad_x, d_lo.y - pad_y};
  d_hi = {d_hi.x + pad_x, d_hi.y + pad_y};
}

}  // namespace testsupport
