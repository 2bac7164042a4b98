#pragma once

// Derivative-free bound-constrained minimization with quadratic
// interpolation models in a trust region (BOBYQA family).
//
// Parameters are mapped to the unit box via the bounds, so the trust radius
// and tolerances are in fractions of the bound widths. The model interpolates
// 2n+1 points; each refit changes the Hessian by the least Frobenius norm
// that restores interpolation. Steps minimize the model over the
// intersection of the (infinity-norm) trust region and the bounds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "symplane/common.hpp"

namespace symplane {

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

struct Bounds {
  VecX lower;
  VecX upper;

  void validate() const {
    if (lower.size() != upper.size() || lower.size() == 0)
      throw ValidationError("bounds: lower/upper must be non-empty and equally sized");
    for (Eigen::Index i = 0; i < lower.size(); ++i)
      if (!(lower[i] < upper[i])) throw ValidationError("bounds: lower must be < upper in every coordinate");
  }
  bool contains(const VecX& x) const {
    return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
  }
};

enum class Termination { MaxIterations, StepTolerance, ValueTolerance };

inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::MaxIterations: return "max-iterations";
    case Termination::StepTolerance: return "step-tolerance";
    case Termination::ValueTolerance: return "value-tolerance";
  }
  return "?";
}

struct TraceEntry {
  int iteration = 0;  // 0 for the initial design
  VecX x;
  double value = 0.0;
};

struct OptimizerTrace {
  std::vector<TraceEntry> entries;
  VecX best_x;
  double best_value = std::numeric_limits<double>::infinity();
  Termination termination = Termination::MaxIterations;

  /// Evaluations after the initial design.
  int iterations() const {
    int n = 0;
    for (const auto& e : entries)
      if (e.iteration > 0) ++n;
    return n;
  }
};

/// CSV with header `iteration,x0,...,x{n-1},value`.
inline void write_trace_csv(std::ostream& os, const OptimizerTrace& trace) {
  const Eigen::Index n = trace.best_x.size();
  os << "iteration";
  for (Eigen::Index i = 0; i < n; ++i) os << ",x" << i;
  os << ",value\n";
  char buf[64];
  for (const auto& e : trace.entries) {
    os << e.iteration;
    for (Eigen::Index i = 0; i < n; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", e.x[i]);
      os << ',' << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g", e.value);
    os << ',' << buf << '\n';
  }
}

struct OptimizerConfig {
  int max_iterations = 100;
  /// Final trust radius, in units of the bound widths.
  double step_tol = 1e-4;
  /// Stop when all interpolation values agree within this.
  double value_tol = 1e-10;
  /// Initial trust radius, in units of the bound widths.
  double initial_radius = 0.1;
  std::uint64_t seed = 0;
};

/// The objective. Throwing symplane::Error or returning a non-finite value
/// marks the point as infeasible.
using ObjectiveFn = std::function<double(const VecX&)>;

namespace detail {

struct Quadratic {
  // q(s) = c + g.s + 0.5 s'Hs
  double c = 0.0;
  VecX g;
  MatX h;

  double operator()(const VecX& s) const { return c + g.dot(s) + 0.5 * s.dot(h * s); }
  VecX gradient(const VecX& s) const { return g + h * s; }
};

/// Minimizes q over the box [lo, hi] (which contains 0) by exact
/// coordinate descent from several starts. Returns the best point found.
inline VecX minimize_box_quadratic(const Quadratic& q, const VecX& lo, const VecX& hi) {
  const Eigen::Index n = q.g.size();
  auto descend = [&](VecX s) -> VecX {
    for (int sweep = 0; sweep < 100; ++sweep) {
      double moved = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        // q along coordinate i: 0.5 a t^2 + b t, t = new - old
        double a = q.h(i, i);
        double b = q.g[i] + q.h.row(i).dot(s);
        double tlo = lo[i] - s[i];
        double thi = hi[i] - s[i];
        double t;
        if (a > 1e-14) {
          t = std::clamp(-b / a, tlo, thi);
        } else {
          double qlo = 0.5 * a * tlo * tlo + b * tlo;
          double qhi = 0.5 * a * thi * thi + b * thi;
          t = qlo < qhi ? tlo : thi;
          if (std::min(qlo, qhi) >= 0.0) t = 0.0;
        }
        s[i] += t;
        moved = std::max(moved, std::abs(t));
      }
      if (moved < 1e-12) break;
    }
    return s;
  };

  std::vector<VecX> starts;
  starts.push_back(VecX::Zero(n));
  if (q.g.norm() > 0.0) {
    VecX sd = -q.g / q.g.cwiseAbs().maxCoeff();
    starts.push_back(sd.cwiseMax(lo).cwiseMin(hi));
  }
  Eigen::LDLT<MatX> ldlt(q.h);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    VecX newton = ldlt.solve(-q.g);
    if (newton.allFinite()) starts.push_back(newton.cwiseMax(lo).cwiseMin(hi));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    VecX e = VecX::Zero(n);
    e[i] = hi[i];
    starts.push_back(e);
    e[i] = lo[i];
    starts.push_back(e);
  }

  VecX best = VecX::Zero(n);
  double best_val = q(best);
  for (const auto& s0 : starts) {
    VecX s = descend(s0);
    double v = q(s);
    if (v < best_val - 1e-15) {
      best_val = v;
      best = s;
    }
  }
  return best;
}

}  // namespace detail

/// Minimizes f over the box. Deterministic given (x0, cfg).
inline OptimizerTrace minimize(const ObjectiveFn& f, const VecX& x0, const Bounds& bounds,
                               const OptimizerConfig& cfg = {}) {
  bounds.validate();
  const Eigen::Index n = x0.size();
  if (n != bounds.lower.size()) throw ValidationError("minimize: x0 and bounds differ in dimension");
  if (!bounds.contains(x0)) throw ValidationError("minimize: x0 lies outside the bounds");
  if (cfg.max_iterations < 1) throw ValidationError("minimize: max_iterations must be >= 1");

  const VecX width = bounds.upper - bounds.lower;
  const double inf = std::numeric_limits<double>::infinity();

  auto to_x = [&](const VecX& u) -> VecX {
    VecX x = bounds.lower + u.cwiseProduct(width);
    return x.cwiseMax(bounds.lower).cwiseMin(bounds.upper);
  };
  auto clamp_u = [](const VecX& u) -> VecX { return u.cwiseMax(0.0).cwiseMin(1.0); };

  OptimizerTrace trace;
  int iteration = 0;
  auto evaluate = [&](const VecX& u, bool initial, const VecX* exact = nullptr) {
    VecX x = exact ? *exact : to_x(u);
    double v;
    try {
      v = f(x);
    } catch (const Error&) {
      v = inf;
    }
    if (!std::isfinite(v)) v = inf;
    if (!initial) ++iteration;
    trace.entries.push_back({initial ? 0 : iteration, x, v});
    if (v < trace.best_value) {
      trace.best_value = v;
      trace.best_x = x;
    }
    return v;
  };

  // Initial design: x0 and two points per coordinate.
  const int m = static_cast<int>(2 * n + 1);
  double delta = std::clamp(cfg.initial_radius, 1e-6, 0.25);
  std::vector<VecX> pts;
  std::vector<double> vals;
  VecX u0 = clamp_u((x0 - bounds.lower).cwiseQuotient(width));
  {
    double v0 = evaluate(u0, true, &x0);
    if (!std::isfinite(v0)) {
      // Re-run once more to surface the actual error to the caller.
      f(x0);
      throw Error("minimize: objective is not finite at x0");
    }
    pts.push_back(u0);
    vals.push_back(v0);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    double s1 = delta, s2 = -delta;
    if (u0[i] + delta > 1.0) {
      s1 = -delta;
      s2 = -2.0 * delta;
    } else if (u0[i] - delta < 0.0) {
      s1 = delta;
      s2 = 2.0 * delta;
    }
    for (double s : {s1, s2}) {
      double step = s;
      double v = inf;
      VecX u;
      for (int attempt = 0; attempt < 6; ++attempt) {
        u = u0;
        u[i] = std::clamp(u0[i] + step, 0.0, 1.0);
        v = evaluate(u, true);
        if (std::isfinite(v)) break;
        step *= 0.5;
      }
      if (!std::isfinite(v)) throw Error("minimize: objective undefined around x0");
      pts.push_back(u);
      vals.push_back(v);
    }
  }

  auto best_index = [&] {
    int b = 0;
    for (int i = 1; i < m; ++i)
      if (vals[i] < vals[b]) b = i;
    return b;
  };

  MatX hess = MatX::Zero(n, n);  // model Hessian in u coordinates
  std::mt19937_64 rng(cfg.seed);

  // Fits the least-Frobenius-change model around base point `kb`, in
  // coordinates scaled by delta. Returns false when the interpolation
  // system is singular. On success fills the model and the KKT inverse.
  struct Fit {
    detail::Quadratic model;  // in scaled coordinates s_hat = (u - base)/delta
    MatX w_inv;
    std::vector<VecX> s_hat;
  };
  auto fit = [&](int kb, Fit& out) {
    const VecX& base = pts[kb];
    out.s_hat.assign(m, VecX());
    for (int i = 0; i < m; ++i) out.s_hat[i] = (pts[i] - base) / delta;
    const int dim = m + static_cast<int>(n) + 1;
    MatX w = MatX::Zero(dim, dim);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        double d = out.s_hat[i].dot(out.s_hat[j]);
        w(i, j) = 0.5 * d * d;
      }
      w(i, m) = w(m, i) = 1.0;
      for (Eigen::Index k = 0; k < n; ++k) w(i, m + 1 + k) = w(m + 1 + k, i) = out.s_hat[i][k];
    }
    Eigen::FullPivLU<MatX> lu(w);
    if (!lu.isInvertible()) return false;
    out.w_inv = lu.inverse();
    if (!out.w_inv.allFinite()) return false;

    MatX h_scaled = hess * delta * delta;
    VecX rhs = VecX::Zero(dim);
    for (int i = 0; i < m; ++i) rhs[i] = (vals[i] - vals[kb]) - 0.5 * out.s_hat[i].dot(h_scaled * out.s_hat[i]);
    VecX sol = out.w_inv * rhs;
    out.model.c = vals[kb] + sol[m];
    out.model.g = sol.segment(m + 1, n);
    out.model.h = h_scaled;
    for (int j = 0; j < m; ++j) out.model.h += sol[j] * out.s_hat[j] * out.s_hat[j].transpose();
    return out.model.h.allFinite() && out.model.g.allFinite();
  };

  auto lagrange = [&](const Fit& ft, int t) {
    detail::Quadratic l;
    l.c = ft.w_inv(m, t);
    l.g = ft.w_inv.block(m + 1, t, n, 1);
    l.h = MatX::Zero(n, n);
    for (int j = 0; j < m; ++j) l.h += ft.w_inv(j, t) * ft.s_hat[j] * ft.s_hat[j].transpose();
    return l;
  };

  auto box_scaled = [&](int kb, VecX& lo, VecX& hi) {
    lo.resize(n);
    hi.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      lo[i] = std::max(-1.0, (0.0 - pts[kb][i]) / delta);
      hi[i] = std::min(1.0, (1.0 - pts[kb][i]) / delta);
    }
  };

  // Replace the point that most needs it with u_new, keeping the best point.
  auto replace_point = [&](const Fit& ft, int kb, const VecX& s_new_hat, const VecX& u_new, double v_new) {
    int t_best = -1;
    double score_best = -1.0;
    const bool improves = v_new < vals[kb];
    for (int t = 0; t < m; ++t) {
      if (t == kb && !improves) continue;
      double lt = std::abs(lagrange(ft, t)(s_new_hat));
      double dist = (pts[t] - pts[kb]).cwiseAbs().maxCoeff() / delta;
      double score = lt * std::max(1.0, dist * dist * dist);
      if (score > score_best) {
        score_best = score;
        t_best = t;
      }
    }
    if (t_best < 0) return;
    pts[t_best] = u_new;
    vals[t_best] = v_new;
  };

  bool geometry_pending = false;
  trace.termination = Termination::MaxIterations;

  while (iteration < cfg.max_iterations) {
    if (delta < cfg.step_tol) {
      trace.termination = Termination::StepTolerance;
      break;
    }
    {
      auto [lo_it, hi_it] = std::minmax_element(vals.begin(), vals.end());
      if (*hi_it - *lo_it < cfg.value_tol) {
        trace.termination = Termination::ValueTolerance;
        break;
      }
    }

    const int kb = best_index();
    Fit ft;
    bool ok = fit(kb, ft);
    if (ok) hess = ft.model.h / (delta * delta);

    // Farthest interpolation point from the base, in trust-radius units.
    int far = -1;
    double far_dist = 0.0;
    for (int t = 0; t < m; ++t) {
      if (t == kb) continue;
      double d = (pts[t] - pts[kb]).cwiseAbs().maxCoeff() / delta;
      if (d > far_dist) {
        far_dist = d;
        far = t;
      }
    }

    VecX lo, hi;
    box_scaled(kb, lo, hi);

    if (!ok || geometry_pending) {
      geometry_pending = false;
      if (!ok || far_dist > 2.0) {
        // Geometry step: move the worst-placed point to where its Lagrange
        // function is largest (or to a random box point if the system is
        // singular), restoring a well-poised interpolation set.
        int t = far >= 0 ? far : (kb == 0 ? 1 : 0);
        VecX s_hat;
        if (ok) {
          detail::Quadratic lt = lagrange(ft, t);
          detail::Quadratic neg = lt;
          neg.c = -neg.c;
          neg.g = -neg.g;
          neg.h = -neg.h;
          VecX a = detail::minimize_box_quadratic(lt, lo, hi);
          VecX b = detail::minimize_box_quadratic(neg, lo, hi);
          s_hat = std::abs(lt(a)) > std::abs(lt(b)) ? a : b;
        } else {
          std::uniform_real_distribution<double> uni(0.0, 1.0);
          s_hat.resize(n);
          for (Eigen::Index i = 0; i < n; ++i) s_hat[i] = lo[i] + (hi[i] - lo[i]) * uni(rng);
        }
        VecX u_new = clamp_u(pts[kb] + delta * s_hat);
        double v = evaluate(u_new, false);
        if (std::isfinite(v)) {
          pts[t] = u_new;
          vals[t] = v;
        } else {
          delta *= 0.5;
        }
        continue;
      }
    }

    VecX s_hat = detail::minimize_box_quadratic(ft.model, lo, hi);
    const double pred = ft.model.c - ft.model(s_hat);
    const double step_norm = s_hat.cwiseAbs().maxCoeff();

    if (!(pred > 0.0) || step_norm < 0.1) {
      // The model sees no useful descent inside this radius.
      if (far_dist > 2.0) {
        geometry_pending = true;
      } else {
        delta *= 0.5;
      }
      continue;
    }

    VecX u_new = clamp_u(pts[kb] + delta * s_hat);
    double v = evaluate(u_new, false);
    if (!std::isfinite(v)) {
      delta *= 0.5;
      continue;
    }
    const double ratio = (vals[kb] - v) / pred;
    replace_point(ft, kb, s_hat, u_new, v);
    if (ratio < 0.1) {
      if (far_dist > 2.0) geometry_pending = true;
      else delta *= 0.5;
    } else if (ratio > 0.7 && step_norm > 0.9) {
      delta = std::min(2.0 * delta, 0.5);
    }
  }

  return trace;
}

}  // namespace symplane
