#pragma once

// Projected limited-memory quasi-Newton minimizer over box constraints.
// Direction from the standard two-loop recursion, step by backtracking Armijo
// along the projected arc, curvature pairs skipped when ill-conditioned.
// Termination on the infinity norm of the projected gradient. Used by the
// gravity fitter (parameter boxes) and the weight solver (dual nonnegativity).

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

#include "netrecon/common.hpp"

namespace netrecon {

struct BoxLbfgsOptions {
  int memory = 8;
  int max_iters = 500;
  double pg_tol = 1e-8;
  int max_line_steps = 40;
};

struct BoxLbfgsReport {
  int iters = 0;
  int n_evals = 0;
  double f = 0;
  double pg_norm = 0;
  bool converged = false;
};

namespace detail {
inline void project_box(std::vector<double>& x, const std::vector<double>& lo,
                        const std::vector<double>& hi) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::min(std::max(x[i], lo[i]), hi[i]);
}

inline double projected_gradient_norm(const std::vector<double>& x, const std::vector<double>& g,
                                      const std::vector<double>& lo, const std::vector<double>& hi) {
  double n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double step = std::min(std::max(x[i] - g[i], lo[i]), hi[i]) - x[i];
    n = std::max(n, std::abs(step));
  }
  return n;
}
}  // namespace detail

// eval(x, grad) must fill grad and return f(x).
template <class Eval>
BoxLbfgsReport box_lbfgs_minimize(Eval&& eval, std::vector<double>& x,
                                  const std::vector<double>& lo, const std::vector<double>& hi,
                                  const BoxLbfgsOptions& opt = {}) {
  const std::size_t n = x.size();
  detail::project_box(x, lo, hi);
  std::vector<double> g(n), g_new(n), x_new(n), d(n);
  std::deque<std::vector<double>> S, Y;
  std::deque<double> rho;

  BoxLbfgsReport rep;
  double f = eval(x, g);
  ++rep.n_evals;
  rep.f = f;

  for (int it = 0; it < opt.max_iters; ++it) {
    rep.iters = it;
    rep.pg_norm = detail::projected_gradient_norm(x, g, lo, hi);
    if (rep.pg_norm <= opt.pg_tol) {
      rep.converged = true;
      return rep;
    }

    // Two-loop recursion for d = -H g.
    d.assign(g.begin(), g.end());
    std::vector<double> alpha(S.size());
    for (std::size_t h = S.size(); h-- > 0;) {
      double a = 0;
      for (std::size_t i = 0; i < n; ++i) a += S[h][i] * d[i];
      a *= rho[h];
      alpha[h] = a;
      for (std::size_t i = 0; i < n; ++i) d[i] -= a * Y[h][i];
    }
    if (!S.empty()) {
      double sy = 0, yy = 0;
      for (std::size_t i = 0; i < n; ++i) {
        sy += S.back()[i] * Y.back()[i];
        yy += Y.back()[i] * Y.back()[i];
      }
      double scale = yy > 0 ? sy / yy : 1.0;
      for (auto& v : d) v *= scale;
    }
    for (std::size_t h = 0; h < S.size(); ++h) {
      double b = 0;
      for (std::size_t i = 0; i < n; ++i) b += Y[h][i] * d[i];
      b *= rho[h];
      for (std::size_t i = 0; i < n; ++i) d[i] += S[h][i] * (alpha[h] - b);
    }
    for (auto& v : d) v = -v;

    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      if (attempt == 1)
        for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];  // steepest-descent fallback
      double step = 1.0;
      for (int ls = 0; ls < opt.max_line_steps; ++ls, step *= 0.5) {
        for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] + step * d[i];
        detail::project_box(x_new, lo, hi);
        double gdx = 0, moved = 0;
        for (std::size_t i = 0; i < n; ++i) {
          gdx += g[i] * (x_new[i] - x[i]);
          moved = std::max(moved, std::abs(x_new[i] - x[i]));
        }
        if (moved == 0) break;
        if (gdx > 0) continue;  // projected step not a descent direction yet
        double f_new = eval(x_new, g_new);
        ++rep.n_evals;
        if (f_new <= f + 1e-4 * gdx) {
          std::vector<double> s(n), y(n);
          double sy = 0, ss = 0, yy = 0;
          for (std::size_t i = 0; i < n; ++i) {
            s[i] = x_new[i] - x[i];
            y[i] = g_new[i] - g[i];
            sy += s[i] * y[i];
            ss += s[i] * s[i];
            yy += y[i] * y[i];
          }
          if (sy > 1e-12 * std::sqrt(ss * yy)) {
            S.push_back(std::move(s));
            Y.push_back(std::move(y));
            rho.push_back(1.0 / sy);
            if (static_cast<int>(S.size()) > opt.memory) {
              S.pop_front();
              Y.pop_front();
              rho.pop_front();
            }
          }
          x = x_new;
          g = g_new;
          f = f_new;
          rep.f = f;
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) {
      // No progress possible at this scale; report the projected gradient.
      rep.pg_norm = detail::projected_gradient_norm(x, g, lo, hi);
      rep.converged = rep.pg_norm <= opt.pg_tol;
      return rep;
    }
  }
  rep.pg_norm = detail::projected_gradient_norm(x, g, lo, hi);
  rep.converged = rep.pg_norm <= opt.pg_tol;
  return rep;
}

}  // namespace netrecon
