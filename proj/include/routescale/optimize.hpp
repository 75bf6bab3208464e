/* Copyright 2026 The routescale Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

// Box-constrained limited-memory BFGS with central-difference gradients.
//
// A projected variant of L-BFGS-B: variables sitting on a bound with the
// gradient pushing outward are frozen for the iteration, the two-loop
// recursion runs on the remaining free variables, and the step is projected
// back into the box during an Armijo backtracking search.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace routescale {

struct Bounds {
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t size() const { return lower.size(); }

  double clamp(std::size_t i, double x) const { return std::clamp(x, lower[i], upper[i]); }

  std::vector<double> project(std::vector<double> x) const {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = clamp(i, x[i]);
    return x;
  }
};

struct MinimizeOptions {
  int max_iterations = 3000;
  int memory = 10;
  double gradient_tolerance = 1e-12;  // on the projected gradient, infinity norm
  double function_tolerance = 1e-15;  // relative decrease between iterations
  double fd_step = 1e-7;              // relative central-difference step
};

struct MinimizeResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

namespace detail {

inline double dot(const std::vector<double>& u, const std::vector<double>& v) {
  return std::inner_product(u.begin(), u.end(), v.begin(), 0.0);
}

template <class F>
std::vector<double> central_gradient(F& f, const std::vector<double>& x, double rel_step, int& evals) {
  std::vector<double> g(x.size());
  std::vector<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = rel_step * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
    evals += 2;
  }
  return g;
}

}  // namespace detail

/// Minimizes f over the box. The objective must accept points slightly
/// outside the box (the finite-difference probes straddle active bounds).
template <class F>
MinimizeResult minimize_bounded(F&& f, std::vector<double> x0, const Bounds& bounds,
                                const MinimizeOptions& opts = {}) {
  using detail::dot;
  const std::size_t n = x0.size();
  if (bounds.size() != n || bounds.upper.size() != n) {
    throw std::invalid_argument("minimize_bounded: bounds and start point differ in size");
  }

  MinimizeResult res;
  std::vector<double> x = bounds.project(std::move(x0));
  double fx = f(x);
  res.evaluations = 1;
  std::vector<double> g = detail::central_gradient(f, x, opts.fd_step, res.evaluations);

  std::deque<std::vector<double>> s_hist;
  std::deque<std::vector<double>> y_hist;

  auto projected_gradient = [&](const std::vector<double>& at, const std::vector<double>& grad) {
    std::vector<double> pg = grad;
    for (std::size_t i = 0; i < n; ++i) {
      if ((at[i] <= bounds.lower[i] && grad[i] > 0.0) || (at[i] >= bounds.upper[i] && grad[i] < 0.0)) {
        pg[i] = 0.0;
      }
    }
    return pg;
  };

  for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
    const std::vector<double> pg = projected_gradient(x, g);
    double pg_norm = 0.0;
    for (double v : pg) pg_norm = std::max(pg_norm, std::abs(v));
    if (!std::isfinite(fx) || pg_norm <= opts.gradient_tolerance) {
      res.converged = std::isfinite(fx);
      break;
    }

    // Two-loop recursion restricted to the free variables.
    std::vector<char> free(n);
    for (std::size_t i = 0; i < n; ++i) free[i] = pg[i] != 0.0;
    auto masked = [&](const std::vector<double>& v) {
      std::vector<double> out(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) out[i] = free[i] ? v[i] : 0.0;
      return out;
    };
    std::vector<double> q = masked(g);
    const std::size_t m = s_hist.size();
    std::vector<double> alpha(m);
    std::vector<double> rho(m);
    for (std::size_t j = m; j-- > 0;) {
      const auto sj = masked(s_hist[j]);
      const auto yj = masked(y_hist[j]);
      const double sy = dot(sj, yj);
      rho[j] = sy > 0.0 ? 1.0 / sy : 0.0;
      alpha[j] = rho[j] * dot(sj, q);
      for (std::size_t i = 0; i < n; ++i) q[i] -= alpha[j] * yj[i];
    }
    double gamma = 1.0;
    if (m > 0) {
      const auto s = masked(s_hist.back());
      const auto y = masked(y_hist.back());
      const double yy = dot(y, y);
      if (yy > 0.0 && dot(s, y) > 0.0) gamma = dot(s, y) / yy;
    }
    for (double& v : q) v *= gamma;
    for (std::size_t j = 0; j < m; ++j) {
      const auto sj = masked(s_hist[j]);
      const auto yj = masked(y_hist[j]);
      const double beta = rho[j] * dot(yj, q);
      for (std::size_t i = 0; i < n; ++i) q[i] += sj[i] * (alpha[j] - beta);
    }
    std::vector<double> dir(n);
    for (std::size_t i = 0; i < n; ++i) dir[i] = -q[i];

    if (m == 0 || dot(dir, pg) >= 0.0) {
      // Steepest descent, scaled so the first trial step is modest.
      const double scale = m == 0 ? std::min(1.0, 1.0 / pg_norm) : 1.0;
      for (std::size_t i = 0; i < n; ++i) dir[i] = -pg[i] * scale;
      s_hist.clear();
      y_hist.clear();
    }

    // Projected Armijo backtracking.
    double step = 1.0;
    std::vector<double> x_new(n);
    double f_new = fx;
    bool accepted = false;
    for (int trial = 0; trial < 60; ++trial) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = bounds.clamp(i, x[i] + step * dir[i]);
      f_new = f(x_new);
      ++res.evaluations;
      double decrease = 0.0;
      for (std::size_t i = 0; i < n; ++i) decrease += g[i] * (x_new[i] - x[i]);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * decrease && x_new != x) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!s_hist.empty()) {
        s_hist.clear();
        y_hist.clear();
        continue;
      }
      // No descent possible at floating-point resolution.
      res.converged = true;
      break;
    }

    std::vector<double> g_new = detail::central_gradient(f, x_new, opts.fd_step, res.evaluations);
    std::vector<double> s(n);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = x_new[i] - x[i];
      y[i] = g_new[i] - g[i];
    }
    if (dot(s, y) > 1e-16 * std::sqrt(dot(s, s) * dot(y, y))) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      if (static_cast<int>(s_hist.size()) > opts.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
      }
    }

    const double f_old = fx;
    x = x_new;
    fx = f_new;
    g = std::move(g_new);
    if (f_old - fx <= opts.function_tolerance * std::max({std::abs(f_old), std::abs(fx), 1e-300})) {
      res.converged = true;
      ++res.iterations;
      break;
    }
  }
  res.x = std::move(x);
  res.value = fx;
  return res;
}

}  // namespace routescale
