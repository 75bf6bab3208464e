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

// Least-squares fitting of the scaling-law families in log10 loss.
//
// Saturating forms are optimized over (a, b, c, d, log10 e_start,
// log10 e_max); e_start and e_max span several decades and behave far
// better on a log scale. The (F, B) law maps each record through the
// parameter/FLOP model of the standard architecture matching its N.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "routescale/arch.hpp"
#include "routescale/error.hpp"
#include "routescale/fixtures.hpp"
#include "routescale/law.hpp"
#include "routescale/optimize.hpp"
#include "routescale/parallel.hpp"
#include "routescale/random.hpp"
#include "routescale/records.hpp"

namespace routescale {

struct FitOptions {
  int starts = 64;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: hardware concurrency
  MinimizeOptions minimize;
  /// Additional start points appended after the generated ones.
  std::vector<LawCoefficients> warm_starts;
};

struct FitResult {
  LawCoefficients coefficients;
  double objective = 0.0;  // sum of squared log10 residuals
  double rmsle = 0.0;
  std::vector<double> residuals;  // predicted - observed, log10, per fitted record
  int starts_tried = 0;
  bool converged = false;
  std::uint64_t seed = 0;
};

inline int free_parameter_count(LawForm form) {
  switch (form) {
    case LawForm::Dense: return 2;
    case LawForm::Separable: return 3;
    case LawForm::Bilinear: return 4;
    case LawForm::Saturated:
    case LawForm::FlopParam: return 6;
  }
  return 0;
}

inline double rmsle(std::span<const double> predicted_log10, std::span<const double> observed_loss) {
  if (predicted_log10.size() != observed_loss.size()) {
    throw DataError("rmsle: " + std::to_string(predicted_log10.size()) + " predictions vs " +
                    std::to_string(observed_loss.size()) + " observations");
  }
  if (predicted_log10.empty()) throw DataError("rmsle: no observations");
  double sum = 0.0;
  for (std::size_t i = 0; i < observed_loss.size(); ++i) {
    if (!(observed_loss[i] > 0.0) || !std::isfinite(observed_loss[i])) {
      throw DataError("rmsle: observation " + std::to_string(i) + " is not positive");
    }
    const double r = predicted_log10[i] - std::log10(observed_loss[i]);
    sum += r * r;
  }
  return std::sqrt(sum / static_cast<double>(observed_loss.size()));
}

/// Law inputs (x1, x2) for a record: (N, E), or (F, P/FLOPs) for the (F, B) law.
inline std::pair<double, double> law_inputs(const RunRecord& rec, LawForm form) {
  if (form != LawForm::FlopParam) return {static_cast<double>(rec.n), static_cast<double>(rec.e)};
  const auto arch = standard_arch_for(static_cast<double>(rec.n));
  if (!arch) {
    throw DataError("(F, B) law: N=" + std::to_string(rec.n) + " matches no standard architecture within 5%");
  }
  const auto counts = param_flop_model(*arch, RoutingShape{rec.e, rec.k, rec.r});
  return {counts.f_tflops, counts.utilization()};
}

namespace detail {

struct FitPoint {
  double log_x1;
  double x2;
  double log_x2;
  double y;  // observed log10 loss
};

struct FitProblem {
  LawForm form;
  double e_min;
  std::vector<FitPoint> points;
};

inline FitProblem make_problem(std::span<const RunRecord> records, LawForm form) {
  FitProblem p{form, default_e_min(form), {}};
  for (const auto& rec : records) {
    rec.validate();
    if (form == LawForm::Dense && rec.e != 1) continue;
    const auto [x1, x2] = law_inputs(rec, form);
    p.points.push_back({std::log10(x1), x2, std::log10(x2), std::log10(rec.loss)});
  }
  return p;
}

inline void check_feasible(const FitProblem& p) {
  const int k = free_parameter_count(p.form);
  if (static_cast<int>(p.points.size()) < k + 2) {
    throw FitInfeasible(std::string(to_string(p.form)) + " fit needs at least " + std::to_string(k + 2) +
                        " records, got " + std::to_string(p.points.size()));
  }
  std::set<double> xs1;
  std::set<double> xs2;
  for (const auto& pt : p.points) {
    xs1.insert(pt.log_x1);
    xs2.insert(pt.x2);
  }
  if (xs1.size() < 2) throw FitInfeasible("fit needs at least two distinct N values");
  if (p.form != LawForm::Dense && xs2.size() < 2) throw FitInfeasible("fit needs at least two distinct E values");
}

// Parameter vectors: dense (a, d); separable (a, b, d); bilinear (a, b, c, d);
// saturating (a, b, c, d, log10 e_start, log10 e_max).
inline Bounds parameter_bounds(LawForm form) {
  switch (form) {
    case LawForm::Dense: return {{-1, 0}, {0, 3}};
    case LawForm::Separable: return {{-1, -1, 0}, {0, 0, 3}};
    case LawForm::Bilinear: return {{-1, -1, 0, 0}, {0, 0, 0.1, 3}};
    case LawForm::Saturated:
    case LawForm::FlopParam: return {{-1, -1, 0, 0, 0, std::log10(32.0)}, {0, 0, 0.1, 3, std::log10(16.0), 5}};
  }
  return {};
}

inline LawCoefficients unpack(LawForm form, const std::vector<double>& x) {
  switch (form) {
    case LawForm::Dense: return LawCoefficients::dense(x[0], x[1]);
    case LawForm::Separable: return LawCoefficients::separable(x[0], x[1], x[2]);
    case LawForm::Bilinear: return LawCoefficients::bilinear(x[0], x[1], x[2], x[3]);
    case LawForm::Saturated:
      return LawCoefficients::saturated(x[0], x[1], x[2], x[3], std::pow(10.0, x[4]), std::pow(10.0, x[5]));
    case LawForm::FlopParam:
      return LawCoefficients::flop_param(x[0], x[1], x[2], x[3], std::pow(10.0, x[4]), std::pow(10.0, x[5]));
  }
  return {};
}

/// Converts coefficients of any form into a start vector for `form`.
inline std::vector<double> pack(LawForm form, const LawCoefficients& k) {
  const double es = k.e_start.value_or(2.0);
  const double em = k.e_max.value_or(512.0);
  switch (form) {
    case LawForm::Dense: return {k.a, k.d};
    case LawForm::Separable: return {k.a, k.b, k.d};
    case LawForm::Bilinear: return {k.a, k.b, k.c, k.d};
    case LawForm::Saturated:
    case LawForm::FlopParam: return {k.a, k.b, k.c, k.d, std::log10(es), std::log10(em)};
  }
  return {};
}

inline double predict_point(LawForm form, double e_min, const std::vector<double>& x, const FitPoint& pt) {
  switch (form) {
    case LawForm::Dense: return x[0] * pt.log_x1 + x[1];
    case LawForm::Separable: return x[0] * pt.log_x1 + x[1] * pt.log_x2 + x[2];
    case LawForm::Bilinear: return x[0] * pt.log_x1 + x[1] * pt.log_x2 + x[2] * pt.log_x1 * pt.log_x2 + x[3];
    case LawForm::Saturated:
    case LawForm::FlopParam: {
      // Unvalidated transform: finite-difference probes may leave the box.
      const double inv_es = std::pow(10.0, -x[4]);
      const double inv_em = std::pow(10.0, -x[5]);
      const double ehat = 1.0 / (1.0 / (pt.x2 - e_min + 1.0 / (inv_es - inv_em)) + inv_em);
      const double le = std::log10(ehat);
      return x[0] * pt.log_x1 + x[1] * le + x[2] * pt.log_x1 * le + x[3];
    }
  }
  return 0.0;
}

inline double objective(const FitProblem& p, const std::vector<double>& x) {
  double sum = 0.0;
  for (const auto& pt : p.points) {
    const double r = predict_point(p.form, p.e_min, x, pt) - pt.y;
    sum += r * r;
  }
  return std::isfinite(sum) ? sum : std::numeric_limits<double>::infinity();
}

/// Ordinary least squares for the linear part, used as the first start.
inline std::vector<double> linear_start(const FitProblem& p) {
  const bool dense = p.form == LawForm::Dense;
  const bool separable = p.form == LawForm::Separable;
  const Eigen::Index cols = dense ? 2 : (separable ? 3 : 4);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(p.points.size()), cols);
  Eigen::VectorXd y(static_cast<Eigen::Index>(p.points.size()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const auto& pt = p.points[static_cast<std::size_t>(i)];
    y(i) = pt.y;
    if (dense) {
      X.row(i) << pt.log_x1, 1.0;
    } else if (separable) {
      X.row(i) << pt.log_x1, pt.log_x2, 1.0;
    } else {
      X.row(i) << pt.log_x1, pt.log_x2, pt.log_x1 * pt.log_x2, 1.0;
    }
  }
  const Eigen::VectorXd w = X.colPivHouseholderQr().solve(y);
  std::vector<double> out(w.data(), w.data() + w.size());
  if (is_saturating(p.form)) {
    out.push_back(std::log10(2.0));
    out.push_back(std::log10(512.0));
  }
  return out;
}

/// Seeded Latin-hypercube points over the bound box.
inline std::vector<std::vector<double>> latin_hypercube(const Bounds& box, int count, std::uint64_t seed) {
  std::vector<std::vector<double>> pts(static_cast<std::size_t>(std::max(count, 0)),
                                       std::vector<double>(box.size()));
  if (count <= 0) return pts;
  Rng rng(derive_seed(seed, 0x4c4853));
  for (std::size_t dim = 0; dim < box.size(); ++dim) {
    std::vector<std::size_t> strata(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < strata.size(); ++i) strata[i] = i;
    rng.shuffle(strata);
    for (std::size_t i = 0; i < strata.size(); ++i) {
      const double u = (static_cast<double>(strata[i]) + rng.uniform()) / count;
      pts[i][dim] = box.lower[dim] + u * (box.upper[dim] - box.lower[dim]);
    }
  }
  return pts;
}

inline FitResult fit_problem(const FitProblem& p, const FitOptions& opts) {
  check_feasible(p);
  if (opts.starts < 1) throw UsageError("fit needs at least one start");
  const Bounds box = parameter_bounds(p.form);

  std::vector<std::vector<double>> starts;
  starts.push_back(box.project(linear_start(p)));
  for (auto& s : latin_hypercube(box, opts.starts - 1, opts.seed)) starts.push_back(std::move(s));
  for (const auto& w : opts.warm_starts) starts.push_back(box.project(pack(p.form, w)));

  std::vector<MinimizeResult> runs(starts.size());
  auto f = [&p](const std::vector<double>& x) { return objective(p, x); };
  parallel_for(starts.size(), opts.threads, [&](std::size_t i) {
    runs[i] = minimize_bounded(f, starts[i], box, opts.minimize);
  });

  std::size_t best = 0;
  for (std::size_t i = 1; i < runs.size(); ++i) {
    if (runs[i].value < runs[best].value) best = i;
  }
  if (!std::isfinite(runs[best].value)) throw NumericError("fit: every start diverged");

  FitResult res;
  res.coefficients = unpack(p.form, runs[best].x);
  res.objective = runs[best].value;
  res.starts_tried = static_cast<int>(starts.size());
  res.converged = runs[best].converged;
  res.seed = opts.seed;
  res.residuals.reserve(p.points.size());
  double sum = 0.0;
  for (const auto& pt : p.points) {
    const double r = predict_point(p.form, p.e_min, runs[best].x, pt) - pt.y;
    res.residuals.push_back(r);
    sum += r * r;
  }
  res.rmsle = std::sqrt(sum / static_cast<double>(p.points.size()));
  return res;
}

}  // namespace detail

/// Fits `form` to the records. The dense form uses only the E = 1 records.
inline FitResult fit_law(std::span<const RunRecord> records, LawForm form, const FitOptions& opts = {}) {
  return detail::fit_problem(detail::make_problem(records, form), opts);
}

/// Held-out log10 error of each fold, in record order.
inline std::vector<double> loo_residuals(std::span<const RunRecord> records, LawForm form,
                                         const FitOptions& opts = {}) {
  const detail::FitProblem full = detail::make_problem(records, form);
  if (full.points.empty()) throw FitInfeasible("leave-one-out needs records");
  detail::check_feasible(detail::FitProblem{form, full.e_min, {full.points.begin() + 1, full.points.end()}});

  // The full-data optimum is a good start for every fold.
  const FitResult whole = detail::fit_problem(full, opts);
  FitOptions fold_opts = opts;
  fold_opts.threads = 1;
  fold_opts.warm_starts.push_back(whole.coefficients);

  std::vector<double> held_out(full.points.size());
  parallel_for(full.points.size(), opts.threads, [&](std::size_t i) {
    detail::FitProblem fold{form, full.e_min, {}};
    fold.points.reserve(full.points.size() - 1);
    for (std::size_t j = 0; j < full.points.size(); ++j) {
      if (j != i) fold.points.push_back(full.points[j]);
    }
    const FitResult r = detail::fit_problem(fold, fold_opts);
    const auto x = detail::pack(form, r.coefficients);
    held_out[i] = detail::predict_point(form, full.e_min, x, full.points[i]) - full.points[i].y;
  });
  return held_out;
}

inline double loo_rmsle(std::span<const RunRecord> records, LawForm form, const FitOptions& opts = {}) {
  const auto r = loo_residuals(records, form, opts);
  double sum = 0.0;
  for (double v : r) sum += v * v;
  return std::sqrt(sum / static_cast<double>(r.size()));
}

enum class SliceBy { N, E };

struct SliceFit {
  double slice_value;  // the fixed N (or E)
  double slope;        // b(N) for N slices, a(E) for E slices
  double intercept;
  std::size_t points;
};

struct SkippedSlice {
  double slice_value;
  std::string reason;
};

struct SliceTable {
  SliceBy by;
  std::vector<SliceFit> fits;
  std::vector<SkippedSlice> skipped;
};

/// Per-slice power laws: log10 L = slope * log10 x + intercept, where x is E
/// within a fixed-N slice and N within a fixed-E slice.
inline SliceTable per_slice_fits(std::span<const RunRecord> records, SliceBy by) {
  std::map<std::int64_t, std::vector<std::pair<double, double>>> groups;
  for (const auto& rec : records) {
    rec.validate();
    const std::int64_t key = by == SliceBy::N ? rec.n : rec.e;
    const double x = by == SliceBy::N ? static_cast<double>(rec.e) : static_cast<double>(rec.n);
    groups[key].emplace_back(std::log10(x), std::log10(rec.loss));
  }
  SliceTable out{by, {}, {}};
  for (const auto& [key, pts] : groups) {
    const double sv = static_cast<double>(key);
    if (pts.size() < 3) {
      out.skipped.push_back({sv, "slice has " + std::to_string(pts.size()) + " points, needs 3"});
      continue;
    }
    double mx = 0.0;
    double my = 0.0;
    for (const auto& [x, y] : pts) {
      mx += x;
      my += y;
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    double sxx = 0.0;
    double sxy = 0.0;
    for (const auto& [x, y] : pts) {
      sxx += (x - mx) * (x - mx);
      sxy += (x - mx) * (y - my);
    }
    if (!(sxx > 0.0)) {
      out.skipped.push_back({sv, "slice has a single distinct abscissa"});
      continue;
    }
    const double slope = sxy / sxx;
    out.fits.push_back({sv, slope, my - slope * mx, pts.size()});
  }
  return out;
}

/// Records drawn from a law on an (N, E) grid with Gaussian noise of
/// standard deviation sigma added in log10 loss.
inline std::vector<RunRecord> synthetic_records(const LawCoefficients& law, std::span<const std::int64_t> ns,
                                                std::span<const std::int64_t> es, double sigma,
                                                std::uint64_t seed, Technique technique = Technique::SBase) {
  Rng rng(seed);
  std::vector<RunRecord> out;
  out.reserve(ns.size() * es.size());
  for (auto n : ns) {
    for (auto e : es) {
      RunRecord rec;
      rec.technique = e == 1 ? Technique::Dense : technique;
      rec.n = n;
      rec.e = e;
      rec.tokens = 130'000'000'000;
      const auto [x1, x2] = law_inputs(rec, law.form);
      const double y = eval_law(law, x1, x2) + (sigma > 0.0 ? sigma * rng.normal() : 0.0);
      rec.loss = std::pow(10.0, y);
      out.push_back(rec);
    }
  }
  return out;
}

/// Dense sizes of the six standard architectures used for synthetic grids.
inline std::vector<std::int64_t> standard_grid_sizes() {
  std::vector<std::int64_t> out;
  for (const auto& r : table4()) {
    if (r.arch.name != "55M") out.push_back(r.arch.dense_params());
  }
  return out;
}

inline std::vector<std::int64_t> standard_grid_experts() { return {1, 2, 4, 8, 16, 32, 64, 128, 256, 512}; }

}  // namespace routescale
