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

// Scaling-law evaluation for routed language models.
//
// Every law predicts log10 of the converged validation loss:
//
//   log10 L = a*log10(x1) + b*log10(x2h) + c*log10(x1)*log10(x2h) + d
//
// where x1 is the dense model size N (or inference TeraFLOPs F) and x2h is the
// expert count E (or utilization ratio B), optionally passed through the
// saturating transform. All logarithms in this header are base 10.
//
// Sign convention: fitted coefficients keep their natural signs, so a and b
// are negative, c is positive and d is positive. Slopes returned by slopes()
// are the signed derivatives d log10 L / d log10 x.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "routescale/error.hpp"

namespace routescale {

enum class LawForm { Dense, Separable, Bilinear, Saturated, FlopParam };

inline std::string_view to_string(LawForm form) {
  switch (form) {
    case LawForm::Dense: return "dense";
    case LawForm::Separable: return "separable";
    case LawForm::Bilinear: return "bilinear";
    case LawForm::Saturated: return "saturated";
    case LawForm::FlopParam: return "fb";
  }
  return "?";
}

inline LawForm parse_law_form(std::string_view name) {
  if (name == "dense") return LawForm::Dense;
  if (name == "separable") return LawForm::Separable;
  if (name == "bilinear") return LawForm::Bilinear;
  if (name == "saturated") return LawForm::Saturated;
  if (name == "fb" || name == "flop-param" || name == "flopparam") return LawForm::FlopParam;
  throw UsageError("unknown law form '" + std::string(name) +
                   "' (expected dense, separable, bilinear, saturated or fb)");
}

inline bool is_saturating(LawForm form) {
  return form == LawForm::Saturated || form == LawForm::FlopParam;
}

/// Lower bound of the second law variable: E >= 1, or B >= 1/2 for the
/// (F, B) law where a dense model has B = P / (2N) = 1/2.
inline double default_e_min(LawForm form) { return form == LawForm::FlopParam ? 0.5 : 1.0; }

/// Bounded, strictly increasing map E -> Ehat with Ehat(e_min) = e_start and
/// Ehat -> e_max as E -> infinity.
struct SaturationTransform {
  double e_min = 1.0;
  double e_start = 1.0;
  double e_max = std::numeric_limits<double>::infinity();

  void validate() const {
    if (!(e_start < e_max)) {
      throw InvalidCoefficients("saturation requires e_start < e_max (got e_start=" +
                                std::to_string(e_start) + ", e_max=" + std::to_string(e_max) + ")");
    }
    if (!(e_min <= e_start)) {
      throw InvalidCoefficients("saturation requires e_min <= e_start");
    }
    if (!(e_min > 0.0)) throw InvalidCoefficients("saturation requires e_min > 0");
  }

  /// Offset (1/e_start - 1/e_max)^-1 placed at E = e_min.
  double offset() const { return 1.0 / (1.0 / e_start - 1.0 / e_max); }
};

inline double saturate(double e, const SaturationTransform& t) {
  t.validate();
  if (!(e >= t.e_min)) {
    throw DomainError("saturate: E=" + std::to_string(e) + " below e_min=" + std::to_string(t.e_min));
  }
  if (std::isinf(e)) return t.e_max;
  return 1.0 / (1.0 / (e - t.e_min + t.offset()) + 1.0 / t.e_max);
}

struct LawCoefficients {
  LawForm form = LawForm::Bilinear;
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;
  std::optional<double> e_start;
  std::optional<double> e_max;

  static LawCoefficients dense(double a, double d) { return {LawForm::Dense, a, 0.0, 0.0, d, {}, {}}; }
  static LawCoefficients separable(double a, double b, double d) {
    return {LawForm::Separable, a, b, 0.0, d, {}, {}};
  }
  static LawCoefficients bilinear(double a, double b, double c, double d) {
    return {LawForm::Bilinear, a, b, c, d, {}, {}};
  }
  static LawCoefficients saturated(double a, double b, double c, double d, double e_start, double e_max) {
    return {LawForm::Saturated, a, b, c, d, e_start, e_max};
  }
  static LawCoefficients flop_param(double a, double b, double c, double d, double e_start, double e_max) {
    return {LawForm::FlopParam, a, b, c, d, e_start, e_max};
  }

  double e_min() const { return default_e_min(form); }

  void validate() const {
    for (double v : {a, b, c, d}) {
      if (!std::isfinite(v)) throw InvalidCoefficients("non-finite coefficient");
    }
    const bool has_sat = e_start.has_value() || e_max.has_value();
    switch (form) {
      case LawForm::Dense:
        if (b != 0.0 || c != 0.0) throw InvalidCoefficients("dense law has no b or c term");
        if (has_sat) throw InvalidCoefficients("dense law has no saturation fields");
        break;
      case LawForm::Separable:
        if (c != 0.0) throw InvalidCoefficients("separable law has no interaction term c");
        if (has_sat) throw InvalidCoefficients("separable law has no saturation fields");
        break;
      case LawForm::Bilinear:
        if (has_sat) throw InvalidCoefficients("bilinear law has no saturation fields");
        break;
      case LawForm::Saturated:
      case LawForm::FlopParam:
        if (!e_start || !e_max) {
          throw InvalidCoefficients(std::string(to_string(form)) + " law requires e_start and e_max");
        }
        transform().validate();
        break;
    }
  }

  SaturationTransform transform() const {
    if (!e_start || !e_max) throw InvalidCoefficients("law has no saturating transform");
    return {e_min(), *e_start, *e_max};
  }

  bool operator==(const LawCoefficients&) const = default;
};

/// Two-parameter dense power law L(N) = (n_c / N)^alpha_n.
struct DenseLaw {
  double alpha_n;
  double n_c;

  /// Natural-units loss.
  double loss(double n) const { return std::pow(n_c / n, alpha_n); }

  LawCoefficients coefficients() const {
    return LawCoefficients::dense(-alpha_n, alpha_n * std::log10(n_c));
  }

  static DenseLaw from_coefficients(const LawCoefficients& k) {
    if (k.form != LawForm::Dense) throw InvalidCoefficients("expected dense coefficients");
    if (!(k.a < 0.0)) throw InvalidCoefficients("dense law requires a < 0");
    return {-k.a, std::pow(10.0, k.d / -k.a)};
  }
};

/// Second law variable after the form's transform (identity for the
/// non-saturating forms).
inline double effective_experts(const LawCoefficients& k, double x2) {
  if (std::isnan(x2)) throw DomainError("expert count is NaN");
  if (is_saturating(k.form)) return saturate(x2, k.transform());
  if (!(x2 >= 1.0)) throw DomainError("expert count E=" + std::to_string(x2) + " must be >= 1");
  return x2;
}

/// Predicted log10 loss. The dense form ignores x2.
inline double eval_law(const LawCoefficients& k, double x1, double x2 = 1.0) {
  k.validate();
  if (!(x1 > 0.0) || !std::isfinite(x1)) {
    throw DomainError("law input x1=" + std::to_string(x1) + " must be positive and finite");
  }
  const double ln = std::log10(x1);
  if (k.form == LawForm::Dense) return k.a * ln + k.d;
  const double le = std::log10(effective_experts(k, x2));
  return k.a * ln + k.b * le + k.c * ln * le + k.d;
}

/// Natural-units loss, 10^eval_law.
inline double predict_loss(const LawCoefficients& k, double x1, double x2 = 1.0) {
  return std::pow(10.0, eval_law(k, x1, x2));
}

struct Slopes {
  double a_of_e;  // d log10 L / d log10 N at fixed E
  double b_of_n;  // d log10 L / d log10 Ehat at fixed N
};

inline Slopes slopes(const LawCoefficients& k, double n, double e) {
  k.validate();
  if (k.form == LawForm::Dense) throw UnsupportedForm("slopes need a law with an expert term");
  if (!(n > 0.0)) throw DomainError("N must be positive");
  const double le = std::log10(effective_experts(k, e));
  return {k.a + k.c * le, k.b + k.c * std::log10(n)};
}

namespace detail {

// log10 of the dense-equivalent size for a routed model whose (transformed)
// expert term is ehat, relative to the reference ehat_ref reached at E = E_min.
inline double log10_epc(const LawCoefficients& k, double log10_n, double ehat, double ehat_ref) {
  const double alpha_ref = k.a + k.c * std::log10(ehat_ref);
  if (alpha_ref == 0.0) {
    throw DegenerateCoefficients("alpha(E_start) = a + c*log10(E_start) is zero");
  }
  const double alpha = k.a + k.c * std::log10(ehat);
  return (alpha * log10_n + k.b * (std::log10(ehat) - std::log10(ehat_ref))) / alpha_ref;
}

inline double pow10_checked(double exponent, const char* what) {
  const double v = std::pow(10.0, exponent);
  if (!std::isfinite(v)) throw NumericError(std::string(what) + " overflows");
  return v;
}

}  // namespace detail

/// Effective Parameter Count: the dense size N_bar with
/// eval_law(k, N_bar, E_min) == eval_law(k, n, e).
inline double effective_param_count(const LawCoefficients& k, double n, double e) {
  k.validate();
  if (!is_saturating(k.form)) {
    throw UnsupportedForm("effective_param_count needs a saturated law; use simplified_epc");
  }
  if (!(n > 0.0)) throw DomainError("N must be positive");
  const double ehat = effective_experts(k, e);
  return detail::pow10_checked(detail::log10_epc(k, std::log10(n), ehat, *k.e_start),
                               "effective parameter count");
}

/// EPC with Ehat = E and E_start = 1, for bilinear (and separable) fits.
inline double simplified_epc(const LawCoefficients& k, double n, double e) {
  k.validate();
  if (k.form != LawForm::Bilinear && k.form != LawForm::Separable) {
    throw UnsupportedForm("simplified_epc needs a bilinear or separable law");
  }
  if (!(n > 0.0)) throw DomainError("N must be positive");
  if (!(e >= 1.0)) throw DomainError("E must be >= 1");
  return detail::pow10_checked(detail::log10_epc(k, std::log10(n), e, 1.0),
                               "effective parameter count");
}

/// log10 of N_cutoff = -b / c. Throws NoCutoff when c == 0.
inline double log10_n_cutoff(const LawCoefficients& k) {
  k.validate();
  if (k.form == LawForm::Dense || k.c == 0.0) {
    throw NoCutoff("interaction term c is zero, routing never stops helping");
  }
  return -k.b / k.c;
}

/// Dense size beyond which the law predicts routing stops helping.
inline double n_cutoff(const LawCoefficients& k) {
  const double exponent = log10_n_cutoff(k);
  if (!(exponent < std::numeric_limits<double>::max_exponent10)) {
    throw NoCutoff("N_cutoff = 10^" + std::to_string(exponent) + " is effectively infinite");
  }
  return std::pow(10.0, exponent);
}

/// Largest EPC reachable at dense size n over all expert counts: the
/// Ehat = e_max limit below N_cutoff, n itself above it.
inline double n_max(const LawCoefficients& k, double n) {
  k.validate();
  if (!is_saturating(k.form)) throw UnsupportedForm("n_max needs a saturated law");
  if (!(n > 0.0)) throw DomainError("N must be positive");
  const bool has_cutoff = k.c != 0.0;
  if (has_cutoff && std::log10(n) >= log10_n_cutoff(k)) return n;
  return detail::pow10_checked(detail::log10_epc(k, std::log10(n), *k.e_max, *k.e_start),
                               "maximal effective parameter count");
}

/// True when N_bar_max is non-decreasing below the cutoff:
/// E_max <= E_start * 10^(-a/c).
inline bool n_max_is_monotone(const LawCoefficients& k) {
  k.validate();
  if (!is_saturating(k.form)) throw UnsupportedForm("n_max needs a saturated law");
  if (k.c == 0.0) return true;
  return std::log10(*k.e_max) <= std::log10(*k.e_start) - k.a / k.c;
}

struct LevelPoint {
  double n;
  double e;
};

struct SkippedPoint {
  double n;
  std::string reason;
};

struct LevelCurve {
  double target_log10_loss = 0.0;
  std::vector<LevelPoint> points;
  std::vector<SkippedPoint> skipped;
};

struct LevelCurveOptions {
  double log10_e_max = 6.0;
  double tolerance = 1e-10;  // in log10 E
};

/// For each n in the grid, the expert count reaching target_log10_loss, found
/// by bisection on log10 E. Grid points where the target is not bracketed are
/// reported in `skipped`.
inline LevelCurve level_curve(const LawCoefficients& k, double target_log10_loss,
                              std::span<const double> n_grid, const LevelCurveOptions& opts = {}) {
  k.validate();
  if (k.form == LawForm::Dense) throw UnsupportedForm("level curves need a law with an expert term");
  LevelCurve curve;
  curve.target_log10_loss = target_log10_loss;
  const double lo0 = std::log10(k.e_min());
  for (double n : n_grid) {
    auto gap = [&](double log_e) { return eval_law(k, n, std::pow(10.0, log_e)) - target_log10_loss; };
    double lo = lo0;
    double hi = opts.log10_e_max;
    double f_lo = gap(lo);
    const double f_hi = gap(hi);
    if (f_lo == 0.0) {
      curve.points.push_back({n, std::pow(10.0, lo)});
      continue;
    }
    if (f_lo * f_hi > 0.0) {
      const bool above = f_lo < 0.0 && f_hi < 0.0;
      curve.skipped.push_back(
          {n, above ? "dense model at this size already beats the target"
                    : "target below the loss reachable with 10^" + std::to_string(opts.log10_e_max) +
                          " experts"});
      continue;
    }
    while (hi - lo > opts.tolerance) {
      const double mid = 0.5 * (lo + hi);
      const double f_mid = gap(mid);
      if ((f_mid > 0.0) == (f_lo > 0.0)) {
        lo = mid;
        f_lo = f_mid;
      } else {
        hi = mid;
      }
    }
    curve.points.push_back({n, std::pow(10.0, 0.5 * (lo + hi))});
  }
  return curve;
}

}  // namespace routescale
