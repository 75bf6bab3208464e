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

// Published coefficient and architecture tables, embedded as data.
//
// Each table has a canonical CSV rendering; its FNV-1a hash is frozen in
// kFixtureChecksums so an accidental edit to a transcribed value fails the
// fixture tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "routescale/arch.hpp"
#include "routescale/error.hpp"
#include "routescale/law.hpp"
#include "routescale/records.hpp"
#include "routescale/text.hpp"

namespace routescale {

struct DenseRow {
  std::string source;
  double alpha_n;
  double n_c;
};

struct CoefficientRow {
  Technique technique;
  LawCoefficients coefficients;
};

struct ArchRow {
  ArchSpec arch;
  std::int64_t actual_params;
};

/// Per-N fit of log L against log E, with its hold-out RMSE.
struct SlopeRow {
  Technique technique;
  std::string size;
  double b_of_n;
  double holdout_rmse;
};

/// Per-E fit of log L against log N, stored as a magnitude.
struct AofERow {
  Technique technique;
  std::int64_t experts;
  double a_magnitude;
};

struct TransferRow {
  Technique policy;
  std::string dataset;
  LawCoefficients coefficients;
  double rmse;
};

struct RlHyperRow {
  std::string method;
  double entropy_w;
  double balance_w;
  double pg_w;
  std::optional<double> top_p;
  std::optional<double> value_w;
};

inline const std::vector<DenseRow>& table2() {
  static const std::vector<DenseRow> rows = {
      {"ours", 0.078, 3.568e13},
      {"kaplan", 0.076, 8.8e13},
  };
  return rows;
}

inline const std::vector<CoefficientRow>& table3() {
  static const std::vector<CoefficientRow> rows = {
      {Technique::SBase, LawCoefficients::saturated(-0.082, -0.108, 0.009, 1.104, 1.847, 314.478)},
      {Technique::RLR, LawCoefficients::saturated(-0.083, -0.126, 0.012, 1.111, 1.880, 469.982)},
      {Technique::Hash, LawCoefficients::saturated(-0.087, -0.136, 0.012, 1.157, 4.175, 477.741)},
  };
  return rows;
}

inline const std::vector<ArchRow>& table4() {
  static const std::vector<ArchRow> rows = {
      {{"15M", 512, 6, 8, 32}, 16527360},
      {{"25M", 512, 8, 8, 64}, 27279360},
      {{"55M", 640, 10, 12, 64}, 57369600},
      {{"130M", 896, 12, 16, 64}, 132163584},
      {{"370M", 1536, 12, 12, 128}, 368123904},
      {{"870M", 2048, 16, 16, 128}, 872546304},
      {{"1.3B", 2048, 24, 16, 128}, 1308819456},
  };
  return rows;
}

inline const std::vector<SlopeRow>& table5() {
  static const std::vector<SlopeRow> rows = {
      {Technique::SBase, "15M", -0.035, 0.035}, {Technique::SBase, "25M", -0.031, 0.019},
      {Technique::SBase, "130M", -0.029, 0.017}, {Technique::SBase, "370M", -0.024, 0.014},
      {Technique::SBase, "1.3B", -0.019, 0.012},
      {Technique::RLR, "15M", -0.033, 0.016},    {Technique::RLR, "25M", -0.031, 0.013},
      {Technique::RLR, "130M", -0.027, 0.013},   {Technique::RLR, "370M", -0.022, 0.014},
      {Technique::RLR, "1.3B", -0.016, 0.009},
      {Technique::Hash, "15M", -0.031, 0.039},   {Technique::Hash, "25M", -0.029, 0.029},
      {Technique::Hash, "130M", -0.025, 0.023},  {Technique::Hash, "370M", -0.021, 0.016},
      {Technique::Hash, "1.3B", -0.015, 0.011},
  };
  return rows;
}

/// Bilinear fits. The source lists magnitudes; a and b are stored negated.
inline const std::vector<CoefficientRow>& table6() {
  static const std::vector<CoefficientRow> rows = {
      {Technique::SBase, LawCoefficients::bilinear(-0.079, -0.088, 0.007, 1.072)},
      {Technique::RLR, LawCoefficients::bilinear(-0.080, -0.105, 0.010, 1.076)},
      {Technique::Hash, LawCoefficients::bilinear(-0.081, -0.097, 0.009, 1.086)},
  };
  return rows;
}

inline const std::vector<AofERow>& table7() {
  static const std::vector<AofERow> rows = [] {
    const std::int64_t es[] = {4, 8, 32, 64, 128, 256, 512};
    const double sbase[] = {0.077, 0.073, 0.070, 0.066, 0.064, 0.058, 0.060};
    const double rlr[] = {0.075, 0.073, 0.067, 0.063, 0.060, 0.056, 0.053};
    const double hash[] = {0.077, 0.075, 0.069, 0.066, 0.063, 0.059, 0.056};
    std::vector<AofERow> out;
    for (int i = 0; i < 7; ++i) out.push_back({Technique::SBase, es[i], sbase[i]});
    for (int i = 0; i < 7; ++i) out.push_back({Technique::RLR, es[i], rlr[i]});
    for (int i = 0; i < 7; ++i) out.push_back({Technique::Hash, es[i], hash[i]});
    return out;
  }();
  return rows;
}

/// Downstream-task coefficients. Dense rows are dense laws, the rest bilinear.
inline const std::vector<TransferRow>& transfer_table() {
  static const std::vector<TransferRow> rows = [] {
    using K = LawCoefficients;
    const Technique D = Technique::Dense, H = Technique::Hash, S = Technique::SBase, R = Technique::RLR;
    return std::vector<TransferRow>{
        {D, "validation", K::dense(-0.078, 1.063), 0.014},
        {D, "lambada", K::dense(-0.203, 1.952), 0.039},
        {D, "pile", K::dense(-0.102, 1.239), 0.020},
        {D, "cc", K::dense(-0.097, 1.133), 0.041},
        {D, "wikitext103", K::dense(-0.090, 1.172), 0.015},
        {D, "c4", K::dense(-0.066, 1.009), 0.014},
        {H, "validation", K::bilinear(-0.082, -0.102, 0.009, 1.102), 0.022},
        {H, "lambada", K::bilinear(-0.213, -0.167, 0.015, 2.049), 0.051},
        {H, "pile", K::bilinear(-0.111, -0.161, 0.014, 1.325), 0.023},
        {H, "cc", K::bilinear(-0.101, -0.101, 0.010, 1.177), 0.045},
        {H, "wikitext103", K::bilinear(-0.093, -0.086, 0.007, 1.208), 0.027},
        {H, "c4", K::bilinear(-0.070, -0.088, 0.008, 1.045), 0.021},
        {S, "validation", K::bilinear(-0.081, -0.092, 0.008, 1.086), 0.025},
        {S, "lambada", K::bilinear(-0.211, -0.152, 0.012, 2.020), 0.048},
        {S, "pile", K::bilinear(-0.110, -0.117, 0.008, 1.309), 0.028},
        {S, "cc", K::bilinear(-0.100, -0.101, 0.010, 1.154), 0.050},
        {S, "wikitext103", K::bilinear(-0.092, -0.074, 0.005, 1.194), 0.025},
        {S, "c4", K::bilinear(-0.068, -0.081, 0.007, 1.031), 0.024},
        {R, "validation", K::bilinear(-0.081, -0.107, 0.010, 1.090), 0.022},
        {R, "lambada", K::bilinear(-0.212, -0.190, 0.016, 2.030), 0.051},
        {R, "pile", K::bilinear(-0.110, -0.149, 0.012, 1.320), 0.030},
        {R, "cc", K::bilinear(-0.100, -0.113, 0.011, 1.156), 0.045},
        {R, "wikitext103", K::bilinear(-0.092, -0.091, 0.008, 1.195), 0.023},
        {R, "c4", K::bilinear(-0.069, -0.092, 0.009, 1.033), 0.022},
    };
  }();
  return rows;
}

inline const std::vector<RlHyperRow>& rl_hyperparameters() {
  static const std::vector<RlHyperRow> rows = {
      {"greedy", 0.0, 1.0, 1e-1, std::nullopt, std::nullopt},
      {"nucleus", 0.0, 1.0, 1e-1, 0.9, std::nullopt},
      {"baseline", -5e-4, 1.0, 1e-2, 1.0, 1e-2},
  };
  return rows;
}

inline const std::vector<std::string>& fixture_names() {
  static const std::vector<std::string> names = {"table2", "table3", "table4", "table5",
                                                 "table6", "table7", "transfer", "rl-hyper"};
  return names;
}

namespace detail {

inline std::string opt_text(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

inline std::string coefficient_cells(const LawCoefficients& k) {
  return format_double(k.a) + "," + format_double(k.b) + "," + format_double(k.c) + "," + format_double(k.d) +
         "," + opt_text(k.e_start) + "," + opt_text(k.e_max);
}

inline std::string known_fixtures_text() {
  std::string out;
  for (const auto& n : fixture_names()) out += (out.empty() ? "" : ", ") + n;
  return out;
}

}  // namespace detail

/// Canonical CSV rendering of a fixture table.
inline std::string fixture_csv(std::string_view name) {
  std::ostringstream os;
  if (name == "table2") {
    os << "source,alpha_n,n_c\n";
    for (const auto& r : table2()) os << r.source << ',' << format_double(r.alpha_n) << ',' << format_double(r.n_c) << '\n';
  } else if (name == "table3" || name == "table6") {
    os << "technique,form,a,b,c,d,e_start,e_max\n";
    for (const auto& r : name == "table3" ? table3() : table6()) {
      os << to_string(r.technique) << ',' << to_string(r.coefficients.form) << ','
         << detail::coefficient_cells(r.coefficients) << '\n';
    }
  } else if (name == "table4") {
    os << "name,d_model,n_layers,n_heads,kv_size,actual_params\n";
    for (const auto& r : table4()) {
      os << r.arch.name << ',' << r.arch.d_model << ',' << r.arch.n_layers << ',' << r.arch.n_heads << ','
         << r.arch.kv_size << ',' << r.actual_params << '\n';
    }
  } else if (name == "table5") {
    os << "technique,size,b_of_n,holdout_rmse\n";
    for (const auto& r : table5()) {
      os << to_string(r.technique) << ',' << r.size << ',' << format_double(r.b_of_n) << ','
         << format_double(r.holdout_rmse) << '\n';
    }
  } else if (name == "table7") {
    os << "technique,E,a_magnitude\n";
    for (const auto& r : table7()) os << to_string(r.technique) << ',' << r.experts << ',' << format_double(r.a_magnitude) << '\n';
  } else if (name == "transfer") {
    os << "policy,dataset,form,a,b,c,d,e_start,e_max,rmse\n";
    for (const auto& r : transfer_table()) {
      os << to_string(r.policy) << ',' << r.dataset << ',' << to_string(r.coefficients.form) << ','
         << detail::coefficient_cells(r.coefficients) << ',' << format_double(r.rmse) << '\n';
    }
  } else if (name == "rl-hyper") {
    os << "method,entropy_w,balance_w,pg_w,top_p,value_w\n";
    for (const auto& r : rl_hyperparameters()) {
      os << r.method << ',' << format_double(r.entropy_w) << ',' << format_double(r.balance_w) << ','
         << format_double(r.pg_w) << ',' << detail::opt_text(r.top_p) << ',' << detail::opt_text(r.value_w) << '\n';
    }
  } else {
    throw DataError("unknown fixture '" + std::string(name) + "'; known fixtures: " + detail::known_fixtures_text());
  }
  return os.str();
}

struct FixtureChecksum {
  std::string_view name;
  std::uint64_t fnv1a;
};

inline constexpr FixtureChecksum kFixtureChecksums[] = {
    {"table2", 0x3711F25A9A5E6357ULL},   {"table3", 0xB97E6F9418E198A6ULL},
    {"table4", 0xDE4478AAA2AC88E3ULL},   {"table5", 0x233FABE50EBD6492ULL},
    {"table6", 0xBF01C77B2E8E41E0ULL},   {"table7", 0x4048A4D31048EC6BULL},
    {"transfer", 0xA917F3CDEB576382ULL}, {"rl-hyper", 0x0F281DEA8FD267E2ULL},
};

inline std::uint64_t fixture_checksum(std::string_view name) { return fnv1a64(fixture_csv(name)); }

inline std::uint64_t expected_fixture_checksum(std::string_view name) {
  for (const auto& c : kFixtureChecksums) {
    if (c.name == name) return c.fnv1a;
  }
  throw DataError("unknown fixture '" + std::string(name) + "'; known fixtures: " + detail::known_fixtures_text());
}

inline const ArchRow& table4_row(std::string_view name) {
  for (const auto& r : table4()) {
    if (r.arch.name == name) return r;
  }
  throw DataError("unknown architecture '" + std::string(name) + "'");
}

/// Standard architecture whose dense size lies within 5% of n.
inline std::optional<ArchSpec> standard_arch_for(double n) {
  for (const auto& r : table4()) {
    const double ref = static_cast<double>(r.arch.dense_params());
    if (std::abs(n - ref) <= 0.05 * ref) return r.arch;
  }
  return std::nullopt;
}

/// Resolves a coefficient reference such as "table3:sbase", "table6:hash",
/// "table2:ours" or "transfer:rlr:lambada".
inline LawCoefficients fixture_coefficients(std::string_view ref) {
  const auto parts = split(ref, ':');
  const std::string table(trim(parts[0]));
  auto fail = [&](const std::string& why) -> LawCoefficients {
    throw DataError("bad coefficient reference '" + std::string(ref) + "': " + why);
  };
  if (table == "table2") {
    const std::string src = parts.size() > 1 ? lower(trim(parts[1])) : "ours";
    for (const auto& r : table2()) {
      if (r.source == src) return DenseLaw{r.alpha_n, r.n_c}.coefficients();
    }
    return fail("table2 rows are ours, kaplan");
  }
  if (table == "table3" || table == "table6") {
    if (parts.size() != 2) return fail("expected " + table + ":<technique>");
    const Technique t = parse_technique(parts[1]);
    for (const auto& r : table == "table3" ? table3() : table6()) {
      if (r.technique == t) return r.coefficients;
    }
    return fail("no row for technique");
  }
  if (table == "transfer") {
    if (parts.size() != 3) return fail("expected transfer:<policy>:<dataset>");
    const Technique t = parse_technique(parts[1]);
    const std::string ds = lower(trim(parts[2]));
    for (const auto& r : transfer_table()) {
      if (r.policy == t && r.dataset == ds) return r.coefficients;
    }
    return fail("datasets are validation, lambada, pile, cc, wikitext103, c4");
  }
  return fail("coefficient tables are table2, table3, table6, transfer");
}

}  // namespace routescale
