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

// Run-record CSV, fit artifacts and simulation summaries. Requires
// nlohmann_json in addition to the core dependencies.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "routescale/dispatch.hpp"
#include "routescale/error.hpp"
#include "routescale/fit.hpp"
#include "routescale/fixtures.hpp"
#include "routescale/law.hpp"
#include "routescale/records.hpp"
#include "routescale/text.hpp"

namespace routescale {

inline constexpr std::string_view kRunCsvHeader = "technique,N,E,K,R,tokens,loss";

struct RunTable {
  std::vector<RunRecord> records;
  std::string provenance;

  bool operator==(const RunTable&) const = default;
};

namespace detail {

inline std::int64_t parse_int_field(std::string_view text, std::string_view field, const std::string& source,
                                    std::size_t line) {
  const auto t = trim(text);
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec == std::errc() && p == t.data() + t.size()) return v;
  // Integral values written in scientific notation (1e8) are accepted.
  double d = 0.0;
  auto [pd, ecd] = std::from_chars(t.data(), t.data() + t.size(), d);
  if (ecd == std::errc() && pd == t.data() + t.size() && std::isfinite(d) && d == std::floor(d) &&
      std::abs(d) < 9.2e18) {
    return static_cast<std::int64_t>(d);
  }
  throw ParseError(source, line, std::string(field) + " must be an integer, got '" + std::string(t) + "'");
}

inline double parse_real_field(std::string_view text, std::string_view field, const std::string& source,
                               std::size_t line) {
  const auto t = trim(text);
  double d = 0.0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), d);
  if (ec != std::errc() || p != t.data() + t.size()) {
    throw ParseError(source, line, std::string(field) + " must be a number, got '" + std::string(t) + "'");
  }
  return d;
}

}  // namespace detail

/// Parses the run-record CSV. Blank lines and lines starting with '#' are
/// skipped; the first other line must be the header.
inline RunTable parse_runs_csv(std::string_view text, const std::string& source) {
  RunTable table;
  table.provenance = source;
  bool header_seen = false;
  std::size_t line_no = 0;
  std::map<std::tuple<Technique, std::int64_t, std::int64_t, std::int64_t, double, std::int64_t>, std::size_t> seen;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (!header_seen) {
      std::string norm;
      for (auto f : split(t, ',')) {
        if (!norm.empty()) norm += ',';
        norm += trim(f);
      }
      if (norm != kRunCsvHeader) {
        throw ParseError(source, line_no, "expected header '" + std::string(kRunCsvHeader) + "', got '" + std::string(t) + "'");
      }
      header_seen = true;
      continue;
    }
    const auto f = split(t, ',');
    if (f.size() != 7) {
      throw ParseError(source, line_no, "expected 7 fields, got " + std::to_string(f.size()));
    }
    RunRecord r;
    try {
      r.technique = parse_technique(f[0]);
    } catch (const DataError& e) {
      throw ParseError(source, line_no, e.what());
    }
    r.n = detail::parse_int_field(f[1], "N", source, line_no);
    r.e = detail::parse_int_field(f[2], "E", source, line_no);
    r.k = detail::parse_int_field(f[3], "K", source, line_no);
    r.r = detail::parse_real_field(f[4], "R", source, line_no);
    r.tokens = detail::parse_int_field(f[5], "tokens", source, line_no);
    r.loss = detail::parse_real_field(f[6], "loss", source, line_no);
    try {
      r.validate();
    } catch (const DataError& e) {
      throw ParseError(source, line_no, e.what());
    }
    const auto key = std::make_tuple(r.technique, r.n, r.e, r.k, r.r, r.tokens);
    if (const auto it = seen.find(key); it != seen.end()) {
      throw ParseError(source, line_no, "duplicate run (same technique, N, E, K, R and tokens as line " +
                                            std::to_string(it->second) + ")");
    }
    seen.emplace(key, line_no);
    table.records.push_back(r);
  }
  if (!header_seen) throw DataError(source + ": empty run table (no header)");
  if (table.records.empty()) throw DataError(source + ": empty run table (header but no records)");
  return table;
}

inline std::string runs_to_csv(const RunTable& table) {
  std::ostringstream os;
  os << kRunCsvHeader << '\n';
  for (const auto& r : table.records) {
    os << to_string(r.technique) << ',' << r.n << ',' << r.e << ',' << r.k << ',' << format_double(r.r) << ','
       << r.tokens << ',' << format_double(r.loss) << '\n';
  }
  return os.str();
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("write to '" + path + "' failed");
}

/// Noisy records from a built-in saturated coefficient set on the standard
/// 6 x 10 grid (sigma 0.004 in log10 loss).
inline RunTable synthetic_run_table(Technique technique, std::uint64_t seed) {
  if (technique == Technique::Dense) throw UsageError("synthetic tables exist for sbase, rlr and hash");
  const auto law = fixture_coefficients("table3:" + std::string(to_string(technique)));
  const auto ns = standard_grid_sizes();
  const auto es = standard_grid_experts();
  RunTable t;
  t.records = synthetic_records(law, ns, es, 0.004, seed, technique);
  t.provenance = "synthetic:" + std::string(to_string(technique)) + ":" + std::to_string(seed);
  return t;
}

/// A CSV path, or `synthetic:<technique>[:seed]`.
inline RunTable load_runs(const std::string& source) {
  constexpr std::string_view prefix = "synthetic:";
  if (source.rfind(prefix, 0) == 0) {
    const auto parts = split(std::string_view(source).substr(prefix.size()), ':');
    if (parts.empty() || parts.size() > 2) throw UsageError("expected synthetic:<technique>[:seed], got '" + source + "'");
    std::uint64_t seed = 0;
    if (parts.size() == 2) {
      auto [p, ec] = std::from_chars(parts[1].data(), parts[1].data() + parts[1].size(), seed);
      if (ec != std::errc() || p != parts[1].data() + parts[1].size()) {
        throw UsageError("bad seed in '" + source + "'");
      }
    }
    try {
      return synthetic_run_table(parse_technique(parts[0]), seed);
    } catch (const DataError& e) {
      throw UsageError(e.what());
    }
  }
  return parse_runs_csv(read_text_file(source), source);
}

/// Canonical CSV of a built-in table; unknown names list the known ones.
inline std::string load_fixture(std::string_view name) {
  const std::string text = fixture_csv(name);
  if (fnv1a64(text) != expected_fixture_checksum(name)) {
    throw DataError("fixture '" + std::string(name) + "' failed its checksum");
  }
  return text;
}

inline std::string data_hash(const RunTable& t) { return hex64(fnv1a64(runs_to_csv(t))); }

struct FitArtifact {
  FitResult fit;
  LawForm law = LawForm::Saturated;
  std::string data_hash;
  std::size_t record_count = 0;
  std::uint64_t seed = 0;
  int starts = 0;
  std::string tool_version;
  std::optional<std::string> timestamp;  // left empty so artifacts stay reproducible

  bool operator==(const FitArtifact& o) const {
    return fit.coefficients == o.fit.coefficients && fit.objective == o.fit.objective && fit.rmsle == o.fit.rmsle &&
           fit.residuals == o.fit.residuals && fit.starts_tried == o.fit.starts_tried &&
           fit.converged == o.fit.converged && fit.seed == o.fit.seed && law == o.law && data_hash == o.data_hash &&
           record_count == o.record_count && seed == o.seed && starts == o.starts &&
           tool_version == o.tool_version && timestamp == o.timestamp;
  }
};

inline nlohmann::json coefficients_to_json(const LawCoefficients& k) {
  nlohmann::json j{{"form", std::string(to_string(k.form))}, {"a", k.a}, {"b", k.b}, {"c", k.c}, {"d", k.d}};
  j["e_start"] = k.e_start ? nlohmann::json(*k.e_start) : nlohmann::json(nullptr);
  j["e_max"] = k.e_max ? nlohmann::json(*k.e_max) : nlohmann::json(nullptr);
  return j;
}

inline LawCoefficients coefficients_from_json(const nlohmann::json& j) {
  LawCoefficients k;
  k.form = parse_law_form(j.at("form").get<std::string>());
  k.a = j.at("a").get<double>();
  k.b = j.at("b").get<double>();
  k.c = j.at("c").get<double>();
  k.d = j.at("d").get<double>();
  if (j.contains("e_start") && !j.at("e_start").is_null()) k.e_start = j.at("e_start").get<double>();
  if (j.contains("e_max") && !j.at("e_max").is_null()) k.e_max = j.at("e_max").get<double>();
  k.validate();
  return k;
}

inline nlohmann::json artifact_to_json(const FitArtifact& a) {
  nlohmann::json fit{{"coefficients", coefficients_to_json(a.fit.coefficients)},
                     {"objective", a.fit.objective},
                     {"rmsle", a.fit.rmsle},
                     {"residuals", a.fit.residuals},
                     {"starts_tried", a.fit.starts_tried},
                     {"converged", a.fit.converged},
                     {"seed", a.fit.seed}};
  nlohmann::json meta{{"law_form", std::string(to_string(a.law))},
                      {"data_hash", a.data_hash},
                      {"record_count", a.record_count},
                      {"seed", a.seed},
                      {"starts", a.starts},
                      {"tool_version", a.tool_version}};
  meta["timestamp"] = a.timestamp ? nlohmann::json(*a.timestamp) : nlohmann::json(nullptr);
  return nlohmann::json{{"FitArtifact", {{"FitResult", fit}, {"metadata", meta}}}};
}

inline FitArtifact artifact_from_json(const nlohmann::json& root) {
  try {
    const auto& art = root.at("FitArtifact");
    const auto& fit = art.at("FitResult");
    const auto& meta = art.at("metadata");
    FitArtifact a;
    a.fit.coefficients = coefficients_from_json(fit.at("coefficients"));
    a.fit.objective = fit.at("objective").get<double>();
    a.fit.rmsle = fit.at("rmsle").get<double>();
    a.fit.residuals = fit.at("residuals").get<std::vector<double>>();
    a.fit.starts_tried = fit.at("starts_tried").get<int>();
    a.fit.converged = fit.at("converged").get<bool>();
    a.fit.seed = fit.at("seed").get<std::uint64_t>();
    a.law = parse_law_form(meta.at("law_form").get<std::string>());
    a.data_hash = meta.at("data_hash").get<std::string>();
    a.record_count = meta.at("record_count").get<std::size_t>();
    a.seed = meta.at("seed").get<std::uint64_t>();
    a.starts = meta.at("starts").get<int>();
    a.tool_version = meta.at("tool_version").get<std::string>();
    if (!meta.at("timestamp").is_null()) a.timestamp = meta.at("timestamp").get<std::string>();
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed fit artifact: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("malformed fit artifact: ") + e.what());
  }
}

inline std::string dump_artifact(const FitArtifact& a) { return artifact_to_json(a).dump(2) + "\n"; }

inline FitArtifact parse_artifact(std::string_view text) {
  try {
    return artifact_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("fit artifact is not valid JSON: ") + e.what());
  }
}

inline nlohmann::json dispatch_to_json(const DispatchReport& r) {
  return nlohmann::json{{"tokens", r.tokens},
                        {"capacity", r.capacity},
                        {"load", r.load},
                        {"kept", r.kept},
                        {"dropped", r.dropped},
                        {"absorbed", r.absorbed},
                        {"device_absorbed", r.device_absorbed},
                        {"dropped_count", r.dropped_count},
                        {"drop_rate", r.drop_rate},
                        {"max_mean_load_ratio", r.max_mean_load_ratio}};
}

inline nlohmann::json hash_balance_to_json(const HashBalanceReport& r, const HashBalanceConfig& cfg) {
  return nlohmann::json{{"config",
                         {{"experts", cfg.experts},
                          {"strategy", std::string(to_string(cfg.strategy))},
                          {"capacity_factor", cfg.capacity_factor},
                          {"stream_len", cfg.stream_len},
                          {"batch_tokens", cfg.batch_tokens},
                          {"seed", cfg.seed}}},
                        {"batches", r.batches},
                        {"stream_capacity", r.stream_capacity},
                        {"sorted_load", r.sorted_load},
                        {"sorted_dropped", r.sorted_dropped},
                        {"DispatchReport", dispatch_to_json(r.totals)}};
}

}  // namespace routescale
