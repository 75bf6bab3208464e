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

// The `routescale` command line. Exit status: 0 ok, 2 usage, 3 data,
// 4 numeric or non-convergence.

#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#ifdef ROUTESCALE_CLI11_SINGLE_HEADER
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif
#include <nlohmann/json.hpp>

#include "routescale/arch.hpp"
#include "routescale/dispatch.hpp"
#include "routescale/error.hpp"
#include "routescale/fit.hpp"
#include "routescale/fixtures.hpp"
#include "routescale/io.hpp"
#include "routescale/law.hpp"
#include "routescale/routing.hpp"
#include "routescale/text.hpp"
#include "routescale/toy_router.hpp"

#ifndef ROUTESCALE_VERSION
#define ROUTESCALE_VERSION "0.0.0"
#endif

namespace routescale {

namespace cli_detail {

/// Fixture reference (table3:sbase, transfer:rlr:c4, ...) or a fit artifact path.
inline LawCoefficients resolve_coefficients(const std::string& ref) {
  if (ref.empty()) throw UsageError("--coeffs is required (e.g. table3:sbase or a fit artifact .json)");
  if (std::filesystem::exists(ref)) return parse_artifact(read_text_file(ref)).fit.coefficients;
  try {
    return fixture_coefficients(ref);
  } catch (const DataError& e) {
    throw UsageError(std::string(e.what()) + "; or pass a fit artifact path");
  }
}

inline bool is_fixture_ref(const std::string& ref) { return !std::filesystem::exists(ref); }

/// Writes to --out when given, otherwise to the command's stdout.
inline void emit(const std::string& path, std::ostream& out, const std::string& text) {
  if (path.empty() || path == "-") out << text;
  else write_text_file(path, text);
}

inline std::string sig(double v) { return format_sig(v, 6); }

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scaling laws for routed language models: fitting, routing kernels and dispatch simulation."};
  app.name("routescale");
  app.set_version_flag("--version", std::string(ROUTESCALE_VERSION));
  app.require_subcommand(1, 1);

  std::function<void()> action;
  auto on = [&](CLI::App* sub, std::function<void()> fn) { sub->callback([&action, fn] { action = fn; }); };

  // fit / loo share their inputs.
  std::string law_name = "saturated";
  std::string input;
  std::uint64_t seed = 0;
  int starts = 64;
  double tol = MinimizeOptions{}.function_tolerance;
  std::size_t threads = 0;
  std::string out_path;

  auto add_fit_inputs = [&](CLI::App* sub, int default_starts) {
    sub->add_option("--law", law_name, "dense, separable, bilinear, saturated or fb")->capture_default_str();
    sub->add_option("--input", input, "run-record CSV, or synthetic:<technique>[:seed]")->required();
    sub->add_option("--seed", seed, "seed for the multi-start draw")->capture_default_str();
    sub->add_option("--starts", starts, "optimizer starts")->default_val(default_starts)->check(CLI::PositiveNumber);
    sub->add_option("--tol", tol, "relative function-decrease tolerance")->capture_default_str();
    sub->add_option("--threads", threads, "worker threads, 0 = all cores (results do not depend on it)");
    sub->add_option("--out", out_path, "output file (default stdout)");
  };
  auto fit_options = [&] {
    FitOptions o;
    o.starts = starts;
    o.seed = seed;
    o.threads = threads;
    o.minimize.function_tolerance = tol;
    return o;
  };

  auto* fit = app.add_subcommand("fit", "fit a scaling law and write a fit artifact (JSON)");
  add_fit_inputs(fit, 64);
  on(fit, [&] {
    const auto table = load_runs(input);
    const LawForm form = parse_law_form(law_name);
    const auto res = fit_law(table.records, form, fit_options());
    FitArtifact a;
    a.fit = res;
    a.law = form;
    a.data_hash = data_hash(table);
    a.record_count = table.records.size();
    a.seed = seed;
    a.starts = starts;
    a.tool_version = ROUTESCALE_VERSION;
    cli_detail::emit(out_path, out, dump_artifact(a));
  });

  auto* loo = app.add_subcommand("loo", "leave-one-out RMSLE of a law on a run table");
  add_fit_inputs(loo, 16);
  on(loo, [&] {
    const auto table = load_runs(input);
    const auto r = loo_residuals(table.records, parse_law_form(law_name), fit_options());
    double ss = 0.0;
    for (double v : r) ss += v * v;
    std::ostringstream os;
    os << "law " << law_name << "\nrecords " << r.size() << "\nloo_rmsle " << format_double(std::sqrt(ss / static_cast<double>(r.size())))
       << '\n';
    cli_detail::emit(out_path, out, os.str());
  });

  std::string by = "n";
  auto* slices = app.add_subcommand("slices", "per-N slopes b(N) or per-E slopes a(E) as CSV");
  slices->add_option("--input", input, "run-record CSV, or synthetic:<technique>[:seed]")->required();
  slices->add_option("--by", by, "n: fixed N, slope over log E; e: fixed E, slope over log N")
      ->check(CLI::IsMember({"n", "e"}))
      ->capture_default_str();
  slices->add_option("--seed", seed, "unused; accepted for uniformity");
  slices->add_option("--out", out_path, "output file (default stdout)");
  on(slices, [&] {
    const auto table = load_runs(input);
    const auto st = per_slice_fits(table.records, by == "n" ? SliceBy::N : SliceBy::E);
    std::ostringstream os;
    os << (by == "n" ? "N" : "E") << ",slope,intercept,points\n";
    for (const auto& f : st.fits) {
      os << format_double(f.slice_value) << ',' << format_double(f.slope) << ',' << format_double(f.intercept) << ','
         << f.points << '\n';
    }
    for (const auto& s : st.skipped) os << "# skipped " << format_double(s.slice_value) << ": " << s.reason << '\n';
    cli_detail::emit(out_path, out, os.str());
  });

  std::string coeffs;
  double n = 0.0;
  double e = 1.0;
  auto add_coeffs = [&](CLI::App* sub) {
    sub->add_option("--coeffs", coeffs, "table2[:ours|kaplan], table3:<tech>, table6:<tech>, transfer:<tech>:<dataset>, or an artifact path")
        ->required();
    sub->add_option("--seed", seed, "unused; accepted for uniformity");
  };

  auto* predict = app.add_subcommand("predict", "predicted loss at (N, E); for the fb law N is F in TFLOPs and E is B");
  add_coeffs(predict);
  predict->add_option("--n", n, "dense parameters N")->required();
  predict->add_option("--e", e, "expert count E")->capture_default_str();
  on(predict, [&] {
    const auto k = cli_detail::resolve_coefficients(coeffs);
    const double lg = eval_law(k, n, e);
    out << "log10_loss " << format_double(lg) << "\nloss " << format_double(std::pow(10.0, lg)) << '\n';
  });

  auto* epc = app.add_subcommand("epc", "effective parameter count of a routed model");
  add_coeffs(epc);
  epc->add_option("--n", n, "dense parameters N")->required();
  epc->add_option("--e", e, "expert count E")->required();
  on(epc, [&] {
    const auto k = cli_detail::resolve_coefficients(coeffs);
    out << cli_detail::sig(effective_param_count(k, n, e)) << '\n';
  });

  auto* cutoff = app.add_subcommand("cutoff", "dense size beyond which routing stops helping, 10^(-b/c)");
  add_coeffs(cutoff);
  on(cutoff, [&] {
    const auto k = cli_detail::resolve_coefficients(coeffs);
    const double lg = log10_n_cutoff(k);
    out << cli_detail::sig(n_cutoff(k)) << '\n';
    if (cli_detail::is_fixture_ref(coeffs) && coeffs.rfind("table2", 0) != 0) {
      // Published coefficients carry three decimals; propagate +-0.0005.
      const double h = 5e-4;
      const double lo = (-k.b - h) / (k.c + h);
      out << "note: log10 N_cutoff = " << format_sig(lg, 6) << " from coefficients rounded to 3 decimals;";
      if (k.c > h) {
        const double hi = (-k.b + h) / (k.c - h);
        out << " within that rounding it ranges over [" << format_sig(lo, 4) << ", " << format_sig(hi, 4) << "], i.e. "
            << format_sig(std::pow(10.0, lo), 2) << " to " << format_sig(std::pow(10.0, hi), 2) << '\n';
      } else {
        out << " within that rounding c may be zero, so the cutoff is unbounded above\n";
      }
    }
  });

  auto* nmax = app.add_subcommand("nmax", "largest effective parameter count reachable at size N");
  add_coeffs(nmax);
  nmax->add_option("--n", n, "dense parameters N")->required();
  on(nmax, [&] {
    const auto k = cli_detail::resolve_coefficients(coeffs);
    out << cli_detail::sig(n_max(k, n)) << '\n';
    if (!n_max_is_monotone(k)) out << "note: N_max is not monotone in N below the cutoff for these coefficients\n";
  });

  std::vector<double> target_ns;
  std::optional<double> target_log10;
  double n_lo = 1e7;
  double n_hi = 1e10;
  int points = 31;
  auto* level = app.add_subcommand("level-curves", "(N, E) pairs of equal predicted loss, as CSV");
  add_coeffs(level);
  level->add_option("--target-n", target_ns, "dense size(s) whose loss defines a curve");
  level->add_option("--log10-loss", target_log10, "explicit target log10 loss");
  level->add_option("--n-lo", n_lo, "smallest N on the grid")->capture_default_str();
  level->add_option("--n-hi", n_hi, "largest N on the grid")->capture_default_str();
  level->add_option("--points", points, "grid points, log-spaced")->capture_default_str()->check(CLI::Range(2, 100000));
  level->add_option("--out", out_path, "output file (default stdout)");
  on(level, [&] {
    const auto k = cli_detail::resolve_coefficients(coeffs);
    if (!(n_lo > 0.0 && n_hi > n_lo)) throw UsageError("need 0 < --n-lo < --n-hi");
    std::vector<std::pair<std::string, double>> targets;
    for (double t : target_ns) targets.emplace_back("dense_" + cli_detail::sig(t), eval_law(k, t, 1.0));
    if (target_log10) targets.emplace_back("log10_loss_" + cli_detail::sig(*target_log10), *target_log10);
    if (targets.empty()) throw UsageError("give --target-n and/or --log10-loss");
    std::vector<double> grid;
    for (int i = 0; i < points; ++i) {
      grid.push_back(std::pow(10.0, std::log10(n_lo) + (std::log10(n_hi) - std::log10(n_lo)) * i / (points - 1)));
    }
    std::ostringstream os;
    os << "curve,target_log10_loss,N,E\n";
    for (const auto& [name, tgt] : targets) {
      const auto c = level_curve(k, tgt, grid);
      for (const auto& p : c.points) {
        os << name << ',' << format_double(tgt) << ',' << format_double(p.n) << ',' << format_double(p.e) << '\n';
      }
      for (const auto& s : c.skipped) os << "# " << name << " skipped N=" << cli_detail::sig(s.n) << ": " << s.reason << '\n';
    }
    cli_detail::emit(out_path, out, os.str());
  });

  std::string arch_name;
  ArchSpec custom{"custom", 0, 0, 0, 0};
  RoutingShape shape;
  auto* params = app.add_subcommand("params", "parameter and FLOP counts for the standard or a custom architecture");
  params->add_option("--arch", arch_name, "standard architecture name (15M ... 1.3B); default all");
  params->add_option("--d-model", custom.d_model, "custom d_model");
  params->add_option("--layers", custom.n_layers, "custom layer count");
  params->add_option("--heads", custom.n_heads, "custom head count");
  params->add_option("--kv", custom.kv_size, "custom key/value size");
  params->add_option("--experts", shape.experts, "E")->capture_default_str();
  params->add_option("--k", shape.k, "experts per token")->capture_default_str();
  params->add_option("--frequency", shape.frequency, "fraction of routed layers R")->capture_default_str();
  params->add_option("--seed", seed, "unused; accepted for uniformity");
  params->add_option("--out", out_path, "output file (default stdout)");
  on(params, [&] {
    std::vector<std::pair<ArchSpec, std::optional<std::int64_t>>> rows;
    if (custom.d_model || custom.n_layers || custom.n_heads || custom.kv_size) {
      rows.emplace_back(custom, std::nullopt);
    } else if (!arch_name.empty()) {
      try {
        const auto& r = table4_row(arch_name);
        rows.emplace_back(r.arch, r.actual_params);
      } catch (const DataError& ex) {
        throw UsageError(ex.what());
      }
    } else {
      for (const auto& r : table4()) rows.emplace_back(r.arch, r.actual_params);
    }
    std::ostringstream os;
    os << "name,E,K,R,N,P,F_tflops,B,routed_layers,actual_params\n";
    for (const auto& [arch, actual] : rows) {
      const auto c = param_flop_model(arch, shape);
      os << arch.name << ',' << shape.experts << ',' << shape.k << ',' << format_double(shape.frequency) << ','
         << format_double(c.n) << ',' << format_double(c.p) << ',' << format_double(c.f_tflops) << ','
         << format_double(c.b) << ',' << c.routed_layers << ',' << (actual ? std::to_string(*actual) : "") << '\n';
    }
    cli_detail::emit(out_path, out, os.str());
  });

  HashBalanceConfig hb;
  std::string strategy = "modulo";
  std::size_t vocab = 32000;
  double zipf_s = 1.0;
  std::string summary_path;
  auto* route = app.add_subcommand("route-sim", "hash routing over a Zipf token stream with capacity limits");
  route->add_option("--strategy", strategy, "modulo, random or greedy")->capture_default_str();
  route->add_option("--experts", hb.experts, "E")->capture_default_str()->check(CLI::PositiveNumber);
  route->add_option("--capacity-factor", hb.capacity_factor, "C")->capture_default_str();
  route->add_option("--stream", hb.stream_len, "tokens in the stream")->capture_default_str();
  route->add_option("--batch", hb.batch_tokens, "tokens per capacity window")->capture_default_str();
  route->add_option("--vocab", vocab, "vocabulary size")->capture_default_str()->check(CLI::PositiveNumber);
  route->add_option("--zipf", zipf_s, "Zipf exponent")->capture_default_str();
  route->add_option("--seed", hb.seed, "stream and permutation seed")->capture_default_str();
  route->add_option("--out", out_path, "load CSV (default stdout)");
  route->add_option("--summary", summary_path, "also write a JSON summary here");
  on(route, [&] {
    hb.strategy = parse_hash_strategy(strategy);
    const auto freq = zipf_frequencies(vocab, zipf_s);
    const auto rep = simulate_hash_balance(freq, hb);
    std::ostringstream os;
    write_load_csv(os, rep);
    cli_detail::emit(out_path, out, os.str());
    if (!summary_path.empty()) write_text_file(summary_path, hash_balance_to_json(rep, hb).dump(2) + "\n");
  });

  std::string method = "baseline";
  int toy_vocab = 256;
  int toy_experts = 8;
  std::optional<int> steps, batch;
  std::optional<double> lr, entropy_w, balance_w, pg_w, value_w, top_p;
  auto* toy = app.add_subcommand("train-toy", "REINFORCE router on a synthetic token-to-expert task; writes the learning curve CSV");
  toy->add_option("--method", method, "greedy, nucleus or baseline")->capture_default_str();
  toy->add_option("--vocab", toy_vocab, "V")->capture_default_str();
  toy->add_option("--experts", toy_experts, "E")->capture_default_str();
  toy->add_option("--steps", steps, "training steps (default 5000)");
  toy->add_option("--batch", batch, "tokens per step (default 8192)");
  toy->add_option("--lr", lr, "learning rate (default 200)");
  toy->add_option("--entropy-w", entropy_w, "entropy weight");
  toy->add_option("--balance-w", balance_w, "balancing-loss weight");
  toy->add_option("--pg-w", pg_w, "policy-gradient weight");
  toy->add_option("--value-w", value_w, "value weight");
  toy->add_option("--top-p", top_p, "nucleus top-p");
  toy->add_option("--seed", seed, "task and sampling seed")->capture_default_str();
  toy->add_option("--out", out_path, "curve CSV (default stdout; the summary then goes to stderr)");
  on(toy, [&] {
    const auto m = parse_router_method(method);
    auto h = TrainHyper::defaults_for(m);
    if (steps) h.steps = *steps;
    if (batch) h.batch = *batch;
    if (lr) h.lr = *lr;
    if (entropy_w) h.entropy_w = *entropy_w;
    if (balance_w) h.balance_w = *balance_w;
    if (pg_w) h.pg_w = *pg_w;
    if (value_w) h.value_w = *value_w;
    if (top_p) h.top_p = *top_p;
    h.seed = derive_seed(seed, 1);
    const auto task = make_task(toy_vocab, toy_experts, seed);
    const auto res = train_router(task, m, h);
    std::ostringstream os;
    write_curve_csv(os, res.curve);
    cli_detail::emit(out_path, out, os.str());
    const auto ev = eval_policy(task, res.policy);
    std::ostream& s = out_path.empty() || out_path == "-" ? err : out;
    s << "method " << to_string(m) << "\nmean_reward " << format_double(ev.mean_reward) << "\noptimal_rate "
      << format_double(ev.optimal_rate) << "\noptimal_mass " << format_double(ev.optimal_mass)
      << "\nexpert_load_entropy " << format_double(ev.expert_load_entropy) << '\n';
  });

  std::string technique = "sbase";
  auto* synth = app.add_subcommand("synth", "write a noisy synthetic run table from built-in coefficients");
  synth->add_option("--technique", technique, "sbase, rlr or hash")->capture_default_str();
  synth->add_option("--seed", seed, "noise seed")->capture_default_str();
  synth->add_option("--out", out_path, "output file (default stdout)");
  on(synth, [&] {
    Technique t;
    try {
      t = parse_technique(technique);
    } catch (const DataError& ex) {
      throw UsageError(ex.what());
    }
    const auto table = synthetic_run_table(t, seed);
    cli_detail::emit(out_path, out, "# " + table.provenance + "\n" + runs_to_csv(table));
  });

  std::string fixture_name;
  auto* fixture = app.add_subcommand("fixture", "print a built-in table as CSV, or list them");
  fixture->add_option("--fixture", fixture_name, "table2, table3, table4, table5, table6, table7, transfer, rl-hyper");
  fixture->add_option("--out", out_path, "output file (default stdout)");
  on(fixture, [&] {
    if (fixture_name.empty()) {
      for (const auto& name : fixture_names()) out << name << '\n';
      return;
    }
    cli_detail::emit(out_path, out, load_fixture(fixture_name));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << ROUTESCALE_VERSION << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return static_cast<int>(ErrorCategory::Usage);
  }

  try {
    action();
    return 0;
  } catch (const Error& e) {
    err << "routescale: " << e.what() << '\n';
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    err << "error (data): " << e.what() << '\n';
    return static_cast<int>(ErrorCategory::Data);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace routescale
