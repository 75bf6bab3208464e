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

// Per-layer routing math: softmax gating, Sinkhorn balanced assignment,
// hash routing, the balancing loss, nucleus filtering and REINFORCE terms.
//
// Everything here uses natural logarithms. Ties always go to the lowest
// expert index.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "routescale/error.hpp"
#include "routescale/random.hpp"

namespace routescale {

/// T x E router logits, one row per token.
using RouterLogits = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

inline void check_logits(const RouterLogits& logits) {
  if (logits.rows() < 1 || logits.cols() < 1) throw DataError("router logits need T >= 1 and E >= 1");
  if (!logits.allFinite()) throw DataError("router logits contain non-finite entries");
}

inline double log_sum_exp(const double* v, std::size_t n, std::size_t stride = 1) {
  double m = -INFINITY;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i * stride]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i * stride] - m);
  return m + std::log(s);
}

}  // namespace detail

inline std::vector<double> softmax(std::span<const double> logits) {
  const double lse = detail::log_sum_exp(logits.data(), logits.size());
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = std::exp(logits[i] - lse);
  return out;
}

/// Indices of the k largest values, descending; ties toward the lower index.
inline std::vector<int> top_k_indices(std::span<const double> values, std::size_t k) {
  std::vector<int> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return values[a] > values[b]; });
  idx.resize(k);
  return idx;
}

struct GateOutput {
  std::size_t tokens = 0;
  std::size_t k = 0;
  std::vector<int> selected;     // tokens x k, row-major
  std::vector<double> weights;   // softmax mass at each selected expert

  int expert(std::size_t t, std::size_t j) const { return selected[t * k + j]; }
  double weight(std::size_t t, std::size_t j) const { return weights[t * k + j]; }
};

inline GateOutput softmax_gate(const RouterLogits& logits, std::size_t k) {
  detail::check_logits(logits);
  const auto e = static_cast<std::size_t>(logits.cols());
  if (k < 1 || k > e) {
    throw DomainError("softmax_gate: K=" + std::to_string(k) + " outside [1, E=" + std::to_string(e) + "]");
  }
  GateOutput out;
  out.tokens = static_cast<std::size_t>(logits.rows());
  out.k = k;
  out.selected.reserve(out.tokens * k);
  out.weights.reserve(out.tokens * k);
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const std::span<const double> row(logits.row(t).data(), e);
    const auto probs = softmax(row);
    for (int j : top_k_indices(row, k)) {
      out.selected.push_back(j);
      out.weights.push_back(probs[static_cast<std::size_t>(j)]);
    }
  }
  return out;
}

struct SinkhornOptions {
  double tolerance = 1e-2;  // on the L1 marginal violation
  int max_iterations = 100;
};

struct AssignmentPlan {
  RouterLogits plan;           // T x E, rows sum to 1/T and columns to 1/E
  Eigen::VectorXd dual_f;      // length T
  Eigen::VectorXd dual_g;      // length E
  int iterations = 0;
  double constraint_violation = 0.0;
  bool converged = false;
  std::vector<std::string> warnings;
};

namespace detail {

inline void sinkhorn_plan_from_duals(const RouterLogits& l, const Eigen::VectorXd& f, const Eigen::VectorXd& g,
                                     RouterLogits& plan) {
  const double scale = 1.0 / static_cast<double>(l.rows() * l.cols());
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    for (Eigen::Index j = 0; j < l.cols(); ++j) plan(i, j) = scale * std::exp(l(i, j) + f(i) + g(j));
  }
}

inline double marginal_violation(const RouterLogits& plan) {
  const double row_target = 1.0 / static_cast<double>(plan.rows());
  const double col_target = 1.0 / static_cast<double>(plan.cols());
  double v = 0.0;
  for (Eigen::Index i = 0; i < plan.rows(); ++i) v += std::abs(plan.row(i).sum() - row_target);
  for (Eigen::Index j = 0; j < plan.cols(); ++j) v += std::abs(plan.col(j).sum() - col_target);
  return v;
}

}  // namespace detail

/// Entropic balanced assignment by alternating dual ascent in the log domain:
///   f_i = -log (1/E) sum_j exp(L_ij + g_j)
///   g_j = -log (1/T) sum_i exp(L_ij + f_i)
/// with plan Pi = exp(L + f (+) g) / (T E). Stops once the L1 violation of
/// both marginals is within tolerance, checked before each update.
inline AssignmentPlan sinkhorn_plan(const RouterLogits& logits, const SinkhornOptions& opts = {}) {
  detail::check_logits(logits);
  if (!(opts.tolerance > 0.0)) throw UsageError("sinkhorn tolerance must be positive");
  if (opts.max_iterations < 0) throw UsageError("sinkhorn max_iterations must be >= 0");
  const Eigen::Index t = logits.rows();
  const Eigen::Index e = logits.cols();

  AssignmentPlan out;
  if (t < e) {
    out.warnings.push_back("T=" + std::to_string(t) + " tokens is fewer than E=" + std::to_string(e) +
                           " experts; every expert cannot receive a whole token");
  }
  out.dual_f = Eigen::VectorXd::Zero(t);
  out.dual_g = Eigen::VectorXd::Zero(e);
  out.plan.resize(t, e);
  const double log_e = std::log(static_cast<double>(e));
  const double log_t = std::log(static_cast<double>(t));
  std::vector<double> buf(static_cast<std::size_t>(std::max(t, e)));

  for (;;) {
    detail::sinkhorn_plan_from_duals(logits, out.dual_f, out.dual_g, out.plan);
    out.constraint_violation = detail::marginal_violation(out.plan);
    if (out.constraint_violation <= opts.tolerance) {
      out.converged = true;
      break;
    }
    if (out.iterations >= opts.max_iterations) break;
    for (Eigen::Index i = 0; i < t; ++i) {
      for (Eigen::Index j = 0; j < e; ++j) buf[static_cast<std::size_t>(j)] = logits(i, j) + out.dual_g(j);
      out.dual_f(i) = log_e - detail::log_sum_exp(buf.data(), static_cast<std::size_t>(e));
    }
    for (Eigen::Index j = 0; j < e; ++j) {
      for (Eigen::Index i = 0; i < t; ++i) buf[static_cast<std::size_t>(i)] = logits(i, j) + out.dual_f(i);
      out.dual_g(j) = log_t - detail::log_sum_exp(buf.data(), static_cast<std::size_t>(t));
    }
    ++out.iterations;
  }
  return out;
}

/// Per-token argmax of the plan, ties toward the lower index.
inline std::vector<int> greedy_project(const AssignmentPlan& plan) {
  const auto& p = plan.plan;
  if (p.rows() < 1 || p.cols() < 1) throw DataError("greedy_project: empty plan");
  std::vector<int> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < p.cols(); ++j) {
      if (p(i, j) > p(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

enum class HashStrategy { Modulo, Random, GreedyFrequency };

inline std::string_view to_string(HashStrategy s) {
  switch (s) {
    case HashStrategy::Modulo: return "modulo";
    case HashStrategy::Random: return "random";
    case HashStrategy::GreedyFrequency: return "greedy";
  }
  return "?";
}

inline HashStrategy parse_hash_strategy(std::string_view name) {
  if (name == "modulo") return HashStrategy::Modulo;
  if (name == "random") return HashStrategy::Random;
  if (name == "greedy" || name == "greedy-frequency") return HashStrategy::GreedyFrequency;
  throw UsageError("unknown hash strategy '" + std::string(name) + "' (modulo, random, greedy)");
}

/// Fixed token-id -> expert map.
class HashRouter {
 public:
  static HashRouter modulo(std::size_t experts) { return HashRouter(HashStrategy::Modulo, experts, {}); }

  /// Seeded permutation of the vocabulary, then modulo E.
  static HashRouter random(std::size_t vocab, std::size_t experts, std::uint64_t seed) {
    check_experts(experts);
    std::vector<int> table(vocab);
    const auto perm = random_permutation(vocab, seed);
    for (std::size_t v = 0; v < vocab; ++v) table[v] = static_cast<int>(perm[v] % experts);
    return HashRouter(HashStrategy::Random, experts, std::move(table));
  }

  /// Tokens by descending frequency, each to the expert with the least
  /// frequency mass so far.
  static HashRouter greedy(std::span<const double> freq, std::size_t experts) {
    check_experts(experts);
    if (freq.empty()) throw DataError("greedy hash routing needs a frequency table");
    std::vector<std::size_t> order(freq.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return freq[a] > freq[b]; });
    std::vector<double> load(experts, 0.0);
    std::vector<int> table(freq.size());
    for (std::size_t v : order) {
      const auto it = std::min_element(load.begin(), load.end());
      const auto e = static_cast<std::size_t>(it - load.begin());
      table[v] = static_cast<int>(e);
      load[e] += freq[v];
    }
    return HashRouter(HashStrategy::GreedyFrequency, experts, std::move(table));
  }

  HashStrategy strategy() const { return strategy_; }
  std::size_t experts() const { return experts_; }

  int route(std::int64_t token) const {
    if (token < 0) throw DomainError("token ids must be non-negative");
    if (strategy_ == HashStrategy::Modulo) return static_cast<int>(static_cast<std::uint64_t>(token) % experts_);
    if (static_cast<std::size_t>(token) >= table_.size()) {
      throw DomainError("token id " + std::to_string(token) + " outside the vocabulary of " +
                        std::to_string(table_.size()));
    }
    return table_[static_cast<std::size_t>(token)];
  }

  std::vector<int> route(std::span<const std::int64_t> tokens) const {
    std::vector<int> out(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) out[i] = route(tokens[i]);
    return out;
  }

 private:
  HashRouter(HashStrategy s, std::size_t experts, std::vector<int> table)
      : strategy_(s), experts_(experts), table_(std::move(table)) {
    check_experts(experts);
  }

  static void check_experts(std::size_t experts) {
    if (experts < 1) throw DomainError("hash routing needs E >= 1");
  }

  HashStrategy strategy_;
  std::size_t experts_;
  std::vector<int> table_;
};

inline HashRouter make_hash_router(HashStrategy s, std::size_t experts, std::span<const double> freq = {},
                                   std::uint64_t seed = 0) {
  switch (s) {
    case HashStrategy::Modulo: return HashRouter::modulo(experts);
    case HashStrategy::Random:
      if (freq.empty()) throw DataError("random hash routing needs the vocabulary (frequency table) size");
      return HashRouter::random(freq.size(), experts, seed);
    case HashStrategy::GreedyFrequency: return HashRouter::greedy(freq, experts);
  }
  throw UsageError("unknown hash strategy");
}

inline std::vector<int> hash_route(std::span<const std::int64_t> tokens, std::size_t experts, HashStrategy s,
                                   std::span<const double> freq = {}, std::uint64_t seed = 0) {
  return make_hash_router(s, experts, freq, seed).route(tokens);
}

/// E * sum_e m_e * g_e / T, with m_e the mean router probability of expert e
/// and g_e the number of tokens whose original argmax choice is e.
inline double balancing_loss(const RouterLogits& probs, std::span<const int> choices) {
  const auto t = static_cast<std::size_t>(probs.rows());
  const auto e = static_cast<std::size_t>(probs.cols());
  if (t < 1 || e < 1) throw DataError("balancing_loss: empty probabilities");
  if (choices.size() != t) throw DataError("balancing_loss: one choice per token required");
  std::vector<double> m(e, 0.0);
  std::vector<double> g(e, 0.0);
  for (std::size_t i = 0; i < t; ++i) {
    const double row = probs.row(static_cast<Eigen::Index>(i)).sum();
    if (std::abs(row - 1.0) > 1e-6) {
      throw DataError("balancing_loss: probabilities of token " + std::to_string(i) + " sum to " +
                      std::to_string(row));
    }
    for (std::size_t j = 0; j < e; ++j) m[j] += probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    const int c = choices[i];
    if (c < 0 || static_cast<std::size_t>(c) >= e) throw DataError("balancing_loss: choice out of range");
    g[static_cast<std::size_t>(c)] += 1.0;
  }
  double s = 0.0;
  for (std::size_t j = 0; j < e; ++j) s += (m[j] / static_cast<double>(t)) * (g[j] / static_cast<double>(t));
  return static_cast<double>(e) * s;
}

/// Keeps the smallest prefix of the descending-sorted experts holding at
/// least mass p, renormalized; zeroes the rest.
inline std::vector<double> nucleus_filter(std::span<const double> probs, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw DomainError("nucleus top-p must lie in (0, 1]");
  if (probs.empty()) throw DataError("nucleus_filter: empty distribution");
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-6) throw DataError("nucleus_filter: probabilities sum to " + std::to_string(total));
  const auto order = top_k_indices(probs, probs.size());
  std::vector<double> out(probs.size(), 0.0);
  double kept = 0.0;
  for (int j : order) {
    out[static_cast<std::size_t>(j)] = probs[static_cast<std::size_t>(j)];
    kept += probs[static_cast<std::size_t>(j)];
    if (kept >= p * total - 1e-12) break;
  }
  // Nothing trimmed: return the input as is rather than rescaling by ~1.
  if (std::equal(out.begin(), out.end(), probs.begin())) return out;
  for (double& v : out) v /= kept;
  return out;
}

struct RlWeights {
  double policy = 1.0;
  double entropy = 0.0;
  double value = 0.0;
};

struct RlLossTerms {
  double policy_gradient = 0.0;  // mean(log pi_i * A_i), A_i = R_i - b_i (or R_i)
  double entropy = 0.0;          // mean(log p_i * p_i)
  double value = 0.0;            // mean Huber(R_i - b_i; delta)
  double combined = 0.0;         // -w_p * policy + w_e * entropy + w_v * value
  RlWeights weights;
};

inline double huber(double residual, double delta) {
  const double a = std::abs(residual);
  return a <= delta ? 0.5 * residual * residual : delta * (a - 0.5 * delta);
}

/// REINFORCE loss terms over a batch. `log_probs` are natural-log
/// probabilities of the selected experts; the entropy term is taken over
/// these same per-sample probabilities. The combined value is the loss to
/// minimize, so the policy term enters with a minus sign.
inline RlLossTerms rl_losses(std::span<const double> log_probs, std::span<const double> rewards,
                             std::optional<std::span<const double>> baselines, const RlWeights& w = {},
                             double delta = 1.0) {
  const std::size_t n = log_probs.size();
  if (n == 0) throw DataError("rl_losses: empty batch");
  if (rewards.size() != n || (baselines && baselines->size() != n)) {
    throw DataError("rl_losses: per-sample inputs differ in length");
  }
  if (!(delta > 0.0)) throw DomainError("Huber delta must be positive");
  RlLossTerms out;
  out.weights = w;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(rewards[i])) throw DataError("rl_losses: non-finite reward");
    const double adv = baselines ? rewards[i] - (*baselines)[i] : rewards[i];
    out.policy_gradient += log_probs[i] * adv;
    out.entropy += log_probs[i] * std::exp(log_probs[i]);
    if (baselines) out.value += huber(adv, delta);
  }
  const double inv = 1.0 / static_cast<double>(n);
  out.policy_gradient *= inv;
  out.entropy *= inv;
  out.value *= inv;
  out.combined = -w.policy * out.policy_gradient + w.entropy * out.entropy + w.value * out.value;
  return out;
}

}  // namespace routescale
