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

// REINFORCE routing on a synthetic token -> expert reward table.
//
// The router is a V x E table of logits (a linear router on one-hot token
// inputs). Experts are fixed; only the router and, for the baseline
// variant, a per-token value estimate are learned. Gradients are analytic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "routescale/error.hpp"
#include "routescale/fixtures.hpp"
#include "routescale/random.hpp"
#include "routescale/routing.hpp"
#include "routescale/text.hpp"

namespace routescale {

struct SyntheticTask {
  int vocab = 0;
  int experts = 0;
  std::vector<double> reward;  // vocab x experts, row-major
  std::vector<int> optimal;    // argmax expert per token
  std::uint64_t seed = 0;

  double r(int v, int e) const { return reward[static_cast<std::size_t>(v) * experts + e]; }
};

/// Optimal expert of token v is v mod E with reward 1; the others draw
/// uniformly from [0, 0.5).
inline SyntheticTask make_task(int vocab, int experts, std::uint64_t seed) {
  if (experts < 1) throw DomainError("task needs E >= 1");
  if (vocab < experts) throw DomainError("task needs V >= E");
  SyntheticTask t{vocab, experts, std::vector<double>(static_cast<std::size_t>(vocab) * experts), {}, seed};
  Rng rng(seed);
  for (auto& x : t.reward) x = rng.uniform(0.0, 0.5);
  for (int v = 0; v < vocab; ++v) {
    t.optimal.push_back(v % experts);
    t.reward[static_cast<std::size_t>(v) * experts + v % experts] = 1.0;
  }
  return t;
}

/// Expert 0 is optimal for every token.
inline SyntheticTask make_dominated_task(int vocab, int experts, std::uint64_t seed) {
  SyntheticTask t = make_task(vocab, experts, seed);
  Rng rng(derive_seed(seed, 7));
  for (int v = 0; v < vocab; ++v) {
    for (int e = 0; e < experts; ++e) t.reward[static_cast<std::size_t>(v) * experts + e] = e == 0 ? 1.0 : rng.uniform(0.0, 0.5);
    t.optimal[static_cast<std::size_t>(v)] = 0;
  }
  return t;
}

enum class RouterMethod { Greedy, Nucleus, Baseline };

inline std::string_view to_string(RouterMethod m) {
  switch (m) {
    case RouterMethod::Greedy: return "greedy";
    case RouterMethod::Nucleus: return "nucleus";
    case RouterMethod::Baseline: return "baseline";
  }
  return "?";
}

inline RouterMethod parse_router_method(std::string_view s) {
  if (s == "greedy" || s == "G" || s == "rlr-g") return RouterMethod::Greedy;
  if (s == "nucleus" || s == "S" || s == "rlr-s") return RouterMethod::Nucleus;
  if (s == "baseline" || s == "B" || s == "rlr-b") return RouterMethod::Baseline;
  throw UsageError("unknown router method '" + std::string(s) + "' (greedy, nucleus, baseline)");
}

struct RouterPolicy {
  int vocab = 0;
  int experts = 0;
  RouterMethod method = RouterMethod::Baseline;
  double top_p = 1.0;
  std::vector<double> w;         // vocab x experts logits
  std::vector<double> baseline;  // per token, Baseline method only

  static RouterPolicy zeros(int vocab, int experts, RouterMethod method, double top_p = 1.0) {
    RouterPolicy p{vocab, experts, method, top_p, std::vector<double>(static_cast<std::size_t>(vocab) * experts, 0.0),
                   std::vector<double>(method == RouterMethod::Baseline ? static_cast<std::size_t>(vocab) : 0, 0.0)};
    return p;
  }

  std::span<const double> logits(int v) const {
    return {w.data() + static_cast<std::size_t>(v) * experts, static_cast<std::size_t>(experts)};
  }

  std::vector<double> probs(int v) const { return softmax(logits(v)); }

  /// Distribution the router acts with: argmax for Greedy, the top-p
  /// nucleus for Nucleus, the full softmax for Baseline.
  std::vector<double> acting_distribution(int v) const {
    auto p = probs(v);
    if (method == RouterMethod::Greedy) {
      const int a = top_k_indices(p, 1)[0];
      std::fill(p.begin(), p.end(), 0.0);
      p[static_cast<std::size_t>(a)] = 1.0;
      return p;
    }
    if (method == RouterMethod::Nucleus) return nucleus_filter(p, top_p);
    return p;
  }
};

struct TrainHyper {
  double lr = 200.0;
  int steps = 5000;
  int batch = 8192;
  double entropy_w = 0.0;
  double balance_w = 1.0;
  double pg_w = 1e-1;
  double value_w = 0.0;
  double delta = 1.0;
  double top_p = 1.0;
  std::uint64_t seed = 0;

  /// Weights from the published per-variant hyperparameters.
  static TrainHyper defaults_for(RouterMethod m) {
    const auto& rows = rl_hyperparameters();
    const auto& row = rows[m == RouterMethod::Greedy ? 0 : (m == RouterMethod::Nucleus ? 1 : 2)];
    TrainHyper h;
    h.entropy_w = row.entropy_w;
    h.balance_w = row.balance_w;
    h.pg_w = row.pg_w;
    h.top_p = row.top_p.value_or(1.0);
    h.value_w = row.value_w.value_or(0.0);
    return h;
  }

  void validate() const {
    if (!(lr > 0.0) || steps < 0 || batch < 1 || !(delta > 0.0) || !(top_p > 0.0 && top_p <= 1.0)) {
      throw UsageError("invalid training hyperparameters (need lr > 0, steps >= 0, batch >= 1, delta > 0, top_p in (0,1])");
    }
  }
};

/// One sampled batch: token ids, chosen experts, rewards and (Baseline)
/// the baseline values used for the advantages.
struct RouterBatch {
  std::vector<int> tokens;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<double> baselines;  // empty: advantages are the raw rewards
};

struct LossWeights {
  double pg = 1.0;
  double entropy = 0.0;
  double balance = 0.0;
};

namespace detail {

struct BatchStats {
  std::vector<double> probs;     // vocab x experts softmax
  std::vector<int> argmax;       // per vocab entry
  std::vector<double> count;     // tokens of each vocab entry in the batch
  std::vector<double> g;         // argmax choices per expert
};

inline BatchStats batch_stats(const RouterPolicy& pol, const RouterBatch& b) {
  BatchStats s;
  const auto e = static_cast<std::size_t>(pol.experts);
  s.probs.resize(static_cast<std::size_t>(pol.vocab) * e);
  s.argmax.resize(static_cast<std::size_t>(pol.vocab));
  s.count.assign(static_cast<std::size_t>(pol.vocab), 0.0);
  s.g.assign(e, 0.0);
  for (int v = 0; v < pol.vocab; ++v) {
    const auto p = pol.probs(v);
    std::copy(p.begin(), p.end(), s.probs.begin() + static_cast<std::ptrdiff_t>(v * e));
    s.argmax[static_cast<std::size_t>(v)] = top_k_indices(p, 1)[0];
  }
  for (int v : b.tokens) {
    s.count[static_cast<std::size_t>(v)] += 1.0;
    s.g[static_cast<std::size_t>(s.argmax[static_cast<std::size_t>(v)])] += 1.0;
  }
  return s;
}

}  // namespace detail

/// -pg * mean(log pi_a * A) + entropy * mean(p_a log p_a) + balance * L_B,
/// with L_B the balancing loss over the original argmax decisions.
inline double composite_loss(const RouterPolicy& pol, const RouterBatch& b, const LossWeights& w) {
  const auto s = detail::batch_stats(pol, b);
  const auto e = static_cast<std::size_t>(pol.experts);
  const double n = static_cast<double>(b.tokens.size());
  double pg = 0.0;
  double ent = 0.0;
  for (std::size_t i = 0; i < b.tokens.size(); ++i) {
    const double pa = s.probs[static_cast<std::size_t>(b.tokens[i]) * e + static_cast<std::size_t>(b.actions[i])];
    const double adv = b.baselines.empty() ? b.rewards[i] : b.rewards[i] - b.baselines[i];
    pg += std::log(pa) * adv;
    ent += std::log(pa) * pa;
  }
  double lb = 0.0;
  for (std::size_t j = 0; j < e; ++j) {
    double m = 0.0;
    for (int v = 0; v < pol.vocab; ++v) m += s.count[static_cast<std::size_t>(v)] * s.probs[static_cast<std::size_t>(v) * e + j];
    lb += (m / n) * (s.g[j] / n);
  }
  lb *= static_cast<double>(e);
  return -w.pg * pg / n + w.entropy * ent / n + w.balance * lb;
}

/// Analytic gradient of composite_loss with respect to the logits table
/// (argmax counts held fixed).
inline std::vector<double> composite_gradient(const RouterPolicy& pol, const RouterBatch& b, const LossWeights& w) {
  const auto s = detail::batch_stats(pol, b);
  const auto e = static_cast<std::size_t>(pol.experts);
  const double n = static_cast<double>(b.tokens.size());
  std::vector<double> grad(pol.w.size(), 0.0);
  // Per-sample terms have the form coef * (onehot(a) - P_v).
  std::vector<double> coef_sum(static_cast<std::size_t>(pol.vocab), 0.0);
  for (std::size_t i = 0; i < b.tokens.size(); ++i) {
    const auto v = static_cast<std::size_t>(b.tokens[i]);
    const auto a = static_cast<std::size_t>(b.actions[i]);
    const double pa = s.probs[v * e + a];
    const double adv = b.baselines.empty() ? b.rewards[i] : b.rewards[i] - b.baselines[i];
    const double coef = (-w.pg * adv + w.entropy * (std::log(pa) + 1.0) * pa) / n;
    grad[v * e + a] += coef;
    coef_sum[v] += coef;
  }
  const double bal_scale = w.balance * static_cast<double>(e) / (n * n);
  for (std::size_t v = 0; v < static_cast<std::size_t>(pol.vocab); ++v) {
    if (coef_sum[v] == 0.0 && s.count[v] == 0.0) continue;
    double gp = 0.0;
    for (std::size_t j = 0; j < e; ++j) gp += s.g[j] * s.probs[v * e + j];
    for (std::size_t j = 0; j < e; ++j) {
      const double p = s.probs[v * e + j];
      grad[v * e + j] -= coef_sum[v] * p;
      grad[v * e + j] += bal_scale * s.count[v] * p * (s.g[j] - gp);
    }
  }
  return grad;
}

struct CurvePoint {
  int step;
  double mean_reward;
  double optimal_rate;
  double balance_loss;
};

struct TrainResult {
  RouterPolicy policy;
  std::vector<CurvePoint> curve;
};

inline TrainResult train_router(const SyntheticTask& task, RouterMethod method, const TrainHyper& h) {
  h.validate();
  TrainResult out;
  auto& pol = out.policy;
  pol = RouterPolicy::zeros(task.vocab, task.experts, method, h.top_p);
  const auto e = static_cast<std::size_t>(task.experts);
  const LossWeights lw{h.pg_w, method == RouterMethod::Baseline ? h.entropy_w : 0.0, h.balance_w};
  Rng rng(h.seed);
  RouterBatch b;
  b.tokens.resize(static_cast<std::size_t>(h.batch));
  b.actions.resize(b.tokens.size());
  b.rewards.resize(b.tokens.size());
  std::vector<double> cumulative(static_cast<std::size_t>(task.vocab) * e);
  out.curve.reserve(static_cast<std::size_t>(h.steps));

  for (int step = 0; step < h.steps; ++step) {
    for (int v = 0; v < task.vocab; ++v) {
      const auto act = pol.acting_distribution(v);
      std::partial_sum(act.begin(), act.end(), cumulative.begin() + static_cast<std::ptrdiff_t>(v * e));
    }
    double reward_sum = 0.0;
    double optimal = 0.0;
    for (std::size_t i = 0; i < b.tokens.size(); ++i) {
      const int v = static_cast<int>(rng.below(static_cast<std::uint64_t>(task.vocab)));
      const std::span<const double> cum(cumulative.data() + static_cast<std::size_t>(v) * e, e);
      const int a = method == RouterMethod::Greedy ? static_cast<int>(std::upper_bound(cum.begin(), cum.end(), 0.5) - cum.begin())
                                                   : static_cast<int>(rng.categorical(cum));
      b.tokens[i] = v;
      b.actions[i] = a;
      b.rewards[i] = task.r(v, a);
      reward_sum += b.rewards[i];
      optimal += a == task.optimal[static_cast<std::size_t>(v)] ? 1.0 : 0.0;
    }
    if (method == RouterMethod::Baseline) {
      b.baselines.resize(b.tokens.size());
      for (std::size_t i = 0; i < b.tokens.size(); ++i) b.baselines[i] = pol.baseline[static_cast<std::size_t>(b.tokens[i])];
    }

    const auto stats = detail::batch_stats(pol, b);
    double lb = 0.0;
    const double n = static_cast<double>(b.tokens.size());
    for (std::size_t j = 0; j < e; ++j) {
      double m = 0.0;
      for (int v = 0; v < task.vocab; ++v) m += stats.count[static_cast<std::size_t>(v)] * stats.probs[static_cast<std::size_t>(v) * e + j];
      lb += (m / n) * (stats.g[j] / n);
    }
    out.curve.push_back({step, reward_sum / n, optimal / n, lb * static_cast<double>(e)});

    const auto grad = composite_gradient(pol, b, lw);
    for (std::size_t k = 0; k < pol.w.size(); ++k) pol.w[k] -= h.lr * grad[k];
    if (method == RouterMethod::Baseline) {
      // Gradient step on the Huber value loss.
      for (std::size_t i = 0; i < b.tokens.size(); ++i) {
        const double diff = b.rewards[i] - b.baselines[i];
        pol.baseline[static_cast<std::size_t>(b.tokens[i])] += h.lr * h.value_w * std::clamp(diff, -h.delta, h.delta) / n;
      }
    }
    for (std::size_t k = 0; k < pol.w.size(); ++k) {
      if (!std::isfinite(pol.w[k])) {
        throw NumericError("router training diverged at step " + std::to_string(step) + ": logit for token " +
                           std::to_string(k / e) + ", expert " + std::to_string(k % e) + " is " +
                           format_double(pol.w[k]) + " (try a smaller --lr)");
      }
    }
  }
  return out;
}

struct PolicyEval {
  double mean_reward = 0.0;          // under the acting distribution
  double optimal_rate = 0.0;         // tokens whose argmax is the optimal expert
  double optimal_mass = 0.0;         // mean acting probability of the optimal expert
  double expert_load_entropy = 0.0;  // nats, of the expected per-expert load
};

/// Exact expectation over a uniform token distribution.
inline PolicyEval eval_policy(const SyntheticTask& task, const RouterPolicy& pol) {
  if (task.vocab != pol.vocab || task.experts != pol.experts) throw DataError("policy and task shapes differ");
  PolicyEval out;
  std::vector<double> load(static_cast<std::size_t>(task.experts), 0.0);
  for (int v = 0; v < task.vocab; ++v) {
    const auto act = pol.acting_distribution(v);
    const int opt = task.optimal[static_cast<std::size_t>(v)];
    for (int e = 0; e < task.experts; ++e) {
      out.mean_reward += act[static_cast<std::size_t>(e)] * task.r(v, e);
      load[static_cast<std::size_t>(e)] += act[static_cast<std::size_t>(e)];
    }
    out.optimal_mass += act[static_cast<std::size_t>(opt)];
    if (top_k_indices(pol.probs(v), 1)[0] == opt) out.optimal_rate += 1.0;
  }
  const double inv = 1.0 / task.vocab;
  out.mean_reward *= inv;
  out.optimal_rate *= inv;
  out.optimal_mass *= inv;
  for (double l : load) {
    const double q = l * inv;
    if (q > 0.0) out.expert_load_entropy -= q * std::log(q);
  }
  return out;
}

/// Learning curve as CSV: step,mean_reward,optimal_rate,balance_loss.
inline void write_curve_csv(std::ostream& os, std::span<const CurvePoint> curve) {
  os << "step,mean_reward,optimal_rate,balance_loss\n";
  for (const auto& c : curve) {
    os << c.step << ',' << format_double(c.mean_reward) << ',' << format_double(c.optimal_rate) << ','
       << format_double(c.balance_loss) << '\n';
  }
}

}  // namespace routescale
