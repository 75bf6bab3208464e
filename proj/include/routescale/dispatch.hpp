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

// Expert-parallel dispatch: worker shuffling, per-expert capacity, token
// dropping and device co-habitation, plus hash-balance studies over i.i.d.
// token streams.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "routescale/error.hpp"
#include "routescale/random.hpp"
#include "routescale/routing.hpp"

namespace routescale {

enum class DropMode {
  Random,        // uniform among the oversubscribed expert's tokens (seeded)
  HighestIndex,  // deterministic: the latest tokens are dropped
};

struct DispatchConfig {
  std::int64_t tokens = 0;  // T, per step
  std::int64_t experts = 1;
  double capacity_factor = 2.0;
  std::int64_t experts_per_device = 1;
  bool share_within_device = false;
  std::uint64_t seed = 0;
  DropMode drop_mode = DropMode::Random;

  void validate() const {
    if (tokens < 0) throw DomainError("dispatch needs T >= 0");
    if (experts < 1) throw DomainError("dispatch needs E >= 1");
    if (!(capacity_factor > 0.0) || !std::isfinite(capacity_factor)) {
      throw DomainError("capacity factor must be positive");
    }
    if (experts_per_device < 1 || experts % experts_per_device != 0) {
      throw DomainError("E=" + std::to_string(experts) + " is not divisible by experts_per_device=" +
                        std::to_string(experts_per_device));
    }
  }

  /// ceil((T / E) * C), the per-expert buffer size.
  std::int64_t capacity() const {
    return static_cast<std::int64_t>(std::ceil(static_cast<double>(tokens) / static_cast<double>(experts) *
                                               capacity_factor));
  }
};

struct DispatchReport {
  std::int64_t tokens = 0;
  std::int64_t capacity = 0;                 // per expert
  std::vector<std::int64_t> load;            // tokens assigned to each expert
  std::vector<std::int64_t> kept;            // tokens each expert processed
  std::vector<std::int64_t> dropped;         // per expert
  std::vector<std::int64_t> absorbed;        // slots borrowed from co-located experts
  std::vector<std::int64_t> device_absorbed; // per device total
  std::int64_t dropped_count = 0;
  double drop_rate = 0.0;
  double max_mean_load_ratio = 0.0;
};

struct CapacityResult {
  std::vector<char> kept;  // per token
  DispatchReport report;
};

struct WorkerAssignment {
  std::vector<int> worker;  // per token
  std::vector<std::string> warnings;
};

/// Sends token perm[t] (the t-th row after permuting) to worker floor(t E / T).
inline WorkerAssignment shuffle_workers(std::span<const std::size_t> perm, std::int64_t experts) {
  if (experts < 1) throw DomainError("shuffle needs E >= 1");
  const auto t = static_cast<std::int64_t>(perm.size());
  WorkerAssignment out;
  out.worker.assign(perm.size(), 0);
  if (t < experts) {
    out.warnings.push_back("T=" + std::to_string(t) + " is fewer than E=" + std::to_string(experts) +
                           "; some workers receive no tokens");
  }
  std::vector<char> seen(perm.size(), 0);
  for (std::int64_t pos = 0; pos < t; ++pos) {
    const std::size_t token = perm[static_cast<std::size_t>(pos)];
    if (token >= perm.size() || seen[token]) throw DataError("shuffle: not a permutation");
    seen[token] = 1;
    out.worker[token] = static_cast<int>(pos * experts / t);
  }
  return out;
}

inline WorkerAssignment shuffle_workers(std::int64_t tokens, std::int64_t experts, std::uint64_t seed) {
  if (tokens < 0) throw DomainError("shuffle needs T >= 0");
  const auto perm = random_permutation(static_cast<std::size_t>(tokens), seed);
  return shuffle_workers(perm, experts);
}

inline double max_mean_ratio(std::span<const std::int64_t> load) {
  if (load.empty()) return 0.0;
  const double total = std::accumulate(load.begin(), load.end(), 0.0);
  if (total <= 0.0) return 0.0;
  const double mx = static_cast<double>(*std::max_element(load.begin(), load.end()));
  return mx / (total / static_cast<double>(load.size()));
}

/// Enforces per-expert capacity. With device sharing, an oversubscribed
/// expert first takes unused slots of the experts on its device (in expert
/// index order) before any of its tokens are dropped.
inline CapacityResult apply_capacity(std::span<const int> assignments, const DispatchConfig& cfg) {
  cfg.validate();
  if (static_cast<std::int64_t>(assignments.size()) != cfg.tokens) {
    throw DataError("apply_capacity: " + std::to_string(assignments.size()) + " assignments for T=" +
                    std::to_string(cfg.tokens));
  }
  const auto e = static_cast<std::size_t>(cfg.experts);
  const std::int64_t cap = cfg.capacity();

  CapacityResult out;
  auto& rep = out.report;
  rep.tokens = cfg.tokens;
  rep.capacity = cap;
  rep.load.assign(e, 0);
  std::vector<std::vector<std::size_t>> members(e);
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const int a = assignments[i];
    if (a < 0 || static_cast<std::size_t>(a) >= e) throw DataError("apply_capacity: expert index out of range");
    ++rep.load[static_cast<std::size_t>(a)];
    members[static_cast<std::size_t>(a)].push_back(i);
  }

  rep.absorbed.assign(e, 0);
  const auto per_dev = static_cast<std::size_t>(cfg.experts_per_device);
  rep.device_absorbed.assign(e / per_dev, 0);
  if (cfg.share_within_device) {
    for (std::size_t dev = 0; dev < e / per_dev; ++dev) {
      std::int64_t free = 0;
      for (std::size_t j = dev * per_dev; j < (dev + 1) * per_dev; ++j) free += std::max<std::int64_t>(0, cap - rep.load[j]);
      for (std::size_t j = dev * per_dev; j < (dev + 1) * per_dev && free > 0; ++j) {
        const std::int64_t take = std::min(free, std::max<std::int64_t>(0, rep.load[j] - cap));
        rep.absorbed[j] = take;
        free -= take;
        rep.device_absorbed[dev] += take;
      }
    }
  }

  out.kept.assign(assignments.size(), 1);
  rep.kept.assign(e, 0);
  rep.dropped.assign(e, 0);
  for (std::size_t j = 0; j < e; ++j) {
    const std::int64_t limit = cap + rep.absorbed[j];
    const std::int64_t excess = rep.load[j] - limit;
    rep.kept[j] = std::min(rep.load[j], limit);
    if (excess <= 0) continue;
    rep.dropped[j] = excess;
    auto& toks = members[j];
    if (cfg.drop_mode == DropMode::Random) {
      // Partial Fisher-Yates: the last `excess` slots become a uniform sample.
      Rng rng(derive_seed(cfg.seed, j));
      for (std::size_t n = toks.size(), k = 0; k < static_cast<std::size_t>(excess); ++k, --n) {
        std::swap(toks[n - 1], toks[rng.below(n)]);
      }
    }
    for (std::size_t k = toks.size() - static_cast<std::size_t>(excess); k < toks.size(); ++k) out.kept[toks[k]] = 0;
  }
  rep.dropped_count = std::accumulate(rep.dropped.begin(), rep.dropped.end(), std::int64_t{0});
  rep.drop_rate = cfg.tokens > 0 ? static_cast<double>(rep.dropped_count) / static_cast<double>(cfg.tokens) : 0.0;
  rep.max_mean_load_ratio = max_mean_ratio(rep.load);
  return out;
}

/// Normalized Zipf frequencies: token v has mass proportional to 1/(v+1)^s.
inline std::vector<double> zipf_frequencies(std::size_t vocab, double s = 1.0) {
  if (vocab < 1) throw DomainError("Zipf table needs a non-empty vocabulary");
  std::vector<double> f(vocab);
  double total = 0.0;
  for (std::size_t v = 0; v < vocab; ++v) {
    f[v] = std::pow(static_cast<double>(v + 1), -s);
    total += f[v];
  }
  for (double& x : f) x /= total;
  return f;
}

struct HashBalanceConfig {
  std::int64_t experts = 8;
  HashStrategy strategy = HashStrategy::Modulo;
  double capacity_factor = 2.0;
  std::int64_t stream_len = 65536;
  std::int64_t batch_tokens = 8192;  // capacity is accounted per batch
  std::uint64_t seed = 0;
};

struct HashBalanceReport {
  DispatchReport totals;                  // summed over batches; capacity is per batch
  std::vector<std::int64_t> sorted_load;  // total load per expert, descending
  std::vector<std::int64_t> sorted_dropped;
  std::int64_t batches = 0;
  std::int64_t stream_capacity = 0;       // per-expert capacity summed over batches
};

/// Samples an i.i.d. stream from `freq`, routes it with the hash strategy and
/// applies capacity batch by batch. The stream depends only on the seed, so
/// strategies compared under one seed see the same tokens.
inline HashBalanceReport simulate_hash_balance(std::span<const double> freq, const HashBalanceConfig& cfg) {
  if (freq.empty()) throw DataError("hash balance needs a non-empty frequency table");
  if (cfg.stream_len < 0 || cfg.batch_tokens < 1) throw DomainError("stream_len >= 0 and batch_tokens >= 1 required");
  const auto router = make_hash_router(cfg.strategy, static_cast<std::size_t>(cfg.experts), freq,
                                       derive_seed(cfg.seed, 1));
  std::vector<double> cumulative(freq.size());
  std::partial_sum(freq.begin(), freq.end(), cumulative.begin());
  Rng stream(derive_seed(cfg.seed, 2));

  const auto e = static_cast<std::size_t>(cfg.experts);
  HashBalanceReport out;
  auto& tot = out.totals;
  tot.load.assign(e, 0);
  tot.kept.assign(e, 0);
  tot.dropped.assign(e, 0);
  tot.absorbed.assign(e, 0);
  tot.device_absorbed.assign(e, 0);

  for (std::int64_t start = 0; start < cfg.stream_len; start += cfg.batch_tokens) {
    const std::int64_t t = std::min(cfg.batch_tokens, cfg.stream_len - start);
    std::vector<int> assign(static_cast<std::size_t>(t));
    for (auto& a : assign) a = router.route(static_cast<std::int64_t>(stream.categorical(cumulative)));
    DispatchConfig dc;
    dc.tokens = t;
    dc.experts = cfg.experts;
    dc.capacity_factor = cfg.capacity_factor;
    dc.seed = derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(out.batches));
    const auto res = apply_capacity(assign, dc);
    for (std::size_t j = 0; j < e; ++j) {
      tot.load[j] += res.report.load[j];
      tot.kept[j] += res.report.kept[j];
      tot.dropped[j] += res.report.dropped[j];
    }
    tot.capacity = std::max(tot.capacity, res.report.capacity);
    out.stream_capacity += res.report.capacity;
    tot.tokens += t;
    ++out.batches;
  }
  tot.dropped_count = std::accumulate(tot.dropped.begin(), tot.dropped.end(), std::int64_t{0});
  tot.drop_rate = tot.tokens > 0 ? static_cast<double>(tot.dropped_count) / static_cast<double>(tot.tokens) : 0.0;
  tot.max_mean_load_ratio = max_mean_ratio(tot.load);

  std::vector<std::size_t> order(e);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return tot.load[a] > tot.load[b]; });
  for (std::size_t j : order) {
    out.sorted_load.push_back(tot.load[j]);
    out.sorted_dropped.push_back(tot.dropped[j]);
  }
  return out;
}

/// CSV with columns expert_rank,load,capacity,dropped, experts by load.
inline void write_load_csv(std::ostream& os, const HashBalanceReport& rep) {
  os << "expert_rank,load,capacity,dropped\n";
  for (std::size_t r = 0; r < rep.sorted_load.size(); ++r) {
    os << r << ',' << rep.sorted_load[r] << ',' << rep.stream_capacity << ',' << rep.sorted_dropped[r] << '\n';
  }
}

}  // namespace routescale
