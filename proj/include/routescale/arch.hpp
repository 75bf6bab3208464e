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

// Parameter and FLOP accounting for (routed) decoder-only transformers.
//
// Per layer, with d = d_model, h*k = n_heads * kv_size and d_ffw = 4d:
//   attention Q, K, V, O projections   4 * d * h*k
//   relative-position key projection   1 * d * h*k
//   feed-forward (two matrices)        2 * d * d_ffw = 8 d^2
//   two layer norms (scale + offset)   4 * d
// Embeddings and biases are excluded. This reproduces the published
// "actual # params" column for every standard size exactly.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "routescale/error.hpp"

namespace routescale {

struct ArchSpec {
  std::string name;
  std::int64_t d_model = 0;
  std::int64_t n_layers = 0;
  std::int64_t n_heads = 0;
  std::int64_t kv_size = 0;
  std::int64_t vocab = 32000;

  std::int64_t d_ffw() const { return 4 * d_model; }

  void validate() const {
    if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || kv_size <= 0 || vocab <= 0) {
      throw DomainError("architecture '" + name + "' needs positive dimensions");
    }
  }

  std::int64_t attention_params_per_layer() const { return 5 * d_model * n_heads * kv_size; }
  std::int64_t ffw_params_per_layer() const { return 2 * d_model * d_ffw(); }
  std::int64_t norm_params_per_layer() const { return 4 * d_model; }

  /// Dense (per-input) parameter count N.
  std::int64_t dense_params() const {
    validate();
    return n_layers * (attention_params_per_layer() + ffw_params_per_layer() + norm_params_per_layer());
  }

  bool operator==(const ArchSpec&) const = default;
};

struct RoutingShape {
  std::int64_t experts = 1;    // E
  std::int64_t k = 1;          // experts executed per datapoint
  double frequency = 0.5;      // R, fraction of layers that are routed

  void validate() const {
    if (experts < 1) throw DomainError("expert count must be >= 1");
    if (k < 1) throw DomainError("K must be >= 1");
    if (k > experts) throw DomainError("K=" + std::to_string(k) + " exceeds E=" + std::to_string(experts));
    if (!(frequency > 0.0 && frequency <= 1.0)) throw DomainError("routing frequency R must lie in (0, 1]");
  }
};

struct ParamFlopCounts {
  double n = 0.0;          // dense parameters per input
  double p = 0.0;          // total parameters
  double flops = 0.0;      // FLOPs per token forward pass
  double f_tflops = 0.0;   // the same in TeraFLOPs
  double b = 0.0;          // P / F with F in TeraFLOPs
  std::int64_t routed_layers = 0;

  /// P / (FLOPs per token): the dimensionless utilization ratio consumed by
  /// the (F, B) law. Exactly 1/2 for a dense model.
  double utilization() const { return p / flops; }
};

inline std::int64_t routed_layer_count(const ArchSpec& arch, const RoutingShape& shape) {
  return std::llround(shape.frequency * static_cast<double>(arch.n_layers));
}

inline ParamFlopCounts param_flop_model(const ArchSpec& arch, const RoutingShape& shape) {
  arch.validate();
  shape.validate();
  const std::int64_t routed = routed_layer_count(arch, shape);
  if (shape.experts > 1 && routed < 1) {
    throw DomainError("R * n_layers rounds to zero routed layers for a routed model");
  }
  const double n = static_cast<double>(arch.dense_params());
  const double routed_ffw = static_cast<double>(routed) * static_cast<double>(arch.ffw_params_per_layer());

  ParamFlopCounts out;
  out.routed_layers = shape.experts > 1 ? routed : 0;
  out.n = n;
  out.p = n + static_cast<double>(shape.experts - 1) * routed_ffw;
  out.flops = 2.0 * (n + static_cast<double>(shape.k - 1) * routed_ffw);
  out.f_tflops = out.flops / 1e12;
  out.b = out.p / out.f_tflops;
  return out;
}

}  // namespace routescale
