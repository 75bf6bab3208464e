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

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "routescale/error.hpp"
#include "routescale/text.hpp"

namespace routescale {

enum class Technique { SBase, RLR, Hash, Dense };

inline std::string_view to_string(Technique t) {
  switch (t) {
    case Technique::SBase: return "sbase";
    case Technique::RLR: return "rlr";
    case Technique::Hash: return "hash";
    case Technique::Dense: return "dense";
  }
  return "?";
}

inline Technique parse_technique(std::string_view name) {
  const std::string s = lower(trim(name));
  if (s == "sbase" || s == "s-base") return Technique::SBase;
  if (s == "rlr" || s == "rl-r") return Technique::RLR;
  if (s == "hash") return Technique::Hash;
  if (s == "dense") return Technique::Dense;
  throw DataError("unknown technique '" + std::string(name) + "' (expected sbase, rlr, hash or dense)");
}

/// One trained-model observation. Loss is in natural units.
struct RunRecord {
  Technique technique = Technique::Dense;
  std::int64_t n = 0;
  std::int64_t e = 1;
  std::int64_t k = 1;
  double r = 0.5;
  std::int64_t tokens = 0;
  double loss = 0.0;

  void validate() const {
    if (n <= 0) throw DataError("run record needs N > 0");
    if (e < 1) throw DataError("run record needs E >= 1");
    if (k < 1 || k > e) throw DataError("run record needs 1 <= K <= E");
    if (!(r > 0.0 && r <= 1.0)) throw DataError("run record needs R in (0, 1]");
    if (tokens < 0) throw DataError("run record needs tokens >= 0");
    if (!std::isfinite(loss) || !(loss > 0.0)) throw DataError("run record loss must be positive and finite");
    if (technique == Technique::Dense && e != 1) throw DataError("dense run record must have E = 1");
  }

  bool operator==(const RunRecord&) const = default;
};

}  // namespace routescale
