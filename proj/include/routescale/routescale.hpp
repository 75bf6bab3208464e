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

// Everything except the I/O and command-line layers (io.hpp, cli.hpp), which
// additionally need nlohmann/json and CLI11.

#include "routescale/arch.hpp"
#include "routescale/dispatch.hpp"
#include "routescale/error.hpp"
#include "routescale/fit.hpp"
#include "routescale/fixtures.hpp"
#include "routescale/law.hpp"
#include "routescale/optimize.hpp"
#include "routescale/parallel.hpp"
#include "routescale/random.hpp"
#include "routescale/records.hpp"
#include "routescale/routing.hpp"
#include "routescale/text.hpp"
#include "routescale/toy_router.hpp"
