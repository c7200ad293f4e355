// Copyright 2026 The ez-audit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "ezaudit/ablation.hpp"
#include "ezaudit/analysis.hpp"
#include "ezaudit/attacks.hpp"
#include "ezaudit/errors.hpp"
#include "ezaudit/metrics.hpp"
#include "ezaudit/parallel.hpp"
#include "ezaudit/real.hpp"
#include "ezaudit/rng.hpp"
#include "ezaudit/scoring.hpp"
#include "ezaudit/stats.hpp"
#include "ezaudit/synth.hpp"
#include "ezaudit/trace.hpp"
#include "ezaudit/version.hpp"
