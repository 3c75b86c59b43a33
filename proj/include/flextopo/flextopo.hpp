// Copyright 2026 The flextopo Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "flextopo/cluster.hpp"
#include "flextopo/error.hpp"
#include "flextopo/graph.hpp"
#include "flextopo/metrics.hpp"
#include "flextopo/placement.hpp"
#include "flextopo/policy.hpp"
#include "flextopo/render.hpp"
#include "flextopo/scenario.hpp"
#include "flextopo/sim.hpp"
#include "flextopo/snapshot.hpp"
#include "flextopo/topology.hpp"
