#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtaas/common/ids.hpp"
#include "dtaas/incubator/plant.hpp"

namespace dtaas::lifecycle {
class LifecycleEngine;
}

namespace dtaas::incubator {

struct RankedCandidate {
  /// Position in the submitted candidate list.
  std::size_t index = 0;
  ControllerParams params;
  /// Mean squared deviation from the instance's current setpoint.
  double score = 0.0;
};

struct RejectedCandidate {
  std::size_t index = 0;
  ControllerParams params;
  std::string code;
  std::string message;
};

struct WhatIfResult {
  std::vector<RankedCandidate> ranked;
  std::vector<RejectedCandidate> rejected;
  double g_hat = 0.0;
  double t_start = 0.0;
  double target = 0.0;
  std::int64_t horizon_ms = 0;
};

nlohmann::json to_json(const WhatIfResult& r);
std::vector<ControllerParams> candidates_from_json(const nlohmann::json& j);

/// Simulates every candidate on an ephemeral variant of `id` (plant
/// conductance = latest G_hat, initial state = latest reading) for
/// `horizon_ms` and ranks them by ascending score, ties by index.
/// Candidates whose variant fails validation are reported as rejected.
/// Throws Error(EmptyCandidates), Error(NoHistory), Error(NoEstimate).
WhatIfResult run_whatif(lifecycle::LifecycleEngine& engine, const InstanceId& id,
                        const std::vector<ControllerParams>& candidates, std::int64_t horizon_ms);

/// Evolves `id` to the controller parameters, then commands the PT
/// controller. A rejected evolve publishes an "error" event, sends nothing
/// and returns false.
bool apply_plan(lifecycle::LifecycleEngine& engine, const InstanceId& id, const ControllerParams& params);

/// Candidate set from the `candidates` metadata of the planner function
/// asset in the instance's composition; empty if there is none.
std::vector<ControllerParams> planner_candidates(lifecycle::LifecycleEngine& engine, const InstanceId& id);

/// Plan + Execute of the loop: what-if over the planner candidates, apply
/// the winner, publish a "replanned" event. No-op unless `id` is Executing.
std::optional<RankedCandidate> plan(lifecycle::LifecycleEngine& engine, const InstanceId& id,
                                    const std::string& reason);

/// One pass of the loop on a manually stepped instance. Throws
/// Error(InvalidTransition) unless `id` is Executing.
void mapek_tick(lifecycle::LifecycleEngine& engine, const InstanceId& id);

}  // namespace dtaas::incubator
