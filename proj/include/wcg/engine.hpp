#pragma once

#include <functional>
#include <vector>

#include "wcg/model.hpp"

namespace wcg {

// Per-arm system configuration with one RNG substream per arm. Streams are
// derived from (master seed, class, arm index), so an arm keeps its stream
// when the scale h changes.
class SystemState {
  public:
    SystemState(const WcgInstance& inst, std::uint64_t master_seed);

    // All arms of class i start in state s; by default s = 0.
    void reset(const std::vector<int>& initial_states);

    int time() const { return time_; }
    const std::vector<int>& states() const { return states_; }
    const WcgInstance& instance() const { return *inst_; }
    const ArmLayout& layout() const { return layout_; }

    // Advances every arm one transition under the given actions; returns the
    // sampled reward per arm. Stream consumption order per arm is fixed:
    // reward draw, then transition draw.
    std::vector<double> step(const std::vector<int>& actions);

  private:
    const WcgInstance* inst_;
    ArmLayout layout_;
    std::vector<int> states_;
    std::vector<Rng> streams_;
    int time_ = 0;
};

struct StepRecord {
    int t = 0;
    std::vector<double> occupancy;     // Z(t), over SA labels
    std::vector<double> residuals;     // per constraint
    double reward = 0.0;               // total sampled reward this step
    std::vector<std::int64_t> action_counts; // arms per SA label (same as occupancy counts)
};

struct Trajectory {
    std::vector<StepRecord> steps;
    std::vector<std::vector<int>> states; // recorded only when requested
    double cumulative_reward = 0.0;       // sum_t beta^{t+1} * reward(t)
    double normalized_reward = 0.0;       // cumulative / h
};

// Decides the action vector for the current step. May inspect and advance
// auxiliary learning state owned by the caller.
using PolicyCallback = std::function<std::vector<int>(int t, const SystemState&)>;

struct EpisodeOptions {
    bool record_states = false;
    bool strict_feasibility = false; // throw if the callback returns infeasible actions
};

// Runs `steps` action epochs from the given initial configuration.
Trajectory run_episode(const WcgInstance& inst, const SaIndex& idx, SystemState& state,
                       const PolicyCallback& policy, int steps, const EpisodeOptions& opts = {});

// Mean-trajectory recursion z(t+1)^T = z(t)^T P A(t+1): push the SA occupancy
// through the kernels to state marginals, then split each (class, state) mass
// by alpha(t+1). Returns z(0..steps); z(0) = z0.
std::vector<std::vector<double>> expected_occupancy(const WcgInstance& inst, const SaIndex& idx,
                                                    const RandomizedPolicy& pol,
                                                    const std::vector<double>& z0, int steps);

// Samples per-arm actions from a RandomizedPolicy row using the given stream.
std::vector<int> sample_actions(const WcgInstance& inst, const SaIndex& idx,
                                const std::vector<double>& alpha_row,
                                const std::vector<int>& states, Rng& rng);

} // namespace wcg
