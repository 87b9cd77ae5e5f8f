#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "wcg/model.hpp"

namespace wcg {

// Long-run per-cycle quantities of one class under a deterministic policy:
// expected reward V, cost U, and length L of an s0-to-s0 cycle, plus the
// ratios Gamma = V/L and Omega = U/L.
struct PolicyValue {
    double v = 0.0;
    double u = 0.0;
    double cycle_length = 1.0;
    double gamma_rate = 0.0; // V / L
    double omega_rate = 0.0; // U / L
};

// Solves the three taboo linear systems (rewards, costs, constant 1) for the
// chain induced by `actions`; throws SolverError when s0 is unreachable.
PolicyValue policy_value(const BanditClass& cls, const std::vector<int>& actions,
                         const Matrix& cost_matrix);

// Cost matrix broadcast from per-label costs.
Matrix label_cost_matrix(const BanditClass& cls, const std::vector<double>& label_costs);

// Stationary distribution over states of the chain induced by `actions`.
// Used as the cross-check oracle for policy_value.
std::vector<double> stationary_distribution(const BanditClass& cls, const std::vector<int>& actions);

// Recorded downshift trajectory of one class: at step m the algorithm
// downshifted `state` from label `label` (1-based as in the cost vectors'
// 0-based action index + 1) with index nu.
struct MpIndexEntry {
    int m = 0;
    int state = 0;
    int action = 0; // 0-based action index whose downshift produced the entry
    double nu = 0.0;
    std::vector<int> action_vector; // 0-based labels before the downshift
};

struct MpIndexTable {
    int class_id = 0;
    std::vector<MpIndexEntry> entries; // in downshift order, ascending nu when indexable
    bool pcl = false;                  // recorded nu non-decreasing along the sweep

    // nu for (state, action index >= 1); every such pair appears exactly once.
    double nu(int state, int action) const;
};

struct DsOptions {
    std::uint64_t tie_seed = 0;
    int ergodic_horizon = 256; // max_steps handed to check_ergodic
};

// Downshift adaptive-greedy index algorithm for one class. Starts from the
// all-max label vector and records one (state, label, nu) triple per
// downshift until the vector reaches all-ones. Throws SolverError when an
// intermediate policy is not ergodic, naming the offending label vector.
MpIndexTable ds_adaptive_greedy(const BanditClass& cls, const std::vector<double>& label_costs,
                                int class_id, const DsOptions& opts = {});

std::vector<MpIndexTable> ds_adaptive_greedy(const WcgInstance& inst, const DsOptions& opts = {});

// MP decision rule under the single budget constraint: rank all (arm,
// candidate action >= 1) pairs by descending nu, break ties by a seeded
// uniform draw, then scan once, upgrading an arm when the budget inequality
// still holds. All-passive start.
std::vector<int> mp_assemble_actions(const WcgInstance& inst,
                                     const std::vector<MpIndexTable>& tables,
                                     const std::vector<int>& states, std::uint64_t tie_seed);

// Same rule driven by a raw nu lookup (class, state, action) -> value; used
// by the online variant where the table is still being estimated.
using NuLookup = std::function<double(int class_id, int state, int action)>;
std::vector<int> mp_assemble_actions(const WcgInstance& inst, const NuLookup& nu,
                                     const std::vector<int>& states, std::uint64_t tie_seed);

} // namespace wcg
