#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "wcg/engine.hpp"
#include "wcg/model.hpp"
#include "wcg/qlearn.hpp"
#include "wcg/simplex.hpp"

namespace wcg {

// ---------------------------------------------------------------------------
// Conversion maps between realized occupancy z and LP occupancy x
// ---------------------------------------------------------------------------

// Diagonal maps: x_l = (sum N^0 / N^0_{class(l)}) z_l and its inverse.
struct ConversionMaps {
    std::vector<double> x_from_z;
    std::vector<double> z_from_x;
};

ConversionMaps conversion_maps(const WcgInstance& inst, const SaIndex& idx);

// State occupancy Upsilon: sums SA occupancy over the action axis.
std::vector<double> state_occupancy(const WcgInstance& inst, const SaIndex& idx,
                                    const std::vector<double>& z);

// ---------------------------------------------------------------------------
// The occupancy LP
// ---------------------------------------------------------------------------

// Finite-horizon occupancy LP over x_{l,t}: flow conservation through the
// kernels, per-class normalization, and per-constraint coupling rows.
struct LpProblem {
    LinearProgram lp;
    int horizon = 0;      // T; variables cover t = 0..T
    std::size_t labels = 0;
    std::size_t flow_rows = 0; // range [0, flow_rows) of lp.rows

    std::size_t var(std::size_t label, int t) const {
        return static_cast<std::size_t>(t) * labels + label;
    }
    // flow row index for (t, class, state); valid for t = 0..T-1
    std::size_t flow_row(const WcgInstance& inst, int t, int class_id, int state) const;
};

// x0 gives the SA occupancy at t = 0; those variables are fixed.
LpProblem build_lp(const WcgInstance& inst, const SaIndex& idx, const std::vector<double>& x0,
                   int horizon);

// The t = 0 action split is a decision; only per-(class, state) marginals are
// pinned. state_marginals[i][s] must sum to 1 per class.
LpProblem build_lp_from_marginals(const WcgInstance& inst, const SaIndex& idx,
                                  const std::vector<std::vector<double>>& state_marginals,
                                  int horizon);

// Variant of build_lp with explicit kernels/rewards (estimated or perturbed).
LpProblem build_lp_with_model(const WcgInstance& inst, const SaIndex& idx,
                              const std::vector<std::vector<Matrix>>& kernels,
                              const std::vector<Matrix>& rewards,
                              const std::optional<std::vector<double>>& x0,
                              const std::vector<std::vector<double>>* state_marginals, int horizon);

struct LpSolution {
    LpStatus status = LpStatus::Infeasible;
    std::vector<double> x;
    double value = 0.0;
    int iterations = 0;
    std::vector<int> basis;
    std::vector<double> duals;

    // objective mass of the t >= 1 block (decisions after a fixed t = 0)
    double tail_value(const LpProblem& prob) const;
};

LpSolution solve_lp(const LpProblem& prob, const LpSolveOptions& opts = {});

// alpha_l(t) = x_{l,t} / (state marginal); uniform over actions on zero mass.
RandomizedPolicy policy_from_x(const LpProblem& prob, const LpSolution& sol,
                               const WcgInstance& inst, const SaIndex& idx);

// Writes a human-readable fixed-format dump (objective, rows, bounds).
std::string export_lp_text(const LpProblem& prob);

// ---------------------------------------------------------------------------
// The robust (epsilon, x0)-LP
// ---------------------------------------------------------------------------

struct EpsLpOptions {
    LpSolveOptions solve;
    int max_ascent_rounds = 25;
    std::size_t corner_cap = 4096; // exhaustive row-vertex search when combos fit
    // Feasible kernels carried over from smaller-epsilon solves; keeps the
    // computed optimum monotone along an epsilon ladder.
    std::vector<std::vector<std::vector<Matrix>>> warm_kernels;
};

struct EpsLpResult {
    LpProblem problem; // the x-LP at the winning kernel
    LpSolution solution;
    std::vector<std::vector<Matrix>> kernels; // P-bar, per class per action
    std::vector<Matrix> rewards;              // r-bar, per class
    double value = 0.0;
    double upper_bound = 0.0; // interval-flow relaxation
    int lp_solves = 0;
    bool exhaustive = false;
};

// Maximizes jointly over occupancies and the boxed kernel/reward
// perturbations around the estimates. Exhaustive over row vertices at desk
// scale, dual-guided alternating ascent otherwise; always reports the
// best-found certificate and an upper bound from the interval-flow
// relaxation. Throws ModelError when an estimated row is missing.
EpsLpResult solve_eps_lp(const WcgInstance& inst, const SaIndex& idx,
                         const std::vector<std::vector<Matrix>>& p_hat,
                         const std::vector<Matrix>& r_hat, const std::vector<char>& row_estimated,
                         double eps, const std::vector<double>& x0, int horizon,
                         const EpsLpOptions& opts = {});

// ---------------------------------------------------------------------------
// ALP: rounding the relaxed policy to feasible integer actions
// ---------------------------------------------------------------------------

struct AlpOptions {
    int max_repair_passes = 0; // 0 = automatic
    double tol = 1e-9;
};

// Largest-remainder rounding of alpha * group size per (class, state) group,
// then greedy single-arm repair toward the declared constraints. Throws
// SolverError when no improving swap exists while still infeasible.
std::vector<int> alp_actions(const WcgInstance& inst, const SaIndex& idx,
                             const std::vector<double>& alpha_row, const std::vector<int>& states,
                             std::uint64_t seed, const AlpOptions& opts = {});

// Runs `steps` epochs with alp_actions against alpha rows t_offset, t_offset+1, ...
Trajectory alp_rollout(const WcgInstance& inst, const SaIndex& idx, SystemState& state,
                       const RandomizedPolicy& alpha, int t_offset, int steps, std::uint64_t seed,
                       const EpisodeOptions& eopts = {});

// ---------------------------------------------------------------------------
// OALP: explore, estimate, solve, exploit
// ---------------------------------------------------------------------------

struct OalpOptions {
    enum class LpMode { Eps, PlainTrue };
    LpMode mode = LpMode::Eps;
    double eps = 0.01;
    int horizon = 10;        // exploitation steps T
    int max_explore = 10000; // coverage deadline for phase 1
    bool inject_true_model = false;
    EpsLpOptions eps_opts;
    std::vector<int> initial_states; // broadcast when a single entry
};

struct OalpReport {
    long t_star = 0;
    double lp_value = 0.0;      // full objective of the solved LP
    double lp_tail_value = 0.0; // t >= 1 block, comparable to phase 2
    double realized = 0.0;      // (1/h) sum of phase-2 step rewards
    double gap = 0.0;           // (lp_tail_value - realized) / |lp_tail_value|
    double kernel_error = 0.0;  // max row linf error of the frozen estimates
    Trajectory phase2;
    std::vector<double> x0;
    EpsLpResult eps;            // populated in Eps mode
};

using ExplorePolicy = std::function<std::vector<int>(int t, const SystemState&, Rng&)>;

// Default phase-1 policy: uniform random feasible upgrades under the budget
// rule (all-passive start, draw without replacement, stop on first violating
// draw); plain uniform actions when the instance has no budget constraint.
std::vector<int> random_feasible_actions(const WcgInstance& inst, const std::vector<int>& states,
                                         Rng& rng);

OalpReport oalp_run(const WcgInstance& inst, const SaIndex& idx, const ExplorePolicy& explore,
                    const OalpOptions& opts, std::uint64_t seed);

} // namespace wcg
