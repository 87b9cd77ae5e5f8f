#pragma once

#include <optional>
#include <vector>

#include "wcg/model.hpp"

namespace wcg {

// ---------------------------------------------------------------------------
// Step sizes
// ---------------------------------------------------------------------------

// Built-in step-size families. Both satisfy sum eta = inf, sum eta^2 < inf
// for the parameter ranges enforced by validate().
struct StepSchedule {
    enum class Family { Harmonic, Power };
    Family family = Family::Harmonic;
    double c = 1.0;  // scale
    double t0 = 1.0; // offset
    double p = 1.0;  // exponent, Power only; needs 1/2 < p <= 1

    static StepSchedule harmonic(double c = 1.0, double t0 = 1.0) {
        return StepSchedule{Family::Harmonic, c, t0, 1.0};
    }
    static StepSchedule power(double c, double t0, double p) {
        return StepSchedule{Family::Power, c, t0, p};
    }

    void validate() const;
    double at(long t) const;
};

// ---------------------------------------------------------------------------
// Step data
// ---------------------------------------------------------------------------

// Exact per-(s,a) tallies for one observed transition of the whole system.
struct TransitionCounts {
    struct Cell {
        std::int64_t visits = 0;
        std::vector<std::int64_t> successors; // per s'
        double live_reward_sum = 0.0;         // sum of sampled live rewards over visiting arms
    };
    std::vector<Cell> cells; // per SA label
};

TransitionCounts collect_counts(const WcgInstance& inst, const SaIndex& idx,
                                const std::vector<int>& states_before,
                                const std::vector<int>& actions,
                                const std::vector<int>& states_after,
                                const std::vector<double>& rewards);

// ---------------------------------------------------------------------------
// Learning processes
// ---------------------------------------------------------------------------

// Reward source for one learning process.
struct RewardSpec {
    enum class Kind { Live, Law, Constant };
    Kind kind = Kind::Live;
    std::vector<Matrix> means; // Law: per class, (s,a)
    RewardLaw law;             // Law
    double constant_value = 0.0; // Constant

    double mean_value(int class_id, int s, int a) const;
    // Mean of `count` fresh samples at (class, s, a); Live is not resampled here.
    double sample_mean(std::int64_t count, int class_id, int s, int a, Rng& rng) const;

    static RewardSpec live() { return RewardSpec{Kind::Live, {}, {}, 0.0}; }
    static RewardSpec law_matrix(std::vector<Matrix> means, RewardLaw law) {
        return RewardSpec{Kind::Law, std::move(means), law, 0.0};
    }
    static RewardSpec constant(double c) { return RewardSpec{Kind::Constant, {}, {}, c}; }
};

// One of the K learning processes: a secondary policy, a reward source, and
// the per-class estimated Q factors.
struct LearningProcess {
    LocalPolicy secondary;
    RewardSpec reward;
    std::vector<Matrix> q; // per class, (s,a)
    Rng rng;
};

// Applies the empirical update of one step to one process's tables:
//   Q(s,a) <- (1-eta) Q(s,a)
//           + eta [ mean_reward + (1/visits) sum_{s' != s0} n(s,a,s') Q(s', phi(s')) ]
// for visited pairs only; unvisited entries are untouched.
void q_update(std::vector<Matrix>& q, const WcgInstance& inst, const SaIndex& idx,
              const TransitionCounts& counts, const std::vector<double>& mean_sampled_reward,
              const LocalPolicy& secondary, double eta);

// One row of a learning-trace export: the table entry of process k at step t,
// with the distance to the offline fixed point when an oracle is available.
struct LearningTraceRow {
    long t = 0;
    int process = 0;
    int class_id = 0;
    int state = 0;
    int action = 0;
    double q = 0.0;
    double err = 0.0; // nan when no oracle
};

// Holds K processes sharing one step counter; observe() runs one q_update per
// process. The processes read the same step data and never perturb it, so K
// processes over one trajectory match K separate passes over that trajectory.
class QLearner {
  public:
    QLearner(const WcgInstance& inst, const SaIndex& idx, StepSchedule schedule,
             std::uint64_t seed);

    std::size_t add_process(LocalPolicy secondary, RewardSpec reward);

    void observe(const TransitionCounts& counts);

    long step_count() const { return t_; }
    const LearningProcess& process(std::size_t k) const { return procs_[k]; }
    LearningProcess& process(std::size_t k) { return procs_[k]; }
    std::size_t process_count() const { return procs_.size(); }
    const StepSchedule& schedule() const { return schedule_; }

    // Per-label mean sampled reward for process k given this step's counts.
    std::vector<double> mean_rewards_for(std::size_t k, const TransitionCounts& counts);

  private:
    const WcgInstance* inst_;
    const SaIndex* idx_;
    StepSchedule schedule_;
    std::uint64_t seed_;
    long t_ = 0;
    std::vector<LearningProcess> procs_;
};

// ---------------------------------------------------------------------------
// Taboo operators and fixed points
// ---------------------------------------------------------------------------

// Q'(s,a) = r(s,a) + sum_{s' != s0} p(s,a,s') Q(s', pol(s')).
Matrix apply_taboo_operator(const std::vector<Matrix>& kernels, const Matrix& rewards, int s0,
                            const std::vector<int>& pol, const Matrix& q);

struct FixedPointResult {
    Matrix q;
    int iterations = 0;
};

// Value iteration to the fixed point of the taboo operator, stopping when the
// span seminorm of successive differences (terminal anchor included, so this
// is plain sup-deviation) drops below eps. Throws SolverError past max_iter,
// which signals that s0 is unreachable under the given kernel.
FixedPointResult solve_q_fixed_point(const std::vector<Matrix>& kernels, const Matrix& rewards,
                                     int s0, const std::vector<int>& pol, const Matrix& q0,
                                     double eps, int max_iter = 100000);

// Direct linear solve of (I - P_masked) Q = r for the same fixed point.
Matrix solve_q_linear(const std::vector<Matrix>& kernels, const Matrix& rewards, int s0,
                      const std::vector<int>& pol);

// ---------------------------------------------------------------------------
// Model estimation (stimulate process bookkeeping)
// ---------------------------------------------------------------------------

struct EstimatedModel {
    std::vector<std::vector<Matrix>> p_hat;  // per class, per action
    std::vector<std::vector<Matrix>> r_hat;  // per process k, per class
    std::vector<char> row_estimated;         // per SA label
    std::vector<long> last_update;           // per SA label, -1 if never
    std::vector<double> thresholds;          // eps_bar per SA label
    std::optional<long> stop_time;           // T*
    bool running_average = false;            // off by default: overwrite semantics
    std::vector<std::int64_t> cumulative_visits; // used only by the running-average variant

    bool frozen() const { return stop_time.has_value(); }
    bool covered() const;
};

// Default threshold 0.5 / (total arms * label count): any single arm clears it.
EstimatedModel make_estimated_model(const WcgInstance& inst, const SaIndex& idx,
                                    std::size_t reward_layers,
                                    std::optional<double> threshold = std::nullopt);

// Step ix/x: for labels with Z > eps_bar, overwrite the kernel row with this
// step's empirical frequencies and the reward estimate with this step's
// sample mean; once every label has been covered, record T* and freeze.
void update_estimates(EstimatedModel& est, const WcgInstance& inst, const SaIndex& idx,
                      const TransitionCounts& counts,
                      const std::vector<std::vector<double>>& mean_rewards_per_layer, long t);

// ---------------------------------------------------------------------------
// Lagrangian Q factors and the Whittle oracle
// ---------------------------------------------------------------------------

struct LagrangianResult {
    double gain = 0.0; // D_i(gamma)
    Matrix q;
    int iterations = 0;
};

// Solves D + Q(s,a) = r(s,a) - gamma . f(s,a) + sum_{s' != s0} p(s,a,s') max_a' Q(s',a')
// by relative value iteration normalized so that max_a Q(s0, a) = 0.
LagrangianResult lagrangian_q(const std::vector<Matrix>& kernels, const Matrix& rewards, int s0,
                              const std::vector<const Matrix*>& constraint_costs,
                              const std::vector<double>& gamma, double tol, int max_iter = 200000);

LagrangianResult lagrangian_q(const BanditClass& cls, const std::vector<double>& gamma,
                              const ConstraintSet& constraints, int class_id, double tol);

struct WhittleOptions {
    double tol = 1e-9;
    double bracket_scale = 10.0; // bracket is [-scale*R_max, scale*R_max]
    double inner_tol = 1e-12;
};

// Whittle index of state s for a binary-action class under a budget
// constraint: min gamma with Q^gamma(s,0) = Q^gamma(s,1), located by
// bisection. Returns nullopt when the bracket shows no sign change
// (non-indexable for this oracle).
std::optional<double> whittle_bisection(const BanditClass& cls, int s,
                                        const std::vector<double>& label_costs,
                                        const WhittleOptions& opts = {});

} // namespace wcg
