#pragma once

#include <array>
#include <optional>
#include <vector>

#include "wcg/engine.hpp"
#include "wcg/indices.hpp"
#include "wcg/model.hpp"
#include "wcg/qlearn.hpp"

namespace wcg {

// The three reward tags of the coordinated learning processes.
enum class OmpiTag { V = 0, U = 1, L = 2 };

struct OmpiConfig {
    double precision = 1e-3;         // eps in the stop rule
    double explore_floor = 0.05;     // exploration probability floor before stop
    long explore_decay_steps = 1000; // linear decay horizon of the exploration probability
    StepSchedule schedule = StepSchedule::harmonic();
    std::uint64_t seed = 0;
    // Jump-start: once the estimates freeze, replace each table by the value
    // iteration fixed point under the estimated kernel, and re-apply after
    // every downshift advance (the secondary policies change there).
    bool stimulate = false;
    std::optional<double> estimate_threshold;
    double stimulate_span_tol = 1e-10;
};

// State of the online MP index algorithm: per-class downshift vectors, the
// 6J learning processes, estimated indices, and the stop flag.
class OmpiState {
  public:
    OmpiState(const WcgInstance& inst, const SaIndex& idx, const OmpiConfig& cfg);

    const WcgInstance& instance() const { return *inst_; }
    const SaIndex& sa_index() const { return *idx_; }
    const OmpiConfig& config() const { return cfg_; }

    long stage() const { return m_; }
    bool stopped() const { return stopped_; }
    long steps_observed() const { return learner_.step_count(); }

    // current action-label vector of class i (0-based action indices)
    const std::vector<int>& labels(int i) const { return labels_[static_cast<std::size_t>(i)]; }

    double nu_hat(int i, int s, int a) const;
    void set_nu_hat(int i, int s, int a, double v);

    // probability of the exploration branch at the current step
    double explore_probability() const;

    int process_slots() const { return 6 * j_count_; }
    int j_count() const { return j_count_; }
    std::size_t process_index(OmpiTag tag, int j, int varsigma) const;
    const LearningProcess& process(OmpiTag tag, int j, int varsigma) const;
    QLearner& learner() { return learner_; }

    // downshifted copy of labels(i) at state j (identity permutation)
    std::vector<int> shifted_labels(int i, int j) const;

    friend std::vector<int> ompi_primary_action(OmpiState& state, const SystemState& sys, Rng& rng);
    friend void ompi_learn_step(OmpiState& state, const TransitionCounts& counts);
    friend void ompi_index_update(OmpiState& state);
    friend bool ompi_stop_check(OmpiState& state);
    friend void ompi_jump_start(OmpiState& state, const EstimatedModel& est);

  private:
    void rebuild_secondaries();
    void snapshot_tables();

    const WcgInstance* inst_;
    const SaIndex* idx_;
    OmpiConfig cfg_;
    QLearner learner_;
    int j_count_ = 0;
    std::vector<std::vector<int>> labels_;    // per class
    std::vector<std::vector<double>> nu_;     // per class, s * action_count + a
    std::vector<std::vector<Matrix>> prev_q_; // per process, per class
    long m_ = 1;
    bool stopped_ = false;
    Rng tie_rng_;
};

// Primary policy: with the exploitation probability take the MP actions under
// the current nu-hat; otherwise run the random feasible exploration scan.
// After the stop flag is set the action is always the MP action, a
// deterministic function of (states, frozen nu-hat, tie seed).
std::vector<int> ompi_primary_action(OmpiState& state, const SystemState& sys, Rng& rng);

// One q_update across all 6J tables from the step's counts; V uses the live
// rewards, U the label costs of the evaluated action, L the constant 1.
void ompi_learn_step(OmpiState& state, const TransitionCounts& counts);

// Step v: ratio-of-ratios re-estimate of the eligible MP indices.
void ompi_index_update(OmpiState& state);

// Step vi/vii: when all tables moved less than the precision since the last
// step, advance the downshift position of every class; freeze everything
// once every class reached the all-passive vector. Returns true on advance.
bool ompi_stop_check(OmpiState& state);

// Value-iterate every table to the fixed point under the estimated model.
void ompi_jump_start(OmpiState& state, const EstimatedModel& est);

// ---------------------------------------------------------------------------
// Composed runner
// ---------------------------------------------------------------------------

// One row of the estimated-index trace: the value of nu-hat for the pair
// (class, state, current label) after the step at time t of stage m.
struct NuTraceRow {
    long t = 0;
    int class_id = 0;
    int state = 0;
    int label = 0; // 1-based gear label
    double nu = 0.0;
    long stage = 0;
};

struct OmpiRunResult {
    Trajectory trajectory;
    std::optional<long> stop_step; // step at which the learning froze
    std::vector<std::vector<double>> nu_hat; // per class, s * action_count + a
    std::vector<std::vector<int>> actions_taken; // per step, when recorded
    std::vector<NuTraceRow> nu_trace;
};

struct OmpiRunOptions {
    int max_steps = 20000;
    int extra_steps = 0; // exploitation steps after the stop flag
    bool record_actions = false;
    bool record_nu_trace = false;
    std::vector<int> initial_states{0};
};

OmpiRunResult ompi_run(const WcgInstance& inst, const SaIndex& idx, const OmpiConfig& cfg,
                       const OmpiRunOptions& opts, std::uint64_t seed);

} // namespace wcg
