#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "wcg/matrix.hpp"
#include "wcg/rng.hpp"

namespace wcg {

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Reward laws
// ---------------------------------------------------------------------------

// Per-(s,a) sampling law for the random reward. The mean is always the
// mean_rewards entry; the law adds bounded noise around it.
struct RewardLaw {
    enum class Kind { Deterministic, UniformInterval, TruncatedNormal };
    Kind kind = Kind::Deterministic;
    double half_width = 0.0; // support is [mean-half_width, mean+half_width]
    double stddev = 0.0;     // truncated normal only

    double sample(double mean, Rng& rng) const {
        switch (kind) {
        case Kind::Deterministic:
            return mean;
        case Kind::UniformInterval:
            return rng.uniform(mean - half_width, mean + half_width);
        case Kind::TruncatedNormal: {
            // rejection sampling keeps the law symmetric, so the mean is exact
            for (int attempt = 0; attempt < 256; ++attempt) {
                const double x = mean + stddev * rng.normal();
                if (std::fabs(x - mean) <= half_width) return x;
            }
            return mean;
        }
        }
        return mean;
    }

    // Largest deviation from the mean a sample can take.
    double bound() const { return kind == Kind::Deterministic ? 0.0 : half_width; }
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

// One gang/class of stochastically identical bandit processes.
struct BanditClass {
    int state_count = 0;
    int action_count = 0;
    std::vector<Matrix> kernels;  // kernels[a](s, s') = p(s, a, s')
    Matrix mean_rewards;          // (s, a)
    RewardLaw reward_law;
    int ergodic_state = 0;        // s0

    double kernel(int s, int a, int s2) const { return kernels[static_cast<std::size_t>(a)](s, s2); }
    double reward(int s, int a) const { return mean_rewards(s, a); }

    // Declared uniform bound: |R| <= reward_bound() always.
    double reward_bound() const {
        double m = 0.0;
        for (double v : mean_rewards.data()) m = std::max(m, std::fabs(v));
        return m + reward_law.bound();
    }
};

enum class ConstraintMode { Equality, InequalityLeq };

// One weakly coupled constraint: sum over all arms of coeffs[i](s, a).
struct Constraint {
    ConstraintMode mode = ConstraintMode::Equality;
    std::vector<Matrix> coeffs; // per class, (s, a)
};

// Single-constraint budget structure (the multi-gear form): per-class costs
// indexed by action label, strictly increasing, with label 0 the passive
// action. The coupled constraint it induces is
//   sum_{arms} cost_i(a) <= h * budget
// encoded as coeffs[i](s,a) = cost_i(a) - budget / sum(base_counts).
struct BudgetSpec {
    std::vector<std::vector<double>> label_costs; // per class, per action
    double budget = 0.0;                          // per scale unit (h = 1)
};

struct ConstraintSet {
    std::vector<Constraint> items;
    std::optional<BudgetSpec> budget; // set iff the single constraint is budget-shaped

    std::size_t count() const { return items.size(); }
};

// The full weakly coupled instance. Immutable after construction; safe to
// share read-only across threads.
struct WcgInstance {
    std::vector<BanditClass> classes;
    std::vector<int> base_counts;  // N_i^0
    int scale = 1;                 // h
    ConstraintSet constraints;
    std::optional<int> horizon;    // nullopt = unbounded
    double discount = 1.0;         // beta in (0, 1]

    int class_count() const { return static_cast<int>(classes.size()); }
    int arm_count(int i) const { return scale * base_counts[static_cast<std::size_t>(i)]; }
    int total_arms() const {
        int n = 0;
        for (int i = 0; i < class_count(); ++i) n += arm_count(i);
        return n;
    }
    int total_base_count() const {
        int n = 0;
        for (int v : base_counts) n += v;
        return n;
    }

    // Copy of this instance at a different scale h.
    WcgInstance with_scale(int h) const {
        WcgInstance inst = *this;
        inst.scale = h;
        return inst;
    }
};

// Builds the induced Constraint for a BudgetSpec given the base counts.
Constraint budget_constraint(const BudgetSpec& spec, const std::vector<int>& base_counts,
                             const std::vector<BanditClass>& classes);

// Assembles a ConstraintSet holding just a budget constraint.
ConstraintSet make_budget_constraints(const WcgInstance& inst, BudgetSpec spec);

// ---------------------------------------------------------------------------
// SA-pair indexing
// ---------------------------------------------------------------------------

// Bijection between flat SA labels and (class, state, action) triples,
// ordered lexicographically by (i, s, a). All indices 0-based.
class SaIndex {
  public:
    struct Entry {
        int class_id;
        int state;
        int action;
    };

    SaIndex() = default;
    explicit SaIndex(const WcgInstance& inst);

    std::size_t total() const { return entries_.size(); }
    const Entry& entry(std::size_t label) const { return entries_[label]; }
    std::size_t label(int class_id, int state, int action) const {
        return offsets_[static_cast<std::size_t>(class_id)] +
               static_cast<std::size_t>(state) * action_counts_[static_cast<std::size_t>(class_id)] +
               static_cast<std::size_t>(action);
    }
    // First label of a (class, state) block; the block spans action_count labels.
    std::size_t state_block(int class_id, int state) const { return label(class_id, state, 0); }

  private:
    std::vector<Entry> entries_;
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> action_counts_;
};

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

// Deterministic per-class map S_i -> A_i.
struct LocalPolicy {
    std::vector<std::vector<int>> actions; // actions[i][s]

    int action(int class_id, int state) const {
        return actions[static_cast<std::size_t>(class_id)][static_cast<std::size_t>(state)];
    }
};

// Time-indexed action distribution over SA pairs: alpha[t][label], rows over
// each (class, state) summing to 1.
struct RandomizedPolicy {
    std::vector<std::vector<double>> alpha; // [t][label]

    std::size_t horizon() const { return alpha.size(); }
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

ValidationReport validate_instance(const WcgInstance& inst);

ValidationReport validate_policy(const WcgInstance& inst, const RandomizedPolicy& pol);

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

inline SaIndex build_sa_index(const WcgInstance& inst) { return SaIndex(inst); }

// True iff under pol, s0 is reachable from every state within max_steps
// transitions on the positive-support digraph and the induced chain is
// aperiodic (gcd of cycle lengths through s0 equals 1).
bool check_ergodic(const BanditClass& cls, const std::vector<int>& state_actions, int max_steps);

inline bool check_ergodic(const BanditClass& cls, const LocalPolicy& pol, int class_id, int max_steps) {
    return check_ergodic(cls, pol.actions[static_cast<std::size_t>(class_id)], max_steps);
}

// Residual of each constraint for a full assignment of states and actions.
// Arm layout is class-major: class 0 arms first, then class 1, and so on.
std::vector<double> eval_constraints(const WcgInstance& inst, const std::vector<int>& states,
                                     const std::vector<int>& actions);

bool constraints_satisfied(const ConstraintSet& cs, const std::vector<double>& residuals,
                           double tol = 1e-9);

// SA-pair occupancy of a full system configuration.
struct Occupancy {
    std::vector<std::int64_t> counts; // per label
    std::int64_t total = 0;

    std::vector<double> fractions() const {
        std::vector<double> z(counts.size());
        for (std::size_t k = 0; k < counts.size(); ++k)
            z[k] = static_cast<double>(counts[k]) / static_cast<double>(total);
        return z;
    }
};

Occupancy occupancy_from_state(const WcgInstance& inst, const SaIndex& idx,
                               const std::vector<int>& states, const std::vector<int>& actions);

// (class, arm-within-class) for a flat arm position, and the inverse.
struct ArmLayout {
    std::vector<int> class_of;  // per flat arm
    std::vector<int> first_arm; // per class

    static ArmLayout of(const WcgInstance& inst);
};

} // namespace wcg
