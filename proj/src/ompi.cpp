#include "wcg/ompi.hpp"

#include <algorithm>
#include <cmath>

#include "wcg/lp.hpp"

namespace wcg {

OmpiState::OmpiState(const WcgInstance& inst, const SaIndex& idx, const OmpiConfig& cfg)
    : inst_(&inst), idx_(&idx), cfg_(cfg),
      learner_(inst, idx, cfg.schedule, derive_seed(cfg.seed, 0x6A11ULL)),
      tie_rng_(derive_seed(cfg.seed, 0x6A12ULL)) {
    if (!inst.constraints.budget)
        throw ModelError("ompi: a budget (single constraint) instance is required");
    for (int i = 0; i < inst.class_count(); ++i)
        j_count_ = std::max(j_count_, inst.classes[static_cast<std::size_t>(i)].state_count);

    labels_.resize(inst.classes.size());
    nu_.resize(inst.classes.size());
    for (std::size_t i = 0; i < inst.classes.size(); ++i) {
        const auto& cls = inst.classes[i];
        labels_[i].assign(static_cast<std::size_t>(cls.state_count), cls.action_count - 1);
        nu_[i].assign(static_cast<std::size_t>(cls.state_count * cls.action_count), 0.0);
    }

    // 6J processes in a fixed layout: ((tag * J) + j) * 2 + varsigma
    const auto& budget = *inst.constraints.budget;
    for (int tag = 0; tag < 3; ++tag)
        for (int j = 0; j < j_count_; ++j)
            for (int vs = 0; vs < 2; ++vs) {
                RewardSpec spec;
                switch (static_cast<OmpiTag>(tag)) {
                case OmpiTag::V:
                    spec = RewardSpec::live();
                    break;
                case OmpiTag::U: {
                    std::vector<Matrix> costs;
                    for (std::size_t i = 0; i < inst.classes.size(); ++i)
                        costs.push_back(
                            label_cost_matrix(inst.classes[i], budget.label_costs[i]));
                    spec = RewardSpec::law_matrix(std::move(costs), RewardLaw{});
                    break;
                }
                case OmpiTag::L:
                    spec = RewardSpec::constant(1.0);
                    break;
                }
                learner_.add_process(LocalPolicy{}, std::move(spec));
            }
    rebuild_secondaries();
    snapshot_tables();
}

std::size_t OmpiState::process_index(OmpiTag tag, int j, int varsigma) const {
    return (static_cast<std::size_t>(tag) * static_cast<std::size_t>(j_count_) +
            static_cast<std::size_t>(j)) *
               2 +
           static_cast<std::size_t>(varsigma);
}

const LearningProcess& OmpiState::process(OmpiTag tag, int j, int varsigma) const {
    return learner_.process(process_index(tag, j, varsigma));
}

double OmpiState::nu_hat(int i, int s, int a) const {
    const auto& cls = inst_->classes[static_cast<std::size_t>(i)];
    return nu_[static_cast<std::size_t>(i)][static_cast<std::size_t>(s * cls.action_count + a)];
}

void OmpiState::set_nu_hat(int i, int s, int a, double v) {
    const auto& cls = inst_->classes[static_cast<std::size_t>(i)];
    nu_[static_cast<std::size_t>(i)][static_cast<std::size_t>(s * cls.action_count + a)] = v;
}

double OmpiState::explore_probability() const {
    if (stopped_) return 0.0;
    const double t = static_cast<double>(learner_.step_count());
    return std::max(cfg_.explore_floor, 1.0 - t / static_cast<double>(cfg_.explore_decay_steps));
}

std::vector<int> OmpiState::shifted_labels(int i, int j) const {
    std::vector<int> shifted = labels_[static_cast<std::size_t>(i)];
    if (j < static_cast<int>(shifted.size()) && shifted[static_cast<std::size_t>(j)] >= 1)
        --shifted[static_cast<std::size_t>(j)];
    return shifted;
}

void OmpiState::rebuild_secondaries() {
    for (int tag = 0; tag < 3; ++tag)
        for (int j = 0; j < j_count_; ++j)
            for (int vs = 0; vs < 2; ++vs) {
                LocalPolicy pol;
                pol.actions.resize(inst_->classes.size());
                for (int i = 0; i < inst_->class_count(); ++i)
                    pol.actions[static_cast<std::size_t>(i)] =
                        vs == 0 ? labels_[static_cast<std::size_t>(i)] : shifted_labels(i, j);
                learner_.process(process_index(static_cast<OmpiTag>(tag), j, vs)).secondary =
                    std::move(pol);
            }
}

void OmpiState::snapshot_tables() {
    prev_q_.clear();
    prev_q_.reserve(learner_.process_count());
    for (std::size_t k = 0; k < learner_.process_count(); ++k)
        prev_q_.push_back(learner_.process(k).q);
}

std::vector<int> ompi_primary_action(OmpiState& state, const SystemState& sys, Rng& rng) {
    const double u = rng.uniform();
    const bool explore = u < state.explore_probability();
    if (!explore) {
        return mp_assemble_actions(
            *state.inst_,
            [&state](int i, int s, int a) { return state.nu_hat(i, s, a); }, sys.states(),
            state.tie_rng_.next_u64());
    }
    return random_feasible_actions(*state.inst_, sys.states(), rng);
}

void ompi_learn_step(OmpiState& state, const TransitionCounts& counts) {
    if (state.stopped_) return;
    state.snapshot_tables();
    state.learner_.observe(counts);
}

void ompi_index_update(OmpiState& state) {
    if (state.stopped_) return;
    const WcgInstance& inst = *state.inst_;
    for (int i = 0; i < inst.class_count(); ++i) {
        const BanditClass& cls = inst.classes[static_cast<std::size_t>(i)];
        const int s0 = cls.ergodic_state;
        const auto& base = state.labels_[static_cast<std::size_t>(i)];
        for (int j = 0; j < std::min(state.j_count_, cls.state_count); ++j) {
            const int s = j; // identity permutation of states
            if (base[static_cast<std::size_t>(s)] < 1) continue; // passive carries no index
            const int a0 = base[static_cast<std::size_t>(s0)];
            const std::vector<int> shifted = state.shifted_labels(i, j);
            const int a1 = shifted[static_cast<std::size_t>(s0)];
            auto q_at = [&](OmpiTag tag, int vs, int a) {
                return state.process(tag, j, vs).q[static_cast<std::size_t>(i)](
                    static_cast<std::size_t>(s0), static_cast<std::size_t>(a));
            };
            const double l0 = q_at(OmpiTag::L, 0, a0);
            const double l1 = q_at(OmpiTag::L, 1, a1);
            if (std::fabs(l0) < 1e-12 || std::fabs(l1) < 1e-12) continue; // tables still cold
            const double gv = q_at(OmpiTag::V, 0, a0) / l0 - q_at(OmpiTag::V, 1, a1) / l1;
            const double gu = q_at(OmpiTag::U, 0, a0) / l0 - q_at(OmpiTag::U, 1, a1) / l1;
            state.set_nu_hat(i, s, base[static_cast<std::size_t>(s)],
                             std::fabs(gu) < 1e-12 ? 0.0 : gv / gu);
        }
    }
}

bool ompi_stop_check(OmpiState& state) {
    if (state.stopped_) return false;
    double diff = 0.0;
    for (std::size_t k = 0; k < state.learner_.process_count(); ++k) {
        const auto& cur = state.learner_.process(k).q;
        for (std::size_t i = 0; i < cur.size(); ++i)
            diff = std::max(diff, max_abs_diff(cur[i].data(), state.prev_q_[k][i].data()));
    }
    if (diff >= state.cfg_.precision) return false;

    bool all_done = true;
    for (int i = 0; i < state.inst_->class_count(); ++i) {
        auto& labels = state.labels_[static_cast<std::size_t>(i)];
        std::vector<int> eligible;
        for (int s = 0; s < static_cast<int>(labels.size()); ++s)
            if (labels[static_cast<std::size_t>(s)] >= 1) eligible.push_back(s);
        if (eligible.empty()) continue;
        // mirror the offline sweep: the smallest estimated index downshifts
        double best = std::numeric_limits<double>::infinity();
        for (int s : eligible)
            best = std::min(best, state.nu_hat(i, s, labels[static_cast<std::size_t>(s)]));
        std::vector<int> winners;
        for (int s : eligible)
            if (state.nu_hat(i, s, labels[static_cast<std::size_t>(s)]) == best) winners.push_back(s);
        const int pick = winners[state.tie_rng_.uniform_below(winners.size())];
        --labels[static_cast<std::size_t>(pick)];
        if (std::any_of(labels.begin(), labels.end(), [](int a) { return a >= 1; })) all_done = false;
    }
    ++state.m_;
    state.rebuild_secondaries();
    if (all_done) state.stopped_ = true;
    return true;
}

void ompi_jump_start(OmpiState& state, const EstimatedModel& est) {
    const WcgInstance& inst = *state.inst_;
    const auto& budget = *inst.constraints.budget;
    for (std::size_t k = 0; k < state.learner_.process_count(); ++k) {
        LearningProcess& proc = state.learner_.process(k);
        for (int i = 0; i < inst.class_count(); ++i) {
            const BanditClass& cls = inst.classes[static_cast<std::size_t>(i)];
            Matrix rewards(static_cast<std::size_t>(cls.state_count),
                           static_cast<std::size_t>(cls.action_count));
            const OmpiTag tag = static_cast<OmpiTag>(k / (2 * static_cast<std::size_t>(state.j_count_)));
            switch (tag) {
            case OmpiTag::V:
                rewards = est.r_hat[0][static_cast<std::size_t>(i)];
                break;
            case OmpiTag::U:
                rewards = label_cost_matrix(cls, budget.label_costs[static_cast<std::size_t>(i)]);
                break;
            case OmpiTag::L:
                for (double& v : rewards.data()) v = 1.0;
                break;
            }
            try {
                const FixedPointResult fp = solve_q_fixed_point(
                    est.p_hat[static_cast<std::size_t>(i)], rewards, cls.ergodic_state,
                    proc.secondary.actions[static_cast<std::size_t>(i)],
                    proc.q[static_cast<std::size_t>(i)], state.cfg_.stimulate_span_tol, 200000);
                proc.q[static_cast<std::size_t>(i)] = fp.q;
            } catch (const SolverError&) {
                // estimated kernel misses the ergodic state (good case violated):
                // keep the stochastic-approximation table
            }
        }
    }
}

OmpiRunResult ompi_run(const WcgInstance& inst, const SaIndex& idx, const OmpiConfig& cfg,
                       const OmpiRunOptions& opts, std::uint64_t seed) {
    OmpiRunResult result;
    SystemState sys(inst, derive_seed(seed, 0x5E1ULL));
    sys.reset(opts.initial_states);
    Rng policy_rng(derive_seed(seed, 0x5E2ULL));

    OmpiConfig cfg_seeded = cfg;
    cfg_seeded.seed = derive_seed(seed, 0x5E3ULL);
    OmpiState state(inst, idx, cfg_seeded);
    EstimatedModel est = make_estimated_model(inst, idx, 1, cfg.estimate_threshold);

    int extra_left = opts.extra_steps;
    double discount = 1.0;
    for (int t = 0; t < opts.max_steps; ++t) {
        if (state.stopped()) {
            if (!result.stop_step) result.stop_step = state.steps_observed();
            if (extra_left-- <= 0) break;
        }
        const std::vector<int> before = sys.states();
        const std::vector<int> actions = ompi_primary_action(state, sys, policy_rng);
        StepRecord rec;
        rec.t = t;
        Occupancy occ = occupancy_from_state(inst, idx, before, actions);
        rec.occupancy = occ.fractions();
        rec.action_counts = std::move(occ.counts);
        rec.residuals = eval_constraints(inst, before, actions);
        const std::vector<double> rewards = sys.step(actions);
        for (double r : rewards) rec.reward += r;
        discount *= inst.discount;
        result.trajectory.cumulative_reward += discount * rec.reward;
        result.trajectory.steps.push_back(std::move(rec));
        if (opts.record_actions) result.actions_taken.push_back(actions);

        if (!state.stopped()) {
            const TransitionCounts counts =
                collect_counts(inst, idx, before, actions, sys.states(), rewards);
            ompi_learn_step(state, counts);
            ompi_index_update(state);
            if (opts.record_nu_trace)
                for (int i = 0; i < inst.class_count(); ++i)
                    for (int s = 0; s < inst.classes[static_cast<std::size_t>(i)].state_count; ++s) {
                        const int a = state.labels(i)[static_cast<std::size_t>(s)];
                        if (a < 1) continue;
                        result.nu_trace.push_back(NuTraceRow{state.steps_observed() - 1, i, s,
                                                             a + 1, state.nu_hat(i, s, a),
                                                             state.stage()});
                    }
            if (cfg.stimulate) {
                std::vector<double> live(idx.total(), 0.0);
                for (std::size_t l = 0; l < idx.total(); ++l)
                    if (counts.cells[l].visits > 0)
                        live[l] = counts.cells[l].live_reward_sum /
                                  static_cast<double>(counts.cells[l].visits);
                const bool was_frozen = est.frozen();
                update_estimates(est, inst, idx, counts, {live},
                                 static_cast<long>(state.steps_observed()) - 1);
                if (!was_frozen && est.frozen()) ompi_jump_start(state, est);
            }
            const bool advanced = ompi_stop_check(state);
            if (advanced && cfg.stimulate && est.frozen() && !state.stopped())
                ompi_jump_start(state, est);
        }
    }
    if (state.stopped() && !result.stop_step) result.stop_step = state.steps_observed();
    result.trajectory.normalized_reward =
        result.trajectory.cumulative_reward / static_cast<double>(inst.scale);
    result.nu_hat.resize(inst.classes.size());
    for (int i = 0; i < inst.class_count(); ++i) {
        const auto& cls = inst.classes[static_cast<std::size_t>(i)];
        result.nu_hat[static_cast<std::size_t>(i)].resize(
            static_cast<std::size_t>(cls.state_count * cls.action_count));
        for (int s = 0; s < cls.state_count; ++s)
            for (int a = 0; a < cls.action_count; ++a)
                result.nu_hat[static_cast<std::size_t>(i)][static_cast<std::size_t>(
                    s * cls.action_count + a)] = state.nu_hat(i, s, a);
    }
    return result;
}

} // namespace wcg
