#include "wcg/engine.hpp"

#include <cmath>

namespace wcg {

SystemState::SystemState(const WcgInstance& inst, std::uint64_t master_seed)
    : inst_(&inst), layout_(ArmLayout::of(inst)) {
    const std::size_t total = static_cast<std::size_t>(inst.total_arms());
    states_.assign(total, 0);
    streams_.reserve(total);
    std::size_t pos = 0;
    for (int i = 0; i < inst.class_count(); ++i) {
        const int count = inst.arm_count(i);
        for (int n = 0; n < count; ++n, ++pos)
            streams_.emplace_back(derive_seed(master_seed, static_cast<std::uint64_t>(i),
                                              static_cast<std::uint64_t>(n)));
    }
}

void SystemState::reset(const std::vector<int>& initial_states) {
    if (initial_states.size() == 1) {
        states_.assign(states_.size(), initial_states[0]);
    } else {
        if (initial_states.size() != states_.size())
            throw ModelError("SystemState::reset: initial state length mismatch");
        states_ = initial_states;
    }
    time_ = 0;
}

std::vector<double> SystemState::step(const std::vector<int>& actions) {
    if (actions.size() != states_.size())
        throw ModelError("SystemState::step: action vector length mismatch");
    std::vector<double> rewards(states_.size());
    for (std::size_t pos = 0; pos < states_.size(); ++pos) {
        const int i = layout_.class_of[pos];
        const BanditClass& cls = inst_->classes[static_cast<std::size_t>(i)];
        const int s = states_[pos];
        const int a = actions[pos];
        if (a < 0 || a >= cls.action_count) throw ModelError("SystemState::step: action out of range");
        Rng& rng = streams_[pos];
        rewards[pos] = cls.reward_law.sample(cls.reward(s, a), rng);
        // inverse-CDF draw over the kernel row
        const double u = rng.uniform();
        double acc = 0.0;
        int next = cls.state_count - 1;
        for (int s2 = 0; s2 < cls.state_count; ++s2) {
            acc += cls.kernel(s, a, s2);
            if (u < acc) {
                next = s2;
                break;
            }
        }
        states_[pos] = next;
    }
    ++time_;
    return rewards;
}

Trajectory run_episode(const WcgInstance& inst, const SaIndex& idx, SystemState& state,
                       const PolicyCallback& policy, int steps, const EpisodeOptions& opts) {
    Trajectory traj;
    traj.steps.reserve(static_cast<std::size_t>(steps));
    if (opts.record_states) traj.states.push_back(state.states());
    double discount = 1.0;
    for (int t = 0; t < steps; ++t) {
        const std::vector<int> actions = policy(state.time(), state);
        StepRecord rec;
        rec.t = state.time();
        Occupancy occ = occupancy_from_state(inst, idx, state.states(), actions);
        rec.occupancy = occ.fractions();
        rec.action_counts = std::move(occ.counts);
        rec.residuals = eval_constraints(inst, state.states(), actions);
        if (opts.strict_feasibility && !constraints_satisfied(inst.constraints, rec.residuals))
            throw ModelError("run_episode: policy returned infeasible actions at t=" +
                             std::to_string(rec.t));
        const std::vector<double> rewards = state.step(actions);
        for (double r : rewards) rec.reward += r;
        discount *= inst.discount;
        traj.cumulative_reward += discount * rec.reward;
        traj.steps.push_back(std::move(rec));
        if (opts.record_states) traj.states.push_back(state.states());
    }
    traj.normalized_reward = traj.cumulative_reward / static_cast<double>(inst.scale);
    return traj;
}

std::vector<std::vector<double>> expected_occupancy(const WcgInstance& inst, const SaIndex& idx,
                                                    const RandomizedPolicy& pol,
                                                    const std::vector<double>& z0, int steps) {
    if (z0.size() != idx.total()) throw ModelError("expected_occupancy: z0 length mismatch");
    if (pol.alpha.empty()) throw ModelError("expected_occupancy: policy has no action rows");
    std::vector<std::vector<double>> out;
    out.reserve(static_cast<std::size_t>(steps) + 1);
    out.push_back(z0);
    for (int t = 1; t <= steps; ++t) {
        // time-constant policies may carry a single row; clamp to the last one
        const std::vector<double>& alpha =
            pol.alpha[std::min(static_cast<std::size_t>(t), pol.alpha.size() - 1)];
        const std::vector<double>& z = out.back();
        std::vector<std::vector<double>> state_mass(static_cast<std::size_t>(inst.class_count()));
        for (int i = 0; i < inst.class_count(); ++i)
            state_mass[static_cast<std::size_t>(i)].assign(
                static_cast<std::size_t>(inst.classes[static_cast<std::size_t>(i)].state_count), 0.0);
        for (std::size_t l = 0; l < idx.total(); ++l) {
            const auto& e = idx.entry(l);
            if (z[l] == 0.0) continue;
            const BanditClass& cls = inst.classes[static_cast<std::size_t>(e.class_id)];
            for (int s2 = 0; s2 < cls.state_count; ++s2)
                state_mass[static_cast<std::size_t>(e.class_id)][static_cast<std::size_t>(s2)] +=
                    z[l] * cls.kernel(e.state, e.action, s2);
        }
        std::vector<double> next(idx.total(), 0.0);
        for (std::size_t l = 0; l < idx.total(); ++l) {
            const auto& e = idx.entry(l);
            next[l] = state_mass[static_cast<std::size_t>(e.class_id)][static_cast<std::size_t>(e.state)] *
                      alpha[l];
        }
        out.push_back(std::move(next));
    }
    return out;
}

std::vector<int> sample_actions(const WcgInstance& inst, const SaIndex& idx,
                                const std::vector<double>& alpha_row,
                                const std::vector<int>& states, Rng& rng) {
    std::vector<int> actions(states.size());
    std::size_t pos = 0;
    for (int i = 0; i < inst.class_count(); ++i) {
        const BanditClass& cls = inst.classes[static_cast<std::size_t>(i)];
        const int count = inst.arm_count(i);
        for (int n = 0; n < count; ++n, ++pos) {
            const std::size_t base = idx.state_block(i, states[pos]);
            const double u = rng.uniform();
            double acc = 0.0;
            int pick = cls.action_count - 1;
            for (int a = 0; a < cls.action_count; ++a) {
                acc += alpha_row[base + static_cast<std::size_t>(a)];
                if (u < acc) {
                    pick = a;
                    break;
                }
            }
            actions[pos] = pick;
        }
    }
    return actions;
}

} // namespace wcg
