#include "wcg/qlearn.hpp"

#include <algorithm>
#include <cmath>

namespace wcg {

void StepSchedule::validate() const {
    if (c <= 0.0 || t0 <= 0.0) throw ModelError("step schedule needs c > 0 and t0 > 0");
    if (family == Family::Power) {
        // sum 1/(t+t0)^p diverges iff p <= 1; sum of squares converges iff p > 1/2
        if (!(p > 0.5 && p <= 1.0))
            throw ModelError("power step schedule needs 1/2 < p <= 1");
    }
}

double StepSchedule::at(long t) const {
    const double base = static_cast<double>(t) + t0;
    switch (family) {
    case Family::Harmonic:
        return c / base;
    case Family::Power:
        return c / std::pow(base, p);
    }
    return c / base;
}

TransitionCounts collect_counts(const WcgInstance& inst, const SaIndex& idx,
                                const std::vector<int>& states_before,
                                const std::vector<int>& actions,
                                const std::vector<int>& states_after,
                                const std::vector<double>& rewards) {
    TransitionCounts counts;
    counts.cells.resize(idx.total());
    for (std::size_t l = 0; l < idx.total(); ++l) {
        const auto& e = idx.entry(l);
        counts.cells[l].successors.assign(
            static_cast<std::size_t>(inst.classes[static_cast<std::size_t>(e.class_id)].state_count), 0);
    }
    const std::size_t total = static_cast<std::size_t>(inst.total_arms());
    if (states_before.size() != total || actions.size() != total || states_after.size() != total)
        throw ModelError("collect_counts: vector length mismatch");
    std::size_t pos = 0;
    for (int i = 0; i < inst.class_count(); ++i) {
        const int count = inst.arm_count(i);
        for (int n = 0; n < count; ++n, ++pos) {
            auto& cell = counts.cells[idx.label(i, states_before[pos], actions[pos])];
            ++cell.visits;
            ++cell.successors[static_cast<std::size_t>(states_after[pos])];
            if (!rewards.empty()) cell.live_reward_sum += rewards[pos];
        }
    }
    return counts;
}

double RewardSpec::mean_value(int class_id, int s, int a) const {
    switch (kind) {
    case Kind::Live:
        throw ModelError("RewardSpec::mean_value: live rewards have no stored mean");
    case Kind::Law:
        return means[static_cast<std::size_t>(class_id)](static_cast<std::size_t>(s),
                                                         static_cast<std::size_t>(a));
    case Kind::Constant:
        return constant_value;
    }
    return 0.0;
}

double RewardSpec::sample_mean(std::int64_t count, int class_id, int s, int a, Rng& rng) const {
    switch (kind) {
    case Kind::Live:
        throw ModelError("RewardSpec::sample_mean: live rewards come from step data");
    case Kind::Constant:
        return constant_value;
    case Kind::Law: {
        const double mean = means[static_cast<std::size_t>(class_id)](static_cast<std::size_t>(s),
                                                                      static_cast<std::size_t>(a));
        double sum = 0.0;
        for (std::int64_t k = 0; k < count; ++k) sum += law.sample(mean, rng);
        return sum / static_cast<double>(count);
    }
    }
    return 0.0;
}

void q_update(std::vector<Matrix>& q, const WcgInstance& inst, const SaIndex& idx,
              const TransitionCounts& counts, const std::vector<double>& mean_sampled_reward,
              const LocalPolicy& secondary, double eta) {
    for (std::size_t l = 0; l < idx.total(); ++l) {
        const auto& cell = counts.cells[l];
        if (cell.visits == 0) continue;
        const auto& e = idx.entry(l);
        const BanditClass& cls = inst.classes[static_cast<std::size_t>(e.class_id)];
        const int s0 = cls.ergodic_state;
        Matrix& qi = q[static_cast<std::size_t>(e.class_id)];
        double bracket = mean_sampled_reward[l];
        for (int s2 = 0; s2 < cls.state_count; ++s2) {
            if (s2 == s0) continue;
            const std::int64_t n = cell.successors[static_cast<std::size_t>(s2)];
            if (n == 0) continue;
            bracket += static_cast<double>(n) / static_cast<double>(cell.visits) *
                       qi(static_cast<std::size_t>(s2),
                          static_cast<std::size_t>(secondary.action(e.class_id, s2)));
        }
        double& entry = qi(static_cast<std::size_t>(e.state), static_cast<std::size_t>(e.action));
        entry = (1.0 - eta) * entry + eta * bracket;
    }
}

QLearner::QLearner(const WcgInstance& inst, const SaIndex& idx, StepSchedule schedule,
                   std::uint64_t seed)
    : inst_(&inst), idx_(&idx), schedule_(schedule), seed_(seed) {
    schedule_.validate();
}

std::size_t QLearner::add_process(LocalPolicy secondary, RewardSpec reward) {
    LearningProcess proc;
    proc.secondary = std::move(secondary);
    proc.reward = std::move(reward);
    proc.q.reserve(inst_->classes.size());
    for (const auto& cls : inst_->classes)
        proc.q.emplace_back(static_cast<std::size_t>(cls.state_count),
                            static_cast<std::size_t>(cls.action_count));
    proc.rng = Rng(derive_seed(seed_, 0x71ULL, static_cast<std::uint64_t>(procs_.size())));
    procs_.push_back(std::move(proc));
    return procs_.size() - 1;
}

std::vector<double> QLearner::mean_rewards_for(std::size_t k, const TransitionCounts& counts) {
    LearningProcess& proc = procs_[k];
    std::vector<double> means(idx_->total(), 0.0);
    for (std::size_t l = 0; l < idx_->total(); ++l) {
        const auto& cell = counts.cells[l];
        if (cell.visits == 0) continue;
        const auto& e = idx_->entry(l);
        if (proc.reward.kind == RewardSpec::Kind::Live)
            means[l] = cell.live_reward_sum / static_cast<double>(cell.visits);
        else
            means[l] = proc.reward.sample_mean(cell.visits, e.class_id, e.state, e.action, proc.rng);
    }
    return means;
}

void QLearner::observe(const TransitionCounts& counts) {
    const double eta = schedule_.at(t_);
    for (std::size_t k = 0; k < procs_.size(); ++k) {
        const std::vector<double> means = mean_rewards_for(k, counts);
        q_update(procs_[k].q, *inst_, *idx_, counts, means, procs_[k].secondary, eta);
    }
    ++t_;
}

Matrix apply_taboo_operator(const std::vector<Matrix>& kernels, const Matrix& rewards, int s0,
                            const std::vector<int>& pol, const Matrix& q) {
    const std::size_t ns = rewards.rows(), na = rewards.cols();
    Matrix out(ns, na);
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t a = 0; a < na; ++a) {
            double acc = rewards(s, a);
            const Matrix& k = kernels[a];
            for (std::size_t s2 = 0; s2 < ns; ++s2) {
                if (static_cast<int>(s2) == s0) continue;
                acc += k(s, s2) * q(s2, static_cast<std::size_t>(pol[s2]));
            }
            out(s, a) = acc;
        }
    return out;
}

FixedPointResult solve_q_fixed_point(const std::vector<Matrix>& kernels, const Matrix& rewards,
                                     int s0, const std::vector<int>& pol, const Matrix& q0,
                                     double eps, int max_iter) {
    Matrix q = q0;
    for (int m = 0; m < max_iter; ++m) {
        Matrix next = apply_taboo_operator(kernels, rewards, s0, pol, q);
        std::vector<double> diff(next.data().size());
        for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = next.data()[k] - q.data()[k];
        q = std::move(next);
        if (span_with_zero(diff) < eps) return FixedPointResult{std::move(q), m + 1};
    }
    throw SolverError("solve_q_fixed_point: no convergence; ergodic state unreachable under kernel");
}

Matrix solve_q_linear(const std::vector<Matrix>& kernels, const Matrix& rewards, int s0,
                      const std::vector<int>& pol) {
    const std::size_t ns = rewards.rows(), na = rewards.cols();
    const std::size_t dim = ns * na;
    Matrix a(dim, dim);
    std::vector<double> b(dim);
    auto flat = [na](std::size_t s, std::size_t act) { return s * na + act; };
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t act = 0; act < na; ++act) {
            const std::size_t row = flat(s, act);
            a(row, row) += 1.0;
            const Matrix& k = kernels[act];
            for (std::size_t s2 = 0; s2 < ns; ++s2) {
                if (static_cast<int>(s2) == s0) continue;
                a(row, flat(s2, static_cast<std::size_t>(pol[s2]))) -= k(s, s2);
            }
            b[row] = rewards(s, act);
        }
    auto x = solve_linear(std::move(a), std::move(b));
    if (!x) throw SolverError("solve_q_linear: singular system; ergodic state unreachable");
    Matrix q(ns, na);
    q.data() = std::move(*x);
    return q;
}

bool EstimatedModel::covered() const {
    return std::all_of(row_estimated.begin(), row_estimated.end(), [](char c) { return c != 0; });
}

EstimatedModel make_estimated_model(const WcgInstance& inst, const SaIndex& idx,
                                    std::size_t reward_layers, std::optional<double> threshold) {
    EstimatedModel est;
    est.p_hat.reserve(inst.classes.size());
    for (const auto& cls : inst.classes) {
        std::vector<Matrix> per_action;
        for (int a = 0; a < cls.action_count; ++a)
            per_action.emplace_back(static_cast<std::size_t>(cls.state_count),
                                    static_cast<std::size_t>(cls.state_count));
        est.p_hat.push_back(std::move(per_action));
    }
    est.r_hat.resize(reward_layers);
    for (auto& layer : est.r_hat)
        for (const auto& cls : inst.classes)
            layer.emplace_back(static_cast<std::size_t>(cls.state_count),
                               static_cast<std::size_t>(cls.action_count));
    est.row_estimated.assign(idx.total(), 0);
    est.last_update.assign(idx.total(), -1);
    est.cumulative_visits.assign(idx.total(), 0);
    const double def =
        0.5 / (static_cast<double>(inst.total_arms()) * static_cast<double>(idx.total()));
    est.thresholds.assign(idx.total(), threshold.value_or(def));
    return est;
}

void update_estimates(EstimatedModel& est, const WcgInstance& inst, const SaIndex& idx,
                      const TransitionCounts& counts,
                      const std::vector<std::vector<double>>& mean_rewards_per_layer, long t) {
    if (est.frozen()) return;
    const double total = static_cast<double>(inst.total_arms());
    for (std::size_t l = 0; l < idx.total(); ++l) {
        const auto& cell = counts.cells[l];
        if (cell.visits == 0) continue;
        const double z = static_cast<double>(cell.visits) / total;
        if (z <= est.thresholds[l]) continue;
        const auto& e = idx.entry(l);
        const BanditClass& cls = inst.classes[static_cast<std::size_t>(e.class_id)];
        Matrix& p_row_holder = est.p_hat[static_cast<std::size_t>(e.class_id)][static_cast<std::size_t>(e.action)];
        const double blend_old = est.running_average && est.cumulative_visits[l] > 0
                                     ? static_cast<double>(est.cumulative_visits[l]) /
                                           static_cast<double>(est.cumulative_visits[l] + cell.visits)
                                     : 0.0;
        for (int s2 = 0; s2 < cls.state_count; ++s2) {
            const double freq = static_cast<double>(cell.successors[static_cast<std::size_t>(s2)]) /
                                static_cast<double>(cell.visits);
            double& slot = p_row_holder(static_cast<std::size_t>(e.state), static_cast<std::size_t>(s2));
            slot = blend_old * slot + (1.0 - blend_old) * freq;
        }
        for (std::size_t k = 0; k < est.r_hat.size(); ++k) {
            double& slot = est.r_hat[k][static_cast<std::size_t>(e.class_id)](
                static_cast<std::size_t>(e.state), static_cast<std::size_t>(e.action));
            slot = blend_old * slot + (1.0 - blend_old) * mean_rewards_per_layer[k][l];
        }
        est.cumulative_visits[l] += cell.visits;
        est.row_estimated[l] = 1;
        est.last_update[l] = t;
    }
    if (est.covered()) est.stop_time = t;
}

LagrangianResult lagrangian_q(const std::vector<Matrix>& kernels, const Matrix& rewards, int s0,
                              const std::vector<const Matrix*>& constraint_costs,
                              const std::vector<double>& gamma, double tol, int max_iter) {
    const std::size_t ns = rewards.rows(), na = rewards.cols();
    Matrix charged = rewards;
    for (std::size_t l = 0; l < constraint_costs.size(); ++l)
        for (std::size_t k = 0; k < charged.data().size(); ++k)
            charged.data()[k] -= gamma[l] * constraint_costs[l]->data()[k];

    Matrix q(ns, na);
    double gain = 0.0;
    for (int m = 0; m < max_iter; ++m) {
        // B(Q)(s,a) = charged(s,a) + sum_{s' != s0} p(s,a,s') max_a' Q(s',a')
        std::vector<double> best(ns, 0.0);
        for (std::size_t s = 0; s < ns; ++s) {
            double b = q(s, 0);
            for (std::size_t a = 1; a < na; ++a) b = std::max(b, q(s, a));
            best[s] = b;
        }
        Matrix next(ns, na);
        for (std::size_t s = 0; s < ns; ++s)
            for (std::size_t a = 0; a < na; ++a) {
                double acc = charged(s, a);
                const Matrix& k = kernels[a];
                for (std::size_t s2 = 0; s2 < ns; ++s2) {
                    if (static_cast<int>(s2) == s0) continue;
                    acc += k(s, s2) * best[s2];
                }
                next(s, a) = acc;
            }
        // normalize so that max_a Q(s0, a) = 0; the subtracted level is the gain
        double level = next(static_cast<std::size_t>(s0), 0);
        for (std::size_t a = 1; a < na; ++a)
            level = std::max(level, next(static_cast<std::size_t>(s0), a));
        for (double& v : next.data()) v -= level;
        double diff = std::fabs(level - gain);
        for (std::size_t k = 0; k < next.data().size(); ++k)
            diff = std::max(diff, std::fabs(next.data()[k] - q.data()[k]));
        q = std::move(next);
        gain = level;
        if (diff < tol) return LagrangianResult{gain, std::move(q), m + 1};
    }
    throw SolverError("lagrangian_q: relative value iteration did not converge");
}

LagrangianResult lagrangian_q(const BanditClass& cls, const std::vector<double>& gamma,
                              const ConstraintSet& constraints, int class_id, double tol) {
    std::vector<Matrix> costs;
    std::vector<const Matrix*> cost_ptrs;
    if (constraints.budget) {
        // Condition-2 machinery charges the raw label costs
        const auto& lc = constraints.budget->label_costs[static_cast<std::size_t>(class_id)];
        Matrix m(static_cast<std::size_t>(cls.state_count), static_cast<std::size_t>(cls.action_count));
        for (int s = 0; s < cls.state_count; ++s)
            for (int a = 0; a < cls.action_count; ++a)
                m(static_cast<std::size_t>(s), static_cast<std::size_t>(a)) = lc[static_cast<std::size_t>(a)];
        costs.push_back(std::move(m));
        cost_ptrs.push_back(&costs.back());
    } else {
        for (const auto& item : constraints.items)
            cost_ptrs.push_back(&item.coeffs[static_cast<std::size_t>(class_id)]);
    }
    return lagrangian_q(cls.kernels, cls.mean_rewards, cls.ergodic_state, cost_ptrs, gamma, tol);
}

std::optional<double> whittle_bisection(const BanditClass& cls, int s,
                                        const std::vector<double>& label_costs,
                                        const WhittleOptions& opts) {
    if (cls.action_count != 2) throw ModelError("whittle_bisection: binary actions required");
    Matrix cost(static_cast<std::size_t>(cls.state_count), 2);
    for (int st = 0; st < cls.state_count; ++st) {
        cost(static_cast<std::size_t>(st), 0) = label_costs[0];
        cost(static_cast<std::size_t>(st), 1) = label_costs[1];
    }
    const std::vector<const Matrix*> costs{&cost};
    auto gap = [&](double gamma) {
        const LagrangianResult r = lagrangian_q(cls.kernels, cls.mean_rewards, cls.ergodic_state,
                                                costs, {gamma}, opts.inner_tol);
        return r.q(static_cast<std::size_t>(s), 1) - r.q(static_cast<std::size_t>(s), 0);
    };
    double lo = -opts.bracket_scale * cls.reward_bound();
    double hi = opts.bracket_scale * cls.reward_bound();
    double glo = gap(lo), ghi = gap(hi);
    if (glo < 0.0 || ghi > 0.0) {
        if (std::fabs(glo) < opts.tol) return lo;
        if (std::fabs(ghi) < opts.tol) return hi;
        return std::nullopt; // no sign change: non-indexable for this oracle
    }
    while (hi - lo > opts.tol) {
        const double mid = 0.5 * (lo + hi);
        if (gap(mid) > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace wcg
