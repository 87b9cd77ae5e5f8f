#include "wcg/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace wcg {

Constraint budget_constraint(const BudgetSpec& spec, const std::vector<int>& base_counts,
                             const std::vector<BanditClass>& classes) {
    const double total_base =
        static_cast<double>(std::accumulate(base_counts.begin(), base_counts.end(), 0));
    const double share = spec.budget / total_base;
    Constraint c;
    c.mode = ConstraintMode::InequalityLeq;
    c.coeffs.reserve(classes.size());
    for (std::size_t i = 0; i < classes.size(); ++i) {
        const auto& cls = classes[i];
        Matrix m(static_cast<std::size_t>(cls.state_count), static_cast<std::size_t>(cls.action_count));
        for (int s = 0; s < cls.state_count; ++s)
            for (int a = 0; a < cls.action_count; ++a)
                m(static_cast<std::size_t>(s), static_cast<std::size_t>(a)) =
                    spec.label_costs[i][static_cast<std::size_t>(a)] - share;
        c.coeffs.push_back(std::move(m));
    }
    return c;
}

ConstraintSet make_budget_constraints(const WcgInstance& inst, BudgetSpec spec) {
    ConstraintSet cs;
    cs.items.push_back(budget_constraint(spec, inst.base_counts, inst.classes));
    cs.budget = std::move(spec);
    return cs;
}

SaIndex::SaIndex(const WcgInstance& inst) {
    offsets_.resize(inst.classes.size());
    action_counts_.resize(inst.classes.size());
    std::size_t next = 0;
    for (std::size_t i = 0; i < inst.classes.size(); ++i) {
        offsets_[i] = next;
        action_counts_[i] = static_cast<std::size_t>(inst.classes[i].action_count);
        for (int s = 0; s < inst.classes[i].state_count; ++s)
            for (int a = 0; a < inst.classes[i].action_count; ++a)
                entries_.push_back(Entry{static_cast<int>(i), s, a});
        next = entries_.size();
    }
}

namespace {

void validate_class(const BanditClass& cls, int class_id, std::vector<std::string>& out) {
    std::ostringstream tag;
    tag << "class " << class_id;
    if (cls.state_count <= 0 || cls.action_count <= 0) {
        out.push_back(tag.str() + ": state/action counts must be positive");
        return;
    }
    if (cls.kernels.size() != static_cast<std::size_t>(cls.action_count)) {
        out.push_back(tag.str() + ": kernel count differs from action count");
        return;
    }
    for (int a = 0; a < cls.action_count; ++a) {
        const Matrix& k = cls.kernels[static_cast<std::size_t>(a)];
        if (k.rows() != static_cast<std::size_t>(cls.state_count) ||
            k.cols() != static_cast<std::size_t>(cls.state_count)) {
            out.push_back(tag.str() + ": kernel shape mismatch for action " + std::to_string(a));
            continue;
        }
        for (int s = 0; s < cls.state_count; ++s) {
            double row = 0.0;
            bool in_range = true;
            for (int s2 = 0; s2 < cls.state_count; ++s2) {
                const double p = k(static_cast<std::size_t>(s), static_cast<std::size_t>(s2));
                if (p < 0.0 || p > 1.0 || !std::isfinite(p)) in_range = false;
                row += p;
            }
            if (!in_range) {
                std::ostringstream os;
                os << tag.str() << ": kernel entry out of [0,1] at (i=" << class_id << ",a=" << a
                   << ",s=" << s << ")";
                out.push_back(os.str());
            }
            if (std::fabs(row - 1.0) > 1e-12) {
                std::ostringstream os;
                os << tag.str() << ": kernel row sums to " << row << " at (i=" << class_id
                   << ",a=" << a << ",s=" << s << ")";
                out.push_back(os.str());
            }
        }
    }
    if (cls.mean_rewards.rows() != static_cast<std::size_t>(cls.state_count) ||
        cls.mean_rewards.cols() != static_cast<std::size_t>(cls.action_count))
        out.push_back(tag.str() + ": mean_rewards shape mismatch");
    for (double v : cls.mean_rewards.data())
        if (!std::isfinite(v)) {
            out.push_back(tag.str() + ": non-finite mean reward");
            break;
        }
    if (cls.reward_law.kind != RewardLaw::Kind::Deterministic && cls.reward_law.half_width < 0.0)
        out.push_back(tag.str() + ": reward law half_width must be non-negative");
    if (cls.reward_law.kind == RewardLaw::Kind::TruncatedNormal && cls.reward_law.stddev <= 0.0)
        out.push_back(tag.str() + ": truncated normal needs stddev > 0");
    if (cls.ergodic_state < 0 || cls.ergodic_state >= cls.state_count)
        out.push_back(tag.str() + ": ergodic_state out of range");
}

} // namespace

ValidationReport validate_instance(const WcgInstance& inst) {
    ValidationReport rep;
    auto& out = rep.violations;
    if (inst.classes.empty()) out.push_back("instance has no classes");
    if (inst.base_counts.size() != inst.classes.size())
        out.push_back("base_counts length differs from class count");
    for (std::size_t i = 0; i < inst.base_counts.size(); ++i)
        if (inst.base_counts[i] <= 0)
            out.push_back("base_counts[" + std::to_string(i) + "] must be positive");
    if (inst.scale <= 0) out.push_back("scale must be positive");
    if (!(inst.discount > 0.0 && inst.discount <= 1.0)) out.push_back("discount must lie in (0,1]");
    if (inst.horizon && *inst.horizon < 0) out.push_back("horizon must be non-negative");

    for (std::size_t i = 0; i < inst.classes.size(); ++i)
        validate_class(inst.classes[i], static_cast<int>(i), out);

    for (std::size_t l = 0; l < inst.constraints.items.size(); ++l) {
        const Constraint& c = inst.constraints.items[l];
        if (c.coeffs.size() != inst.classes.size()) {
            out.push_back("constraint " + std::to_string(l) + ": class count mismatch");
            continue;
        }
        for (std::size_t i = 0; i < c.coeffs.size(); ++i) {
            if (i >= inst.classes.size()) break;
            const auto& cls = inst.classes[i];
            if (c.coeffs[i].rows() != static_cast<std::size_t>(cls.state_count) ||
                c.coeffs[i].cols() != static_cast<std::size_t>(cls.action_count)) {
                out.push_back("constraint " + std::to_string(l) + ": coefficient shape mismatch");
                continue;
            }
            for (double v : c.coeffs[i].data())
                if (!std::isfinite(v)) {
                    out.push_back("constraint " + std::to_string(l) + ": non-finite coefficient");
                    break;
                }
        }
    }

    if (inst.constraints.budget) {
        const BudgetSpec& b = *inst.constraints.budget;
        if (inst.constraints.items.size() != 1)
            out.push_back("budget constraint requires L = 1");
        if (b.label_costs.size() != inst.classes.size())
            out.push_back("budget label_costs class count mismatch");
        for (std::size_t i = 0; i < b.label_costs.size() && i < inst.classes.size(); ++i) {
            const auto& costs = b.label_costs[i];
            if (costs.size() != static_cast<std::size_t>(inst.classes[i].action_count)) {
                out.push_back("budget label_costs length mismatch for class " + std::to_string(i));
                continue;
            }
            if (!costs.empty() && costs[0] < 0.0)
                out.push_back("multi-gear order: class " + std::to_string(i) +
                              " lowest label cost must be >= 0");
            for (std::size_t a = 1; a < costs.size(); ++a)
                if (!(costs[a - 1] < costs[a])) {
                    out.push_back("multi-gear order: class " + std::to_string(i) +
                                  " label costs must be strictly increasing");
                    break;
                }
        }
    }
    return rep;
}

ValidationReport validate_policy(const WcgInstance& inst, const RandomizedPolicy& pol) {
    ValidationReport rep;
    const SaIndex idx(inst);
    for (std::size_t t = 0; t < pol.alpha.size(); ++t) {
        const auto& row = pol.alpha[t];
        if (row.size() != idx.total()) {
            rep.violations.push_back("alpha[" + std::to_string(t) + "] has wrong length");
            continue;
        }
        for (double v : row)
            if (v < -1e-12 || v > 1.0 + 1e-12) {
                rep.violations.push_back("alpha[" + std::to_string(t) + "] entry out of [0,1]");
                break;
            }
        for (int i = 0; i < inst.class_count(); ++i) {
            for (int s = 0; s < inst.classes[static_cast<std::size_t>(i)].state_count; ++s) {
                double sum = 0.0;
                for (int a = 0; a < inst.classes[static_cast<std::size_t>(i)].action_count; ++a)
                    sum += row[idx.label(i, s, a)];
                if (std::fabs(sum - 1.0) > 1e-10) {
                    std::ostringstream os;
                    os << "alpha[" << t << "] rows for (i=" << i << ",s=" << s << ") sum to " << sum;
                    rep.violations.push_back(os.str());
                }
            }
        }
    }
    return rep;
}

bool check_ergodic(const BanditClass& cls, const std::vector<int>& state_actions, int max_steps) {
    const int n = cls.state_count;
    const int s0 = cls.ergodic_state;
    // positive-support digraph under the policy
    std::vector<std::vector<int>> succ(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) {
        const int a = state_actions[static_cast<std::size_t>(s)];
        for (int s2 = 0; s2 < n; ++s2)
            if (cls.kernel(s, a, s2) > 0.0) succ[static_cast<std::size_t>(s)].push_back(s2);
    }

    // distance from every state TO s0 (BFS on the reversed graph)
    std::vector<int> dist_to(static_cast<std::size_t>(n), -1);
    {
        std::vector<std::vector<int>> pred(static_cast<std::size_t>(n));
        for (int s = 0; s < n; ++s)
            for (int s2 : succ[static_cast<std::size_t>(s)]) pred[static_cast<std::size_t>(s2)].push_back(s);
        std::vector<int> queue{s0};
        dist_to[static_cast<std::size_t>(s0)] = 0;
        for (std::size_t q = 0; q < queue.size(); ++q)
            for (int p : pred[static_cast<std::size_t>(queue[q])])
                if (dist_to[static_cast<std::size_t>(p)] < 0) {
                    dist_to[static_cast<std::size_t>(p)] = dist_to[static_cast<std::size_t>(queue[q])] + 1;
                    queue.push_back(p);
                }
    }
    for (int s = 0; s < n; ++s)
        if (dist_to[static_cast<std::size_t>(s)] < 0 || dist_to[static_cast<std::size_t>(s)] > max_steps)
            return false;

    // aperiodicity: gcd over edges within the set reachable from s0 of
    // d(u) + 1 - d(v), where d is BFS distance from s0
    std::vector<int> dist_from(static_cast<std::size_t>(n), -1);
    {
        std::vector<int> queue{s0};
        dist_from[static_cast<std::size_t>(s0)] = 0;
        for (std::size_t q = 0; q < queue.size(); ++q)
            for (int s2 : succ[static_cast<std::size_t>(queue[q])])
                if (dist_from[static_cast<std::size_t>(s2)] < 0) {
                    dist_from[static_cast<std::size_t>(s2)] = dist_from[static_cast<std::size_t>(queue[q])] + 1;
                    queue.push_back(s2);
                }
    }
    int g = 0;
    for (int u = 0; u < n; ++u) {
        if (dist_from[static_cast<std::size_t>(u)] < 0) continue;
        for (int v : succ[static_cast<std::size_t>(u)]) {
            if (dist_from[static_cast<std::size_t>(v)] < 0) continue;
            const int delta = dist_from[static_cast<std::size_t>(u)] + 1 - dist_from[static_cast<std::size_t>(v)];
            g = std::gcd(g, std::abs(delta));
        }
    }
    return g == 1;
}

std::vector<double> eval_constraints(const WcgInstance& inst, const std::vector<int>& states,
                                     const std::vector<int>& actions) {
    const std::size_t total = static_cast<std::size_t>(inst.total_arms());
    if (states.size() != total || actions.size() != total)
        throw ModelError("eval_constraints: vector length differs from total arm count");
    std::vector<double> res(inst.constraints.items.size(), 0.0);
    std::size_t pos = 0;
    for (int i = 0; i < inst.class_count(); ++i) {
        const int count = inst.arm_count(i);
        for (int n = 0; n < count; ++n, ++pos)
            for (std::size_t l = 0; l < res.size(); ++l)
                res[l] += inst.constraints.items[l].coeffs[static_cast<std::size_t>(i)](
                    static_cast<std::size_t>(states[pos]), static_cast<std::size_t>(actions[pos]));
    }
    return res;
}

bool constraints_satisfied(const ConstraintSet& cs, const std::vector<double>& residuals, double tol) {
    for (std::size_t l = 0; l < cs.items.size(); ++l) {
        if (cs.items[l].mode == ConstraintMode::Equality) {
            if (std::fabs(residuals[l]) > tol) return false;
        } else if (residuals[l] > tol) {
            return false;
        }
    }
    return true;
}

Occupancy occupancy_from_state(const WcgInstance& inst, const SaIndex& idx,
                               const std::vector<int>& states, const std::vector<int>& actions) {
    const std::size_t total = static_cast<std::size_t>(inst.total_arms());
    if (states.size() != total || actions.size() != total)
        throw ModelError("occupancy_from_state: vector length differs from total arm count");
    Occupancy occ;
    occ.counts.assign(idx.total(), 0);
    occ.total = static_cast<std::int64_t>(total);
    std::size_t pos = 0;
    for (int i = 0; i < inst.class_count(); ++i) {
        const int count = inst.arm_count(i);
        for (int n = 0; n < count; ++n, ++pos)
            ++occ.counts[idx.label(i, states[pos], actions[pos])];
    }
    return occ;
}

ArmLayout ArmLayout::of(const WcgInstance& inst) {
    ArmLayout layout;
    layout.first_arm.resize(static_cast<std::size_t>(inst.class_count()));
    int pos = 0;
    for (int i = 0; i < inst.class_count(); ++i) {
        layout.first_arm[static_cast<std::size_t>(i)] = pos;
        const int count = inst.arm_count(i);
        for (int n = 0; n < count; ++n) layout.class_of.push_back(i);
        pos += count;
    }
    return layout;
}

} // namespace wcg
