#include "wcg/indices.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace wcg {

namespace {

// Taboo system (I - P_masked) x = rhs over states, P_masked dropping the s0
// column.
std::vector<double> solve_taboo(const BanditClass& cls, const std::vector<int>& actions,
                                const std::vector<double>& rhs) {
    const std::size_t n = static_cast<std::size_t>(cls.state_count);
    Matrix a(n, n);
    for (std::size_t s = 0; s < n; ++s) {
        a(s, s) += 1.0;
        for (std::size_t s2 = 0; s2 < n; ++s2) {
            if (static_cast<int>(s2) == cls.ergodic_state) continue;
            a(s, s2) -= cls.kernel(static_cast<int>(s), actions[s], static_cast<int>(s2));
        }
    }
    auto x = solve_linear(std::move(a), rhs);
    if (!x) throw SolverError("policy_value: taboo system singular; ergodic state unreachable");
    return *x;
}

} // namespace

Matrix label_cost_matrix(const BanditClass& cls, const std::vector<double>& label_costs) {
    Matrix m(static_cast<std::size_t>(cls.state_count), static_cast<std::size_t>(cls.action_count));
    for (int s = 0; s < cls.state_count; ++s)
        for (int a = 0; a < cls.action_count; ++a)
            m(static_cast<std::size_t>(s), static_cast<std::size_t>(a)) =
                label_costs[static_cast<std::size_t>(a)];
    return m;
}

PolicyValue policy_value(const BanditClass& cls, const std::vector<int>& actions,
                         const Matrix& cost_matrix) {
    const std::size_t n = static_cast<std::size_t>(cls.state_count);
    std::vector<double> reward_rhs(n), cost_rhs(n), one_rhs(n, 1.0);
    for (std::size_t s = 0; s < n; ++s) {
        reward_rhs[s] = cls.reward(static_cast<int>(s), actions[s]);
        cost_rhs[s] = cost_matrix(s, static_cast<std::size_t>(actions[s]));
    }
    const std::vector<double> v = solve_taboo(cls, actions, reward_rhs);
    const std::vector<double> u = solve_taboo(cls, actions, cost_rhs);
    const std::vector<double> len = solve_taboo(cls, actions, one_rhs);
    PolicyValue out;
    const std::size_t s0 = static_cast<std::size_t>(cls.ergodic_state);
    out.v = v[s0];
    out.u = u[s0];
    out.cycle_length = len[s0];
    out.gamma_rate = out.v / out.cycle_length;
    out.omega_rate = out.u / out.cycle_length;
    return out;
}

std::vector<double> stationary_distribution(const BanditClass& cls, const std::vector<int>& actions) {
    const std::size_t n = static_cast<std::size_t>(cls.state_count);
    // (P^T - I) pi = 0 with the last row replaced by sum(pi) = 1
    Matrix a(n, n);
    std::vector<double> b(n, 0.0);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t s2 = 0; s2 < n; ++s2)
            a(s2, s) += cls.kernel(static_cast<int>(s), actions[s], static_cast<int>(s2));
    for (std::size_t s = 0; s < n; ++s) a(s, s) -= 1.0;
    for (std::size_t s = 0; s < n; ++s) a(n - 1, s) = 1.0;
    b[n - 1] = 1.0;
    auto pi = solve_linear(std::move(a), std::move(b));
    if (!pi) throw SolverError("stationary_distribution: singular system");
    return *pi;
}

double MpIndexTable::nu(int state, int action) const {
    for (const auto& e : entries)
        if (e.state == state && e.action == action) return e.nu;
    throw ModelError("MpIndexTable::nu: pair not present");
}

MpIndexTable ds_adaptive_greedy(const BanditClass& cls, const std::vector<double>& label_costs,
                                int class_id, const DsOptions& opts) {
    const Matrix costs = label_cost_matrix(cls, label_costs);
    MpIndexTable table;
    table.class_id = class_id;

    std::vector<int> labels(static_cast<std::size_t>(cls.state_count), cls.action_count - 1);
    Rng tie_rng(derive_seed(opts.tie_seed, 0xD5ULL, static_cast<std::uint64_t>(class_id)));

    auto value_of = [&](const std::vector<int>& acts) {
        if (!check_ergodic(cls, acts, opts.ergodic_horizon)) {
            std::ostringstream os;
            os << "ds_adaptive_greedy: intermediate policy not ergodic, labels";
            for (int v : acts) os << " " << (v + 1);
            throw SolverError(os.str());
        }
        return policy_value(cls, acts, costs);
    };

    int m = 1;
    while (std::any_of(labels.begin(), labels.end(), [](int a) { return a >= 1; })) {
        const PolicyValue base = value_of(labels);
        std::vector<double> nu(static_cast<std::size_t>(cls.state_count), 0.0);
        std::vector<int> eligible;
        for (int s = 0; s < cls.state_count; ++s) {
            if (labels[static_cast<std::size_t>(s)] < 1) continue;
            eligible.push_back(s);
            std::vector<int> shifted = labels;
            --shifted[static_cast<std::size_t>(s)];
            const PolicyValue down = value_of(shifted);
            const double denom = base.omega_rate - down.omega_rate;
            nu[static_cast<std::size_t>(s)] =
                denom != 0.0 ? (base.gamma_rate - down.gamma_rate) / denom : 0.0;
        }
        // The sweep removes the least productive gear first: the recorded
        // indices ascend along m and, on indexable instances, retrace the
        // classic upshift adaptive-greedy (and the Whittle indices) in
        // reverse. Ties go to a seeded uniform choice.
        double best = nu[static_cast<std::size_t>(eligible.front())];
        for (int s : eligible) best = std::min(best, nu[static_cast<std::size_t>(s)]);
        std::vector<int> winners;
        for (int s : eligible)
            if (nu[static_cast<std::size_t>(s)] == best) winners.push_back(s);
        const int pick = winners[tie_rng.uniform_below(winners.size())];

        MpIndexEntry entry;
        entry.m = m;
        entry.state = pick;
        entry.action = labels[static_cast<std::size_t>(pick)];
        entry.nu = best;
        entry.action_vector = labels;
        table.entries.push_back(std::move(entry));

        --labels[static_cast<std::size_t>(pick)];
        ++m;
    }

    // non-decreasing along the downshift sweep = non-increasing in priority
    table.pcl = true;
    for (std::size_t k = 1; k < table.entries.size(); ++k)
        if (table.entries[k - 1].nu > table.entries[k].nu + 1e-12) {
            table.pcl = false;
            break;
        }
    return table;
}

std::vector<MpIndexTable> ds_adaptive_greedy(const WcgInstance& inst, const DsOptions& opts) {
    if (!inst.constraints.budget)
        throw ModelError("ds_adaptive_greedy: instance has no budget constraint");
    std::vector<MpIndexTable> tables;
    tables.reserve(inst.classes.size());
    for (int i = 0; i < inst.class_count(); ++i)
        tables.push_back(ds_adaptive_greedy(
            inst.classes[static_cast<std::size_t>(i)],
            inst.constraints.budget->label_costs[static_cast<std::size_t>(i)], i, opts));
    return tables;
}

std::vector<int> mp_assemble_actions(const WcgInstance& inst, const NuLookup& nu,
                                     const std::vector<int>& states, std::uint64_t tie_seed) {
    if (!inst.constraints.budget)
        throw ModelError("mp_assemble_actions: instance has no budget constraint");
    if (inst.constraints.items.size() != 1)
        throw ModelError("mp_assemble_actions: single constraint required");
    const Constraint& coupled = inst.constraints.items[0];
    const ArmLayout layout = ArmLayout::of(inst);

    struct Candidate {
        double nu;
        double tie;
        std::size_t arm;
        int action;
    };
    Rng tie_rng(derive_seed(tie_seed, 0xAC7ULL));
    std::vector<Candidate> cands;
    for (std::size_t pos = 0; pos < states.size(); ++pos) {
        const int i = layout.class_of[pos];
        for (int a = 1; a < inst.classes[static_cast<std::size_t>(i)].action_count; ++a)
            cands.push_back(Candidate{nu(i, states[pos], a), tie_rng.uniform(), pos, a});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
        if (x.nu != y.nu) return x.nu > y.nu;
        return x.tie > y.tie;
    });

    std::vector<int> actions(states.size(), 0);
    double total = 0.0;
    for (std::size_t pos = 0; pos < states.size(); ++pos)
        total += coupled.coeffs[static_cast<std::size_t>(layout.class_of[pos])](
            static_cast<std::size_t>(states[pos]), 0);

    for (const Candidate& c : cands) {
        const int cur = actions[c.arm];
        if (c.action <= cur) continue; // only upgrades
        const Matrix& f = coupled.coeffs[static_cast<std::size_t>(layout.class_of[c.arm])];
        const double delta = f(static_cast<std::size_t>(states[c.arm]), static_cast<std::size_t>(c.action)) -
                             f(static_cast<std::size_t>(states[c.arm]), static_cast<std::size_t>(cur));
        if (total + delta <= 1e-12) {
            actions[c.arm] = c.action;
            total += delta;
        }
    }
    return actions;
}

std::vector<int> mp_assemble_actions(const WcgInstance& inst,
                                     const std::vector<MpIndexTable>& tables,
                                     const std::vector<int>& states, std::uint64_t tie_seed) {
    return mp_assemble_actions(
        inst,
        [&tables](int i, int s, int a) { return tables[static_cast<std::size_t>(i)].nu(s, a); },
        states, tie_seed);
}

} // namespace wcg
