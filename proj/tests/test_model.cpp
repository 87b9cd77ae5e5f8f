#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "testutil.hpp"
#include "wcg/model.hpp"

using namespace wcg;
using wcgtest::mat;

namespace {

WcgInstance identity_instance(int states, int actions, int base = 3) {
    BanditClass cls;
    cls.state_count = states;
    cls.action_count = actions;
    for (int a = 0; a < actions; ++a) cls.kernels.push_back(Matrix::identity(static_cast<std::size_t>(states)));
    cls.mean_rewards = Matrix(static_cast<std::size_t>(states), static_cast<std::size_t>(actions));
    cls.ergodic_state = 0;
    WcgInstance inst;
    inst.classes.push_back(std::move(cls));
    inst.base_counts = {base};
    inst.scale = 1;
    return inst;
}

// brute-force Condition-1 oracle on the positive-support boolean matrix
bool ergodic_by_enumeration(const BanditClass& cls, const std::vector<int>& actions, int max_steps) {
    const int n = cls.state_count;
    auto reach = [&](int from, int steps) {
        std::vector<char> cur(static_cast<std::size_t>(n), 0);
        cur[static_cast<std::size_t>(from)] = 1;
        if (from == cls.ergodic_state) return true;
        for (int t = 1; t <= steps; ++t) {
            std::vector<char> next(static_cast<std::size_t>(n), 0);
            for (int s = 0; s < n; ++s) {
                if (!cur[static_cast<std::size_t>(s)]) continue;
                for (int s2 = 0; s2 < n; ++s2)
                    if (cls.kernel(s, actions[static_cast<std::size_t>(s)], s2) > 0.0)
                        next[static_cast<std::size_t>(s2)] = 1;
            }
            if (next[static_cast<std::size_t>(cls.ergodic_state)]) return true;
            cur = std::move(next);
        }
        return false;
    };
    for (int s = 0; s < n; ++s)
        if (!reach(s, max_steps)) return false;
    // period of s0: gcd over return times up to a safe bound
    std::vector<char> cur(static_cast<std::size_t>(n), 0);
    cur[static_cast<std::size_t>(cls.ergodic_state)] = 1;
    int g = 0;
    for (int t = 1; t <= 64; ++t) {
        std::vector<char> next(static_cast<std::size_t>(n), 0);
        for (int s = 0; s < n; ++s) {
            if (!cur[static_cast<std::size_t>(s)]) continue;
            for (int s2 = 0; s2 < n; ++s2)
                if (cls.kernel(s, actions[static_cast<std::size_t>(s)], s2) > 0.0)
                    next[static_cast<std::size_t>(s2)] = 1;
        }
        if (next[static_cast<std::size_t>(cls.ergodic_state)]) g = std::gcd(g, t);
        cur = std::move(next);
    }
    return g == 1;
}

} // namespace

TEST_CASE("validate: identity kernels and zero rewards pass") {
    const WcgInstance inst = identity_instance(2, 2);
    CHECK(validate_instance(inst).ok());
}

TEST_CASE("validate: broken row sum is reported with its coordinates") {
    WcgInstance inst = identity_instance(2, 2);
    inst.classes[0].kernels[1](0, 0) = 0.9;
    inst.classes[0].kernels[1](0, 1) = 0.0;
    const ValidationReport rep = validate_instance(inst);
    REQUIRE_FALSE(rep.ok());
    bool found = false;
    for (const auto& v : rep.violations)
        if (v.find("(i=0,a=1,s=0)") != std::string::npos) found = true;
    CHECK(found);
}

TEST_CASE("validate: multi-gear order violations") {
    WcgInstance inst = wcgtest::two_state_instance();
    inst.constraints.budget->label_costs[0] = {1.0, 1.0}; // f(1) == f(2)
    const ValidationReport rep = validate_instance(inst);
    REQUIRE_FALSE(rep.ok());
    bool found = false;
    for (const auto& v : rep.violations)
        if (v.find("multi-gear order") != std::string::npos) found = true;
    CHECK(found);
}

TEST_CASE("sa index: counting and lexicographic order") {
    const WcgInstance one = identity_instance(2, 2);
    const SaIndex idx(one);
    CHECK(idx.total() == 4);
    // (class 0, state 1, action 1) is the last label under (i, s, a) order
    CHECK(idx.label(0, 1, 1) == 3);

    WcgInstance two = identity_instance(2, 2);
    two.classes.push_back(two.classes[0]);
    two.classes[1].state_count = 3;
    two.classes[1].kernels.assign(2, Matrix::identity(3));
    two.classes[1].mean_rewards = Matrix(3, 2);
    two.base_counts = {3, 3};
    CHECK(SaIndex(two).total() == 10);

    const WcgInstance tiny = identity_instance(1, 1);
    CHECK(SaIndex(tiny).total() == 1);
}

TEST_CASE("sa index: bijection round-trips both ways") {
    WcgInstance inst = identity_instance(3, 2);
    inst.classes.push_back(inst.classes[0]);
    inst.base_counts = {2, 2};
    const SaIndex idx(inst);
    for (std::size_t l = 0; l < idx.total(); ++l) {
        const auto& e = idx.entry(l);
        CHECK(idx.label(e.class_id, e.state, e.action) == l);
    }
}

TEST_CASE("check_ergodic: full support is ergodic") {
    const WcgInstance inst = wcgtest::two_state_instance();
    CHECK(check_ergodic(inst.classes[0], {0, 0}, 16));
    CHECK(check_ergodic(inst.classes[0], {1, 1}, 16));
}

TEST_CASE("check_ergodic: trapping state fails reachability") {
    BanditClass cls;
    cls.state_count = 2;
    cls.action_count = 1;
    cls.kernels = {mat({{1.0, 0.0}, {0.0, 1.0}})}; // state 1 never leaves
    cls.mean_rewards = Matrix(2, 1);
    cls.ergodic_state = 0;
    CHECK_FALSE(check_ergodic(cls, {0, 0}, 16));
}

TEST_CASE("check_ergodic: deterministic 2-cycle is periodic") {
    BanditClass cls;
    cls.state_count = 2;
    cls.action_count = 1;
    cls.kernels = {mat({{0.0, 1.0}, {1.0, 0.0}})};
    cls.mean_rewards = Matrix(2, 1);
    cls.ergodic_state = 0;
    CHECK_FALSE(check_ergodic(cls, {0, 0}, 16));
}

TEST_CASE("check_ergodic agrees with path enumeration on random supports") {
    Rng rng(20240811);
    for (int trial = 0; trial < 400; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_below(3)); // |S| <= 4
        BanditClass cls;
        cls.state_count = n;
        cls.action_count = 1;
        Matrix k(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
        for (int s = 0; s < n; ++s) {
            int nonzero = 0;
            for (int s2 = 0; s2 < n; ++s2)
                if (rng.uniform() < 0.4) {
                    k(static_cast<std::size_t>(s), static_cast<std::size_t>(s2)) = 1.0;
                    ++nonzero;
                }
            if (nonzero == 0) {
                k(static_cast<std::size_t>(s), rng.uniform_below(static_cast<std::size_t>(n))) = 1.0;
                nonzero = 1;
            }
            for (int s2 = 0; s2 < n; ++s2)
                k(static_cast<std::size_t>(s), static_cast<std::size_t>(s2)) /= nonzero;
        }
        cls.kernels = {k};
        cls.mean_rewards = Matrix(static_cast<std::size_t>(n), 1);
        cls.ergodic_state = 0;
        const std::vector<int> pol(static_cast<std::size_t>(n), 0);
        const int max_steps = 8;
        CHECK(check_ergodic(cls, pol, max_steps) == ergodic_by_enumeration(cls, pol, max_steps));
    }
}

TEST_CASE("eval_constraints: zero function and budget forms") {
    WcgInstance inst = wcgtest::two_state_instance();
    const int n = inst.total_arms();
    const std::vector<int> states(static_cast<std::size_t>(n), 0);

    SUBCASE("all passive under the budget is slack") {
        const std::vector<int> actions(static_cast<std::size_t>(n), 0);
        const auto res = eval_constraints(inst, states, actions);
        REQUIRE(res.size() == 1);
        // cost 0 per arm minus the budget share
        CHECK(res[0] == doctest::Approx(-inst.constraints.budget->budget));
        CHECK(constraints_satisfied(inst.constraints, res));
    }

    SUBCASE("zero constraint function gives zero residual") {
        Constraint zero;
        zero.mode = ConstraintMode::Equality;
        zero.coeffs = {Matrix(2, 2)};
        inst.constraints.items = {zero};
        inst.constraints.budget.reset();
        const std::vector<int> actions(static_cast<std::size_t>(n), 1);
        const auto res = eval_constraints(inst, states, actions);
        CHECK(res[0] == 0.0);
    }
}

TEST_CASE("eval_constraints: direct summation on a small budget instance") {
    // h = 1, three arms, budget cap of one active arm
    WcgInstance inst = wcgtest::two_state_instance();
    inst.base_counts = {3};
    BudgetSpec spec;
    spec.label_costs = {{0.0, 1.0}};
    spec.budget = 1.0;
    inst.constraints = make_budget_constraints(inst, std::move(spec));
    const std::vector<int> states{0, 1, 0};
    const std::vector<int> actions{1, 0, 0};
    const auto res = eval_constraints(inst, states, actions);
    // oracle: direct sum of f(s, a) = cost(a) - budget/3
    double expect = 0.0;
    for (std::size_t k = 0; k < 3; ++k) expect += (actions[k] == 1 ? 1.0 : 0.0) - 1.0 / 3.0;
    CHECK(res[0] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(constraints_satisfied(inst.constraints, res));
}

TEST_CASE("occupancy: point mass and split masses") {
    WcgInstance inst = wcgtest::two_state_instance();
    inst.base_counts = {4};
    const SaIndex idx(inst);

    const std::vector<int> all_zero(4, 0);
    Occupancy occ = occupancy_from_state(inst, idx, all_zero, all_zero);
    CHECK(occ.fractions() == std::vector<double>{1.0, 0.0, 0.0, 0.0});

    const std::vector<int> states{0, 0, 1, 1};
    const std::vector<int> actions{1, 1, 0, 0};
    occ = occupancy_from_state(inst, idx, states, actions);
    const auto z = occ.fractions();
    CHECK(z[idx.label(0, 0, 1)] == 0.5);
    CHECK(z[idx.label(0, 1, 0)] == 0.5);
}

TEST_CASE("occupancy: counts match a hand tally on random configurations") {
    WcgInstance inst = wcgtest::two_state_instance(10); // h = 10
    const SaIndex idx(inst);
    Rng rng(99);
    const int n = inst.total_arms();
    std::vector<int> states(static_cast<std::size_t>(n)), actions(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        states[static_cast<std::size_t>(k)] = static_cast<int>(rng.uniform_below(2));
        actions[static_cast<std::size_t>(k)] = static_cast<int>(rng.uniform_below(2));
    }
    const Occupancy occ = occupancy_from_state(inst, idx, states, actions);
    std::vector<std::int64_t> tally(idx.total(), 0);
    for (int k = 0; k < n; ++k)
        ++tally[idx.label(0, states[static_cast<std::size_t>(k)], actions[static_cast<std::size_t>(k)])];
    CHECK(occ.counts == tally);
    // the simplex sum is exact in counts
    std::int64_t sum = 0;
    for (auto c : occ.counts) sum += c;
    CHECK(sum == occ.total);
}

TEST_CASE("occupancy invariants hold on random instances") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        WcgInstance inst = wcgtest::random_budget_instance(rng, 2 + static_cast<int>(rng.uniform_below(2)),
                                                           2 + static_cast<int>(rng.uniform_below(2)));
        inst.scale = 1 + static_cast<int>(rng.uniform_below(4));
        const SaIndex idx(inst);
        const int n = inst.total_arms();
        std::vector<int> states(static_cast<std::size_t>(n)), actions(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) {
            states[static_cast<std::size_t>(k)] =
                static_cast<int>(rng.uniform_below(static_cast<std::size_t>(inst.classes[0].state_count)));
            actions[static_cast<std::size_t>(k)] =
                static_cast<int>(rng.uniform_below(static_cast<std::size_t>(inst.classes[0].action_count)));
        }
        const Occupancy occ = occupancy_from_state(inst, idx, states, actions);
        std::int64_t sum = 0;
        for (auto c : occ.counts) sum += c;
        CHECK(sum == occ.total);
        CHECK(occ.total == n);
    }
}
