#include "wcg/lp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace wcg {

namespace {

std::vector<std::size_t> state_offsets(const WcgInstance& inst) {
    std::vector<std::size_t> off(inst.classes.size() + 1, 0);
    for (std::size_t i = 0; i < inst.classes.size(); ++i)
        off[i + 1] = off[i] + static_cast<std::size_t>(inst.classes[i].state_count);
    return off;
}

} // namespace

ConversionMaps conversion_maps(const WcgInstance& inst, const SaIndex& idx) {
    ConversionMaps maps;
    const double total = static_cast<double>(inst.total_base_count());
    maps.x_from_z.resize(idx.total());
    maps.z_from_x.resize(idx.total());
    for (std::size_t l = 0; l < idx.total(); ++l) {
        const double n0 = static_cast<double>(inst.base_counts[static_cast<std::size_t>(idx.entry(l).class_id)]);
        maps.x_from_z[l] = total / n0;
        maps.z_from_x[l] = n0 / total;
    }
    return maps;
}

std::vector<double> state_occupancy(const WcgInstance& inst, const SaIndex& idx,
                                    const std::vector<double>& z) {
    const auto off = state_offsets(inst);
    std::vector<double> ups(off.back(), 0.0);
    for (std::size_t l = 0; l < idx.total(); ++l) {
        const auto& e = idx.entry(l);
        ups[off[static_cast<std::size_t>(e.class_id)] + static_cast<std::size_t>(e.state)] += z[l];
    }
    return ups;
}

std::size_t LpProblem::flow_row(const WcgInstance& inst, int t, int class_id, int state) const {
    const auto off = state_offsets(inst);
    return static_cast<std::size_t>(t) * off.back() + off[static_cast<std::size_t>(class_id)] +
           static_cast<std::size_t>(state);
}

LpProblem build_lp_with_model(const WcgInstance& inst, const SaIndex& idx,
                              const std::vector<std::vector<Matrix>>& kernels,
                              const std::vector<Matrix>& rewards,
                              const std::optional<std::vector<double>>& x0,
                              const std::vector<std::vector<double>>* state_marginals, int horizon) {
    const int T = horizon;
    if (T < 0) throw ModelError("build_lp: horizon must be non-negative");
    const std::size_t labels = idx.total();
    const auto off = state_offsets(inst);
    const std::size_t state_total = off.back();

    LpProblem prob;
    prob.horizon = T;
    prob.labels = labels;
    prob.flow_rows = static_cast<std::size_t>(T) * state_total;

    LinearProgram& lp = prob.lp;
    lp.num_vars = static_cast<std::size_t>(T + 1) * labels;
    lp.objective.assign(lp.num_vars, 0.0);
    for (int t = 0; t <= T; ++t)
        for (std::size_t l = 0; l < labels; ++l) {
            const auto& e = idx.entry(l);
            lp.objective[prob.var(l, t)] =
                static_cast<double>(inst.base_counts[static_cast<std::size_t>(e.class_id)]) *
                rewards[static_cast<std::size_t>(e.class_id)](static_cast<std::size_t>(e.state),
                                                              static_cast<std::size_t>(e.action));
        }

    // flow conservation: x_t^T P = x_{t+1}^T I-tilde
    for (int t = 0; t + 1 <= T; ++t) {
        for (int i = 0; i < inst.class_count(); ++i) {
            const BanditClass& cls = inst.classes[static_cast<std::size_t>(i)];
            for (int s2 = 0; s2 < cls.state_count; ++s2) {
                LinearProgram::Row row;
                row.kind = LinearProgram::RowKind::Eq;
                row.coeffs.assign(lp.num_vars, 0.0);
                for (std::size_t l = 0; l < labels; ++l) {
                    const auto& e = idx.entry(l);
                    if (e.class_id != i) continue;
                    const double p = kernels[static_cast<std::size_t>(i)][static_cast<std::size_t>(e.action)](
                        static_cast<std::size_t>(e.state), static_cast<std::size_t>(s2));
                    if (p != 0.0) row.coeffs[prob.var(l, t)] += p;
                }
                for (int a = 0; a < cls.action_count; ++a)
                    row.coeffs[prob.var(idx.label(i, s2, a), t + 1)] -= 1.0;
                row.rhs = 0.0;
                lp.rows.push_back(std::move(row));
            }
        }
    }

    // t = 0 state marginals (only when the initial action split is free)
    if (state_marginals) {
        for (int i = 0; i < inst.class_count(); ++i) {
            const BanditClass& cls = inst.classes[static_cast<std::size_t>(i)];
            double mass = 0.0;
            for (double v : (*state_marginals)[static_cast<std::size_t>(i)]) mass += v;
            if (std::fabs(mass - 1.0) > 1e-9)
                throw ModelError("build_lp: state marginals of class " + std::to_string(i) +
                                 " do not sum to 1");
            for (int s = 0; s < cls.state_count; ++s) {
                LinearProgram::Row row;
                row.kind = LinearProgram::RowKind::Eq;
                row.coeffs.assign(lp.num_vars, 0.0);
                for (int a = 0; a < cls.action_count; ++a)
                    row.coeffs[prob.var(idx.label(i, s, a), 0)] = 1.0;
                row.rhs = (*state_marginals)[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)];
                lp.rows.push_back(std::move(row));
            }
        }
    }

    // per-class normalization
    for (int t = 0; t <= T; ++t)
        for (int i = 0; i < inst.class_count(); ++i) {
            LinearProgram::Row row;
            row.kind = LinearProgram::RowKind::Eq;
            row.coeffs.assign(lp.num_vars, 0.0);
            for (std::size_t l = 0; l < labels; ++l)
                if (idx.entry(l).class_id == i) row.coeffs[prob.var(l, t)] = 1.0;
            row.rhs = 1.0;
            lp.rows.push_back(std::move(row));
        }

    // coupling rows
    for (int t = 0; t <= T; ++t)
        for (std::size_t lc = 0; lc < inst.constraints.items.size(); ++lc) {
            const Constraint& c = inst.constraints.items[lc];
            LinearProgram::Row row;
            row.kind = c.mode == ConstraintMode::Equality ? LinearProgram::RowKind::Eq
                                                          : LinearProgram::RowKind::Le;
            row.coeffs.assign(lp.num_vars, 0.0);
            for (std::size_t l = 0; l < labels; ++l) {
                const auto& e = idx.entry(l);
                row.coeffs[prob.var(l, t)] =
                    static_cast<double>(inst.base_counts[static_cast<std::size_t>(e.class_id)]) *
                    c.coeffs[static_cast<std::size_t>(e.class_id)](static_cast<std::size_t>(e.state),
                                                                   static_cast<std::size_t>(e.action));
            }
            row.rhs = 0.0;
            lp.rows.push_back(std::move(row));
        }

    if (x0) {
        if (x0->size() != labels) throw ModelError("build_lp: x0 length mismatch");
        for (int i = 0; i < inst.class_count(); ++i) {
            double mass = 0.0;
            for (std::size_t l = 0; l < labels; ++l)
                if (idx.entry(l).class_id == i) mass += (*x0)[l];
            if (std::fabs(mass - 1.0) > 1e-9)
                throw ModelError("build_lp: x0 of class " + std::to_string(i) + " does not sum to 1");
        }
        lp.fixed.assign(lp.num_vars, std::nullopt);
        for (std::size_t l = 0; l < labels; ++l) lp.fixed[prob.var(l, 0)] = (*x0)[l];
    }
    return prob;
}

namespace {

std::vector<std::vector<Matrix>> true_kernels(const WcgInstance& inst) {
    std::vector<std::vector<Matrix>> k;
    k.reserve(inst.classes.size());
    for (const auto& cls : inst.classes) k.push_back(cls.kernels);
    return k;
}

std::vector<Matrix> true_rewards(const WcgInstance& inst) {
    std::vector<Matrix> r;
    r.reserve(inst.classes.size());
    for (const auto& cls : inst.classes) r.push_back(cls.mean_rewards);
    return r;
}

} // namespace

LpProblem build_lp(const WcgInstance& inst, const SaIndex& idx, const std::vector<double>& x0,
                   int horizon) {
    return build_lp_with_model(inst, idx, true_kernels(inst), true_rewards(inst), x0, nullptr,
                               horizon);
}

LpProblem build_lp_from_marginals(const WcgInstance& inst, const SaIndex& idx,
                                  const std::vector<std::vector<double>>& state_marginals,
                                  int horizon) {
    return build_lp_with_model(inst, idx, true_kernels(inst), true_rewards(inst), std::nullopt,
                               &state_marginals, horizon);
}

double LpSolution::tail_value(const LpProblem& prob) const {
    double v = 0.0;
    for (int t = 1; t <= prob.horizon; ++t)
        for (std::size_t l = 0; l < prob.labels; ++l) {
            const std::size_t var = prob.var(l, t);
            v += prob.lp.objective[var] * x[var];
        }
    return v;
}

LpSolution solve_lp(const LpProblem& prob, const LpSolveOptions& opts) {
    const LpOutcome out = solve_linear_program(prob.lp, opts);
    LpSolution sol;
    sol.status = out.status;
    sol.x = out.x;
    sol.value = out.value;
    sol.iterations = out.iterations;
    sol.basis = out.basis;
    sol.duals = out.duals;
    return sol;
}

RandomizedPolicy policy_from_x(const LpProblem& prob, const LpSolution& sol,
                               const WcgInstance& inst, const SaIndex& idx) {
    RandomizedPolicy pol;
    pol.alpha.resize(static_cast<std::size_t>(prob.horizon) + 1);
    for (int t = 0; t <= prob.horizon; ++t) {
        auto& row = pol.alpha[static_cast<std::size_t>(t)];
        row.assign(prob.labels, 0.0);
        for (int i = 0; i < inst.class_count(); ++i) {
            const BanditClass& cls = inst.classes[static_cast<std::size_t>(i)];
            for (int s = 0; s < cls.state_count; ++s) {
                double marg = 0.0;
                for (int a = 0; a < cls.action_count; ++a)
                    marg += sol.x[prob.var(idx.label(i, s, a), t)];
                for (int a = 0; a < cls.action_count; ++a) {
                    const std::size_t l = idx.label(i, s, a);
                    row[l] = marg > 1e-12 ? std::max(0.0, sol.x[prob.var(l, t)]) / marg
                                          : 1.0 / static_cast<double>(cls.action_count);
                }
            }
        }
    }
    return pol;
}

std::string export_lp_text(const LpProblem& prob) {
    std::ostringstream os;
    char buf[64];
    auto num = [&buf](double v) {
        std::snprintf(buf, sizeof buf, "%.12g", v);
        return std::string(buf);
    };
    auto var_name = [&](std::size_t v) {
        const std::size_t t = v / prob.labels, l = v % prob.labels;
        return "x[" + std::to_string(l) + "," + std::to_string(t) + "]";
    };
    os << "maximize\n ";
    for (std::size_t v = 0; v < prob.lp.num_vars; ++v) {
        const double c = prob.lp.objective[v];
        if (c == 0.0) continue;
        os << (c >= 0 ? " + " : " - ") << num(std::fabs(c)) << " " << var_name(v);
    }
    os << "\nsubject to\n";
    for (std::size_t r = 0; r < prob.lp.rows.size(); ++r) {
        const auto& row = prob.lp.rows[r];
        os << " r" << r << ":";
        for (std::size_t v = 0; v < prob.lp.num_vars; ++v) {
            const double c = row.coeffs[v];
            if (c == 0.0) continue;
            os << (c >= 0 ? " + " : " - ") << num(std::fabs(c)) << " " << var_name(v);
        }
        os << (row.kind == LinearProgram::RowKind::Eq ? " = " : " <= ") << num(row.rhs) << "\n";
    }
    os << "bounds\n";
    for (std::size_t v = 0; v < prob.lp.num_vars; ++v) {
        if (!prob.lp.fixed.empty() && prob.lp.fixed[v])
            os << " " << var_name(v) << " = " << num(*prob.lp.fixed[v]) << "\n";
    }
    os << " 0 <= x <= 1\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// (epsilon, x0)-LP
// ---------------------------------------------------------------------------

namespace {

struct KernelRowBox {
    std::vector<double> lo, hi;
};

KernelRowBox row_box(const Matrix& p_hat, std::size_t s, double width) {
    KernelRowBox box;
    box.lo.resize(p_hat.cols());
    box.hi.resize(p_hat.cols());
    for (std::size_t s2 = 0; s2 < p_hat.cols(); ++s2) {
        box.lo[s2] = std::max(0.0, p_hat(s, s2) - width);
        box.hi[s2] = std::min(1.0, p_hat(s, s2) + width);
    }
    return box;
}

// maximize g . p over { sum p = 1, lo <= p <= hi }: start at lo, pour the
// remaining mass into the best coordinates first
std::vector<double> box_simplex_argmax(const KernelRowBox& box, const std::vector<double>& g) {
    const std::size_t n = box.lo.size();
    std::vector<double> p = box.lo;
    double slack = 1.0 - std::accumulate(p.begin(), p.end(), 0.0);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&g](std::size_t a, std::size_t b) { return g[a] > g[b]; });
    for (std::size_t k = 0; k < n && slack > 1e-15; ++k) {
        const std::size_t j = order[k];
        const double add = std::min(slack, box.hi[j] - box.lo[j]);
        p[j] += add;
        slack -= add;
    }
    return p;
}

// vertices of { sum p = 1, lo <= p <= hi }: at most one fractional coordinate
std::vector<std::vector<double>> row_vertices(const KernelRowBox& box) {
    const std::size_t n = box.lo.size();
    std::vector<std::vector<double>> verts;
    for (std::size_t free = 0; free < n; ++free) {
        const std::size_t others = n - 1;
        for (std::size_t mask = 0; mask < (1ULL << others); ++mask) {
            std::vector<double> p(n);
            double sum = 0.0;
            std::size_t bit = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == free) continue;
                p[j] = (mask >> bit & 1) ? box.hi[j] : box.lo[j];
                sum += p[j];
                ++bit;
            }
            const double rest = 1.0 - sum;
            if (rest < box.lo[free] - 1e-12 || rest > box.hi[free] + 1e-12) continue;
            p[free] = std::clamp(rest, box.lo[free], box.hi[free]);
            bool dup = false;
            for (const auto& q : verts)
                if (max_abs_diff(q, p) < 1e-12) {
                    dup = true;
                    break;
                }
            if (!dup) verts.push_back(std::move(p));
        }
    }
    return verts;
}

} // namespace

EpsLpResult solve_eps_lp(const WcgInstance& inst, const SaIndex& idx,
                         const std::vector<std::vector<Matrix>>& p_hat,
                         const std::vector<Matrix>& r_hat, const std::vector<char>& row_estimated,
                         double eps, const std::vector<double>& x0, int horizon,
                         const EpsLpOptions& opts) {
    if (eps < 0.0) throw ModelError("solve_eps_lp: eps must be non-negative");
    for (std::size_t l = 0; l < idx.total(); ++l)
        if (!row_estimated.empty() && !row_estimated[l])
            throw ModelError("solve_eps_lp: kernel row " + std::to_string(l) +
                             " was never estimated (good case violated)");

    const double width = eps / static_cast<double>(idx.total());
    EpsLpResult res;

    // r-bar: the box corner is always optimal since occupancy is non-negative
    res.rewards = r_hat;
    for (auto& m : res.rewards)
        for (double& v : m.data()) v += width;

    auto solve_at = [&](const std::vector<std::vector<Matrix>>& kernels) {
        LpProblem prob =
            build_lp_with_model(inst, idx, kernels, res.rewards, x0, nullptr, horizon);
        LpSolution sol = solve_lp(prob, opts.solve);
        ++res.lp_solves;
        return std::make_pair(std::move(prob), std::move(sol));
    };

    if (eps == 0.0) {
        auto [prob, sol] = solve_at(p_hat);
        res.problem = std::move(prob);
        res.solution = std::move(sol);
        res.kernels = p_hat;
        res.value = res.solution.value;
        res.upper_bound = res.solution.value;
        return res;
    }

    // candidate kernels
    std::vector<std::vector<std::vector<Matrix>>> candidates{p_hat};
    for (const auto& w : opts.warm_kernels) candidates.push_back(w);

    std::vector<KernelRowBox> boxes(idx.total());
    for (std::size_t l = 0; l < idx.total(); ++l) {
        const auto& e = idx.entry(l);
        boxes[l] = row_box(p_hat[static_cast<std::size_t>(e.class_id)][static_cast<std::size_t>(e.action)],
                           static_cast<std::size_t>(e.state), width);
    }

    std::vector<std::vector<std::vector<double>>> verts(idx.total());
    double combos = 1.0;
    for (std::size_t l = 0; l < idx.total(); ++l) {
        verts[l] = row_vertices(boxes[l]);
        combos *= static_cast<double>(verts[l].size());
    }
    res.exhaustive = combos <= static_cast<double>(opts.corner_cap);
    if (res.exhaustive) {
        std::vector<std::size_t> pick(idx.total(), 0);
        while (true) {
            std::vector<std::vector<Matrix>> kernels = p_hat;
            for (std::size_t l = 0; l < idx.total(); ++l) {
                const auto& e = idx.entry(l);
                Matrix& mat =
                    kernels[static_cast<std::size_t>(e.class_id)][static_cast<std::size_t>(e.action)];
                for (std::size_t s2 = 0; s2 < mat.cols(); ++s2)
                    mat(static_cast<std::size_t>(e.state), s2) = verts[l][pick[l]][s2];
            }
            candidates.push_back(std::move(kernels));
            std::size_t j = 0;
            for (; j < idx.total(); ++j) {
                if (++pick[j] < verts[j].size()) break;
                pick[j] = 0;
            }
            if (j == idx.total()) break;
        }
    }

    bool have_best = false;
    for (const auto& cand : candidates) {
        auto [prob, sol] = solve_at(cand);
        if (sol.status != LpStatus::Optimal) continue;
        if (!have_best || sol.value > res.value) {
            res.problem = std::move(prob);
            res.solution = std::move(sol);
            res.kernels = cand;
            res.value = res.solution.value;
            have_best = true;
        }
    }
    if (!have_best) {
        // even the center kernel failed; surface its status
        auto [prob, sol] = solve_at(p_hat);
        res.problem = std::move(prob);
        res.solution = std::move(sol);
        res.kernels = p_hat;
        res.value = res.solution.value;
    }

    // dual-guided ascent over the kernel rows
    if (have_best && !res.exhaustive) {
        for (int round = 0; round < opts.max_ascent_rounds; ++round) {
            std::vector<std::vector<Matrix>> next = res.kernels;
            bool changed = false;
            for (std::size_t l = 0; l < idx.total(); ++l) {
                const auto& e = idx.entry(l);
                const BanditClass& cls = inst.classes[static_cast<std::size_t>(e.class_id)];
                std::vector<double> grad(static_cast<std::size_t>(cls.state_count), 0.0);
                for (int t = 0; t + 1 <= horizon; ++t) {
                    const double xv = res.solution.x[res.problem.var(l, t)];
                    if (xv == 0.0) continue;
                    for (int s2 = 0; s2 < cls.state_count; ++s2)
                        grad[static_cast<std::size_t>(s2)] -=
                            res.solution.duals[res.problem.flow_row(inst, t, e.class_id, s2)] * xv;
                }
                const std::vector<double> p = box_simplex_argmax(boxes[l], grad);
                Matrix& mat =
                    next[static_cast<std::size_t>(e.class_id)][static_cast<std::size_t>(e.action)];
                for (std::size_t s2 = 0; s2 < mat.cols(); ++s2) {
                    if (std::fabs(mat(static_cast<std::size_t>(e.state), s2) - p[s2]) > 1e-12)
                        changed = true;
                    mat(static_cast<std::size_t>(e.state), s2) = p[s2];
                }
            }
            if (!changed) break;
            auto [prob, sol] = solve_at(next);
            if (sol.status != LpStatus::Optimal || sol.value <= res.value + 1e-10) break;
            res.problem = std::move(prob);
            res.solution = std::move(sol);
            res.kernels = std::move(next);
            res.value = res.solution.value;
        }
    }

    // interval-flow relaxation: a valid upper bound on the joint supremum
    {
        LpProblem prob =
            build_lp_with_model(inst, idx, p_hat, res.rewards, x0, nullptr, horizon);
        LinearProgram relaxed = prob.lp;
        // replace the flow equalities with the two-sided interval rows
        std::vector<LinearProgram::Row> rows(relaxed.rows.begin() +
                                                 static_cast<std::ptrdiff_t>(prob.flow_rows),
                                             relaxed.rows.end());
        relaxed.rows.clear();
        for (int t = 0; t + 1 <= horizon; ++t)
            for (int i = 0; i < inst.class_count(); ++i) {
                const BanditClass& cls = inst.classes[static_cast<std::size_t>(i)];
                for (int s2 = 0; s2 < cls.state_count; ++s2) {
                    LinearProgram::Row lo_row, hi_row;
                    lo_row.kind = hi_row.kind = LinearProgram::RowKind::Le;
                    lo_row.coeffs.assign(relaxed.num_vars, 0.0);
                    hi_row.coeffs.assign(relaxed.num_vars, 0.0);
                    // sum_l lo * x_{l,t} <= marginal(t+1) <= sum_l hi * x_{l,t}
                    for (std::size_t l = 0; l < idx.total(); ++l) {
                        if (idx.entry(l).class_id != i) continue;
                        lo_row.coeffs[prob.var(l, t)] = boxes[l].lo[static_cast<std::size_t>(s2)];
                        hi_row.coeffs[prob.var(l, t)] = -boxes[l].hi[static_cast<std::size_t>(s2)];
                    }
                    for (int a = 0; a < cls.action_count; ++a) {
                        lo_row.coeffs[prob.var(idx.label(i, s2, a), t + 1)] -= 1.0;
                        hi_row.coeffs[prob.var(idx.label(i, s2, a), t + 1)] += 1.0;
                    }
                    relaxed.rows.push_back(std::move(lo_row));
                    relaxed.rows.push_back(std::move(hi_row));
                }
            }
        for (auto& r : rows) relaxed.rows.push_back(std::move(r));
        const LpOutcome out = solve_linear_program(relaxed, opts.solve);
        res.upper_bound = out.status == LpStatus::Optimal
                              ? out.value
                              : std::numeric_limits<double>::infinity();
    }
    return res;
}

// ---------------------------------------------------------------------------
// ALP rounding and repair
// ---------------------------------------------------------------------------

namespace {

double violation(const ConstraintSet& cs, const std::vector<double>& residuals) {
    double v = 0.0;
    for (std::size_t l = 0; l < cs.items.size(); ++l)
        v += cs.items[l].mode == ConstraintMode::Equality ? std::fabs(residuals[l])
                                                          : std::max(0.0, residuals[l]);
    return v;
}

} // namespace

std::vector<int> alp_actions(const WcgInstance& inst, const SaIndex& idx,
                             const std::vector<double>& alpha_row, const std::vector<int>& states,
                             std::uint64_t seed, const AlpOptions& opts) {
    const ArmLayout layout = ArmLayout::of(inst);
    std::vector<int> actions(states.size(), 0);

    // largest-remainder rounding per (class, state) group
    for (int i = 0; i < inst.class_count(); ++i) {
        const BanditClass& cls = inst.classes[static_cast<std::size_t>(i)];
        for (int s = 0; s < cls.state_count; ++s) {
            std::vector<std::size_t> members;
            const int first = layout.first_arm[static_cast<std::size_t>(i)];
            for (int n = 0; n < inst.arm_count(i); ++n)
                if (states[static_cast<std::size_t>(first + n)] == s)
                    members.push_back(static_cast<std::size_t>(first + n));
            if (members.empty()) continue;
            const double group = static_cast<double>(members.size());
            double row_sum = 0.0;
            for (int a = 0; a < cls.action_count; ++a)
                row_sum += alpha_row[idx.label(i, s, a)];
            if (row_sum <= 0.0) row_sum = 1.0;
            std::vector<std::int64_t> take(static_cast<std::size_t>(cls.action_count), 0);
            std::vector<std::pair<double, int>> rem;
            std::int64_t assigned = 0;
            for (int a = 0; a < cls.action_count; ++a) {
                const double quota = group * alpha_row[idx.label(i, s, a)] / row_sum;
                take[static_cast<std::size_t>(a)] = static_cast<std::int64_t>(std::floor(quota + 1e-12));
                assigned += take[static_cast<std::size_t>(a)];
                rem.emplace_back(quota - std::floor(quota + 1e-12), a);
            }
            std::stable_sort(rem.begin(), rem.end(), [](const auto& x, const auto& y) {
                if (x.first != y.first) return x.first > y.first;
                return x.second < y.second;
            });
            for (std::size_t k = 0; assigned < static_cast<std::int64_t>(members.size()); ++k) {
                ++take[static_cast<std::size_t>(rem[k % rem.size()].second)];
                ++assigned;
            }
            std::size_t cursor = 0;
            for (int a = 0; a < cls.action_count; ++a)
                for (std::int64_t c = 0; c < take[static_cast<std::size_t>(a)]; ++c)
                    actions[members[cursor++]] = a;
        }
    }

    // greedy repair toward the declared constraints
    std::vector<double> residuals = eval_constraints(inst, states, actions);
    double cur = violation(inst.constraints, residuals);
    if (cur <= opts.tol) return actions;

    Rng tie_rng(derive_seed(seed, 0x9E2ULL));
    int max_passes = opts.max_repair_passes > 0
                         ? opts.max_repair_passes
                         : 16 + 4 * inst.total_arms() * 4;
    while (max_passes-- > 0) {
        double best = cur;
        std::vector<std::pair<std::size_t, int>> best_moves;
        for (std::size_t pos = 0; pos < actions.size(); ++pos) {
            const int i = layout.class_of[pos];
            const BanditClass& cls = inst.classes[static_cast<std::size_t>(i)];
            const int s = states[pos];
            const int cur_a = actions[pos];
            for (int a = 0; a < cls.action_count; ++a) {
                if (a == cur_a) continue;
                std::vector<double> trial = residuals;
                for (std::size_t l = 0; l < trial.size(); ++l) {
                    const Matrix& f = inst.constraints.items[l].coeffs[static_cast<std::size_t>(i)];
                    trial[l] += f(static_cast<std::size_t>(s), static_cast<std::size_t>(a)) -
                                f(static_cast<std::size_t>(s), static_cast<std::size_t>(cur_a));
                }
                const double v = violation(inst.constraints, trial);
                if (v < best - 1e-15) {
                    best = v;
                    best_moves.assign(1, {pos, a});
                } else if (!best_moves.empty() && v == best) {
                    best_moves.emplace_back(pos, a);
                }
            }
        }
        if (best_moves.empty())
            throw SolverError("alp_actions: irreparable infeasibility (no improving swap)");
        const auto [pos, a] = best_moves[tie_rng.uniform_below(best_moves.size())];
        const int i = layout.class_of[pos];
        for (std::size_t l = 0; l < residuals.size(); ++l) {
            const Matrix& f = inst.constraints.items[l].coeffs[static_cast<std::size_t>(i)];
            residuals[l] += f(static_cast<std::size_t>(states[pos]), static_cast<std::size_t>(a)) -
                            f(static_cast<std::size_t>(states[pos]),
                              static_cast<std::size_t>(actions[pos]));
        }
        actions[pos] = a;
        cur = best;
        if (cur <= opts.tol) return actions;
    }
    throw SolverError("alp_actions: irreparable infeasibility (repair pass limit)");
}

Trajectory alp_rollout(const WcgInstance& inst, const SaIndex& idx, SystemState& state,
                       const RandomizedPolicy& alpha, int t_offset, int steps, std::uint64_t seed,
                       const EpisodeOptions& eopts) {
    int k = 0;
    auto policy = [&](int, const SystemState& st) {
        const std::size_t row =
            std::min(static_cast<std::size_t>(t_offset + k), alpha.alpha.size() - 1);
        ++k;
        return alp_actions(inst, idx, alpha.alpha[row], st.states(),
                           derive_seed(seed, 0xA1FULL, static_cast<std::uint64_t>(k)));
    };
    return run_episode(inst, idx, state, policy, steps, eopts);
}

// ---------------------------------------------------------------------------
// OALP
// ---------------------------------------------------------------------------

std::vector<int> random_feasible_actions(const WcgInstance& inst, const std::vector<int>& states,
                                         Rng& rng) {
    const ArmLayout layout = ArmLayout::of(inst);
    std::vector<int> actions(states.size(), 0);
    if (!inst.constraints.budget || inst.constraints.items.empty()) {
        std::size_t pos = 0;
        for (int i = 0; i < inst.class_count(); ++i)
            for (int n = 0; n < inst.arm_count(i); ++n, ++pos)
                actions[pos] = static_cast<int>(rng.uniform_below(
                    static_cast<std::size_t>(inst.classes[static_cast<std::size_t>(i)].action_count)));
        return actions;
    }
    const Constraint& coupled = inst.constraints.items[0];
    double total = 0.0;
    for (std::size_t pos = 0; pos < states.size(); ++pos)
        total += coupled.coeffs[static_cast<std::size_t>(layout.class_of[pos])](
            static_cast<std::size_t>(states[pos]), 0);
    std::vector<std::pair<std::size_t, int>> pool;
    for (std::size_t pos = 0; pos < states.size(); ++pos) {
        const int i = layout.class_of[pos];
        for (int a = 1; a < inst.classes[static_cast<std::size_t>(i)].action_count; ++a)
            pool.emplace_back(pos, a);
    }
    while (!pool.empty()) {
        const std::size_t pick = rng.uniform_below(pool.size());
        const auto [pos, a] = pool[pick];
        const int i = layout.class_of[pos];
        const Matrix& f = coupled.coeffs[static_cast<std::size_t>(i)];
        const int cur = actions[pos];
        if (a > cur) {
            const double delta =
                f(static_cast<std::size_t>(states[pos]), static_cast<std::size_t>(a)) -
                f(static_cast<std::size_t>(states[pos]), static_cast<std::size_t>(cur));
            if (total + delta > 1e-9) break; // first infeasible draw stops the scan
            actions[pos] = a;
            total += delta;
        }
        pool[pick] = pool.back();
        pool.pop_back();
    }
    return actions;
}

OalpReport oalp_run(const WcgInstance& inst, const SaIndex& idx, const ExplorePolicy& explore,
                    const OalpOptions& opts, std::uint64_t seed) {
    OalpReport report;
    SystemState state(inst, derive_seed(seed, 0x515ULL));
    state.reset(opts.initial_states.empty() ? std::vector<int>{0} : opts.initial_states);
    Rng explore_rng(derive_seed(seed, 0xE7ULL));

    EstimatedModel est = make_estimated_model(inst, idx, 1);
    std::vector<double> z_star;
    long t = 0;
    while (!est.frozen()) {
        if (t >= opts.max_explore)
            throw SolverError("oalp_run: coverage not reached within max_explore steps");
        const std::vector<int> before = state.states();
        const std::vector<int> actions = explore ? explore(static_cast<int>(t), state, explore_rng)
                                                 : random_feasible_actions(inst, before, explore_rng);
        const std::vector<double> rewards = state.step(actions);
        const TransitionCounts counts =
            collect_counts(inst, idx, before, actions, state.states(), rewards);
        std::vector<double> live_means(idx.total(), 0.0);
        for (std::size_t l = 0; l < idx.total(); ++l)
            if (counts.cells[l].visits > 0)
                live_means[l] = counts.cells[l].live_reward_sum /
                                static_cast<double>(counts.cells[l].visits);
        update_estimates(est, inst, idx, counts, {live_means}, t);
        if (est.frozen())
            z_star = occupancy_from_state(inst, idx, before, actions).fractions();
        ++t;
    }
    report.t_star = *est.stop_time;
    for (std::size_t l = 0; l < idx.total(); ++l) {
        const auto& e = idx.entry(l);
        const BanditClass& cls = inst.classes[static_cast<std::size_t>(e.class_id)];
        for (int s2 = 0; s2 < cls.state_count; ++s2)
            report.kernel_error = std::max(
                report.kernel_error,
                std::fabs(est.p_hat[static_cast<std::size_t>(e.class_id)][static_cast<std::size_t>(
                              e.action)](static_cast<std::size_t>(e.state),
                                         static_cast<std::size_t>(s2)) -
                          cls.kernel(e.state, e.action, s2)));
    }

    const ConversionMaps maps = conversion_maps(inst, idx);
    report.x0.resize(idx.total());
    for (std::size_t l = 0; l < idx.total(); ++l) report.x0[l] = maps.x_from_z[l] * z_star[l];

    const std::vector<std::vector<Matrix>> kernels =
        opts.inject_true_model ? true_kernels(inst) : est.p_hat;
    const std::vector<Matrix> rewards =
        opts.inject_true_model ? true_rewards(inst) : est.r_hat[0];

    LpProblem prob;
    LpSolution sol;
    if (opts.mode == OalpOptions::LpMode::PlainTrue) {
        prob = build_lp(inst, idx, report.x0, opts.horizon);
        sol = solve_lp(prob, opts.eps_opts.solve);
    } else {
        report.eps = solve_eps_lp(inst, idx, kernels, rewards, est.row_estimated, opts.eps,
                                  report.x0, opts.horizon, opts.eps_opts);
        prob = report.eps.problem;
        sol = report.eps.solution;
    }
    if (sol.status != LpStatus::Optimal)
        throw SolverError("oalp_run: phase-2 linear program not optimal");
    report.lp_value = sol.value;
    report.lp_tail_value = sol.tail_value(prob);

    const RandomizedPolicy alpha = policy_from_x(prob, sol, inst, idx);
    report.phase2 = alp_rollout(inst, idx, state, alpha, 1, opts.horizon,
                                derive_seed(seed, 0xA19ULL));
    report.realized = report.phase2.normalized_reward;
    report.gap = report.lp_tail_value != 0.0
                     ? (report.lp_tail_value - report.realized) / std::fabs(report.lp_tail_value)
                     : 0.0;
    return report;
}

} // namespace wcg
