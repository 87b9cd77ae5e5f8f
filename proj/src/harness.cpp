#include "wcg/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "wcg/engine.hpp"
#include "wcg/indices.hpp"
#include "wcg/lp.hpp"
#include "wcg/ompi.hpp"
#include "wcg/qlearn.hpp"

namespace wcg {

using nlohmann::json;

Scenario scenario_from_json(const json& doc, const std::string& base_dir) {
    Scenario sc;
    sc.name = doc.value("name", "scenario");
    if (doc.at("instance").is_string()) {
        const std::filesystem::path p =
            std::filesystem::path(base_dir) / doc.at("instance").get<std::string>();
        sc.instance = load_instance(p.string());
    } else {
        sc.instance = instance_from_json(doc.at("instance"));
    }
    const ValidationReport rep = validate_instance(sc.instance);
    if (!rep.ok()) {
        std::ostringstream os;
        os << "scenario instance invalid:";
        for (const auto& v : rep.violations) os << "\n  " << v;
        throw ModelError(os.str());
    }
    sc.policy = doc.at("policy");
    if (doc.contains("sweep")) {
        const json& sw = doc.at("sweep");
        if (sw.contains("h")) sc.sweep.h_grid = sw.at("h").get<std::vector<int>>();
        sc.sweep.horizon = sw.value("horizon", 10);
        sc.sweep.seeds = sw.value("seeds", 1);
        sc.sweep.seed_base = sw.value("seed_base", 1);
    }
    if (sc.sweep.h_grid.empty()) throw ModelError("scenario sweep has an empty h grid");
    if (sc.sweep.seeds <= 0) throw ModelError("scenario sweep needs at least one seed");
    if (doc.contains("metrics")) sc.metrics = doc.at("metrics").get<std::vector<std::string>>();
    sc.epsilon = doc.value("epsilon", 0.05);
    sc.initial_state = doc.value("initial_state", 0);
    sc.hash = fnv1a(doc.dump());
    return sc;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open scenario file: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ModelError(std::string("scenario parse error: ") + e.what());
    }
    return scenario_from_json(doc, std::filesystem::path(path).parent_path().string());
}

std::vector<double> MetricFrame::values(int h, const std::string& metric) const {
    std::vector<double> out;
    for (const auto& r : records)
        if (r.h == h && r.metric == metric) out.push_back(r.value);
    return out;
}

const MetricAggregate* MetricFrame::aggregate(int h, const std::string& metric) const {
    for (const auto& a : aggregates)
        if (a.h == h && a.metric == metric) return &a;
    return nullptr;
}

namespace {

double quantile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double w = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - w) + v[hi] * w;
}

// uniform-random per-arm distribution rows (the "uniform" randomized policy)
RandomizedPolicy uniform_policy(const WcgInstance& inst, const SaIndex& idx) {
    RandomizedPolicy pol;
    pol.alpha.emplace_back(idx.total(), 0.0);
    for (std::size_t l = 0; l < idx.total(); ++l)
        pol.alpha[0][l] =
            1.0 / static_cast<double>(
                      inst.classes[static_cast<std::size_t>(idx.entry(l).class_id)].action_count);
    return pol;
}

RandomizedPolicy pointmass_policy(const WcgInstance& inst, const SaIndex& idx,
                                  const LocalPolicy& local) {
    RandomizedPolicy pol;
    pol.alpha.emplace_back(idx.total(), 0.0);
    for (int i = 0; i < inst.class_count(); ++i)
        for (int s = 0; s < inst.classes[static_cast<std::size_t>(i)].state_count; ++s)
            pol.alpha[0][idx.label(i, s, local.action(i, s))] = 1.0;
    return pol;
}

std::vector<double> initial_z(const WcgInstance& inst, const SaIndex& idx, int initial_state,
                              const std::vector<double>& alpha0) {
    // class mass N_i / sum N = N_i^0 / sum N^0, all of it at the start state
    std::vector<double> z(idx.total(), 0.0);
    const double total = static_cast<double>(inst.total_base_count());
    for (std::size_t l = 0; l < idx.total(); ++l) {
        const auto& e = idx.entry(l);
        if (e.state != initial_state) continue;
        z[l] = static_cast<double>(inst.base_counts[static_cast<std::size_t>(e.class_id)]) / total *
               alpha0[l];
    }
    return z;
}

struct CellResult {
    std::vector<MetricRecord> records;
};

// shared per-scenario precomputation
struct ScenarioContext {
    const Scenario* sc;
    std::string kind;
    std::vector<MpIndexTable> ds_tables; // mp-offline, ompi agreement
    std::vector<std::vector<double>> whittle; // per class per state
    RandomizedPolicy fixed_alpha;        // randomized / local / alp
    LocalPolicy local;
    LpProblem alp_problem;               // alp only
    LpSolution alp_solution;
    RandomizedPolicy alp_alpha;
    double alp_bound = 0.0;
};

void deviation_metrics(const WcgInstance& inst, const SaIndex& idx, const Trajectory& traj,
                       const std::vector<std::vector<double>>& zref, CellResult& cell,
                       MetricRecord proto) {
    double dev_inf = 0.0, dev_l2 = 0.0;
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
        dev_inf = std::max(dev_inf, max_abs_diff(traj.steps[t].occupancy, zref[t]));
        dev_l2 = std::max(dev_l2, l2_diff(traj.steps[t].occupancy, zref[t]));
    }
    (void)inst;
    (void)idx;
    proto.metric = "deviation_linf";
    proto.value = dev_inf;
    cell.records.push_back(proto);
    proto.metric = "deviation_l2";
    proto.value = dev_l2;
    cell.records.push_back(proto);
}

void reward_metric(const Trajectory& traj, CellResult& cell, MetricRecord proto) {
    proto.metric = "reward";
    proto.value = traj.normalized_reward;
    cell.records.push_back(proto);
}

void feasibility_metric(const WcgInstance& inst, const Trajectory& traj, CellResult& cell,
                        MetricRecord proto) {
    bool ok = true;
    for (const auto& step : traj.steps)
        ok = ok && constraints_satisfied(inst.constraints, step.residuals);
    proto.metric = "feasible";
    proto.value = ok ? 1.0 : 0.0;
    cell.records.push_back(proto);
}

bool ranking_matches(const WcgInstance& inst, const std::vector<MpIndexTable>& ds,
                     const std::vector<std::vector<double>>& nu_hat) {
    for (int i = 0; i < inst.class_count(); ++i) {
        const BanditClass& cls = inst.classes[static_cast<std::size_t>(i)];
        std::vector<std::pair<int, int>> pairs; // (s, a>=1)
        for (int s = 0; s < cls.state_count; ++s)
            for (int a = 1; a < cls.action_count; ++a) pairs.emplace_back(s, a);
        auto order_by = [&pairs](auto nu_of) {
            std::vector<std::pair<int, int>> sorted = pairs;
            std::stable_sort(sorted.begin(), sorted.end(),
                             [&nu_of](const auto& x, const auto& y) {
                                 return nu_of(x.first, x.second) > nu_of(y.first, y.second);
                             });
            return sorted;
        };
        const auto offline = order_by([&](int s, int a) {
            return ds[static_cast<std::size_t>(i)].nu(s, a);
        });
        const auto online = order_by([&](int s, int a) {
            return nu_hat[static_cast<std::size_t>(i)][static_cast<std::size_t>(
                s * cls.action_count + a)];
        });
        if (offline != online) return false;
    }
    return true;
}

CellResult run_cell(const ScenarioContext& ctx, int h, int seed_index) {
    const Scenario& sc = *ctx.sc;
    const WcgInstance inst = sc.instance.with_scale(h);
    const SaIndex idx(inst);
    const std::uint64_t seed =
        derive_seed(sc.sweep.seed_base, static_cast<std::uint64_t>(h),
                    static_cast<std::uint64_t>(seed_index));
    CellResult cell;
    MetricRecord proto;
    proto.scenario = sc.name;
    proto.scenario_hash = sc.hash;
    proto.h = h;
    proto.seed = seed;
    const int T = sc.sweep.horizon;

    if (ctx.kind == "randomized" || ctx.kind == "local") {
        SystemState sys(inst, seed);
        sys.reset({sc.initial_state});
        Rng policy_rng(derive_seed(seed, 0xF01ULL));
        const RandomizedPolicy& alpha = ctx.fixed_alpha;
        auto policy = [&](int t, const SystemState& st) {
            const auto& row =
                alpha.alpha[std::min(static_cast<std::size_t>(t), alpha.alpha.size() - 1)];
            return sample_actions(inst, idx, row, st.states(), policy_rng);
        };
        const Trajectory traj = run_episode(inst, idx, sys, policy, T + 1);
        const std::vector<double> z0 =
            initial_z(inst, idx, sc.initial_state, ctx.fixed_alpha.alpha[0]);
        const auto zref = expected_occupancy(inst, idx, alpha, z0, T);
        deviation_metrics(inst, idx, traj, zref, cell, proto);
        reward_metric(traj, cell, proto);
        feasibility_metric(inst, traj, cell, proto);
    } else if (ctx.kind == "mp-offline" || ctx.kind == "whittle") {
        SystemState sys(inst, seed);
        sys.reset({sc.initial_state});
        int step = 0;
        auto policy = [&](int, const SystemState& st) {
            const std::uint64_t tie = derive_seed(seed, 0xF02ULL, static_cast<std::uint64_t>(step++));
            if (ctx.kind == "whittle")
                return mp_assemble_actions(
                    inst,
                    [&ctx](int i, int s, int) {
                        return ctx.whittle[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)];
                    },
                    st.states(), tie);
            return mp_assemble_actions(inst, ctx.ds_tables, st.states(), tie);
        };
        const Trajectory traj = run_episode(inst, idx, sys, policy, T + 1);
        reward_metric(traj, cell, proto);
        feasibility_metric(inst, traj, cell, proto);
    } else if (ctx.kind == "ompi") {
        OmpiConfig cfg;
        cfg.precision = sc.policy.value("precision", 1e-3);
        cfg.stimulate = sc.policy.value("stimulate", true);
        cfg.explore_floor = sc.policy.value("explore_floor", 0.05);
        cfg.explore_decay_steps = sc.policy.value("explore_decay_steps", 1000L);
        OmpiRunOptions ropts;
        ropts.max_steps = sc.policy.value("max_steps", 20000);
        ropts.extra_steps = sc.policy.value("extra_steps", 0);
        ropts.initial_states = {sc.initial_state};
        const OmpiRunResult run = ompi_run(inst, idx, cfg, ropts, seed);
        proto.metric = "stop_t";
        proto.value = run.stop_step ? static_cast<double>(*run.stop_step) : -1.0;
        cell.records.push_back(proto);
        proto.metric = "ranking_agreement";
        proto.value = ranking_matches(inst, ctx.ds_tables, run.nu_hat) ? 1.0 : 0.0;
        cell.records.push_back(proto);
        reward_metric(run.trajectory, cell, proto);
    } else if (ctx.kind == "alp") {
        SystemState sys(inst, seed);
        sys.reset({sc.initial_state});
        const Trajectory traj = alp_rollout(inst, idx, sys, ctx.alp_alpha, 0, T + 1, seed);
        reward_metric(traj, cell, proto);
        feasibility_metric(inst, traj, cell, proto);
        proto.metric = "lp_gap";
        proto.value = ctx.alp_bound != 0.0
                          ? (ctx.alp_bound - traj.normalized_reward) / std::fabs(ctx.alp_bound)
                          : 0.0;
        cell.records.push_back(proto);
    } else if (ctx.kind == "oalp") {
        OalpOptions opts;
        opts.eps = sc.policy.value("eps", 0.01);
        opts.horizon = T;
        opts.max_explore = sc.policy.value("max_explore", 10000);
        opts.initial_states = {sc.initial_state};
        const OalpReport report = oalp_run(inst, idx, {}, opts, seed);
        proto.metric = "t_star";
        proto.value = static_cast<double>(report.t_star);
        cell.records.push_back(proto);
        proto.metric = "lp_gap";
        proto.value = report.gap;
        cell.records.push_back(proto);
        proto.metric = "reward";
        proto.value = report.realized;
        cell.records.push_back(proto);
    } else {
        throw ModelError("unknown policy kind: " + ctx.kind);
    }
    return cell;
}

} // namespace

MetricFrame run_scenario(const Scenario& sc, const RunOptions& opts) {
    ScenarioContext ctx;
    ctx.sc = &sc;
    ctx.kind = sc.policy.value("kind", "randomized");
    const SaIndex base_idx(sc.instance);

    if (ctx.kind == "randomized") {
        if (sc.policy.contains("alpha")) {
            ctx.fixed_alpha.alpha =
                sc.policy.at("alpha").get<std::vector<std::vector<double>>>();
            const ValidationReport rep = validate_policy(sc.instance, ctx.fixed_alpha);
            if (!rep.ok()) throw ModelError("scenario policy invalid: " + rep.violations.front());
        } else {
            ctx.fixed_alpha = uniform_policy(sc.instance, base_idx);
        }
    } else if (ctx.kind == "local") {
        ctx.local.actions = sc.policy.at("actions").get<std::vector<std::vector<int>>>();
        ctx.fixed_alpha = pointmass_policy(sc.instance, base_idx, ctx.local);
    } else if (ctx.kind == "mp-offline" || ctx.kind == "ompi") {
        DsOptions dopts;
        dopts.tie_seed = sc.sweep.seed_base;
        ctx.ds_tables = ds_adaptive_greedy(sc.instance, dopts);
    } else if (ctx.kind == "whittle") {
        if (!sc.instance.constraints.budget)
            throw ModelError("whittle policy needs a budget constraint");
        for (int i = 0; i < sc.instance.class_count(); ++i) {
            const auto& cls = sc.instance.classes[static_cast<std::size_t>(i)];
            std::vector<double> per_state;
            for (int s = 0; s < cls.state_count; ++s) {
                const auto idx_val = whittle_bisection(
                    cls, s, sc.instance.constraints.budget->label_costs[static_cast<std::size_t>(i)]);
                if (!idx_val)
                    throw SolverError("whittle policy: state " + std::to_string(s) +
                                      " of class " + std::to_string(i) + " not indexable");
                per_state.push_back(*idx_val);
            }
            ctx.whittle.push_back(std::move(per_state));
        }
    } else if (ctx.kind == "alp") {
        std::vector<std::vector<double>> marginals;
        for (const auto& cls : sc.instance.classes) {
            std::vector<double> m(static_cast<std::size_t>(cls.state_count), 0.0);
            m[static_cast<std::size_t>(sc.initial_state)] = 1.0;
            marginals.push_back(std::move(m));
        }
        ctx.alp_problem = build_lp_from_marginals(sc.instance, base_idx, marginals, sc.sweep.horizon);
        ctx.alp_solution = solve_lp(ctx.alp_problem);
        if (ctx.alp_solution.status != LpStatus::Optimal)
            throw SolverError("alp scenario: relaxed linear program not optimal");
        ctx.alp_bound = ctx.alp_solution.value;
        ctx.alp_alpha = policy_from_x(ctx.alp_problem, ctx.alp_solution, sc.instance, base_idx);
    }

    // cells in deterministic order; threads only split the work
    struct Cell {
        int h;
        int seed_index;
    };
    std::vector<Cell> cells;
    for (int h : sc.sweep.h_grid)
        for (int s = 0; s < sc.sweep.seeds; ++s) cells.push_back({h, s});
    std::vector<CellResult> results(cells.size());
    const int threads = std::max(1, opts.threads);
    if (threads == 1) {
        for (std::size_t c = 0; c < cells.size(); ++c)
            results[c] = run_cell(ctx, cells[c].h, cells[c].seed_index);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (int w = 0; w < threads; ++w)
            pool.emplace_back([&]() {
                while (true) {
                    const std::size_t c = next.fetch_add(1);
                    if (c >= cells.size()) return;
                    results[c] = run_cell(ctx, cells[c].h, cells[c].seed_index);
                }
            });
        for (auto& th : pool) th.join();
    }

    MetricFrame frame;
    for (const auto& cell : results)
        for (const auto& rec : cell.records) {
            if (!sc.metrics.empty() &&
                std::find(sc.metrics.begin(), sc.metrics.end(), rec.metric) == sc.metrics.end())
                continue;
            frame.records.push_back(rec);
        }

    // aggregates per (h, metric), plus exceedance of the deviation metric
    std::map<std::pair<int, std::string>, std::vector<double>> buckets;
    for (const auto& rec : frame.records) buckets[{rec.h, rec.metric}].push_back(rec.value);
    for (const auto& [key, vals] : buckets) {
        MetricAggregate agg;
        agg.h = key.first;
        agg.metric = key.second;
        agg.count = vals.size();
        double sum = 0.0;
        for (double v : vals) sum += v;
        agg.mean = sum / static_cast<double>(vals.size());
        agg.median = quantile(vals, 0.5);
        agg.q25 = quantile(vals, 0.25);
        agg.q75 = quantile(vals, 0.75);
        frame.aggregates.push_back(std::move(agg));
        if (key.second == "deviation_linf") {
            MetricAggregate exc;
            exc.h = key.first;
            exc.metric = "exceedance";
            exc.count = vals.size();
            double over = 0.0;
            for (double v : vals)
                if (v > sc.epsilon) over += 1.0;
            exc.mean = over / static_cast<double>(vals.size());
            exc.median = exc.q25 = exc.q75 = exc.mean;
            frame.aggregates.push_back(std::move(exc));
        }
    }
    return frame;
}

std::string metrics_csv(const MetricFrame& frame) {
    std::ostringstream os;
    os << "scenario,scenario_hash,version,h,seed,t,metric,value\n";
    char buf[64];
    for (const auto& r : frame.records) {
        std::snprintf(buf, sizeof buf, "%.17g", r.value);
        os << r.scenario << "," << r.scenario_hash << "," << kVersionTag << "," << r.h << ","
           << r.seed << "," << r.t << "," << r.metric << "," << buf << "\n";
    }
    return os.str();
}

nlohmann::json aggregates_json(const MetricFrame& frame) {
    json doc = json::array();
    for (const auto& a : frame.aggregates) {
        json entry;
        entry["h"] = a.h;
        entry["metric"] = a.metric;
        entry["mean"] = a.mean;
        entry["median"] = a.median;
        entry["q25"] = a.q25;
        entry["q75"] = a.q75;
        entry["count"] = a.count;
        entry["version"] = kVersionTag;
        doc.push_back(std::move(entry));
    }
    return doc;
}

ConvergenceStudy run_convergence_study(const WcgInstance& inst, const RandomizedPolicy& policy,
                                       const std::vector<int>& h_grid, double eps, int horizon,
                                       int seeds, std::uint64_t seed_base, int threads) {
    Scenario sc;
    sc.name = "convergence-study";
    sc.instance = inst;
    sc.policy = json{{"kind", "randomized"}};
    if (!policy.alpha.empty()) sc.policy["alpha"] = policy.alpha;
    sc.sweep.h_grid = h_grid;
    sc.sweep.horizon = horizon;
    sc.sweep.seeds = seeds;
    sc.sweep.seed_base = seed_base;
    sc.epsilon = eps;
    sc.hash = 0;
    RunOptions opts;
    opts.threads = threads;
    const MetricFrame frame = run_scenario(sc, opts);

    ConvergenceStudy study;
    study.h_grid = h_grid;
    for (int h : h_grid) {
        const MetricAggregate* agg = frame.aggregate(h, "exceedance");
        study.exceedance.push_back(agg ? agg->mean : 0.0);
    }
    // least-squares slope of log(rate) against h over the positive rates
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    int n = 0;
    for (std::size_t k = 0; k < study.exceedance.size(); ++k) {
        if (study.exceedance[k] <= 0.0) continue;
        const double x = static_cast<double>(h_grid[k]);
        const double y = std::log(study.exceedance[k]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n >= 2 && sxx * n - sx * sx != 0.0)
        study.log_slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return study;
}

} // namespace wcg
