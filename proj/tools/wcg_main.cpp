#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "wcg/harness.hpp"
#include "wcg/indices.hpp"
#include "wcg/io.hpp"
#include "wcg/lp.hpp"
#include "wcg/qlearn.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitSolver = 3;

void ensure_dir(const std::string& dir) {
    if (!dir.empty()) std::filesystem::create_directories(dir);
}

int cmd_validate(const std::string& path) {
    const wcg::WcgInstance inst = wcg::load_instance(path);
    const wcg::ValidationReport rep = wcg::validate_instance(inst);
    if (rep.ok()) {
        std::cout << "ok: " << path << " (" << inst.class_count() << " classes, "
                  << inst.total_arms() << " arms)\n";
        return kExitOk;
    }
    std::cout << rep.violations.size() << " violation(s):\n";
    for (const auto& v : rep.violations) std::cout << "  " << v << "\n";
    return kExitValidation;
}

int cmd_indices(const std::string& path, const std::string& out, std::uint64_t seed,
                bool cross_check) {
    const wcg::WcgInstance inst = wcg::load_instance(path);
    const wcg::ValidationReport rep = wcg::validate_instance(inst);
    if (!rep.ok()) {
        std::cout << "instance invalid: " << rep.violations.front() << "\n";
        return kExitValidation;
    }
    wcg::DsOptions opts;
    opts.tie_seed = seed;
    const auto tables = wcg::ds_adaptive_greedy(inst, opts);
    nlohmann::json doc = wcg::index_tables_to_json(tables);
    if (cross_check) {
        for (std::size_t i = 0; i < tables.size(); ++i) {
            const auto& cls = inst.classes[i];
            if (cls.action_count != 2) continue;
            nlohmann::json agree = nlohmann::json::array();
            for (int s = 0; s < cls.state_count; ++s) {
                const auto w = wcg::whittle_bisection(
                    cls, s, inst.constraints.budget->label_costs[i]);
                agree.push_back(w ? nlohmann::json(*w) : nlohmann::json());
            }
            doc[i]["whittle"] = std::move(agree);
        }
    }
    const std::string text = doc.dump(2) + "\n";
    if (out.empty())
        std::cout << text;
    else
        wcg::write_text_file(out, text);
    return kExitOk;
}

int cmd_lp(const std::string& path, int horizon, double eps, const std::string& out,
           const std::string& export_path, bool rational) {
    const wcg::WcgInstance inst = wcg::load_instance(path);
    const wcg::ValidationReport rep = wcg::validate_instance(inst);
    if (!rep.ok()) {
        std::cout << "instance invalid: " << rep.violations.front() << "\n";
        return kExitValidation;
    }
    const wcg::SaIndex idx(inst);
    const int T = horizon >= 0 ? horizon : inst.horizon.value_or(10);
    std::vector<std::vector<double>> marginals;
    for (const auto& cls : inst.classes) {
        std::vector<double> m(static_cast<std::size_t>(cls.state_count), 0.0);
        m[static_cast<std::size_t>(cls.ergodic_state)] = 1.0;
        marginals.push_back(std::move(m));
    }
    wcg::LpSolveOptions sopts;
    sopts.exact_rational = rational;

    wcg::LpProblem prob;
    wcg::LpSolution sol;
    if (eps > 0.0) {
        // perturbation boxes around the true model
        std::vector<std::vector<wcg::Matrix>> kernels;
        std::vector<wcg::Matrix> rewards;
        for (const auto& cls : inst.classes) {
            kernels.push_back(cls.kernels);
            rewards.push_back(cls.mean_rewards);
        }
        // the eps-LP needs a fixed x0: split the start state mass uniformly
        std::vector<double> x0(idx.total(), 0.0);
        for (std::size_t l = 0; l < idx.total(); ++l) {
            const auto& e = idx.entry(l);
            const auto& cls = inst.classes[static_cast<std::size_t>(e.class_id)];
            if (e.state == cls.ergodic_state)
                x0[l] = 1.0 / static_cast<double>(cls.action_count);
        }
        wcg::EpsLpOptions eopts;
        eopts.solve = sopts;
        const wcg::EpsLpResult res = wcg::solve_eps_lp(
            inst, idx, kernels, rewards, std::vector<char>(idx.total(), 1), eps, x0, T, eopts);
        prob = res.problem;
        sol = res.solution;
        std::cout << "eps-lp value " << res.value << " (upper bound " << res.upper_bound
                  << ", solves " << res.lp_solves << ")\n";
    } else {
        prob = wcg::build_lp_from_marginals(inst, idx, marginals, T);
        sol = wcg::solve_lp(prob, sopts);
    }
    if (!export_path.empty()) wcg::write_text_file(export_path, wcg::export_lp_text(prob));
    const nlohmann::json doc = wcg::lp_solution_to_json(prob, sol);
    if (out.empty())
        std::cout << doc.dump(2) << "\n";
    else
        wcg::write_text_file(out, doc.dump(2) + "\n");
    return sol.status == wcg::LpStatus::Optimal ? kExitOk : kExitSolver;
}

int cmd_run(const std::string& path, std::uint64_t seed, const std::string& out_dir, int threads,
            bool full_sweep) {
    wcg::Scenario sc = wcg::load_scenario(path);
    if (seed != 0) sc.sweep.seed_base = seed;
    if (!full_sweep) {
        sc.sweep.h_grid.resize(1);
        sc.sweep.seeds = 1;
    }
    wcg::RunOptions opts;
    opts.threads = threads;
    const wcg::MetricFrame frame = wcg::run_scenario(sc, opts);
    ensure_dir(out_dir);
    const std::string base = out_dir.empty() ? "." : out_dir;
    wcg::write_text_file(base + "/metrics.csv", wcg::metrics_csv(frame));
    wcg::write_text_file(base + "/aggregates.json", wcg::aggregates_json(frame).dump(2) + "\n");
    std::cout << "wrote " << frame.records.size() << " records, " << frame.aggregates.size()
              << " aggregates to " << base << "\n";
    for (const auto& agg : frame.aggregates)
        std::cout << "  h=" << agg.h << " " << agg.metric << ": mean " << agg.mean << " median "
                  << agg.median << " (n=" << agg.count << ")\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"weakly coupled gang simulator and policy toolkit"};
    app.require_subcommand(1);

    std::string file, out, out_dir, export_path;
    std::uint64_t seed = 0;
    int threads = 1, horizon = -1;
    double eps = 0.0;
    bool cross_check = false, rational = false;

    auto* validate = app.add_subcommand("validate", "validate an instance file");
    validate->add_option("file", file)->required();

    auto* indices = app.add_subcommand("indices", "compute the offline downshift index tables");
    indices->add_option("file", file)->required();
    indices->add_option("--out", out);
    indices->add_option("--seed", seed);
    indices->add_flag("--whittle", cross_check, "attach the bisection cross-check");

    auto* lp = app.add_subcommand("lp", "build and solve the occupancy linear program");
    lp->add_option("file", file)->required();
    lp->add_option("--eps", eps, "perturbation box radius (0 = plain LP)");
    lp->add_option("--horizon", horizon);
    lp->add_option("--out", out);
    lp->add_option("--export-lp", export_path, "write the human-readable LP text");
    lp->add_flag("--rational", rational, "solve in exact rational arithmetic");

    auto* run = app.add_subcommand("run", "run the first cell of a scenario");
    run->add_option("scenario", file)->required();
    run->add_option("--seed", seed);
    run->add_option("--out-dir", out_dir);
    run->add_option("--threads", threads);

    auto* sweep = app.add_subcommand("sweep", "run the full scenario sweep");
    sweep->add_option("scenario", file)->required();
    sweep->add_option("--seed", seed);
    sweep->add_option("--out-dir", out_dir);
    sweep->add_option("--threads", threads);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(validate)) return cmd_validate(file);
        if (app.got_subcommand(indices)) return cmd_indices(file, out, seed, cross_check);
        if (app.got_subcommand(lp)) return cmd_lp(file, horizon, eps, out, export_path, rational);
        if (app.got_subcommand(run)) return cmd_run(file, seed, out_dir, threads, false);
        if (app.got_subcommand(sweep)) return cmd_run(file, seed, out_dir, threads, true);
    } catch (const wcg::SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return kExitSolver;
    } catch (const wcg::ModelError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitOk;
}
