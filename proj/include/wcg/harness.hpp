#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "wcg/io.hpp"
#include "wcg/model.hpp"

namespace wcg {

struct SweepSpec {
    std::vector<int> h_grid{1};
    int horizon = 10;
    int seeds = 1;
    std::uint64_t seed_base = 1;
};

struct Scenario {
    std::string name;
    WcgInstance instance;
    nlohmann::json policy; // {"kind": ..., ...}
    SweepSpec sweep;
    std::vector<std::string> metrics; // empty = everything the policy produces
    double epsilon = 0.05;            // deviation threshold for exceedance aggregation
    int initial_state = 0;
    std::uint64_t hash = 0;           // fingerprint of the scenario document
};

Scenario scenario_from_json(const nlohmann::json& doc, const std::string& base_dir);
Scenario load_scenario(const std::string& path);

struct MetricRecord {
    std::string scenario;
    std::uint64_t scenario_hash = 0;
    int h = 1;
    std::uint64_t seed = 0;
    long t = -1; // -1: per-replication summary value
    std::string metric;
    double value = 0.0;
};

struct MetricAggregate {
    int h = 1;
    std::string metric;
    double mean = 0.0;
    double median = 0.0;
    double q25 = 0.0;
    double q75 = 0.0;
    std::size_t count = 0;
};

struct MetricFrame {
    std::vector<MetricRecord> records;
    std::vector<MetricAggregate> aggregates;

    std::vector<double> values(int h, const std::string& metric) const;
    const MetricAggregate* aggregate(int h, const std::string& metric) const;
};

struct RunOptions {
    int threads = 1;
};

// Executes the sweep and aggregates per (h, metric). Deterministic for a
// fixed (scenario, seed_base) regardless of the thread count.
MetricFrame run_scenario(const Scenario& scenario, const RunOptions& opts = {});

// Executes one sweep cell and returns its records plus any trace exports the
// policy kind produces (trajectory.csv, nu_trace.csv, learning_trace.csv).
struct CellOutput {
    std::vector<MetricRecord> records;
    std::vector<std::pair<std::string, std::string>> exports; // (file name, content)
};
CellOutput run_single_cell(const Scenario& scenario, int h, int seed_index);

std::string metrics_csv(const MetricFrame& frame);
nlohmann::json aggregates_json(const MetricFrame& frame);

// ---------------------------------------------------------------------------
// Convergence study
// ---------------------------------------------------------------------------

struct ConvergenceStudy {
    std::vector<int> h_grid;
    std::vector<double> exceedance; // P{max_t ||Z - z||_inf > eps} per h
    double log_slope = 0.0;         // least-squares slope of log(rate) over h
};

// Estimates the per-h exceedance of the realized occupancy around its mean
// trajectory under a fixed randomized policy.
ConvergenceStudy run_convergence_study(const WcgInstance& inst, const RandomizedPolicy& policy,
                                       const std::vector<int>& h_grid, double eps, int horizon,
                                       int seeds, std::uint64_t seed_base, int threads = 1);

} // namespace wcg
