#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "wcg/engine.hpp"
#include "wcg/indices.hpp"
#include "wcg/lp.hpp"
#include "wcg/model.hpp"
#include "wcg/ompi.hpp"
#include "wcg/qlearn.hpp"

namespace wcg {

// The artifact's version tag, stamped into every metric record.
inline constexpr const char* kVersionTag = "wcg-0.1.0";

// FNV-1a over raw bytes; used to fingerprint scenario files.
std::uint64_t fnv1a(const std::string& bytes);

// ---------------------------------------------------------------------------
// Instance files
// ---------------------------------------------------------------------------

WcgInstance instance_from_json(const nlohmann::json& doc);
nlohmann::json instance_to_json(const WcgInstance& inst);

WcgInstance load_instance(const std::string& path);
void save_instance(const WcgInstance& inst, const std::string& path);

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

// (replication, t, Z_l..., residual_l..., reward)
std::string trajectory_csv(const WcgInstance& inst, const SaIndex& idx,
                           const std::vector<std::pair<std::uint64_t, const Trajectory*>>& runs);

// (t, i, s, label, nu, m)
std::string nu_trace_csv(const std::vector<NuTraceRow>& rows);

// (t, k, i, s, a, q, err)
std::string learning_trace_csv(const std::vector<LearningTraceRow>& rows);

nlohmann::json index_tables_to_json(const std::vector<MpIndexTable>& tables);

nlohmann::json lp_solution_to_json(const LpProblem& prob, const LpSolution& sol);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

} // namespace wcg
