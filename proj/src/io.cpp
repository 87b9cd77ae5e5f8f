#include "wcg/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace wcg {

using nlohmann::json;

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

Matrix matrix_from_json(const json& rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r > 0 ? rows[0].size() : 0;
    Matrix m(r, c);
    for (std::size_t i = 0; i < r; ++i) {
        if (rows[i].size() != c) throw ModelError("matrix rows have uneven lengths");
        for (std::size_t j = 0; j < c; ++j) m(i, j) = rows[i][j].get<double>();
    }
    return m;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

RewardLaw law_from_json(const json& doc) {
    RewardLaw law;
    const std::string kind = doc.value("kind", "deterministic");
    if (kind == "deterministic") {
        law.kind = RewardLaw::Kind::Deterministic;
    } else if (kind == "uniform") {
        law.kind = RewardLaw::Kind::UniformInterval;
        law.half_width = doc.at("half_width").get<double>();
    } else if (kind == "truncated_normal") {
        law.kind = RewardLaw::Kind::TruncatedNormal;
        law.half_width = doc.at("half_width").get<double>();
        law.stddev = doc.at("stddev").get<double>();
    } else {
        throw ModelError("unknown reward law kind: " + kind);
    }
    return law;
}

json law_to_json(const RewardLaw& law) {
    switch (law.kind) {
    case RewardLaw::Kind::Deterministic:
        return json{{"kind", "deterministic"}};
    case RewardLaw::Kind::UniformInterval:
        return json{{"kind", "uniform"}, {"half_width", law.half_width}};
    case RewardLaw::Kind::TruncatedNormal:
        return json{{"kind", "truncated_normal"},
                    {"half_width", law.half_width},
                    {"stddev", law.stddev}};
    }
    return json{};
}

} // namespace

WcgInstance instance_from_json(const json& doc) {
    WcgInstance inst;
    for (const auto& cdoc : doc.at("classes")) {
        BanditClass cls;
        cls.state_count = cdoc.at("states").get<int>();
        cls.action_count = cdoc.at("actions").get<int>();
        for (const auto& k : cdoc.at("kernels")) cls.kernels.push_back(matrix_from_json(k));
        cls.mean_rewards = matrix_from_json(cdoc.at("mean_rewards"));
        if (cdoc.contains("reward_law")) cls.reward_law = law_from_json(cdoc.at("reward_law"));
        cls.ergodic_state = cdoc.value("ergodic_state", 0);
        inst.classes.push_back(std::move(cls));
    }
    inst.base_counts = doc.at("base_counts").get<std::vector<int>>();
    inst.scale = doc.value("scale", 1);
    if (doc.contains("horizon") && !doc.at("horizon").is_string())
        inst.horizon = doc.at("horizon").get<int>();
    inst.discount = doc.value("discount", 1.0);

    if (doc.contains("constraints")) {
        const json& cons = doc.at("constraints");
        if (cons.contains("budget")) {
            BudgetSpec spec;
            spec.label_costs =
                cons.at("budget").at("label_costs").get<std::vector<std::vector<double>>>();
            spec.budget = cons.at("budget").at("budget").get<double>();
            inst.constraints = make_budget_constraints(inst, std::move(spec));
        } else if (cons.contains("general")) {
            for (const auto& item : cons.at("general")) {
                Constraint c;
                const std::string mode = item.value("mode", "equality");
                c.mode = mode == "equality" ? ConstraintMode::Equality
                                            : ConstraintMode::InequalityLeq;
                for (const auto& m : item.at("coeffs")) c.coeffs.push_back(matrix_from_json(m));
                inst.constraints.items.push_back(std::move(c));
            }
        }
    }
    return inst;
}

json instance_to_json(const WcgInstance& inst) {
    json doc;
    doc["classes"] = json::array();
    for (const auto& cls : inst.classes) {
        json cdoc;
        cdoc["states"] = cls.state_count;
        cdoc["actions"] = cls.action_count;
        cdoc["kernels"] = json::array();
        for (const auto& k : cls.kernels) cdoc["kernels"].push_back(matrix_to_json(k));
        cdoc["mean_rewards"] = matrix_to_json(cls.mean_rewards);
        cdoc["reward_law"] = law_to_json(cls.reward_law);
        cdoc["ergodic_state"] = cls.ergodic_state;
        doc["classes"].push_back(std::move(cdoc));
    }
    doc["base_counts"] = inst.base_counts;
    doc["scale"] = inst.scale;
    if (inst.horizon) doc["horizon"] = *inst.horizon;
    doc["discount"] = inst.discount;
    if (inst.constraints.budget) {
        doc["constraints"]["budget"]["label_costs"] = inst.constraints.budget->label_costs;
        doc["constraints"]["budget"]["budget"] = inst.constraints.budget->budget;
    } else if (!inst.constraints.items.empty()) {
        json arr = json::array();
        for (const auto& item : inst.constraints.items) {
            json c;
            c["mode"] = item.mode == ConstraintMode::Equality ? "equality" : "inequality";
            c["coeffs"] = json::array();
            for (const auto& m : item.coeffs) c["coeffs"].push_back(matrix_to_json(m));
            arr.push_back(std::move(c));
        }
        doc["constraints"]["general"] = std::move(arr);
    }
    return doc;
}

WcgInstance load_instance(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open instance file: " + path);
    json doc;
    in >> doc;
    return instance_from_json(doc);
}

void save_instance(const WcgInstance& inst, const std::string& path) {
    write_text_file(path, instance_to_json(inst).dump(2) + "\n");
}

std::string trajectory_csv(const WcgInstance& inst, const SaIndex& idx,
                           const std::vector<std::pair<std::uint64_t, const Trajectory*>>& runs) {
    std::ostringstream os;
    os << "replication,t";
    for (std::size_t l = 0; l < idx.total(); ++l) {
        const auto& e = idx.entry(l);
        os << ",z_i" << e.class_id << "_s" << e.state << "_a" << e.action;
    }
    for (std::size_t lc = 0; lc < inst.constraints.items.size(); ++lc) os << ",residual_" << lc;
    os << ",reward\n";
    char buf[64];
    auto num = [&buf](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    for (const auto& [rep, traj] : runs)
        for (const auto& step : traj->steps) {
            os << rep << "," << step.t;
            for (double z : step.occupancy) os << "," << num(z);
            for (double r : step.residuals) os << "," << num(r);
            os << "," << num(step.reward) << "\n";
        }
    return os.str();
}

std::string nu_trace_csv(const std::vector<NuTraceRow>& rows) {
    std::ostringstream os;
    os << "t,i,s,label,nu,m\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.17g", r.nu);
        os << r.t << "," << r.class_id << "," << r.state << "," << r.label << "," << buf << ","
           << r.stage << "\n";
    }
    return os.str();
}

std::string learning_trace_csv(const std::vector<LearningTraceRow>& rows) {
    std::ostringstream os;
    os << "t,k,i,s,a,q,err\n";
    char qbuf[64], ebuf[64];
    for (const auto& r : rows) {
        std::snprintf(qbuf, sizeof qbuf, "%.17g", r.q);
        std::snprintf(ebuf, sizeof ebuf, "%.17g", r.err);
        os << r.t << "," << r.process << "," << r.class_id << "," << r.state << "," << r.action
           << "," << qbuf << "," << ebuf << "\n";
    }
    return os.str();
}

json index_tables_to_json(const std::vector<MpIndexTable>& tables) {
    json doc = json::array();
    for (const auto& table : tables) {
        json t;
        t["class"] = table.class_id;
        t["pcl"] = table.pcl;
        t["entries"] = json::array();
        for (const auto& e : table.entries) {
            json entry;
            entry["m"] = e.m;
            entry["state"] = e.state;
            entry["action"] = e.action;
            entry["label"] = e.action + 1; // 1-based gear label
            entry["nu"] = e.nu;
            entry["action_vector"] = e.action_vector;
            t["entries"].push_back(std::move(entry));
        }
        doc.push_back(std::move(t));
    }
    return doc;
}

json lp_solution_to_json(const LpProblem& prob, const LpSolution& sol) {
    json doc;
    switch (sol.status) {
    case LpStatus::Optimal:
        doc["status"] = "optimal";
        break;
    case LpStatus::Infeasible:
        doc["status"] = "infeasible";
        break;
    case LpStatus::Unbounded:
        doc["status"] = "unbounded";
        break;
    case LpStatus::IterationLimit:
        doc["status"] = "iteration_limit";
        break;
    }
    doc["value"] = sol.value;
    doc["iterations"] = sol.iterations;
    if (sol.status == LpStatus::Optimal) {
        doc["tail_value"] = sol.tail_value(prob);
        json x = json::array();
        for (int t = 0; t <= prob.horizon; ++t) {
            json row = json::array();
            for (std::size_t l = 0; l < prob.labels; ++l) row.push_back(sol.x[prob.var(l, t)]);
            x.push_back(std::move(row));
        }
        doc["x"] = std::move(x);
        doc["basis"] = sol.basis;
    }
    return doc;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ModelError("cannot write file: " + path);
    out << content;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelError("cannot read file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

} // namespace wcg
