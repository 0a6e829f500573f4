#pragma once

#include "scbm/cocluster.hpp"
#include "scbm/core.hpp"
#include "scbm/estimator.hpp"
#include "scbm/json_io.hpp"
#include "scbm/metrics.hpp"
#include "scbm/netgen.hpp"
#include "scbm/panel.hpp"
#include "scbm/select.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace scbm {

// ---------------------------------------------------------------------------
// Sankey export
// ---------------------------------------------------------------------------

inline std::vector<std::string> node_names_or_default(const std::vector<std::string>& names, std::size_t q) {
    if (names.size() == q) return names;
    std::vector<std::string> out;
    for (std::size_t i = 0; i < q; ++i) out.push_back("y" + std::to_string(i + 1));
    return out;
}

/// Flow decomposition of memberships between consecutive path positions. PVAR
/// paths also carry the closing flow from the last season back to the first.
inline json export_sankey(const CommunityPath& path) {
    const std::size_t q = path.dimension();
    const auto names = node_names_or_default(path.node_names, q);
    const auto pos_names = position_names(path.kind, path.stages);
    const auto links = position_linkage(path.kind, path.stages);

    json stages = json::array();
    for (std::size_t p = 0; p < path.positions.size(); ++p) {
        json nodes = json::array();
        for (int c = 0; c < path.position_k[p]; ++c) {
            json members = json::array();
            for (std::size_t i = 0; i < q; ++i)
                if (path.positions[p][i] == c) members.push_back(names[i]);
            nodes.push_back({{"community", c + 1}, {"size", members.size()}, {"members", members}});
        }
        stages.push_back({{"index", p + 1}, {"name", pos_names[p]}, {"linkage", links[p]}, {"nodes", nodes}});
    }

    auto flows_between = [&](std::size_t a, std::size_t b, bool cyclic) {
        std::map<std::pair<int, int>, std::vector<std::string>> groups;
        for (std::size_t i = 0; i < q; ++i) groups[{path.positions[a][i], path.positions[b][i]}].push_back(names[i]);
        json flows = json::array();
        for (const auto& [key, members] : groups) {
            flows.push_back({{"source", key.first + 1},
                             {"target", key.second + 1},
                             {"count", members.size()},
                             {"members", members}});
        }
        return json{{"source_stage", a + 1}, {"target_stage", b + 1}, {"cyclic", cyclic}, {"flows", flows}};
    };

    json transitions = json::array();
    for (std::size_t p = 0; p + 1 < path.positions.size(); ++p) transitions.push_back(flows_between(p, p + 1, false));
    if (path.kind == ChainKind::pvar_cyclic && path.positions.size() > 1)
        transitions.push_back(flows_between(path.positions.size() - 1, 0, true));

    return {{"schema", kSchemaVersion},
            {"kind", to_string(path.kind)},
            {"nodes_total", q},
            {"stages", stages},
            {"transitions", transitions}};
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

enum class ExperimentMode { simulate_pvar, simulate_vhar, fit_csv };

inline std::string to_string(ExperimentMode m) {
    switch (m) {
        case ExperimentMode::simulate_pvar: return "simulate_pvar";
        case ExperimentMode::simulate_vhar: return "simulate_vhar";
        default: return "fit_csv";
    }
}

inline ExperimentMode experiment_mode_from_string(const std::string& s) {
    if (s == "simulate_pvar") return ExperimentMode::simulate_pvar;
    if (s == "simulate_vhar") return ExperimentMode::simulate_vhar;
    if (s == "fit_csv") return ExperimentMode::fit_csv;
    throw ConfigError("unknown mode '" + s + "'");
}

enum class AlphaCvScope { pilot, replication };

struct ExperimentConfig {
    ExperimentMode mode = ExperimentMode::simulate_pvar;
    int q = 18;
    std::vector<int> lengths{2000};
    int seasons = 4;
    int lag_order = 1;
    int b_m = 3;
    int b_l = 10;
    std::string path = "path1";
    std::vector<Labels> memberships;  ///< overrides the preset when non-empty
    int type_id = 1;
    EstimatorKind estimator = EstimatorKind::lasso;
    std::vector<double> lambda_grid = default_lambda_grid();
    std::optional<double> lambda_multiplier;
    int lambda_folds = kLambdaFolds;
    std::optional<double> alpha;  ///< unset: cross-validated
    std::vector<double> alpha_grid = default_alpha_grid();
    int alpha_folds = kAlphaFolds;
    AlphaCvScope alpha_scope = AlphaCvScope::pilot;
    std::vector<RankPair> ranks;  ///< defaults to the planted path's ranks
    int replications = 1;
    std::optional<std::uint64_t> seed;
    std::optional<int> burnin;
    int threads = 1;
    std::string out_dir = ".";
    // fit_csv
    std::string csv;
    bool has_header = true;
    std::optional<std::string> date_column;
    Transform transform = Transform::none;
    int t0_phase = 0;
    double scree_threshold = kScreeThreshold;

    [[nodiscard]] ChainKind kind() const {
        return mode == ExperimentMode::simulate_vhar ? ChainKind::vhar_linear
               : mode == ExperimentMode::simulate_pvar ? ChainKind::pvar_cyclic
                                                       : fit_kind;
    }
    ChainKind fit_kind = ChainKind::pvar_cyclic;

    void validate() const {
        if (mode != ExperimentMode::fit_csv) {
            if (!seed) throw ConfigError("seed is required for simulation modes");
            if (q < 2) throw ConfigError("q must be at least 2");
            if (lengths.empty()) throw ConfigError("at least one series length is required");
            if (replications < 1) throw ConfigError("replications must be positive");
        } else if (csv.empty()) {
            throw ConfigError("fit_csv needs a csv path");
        }
        if (!ranks.empty()) validate_ranks(kind(), ranks);
        if (alpha && !(*alpha >= 0.0 && *alpha < kAlphaMax)) throw ConfigError("alpha outside [0, alpha_max)");
        if (threads < 1) throw ConfigError("threads must be positive");
    }
};

inline ModelConfig model_config(const ExperimentConfig& cfg, const std::vector<RankPair>& ranks) {
    ModelConfig m;
    m.kind = cfg.kind();
    m.seasons = cfg.seasons;
    m.lag_order = cfg.lag_order;
    m.b_m = cfg.b_m;
    m.b_l = cfg.b_l;
    m.estimator = cfg.estimator;
    m.lambda_multiplier = cfg.lambda_multiplier;
    m.lambda_grid = cfg.lambda_grid;
    m.lambda_folds = cfg.lambda_folds;
    m.ranks = ranks;
    return m;
}

inline PathDesign experiment_design(const ExperimentConfig& cfg) {
    if (!cfg.memberships.empty()) return make_path_design(cfg.kind(), cfg.memberships);
    if (cfg.kind() == ChainKind::pvar_cyclic && cfg.seasons != 4 && cfg.path.rfind("path", 0) == 0)
        throw ConfigError("path presets are defined for four seasons; give explicit memberships");
    return path_preset(cfg.kind(), cfg.path, cfg.q);
}

inline ScbmSystem experiment_system(const ExperimentConfig& cfg) {
    const PathDesign design = experiment_design(cfg);
    const std::uint64_t seed = derive_seed(*cfg.seed, {1});
    if (cfg.kind() == ChainKind::pvar_cyclic) return sample_pvar_system(cfg.q, design, cfg.type_id, seed);
    return sample_vhar_system(cfg.q, design, cfg.type_id, cfg.b_m, cfg.b_l, seed);
}

inline int default_burnin(ChainKind kind) { return kind == ChainKind::pvar_cyclic ? kPvarBurnin : kVharBurnin; }

// ---------------------------------------------------------------------------
// Monte Carlo harness
// ---------------------------------------------------------------------------

struct ReplicationResult {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    EvalSummary eval;
};

struct SetupReport {
    int length = 0;
    double lambda_multiplier = 0.0;
    double alpha = 0.0;
    std::optional<AlphaCvReport> alpha_cv;
    std::vector<ReplicationResult> replications;

    [[nodiscard]] std::vector<EvalSummary> successes() const {
        std::vector<EvalSummary> out;
        for (const auto& r : replications)
            if (r.ok) out.push_back(r.eval);
        return out;
    }
    [[nodiscard]] std::size_t failures() const {
        return static_cast<std::size_t>(
            std::count_if(replications.begin(), replications.end(), [](const auto& r) { return !r.ok; }));
    }
};

struct ExperimentReport {
    ExperimentConfig config;
    ScbmSystem system;
    std::vector<SetupReport> setups;
};

/// Runs fn(i) for i in [0, n) on a small worker pool. Results must be written
/// to per-index slots by the callee.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

/// One replication: estimate, co-cluster, score.
inline EvalSummary run_replication(const ScbmSystem& sys, const ExperimentConfig& cfg, int length, double lambda_mult,
                                   double alpha, std::uint64_t seed) {
    const auto ranks = cfg.ranks.empty() ? sys.design.ranks() : cfg.ranks;
    const TimeSeriesPanel panel = simulate(sys, length, cfg.burnin.value_or(default_burnin(sys.kind)), seed);
    ModelConfig mc = model_config(cfg, ranks);
    mc.lambda_multiplier = lambda_mult;
    const StageChain chain = fit_stage_chain(panel, mc);
    CoclusterOptions co;
    co.alpha = alpha;
    co.seed = derive_seed(seed, {4});
    const CommunityPath path = co_cluster(chain, co);
    return evaluate(chain, path, sys);
}

/// Pilot-series tuning of c_lambda and (optionally) alpha for one setup.
inline void tune_setup(const ScbmSystem& sys, const ExperimentConfig& cfg, SetupReport& setup) {
    const auto ranks = cfg.ranks.empty() ? sys.design.ranks() : cfg.ranks;
    const std::uint64_t pilot_seed = derive_seed(*cfg.seed, {2, static_cast<std::uint64_t>(setup.length)});
    const TimeSeriesPanel pilot =
        simulate(sys, setup.length, cfg.burnin.value_or(default_burnin(sys.kind)), pilot_seed);
    ModelConfig mc = model_config(cfg, ranks);
    if (cfg.estimator == EstimatorKind::lasso && !cfg.lambda_multiplier)
        mc.lambda_multiplier = select_lambda(pilot, mc).chosen;
    setup.lambda_multiplier = mc.lambda_multiplier.value_or(0.0);
    if (cfg.alpha) {
        setup.alpha = *cfg.alpha;
        return;
    }
    if (cfg.alpha_scope == AlphaCvScope::pilot) {
        const StageChain chain = fit_stage_chain(pilot, mc);
        AlphaCvOptions ao;
        ao.grid = cfg.alpha_grid;
        ao.folds = cfg.alpha_folds;
        ao.seed = derive_seed(*cfg.seed, {5, static_cast<std::uint64_t>(setup.length)});
        setup.alpha_cv = cv_alpha(chain, ao);
        setup.alpha = setup.alpha_cv->chosen;
    }
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.mode == ExperimentMode::fit_csv) throw ConfigError("run_experiment handles simulation modes only");
    ExperimentReport rep;
    rep.config = cfg;
    rep.system = experiment_system(cfg);
    for (int length : cfg.lengths) {
        SetupReport setup;
        setup.length = length;
        tune_setup(rep.system, cfg, setup);
        setup.replications.resize(static_cast<std::size_t>(cfg.replications));
        const bool per_rep_alpha = !cfg.alpha && cfg.alpha_scope == AlphaCvScope::replication;
        parallel_for(setup.replications.size(), cfg.threads, [&](std::size_t r) {
            ReplicationResult& res = setup.replications[r];
            res.index = r + 1;
            res.seed = derive_seed(*cfg.seed, {3, static_cast<std::uint64_t>(length), r});
            try {
                double alpha = setup.alpha;
                if (per_rep_alpha) {
                    const auto ranks = cfg.ranks.empty() ? rep.system.design.ranks() : cfg.ranks;
                    const TimeSeriesPanel panel = simulate(
                        rep.system, length, cfg.burnin.value_or(default_burnin(rep.system.kind)), res.seed);
                    ModelConfig mc = model_config(cfg, ranks);
                    mc.lambda_multiplier = setup.lambda_multiplier;
                    AlphaCvOptions ao;
                    ao.grid = cfg.alpha_grid;
                    ao.folds = cfg.alpha_folds;
                    ao.seed = derive_seed(res.seed, {5});
                    alpha = cv_alpha(fit_stage_chain(panel, mc), ao).chosen;
                }
                res.eval = run_replication(rep.system, cfg, length, setup.lambda_multiplier, alpha, res.seed);
                res.ok = true;
            } catch (const std::exception& e) {
                res.error = e.what();
            }
        });
        for (const auto& r : setup.replications)
            if (!r.ok) std::clog << "replication " << r.index << " (T=" << length << ") failed: " << r.error << '\n';
        rep.setups.push_back(std::move(setup));
    }
    return rep;
}

inline std::string replications_csv(const ExperimentReport& rep) {
    std::string out = "T," + eval_csv_header() + '\n';
    for (const auto& s : rep.setups) {
        for (const auto& r : s.replications) {
            out += std::to_string(s.length) + ',';
            if (r.ok) {
                out += eval_csv_row(r.index, r.seed, r.eval);
            } else {
                out += std::to_string(r.index) + ',' + std::to_string(r.seed) + ",failed,,,,,";
            }
            out += '\n';
        }
    }
    return out;
}

inline json experiment_config_to_json(const ExperimentConfig& c) {
    json j{{"mode", to_string(c.mode)},
           {"q", c.q},
           {"lengths", c.lengths},
           {"path", c.memberships.empty() ? c.path : std::string("explicit")},
           {"type", c.type_id},
           {"estimator", to_string(c.estimator)},
           {"replications", c.replications},
           {"seed", c.seed.value_or(0)},
           {"ranks", ranks_to_json(c.ranks)}};
    if (c.kind() == ChainKind::pvar_cyclic) {
        j["seasons"] = c.seasons;
        j["lag_order"] = c.lag_order;
    } else {
        j["b_m"] = c.b_m;
        j["b_l"] = c.b_l;
    }
    j["alpha"] = c.alpha ? json(*c.alpha) : json("cv");
    return j;
}

inline json summary_json(const ExperimentReport& rep) {
    json setups = json::array();
    for (const auto& s : rep.setups) {
        json j = summarize(s.successes(), s.failures());
        j["T"] = s.length;
        j["lambda_multiplier"] = s.lambda_multiplier;
        j["alpha"] = s.alpha;
        setups.push_back(j);
    }
    return {{"schema", kSchemaVersion},
            {"config", experiment_config_to_json(rep.config)},
            {"system_spectral_radius", system_spectral_radius(rep.system)},
            {"setups", setups}};
}

inline void write_text_file(const std::string& text, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << text;
}

inline void write_experiment_outputs(const ExperimentReport& rep, const std::string& dir) {
    std::filesystem::create_directories(dir);
    write_text_file(replications_csv(rep), (std::filesystem::path(dir) / "replications.csv").string());
    write_json_file(summary_json(rep), (std::filesystem::path(dir) / "summary.json").string());
    json sys = system_to_json(rep.system);
    write_json_file(sys, (std::filesystem::path(dir) / "system.json").string());
}

// ---------------------------------------------------------------------------
// Data pipeline
// ---------------------------------------------------------------------------

struct FitReport {
    TimeSeriesPanel panel;
    StageChain chain;
    std::optional<CommunityPath> path;
    std::optional<AlphaCvReport> alpha_cv;
    json scree;
    std::vector<int> suggested;
    std::vector<std::vector<RankPair>> admissible;
};

inline TimeSeriesPanel load_fit_panel(const ExperimentConfig& cfg) {
    TimeSeriesPanel raw = load_csv(cfg.csv, cfg.has_header, cfg.date_column);
    TimeSeriesPanel p = transform(raw, cfg.transform);
    if (cfg.kind() == ChainKind::pvar_cyclic) p = p.with_phase(cfg.t0_phase, cfg.seasons);
    return p;
}

/// Ingest, transform, fit, and (when ranks are configured) co-cluster.
inline FitReport fit_csv(const ExperimentConfig& cfg) {
    cfg.validate();
    FitReport rep{load_fit_panel(cfg), {}, {}, {}, {}, {}, {}};
    rep.chain = fit_stage_chain(rep.panel, model_config(cfg, cfg.ranks));
    rep.scree = scree_to_json(rep.chain, cfg.scree_threshold);
    rep.suggested = suggest_ranks(rep.chain, cfg.scree_threshold);
    const int max_k = std::min<int>(6, static_cast<int>(rep.panel.dimension()));
    rep.admissible = nearest_admissible_ranks(cfg.kind(), rep.suggested, max_k);
    json adm = json::array();
    for (const auto& a : rep.admissible) adm.push_back(ranks_to_json(a));
    rep.scree["nearest_admissible"] = adm;
    if (cfg.ranks.empty()) return rep;

    const std::uint64_t seed = cfg.seed.value_or(0);
    double alpha = 0.0;
    if (cfg.alpha) {
        alpha = *cfg.alpha;
    } else {
        AlphaCvOptions ao;
        ao.grid = cfg.alpha_grid;
        ao.folds = cfg.alpha_folds;
        ao.seed = derive_seed(seed, {5});
        rep.alpha_cv = cv_alpha(rep.chain, ao);
        alpha = rep.alpha_cv->chosen;
    }
    CoclusterOptions co;
    co.alpha = alpha;
    co.seed = derive_seed(seed, {4});
    rep.path = co_cluster(rep.chain, co);
    return rep;
}

inline void write_fit_outputs(const FitReport& rep, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path d(dir);
    write_json_file(stage_chain_to_json(rep.chain), (d / "chain.json").string());
    write_json_file(rep.scree, (d / "scree.json").string());
    if (rep.alpha_cv) write_json_file(alpha_cv_to_json(*rep.alpha_cv), (d / "alpha_cv.json").string());
    if (rep.path) {
        write_json_file(community_path_to_json(*rep.path), (d / "path.json").string());
        write_json_file(export_sankey(*rep.path), (d / "sankey.json").string());
    }
}

}  // namespace scbm
