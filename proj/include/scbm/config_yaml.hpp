#pragma once

#include "scbm/experiment.hpp"

#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <string>
#include <vector>

namespace scbm {

namespace detail {

template <class T>
std::vector<T> scalar_or_list(const YAML::Node& n) {
    if (n.IsSequence()) return n.as<std::vector<T>>();
    return {n.as<T>()};
}

}  // namespace detail

/// Experiment configuration from a YAML document. Relative data paths are
/// resolved against `base_dir`.
inline ExperimentConfig experiment_config_from_yaml(const YAML::Node& root, const std::string& base_dir = ".") {
    ExperimentConfig c;
    try {
        if (!root.IsMap()) throw ConfigError("configuration must be a mapping");
        if (auto n = root["mode"]) c.mode = experiment_mode_from_string(n.as<std::string>());
        if (auto n = root["q"]) c.q = n.as<int>();
        if (auto n = root["T"]) c.lengths = detail::scalar_or_list<int>(n);
        if (auto n = root["seasons"]) c.seasons = n.as<int>();
        if (auto n = root["lag_order"]) c.lag_order = n.as<int>();
        if (auto n = root["b_M"]) c.b_m = n.as<int>();
        if (auto n = root["b_L"]) c.b_l = n.as<int>();
        if (auto n = root["path"]) c.path = n.as<std::string>();
        if (auto n = root["memberships"]) {
            for (const auto& pos : n) {
                Labels l;
                for (const auto& v : pos) l.push_back(v.as<int>() - 1);
                c.memberships.push_back(std::move(l));
            }
        }
        if (auto n = root["type"]) c.type_id = n.as<int>();
        if (auto n = root["estimator"]) c.estimator = estimator_from_string(n.as<std::string>());
        if (auto n = root["lambda"]) {
            if (auto g = n["grid"]) c.lambda_grid = g.as<std::vector<double>>();
            if (auto m = n["multiplier"]) c.lambda_multiplier = m.as<double>();
            if (auto f = n["folds"]) c.lambda_folds = f.as<int>();
        }
        if (auto n = root["alpha"]) {
            if (n.as<std::string>() != "cv") c.alpha = n.as<double>();
        }
        if (auto n = root["alpha_cv"]) {
            if (auto g = n["grid_size"]) c.alpha_grid = default_alpha_grid(g.as<int>());
            if (auto g = n["grid"]) c.alpha_grid = g.as<std::vector<double>>();
            if (auto f = n["folds"]) c.alpha_folds = f.as<int>();
            if (auto s = n["scope"]) {
                const auto v = s.as<std::string>();
                if (v == "pilot") c.alpha_scope = AlphaCvScope::pilot;
                else if (v == "replication") c.alpha_scope = AlphaCvScope::replication;
                else throw ConfigError("alpha_cv.scope must be pilot or replication");
            }
        }
        if (auto n = root["ranks"]) c.ranks = ranks_from_flat(n.as<std::vector<int>>());
        if (auto n = root["replications"]) c.replications = n.as<int>();
        if (auto n = root["seed"]) c.seed = n.as<std::uint64_t>();
        if (auto n = root["burnin"]) c.burnin = n.as<int>();
        if (auto n = root["threads"]) c.threads = n.as<int>();
        if (auto n = root["out"]) c.out_dir = n.as<std::string>();
        if (auto n = root["scree_threshold"]) c.scree_threshold = n.as<double>();
        if (auto d = root["data"]) {
            if (auto n = d["csv"]) {
                std::filesystem::path p(n.as<std::string>());
                c.csv = (p.is_relative() ? std::filesystem::path(base_dir) / p : p).string();
            }
            if (auto n = d["header"]) c.has_header = n.as<bool>();
            if (auto n = d["date_column"]) c.date_column = n.as<std::string>();
            if (auto n = d["transform"]) c.transform = transform_from_string(n.as<std::string>());
            if (auto n = d["t0_phase"]) c.t0_phase = n.as<int>();
            if (auto n = d["kind"]) c.fit_kind = chain_kind_from_string(n.as<std::string>());
        }
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
    return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(path);
    } catch (const YAML::Exception& e) {
        throw ConfigError("cannot read '" + path + "': " + e.what());
    }
    const auto dir = std::filesystem::path(path).parent_path();
    return experiment_config_from_yaml(root, dir.empty() ? "." : dir.string());
}

}  // namespace scbm
