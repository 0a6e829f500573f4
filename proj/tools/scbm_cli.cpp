// scbm: simulate, fit and report periodic/heterogeneous VAR co-block models.

#include "scbm/config_yaml.hpp"
#include "scbm/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool need_config) {
    auto* c = cmd->add_option("--config", a.config, "YAML experiment configuration");
    if (need_config) c->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", a.seed, "Override the configured seed");
    cmd->add_option("--threads", a.threads, "Worker threads for replications")->check(CLI::PositiveNumber);
    cmd->add_option("--out", a.out, "Output directory");
}

scbm::ExperimentConfig resolve(const CommonArgs& a) {
    scbm::ExperimentConfig cfg = scbm::load_experiment_config(a.config);
    if (a.seed) cfg.seed = a.seed;
    if (a.threads) cfg.threads = *a.threads;
    if (a.out) cfg.out_dir = *a.out;
    return cfg;
}

void print_summary(const scbm::json& summary, std::ostream& os) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%6s %5s %8s %8s %14s %10s %10s %8s\n", "T", "reps", "c_lam", "alpha",
                  "spectral_norm", "accuracy", "ari", "failed");
    os << buf;
    for (const auto& s : summary.at("setups")) {
        std::snprintf(buf, sizeof buf, "%6d %5d %8.3f %8.4f %14.4f %10.4f %10.4f %8d\n", s.at("T").get<int>(),
                      s.at("replications").get<int>(), s.at("lambda_multiplier").get<double>(),
                      s.at("alpha").get<double>(), s.at("spectral_error").at("mean").get<double>(),
                      s.at("accuracy").at("mean").get<double>(), s.at("ari").at("mean").get<double>(),
                      s.at("failed").get<int>());
        os << buf;
    }
}

int cmd_simulate(const CommonArgs& a) {
    auto cfg = resolve(a);
    if (cfg.mode == scbm::ExperimentMode::fit_csv) throw scbm::ConfigError("simulate needs a simulate_* mode");
    const auto rep = scbm::run_experiment(cfg);
    scbm::write_experiment_outputs(rep, cfg.out_dir);
    print_summary(scbm::summary_json(rep), std::cout);
    std::cout << "wrote " << (fs::path(cfg.out_dir) / "summary.json").string() << '\n';
    return 0;
}

int cmd_fit(const CommonArgs& a) {
    auto cfg = resolve(a);
    if (cfg.mode != scbm::ExperimentMode::fit_csv) throw scbm::ConfigError("fit needs mode fit_csv");
    const auto rep = scbm::fit_csv(cfg);
    scbm::write_fit_outputs(rep, cfg.out_dir);
    std::cout << "scree suggestions:";
    for (int k : rep.suggested) std::cout << ' ' << k;
    std::cout << '\n';
    if (!rep.path) {
        std::cout << "no ranks configured; wrote chain.json and scree.json only\n";
        return 0;
    }
    if (rep.alpha_cv) std::cout << scbm::alpha_cv_table(*rep.alpha_cv);
    std::cout << "alpha = " << rep.path->diagnostics.alpha << ", wrote path.json and sankey.json to " << cfg.out_dir
              << '\n';
    return 0;
}

int cmd_cv_alpha(const CommonArgs& a) {
    auto cfg = resolve(a);
    scbm::StageChain chain;
    if (cfg.mode == scbm::ExperimentMode::fit_csv) {
        if (cfg.ranks.empty()) throw scbm::ConfigError("cv-alpha needs ranks");
        chain = scbm::fit_stage_chain(scbm::load_fit_panel(cfg), scbm::model_config(cfg, cfg.ranks));
    } else {
        cfg.validate();
        const auto sys = scbm::experiment_system(cfg);
        const auto ranks = cfg.ranks.empty() ? sys.design.ranks() : cfg.ranks;
        const int length = cfg.lengths.front();
        const auto panel = scbm::simulate(sys, length, cfg.burnin.value_or(scbm::default_burnin(sys.kind)),
                                          scbm::derive_seed(*cfg.seed, {2, static_cast<std::uint64_t>(length)}));
        chain = scbm::fit_stage_chain(panel, scbm::model_config(cfg, ranks));
    }
    scbm::AlphaCvOptions ao;
    ao.grid = cfg.alpha_grid;
    ao.folds = cfg.alpha_folds;
    ao.seed = scbm::derive_seed(cfg.seed.value_or(0), {5});
    const auto rep = scbm::cv_alpha(chain, ao);
    std::cout << scbm::alpha_cv_table(rep);
    fs::create_directories(cfg.out_dir);
    scbm::write_json_file(scbm::alpha_cv_to_json(rep), (fs::path(cfg.out_dir) / "alpha_cv.json").string());
    return 0;
}

int cmd_export_sankey(const std::string& path_file, const std::optional<std::string>& out) {
    const auto path = scbm::community_path_from_json(scbm::read_json_file(path_file));
    const fs::path dir = out ? fs::path(*out) : fs::path(path_file).parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    const auto target = (dir / "sankey.json").string();
    scbm::write_json_file(scbm::export_sankey(path), target);
    std::cout << "wrote " << target << '\n';
    return 0;
}

int cmd_report(const std::string& dir) {
    const auto summary = scbm::read_json_file((fs::path(dir) / "summary.json").string());
    const auto& c = summary.at("config");
    std::cout << c.at("mode").get<std::string>() << "  q=" << c.at("q") << "  path=" << c.at("path").get<std::string>()
              << "  type=" << c.at("type") << "  estimator=" << c.at("estimator").get<std::string>() << '\n';
    print_summary(summary, std::cout);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Seasonal and horizon co-block VAR models: simulation, estimation and community paths"};
    app.require_subcommand(1);

    CommonArgs sim_args, fit_args, cv_args;
    auto* sim = app.add_subcommand("simulate", "Monte Carlo experiment from a configuration");
    add_common(sim, sim_args, true);
    auto* fit = app.add_subcommand("fit", "Fit a CSV panel and export the community path");
    add_common(fit, fit_args, true);
    auto* cv = app.add_subcommand("cv-alpha", "Cross-validate the smoothing parameter");
    add_common(cv, cv_args, true);

    std::string path_file;
    std::optional<std::string> sankey_out;
    auto* sankey = app.add_subcommand("export-sankey", "Convert a path.json into sankey.json");
    sankey->add_option("path", path_file, "path.json produced by fit")->required()->check(CLI::ExistingFile);
    sankey->add_option("--out", sankey_out, "Output directory");

    std::string report_dir = ".";
    auto* report = app.add_subcommand("report", "Print the summary table of a simulate run");
    report->add_option("--out", report_dir, "Directory holding summary.json");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*sim) return cmd_simulate(sim_args);
        if (*fit) return cmd_fit(fit_args);
        if (*cv) return cmd_cv_alpha(cv_args);
        if (*sankey) return cmd_export_sankey(path_file, sankey_out);
        if (*report) return cmd_report(report_dir);
    } catch (const scbm::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
