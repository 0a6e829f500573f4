#include "oracles.hpp"
#include "scbm/scbm.hpp"

#include <Eigen/QR>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

using scbm::ChainKind;
using scbm::Labels;
using scbm::Matrix;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int worker_count() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

struct SetupStats {
    double accuracy = 0.0;
    double spectral = 0.0;
    double ari = 0.0;
    std::size_t failed = 0;
};

std::map<int, SetupStats> run_grid(scbm::ExperimentConfig cfg) {
    cfg.threads = worker_count();
    const auto rep = scbm::run_experiment(cfg);
    std::map<int, SetupStats> out;
    for (const auto& s : rep.setups) {
        const auto ok = s.successes();
        SetupStats st;
        st.failed = s.failures();
        std::vector<double> acc, se, ar;
        for (const auto& e : ok) {
            acc.push_back(e.accuracy);
            se.push_back(e.spectral_error);
            ar.push_back(e.ari);
        }
        st.accuracy = scbm::mean_se(acc).mean;
        st.spectral = scbm::mean_se(se).mean;
        st.ari = scbm::mean_se(ar).mean;
        out[s.length] = st;
    }
    return out;
}

scbm::ExperimentConfig table_config(ChainKind kind, const std::string& path, int type, std::vector<int> lengths,
                                    int reps, std::uint64_t seed) {
    scbm::ExperimentConfig c;
    c.mode = kind == ChainKind::pvar_cyclic ? scbm::ExperimentMode::simulate_pvar : scbm::ExperimentMode::simulate_vhar;
    c.q = 18;
    c.path = path;
    c.type_id = type;
    c.lengths = std::move(lengths);
    c.replications = reps;
    c.seed = seed;
    return c;
}

const std::vector<int> kPvarLengths{200, 500, 1000, 2000};

/// Seasonal Monte Carlo grid shared by the first two criteria.
const std::map<std::pair<std::string, int>, std::map<int, SetupStats>>& pvar_grid() {
    static const auto grid = [] {
        std::map<std::pair<std::string, int>, std::map<int, SetupStats>> g;
        std::uint64_t seed = 20240601;
        for (const std::string path : {"path1", "path2", "path3"})
            for (int type : {1, 2})
                g[{path, type}] = run_grid(table_config(ChainKind::pvar_cyclic, path, type, kPvarLengths, 50, seed++));
        return g;
    }();
    return grid;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

Outcome criterion1() {
    const auto& s = pvar_grid().at({"path1", 1}).at(2000);
    Outcome o;
    o.pass = s.accuracy >= 0.99 && std::abs(s.spectral - 0.236) <= 0.05 && s.failed == 0;
    o.detail = fmt("accuracy %.4f (>= 0.99), spectral %.4f (0.236 +/- 0.05), failed %.0f", s.accuracy, s.spectral,
                   static_cast<double>(s.failed));
    return o;
}

Outcome criterion2() {
    const auto& g = pvar_grid();
    Outcome o{true, ""};
    int violations = 0;
    std::string log;
    auto note = [&](bool ok, const std::string& what) {
        if (!ok) {
            ++violations;
            log += " [" + what + "]";
        }
    };
    for (const std::string path : {"path1", "path2", "path3"})
        for (int t : {1000, 2000}) {
            const double a1 = g.at({path, 1}).at(t).accuracy, a2 = g.at({path, 2}).at(t).accuracy;
            note(a1 >= a2, path + fmt(" T=%.0f type1 %.4f < type2 %.4f", t, a1, a2));
        }
    for (int type : {1, 2}) {
        const double p1 = g.at({"path1", type}).at(2000).accuracy, p3 = g.at({"path3", type}).at(2000).accuracy;
        note(p1 >= p3, fmt("type %.0f path1 %.4f < path3 %.4f", type, p1, p3));
    }
    for (const auto& [key, byT] : g)
        for (std::size_t i = 1; i < kPvarLengths.size(); ++i) {
            const double lo = byT.at(kPvarLengths[i - 1]).accuracy, hi = byT.at(kPvarLengths[i]).accuracy;
            note(hi - lo >= -0.02, key.first + fmt(" type %.0f T=%.0f drop %.4f", key.second, kPvarLengths[i], hi - lo));
        }
    std::string table;
    for (const auto& [key, byT] : g) {
        table += " " + key.first + "/t" + std::to_string(key.second) + ":";
        for (int t : kPvarLengths) table += fmt(" %.3f", byT.at(t).accuracy);
    }
    o.pass = violations == 0;
    o.detail = std::to_string(violations) + " ordering violations;" + table + log;
    return o;
}

Outcome criterion3() {
    auto cfg = table_config(ChainKind::vhar_linear, "path1", 1, {3000}, 50, 20240602);
    cfg.b_m = 3;
    cfg.b_l = 10;
    const auto s = run_grid(cfg).at(3000);
    Outcome o;
    o.pass = s.accuracy >= 0.95 && std::abs(s.spectral - 0.197) <= 0.05 && s.failed == 0;
    o.detail = fmt("accuracy %.4f (>= 0.95), spectral %.4f (0.197 +/- 0.05)", s.accuracy, s.spectral);
    return o;
}

Outcome criterion4() {
    auto cfg = table_config(ChainKind::vhar_linear, "path1", 1, {3000}, 30, 20240603);
    cfg.q = 36;
    cfg.b_m = 3;
    cfg.b_l = 10;
    const double lasso = run_grid(cfg).at(3000).ari;
    cfg.estimator = scbm::EstimatorKind::ols;
    const double ols = run_grid(cfg).at(3000).ari;
    Outcome o;
    o.pass = lasso - ols >= 0.3;
    o.detail = fmt("lasso ARI %.4f, OLS ARI %.4f, gap %.4f (>= 0.3)", lasso, ols, lasso - ols);
    return o;
}

Outcome criterion5() {
    int identical = 0;
    for (std::uint64_t c = 0; c < 20; ++c) {
        auto g = scbm::make_stream(c, scbm::StreamPurpose::test, {5});
        const ChainKind kind = c % 2 ? ChainKind::vhar_linear : ChainKind::pvar_cyclic;
        const std::size_t stages = kind == ChainKind::pvar_cyclic ? 2 + g() % 4 : 3;
        const int q = 8 + static_cast<int>(g() % 13);
        std::vector<int> counts;
        for (std::size_t p = 0; p < scbm::position_count(kind, stages); ++p) counts.push_back(1 + static_cast<int>(g() % 4));
        const auto ranks = scbm::ranks_from_position_counts(kind, counts);
        std::vector<Matrix> mats;
        for (std::size_t m = 0; m < stages; ++m) mats.push_back(oracle::random_matrix(q, q, 1000 * c + m));
        scbm::CoclusterOptions a, b;
        a.seed = b.seed = c;
        b.smooth = false;
        const auto pa = scbm::co_cluster(mats, kind, ranks, a), pb = scbm::co_cluster(mats, kind, ranks, b);
        if (pa.positions == pb.positions && pa.position_k == pb.position_k) ++identical;
    }
    return {identical == 20, std::to_string(identical) + "/20 configurations identical"};
}

Matrix random_projector(Eigen::Index q, int k, std::uint64_t seed) {
    Eigen::HouseholderQR<Matrix> qr(oracle::random_matrix(q, k, seed));
    const Matrix v = qr.householderQ() * Matrix::Identity(q, k);
    return v * v.transpose();
}

Outcome criterion6() {
    const double alpha = 0.1;
    const double bound = 2.0 * std::sqrt(2.0) * alpha / (1.0 - 2.0 * alpha);
    double worst = 0.0;
    int sweeps = 0;
    for (std::uint64_t c = 0; c < 100; ++c) {
        const Eigen::Index q = 6 + static_cast<Eigen::Index>(c % 7);
        const std::vector<int> ks{1 + static_cast<int>(c % 3), 1 + static_cast<int>((c / 3) % 3)};
        const std::vector<Matrix> base{random_projector(q, ks[0], 10 * c), random_projector(q, ks[1], 10 * c + 1)};
        std::vector<Matrix> a{random_projector(q, ks[0], 10 * c + 2), random_projector(q, ks[1], 10 * c + 3)};
        std::vector<Matrix> b{random_projector(q, ks[0], 10 * c + 4), random_projector(q, ks[1], 10 * c + 5)};
        for (int it = 0; it < 30; ++it) {
            const double before = scbm::chain_distance(a, b);
            if (before < 1e-9) break;
            a = scbm::pisces_sweep(base, a, ks, alpha);
            b = scbm::pisces_sweep(base, b, ks, alpha);
            worst = std::max(worst, scbm::chain_distance(a, b) / before);
            ++sweeps;
        }
    }
    return {worst <= bound, fmt("worst ratio %.4f over %.0f sweeps (bound %.4f)", worst, sweeps, bound)};
}

Outcome criterion7() {
    double worst = 0.0;
    int unconverged = 0;
    for (std::uint64_t p = 0; p < 50; ++p) {
        const Matrix x = oracle::random_matrix(20, 5, 5000 + p), y = oracle::random_matrix(20, 1, 6000 + p);
        scbm::RegressionProblem prob;
        prob.design = x;
        prob.response = y;
        for (Eigen::Index t = 0; t < 20; ++t) prob.time_index.push_back(t);
        for (double lambda : {0.01, 0.1, 1.0}) {
            const auto fit = scbm::lasso_fista(prob, lambda);
            if (!fit.converged) ++unconverged;
            const double ref = oracle::lasso_objective(x, y, oracle::lasso_cd(x, y.col(0), lambda), lambda);
            worst = std::max(worst, std::abs(fit.objective - ref));
        }
    }
    return {worst <= 1e-6 && unconverged == 0,
            fmt("max objective gap %.3g over 150 fits (<= 1e-6), unconverged %.0f", worst, unconverged)};
}

void partitions(std::size_t n, int kmax, Labels& cur, int used, std::vector<Labels>& out) {
    if (cur.size() == n) {
        out.push_back(cur);
        return;
    }
    for (int l = 0; l <= std::min(used, kmax - 1); ++l) {
        cur.push_back(l);
        partitions(n, kmax, cur, std::max(used, l + 1), out);
        cur.pop_back();
    }
}

Outcome criterion8() {
    double ari_gap = 0.0, acc_gap = 0.0;
    std::size_t ari_pairs = 0, acc_pairs = 0;
    for (std::size_t n = 2; n <= 8; ++n) {
        std::vector<Labels> p3, p4;
        Labels cur;
        partitions(n, 3, cur, 0, p3);
        partitions(n, 4, cur, 0, p4);
        for (const auto& a : p3)
            for (const auto& b : p3) {
                ari_gap = std::max(ari_gap, std::abs(scbm::ari(a, b) - oracle::ari_pairs(a, b)));
                ++ari_pairs;
            }
        for (const auto& a : p4)
            for (const auto& b : p4) {
                acc_gap = std::max(acc_gap, std::abs(scbm::aligned_accuracy(a, b) - oracle::accuracy_exhaustive(a, b)));
                ++acc_pairs;
            }
    }
    return {ari_gap <= 1e-12 && acc_gap == 0.0,
            fmt("ARI max gap %.3g over %.0f pairs, accuracy max gap %.3g", ari_gap, static_cast<double>(ari_pairs), acc_gap) +
                " over " + std::to_string(acc_pairs) + " pairs"};
}

Outcome criterion9() {
    int systems = 0, bad = 0;
    double sigma_gap = 0.0, sum_gap = 0.0, norm_gap = 0.0, radius = 0.0;
    for (const std::string path : {"path1", "path2", "path3"})
        for (int type : {1, 2})
            for (std::uint64_t seed = 0; seed < 10; ++seed) {
                const auto pd = scbm::path_preset(ChainKind::pvar_cyclic, path, 18);
                const auto ps = scbm::sample_pvar_system(18, pd, type, 100 * seed + static_cast<std::uint64_t>(type));
                sigma_gap = std::max(sigma_gap, std::abs(scbm::spectral_norm(scbm::seasonal_product(ps.transitions)) -
                                                         scbm::kTargetSigmaMax));
                radius = std::max(radius, scbm::system_spectral_radius(ps));
                for (std::size_t m = 0; m < ps.adjacencies.size(); ++m)
                    norm_gap = std::max(norm_gap, (scbm::degree_normalize(ps.adjacencies[m], 1.0) -
                                                   oracle::degree_normalize_loop(ps.adjacencies[m], 1.0))
                                                      .cwiseAbs()
                                                      .maxCoeff());
                ++systems;

                const auto vd = scbm::path_preset(ChainKind::vhar_linear, path, 18);
                for (auto [bm, bl] : {std::pair{3, 10}, std::pair{5, 22}}) {
                    const auto vs = scbm::sample_vhar_system(18, vd, type, bm, bl, 7 * seed + static_cast<std::uint64_t>(bm));
                    const Matrix total = vs.transitions[0] + vs.transitions[1] + vs.transitions[2];
                    sigma_gap = std::max(sigma_gap, std::abs(scbm::spectral_norm(total) - scbm::kTargetSigmaMax));
                    radius = std::max(radius, scbm::system_spectral_radius(vs));
                    const auto lags = scbm::expand_vhar(vs.transitions[2], vs.transitions[1], vs.transitions[0], bm, bl);
                    Matrix sum = Matrix::Zero(18, 18);
                    for (const auto& l : lags) sum += l;
                    sum_gap = std::max(sum_gap, (sum - total).cwiseAbs().maxCoeff());
                    for (std::size_t m = 0; m < vs.adjacencies.size(); ++m)
                        norm_gap = std::max(norm_gap, (scbm::degree_normalize(vs.adjacencies[m], 0.7) -
                                                       oracle::degree_normalize_loop(vs.adjacencies[m], 0.7))
                                                          .cwiseAbs()
                                                          .maxCoeff());
                    ++systems;
                }
            }
    if (sigma_gap > 1e-10 || radius >= 1.0 || sum_gap > 1e-12 || norm_gap > 1e-12) ++bad;
    Outcome o{bad == 0, ""};
    o.detail = std::to_string(systems) + " systems; " +
               fmt("sigma gap %.3g, max radius %.4f, lag-sum gap %.3g", sigma_gap, radius, sum_gap) +
               fmt(", normalization gap %.3g", norm_gap);
    return o;
}

Outcome criterion10() {
    int violations = 0;
    for (std::uint64_t c = 0; c < 100; ++c) {
        auto g = scbm::make_stream(c, scbm::StreamPurpose::test, {10});
        scbm::CommunityPath path;
        path.kind = c % 2 ? ChainKind::vhar_linear : ChainKind::pvar_cyclic;
        path.stages = path.kind == ChainKind::pvar_cyclic ? 2 + g() % 5 : 3;
        const std::size_t q = 5 + g() % 40;
        for (std::size_t p = 0; p < scbm::position_count(path.kind, path.stages); ++p) {
            const int k = 1 + static_cast<int>(g() % 5);
            path.positions.push_back(oracle::random_labels(q, k, 100 * c + p));
            path.position_k.push_back(k);
        }
        const auto s = scbm::export_sankey(path);
        std::vector<std::vector<std::size_t>> sizes;
        for (const auto& st : s.at("stages")) {
            std::vector<std::size_t> sz;
            std::size_t total = 0;
            for (const auto& n : st.at("nodes")) {
                sz.push_back(n.at("size").get<std::size_t>());
                total += sz.back();
                if (n.at("members").size() != sz.back()) ++violations;
            }
            if (total != q) ++violations;
            sizes.push_back(sz);
        }
        for (const auto& t : s.at("transitions")) {
            const auto a = t.at("source_stage").get<std::size_t>() - 1, b = t.at("target_stage").get<std::size_t>() - 1;
            std::vector<std::size_t> out(sizes[a].size(), 0), in(sizes[b].size(), 0);
            std::size_t total = 0;
            for (const auto& f : t.at("flows")) {
                const auto n = f.at("count").get<std::size_t>();
                out[f.at("source").get<std::size_t>() - 1] += n;
                in[f.at("target").get<std::size_t>() - 1] += n;
                total += n;
            }
            if (total != q || out != sizes[a] || in != sizes[b]) ++violations;
        }
    }
    return {violations == 0, std::to_string(violations) + " conservation violations over 100 paths"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"seasonal static-path spot check", criterion1},
        {"seasonal accuracy orderings", criterion2},
        {"horizon static-path spot check", criterion3},
        {"lasso versus OLS clustering gap", criterion4},
        {"zero smoothing reproduces unsmoothed pipeline", criterion5},
        {"smoothing sweep contraction", criterion6},
        {"lasso solver against coordinate descent", criterion7},
        {"clustering metric oracles", criterion8},
        {"generated system structure", criterion9},
        {"sankey conservation", criterion10},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (!o.pass) ++failures;
        std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                    o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
