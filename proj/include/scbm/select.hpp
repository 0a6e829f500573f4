#pragma once

#include "scbm/cocluster.hpp"
#include "scbm/core.hpp"
#include "scbm/estimator.hpp"
#include "scbm/json_io.hpp"
#include "scbm/rng.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace scbm {

// ---------------------------------------------------------------------------
// Scree rule
// ---------------------------------------------------------------------------

inline constexpr double kScreeThreshold = 0.80;

/// Cumulative squared-singular-value share, one entry per K = 1..q.
inline Vector cumulative_energy(const Vector& singular_values) {
    const Vector sq = singular_values.array().square();
    const double total = sq.sum();
    Vector out(sq.size());
    double acc = 0.0;
    for (Eigen::Index k = 0; k < sq.size(); ++k) {
        acc += sq(k);
        out(k) = total > 0.0 ? acc / total : 1.0;
    }
    return out;
}

/// Smallest K whose cumulative share reaches the threshold.
inline int scree_rank(const Vector& singular_values, double threshold = kScreeThreshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw DomainError("threshold must lie in (0, 1)");
    const Vector c = cumulative_energy(singular_values);
    for (Eigen::Index k = 0; k < c.size(); ++k)
        if (c(k) >= threshold - 1e-12) return static_cast<int>(k) + 1;
    return static_cast<int>(c.size());
}

inline std::vector<int> suggest_ranks(const StageChain& chain, double threshold = kScreeThreshold) {
    std::vector<int> out;
    for (const auto& m : chain.matrices) {
        Eigen::JacobiSVD<Matrix> svd(m);
        out.push_back(scree_rank(svd.singularValues(), threshold));
    }
    return out;
}

/// Admissible configurations closest (in summed absolute difference) to
/// per-stage suggestions K_m = min(K_y, K_z); candidates use K <= max_k.
inline std::vector<std::vector<RankPair>> nearest_admissible_ranks(ChainKind kind, const std::vector<int>& suggested,
                                                                   int max_k) {
    const std::size_t stages = suggested.size();
    const std::size_t npos = position_count(kind, stages);
    std::vector<int> counts(npos, 1);
    std::vector<std::vector<RankPair>> best;
    int best_cost = std::numeric_limits<int>::max();
    while (true) {
        const auto ranks = ranks_from_position_counts(kind, counts);
        int cost = 0;
        for (std::size_t m = 0; m < stages; ++m)
            cost += std::abs(std::min(ranks[m].k_y, ranks[m].k_z) - suggested[m]);
        if (cost < best_cost) {
            best_cost = cost;
            best.clear();
        }
        if (cost == best_cost) best.push_back(ranks);
        std::size_t i = 0;
        while (i < npos && ++counts[i] > max_k) counts[i++] = 1;
        if (i == npos) break;
    }
    return best;
}

// ---------------------------------------------------------------------------
// Smoothing-parameter cross-validation
// ---------------------------------------------------------------------------

inline constexpr int kAlphaGridSize = 14;
inline constexpr int kAlphaFolds = 5;

/// Equally spaced points k * alpha_max / n, k = 0..n-1.
inline std::vector<double> default_alpha_grid(int n = kAlphaGridSize) {
    std::vector<double> g;
    for (int k = 0; k < n; ++k) g.push_back(kAlphaMax * k / n);
    return g;
}

struct MaskEntry {
    int i = 0;
    int j = 0;
    int stage = 0;
};

/// Random partition of off-diagonal (i, j, stage) triples into folds of sizes
/// differing by at most one.
inline std::vector<std::vector<MaskEntry>> mask_folds(int q, int stages, int folds, std::uint64_t seed) {
    if (folds < 2) throw ConfigError("need at least two folds");
    std::vector<MaskEntry> all;
    for (int m = 0; m < stages; ++m)
        for (int i = 0; i < q; ++i)
            for (int j = 0; j < q; ++j)
                if (i != j) all.push_back({i, j, m});
    Philox4x32 g = make_stream(seed, StreamPurpose::cv_mask);
    for (std::size_t k = all.size(); k > 1; --k) {
        std::uniform_int_distribution<std::size_t> pick(0, k - 1);
        std::swap(all[k - 1], all[pick(g)]);
    }
    std::vector<std::vector<MaskEntry>> out(static_cast<std::size_t>(folds));
    for (std::size_t k = 0; k < all.size(); ++k) out[k % static_cast<std::size_t>(folds)].push_back(all[k]);
    return out;
}

/// Rank-K truncated-SVD reconstruction.
inline Matrix low_rank_completion(const Matrix& m, int k) {
    const TruncatedSvd t = truncated_svd(m, k);
    return t.left * t.values.asDiagonal() * t.right.transpose();
}

struct BlockFit {
    Matrix p_hat;
    Matrix b_hat;
    Vector theta_y;
    Vector theta_z;
    int zero_denominators = 0;
};

/// Degree-corrected block fit of a completed stage matrix given assignments.
inline BlockFit block_fit(const Matrix& completed, const Labels& y, const Labels& z, int ky, int kz) {
    BlockFit f;
    f.theta_y = completed.rowwise().sum();
    f.theta_z = completed.colwise().sum().transpose();
    Matrix num = Matrix::Zero(ky, kz), den = Matrix::Zero(ky, kz);
    const Eigen::Index q = completed.rows();
    for (Eigen::Index i = 0; i < q; ++i)
        for (Eigen::Index j = 0; j < q; ++j) {
            num(y[static_cast<std::size_t>(i)], z[static_cast<std::size_t>(j)]) += completed(i, j);
            den(y[static_cast<std::size_t>(i)], z[static_cast<std::size_t>(j)]) += f.theta_y(i) * f.theta_z(j);
        }
    f.b_hat = Matrix::Zero(ky, kz);
    for (int k = 0; k < ky; ++k)
        for (int r = 0; r < kz; ++r) {
            if (den(k, r) == 0.0) {
                ++f.zero_denominators;
                continue;
            }
            f.b_hat(k, r) = num(k, r) / den(k, r);
        }
    f.p_hat.resize(q, q);
    for (Eigen::Index i = 0; i < q; ++i)
        for (Eigen::Index j = 0; j < q; ++j)
            f.p_hat(i, j) = f.theta_y(i) * f.theta_z(j) *
                            f.b_hat(y[static_cast<std::size_t>(i)], z[static_cast<std::size_t>(j)]);
    return f;
}

/// Sum_m Tr(Phi_m)/q * (1 - Tr(P_m)/q).
inline double alpha_criterion(const std::vector<Matrix>& phi, const std::vector<Matrix>& p_hat) {
    double h = 0.0;
    for (std::size_t m = 0; m < phi.size(); ++m) {
        const double q = static_cast<double>(phi[m].rows());
        h += phi[m].trace() / q * (1.0 - p_hat[m].trace() / q);
    }
    return h;
}

struct AlphaCvOptions {
    std::vector<double> grid = default_alpha_grid();
    int folds = kAlphaFolds;
    std::uint64_t seed = 0;
    PiscesOptions pisces;
    KmeansOptions kmeans;
};

struct AlphaCvReport {
    std::vector<double> grid;
    Matrix scores;  ///< folds x grid
    Vector totals;  ///< fold sums per grid point
    double chosen = 0.0;
    std::vector<std::vector<MaskEntry>> masks;
    std::uint64_t seed = 0;
    int zero_denominators = 0;
};

/// Masked-completion cross-validation of the smoothing parameter.
inline AlphaCvReport cv_alpha(const std::vector<Matrix>& phi, ChainKind kind, const std::vector<RankPair>& ranks,
                              const AlphaCvOptions& opts) {
    validate_ranks(kind, ranks);
    if (opts.grid.empty()) throw ConfigError("alpha grid is empty");
    for (double a : opts.grid)
        if (!(a >= 0.0 && a < kAlphaMax)) throw DomainError("alpha grid must lie in [0, alpha_max)");
    const int q = static_cast<int>(phi.front().rows());
    const int s = static_cast<int>(phi.size());

    AlphaCvReport rep;
    rep.grid = opts.grid;
    rep.seed = opts.seed;
    rep.masks = mask_folds(q, s, opts.folds, opts.seed);
    rep.scores = Matrix::Zero(opts.folds, static_cast<Eigen::Index>(opts.grid.size()));

    for (int l = 0; l < opts.folds; ++l) {
        std::vector<Matrix> masked = phi;
        for (const auto& e : rep.masks[static_cast<std::size_t>(l)]) masked[static_cast<std::size_t>(e.stage)](e.i, e.j) = 0.0;
        std::vector<Matrix> completed;
        for (int m = 0; m < s; ++m)
            completed.push_back(low_rank_completion(masked[static_cast<std::size_t>(m)],
                                                    std::min(ranks[static_cast<std::size_t>(m)].k_y,
                                                             ranks[static_cast<std::size_t>(m)].k_z)));
        const StageSpectra sp = stage_spectra(completed, ranks);
        for (std::size_t a = 0; a < opts.grid.size(); ++a) {
            const SmoothedChain sm = pisces_smooth(sp, ranks, opts.grid[a], opts.pisces);
            const CommunityPath path =
                link_stages(sm.spectra, kind, ranks, derive_seed(opts.seed, {static_cast<std::uint64_t>(l)}), opts.kmeans);
            std::vector<Matrix> p_hat;
            for (int m = 0; m < s; ++m) {
                const auto& r = ranks[static_cast<std::size_t>(m)];
                BlockFit f = block_fit(completed[static_cast<std::size_t>(m)], path.y(static_cast<std::size_t>(m)),
                                       path.z(static_cast<std::size_t>(m)), r.k_y, r.k_z);
                rep.zero_denominators += f.zero_denominators;
                p_hat.push_back(std::move(f.p_hat));
            }
            rep.scores(l, static_cast<Eigen::Index>(a)) = alpha_criterion(phi, p_hat);
        }
    }
    rep.totals = rep.scores.colwise().sum().transpose();
    Eigen::Index best = 0;
    for (Eigen::Index a = 1; a < rep.totals.size(); ++a)
        if (rep.totals(a) < rep.totals(best) ||
            (rep.totals(a) == rep.totals(best) && rep.grid[static_cast<std::size_t>(a)] < rep.grid[static_cast<std::size_t>(best)]))
            best = a;
    rep.chosen = rep.grid[static_cast<std::size_t>(best)];
    return rep;
}

inline AlphaCvReport cv_alpha(const StageChain& chain, const AlphaCvOptions& opts) {
    return cv_alpha(chain.matrices, chain.kind, chain.ranks, opts);
}

inline json alpha_cv_to_json(const AlphaCvReport& r) {
    json folds = json::array();
    for (const auto& f : r.masks) {
        json entries = json::array();
        for (const auto& e : f) entries.push_back({e.i + 1, e.j + 1, e.stage + 1});
        folds.push_back(entries);
    }
    return {{"schema", kSchemaVersion},
            {"grid", r.grid},
            {"scores", matrix_to_json(r.scores)},
            {"totals", std::vector<double>(r.totals.data(), r.totals.data() + r.totals.size())},
            {"chosen", r.chosen},
            {"seed", r.seed},
            {"zero_denominators", r.zero_denominators},
            {"masks", folds}};
}

/// Plain-text score surface, one row per grid point.
inline std::string alpha_cv_table(const AlphaCvReport& r) {
    std::string out = "alpha        total";
    for (Eigen::Index l = 0; l < r.scores.rows(); ++l) out += "       fold" + std::to_string(l + 1);
    out += '\n';
    char buf[64];
    for (std::size_t a = 0; a < r.grid.size(); ++a) {
        std::snprintf(buf, sizeof buf, "%-8.5f %9.5f", r.grid[a], r.totals(static_cast<Eigen::Index>(a)));
        out += buf;
        for (Eigen::Index l = 0; l < r.scores.rows(); ++l) {
            std::snprintf(buf, sizeof buf, " %10.5f", r.scores(l, static_cast<Eigen::Index>(a)));
            out += buf;
        }
        out += r.grid[a] == r.chosen ? "  *\n" : "\n";
    }
    return out;
}

/// Scree data for every stage of a chain.
inline json scree_to_json(const StageChain& chain, double threshold = kScreeThreshold) {
    json stages = json::array();
    for (std::size_t m = 0; m < chain.matrices.size(); ++m) {
        Eigen::JacobiSVD<Matrix> svd(chain.matrices[m]);
        const Vector sv = svd.singularValues();
        const Vector c = cumulative_energy(sv);
        stages.push_back({{"stage", m + 1},
                          {"singular_values", std::vector<double>(sv.data(), sv.data() + sv.size())},
                          {"cumulative_share", std::vector<double>(c.data(), c.data() + c.size())},
                          {"suggested_k", scree_rank(sv, threshold)}});
    }
    return {{"schema", kSchemaVersion}, {"kind", to_string(chain.kind)}, {"threshold", threshold}, {"stages", stages}};
}

}  // namespace scbm
