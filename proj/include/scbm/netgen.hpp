#pragma once

#include "scbm/core.hpp"
#include "scbm/json_io.hpp"
#include "scbm/panel.hpp"
#include "scbm/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace scbm {

// ---------------------------------------------------------------------------
// Degree-regularized embedding
// ---------------------------------------------------------------------------

/// phi * (P^tau)^{-1/2} A' (O^tau)^{-1/2}, with the average out-degree of A'
/// as regularizer. Rows of the result are current receivers, columns lagged
/// senders.
inline Matrix degree_normalize(const Matrix& adjacency, double phi) {
    if (adjacency.rows() != adjacency.cols() || adjacency.rows() < 1)
        throw ShapeMismatch("adjacency must be square and non-empty");
    const auto q = static_cast<double>(adjacency.rows());
    const Matrix at = adjacency.transpose();
    const double tau = at.sum() / q;
    const Vector col_deg = at.colwise().sum().transpose().array() + tau;  // [P]_jj
    const Vector row_deg = at.rowwise().sum().array() + tau;              // [O]_ii
    if ((col_deg.array() <= 0.0).any() || (row_deg.array() <= 0.0).any())
        throw SingularScaling("regularized degree is not positive");
    const Vector p_inv_sqrt = col_deg.array().rsqrt();
    const Vector o_inv_sqrt = row_deg.array().rsqrt();
    return phi * p_inv_sqrt.asDiagonal() * at * o_inv_sqrt.asDiagonal();
}

// ---------------------------------------------------------------------------
// Path designs
// ---------------------------------------------------------------------------

/// q nodes split into k contiguous blocks, sizes differing by at most one
/// (larger blocks first).
inline Labels contiguous_labels(int q, int k) {
    if (k < 1 || q < k) throw DegenerateDesign("cannot split " + std::to_string(q) + " nodes into " +
                                               std::to_string(k) + " non-empty blocks");
    Labels out(static_cast<std::size_t>(q));
    const int base = q / k;
    const int extra = q % k;
    int node = 0;
    for (int b = 0; b < k; ++b) {
        const int size = base + (b < extra ? 1 : 0);
        for (int i = 0; i < size; ++i) out[static_cast<std::size_t>(node++)] = b;
    }
    return out;
}

inline std::vector<int> block_sizes(const Labels& labels, int k) {
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    return sizes;
}

/// Ground-truth community path: one label vector per path position plus the
/// chain topology that maps stages onto positions.
struct PathDesign {
    ChainKind kind = ChainKind::pvar_cyclic;
    std::size_t stages = 0;
    std::vector<Labels> positions;
    std::vector<int> position_k;

    [[nodiscard]] int dimension() const {
        return positions.empty() ? 0 : static_cast<int>(positions.front().size());
    }
    [[nodiscard]] const Labels& y(std::size_t stage) const {
        return positions[stage_positions(kind, stage, stages).first];
    }
    [[nodiscard]] const Labels& z(std::size_t stage) const {
        return positions[stage_positions(kind, stage, stages).second];
    }
    [[nodiscard]] std::vector<RankPair> ranks() const {
        return ranks_from_position_counts(kind, position_k);
    }

    void validate() const {
        if (positions.size() != position_count(kind, stages) || position_k.size() != positions.size())
            throw DegenerateDesign("path design has the wrong number of positions");
        const std::size_t q = positions.front().size();
        for (std::size_t p = 0; p < positions.size(); ++p) {
            if (positions[p].size() != q) throw DegenerateDesign("label vectors differ in length");
            for (int l : positions[p]) {
                if (l < 0 || l >= position_k[p]) throw DegenerateDesign("label out of range");
            }
            for (int size : block_sizes(positions[p], position_k[p])) {
                if (size == 0) throw DegenerateDesign("empty community at position " + std::to_string(p + 1));
            }
        }
    }
};

/// Path from explicit position label vectors.
inline PathDesign make_path_design(ChainKind kind, std::vector<Labels> positions) {
    PathDesign d;
    d.kind = kind;
    d.stages = kind == ChainKind::pvar_cyclic ? positions.size() : kVharStages;
    for (const auto& p : positions) d.position_k.push_back(label_count(p));
    d.positions = std::move(positions);
    d.validate();
    return d;
}

/// Path with contiguous, as-equal-as-possible blocks at each position.
inline PathDesign make_path_design(ChainKind kind, int q, const std::vector<int>& counts) {
    std::vector<Labels> positions;
    for (int k : counts) positions.push_back(contiguous_labels(q, k));
    PathDesign d = make_path_design(kind, std::move(positions));
    d.position_k = counts;
    d.validate();
    return d;
}

/// Named path shapes. PVAR (s = 4): path1 static with four communities,
/// path2 2->3->3->2, path3 2->2->3->4. VHAR positions
/// {LS = LR/MS, MR/SS, SR}: path1 static with three communities,
/// path2 2->2->3->2, path3 3->3->2->2.
inline std::vector<int> path_preset_counts(ChainKind kind, const std::string& name) {
    if (kind == ChainKind::pvar_cyclic) {
        if (name == "path1") return {4, 4, 4, 4};
        if (name == "path2") return {2, 3, 3, 2};
        if (name == "path3") return {2, 2, 3, 4};
    } else {
        if (name == "path1") return {3, 3, 3};
        if (name == "path2") return {2, 3, 2};
        if (name == "path3") return {3, 2, 2};
    }
    throw ConfigError("unknown path preset '" + name + "'");
}

inline PathDesign path_preset(ChainKind kind, const std::string& name, int q) {
    return make_path_design(kind, q, path_preset_counts(kind, name));
}

/// Degree-corrected co-block parameters for one stage.
struct ScbmParams {
    Matrix b;         ///< K_y x K_z link probabilities
    Vector theta_y;   ///< sending propensities, summing to 1 within each block
    Vector theta_z;   ///< receiving propensities, summing to 1 within each block
    double mu = 1.0;
    double w_max = 1.0;

    void validate(const Labels& y, const Labels& z) const {
        if ((b.array() < 0.0).any() || (b.array() > 1.0).any()) throw DomainError("link probabilities must lie in [0, 1]");
        if ((theta_y.array() <= 0.0).any() || (theta_z.array() <= 0.0).any())
            throw DomainError("propensities must be positive");
        if (mu <= 0.0) throw DomainError("scale must be positive");
        auto check_sums = [](const Vector& theta, const Labels& labels, Eigen::Index k) {
            Vector sums = Vector::Zero(k);
            for (std::size_t i = 0; i < labels.size(); ++i) sums(labels[i]) += theta(static_cast<Eigen::Index>(i));
            if (((sums.array() - 1.0).abs() > 1e-10).any()) throw DomainError("propensities must sum to 1 per block");
        };
        check_sums(theta_y, y, b.rows());
        check_sums(theta_z, z, b.cols());
    }
};

/// Population adjacency mu * Theta_y Y B Z' Theta_z (rows send).
inline Matrix population_adjacency(const ScbmParams& p, const Labels& y, const Labels& z) {
    p.validate(y, z);
    const auto q = static_cast<Eigen::Index>(y.size());
    Matrix a(q, q);
    for (Eigen::Index i = 0; i < q; ++i)
        for (Eigen::Index j = 0; j < q; ++j)
            a(i, j) = p.mu * p.theta_y(i) * p.theta_z(j) * p.b(y[static_cast<std::size_t>(i)], z[static_cast<std::size_t>(j)]);
    return a;
}

// ---------------------------------------------------------------------------
// Simulation-design constants
// ---------------------------------------------------------------------------

/// Seasonal coefficient magnitudes and expected support per row.
struct PvarTypeParams {
    double a_self, a_diag, a_upper, a_lower;
    double kappa_diag, kappa_upper, kappa_lower;
};

inline PvarTypeParams pvar_type_params(int type_id) {
    if (type_id == 1) return {0.30, 0.14, 0.04, 0.06, 2.6, 0.6, 0.9};
    if (type_id == 2) return {0.28, 0.12, 0.05, 0.07, 2.2, 0.7, 1.3};
    throw ConfigError("PVAR type must be 1 or 2");
}

/// Block probabilities per horizon, indexed short, medium, long.
struct VharTypeParams {
    std::array<double, 3> p_diag, p_upper, p_lower;
};

inline VharTypeParams vhar_type_params(int type_id) {
    if (type_id == 1) return {{0.95, 0.93, 0.91}, {0.02, 0.03, 0.04}, {0.02, 0.03, 0.04}};
    if (type_id == 2) return {{0.92, 0.90, 0.88}, {0.05, 0.06, 0.07}, {0.08, 0.09, 0.10}};
    throw ConfigError("VHAR type must be 1 or 2");
}

inline constexpr double kTargetSigmaMax = 0.90;
inline constexpr double kInnovationVariance = 0.5;
inline constexpr int kStabilityRetries = 20;
inline constexpr double kDivergenceGuard = 1e8;
inline constexpr int kPvarBurnin = 500;
inline constexpr int kVharBurnin = 300;

/// Horizon scale constants (c_S, c_M, c_L).
inline std::array<double, 3> vhar_scale_constants(int b_m, int b_l) {
    return {0.34, 0.28 * std::sqrt(static_cast<double>(b_m)), 0.24 * std::sqrt(static_cast<double>(b_l))};
}

// ---------------------------------------------------------------------------
// Systems
// ---------------------------------------------------------------------------

/// How transitions were derived from adjacencies.
/// degree_normalized: transitions[m] = degree_normalize(adjacencies[m], phis[m]).
/// direct: transitions[m] = phis[m] * adjacencies[m]' (the simulation designs
/// draw coefficient magnitudes directly on the support).
enum class Embedding { degree_normalized, direct };

struct ScbmSystem {
    ChainKind kind = ChainKind::pvar_cyclic;
    PathDesign design;
    Embedding embedding = Embedding::direct;
    /// Weighted graphs, sender rows and receiver columns.
    std::vector<Matrix> adjacencies;
    std::vector<double> phis;
    /// VAR transitions (rows receivers). PVAR: one per season. VHAR: Phi_(L),
    /// Phi_(M), Phi_(S) in that order.
    std::vector<Matrix> transitions;
    Vector innovation_variance;
    std::uint64_t seed = 0;
    int type_id = 0;
    int seasons = 0;
    int lag_order = 1;
    int b_m = 0;
    int b_l = 0;

    [[nodiscard]] int dimension() const { return static_cast<int>(transitions.front().rows()); }
    [[nodiscard]] std::size_t stages() const { return transitions.size(); }
};

/// (Phi_S, Phi_M, Phi_L) -> the b_L lag matrices of the equivalent VAR(b_L).
inline std::vector<Matrix> expand_vhar(const Matrix& phi_s, const Matrix& phi_m, const Matrix& phi_l,
                                       int b_m, int b_l) {
    if (!(1 < b_m && b_m < b_l)) throw DomainError("horizon lengths must satisfy 1 < b_M < b_L");
    const Matrix long_part = phi_l / b_l;
    const Matrix medium_part = phi_m / b_m + long_part;
    std::vector<Matrix> lags;
    lags.reserve(static_cast<std::size_t>(b_l));
    lags.push_back(phi_s + medium_part);
    for (int h = 2; h <= b_m; ++h) lags.push_back(medium_part);
    for (int h = b_m + 1; h <= b_l; ++h) lags.push_back(long_part);
    return lags;
}

inline Matrix companion_matrix(const std::vector<Matrix>& lags) {
    if (lags.empty()) throw DomainError("companion form needs at least one lag");
    const Eigen::Index q = lags.front().rows();
    const auto p = static_cast<Eigen::Index>(lags.size());
    Matrix c = Matrix::Zero(p * q, p * q);
    for (Eigen::Index h = 0; h < p; ++h) c.block(0, h * q, q, q) = lags[static_cast<std::size_t>(h)];
    if (p > 1) c.block(q, 0, (p - 1) * q, (p - 1) * q).setIdentity();
    return c;
}

/// Largest eigenvalue modulus of the VAR(p) companion matrix.
inline double companion_spectral_radius(const std::vector<Matrix>& lags) {
    const Matrix c = companion_matrix(lags);
    Eigen::EigenSolver<Matrix> solver(c, false);
    if (solver.info() != Eigen::Success) throw EigenFailure("eigenvalue solver did not converge");
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

/// Lag matrices of the stacked-cycle VAR(p*) for a periodic VAR whose season
/// m (0-based, row 0 of a cycle is season 0) has lags lags_by_season[m].
/// The stacked vector lists the cycle newest first.
inline std::vector<Matrix> pvar_stacked_lags(const std::vector<std::vector<Matrix>>& lags_by_season) {
    const auto s = static_cast<Eigen::Index>(lags_by_season.size());
    if (s < 1) throw DomainError("need at least one season");
    const Eigen::Index q = lags_by_season.front().front().rows();
    std::size_t p = 0;
    for (const auto& l : lags_by_season) p = std::max(p, l.size());
    const auto p_star = static_cast<Eigen::Index>((p + static_cast<std::size_t>(s) - 1) / static_cast<std::size_t>(s));
    const Eigen::Index width = q * s * p_star;

    // coef[tau-1]: Y_{ns+tau} in terms of (Y_{ns}, Y_{ns-1}, ...).
    std::vector<Matrix> coef;
    for (Eigen::Index tau = 1; tau <= s; ++tau) {
        Matrix row = Matrix::Zero(q, width);
        const auto& lags = lags_by_season[static_cast<std::size_t>(tau - 1)];
        for (std::size_t hh = 0; hh < lags.size(); ++hh) {
            const auto h = static_cast<Eigen::Index>(hh + 1);
            if (tau - h >= 1) {
                row += lags[hh] * coef[static_cast<std::size_t>(tau - h - 1)];
            } else {
                row.middleCols((h - tau) * q, q) += lags[hh];
            }
        }
        coef.push_back(std::move(row));
    }
    Matrix stacked(q * s, width);
    for (Eigen::Index tau = 1; tau <= s; ++tau) stacked.middleRows((s - tau) * q, q) = coef[static_cast<std::size_t>(tau - 1)];
    std::vector<Matrix> out;
    for (Eigen::Index j = 0; j < p_star; ++j) out.push_back(stacked.middleCols(j * q * s, q * s));
    return out;
}

/// Lag matrices per seasonal phase used by the recursion.
inline std::vector<std::vector<Matrix>> system_lags_by_phase(const ScbmSystem& sys) {
    if (sys.kind == ChainKind::pvar_cyclic) {
        std::vector<std::vector<Matrix>> out;
        for (const auto& t : sys.transitions) out.push_back({t});
        return out;
    }
    return {expand_vhar(sys.transitions[2], sys.transitions[1], sys.transitions[0], sys.b_m, sys.b_l)};
}

/// Companion spectral radius of the whole system (stacked cycle for PVAR,
/// VAR(b_L) form for VHAR).
inline double system_spectral_radius(const ScbmSystem& sys) {
    const auto lags = system_lags_by_phase(sys);
    if (sys.kind == ChainKind::pvar_cyclic) return companion_spectral_radius(pvar_stacked_lags(lags));
    return companion_spectral_radius(lags.front());
}

/// Product Phi_s ... Phi_1 of the seasonal transitions.
inline Matrix seasonal_product(const std::vector<Matrix>& transitions) {
    Matrix prod = Matrix::Identity(transitions.front().rows(), transitions.front().cols());
    for (const auto& t : transitions) prod = t * prod;
    return prod;
}

/// Population route: transitions from adjacencies through degree_normalize.
inline ScbmSystem build_scbm_system(const PathDesign& design, std::vector<Matrix> adjacencies,
                                    std::vector<double> phis, Vector innovation_variance,
                                    int b_m = 0, int b_l = 0) {
    design.validate();
    if (adjacencies.size() != design.stages || phis.size() != design.stages)
        throw ShapeMismatch("one adjacency and one phi per stage required");
    ScbmSystem sys;
    sys.kind = design.kind;
    sys.design = design;
    sys.embedding = Embedding::degree_normalized;
    for (std::size_t m = 0; m < adjacencies.size(); ++m)
        sys.transitions.push_back(degree_normalize(adjacencies[m], phis[m]));
    sys.adjacencies = std::move(adjacencies);
    sys.phis = std::move(phis);
    sys.innovation_variance = std::move(innovation_variance);
    sys.seasons = design.kind == ChainKind::pvar_cyclic ? static_cast<int>(design.stages) : 0;
    sys.b_m = b_m;
    sys.b_l = b_l;
    return sys;
}

namespace detail {

inline double uniform(Philox4x32& g, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(g);
}

inline bool bernoulli(Philox4x32& g, double p) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(g) < p;
}

/// Stationary covariance of the companion state by the doubling iteration.
inline Matrix stationary_state_covariance(const Matrix& companion, const Matrix& shock_cov) {
    Matrix sigma = shock_cov;
    Matrix a = companion;
    for (int it = 0; it < 64; ++it) {
        const Matrix incr = a * sigma * a.transpose();
        sigma += incr;
        if (incr.cwiseAbs().maxCoeff() <= 1e-15 * std::max(1.0, sigma.cwiseAbs().maxCoeff())) break;
        a = a * a;
    }
    return sigma;
}

}  // namespace detail

/// Mean stationary marginal variance of the observed series.
inline double mean_marginal_variance(const ScbmSystem& sys) {
    const int q = sys.dimension();
    if (sys.kind == ChainKind::vhar_linear) {
        const Matrix c = companion_matrix(system_lags_by_phase(sys).front());
        Matrix shock = Matrix::Zero(c.rows(), c.cols());
        shock.topLeftCorner(q, q) = sys.innovation_variance.asDiagonal();
        return detail::stationary_state_covariance(c, shock).topLeftCorner(q, q).diagonal().mean();
    }
    // Periodic: average over seasons of the periodically stationary variance.
    const std::size_t s = sys.transitions.size();
    const Matrix e = sys.innovation_variance.asDiagonal();
    const Matrix prod = seasonal_product(sys.transitions);
    // Cycle-level shock covariance at the end of a cycle.
    Matrix shock = Matrix::Zero(q, q);
    for (std::size_t m = 0; m < s; ++m) shock = sys.transitions[m] * shock * sys.transitions[m].transpose() + e;
    Matrix v = detail::stationary_state_covariance(prod, shock);  // variance at the last season
    double total = 0.0;
    for (std::size_t m = 0; m < s; ++m) {
        v = sys.transitions[m] * v * sys.transitions[m].transpose() + e;
        total += v.diagonal().mean();
    }
    return total / static_cast<double>(s);
}

struct SamplerOptions {
    int retries = kStabilityRetries;
    double innovation_variance = kInnovationVariance;
    /// Rescale innovations afterwards so the mean stationary marginal variance
    /// equals innovation_variance.
    bool match_marginal_variance = false;
};

/// Seasonal ScBM-PVAR(1) system following the sparse simulation design:
/// Bernoulli support with O(1) expected off-diagonal entries per row, own-lag
/// diagonal always present, block-position magnitudes, and one common factor
/// so that sigma_max(Phi_s ... Phi_1) = 0.90.
inline ScbmSystem sample_pvar_system(int q, const PathDesign& design, int type_id, std::uint64_t seed,
                                     const SamplerOptions& opts = {}) {
    if (design.kind != ChainKind::pvar_cyclic) throw ConfigError("PVAR sampler needs a cyclic path");
    design.validate();
    if (design.dimension() != q) throw DegenerateDesign("path dimension differs from q");
    const PvarTypeParams tp = pvar_type_params(type_id);
    const std::size_t s = design.stages;

    for (int attempt = 0; attempt < opts.retries; ++attempt) {
        ScbmSystem sys;
        sys.kind = ChainKind::pvar_cyclic;
        sys.design = design;
        sys.embedding = Embedding::direct;
        sys.seed = seed;
        sys.type_id = type_id;
        sys.seasons = static_cast<int>(s);
        sys.innovation_variance = Vector::Constant(q, opts.innovation_variance);

        for (std::size_t m = 0; m < s; ++m) {
            auto g = make_stream(seed, StreamPurpose::network, {static_cast<std::uint64_t>(attempt), m});
            const Labels& y = design.y(m);
            const Labels& z = design.z(m);
            const auto recv_sizes = block_sizes(z, design.position_k[stage_positions(design.kind, m, s).second]);
            Matrix w = Matrix::Zero(q, q);
            for (int i = 0; i < q; ++i) {
                for (int j = 0; j < q; ++j) {
                    if (i == j) {
                        w(i, j) = tp.a_self * detail::uniform(g, 0.95, 1.05);
                        continue;
                    }
                    const int k = y[static_cast<std::size_t>(i)];
                    const int r = z[static_cast<std::size_t>(j)];
                    const double kappa = k == r ? tp.kappa_diag : (k < r ? tp.kappa_upper : tp.kappa_lower);
                    const double denom = recv_sizes[static_cast<std::size_t>(r)] - (k == r ? 1.0 : 0.0);
                    const double pi = denom > 0.0 ? std::min(kappa / denom, 0.95) : 0.95;
                    if (!detail::bernoulli(g, pi)) continue;
                    const double a = k == r ? tp.a_diag : (k < r ? tp.a_upper : tp.a_lower);
                    w(i, j) = a * detail::uniform(g, 0.90, 1.10);
                }
            }
            sys.adjacencies.push_back(std::move(w));
        }
        std::vector<Matrix> raw;
        for (const auto& w : sys.adjacencies) raw.push_back(w.transpose());
        const double sigma = spectral_norm(seasonal_product(raw));
        if (!(sigma > 0.0)) continue;
        const double c = std::pow(kTargetSigmaMax / sigma, 1.0 / static_cast<double>(s));
        for (std::size_t m = 0; m < s; ++m) {
            sys.phis.push_back(c);
            sys.transitions.push_back(c * raw[m]);
        }
        if (std::abs(spectral_norm(seasonal_product(sys.transitions)) - kTargetSigmaMax) > 1e-10) continue;
        if (system_spectral_radius(sys) >= 1.0 - 1e-6) continue;
        if (opts.match_marginal_variance) {
            const double v = mean_marginal_variance(sys);
            sys.innovation_variance *= opts.innovation_variance / v;
        }
        return sys;
    }
    throw StabilityFailure("no stable PVAR system after " + std::to_string(opts.retries) + " attempts");
}

/// Generalized ScBM-VHAR system (stages long, medium, short). Block-Bernoulli
/// supports normalized by sender-block size, scaled by (c_S, c_M, c_L) and a
/// common factor so that sigma_max of the horizon sum is 0.90.
inline ScbmSystem sample_vhar_system(int q, const PathDesign& design, int type_id, int b_m, int b_l,
                                     std::uint64_t seed, const SamplerOptions& opts = {}) {
    if (design.kind != ChainKind::vhar_linear) throw ConfigError("VHAR sampler needs a linear path");
    if (!(1 < b_m && b_m < b_l)) throw DomainError("horizon lengths must satisfy 1 < b_M < b_L");
    design.validate();
    if (design.dimension() != q) throw DegenerateDesign("path dimension differs from q");
    const VharTypeParams tp = vhar_type_params(type_id);
    const auto scale = vhar_scale_constants(b_m, b_l);

    for (int attempt = 0; attempt < opts.retries; ++attempt) {
        ScbmSystem sys;
        sys.kind = ChainKind::vhar_linear;
        sys.design = design;
        sys.embedding = Embedding::direct;
        sys.seed = seed;
        sys.type_id = type_id;
        sys.b_m = b_m;
        sys.b_l = b_l;
        sys.innovation_variance = Vector::Constant(q, opts.innovation_variance);

        std::vector<Matrix> scaled;
        Matrix total = Matrix::Zero(q, q);
        for (std::size_t stage = 0; stage < kVharStages; ++stage) {
            const std::size_t h = 2 - stage;  // horizon index: 0 short, 1 medium, 2 long
            auto g = make_stream(seed, StreamPurpose::network, {static_cast<std::uint64_t>(attempt), stage});
            const Labels& y = design.y(stage);
            const Labels& z = design.z(stage);
            const auto send_sizes = block_sizes(y, label_count(y));
            Matrix a_norm = Matrix::Zero(q, q);
            for (int i = 0; i < q; ++i) {
                const int k = y[static_cast<std::size_t>(i)];
                for (int j = 0; j < q; ++j) {
                    const int r = z[static_cast<std::size_t>(j)];
                    double p = k == r ? tp.p_diag[h] : (k < r ? tp.p_upper[h] : tp.p_lower[h]);
                    p = std::clamp(p, 0.001, 0.995);
                    if (detail::bernoulli(g, p)) a_norm(i, j) = 1.0 / send_sizes[static_cast<std::size_t>(k)];
                }
            }
            scaled.push_back(scale[h] * a_norm);
            total += scaled.back();
            sys.adjacencies.push_back(std::move(a_norm));
        }
        const double sigma = spectral_norm(total);
        if (!(sigma > 0.0)) continue;
        const double a = kTargetSigmaMax / sigma;
        for (std::size_t stage = 0; stage < kVharStages; ++stage) {
            sys.phis.push_back(a * scale[2 - stage]);
            sys.transitions.push_back(sys.phis.back() * sys.adjacencies[stage].transpose());
        }
        const Matrix sum = sys.transitions[0] + sys.transitions[1] + sys.transitions[2];
        if (std::abs(spectral_norm(sum) - kTargetSigmaMax) > 1e-10) continue;
        if (system_spectral_radius(sys) >= 1.0 - 1e-6) continue;
        if (opts.match_marginal_variance) {
            const double v = mean_marginal_variance(sys);
            sys.innovation_variance *= opts.innovation_variance / v;
        }
        return sys;
    }
    throw StabilityFailure("no stable VHAR system after " + std::to_string(opts.retries) + " attempts");
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

struct SimulationOptions {
    Eigen::Index burnin = 0;
    /// Pre-sample history, oldest row first; missing rows are zero.
    std::optional<Matrix> initial;
};

/// Iterates Y_t = sum_h Phi_{h,phase(t)} Y_{t-h} + e_t with Gaussian e_t and
/// returns the last T rows. Row 0 of the output has phase 0.
inline TimeSeriesPanel simulate_periodic(const std::vector<std::vector<Matrix>>& lags_by_phase,
                                         const Vector& variance, Eigen::Index length, std::uint64_t seed,
                                         const SimulationOptions& opts = {}) {
    if (length < 1) throw LengthError("simulation length must be positive");
    if (opts.burnin < 0) throw LengthError("burn-in must be non-negative");
    const auto s = static_cast<Eigen::Index>(lags_by_phase.size());
    const Eigen::Index q = variance.size();
    std::size_t max_lag = 0;
    for (const auto& l : lags_by_phase) max_lag = std::max(max_lag, l.size());
    const auto hist = static_cast<Eigen::Index>(max_lag);
    const Eigen::Index total = opts.burnin + length;

    Matrix y = Matrix::Zero(hist + total, q);
    if (opts.initial) {
        const Matrix& init = *opts.initial;
        const Eigen::Index rows = std::min(hist, init.rows());
        y.middleRows(hist - rows, rows) = init.bottomRows(rows);
    }
    const Vector sd = variance.cwiseSqrt();
    auto g = make_stream(seed, StreamPurpose::innovations);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector next(q);
    for (Eigen::Index t = 0; t < total; ++t) {
        const Eigen::Index phase = ((t - opts.burnin) % s + s) % s;
        const auto& lags = lags_by_phase[static_cast<std::size_t>(phase)];
        for (Eigen::Index i = 0; i < q; ++i) next(i) = sd(i) * normal(g);
        for (std::size_t h = 0; h < lags.size(); ++h)
            next.noalias() += lags[h] * y.row(hist + t - 1 - static_cast<Eigen::Index>(h)).transpose();
        if (next.cwiseAbs().maxCoeff() > kDivergenceGuard || !next.allFinite())
            throw StabilityFailure("trajectory diverged at step " + std::to_string(t));
        y.row(hist + t) = next.transpose();
    }
    TimeSeriesPanel panel = TimeSeriesPanel::from_matrix(y.bottomRows(length), 0, s > 1 ? static_cast<int>(s) : 0);
    return panel;
}

inline TimeSeriesPanel simulate_pvar(const ScbmSystem& sys, Eigen::Index length, Eigen::Index burnin,
                                     std::uint64_t seed, std::optional<Matrix> initial = std::nullopt) {
    if (sys.kind != ChainKind::pvar_cyclic) throw ConfigError("simulate_pvar needs a PVAR system");
    const auto s = static_cast<Eigen::Index>(sys.transitions.size());
    if (length % s != 0)
        std::clog << "warning: simulated length " << length << " is not a multiple of " << s << " seasons\n";
    return simulate_periodic(system_lags_by_phase(sys), sys.innovation_variance, length, seed,
                             {burnin, std::move(initial)});
}

inline TimeSeriesPanel simulate_vhar(const ScbmSystem& sys, Eigen::Index length, Eigen::Index burnin,
                                     std::uint64_t seed, std::optional<Matrix> initial = std::nullopt) {
    if (sys.kind != ChainKind::vhar_linear) throw ConfigError("simulate_vhar needs a VHAR system");
    return simulate_periodic(system_lags_by_phase(sys), sys.innovation_variance, length, seed,
                             {burnin, std::move(initial)});
}

inline TimeSeriesPanel simulate(const ScbmSystem& sys, Eigen::Index length, Eigen::Index burnin,
                                std::uint64_t seed) {
    return sys.kind == ChainKind::pvar_cyclic ? simulate_pvar(sys, length, burnin, seed)
                                              : simulate_vhar(sys, length, burnin, seed);
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline json path_design_to_json(const PathDesign& d) {
    json positions = json::array();
    for (const auto& p : d.positions) positions.push_back(labels_to_json(p));
    return {{"kind", to_string(d.kind)}, {"stages", d.stages}, {"position_k", d.position_k},
            {"positions", positions}};
}

inline PathDesign path_design_from_json(const json& j) {
    PathDesign d;
    d.kind = chain_kind_from_string(j.at("kind").get<std::string>());
    d.stages = j.at("stages").get<std::size_t>();
    d.position_k = j.at("position_k").get<std::vector<int>>();
    for (const auto& p : j.at("positions")) d.positions.push_back(labels_from_json(p));
    d.validate();
    return d;
}

inline json system_to_json(const ScbmSystem& sys) {
    json adj = json::array();
    for (const auto& a : sys.adjacencies) adj.push_back(matrix_to_json(a));
    json variance = json::array();
    for (Eigen::Index i = 0; i < sys.innovation_variance.size(); ++i) variance.push_back(sys.innovation_variance(i));
    return {{"schema", kSchemaVersion},
            {"kind", to_string(sys.kind)},
            {"design", path_design_to_json(sys.design)},
            {"embedding", sys.embedding == Embedding::direct ? "direct" : "degree_normalized"},
            {"adjacencies", adj},
            {"phis", sys.phis},
            {"innovation_variance", variance},
            {"seed", sys.seed},
            {"type_id", sys.type_id},
            {"seasons", sys.seasons},
            {"lag_order", sys.lag_order},
            {"b_M", sys.b_m},
            {"b_L", sys.b_l}};
}

/// Rebuilds transitions from adjacencies and phis.
inline ScbmSystem system_from_json(const json& j) {
    ScbmSystem sys;
    sys.kind = chain_kind_from_string(j.at("kind").get<std::string>());
    sys.design = path_design_from_json(j.at("design"));
    sys.embedding = j.at("embedding").get<std::string>() == "direct" ? Embedding::direct : Embedding::degree_normalized;
    for (const auto& a : j.at("adjacencies")) sys.adjacencies.push_back(matrix_from_json(a));
    sys.phis = j.at("phis").get<std::vector<double>>();
    const auto var = j.at("innovation_variance").get<std::vector<double>>();
    sys.innovation_variance = Eigen::Map<const Vector>(var.data(), static_cast<Eigen::Index>(var.size()));
    sys.seed = j.at("seed").get<std::uint64_t>();
    sys.type_id = j.at("type_id").get<int>();
    sys.seasons = j.at("seasons").get<int>();
    sys.lag_order = j.value("lag_order", 1);
    sys.b_m = j.at("b_M").get<int>();
    sys.b_l = j.at("b_L").get<int>();
    for (std::size_t m = 0; m < sys.adjacencies.size(); ++m) {
        sys.transitions.push_back(sys.embedding == Embedding::direct
                                      ? Matrix(sys.phis[m] * sys.adjacencies[m].transpose())
                                      : degree_normalize(sys.adjacencies[m], sys.phis[m]));
    }
    return sys;
}

}  // namespace scbm
