#pragma once

#include "scbm/core.hpp"
#include "scbm/estimator.hpp"
#include "scbm/json_io.hpp"
#include "scbm/rng.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace scbm {

/// Upper bound for the smoothing parameter, 1 / (4 sqrt 2 + 2).
inline const double kAlphaMax = 1.0 / (4.0 * std::sqrt(2.0) + 2.0);

inline constexpr double kEigengapTolerance = 1e-12;
inline constexpr double kZeroRowTolerance = 1e-12;

// ---------------------------------------------------------------------------
// Spectral primitives
// ---------------------------------------------------------------------------

struct TruncatedSvd {
    Matrix left;     ///< q x K
    Vector values;   ///< descending
    Matrix right;    ///< q x K
};

/// Top-K singular triplets. Each left vector has its largest-magnitude entry
/// positive; the matching right vector is flipped with it.
inline TruncatedSvd truncated_svd(const Matrix& m, int k) {
    if (k < 1 || k > std::min(m.rows(), m.cols())) throw DomainError("rank must satisfy 1 <= K <= q");
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.info() != Eigen::Success) throw ConvergenceFailure("singular value decomposition failed");
    TruncatedSvd out{svd.matrixU().leftCols(k), svd.singularValues().head(k), svd.matrixV().leftCols(k)};
    for (int c = 0; c < k; ++c) {
        Eigen::Index idx = 0;
        out.left.col(c).cwiseAbs().maxCoeff(&idx);
        if (out.left(idx, c) < 0.0) {
            out.left.col(c) *= -1.0;
            out.right.col(c) *= -1.0;
        }
    }
    return out;
}

struct NormalizedRows {
    Matrix rows;
    std::vector<Eigen::Index> zero_rows;
};

inline NormalizedRows row_normalize(const Matrix& x) {
    NormalizedRows out{x, {}};
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double n = x.row(i).norm();
        if (n < kZeroRowTolerance) {
            out.rows.row(i).setZero();
            out.zero_rows.push_back(i);
        } else {
            out.rows.row(i) /= n;
        }
    }
    return out;
}

/// Orthonormal eigenvectors of the K largest eigenvalues of a symmetric matrix,
/// sign-fixed like truncated_svd.
inline Matrix top_eigenvectors(const Matrix& m, int k) {
    const Eigen::Index q = m.rows();
    if (m.cols() != q) throw ShapeMismatch("matrix must be square");
    if (k < 1 || k > q) throw DomainError("rank must satisfy 1 <= K <= q");
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10) throw DomainError("matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
    if (eig.info() != Eigen::Success) throw ConvergenceFailure("symmetric eigensolver failed");
    const Vector& ev = eig.eigenvalues();  // ascending
    if (k < q && ev(q - k) - ev(q - k - 1) <= kEigengapTolerance)
        throw DegenerateGap("eigengap at K = " + std::to_string(k) + " is below tolerance");
    Matrix v = eig.eigenvectors().rightCols(k).rowwise().reverse();
    for (int c = 0; c < k; ++c) {
        Eigen::Index idx = 0;
        v.col(c).cwiseAbs().maxCoeff(&idx);
        if (v(idx, c) < 0.0) v.col(c) *= -1.0;
    }
    return v;
}

inline Matrix top_eigprojector(const Matrix& m, int k) {
    const Matrix v = top_eigenvectors(m, k);
    return v * v.transpose();
}

// ---------------------------------------------------------------------------
// Stage spectra and smoothing
// ---------------------------------------------------------------------------

/// Per stage: left factor (K_y columns), right factor (K_z columns), their
/// projectors and the leading singular values.
struct StageSpectra {
    std::vector<Matrix> left;
    std::vector<Matrix> right;
    std::vector<Vector> values;
    std::vector<Matrix> left_projectors;
    std::vector<Matrix> right_projectors;

    [[nodiscard]] std::size_t stages() const { return left.size(); }
};

inline StageSpectra stage_spectra(const std::vector<Matrix>& matrices, const std::vector<RankPair>& ranks) {
    if (matrices.size() != ranks.size()) throw ShapeMismatch("one rank pair per stage matrix required");
    StageSpectra sp;
    for (std::size_t m = 0; m < matrices.size(); ++m) {
        const int k = std::max(ranks[m].k_y, ranks[m].k_z);
        const TruncatedSvd t = truncated_svd(matrices[m], k);
        sp.left.push_back(t.left.leftCols(ranks[m].k_y));
        sp.right.push_back(t.right.leftCols(ranks[m].k_z));
        sp.values.push_back(t.values);
        sp.left_projectors.push_back(sp.left.back() * sp.left.back().transpose());
        sp.right_projectors.push_back(sp.right.back() * sp.right.back().transpose());
    }
    return sp;
}

struct PiscesOptions {
    double tol = 1e-6;
    int max_iter = 200;
};

/// One Jacobi sweep of the linear-chain update for a single projector chain.
inline std::vector<Matrix> pisces_sweep(const std::vector<Matrix>& base, const std::vector<Matrix>& current,
                                        const std::vector<int>& ranks, double alpha) {
    const std::size_t s = base.size();
    std::vector<Matrix> next(s);
    for (std::size_t m = 0; m < s; ++m) {
        Matrix acc = base[m];
        if (m > 0) acc += alpha * current[m - 1];
        if (m + 1 < s) acc += alpha * current[m + 1];
        next[m] = top_eigprojector(acc, ranks[m]);
    }
    return next;
}

/// Sum over stages of Frobenius distances.
inline double chain_distance(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
    double d = 0.0;
    for (std::size_t m = 0; m < a.size(); ++m) d += (a[m] - b[m]).norm();
    return d;
}

struct SmoothedChain {
    StageSpectra spectra;  ///< smoothed factors and projectors
    int iterations = 0;
    double final_change = 0.0;
    bool converged = true;
    std::vector<double> changes;
};

/// PisCES smoothing of the left and right projector chains. With alpha = 0 or
/// a single stage the input spectra are returned untouched.
inline SmoothedChain pisces_smooth(const StageSpectra& sp, const std::vector<RankPair>& ranks, double alpha,
                                   const PiscesOptions& opts = {}) {
    if (!(alpha >= 0.0 && alpha < kAlphaMax))
        throw DomainError("alpha must lie in [0, " + std::to_string(kAlphaMax) + ")");
    SmoothedChain out;
    out.spectra = sp;
    if (alpha == 0.0 || sp.stages() < 2) return out;

    std::vector<int> ky, kz;
    for (const auto& r : ranks) {
        ky.push_back(r.k_y);
        kz.push_back(r.k_z);
    }
    std::vector<Matrix> ul = sp.left_projectors, ur = sp.right_projectors;
    out.converged = false;
    for (int it = 1; it <= opts.max_iter; ++it) {
        auto nl = pisces_sweep(sp.left_projectors, ul, ky, alpha);
        auto nr = pisces_sweep(sp.right_projectors, ur, kz, alpha);
        const double change = chain_distance(nl, ul) + chain_distance(nr, ur);
        ul = std::move(nl);
        ur = std::move(nr);
        out.iterations = it;
        out.final_change = change;
        out.changes.push_back(change);
        if (change < opts.tol) {
            out.converged = true;
            break;
        }
    }
    for (std::size_t m = 0; m < sp.stages(); ++m) {
        out.spectra.left[m] = top_eigenvectors(ul[m], ky[m]);
        out.spectra.right[m] = top_eigenvectors(ur[m], kz[m]);
        out.spectra.left_projectors[m] = out.spectra.left[m] * out.spectra.left[m].transpose();
        out.spectra.right_projectors[m] = out.spectra.right[m] * out.spectra.right[m].transpose();
    }
    return out;
}

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

struct KmeansOptions {
    int restarts = 20;
    int max_iter = 100;
};

struct KmeansResult {
    Labels labels;
    Matrix centroids;
    double wcss = 0.0;
};

namespace detail {

inline double uniform01(Philox4x32& g) {
    return (static_cast<double>(g() >> 5) * 67108864.0 + static_cast<double>(g() >> 6)) / 9007199254740992.0;
}

inline int nearest(const Matrix& centroids, const Eigen::Ref<const Eigen::RowVectorXd>& x, double* dist) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
        const double d = (centroids.row(c) - x).squaredNorm();
        if (d < bd) {
            bd = d;
            best = static_cast<int>(c);
        }
    }
    if (dist) *dist = bd;
    return best;
}

inline Matrix kmeanspp_seed(const Matrix& x, int k, Philox4x32& g) {
    const Eigen::Index n = x.rows();
    Matrix c(k, x.cols());
    auto first = static_cast<Eigen::Index>(uniform01(g) * static_cast<double>(n));
    c.row(0) = x.row(std::min(first, n - 1));
    Vector d2(n);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = (x.row(i) - c.row(0)).squaredNorm();
    for (int j = 1; j < k; ++j) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            const double u = uniform01(g) * total;
            double acc = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2(i);
                if (u < acc) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = std::min(static_cast<Eigen::Index>(uniform01(g) * static_cast<double>(n)), n - 1);
        }
        c.row(j) = x.row(pick);
        for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (x.row(i) - c.row(j)).squaredNorm());
    }
    return c;
}

inline KmeansResult lloyd(const Matrix& x, Matrix centroids, int max_iter) {
    const Eigen::Index n = x.rows();
    const int k = static_cast<int>(centroids.rows());
    KmeansResult r;
    r.labels.assign(static_cast<std::size_t>(n), -1);
    Vector dist(n);
    for (int it = 0; it < max_iter; ++it) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            const int l = nearest(centroids, x.row(i), &dist(i));
            if (l != r.labels[static_cast<std::size_t>(i)]) {
                r.labels[static_cast<std::size_t>(i)] = l;
                changed = true;
            }
        }
        if (!changed && it > 0) break;
        Matrix sums = Matrix::Zero(k, x.cols());
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int l = r.labels[static_cast<std::size_t>(i)];
            sums.row(l) += x.row(i);
            ++counts[static_cast<std::size_t>(l)];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
                continue;
            }
            // Empty cluster: move it to the point farthest from its centroid.
            Eigen::Index far = 0;
            dist.maxCoeff(&far);
            centroids.row(c) = x.row(far);
            dist(far) = 0.0;
            const int old = r.labels[static_cast<std::size_t>(far)];
            --counts[static_cast<std::size_t>(old)];
            r.labels[static_cast<std::size_t>(far)] = c;
            counts[static_cast<std::size_t>(c)] = 1;
            changed = true;
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) r.labels[static_cast<std::size_t>(i)] = nearest(centroids, x.row(i), &dist(i));
    r.wcss = dist.sum();
    r.centroids = std::move(centroids);
    return r;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding; best of several restarts by
/// within-cluster sum of squares.
inline KmeansResult kmeans(const Matrix& x, int k, std::uint64_t seed, const KmeansOptions& opts = {}) {
    const Eigen::Index n = x.rows();
    if (k < 1 || k > n) throw DomainError("k-means needs 1 <= K <= n");
    KmeansResult best;
    best.wcss = std::numeric_limits<double>::infinity();
    for (int r = 0; r < opts.restarts; ++r) {
        Philox4x32 g = make_stream(seed, StreamPurpose::kmeans, {static_cast<std::uint64_t>(r)});
        KmeansResult res = detail::lloyd(x, detail::kmeanspp_seed(x, k, g), opts.max_iter);
        if (res.wcss < best.wcss) best = std::move(res);
    }
    return best;
}

// ---------------------------------------------------------------------------
// Label alignment
// ---------------------------------------------------------------------------

/// Minimum-cost assignment for a square cost matrix; result[row] = column.
inline std::vector<int> hungarian(const Matrix& cost) {
    const int n = static_cast<int>(cost.rows());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
        std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const int i0 = p[static_cast<std::size_t>(j0)];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> assignment(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= n; ++j) assignment[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
    return assignment;
}

/// K_a x K_b table of co-occurrence counts.
inline Matrix overlap_matrix(const Labels& a, const Labels& b, int ka, int kb) {
    if (a.size() != b.size()) throw LengthMismatch("label vectors differ in length");
    Matrix c = Matrix::Zero(ka, kb);
    for (std::size_t i = 0; i < a.size(); ++i) c(a[i], b[i]) += 1.0;
    return c;
}

/// Relabels in order of first appearance.
inline Labels first_appearance(const Labels& labels) {
    std::vector<int> map(static_cast<std::size_t>(label_count(labels)), -1);
    int next = 0;
    Labels out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto& m = map[static_cast<std::size_t>(labels[i])];
        if (m < 0) m = next++;
        out[i] = m;
    }
    return out;
}

/// Permutes the labels of `later` within 0..k_later-1 to maximize agreement
/// with `earlier`. Communities without a counterpart follow in
/// first-appearance order.
inline Labels align_to(const Labels& earlier, const Labels& later, int k_earlier, int k_later) {
    const int shared = std::min(k_earlier, k_later);
    const Matrix ov = overlap_matrix(later, earlier, k_later, k_earlier);
    Matrix cost = Matrix::Zero(k_later, k_later);
    cost.leftCols(shared) = -ov.leftCols(shared);
    const auto assign = hungarian(cost);
    std::vector<int> map(static_cast<std::size_t>(k_later), -1);
    for (int l = 0; l < k_later; ++l) {
        const int target = assign[static_cast<std::size_t>(l)];
        if (target < shared) map[static_cast<std::size_t>(l)] = target;
    }
    int next = shared;
    for (int l : later) {
        auto& m = map[static_cast<std::size_t>(l)];
        if (m < 0) m = next++;
    }
    for (auto& m : map)
        if (m < 0) m = next++;
    Labels out(later.size());
    for (std::size_t i = 0; i < later.size(); ++i) out[i] = map[static_cast<std::size_t>(later[i])];
    return out;
}

// ---------------------------------------------------------------------------
// Community paths
// ---------------------------------------------------------------------------

struct PathDiagnostics {
    double alpha = 0.0;
    int pisces_iterations = 0;
    bool pisces_converged = true;
    std::vector<double> wcss;  ///< per position
    std::vector<std::vector<Eigen::Index>> zero_rows;  ///< per position
};

/// Recovered path: one label vector per position plus the stage view.
struct CommunityPath {
    ChainKind kind = ChainKind::pvar_cyclic;
    std::size_t stages = 0;
    std::vector<Labels> positions;
    std::vector<int> position_k;
    std::vector<std::string> node_names;
    PathDiagnostics diagnostics;

    [[nodiscard]] const Labels& y(std::size_t stage) const {
        return positions[stage_positions(kind, stage, stages).first];
    }
    [[nodiscard]] const Labels& z(std::size_t stage) const {
        return positions[stage_positions(kind, stage, stages).second];
    }
    [[nodiscard]] std::size_t dimension() const { return positions.empty() ? 0 : positions.front().size(); }
};

/// Human-readable linkage of each position.
inline std::vector<std::string> position_linkage(ChainKind kind, std::size_t stages) {
    std::vector<std::string> out;
    if (kind == ChainKind::pvar_cyclic) {
        for (std::size_t p = 0; p < stages; ++p) {
            const std::size_t prev = (p + stages - 1) % stages;
            out.push_back("Z" + std::to_string(prev + 1) + "=Y" + std::to_string(p + 1));
        }
    } else {
        out = {"Y(L)=Z(L)=Y(M)", "Z(M)=Y(S)", "Z(S)"};
    }
    return out;
}

inline std::vector<std::string> position_names(ChainKind kind, std::size_t stages) {
    std::vector<std::string> out;
    if (kind == ChainKind::pvar_cyclic) {
        for (std::size_t p = 0; p < stages; ++p) out.push_back("season " + std::to_string(p + 1));
    } else {
        out = {"long", "medium", "short"};
    }
    return out;
}

/// Row-normalized factor blocks concatenated for each path position: receiving
/// roles first, then sending roles, both in stage order.
inline std::vector<Matrix> position_features(const StageSpectra& sp, ChainKind kind, std::vector<NormalizedRows>* norm = nullptr) {
    const std::size_t s = sp.stages();
    const std::size_t npos = position_count(kind, s);
    std::vector<std::vector<const Matrix*>> parts(npos);
    std::vector<NormalizedRows> left, right;
    for (std::size_t m = 0; m < s; ++m) {
        left.push_back(row_normalize(sp.left[m]));
        right.push_back(row_normalize(sp.right[m]));
    }
    for (std::size_t m = 0; m < s; ++m) parts[stage_positions(kind, m, s).second].push_back(&right[m].rows);
    for (std::size_t m = 0; m < s; ++m) parts[stage_positions(kind, m, s).first].push_back(&left[m].rows);
    std::vector<Matrix> out;
    for (std::size_t p = 0; p < npos; ++p) {
        Eigen::Index cols = 0;
        for (const Matrix* b : parts[p]) cols += b->cols();
        Matrix f(sp.left.front().rows(), cols);
        Eigen::Index c = 0;
        for (const Matrix* b : parts[p]) {
            f.middleCols(c, b->cols()) = *b;
            c += b->cols();
        }
        out.push_back(std::move(f));
    }
    if (norm) {
        norm->clear();
        for (std::size_t m = 0; m < s; ++m) {
            norm->push_back(left[m]);
            norm->push_back(right[m]);
        }
    }
    return out;
}

/// Sequential relabeling of path positions in chain order.
inline CommunityPath align_labels(CommunityPath path) {
    if (path.positions.empty()) return path;
    path.positions[0] = first_appearance(path.positions[0]);
    for (std::size_t p = 1; p < path.positions.size(); ++p)
        path.positions[p] = align_to(path.positions[p - 1], path.positions[p], path.position_k[p - 1], path.position_k[p]);
    return path;
}

/// k-means linking of smoothed factors into a community path.
inline CommunityPath link_stages(const StageSpectra& sp, ChainKind kind, const std::vector<RankPair>& ranks,
                                 std::uint64_t seed, const KmeansOptions& kopts = {}) {
    validate_ranks(kind, ranks);
    if (ranks.size() != sp.stages()) throw ShapeMismatch("one rank pair per stage required");
    CommunityPath path;
    path.kind = kind;
    path.stages = sp.stages();
    path.position_k = position_counts(kind, ranks);
    const auto features = position_features(sp, kind);
    for (std::size_t p = 0; p < features.size(); ++p) {
        std::vector<Eigen::Index> zeros;
        for (Eigen::Index i = 0; i < features[p].rows(); ++i)
            if (features[p].row(i).squaredNorm() == 0.0) zeros.push_back(i);
        auto km = kmeans(features[p], path.position_k[p], derive_seed(seed, {static_cast<std::uint64_t>(p)}), kopts);
        path.positions.push_back(std::move(km.labels));
        path.diagnostics.wcss.push_back(km.wcss);
        path.diagnostics.zero_rows.push_back(std::move(zeros));
    }
    return align_labels(std::move(path));
}

struct CoclusterOptions {
    double alpha = 0.0;
    bool smooth = true;
    PiscesOptions pisces;
    KmeansOptions kmeans;
    std::uint64_t seed = 0;
};

/// Full pipeline: spectra, optional smoothing, linking, alignment.
inline CommunityPath co_cluster(const std::vector<Matrix>& matrices, ChainKind kind, const std::vector<RankPair>& ranks,
                                const CoclusterOptions& opts) {
    validate_ranks(kind, ranks);
    const StageSpectra raw = stage_spectra(matrices, ranks);
    CommunityPath path;
    if (opts.smooth) {
        const SmoothedChain sm = pisces_smooth(raw, ranks, opts.alpha, opts.pisces);
        path = link_stages(sm.spectra, kind, ranks, opts.seed, opts.kmeans);
        path.diagnostics.pisces_iterations = sm.iterations;
        path.diagnostics.pisces_converged = sm.converged;
        path.diagnostics.alpha = opts.alpha;
    } else {
        path = link_stages(raw, kind, ranks, opts.seed, opts.kmeans);
    }
    return path;
}

inline CommunityPath co_cluster(const StageChain& chain, const CoclusterOptions& opts) {
    CommunityPath path = co_cluster(chain.matrices, chain.kind, chain.ranks, opts);
    path.node_names = chain.node_names;
    return path;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline json community_path_to_json(const CommunityPath& p) {
    json stages = json::array();
    for (std::size_t m = 0; m < p.stages; ++m) {
        const auto [py, pz] = stage_positions(p.kind, m, p.stages);
        stages.push_back({{"stage", m + 1},
                          {"y", labels_to_json(p.y(m))},
                          {"z", labels_to_json(p.z(m))},
                          {"y_position", py + 1},
                          {"z_position", pz + 1}});
    }
    json positions = json::array();
    const auto links = position_linkage(p.kind, p.stages);
    const auto names = position_names(p.kind, p.stages);
    for (std::size_t i = 0; i < p.positions.size(); ++i) {
        positions.push_back({{"position", i + 1},
                             {"name", names[i]},
                             {"linkage", links[i]},
                             {"k", p.position_k[i]},
                             {"labels", labels_to_json(p.positions[i])}});
    }
    json zero_rows = json::array();
    for (const auto& z : p.diagnostics.zero_rows) {
        json rows = json::array();
        for (auto i : z) rows.push_back(i + 1);
        zero_rows.push_back(rows);
    }
    return {{"schema", kSchemaVersion},
            {"kind", to_string(p.kind)},
            {"stages", stages},
            {"positions", positions},
            {"node_names", p.node_names},
            {"diagnostics",
             {{"alpha", p.diagnostics.alpha},
              {"pisces_iterations", p.diagnostics.pisces_iterations},
              {"pisces_converged", p.diagnostics.pisces_converged},
              {"wcss", p.diagnostics.wcss},
              {"zero_rows", zero_rows}}}};
}

inline CommunityPath community_path_from_json(const json& j) {
    CommunityPath p;
    p.kind = chain_kind_from_string(j.at("kind").get<std::string>());
    for (const auto& pos : j.at("positions")) {
        p.positions.push_back(labels_from_json(pos.at("labels")));
        p.position_k.push_back(pos.at("k").get<int>());
    }
    p.stages = p.kind == ChainKind::pvar_cyclic ? p.positions.size() : kVharStages;
    if (p.positions.size() != position_count(p.kind, p.stages)) throw ConfigError("path has the wrong number of positions");
    p.node_names = j.value("node_names", std::vector<std::string>{});
    if (j.contains("diagnostics")) {
        const auto& d = j.at("diagnostics");
        p.diagnostics.alpha = d.value("alpha", 0.0);
        p.diagnostics.pisces_iterations = d.value("pisces_iterations", 0);
        p.diagnostics.pisces_converged = d.value("pisces_converged", true);
        p.diagnostics.wcss = d.value("wcss", std::vector<double>{});
    }
    for (std::size_t i = 0; i < p.positions.size(); ++i) {
        for (int l : p.positions[i])
            if (l < 0 || l >= p.position_k[i]) throw ConfigError("label out of range in path JSON");
    }
    return p;
}

}  // namespace scbm
