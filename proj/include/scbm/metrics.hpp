#pragma once

#include "scbm/cocluster.hpp"
#include "scbm/core.hpp"
#include "scbm/estimator.hpp"
#include "scbm/json_io.hpp"
#include "scbm/netgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

namespace scbm {

inline double spectral_error(const Matrix& est, const Matrix& truth) {
    if (est.rows() != truth.rows() || est.cols() != truth.cols()) throw ShapeMismatch("matrices differ in shape");
    return spectral_norm(est - truth);
}

/// Largest singular value of the vertically stacked stage differences.
inline double stacked_spectral_error(const std::vector<Matrix>& est, const std::vector<Matrix>& truth) {
    if (est.size() != truth.size()) throw ShapeMismatch("stage counts differ");
    Eigen::Index rows = 0;
    for (const auto& m : est) rows += m.rows();
    Matrix d(rows, est.front().cols());
    Eigen::Index r = 0;
    for (std::size_t m = 0; m < est.size(); ++m) {
        if (est[m].rows() != truth[m].rows() || est[m].cols() != truth[m].cols())
            throw ShapeMismatch("matrices differ in shape");
        d.middleRows(r, est[m].rows()) = est[m] - truth[m];
        r += est[m].rows();
    }
    return spectral_norm(d);
}

namespace detail {

inline void check_labels(const Labels& a, const Labels& b) {
    if (a.size() != b.size()) throw LengthMismatch("label vectors differ in length");
    for (int l : a)
        if (l < 0) throw DomainError("labels must be non-negative");
    for (int l : b)
        if (l < 0) throw DomainError("labels must be non-negative");
}

inline double choose2(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace detail

inline constexpr int kExhaustiveAlignmentLimit = 6;

/// Largest number of agreeing positions over label permutations.
inline int max_agreement(const Labels& est, const Labels& truth) {
    detail::check_labels(est, truth);
    const int k = std::max(label_count(est), label_count(truth));
    if (k == 0) return 0;
    const Matrix ov = overlap_matrix(est, truth, k, k);
    if (k <= kExhaustiveAlignmentLimit) {
        std::vector<int> perm(static_cast<std::size_t>(k));
        std::iota(perm.begin(), perm.end(), 0);
        double best = 0.0;
        do {
            double s = 0.0;
            for (int i = 0; i < k; ++i) s += ov(i, perm[static_cast<std::size_t>(i)]);
            best = std::max(best, s);
        } while (std::next_permutation(perm.begin(), perm.end()));
        return static_cast<int>(std::lround(best));
    }
    const auto assign = hungarian(-ov);
    double s = 0.0;
    for (int i = 0; i < k; ++i) s += ov(i, assign[static_cast<std::size_t>(i)]);
    return static_cast<int>(std::lround(s));
}

inline double aligned_accuracy(const Labels& est, const Labels& truth) {
    if (est.empty()) {
        detail::check_labels(est, truth);
        return 1.0;
    }
    return static_cast<double>(max_agreement(est, truth)) / static_cast<double>(est.size());
}

/// Adjusted Rand index from the contingency table.
inline double ari(const Labels& a, const Labels& b) {
    detail::check_labels(a, b);
    if (a.size() < 2) throw LengthError("ARI needs at least two items");
    const int ka = label_count(a), kb = label_count(b);
    const Matrix c = overlap_matrix(a, b, ka, kb);
    double sum_ij = 0.0;
    for (Eigen::Index i = 0; i < c.rows(); ++i)
        for (Eigen::Index j = 0; j < c.cols(); ++j) sum_ij += detail::choose2(c(i, j));
    double sum_a = 0.0, sum_b = 0.0;
    const Vector ra = c.rowwise().sum(), cb = c.colwise().sum().transpose();
    for (Eigen::Index i = 0; i < ra.size(); ++i) sum_a += detail::choose2(ra(i));
    for (Eigen::Index j = 0; j < cb.size(); ++j) sum_b += detail::choose2(cb(j));
    const double expected = sum_a * sum_b / detail::choose2(static_cast<double>(a.size()));
    const double max_index = 0.5 * (sum_a + sum_b);
    const double denom = max_index - expected;
    if (denom == 0.0) return 1.0;
    return (sum_ij - expected) / denom;
}

// ---------------------------------------------------------------------------
// Replication summaries
// ---------------------------------------------------------------------------

struct EvalSummary {
    std::vector<double> stage_spectral_error;
    double spectral_error = 0.0;  ///< mean over stages
    double stacked_spectral_error = 0.0;
    std::vector<double> position_accuracy;
    double accuracy = 0.0;
    std::vector<double> position_ari;
    double ari = 0.0;
    double misclassification_rate = 0.0;
};

/// Truth stage matrices in the co-clustering orientation (rows send).
inline std::vector<Matrix> true_stage_matrices(const ScbmSystem& sys) {
    std::vector<Matrix> out;
    for (const auto& t : sys.transitions) out.push_back(t.transpose());
    return out;
}

/// Scores a fitted chain and recovered path against the generating system.
/// Clustering metrics are averaged over path positions.
inline EvalSummary evaluate(const StageChain& chain, const CommunityPath& path, const ScbmSystem& sys) {
    EvalSummary e;
    const auto truth = true_stage_matrices(sys);
    if (truth.size() != chain.matrices.size()) throw ShapeMismatch("stage counts differ");
    for (std::size_t m = 0; m < truth.size(); ++m) e.stage_spectral_error.push_back(spectral_error(chain.matrices[m], truth[m]));
    e.spectral_error =
        std::accumulate(e.stage_spectral_error.begin(), e.stage_spectral_error.end(), 0.0) / static_cast<double>(truth.size());
    e.stacked_spectral_error = scbm::stacked_spectral_error(chain.matrices, truth);

    const auto& positions = sys.design.positions;
    if (positions.size() != path.positions.size()) throw ShapeMismatch("path position counts differ");
    double miss = 0.0;
    for (std::size_t p = 0; p < positions.size(); ++p) {
        const int agree = max_agreement(path.positions[p], positions[p]);
        e.position_accuracy.push_back(static_cast<double>(agree) / static_cast<double>(positions[p].size()));
        e.position_ari.push_back(scbm::ari(path.positions[p], positions[p]));
        miss += static_cast<double>(positions[p].size()) - agree;
    }
    const auto n = static_cast<double>(positions.size());
    e.accuracy = std::accumulate(e.position_accuracy.begin(), e.position_accuracy.end(), 0.0) / n;
    e.ari = std::accumulate(e.position_ari.begin(), e.position_ari.end(), 0.0) / n;
    e.misclassification_rate = miss / (n * static_cast<double>(sys.dimension()));
    return e;
}

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
    MeanSe r;
    if (xs.empty()) return r;
    const double n = static_cast<double>(xs.size());
    r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - r.mean) * (x - r.mean);
        r.se = std::sqrt(ss / (n - 1.0) / n);
    }
    return r;
}

inline std::string eval_csv_header() {
    return "replication,seed,status,spectral_error,stacked_spectral_error,accuracy,ari,misclassification_rate";
}

inline std::string eval_csv_row(std::size_t replication, std::uint64_t seed, const EvalSummary& e) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu,%llu,ok,%.10g,%.10g,%.10g,%.10g,%.10g", replication,
                  static_cast<unsigned long long>(seed), e.spectral_error, e.stacked_spectral_error, e.accuracy, e.ari,
                  e.misclassification_rate);
    return buf;
}

inline json summarize(const std::vector<EvalSummary>& reps, std::size_t failed) {
    std::vector<double> se, sse, acc, ar, mis;
    for (const auto& r : reps) {
        se.push_back(r.spectral_error);
        sse.push_back(r.stacked_spectral_error);
        acc.push_back(r.accuracy);
        ar.push_back(r.ari);
        mis.push_back(r.misclassification_rate);
    }
    auto entry = [](const std::vector<double>& v) {
        const MeanSe m = mean_se(v);
        return json{{"mean", m.mean}, {"se", m.se}};
    };
    return {{"replications", reps.size()},
            {"failed", failed},
            {"spectral_error", entry(se)},
            {"stacked_spectral_error", entry(sse)},
            {"accuracy", entry(acc)},
            {"ari", entry(ar)},
            {"misclassification_rate", entry(mis)}};
}

}  // namespace scbm
