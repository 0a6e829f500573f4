#pragma once

#include "scbm/core.hpp"
#include "scbm/json_io.hpp"
#include "scbm/panel.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace scbm {

/// Stacked least-squares problem: response = design * coef + noise.
struct RegressionProblem {
    Matrix response;  ///< N x d_y
    Matrix design;    ///< N x d_x
    /// Panel row of each response row, used for blocked cross-validation.
    std::vector<Eigen::Index> time_index;
    int stage = 0;
    /// Rows of lag history each response row depends on.
    Eigen::Index lag_span = 1;

    [[nodiscard]] Eigen::Index effective_size() const { return response.rows(); }
};

// ---------------------------------------------------------------------------
// Designs
// ---------------------------------------------------------------------------

/// Rows t = first_row..T-1 of the unrestricted VAR(p) lag design
/// (Y'_{t-1}, ..., Y'_{t-p}).
inline Matrix lag_design(const Matrix& y, int p, Eigen::Index first_row) {
    const Eigen::Index q = y.cols();
    const Eigen::Index n = y.rows() - first_row;
    Matrix x(n, q * p);
    for (Eigen::Index r = 0; r < n; ++r)
        for (int h = 1; h <= p; ++h) x.block(r, (h - 1) * q, 1, q) = y.row(first_row + r - h);
    return x;
}

/// One regression per season: response rows are observations of that phase,
/// design rows their p most recent lags.
inline std::vector<RegressionProblem> pvar_design(const TimeSeriesPanel& panel, int seasons, int p) {
    if (seasons < 1 || p < 1) throw DomainError("seasons and lag order must be positive");
    if (panel.seasons() > 0 && panel.seasons() != seasons)
        throw ConfigError("panel phase metadata uses " + std::to_string(panel.seasons()) + " seasons");
    const Matrix& y = panel.values();
    const Eigen::Index q = panel.dimension();
    std::vector<std::vector<Eigen::Index>> rows(static_cast<std::size_t>(seasons));
    for (Eigen::Index t = p; t < panel.length(); ++t) rows[static_cast<std::size_t>(panel.phase(t, seasons))].push_back(t);

    std::vector<RegressionProblem> out;
    for (int m = 0; m < seasons; ++m) {
        const auto& idx = rows[static_cast<std::size_t>(m)];
        if (static_cast<int>(idx.size()) < p + 1)
            throw LengthError("season " + std::to_string(m + 1) + " has " + std::to_string(idx.size()) +
                              " usable observations");
        RegressionProblem prob;
        prob.stage = m;
        prob.lag_span = p;
        prob.time_index = idx;
        const auto n = static_cast<Eigen::Index>(idx.size());
        prob.response.resize(n, q);
        prob.design.resize(n, q * p);
        for (Eigen::Index r = 0; r < n; ++r) {
            const Eigen::Index t = idx[static_cast<std::size_t>(r)];
            prob.response.row(r) = y.row(t);
            for (int h = 1; h <= p; ++h) prob.design.block(r, (h - 1) * q, 1, q) = y.row(t - h);
        }
        out.push_back(std::move(prob));
    }
    return out;
}

/// Restriction matrix R (q b_L x 3q) mapping the unrestricted VAR(b_L) lag
/// design onto (short, medium, long) aggregate regressors.
inline Matrix vhar_restriction(int q, int b_m, int b_l) {
    if (!(1 < b_m && b_m < b_l)) throw DomainError("horizon lengths must satisfy 1 < b_M < b_L");
    Matrix r = Matrix::Zero(static_cast<Eigen::Index>(q) * b_l, 3 * q);
    const Matrix id = Matrix::Identity(q, q);
    for (int h = 1; h <= b_l; ++h) {
        const Eigen::Index row = static_cast<Eigen::Index>(h - 1) * q;
        if (h == 1) r.block(row, 0, q, q) = id;
        if (h <= b_m) r.block(row, q, q, q) = id / b_m;
        r.block(row, 2 * q, q, q) = id / b_l;
    }
    return r;
}

/// Aggregate regression for the generalized VHAR: rows t = b_L..T-1 with
/// regressors (Y'_{t-1}, Y^(M)'_{t-1}, Y^(L)'_{t-1}); N = T - b_L.
inline RegressionProblem vhar_design(const TimeSeriesPanel& panel, int b_m, int b_l) {
    if (!(1 < b_m && b_m < b_l)) throw DomainError("horizon lengths must satisfy 1 < b_M < b_L");
    if (panel.length() <= b_l + 10) throw LengthError("VHAR design needs T > b_L + 10");
    const Matrix& y = panel.values();
    const Eigen::Index q = panel.dimension();
    const Eigen::Index n = panel.length() - b_l;
    RegressionProblem prob;
    prob.lag_span = b_l;
    prob.response = y.bottomRows(n);
    prob.design.resize(n, 3 * q);
    for (Eigen::Index r = 0; r < n; ++r) {
        const Eigen::Index t = b_l + r;
        prob.time_index.push_back(t);
        prob.design.block(r, 0, 1, q) = y.row(t - 1);
        prob.design.block(r, q, 1, q) = y.middleRows(t - b_m, b_m).colwise().mean();
        prob.design.block(r, 2 * q, 1, q) = y.middleRows(t - b_l, b_l).colwise().mean();
    }
    return prob;
}

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

inline constexpr double kMaxConditionNumber = 1e12;

/// Least squares through a rank-revealing SVD of the design.
inline Matrix ols(const RegressionProblem& prob) {
    const Matrix& x = prob.design;
    if (x.rows() != prob.response.rows()) throw ShapeMismatch("response and design row counts differ");
    if (x.rows() < x.cols()) throw RankDeficient(x.rows(), x.cols());
    Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    const double smax = sv(0);
    const Eigen::Index rank = (sv.array() > smax / kMaxConditionNumber).count();
    if (smax <= 0.0 || rank < x.cols()) throw RankDeficient(rank, x.cols());
    return svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose() * prob.response;
}

/// (1/N) ||Y - X B||_F^2 + lambda ||B||_1.
inline double lasso_objective(const RegressionProblem& prob, const Matrix& coef, double lambda) {
    const double n = static_cast<double>(prob.response.rows());
    return (prob.response - prob.design * coef).squaredNorm() / n + lambda * coef.cwiseAbs().sum();
}

struct LassoOptions {
    int max_iter = 10000;
    double tol = 1e-8;
};

struct LassoResult {
    Matrix coef;
    double objective = 0.0;
    int iterations = 0;
    int restarts = 0;
    bool converged = false;
};

inline Matrix soft_threshold(const Matrix& v, double t) {
    return v.unaryExpr([t](double x) { return x > t ? x - t : (x < -t ? x + t : 0.0); });
}

/// Sufficient statistics for repeated lasso fits on the same rows.
struct LassoGram {
    Matrix gram;       ///< X'X / N
    Matrix cross;      ///< X'Y / N
    double yy = 0.0;   ///< ||Y||^2 / N
    double lipschitz = 0.0;

    static LassoGram from(const Matrix& x, const Matrix& y) {
        LassoGram g;
        const double n = static_cast<double>(x.rows());
        g.gram = x.transpose() * x / n;
        g.cross = x.transpose() * y / n;
        g.yy = y.squaredNorm() / n;
        Eigen::SelfAdjointEigenSolver<Matrix> eig(g.gram, Eigen::EigenvaluesOnly);
        g.lipschitz = 2.0 * std::max(eig.eigenvalues().maxCoeff(), 1e-300);
        return g;
    }

    [[nodiscard]] double objective(const Matrix& b, double lambda) const {
        return yy - 2.0 * (b.cwiseProduct(cross)).sum() + (b.cwiseProduct(gram * b)).sum() +
               lambda * b.cwiseAbs().sum();
    }
};

/// FISTA on the (1/N)-scaled lasso with restart whenever the objective would
/// increase, so accepted iterates are monotone. Stops after three consecutive
/// steps with small relative objective and iterate changes.
inline LassoResult lasso_fista(const LassoGram& g, double lambda, const LassoOptions& opts = {},
                               const Matrix* warm_start = nullptr) {
    if (lambda < 0.0) throw DomainError("lambda must be non-negative");
    const double step = 1.0 / g.lipschitz;
    Matrix x = warm_start ? *warm_start : Matrix::Zero(g.gram.rows(), g.cross.cols());
    Matrix y = x;
    double fx = g.objective(x, lambda);
    double t = 1.0;
    LassoResult res;
    bool momentum = false;
    int small_steps = 0;
    for (int it = 1; it <= opts.max_iter; ++it) {
        res.iterations = it;
        const Matrix grad = 2.0 * (g.gram * y - g.cross);
        Matrix x_new = soft_threshold(y - step * grad, lambda * step);
        const double f_new = g.objective(x_new, lambda);
        if (f_new > fx && momentum) {
            // Restart from the last accepted iterate.
            ++res.restarts;
            y = x;
            t = 1.0;
            momentum = false;
            continue;
        }
        const double change = fx - f_new;
        const double step_size = (x_new - x).cwiseAbs().maxCoeff();
        const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = x_new + ((t - 1.0) / t_new) * (x_new - x);
        momentum = true;
        t = t_new;
        if (f_new <= fx) {
            x = std::move(x_new);
            fx = f_new;
        }
        if (std::abs(change) <= opts.tol * std::max(1.0, std::abs(fx)) &&
            step_size <= opts.tol * std::max(1.0, x.cwiseAbs().maxCoeff())) {
            if (++small_steps >= 3) {
                res.converged = true;
                break;
            }
        } else {
            small_steps = 0;
        }
    }
    res.coef = std::move(x);
    res.objective = fx;
    return res;
}

inline LassoResult lasso_fista(const RegressionProblem& prob, double lambda, const LassoOptions& opts = {}) {
    if (prob.design.rows() != prob.response.rows()) throw ShapeMismatch("response and design row counts differ");
    if (!prob.design.allFinite() || !prob.response.allFinite()) throw DomainError("problem has non-finite entries");
    return lasso_fista(LassoGram::from(prob.design, prob.response), lambda, opts);
}

// ---------------------------------------------------------------------------
// Penalty selection
// ---------------------------------------------------------------------------

/// c_lambda candidates 0.10, 0.15, ..., 1.00.
inline std::vector<double> default_lambda_grid() {
    std::vector<double> grid;
    for (int i = 2; i <= 20; ++i) grid.push_back(0.05 * i);
    return grid;
}

inline constexpr int kLambdaFolds = 10;

/// sqrt(log(n_coef) / N) baseline with n_coef = s q^2 (PVAR) or 3 q^2 (VHAR).
inline double baseline_lambda(double n_coefficients, Eigen::Index n_eff) {
    return std::sqrt(std::log(n_coefficients) / static_cast<double>(n_eff));
}

struct LambdaSelection {
    double chosen = 0.0;
    std::vector<double> grid;
    std::vector<double> scores;
};

/// Contiguous-block cross-validation of a common multiplier c over stage
/// regressions with lambda_m = c * base[m]. Held-out blocks partition the time
/// range; training rows within lag_span of a held-out block are dropped.
inline LambdaSelection select_lambda(const std::vector<RegressionProblem>& stages, const std::vector<double>& base,
                                     std::vector<double> grid, int folds, const LassoOptions& opts = {}) {
    if (grid.empty()) throw ConfigError("lambda grid is empty");
    if (folds < 2) throw ConfigError("need at least two folds");
    if (base.size() != stages.size()) throw ShapeMismatch("one baseline lambda per stage");
    std::sort(grid.begin(), grid.end());
    LambdaSelection sel;
    sel.grid = grid;
    sel.scores.assign(grid.size(), 0.0);
    if (grid.size() == 1) {
        sel.chosen = grid.front();
        return sel;
    }

    Eigen::Index t_min = std::numeric_limits<Eigen::Index>::max(), t_max = 0;
    for (const auto& s : stages) {
        t_min = std::min(t_min, s.time_index.front());
        t_max = std::max(t_max, s.time_index.back());
    }
    const double span = static_cast<double>(t_max - t_min + 1);

    for (int f = 0; f < folds; ++f) {
        const auto lo = t_min + static_cast<Eigen::Index>(std::floor(span * f / folds));
        const auto hi = t_min + static_cast<Eigen::Index>(std::floor(span * (f + 1) / folds));
        for (std::size_t m = 0; m < stages.size(); ++m) {
            const auto& s = stages[m];
            std::vector<Eigen::Index> train, valid;
            for (std::size_t r = 0; r < s.time_index.size(); ++r) {
                const Eigen::Index t = s.time_index[r];
                if (t >= lo && t < hi) valid.push_back(static_cast<Eigen::Index>(r));
                else if (t < lo - s.lag_span || t >= hi + s.lag_span) train.push_back(static_cast<Eigen::Index>(r));
            }
            if (valid.empty() || train.empty()) continue;
            const Matrix xt = s.design(train, Eigen::all);
            const Matrix yt = s.response(train, Eigen::all);
            const Matrix xv = s.design(valid, Eigen::all);
            const Matrix yv = s.response(valid, Eigen::all);
            const LassoGram g = LassoGram::from(xt, yt);
            Matrix warm = Matrix::Zero(xt.cols(), yt.cols());
            for (std::size_t k = grid.size(); k-- > 0;) {
                const LassoResult fit = lasso_fista(g, grid[k] * base[m], opts, &warm);
                warm = fit.coef;
                sel.scores[k] += (yv - xv * fit.coef).squaredNorm();
            }
        }
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < grid.size(); ++k) {
        if (sel.scores[k] < sel.scores[best]) best = k;
    }
    sel.chosen = grid[best];
    return sel;
}

// ---------------------------------------------------------------------------
// Stage chains
// ---------------------------------------------------------------------------

enum class EstimatorKind { ols, lasso };

inline std::string to_string(EstimatorKind e) { return e == EstimatorKind::ols ? "ols" : "lasso"; }

inline EstimatorKind estimator_from_string(const std::string& s) {
    if (s == "ols") return EstimatorKind::ols;
    if (s == "lasso") return EstimatorKind::lasso;
    throw ConfigError("unknown estimator '" + s + "'");
}

struct ModelConfig {
    ChainKind kind = ChainKind::pvar_cyclic;
    int seasons = 4;
    int lag_order = 1;
    int b_m = 5;
    int b_l = 22;
    EstimatorKind estimator = EstimatorKind::lasso;
    /// Fixed c_lambda; selected by blocked CV when unset.
    std::optional<double> lambda_multiplier;
    std::vector<double> lambda_grid = default_lambda_grid();
    int lambda_folds = kLambdaFolds;
    LassoOptions lasso;
    /// May be empty when only the chain (e.g. for scree plots) is wanted.
    std::vector<RankPair> ranks;
};

struct ChainProvenance {
    EstimatorKind estimator = EstimatorKind::lasso;
    double lambda_multiplier = 0.0;
    std::vector<double> lambdas;
    std::vector<double> lambda_scores;
    bool converged = true;
};

/// Ordered per-stage matrices in sender-row orientation: PVAR sum_h Phi'_{m,h};
/// VHAR (Phi_(L)', Phi_(M)', Phi_(S)').
struct StageChain {
    ChainKind kind = ChainKind::pvar_cyclic;
    std::vector<Matrix> matrices;
    std::vector<RankPair> ranks;
    ChainProvenance provenance;
    std::vector<std::string> node_names;

    [[nodiscard]] std::size_t stages() const { return matrices.size(); }
    [[nodiscard]] Eigen::Index dimension() const { return matrices.front().rows(); }
};

/// Stage regressions and their baseline penalties for a model configuration.
inline std::vector<RegressionProblem> stage_problems(const TimeSeriesPanel& panel, const ModelConfig& cfg,
                                                     std::vector<double>* base = nullptr) {
    const double q = static_cast<double>(panel.dimension());
    std::vector<RegressionProblem> probs;
    if (cfg.kind == ChainKind::pvar_cyclic) {
        probs = pvar_design(panel, cfg.seasons, cfg.lag_order);
        if (base) {
            base->clear();
            for (const auto& p : probs) base->push_back(baseline_lambda(cfg.seasons * q * q, p.effective_size()));
        }
    } else {
        probs.push_back(vhar_design(panel, cfg.b_m, cfg.b_l));
        if (base) *base = {baseline_lambda(3.0 * q * q, probs.front().effective_size())};
    }
    return probs;
}

inline LambdaSelection select_lambda(const TimeSeriesPanel& panel, const ModelConfig& cfg) {
    std::vector<double> base;
    const auto probs = stage_problems(panel, cfg, &base);
    return select_lambda(probs, base, cfg.lambda_grid, cfg.lambda_folds, cfg.lasso);
}

inline StageChain fit_stage_chain(const TimeSeriesPanel& panel, const ModelConfig& cfg) {
    if (!cfg.ranks.empty()) {
        validate_ranks(cfg.kind, cfg.ranks);
        const std::size_t want = cfg.kind == ChainKind::pvar_cyclic ? static_cast<std::size_t>(cfg.seasons) : kVharStages;
        if (cfg.ranks.size() != want) throw RankConstraintViolation("one rank pair per stage required");
    }
    std::vector<double> base;
    const auto probs = stage_problems(panel, cfg, &base);

    StageChain chain;
    chain.kind = cfg.kind;
    chain.ranks = cfg.ranks;
    chain.node_names = panel.series_names();
    chain.provenance.estimator = cfg.estimator;

    double mult = 0.0;
    if (cfg.estimator == EstimatorKind::lasso) {
        if (cfg.lambda_multiplier) {
            mult = *cfg.lambda_multiplier;
        } else {
            const auto sel = select_lambda(probs, base, cfg.lambda_grid, cfg.lambda_folds, cfg.lasso);
            mult = sel.chosen;
            chain.provenance.lambda_scores = sel.scores;
        }
    }
    chain.provenance.lambda_multiplier = mult;

    std::vector<Matrix> coefs;
    for (std::size_t m = 0; m < probs.size(); ++m) {
        if (cfg.estimator == EstimatorKind::ols) {
            coefs.push_back(ols(probs[m]));
        } else {
            const double lambda = mult * base[m];
            chain.provenance.lambdas.push_back(lambda);
            auto fit = lasso_fista(probs[m], lambda, cfg.lasso);
            chain.provenance.converged = chain.provenance.converged && fit.converged;
            coefs.push_back(std::move(fit.coef));
        }
    }

    const Eigen::Index q = panel.dimension();
    if (cfg.kind == ChainKind::pvar_cyclic) {
        // Coefficient blocks are Phi'_{m,h}; the stage matrix is their sum.
        for (const auto& c : coefs) {
            Matrix sum = Matrix::Zero(q, q);
            for (int h = 0; h < cfg.lag_order; ++h) sum += c.middleRows(h * q, q);
            chain.matrices.push_back(std::move(sum));
        }
    } else {
        const Matrix& b = coefs.front();  // (Phi_S'; Phi_M'; Phi_L')
        chain.matrices = {b.middleRows(2 * q, q), b.middleRows(q, q), b.middleRows(0, q)};
    }
    return chain;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline json stage_chain_to_json(const StageChain& c) {
    json mats = json::array();
    for (const auto& m : c.matrices) mats.push_back(matrix_to_json(m));
    return {{"schema", kSchemaVersion},
            {"kind", to_string(c.kind)},
            {"matrices", mats},
            {"ranks", ranks_to_json(c.ranks)},
            {"node_names", c.node_names},
            {"provenance",
             {{"estimator", to_string(c.provenance.estimator)},
              {"lambda_multiplier", c.provenance.lambda_multiplier},
              {"lambdas", c.provenance.lambdas},
              {"lambda_scores", c.provenance.lambda_scores},
              {"converged", c.provenance.converged}}}};
}

inline StageChain stage_chain_from_json(const json& j) {
    StageChain c;
    c.kind = chain_kind_from_string(j.at("kind").get<std::string>());
    for (const auto& m : j.at("matrices")) c.matrices.push_back(matrix_from_json(m));
    c.ranks = ranks_from_json(j.at("ranks"));
    c.node_names = j.value("node_names", std::vector<std::string>{});
    if (j.contains("provenance")) {
        const auto& p = j.at("provenance");
        c.provenance.estimator = estimator_from_string(p.value("estimator", std::string("lasso")));
        c.provenance.lambda_multiplier = p.value("lambda_multiplier", 0.0);
        c.provenance.lambdas = p.value("lambdas", std::vector<double>{});
        c.provenance.lambda_scores = p.value("lambda_scores", std::vector<double>{});
        c.provenance.converged = p.value("converged", true);
    }
    if (!c.ranks.empty()) validate_ranks(c.kind, c.ranks);
    return c;
}

}  // namespace scbm
