#include "oracles.hpp"
#include "scbm/estimator.hpp"
#include "scbm/metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using scbm::ChainKind;
using scbm::Matrix;
using scbm::RegressionProblem;
using scbm::TimeSeriesPanel;
using scbm::Vector;

namespace {

RegressionProblem make_problem(const Matrix& x, const Matrix& y) {
    RegressionProblem p;
    p.design = x;
    p.response = y;
    for (Eigen::Index t = 0; t < x.rows(); ++t) p.time_index.push_back(t);
    return p;
}

Matrix orthonormal_columns(Eigen::Index n, Eigen::Index k, std::uint64_t seed) {
    Eigen::HouseholderQR<Matrix> qr(oracle::random_matrix(n, k, seed));
    return qr.householderQ() * Matrix::Identity(n, k);
}

}  // namespace

TEST(PvarDesign, SingleSeasonIsPlainVar) {
    const auto p = TimeSeriesPanel::from_matrix(oracle::random_matrix(50, 3, 1));
    const auto probs = scbm::pvar_design(p, 1, 2);
    ASSERT_EQ(probs.size(), 1u);
    EXPECT_EQ(probs[0].response.rows(), 48);
    EXPECT_TRUE(probs[0].design == scbm::lag_design(p.values(), 2, 2));
}

TEST(PvarDesign, RowCountsByEnumeration) {
    const auto p = TimeSeriesPanel::from_matrix(oracle::random_matrix(120, 2, 2), 0, 4);
    const auto probs = scbm::pvar_design(p, 4, 1);
    for (int m = 0; m < 4; ++m) {
        int count = 0;
        for (int t = 1; t < 120; ++t) count += (t % 4 == m);
        EXPECT_EQ(probs[static_cast<std::size_t>(m)].response.rows(), count);
        EXPECT_GE(count, 29);
        EXPECT_LE(count, 30);
    }
}

TEST(PvarDesign, PhaseShiftRelabelsRows) {
    const Matrix y = oracle::random_matrix(40, 2, 3);
    const auto probs = scbm::pvar_design(TimeSeriesPanel::from_matrix(y, 2, 4), 4, 1);
    for (int m = 0; m < 4; ++m) {
        std::vector<Eigen::Index> expect;
        for (Eigen::Index t = 1; t < 40; ++t)
            if ((t + 2) % 4 == m) expect.push_back(t);
        const auto& pr = probs[static_cast<std::size_t>(m)];
        EXPECT_EQ(pr.time_index, expect);
        for (std::size_t r = 0; r < expect.size(); ++r) {
            EXPECT_TRUE(pr.response.row(static_cast<Eigen::Index>(r)) == y.row(expect[r]));
            EXPECT_TRUE(pr.design.row(static_cast<Eigen::Index>(r)) == y.row(expect[r] - 1));
        }
    }
}

TEST(PvarDesign, TooShortSeason) {
    const auto p = TimeSeriesPanel::from_matrix(oracle::random_matrix(5, 2, 3), 0, 4);
    EXPECT_THROW(scbm::pvar_design(p, 4, 2), scbm::LengthError);
}

TEST(VharDesign, MediumColumnIsWindowMean) {
    Matrix y(20, 1);
    for (int t = 0; t < 20; ++t) y(t, 0) = t * t + 1.0;
    const auto prob = scbm::vhar_design(TimeSeriesPanel::from_matrix(y), 2, 3);
    EXPECT_EQ(prob.response.rows(), 17);
    for (Eigen::Index r = 0; r < prob.response.rows(); ++r) {
        const Eigen::Index t = 3 + r;
        EXPECT_DOUBLE_EQ(prob.design(r, 1), (y(t - 1, 0) + y(t - 2, 0)) / 2.0);
        EXPECT_DOUBLE_EQ(prob.design(r, 0), y(t - 1, 0));
    }
}

TEST(VharDesign, EqualsLagDesignTimesRestriction) {
    const Matrix y = oracle::random_matrix(80, 3, 4);
    const auto prob = scbm::vhar_design(TimeSeriesPanel::from_matrix(y), 5, 22);
    const Matrix xr = scbm::lag_design(y, 22, 22) * scbm::vhar_restriction(3, 5, 22);
    EXPECT_LT((prob.design - xr).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(prob.effective_size(), 80 - 22);
    EXPECT_THROW(scbm::vhar_design(TimeSeriesPanel::from_matrix(oracle::random_matrix(32, 3, 4)), 5, 22), scbm::LengthError);
}

TEST(Ols, NoiselessRecovery) {
    const Matrix x = oracle::random_matrix(60, 4, 5), b = oracle::random_matrix(4, 3, 6);
    EXPECT_LT((scbm::ols(make_problem(x, x * b)) - b).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Ols, OrthonormalDesign) {
    const Matrix x = orthonormal_columns(30, 5, 7), y = oracle::random_matrix(30, 2, 8);
    EXPECT_LT((scbm::ols(make_problem(x, y)) - x.transpose() * y).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Ols, MatchesNormalEquations) {
    const Matrix x = oracle::random_matrix(50, 5, 9), y = oracle::random_matrix(50, 1, 10);
    const Matrix ne = (x.transpose() * x).ldlt().solve(x.transpose() * y);
    EXPECT_LT((scbm::ols(make_problem(x, y)) - ne).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Ols, RankDeficient) {
    Matrix x = oracle::random_matrix(20, 3, 11);
    x.col(2) = x.col(0) + x.col(1);
    try {
        scbm::ols(make_problem(x, oracle::random_matrix(20, 1, 12)));
        FAIL() << "expected RankDeficient";
    } catch (const scbm::RankDeficient& e) {
        EXPECT_EQ(e.rank(), 2);
    }
}

TEST(Lasso, ZeroPenaltyIsOls) {
    const Matrix x = oracle::random_matrix(60, 5, 13), y = oracle::random_matrix(60, 2, 14);
    const auto prob = make_problem(x, y);
    EXPECT_LT((scbm::lasso_fista(prob, 0.0).coef - scbm::ols(prob)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Lasso, OrthonormalClosedForm) {
    const Matrix x = orthonormal_columns(40, 6, 15);
    Vector b0(6);
    b0 << 3.0, -2.0, 0.1, 0.0, -0.2, 1.5;
    const Matrix y = x * b0;
    const double n = 40.0, lambda = 0.02;
    const Matrix expect = scbm::soft_threshold(x.transpose() * y, lambda * n / 2.0);
    EXPECT_LT((scbm::lasso_fista(make_problem(x, y), lambda).coef - expect).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_GT((expect.array() == 0.0).count(), 0);
}

TEST(Lasso, MatchesCoordinateDescent) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Matrix x = oracle::random_matrix(20, 5, 100 + seed), y = oracle::random_matrix(20, 1, 200 + seed);
        const Vector ref = oracle::lasso_cd(x, y.col(0), 0.1);
        const auto fit = scbm::lasso_fista(make_problem(x, y), 0.1);
        EXPECT_TRUE(fit.converged);
        EXPECT_LE(std::abs(fit.objective - oracle::lasso_objective(x, y, ref, 0.1)), 1e-6);
    }
}

TEST(Lasso, ObjectiveMonotoneInIterations) {
    const Matrix x = oracle::random_matrix(30, 8, 17), y = oracle::random_matrix(30, 2, 18);
    const auto prob = make_problem(x, y);
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 120; ++k) {
        scbm::LassoOptions o;
        o.max_iter = k;
        o.tol = 0.0;
        const auto fit = scbm::lasso_fista(prob, 0.05, o);
        EXPECT_LE(fit.objective, prev + 1e-15);
        EXPECT_NEAR(fit.objective, scbm::lasso_objective(prob, fit.coef, 0.05), 1e-12);
        prev = fit.objective;
    }
}

TEST(Lasso, NonConvergenceFlagAndBadLambda) {
    const auto prob = make_problem(oracle::random_matrix(30, 8, 19), oracle::random_matrix(30, 1, 20));
    scbm::LassoOptions o;
    o.max_iter = 2;
    EXPECT_FALSE(scbm::lasso_fista(prob, 0.01, o).converged);
    EXPECT_THROW(scbm::lasso_fista(prob, -1.0), scbm::DomainError);
}

TEST(SelectLambda, DefaultsAndSingleton) {
    const auto g = scbm::default_lambda_grid();
    ASSERT_EQ(g.size(), 19u);
    EXPECT_NEAR(g.front(), 0.10, 1e-12);
    EXPECT_NEAR(g.back(), 1.00, 1e-12);
    EXPECT_EQ(scbm::kLambdaFolds, 10);
    const auto p = TimeSeriesPanel::from_matrix(oracle::random_matrix(200, 3, 21), 0, 4);
    scbm::ModelConfig cfg;
    cfg.lambda_grid = {0.35};
    EXPECT_DOUBLE_EQ(scbm::select_lambda(p, cfg).chosen, 0.35);
}

TEST(SelectLambda, PureNoisePrefersHeavyShrinkage) {
    int heavy = 0;
    const int runs = 20;
    for (int r = 0; r < runs; ++r) {
        const auto p = TimeSeriesPanel::from_matrix(oracle::random_matrix(400, 6, 300 + r), 0, 4);
        scbm::ModelConfig cfg;
        const double c = scbm::select_lambda(p, cfg).chosen;
        if (c >= 0.8 - 1e-12) ++heavy;
    }
    EXPECT_GE(heavy, runs * 8 / 10);
}

TEST(FitStageChain, PvarSingleLagIsTransposedBlock) {
    const auto design = scbm::path_preset(ChainKind::pvar_cyclic, "path1", 8);
    const auto sys = scbm::sample_pvar_system(8, design, 1, 3);
    const auto panel = scbm::simulate(sys, 400, 500, 4);
    scbm::ModelConfig cfg;
    cfg.estimator = scbm::EstimatorKind::ols;
    const auto chain = scbm::fit_stage_chain(panel, cfg);
    const auto probs = scbm::pvar_design(panel, 4, 1);
    ASSERT_EQ(chain.stages(), 4u);
    for (std::size_t m = 0; m < 4; ++m) EXPECT_TRUE(chain.matrices[m] == scbm::ols(probs[m]));
}

TEST(FitStageChain, VharLongToShort) {
    const auto design = scbm::path_preset(ChainKind::vhar_linear, "path1", 6);
    const auto sys = scbm::sample_vhar_system(6, design, 1, 3, 10, 5);
    const auto panel = scbm::simulate(sys, 600, 300, 6);
    scbm::ModelConfig cfg;
    cfg.kind = ChainKind::vhar_linear;
    cfg.b_m = 3;
    cfg.b_l = 10;
    cfg.estimator = scbm::EstimatorKind::ols;
    const auto chain = scbm::fit_stage_chain(panel, cfg);
    const Matrix b = scbm::ols(scbm::vhar_design(panel, 3, 10));
    ASSERT_EQ(chain.stages(), 3u);
    EXPECT_TRUE(chain.matrices[0] == b.middleRows(12, 6));
    EXPECT_TRUE(chain.matrices[1] == b.middleRows(6, 6));
    EXPECT_TRUE(chain.matrices[2] == b.middleRows(0, 6));
}

TEST(FitStageChain, RankConstraints) {
    const auto panel = TimeSeriesPanel::from_matrix(oracle::random_matrix(200, 6, 22), 0, 4);
    scbm::ModelConfig cfg;
    cfg.estimator = scbm::EstimatorKind::ols;
    cfg.ranks = scbm::ranks_from_flat({2, 3, 3, 3, 3, 2, 2, 2});
    EXPECT_NO_THROW(scbm::fit_stage_chain(panel, cfg));
    cfg.ranks = scbm::ranks_from_flat({2, 3, 3, 2, 3, 2, 2, 2});
    EXPECT_THROW(scbm::fit_stage_chain(panel, cfg), scbm::RankConstraintViolation);
    cfg.kind = ChainKind::vhar_linear;
    cfg.ranks = scbm::ranks_from_flat({3, 3, 2, 3, 3, 3});
    EXPECT_THROW(scbm::fit_stage_chain(panel, cfg), scbm::RankConstraintViolation);
}

TEST(FitStageChain, ErrorDecreasesWithLength) {
    const auto design = scbm::path_preset(ChainKind::pvar_cyclic, "path1", 18);
    const auto sys = scbm::sample_pvar_system(18, design, 1, 8);
    std::vector<double> short_err, long_err;
    for (std::uint64_t r = 0; r < 20; ++r) {
        for (int len : {200, 2000}) {
            const auto panel = scbm::simulate(sys, len, 500, scbm::derive_seed(8, {static_cast<std::uint64_t>(len), r}));
            scbm::ModelConfig cfg;
            const auto chain = scbm::fit_stage_chain(panel, cfg);
            const auto truth = scbm::true_stage_matrices(sys);
            double e = 0;
            for (std::size_t m = 0; m < 4; ++m) e += scbm::spectral_error(chain.matrices[m], truth[m]) / 4.0;
            (len == 200 ? short_err : long_err).push_back(e);
        }
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    };
    EXPECT_LT(median(long_err), median(short_err));
}

TEST(StageChainJson, RoundTrip) {
    const auto panel = TimeSeriesPanel::from_matrix(oracle::random_matrix(200, 4, 23), 0, 4);
    scbm::ModelConfig cfg;
    cfg.lambda_multiplier = 0.5;
    cfg.ranks = scbm::ranks_from_flat({2, 2, 2, 2, 2, 2, 2, 2});
    const auto chain = scbm::fit_stage_chain(panel, cfg);
    const auto back = scbm::stage_chain_from_json(scbm::json::parse(scbm::stage_chain_to_json(chain).dump()));
    ASSERT_EQ(back.stages(), 4u);
    for (std::size_t m = 0; m < 4; ++m) EXPECT_TRUE(back.matrices[m] == chain.matrices[m]);
    EXPECT_EQ(back.ranks, chain.ranks);
    EXPECT_EQ(back.node_names, chain.node_names);
}
