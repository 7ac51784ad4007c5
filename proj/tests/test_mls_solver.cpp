#include <gtest/gtest.h>

#include "mkinterp/mls_solver.hpp"
#include "oracles.hpp"

using namespace mkinterp;

namespace {

FeatureGram two_node_gram() {
    Eigen::MatrixXd V(2, 2);
    V << 1, 0, 1, 1;
    return FeatureGram::from_matrix(V);
}

double potential(const FeatureGram& g, int m, const Eigen::VectorXd& y, const Eigen::VectorXd& c) {
    return contract_m(g, m, c) / m - y.dot(c);
}

double regularized_objective(const FeatureGram& g, int m, const Eigen::VectorXd& y, double sigma,
                             const Eigen::VectorXd& c) {
    return (contract_m_minus_1(g, m, c) - y).squaredNorm() + sigma * contract_m(g, m, c);
}

}  // namespace

TEST(SolveMultilinear, QuarticExample) {
    const FeatureGram g = two_node_gram();
    const Eigen::VectorXd y = Eigen::Vector2d(8, 9);
    const SolveReport r = solve_multilinear(g, 4, y);
    ASSERT_TRUE(r.converged);
    EXPECT_LE((r.coefficients - Eigen::Vector2d(1, 1)).norm(), 1e-8);
    EXPECT_LE(r.residual_norm, 1e-10);
    // residual checked against the explicit tensor as well
    EXPECT_LE((oracle::dense_contract_m_minus_1(dense_tensor(g, 4), r.coefficients) - y).norm(), 1e-9);
}

TEST(SolveMultilinear, ZeroDataGivesZeroCoefficients) {
    for (InitKind init : {InitKind::Zero, InitKind::LinearSolve}) {
        SolverOptions opts;
        opts.init = init;
        const SolveReport r = solve_multilinear(two_node_gram(), 6, Eigen::Vector2d::Zero(), opts);
        EXPECT_TRUE(r.converged);
        EXPECT_EQ(r.coefficients, Eigen::Vector2d::Zero());
    }
}

TEST(SolveMultilinear, LinearCaseExample) {
    const SolveReport r = solve_multilinear(two_node_gram(), 2, Eigen::Vector2d(1, 2));
    ASSERT_TRUE(r.converged);
    EXPECT_LE((r.coefficients - Eigen::Vector2d(0, 1)).norm(), 1e-12);
}

TEST(SolveMultilinear, RejectsBadInput) {
    EXPECT_THROW(solve_multilinear(two_node_gram(), 3, Eigen::Vector2d(1, 2)), OddOrderUnsupported);
    EXPECT_THROW(solve_multilinear(two_node_gram(), 4, Eigen::Vector3d(1, 2, 3)), DimensionMismatch);
    SolverOptions bad;
    bad.line_search_shrink = 1.5;
    EXPECT_THROW(solve_multilinear(two_node_gram(), 4, Eigen::Vector2d(1, 2), bad), InvalidInput);
}

TEST(SolveMultilinear, InconsistentRankOneDesign) {
    Eigen::MatrixXd V(2, 1);
    V << 1, 1;
    SolverOptions opts;
    opts.max_iterations = 30;
    const SolveReport r = solve_multilinear(FeatureGram::from_matrix(V), 4, Eigen::Vector2d(1, 2), opts);
    EXPECT_TRUE(r.singular_design);
    EXPECT_FALSE(r.converged);
}

TEST(SolveMultilinear, ConsistentRankDeficientDesignStillSolves) {
    Eigen::MatrixXd V(2, 1);
    V << 1, 1;
    const SolveReport r = solve_multilinear(FeatureGram::from_matrix(V), 4, Eigen::Vector2d(8, 8));
    EXPECT_TRUE(r.singular_design);
    EXPECT_TRUE(r.converged);
}

TEST(ResidualNorm, Examples) {
    const FeatureGram g = two_node_gram();
    EXPECT_EQ(residual_norm(g, 4, Eigen::Vector2d(1, 1), Eigen::Vector2d(8, 9)), 0.0);
    EXPECT_DOUBLE_EQ(residual_norm(g, 4, Eigen::Vector2d::Zero(), Eigen::Vector2d(3, 4)), 5.0);
    EXPECT_THROW(residual_norm(g, 4, Eigen::Vector2d::Zero(), Eigen::Vector3d(3, 4, 5)), DimensionMismatch);
}

TEST(SolveMultilinear, PotentialIsConvexAlongSegments) {
    SeededSampler rng(77);
    for (int trial = 0; trial < 60; ++trial) {
        const int m = 2 * (1 + trial % 3);
        const FeatureGram g = oracle::random_gram(rng, 4, 6);
        const Eigen::VectorXd y = rng.normal_vector(4);
        const Eigen::VectorXd a = rng.normal_vector(4), b = rng.normal_vector(4);
        for (double t : {0.1, 0.25, 0.5, 0.75, 0.9}) {
            const double lhs = potential(g, m, y, (1 - t) * a + t * b);
            const double rhs = (1 - t) * potential(g, m, y, a) + t * potential(g, m, y, b);
            EXPECT_LE(lhs, rhs + 1e-10);
        }
    }
}

TEST(SolveMultilinear, UniqueAcrossInitializations) {
    SeededSampler rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform() * 10);
        const int K = n + static_cast<int>(rng.uniform() * (21 - n));
        const int m = trial % 2 ? 4 : 6;
        const FeatureGram g = oracle::random_gram(rng, n, K);
        const Eigen::VectorXd y = rng.normal_vector(n);
        SolverOptions zero;
        zero.init = InitKind::Zero;
        const SolveReport a = solve_multilinear(g, m, y, zero);
        const SolveReport b = solve_multilinear(g, m, y);
        ASSERT_TRUE(a.converged && b.converged) << "trial " << trial;
        EXPECT_LE((a.coefficients - b.coefficients).norm(), 1e-6) << "trial " << trial;
    }
}

TEST(SolveMultilinear, MatchesGridSearchOracle) {
    SeededSampler rng(31);
    for (int n = 1; n <= 4; ++n) {
        const FeatureGram g = oracle::random_gram(rng, n, n + 2);
        const Eigen::VectorXd y = rng.normal_vector(n);
        const SolveReport r = solve_multilinear(g, 4, y);
        ASSERT_TRUE(r.converged);
        const Eigen::VectorXd brute = oracle::grid_minimize(
            [&](const Eigen::VectorXd& c) { return potential(g, 4, y, c); }, Eigen::VectorXd::Zero(n),
            4.0 * (1.0 + r.coefficients.cwiseAbs().maxCoeff()), 1e-6);
        EXPECT_LE((brute - r.coefficients).norm(), 1e-4) << "n=" << n;
    }
}

TEST(SolveMultilinear, OrderTwoMatchesDirectLinearSolve) {
    SeededSampler rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 2 + trial % 8;
        const FeatureGram g = oracle::random_gram(rng, n, n + 3);
        const Eigen::VectorXd y = rng.normal_vector(n);
        const Eigen::VectorXd direct = oracle::gauss_solve(g.V * g.V.transpose(), y);
        SolverOptions zero;
        zero.init = InitKind::Zero;
        for (const SolverOptions& o : {SolverOptions{}, zero}) {
            const SolveReport r = solve_multilinear(g, 2, y, o);
            ASSERT_TRUE(r.converged);
            EXPECT_LE((r.coefficients - direct).norm(), 1e-10 * direct.norm());
        }
    }
}

TEST(SolveRegularized, LargeSigmaShrinksToZero) {
    const FeatureGram g = two_node_gram();
    const Eigen::VectorXd y = Eigen::Vector2d(8, 9);
    const double sigma = 1e6 * y.norm();
    const SolveReport r = solve_regularized(g, 4, y, sigma);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.coefficients.norm(), 1e-2);
    EXPECT_LE(oracle::rel_err(regularized_objective(g, 4, y, sigma, r.coefficients), y.squaredNorm()), 1e-6);
}

TEST(SolveRegularized, SmallSigmaApproachesInterpolant) {
    const FeatureGram g = two_node_gram();
    const Eigen::VectorXd y = Eigen::Vector2d(8, 9);
    const SolveReport interp = solve_multilinear(g, 4, y);
    const SolveReport r = solve_regularized(g, 4, y, 1e-6);
    ASSERT_TRUE(r.converged);
    EXPECT_LE(residual_norm(g, 4, r.coefficients, y), 1e-2);
    EXPECT_LE(std::abs(contract_m(g, 4, r.coefficients) - 17.0), 0.17);
    EXPECT_LE((r.coefficients - interp.coefficients).norm(), 1e-3);

    double prev = std::numeric_limits<double>::infinity();
    for (double sigma : {1e-1, 1e-2, 1e-3, 1e-4}) {
        const double dist = (solve_regularized(g, 4, y, sigma).coefficients - interp.coefficients).norm();
        EXPECT_LT(dist, prev) << sigma;
        prev = dist;
    }
}

TEST(SolveRegularized, StationaryPointMatchesFiniteDifferences) {
    SeededSampler rng(17);
    const FeatureGram g = oracle::random_gram(rng, 3, 5);
    const Eigen::VectorXd y = rng.normal_vector(3);
    const SolveReport r = solve_regularized(g, 4, y, 0.3);
    ASSERT_TRUE(r.converged);
    const Eigen::VectorXd fd = oracle::fd_gradient(
        [&](const Eigen::VectorXd& c) { return regularized_objective(g, 4, y, 0.3, c); }, r.coefficients);
    EXPECT_LE(fd.norm(), 1e-6);
    EXPECT_FALSE(r.local_minimizers.empty());
}

TEST(SolveRegularized, RejectsNonPositiveSigma) {
    EXPECT_THROW(solve_regularized(two_node_gram(), 4, Eigen::Vector2d(1, 1), 0.0), InvalidInput);
}
