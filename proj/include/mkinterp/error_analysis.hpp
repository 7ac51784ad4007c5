#pragma once

// Generalized power function, fill distance and the pointwise error bound
//
//     |s_m(x) - f(x)| <= 2 ||f||_{B^{m/(m-1)}} P_m(x),
//     P_m(x) = min_theta || Phi_2(x, .) - sum_i theta_i Phi_2(x_i, .) ||_{B^m}
//            = min_theta ( sum_k (phi_k(x) - sum_i theta_i phi_k(x_i))^m )^{1/m}.
//
// The minimization is convex for even m and is solved by the same damped Newton
// as the interpolation system, warm-started at the least-squares (m = 2)
// minimizer. Line search only decreases the objective, so the computed P_m never
// exceeds the l_m norm of the m = 2 residual, which is at most P_2.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mkinterp/errors.hpp"
#include "mkinterp/feature_model.hpp"
#include "mkinterp/interpolant.hpp"
#include "mkinterp/mls_solver.hpp"
#include "mkinterp/multi_tensor.hpp"
#include "mkinterp/parallel.hpp"

namespace mkinterp {

struct PowerFunctionValue {
    double value = 0.0;
    Eigen::VectorXd theta;  // minimizing weights
    int iterations = 0;
};

/// Power functions of a fixed node set; caches the feature Gram.
class PowerFunction {
public:
    PowerFunction(FeatureModel model, const Eigen::Ref<const Eigen::MatrixXd>& points,
                  SolverOptions opts = {})
        : model_(std::move(model)), gram_(build_gram(model_, points)), opts_(std::move(opts)) {
        opts_.validate();
        neg_v_ = -gram_.V;
    }

    const FeatureGram& gram() const { return gram_; }

    PowerFunctionValue evaluate(int m, const Eigen::Ref<const Eigen::VectorXd>& x) const {
        require_even_order(m);
        const Eigen::VectorXd phi = eval_features(model_, x);
        Eigen::VectorXd theta0 = detail::linear_solve(gram_, gram_.V * phi);
        detail::PowerSumNewton newton(neg_v_, phi, Eigen::VectorXd::Zero(gram_.n()), m, opts_);
        detail::PowerSumResult res =
            newton.run(std::move(theta0), detail::StopRule::NewtonDecrement, kDecrementTol);
        if (!res.converged) {
            SolveReport rep;
            rep.coefficients = res.z;
            rep.residual_norm = res.gradient_norm;
            rep.iterations = res.iterations;
            rep.objective_trace = std::move(res.trace);
            throw NotConverged(std::move(rep), "power function minimization did not converge");
        }
        const Eigen::VectorXd r = phi - gram_.V.transpose() * res.z;
        return PowerFunctionValue{banach_norm_direct(r, m), std::move(res.z), res.iterations};
    }

    double operator()(int m, const Eigen::Ref<const Eigen::VectorXd>& x) const {
        return evaluate(m, x).value;
    }

private:
    static constexpr double kDecrementTol = 1e-14;

    FeatureModel model_;
    FeatureGram gram_;
    Eigen::MatrixXd neg_v_;
    SolverOptions opts_;
};

/// P_m(x) by convex minimization in feature space.
inline double power_function(const FeatureModel& model, const NodeSet& nodes, int m,
                             const Eigen::Ref<const Eigen::VectorXd>& x,
                             const SolverOptions& opts = {}) {
    return PowerFunction(model, nodes.points, opts)(m, x);
}

/// Classical closed form P_2(x) = (Phi_2(x,x) - B_2(x)^T A_2^{-1} B_2(x))^{1/2}. Kernel
/// sums and the Cholesky solve run in long double: the subtraction cancels to rounding
/// level near nodes, and the square root would amplify double rounding to ~1e-8.
inline double power_function_p2_closed(const FeatureModel& model, const NodeSet& nodes,
                                       const Eigen::Ref<const Eigen::VectorXd>& x) {
    using Real = long double;
    using MatrixL = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
    using VectorL = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
    const Eigen::Index n = nodes.size();
    MatrixL Phi(model.truncation(), n);
    for (Eigen::Index i = 0; i < n; ++i)
        Phi.col(i) = eval_features(model, nodes.points.row(i).transpose()).cast<Real>();
    const VectorL phi_x = eval_features(model, x).cast<Real>();
    const MatrixL A = Phi.transpose() * Phi;
    const VectorL B = Phi.transpose() * phi_x;
    Eigen::LLT<MatrixL> llt(A);
    if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14L))
        throw SingularGram("Gram matrix A_2 is singular");
    const VectorL w = llt.matrixL().solve(B);
    const Real p2 = phi_x.squaredNorm() - w.squaredNorm();
    return static_cast<double>(std::sqrt(std::max(p2, Real(0))));
}

/// max over a uniform grid (grid_per_dim points per axis) of the distance to the
/// nearest node; approximates h = sup_x min_i ||x - x_i||_2 from below.
inline double fill_distance(const Eigen::Ref<const Eigen::MatrixXd>& points, const Domain& domain,
                            int grid_per_dim) {
    if (points.rows() == 0) throw InvalidInput("fill distance needs at least one node");
    if (points.cols() != domain.dim()) throw DimensionMismatch("node dimension mismatch");
    const Eigen::MatrixXd grid = tensor_grid(domain, grid_per_dim);
    double h = 0.0;
    for (Eigen::Index g = 0; g < grid.rows(); ++g) {
        const double nearest = (points.rowwise() - grid.row(g)).rowwise().norm().minCoeff();
        h = std::max(h, nearest);
    }
    return h;
}

inline double fill_distance(const NodeSet& nodes, const Domain& domain, int grid_per_dim) {
    return fill_distance(nodes.points, domain, grid_per_dim);
}

/// Half the diagonal of one grid cell: the true sup exceeds the grid estimate by at most this.
inline double fill_distance_resolution(const Domain& domain, int grid_per_dim) {
    return 0.5 * ((domain.upper() - domain.lower()) / double(grid_per_dim - 1)).norm();
}

/// 2 ||f|| P_m(x).
inline double error_bound(double f_norm, double p_m) {
    if (!(f_norm >= 0.0) || !(p_m >= 0.0))
        throw InvalidInput("error bound needs f_norm >= 0 and p_m >= 0");
    return 2.0 * f_norm * p_m;
}

struct PowerReport {
    Eigen::MatrixXd eval_points;
    Eigen::VectorXd p_m;
    Eigen::VectorXd p_2;
    Eigen::VectorXd bound;
    double fill_distance = 0.0;
    double fill_resolution = 0.0;
    int order = 2;
};

inline PowerReport power_report(const FeatureModel& model, const NodeSet& nodes, int m,
                                const Eigen::Ref<const Eigen::MatrixXd>& eval_points,
                                double f_norm, int fill_grid_per_dim,
                                const SolverOptions& opts = {}) {
    require_even_order(m);
    const PowerFunction pf(model, nodes.points, opts);
    PowerReport rep;
    rep.eval_points = eval_points;
    rep.order = m;
    const Eigen::Index q = eval_points.rows();
    rep.p_m.resize(q);
    rep.p_2.resize(q);
    rep.bound.resize(q);
    parallel_for(q, [&](Eigen::Index i) {
        const Eigen::VectorXd x = eval_points.row(i).transpose();
        rep.p_2[i] = pf(2, x);
        rep.p_m[i] = m == 2 ? rep.p_2[i] : pf(m, x);
        rep.bound[i] = error_bound(f_norm, rep.p_m[i]);
    });
    rep.fill_distance = fill_distance(nodes.points, model.domain(), fill_grid_per_dim);
    rep.fill_resolution = fill_distance_resolution(model.domain(), fill_grid_per_dim);
    return rep;
}

/// Quasi-uniform nodes: cell midpoints in 1-D, Halton points (bases 2, 3, 5, ...,
/// indices 1..n) in higher dimensions.
inline Eigen::MatrixXd quasi_uniform_nodes(const Domain& domain, int n) {
    if (n < 1) throw InvalidInput("need at least one node");
    static constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
    const int d = domain.dim();
    if (d > static_cast<int>(std::size(kPrimes))) throw InvalidInput("dimension too large");
    Eigen::MatrixXd pts(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            double u;
            if (d == 1) {
                u = (2.0 * i + 1.0) / (2.0 * n);
            } else {
                u = 0.0;
                double f = 1.0;
                for (int k = i + 1; k > 0; k /= kPrimes[j]) {
                    f /= kPrimes[j];
                    u += f * (k % kPrimes[j]);
                }
            }
            pts(i, j) = domain.lower()[j] + u * (domain.upper()[j] - domain.lower()[j]);
        }
    }
    return pts;
}

struct StudyRow {
    Eigen::Index n = 0;
    double h = 0.0;
    double max_error = 0.0;
    double max_bound = 0.0;
    double slope = std::numeric_limits<double>::quiet_NaN();  // log-log vs previous row
    bool bound_holds = true;  // error <= bound + 1e-6 (1 + ||f||) at every eval point
};

struct StudyResult {
    std::vector<StudyRow> rows;
    double f_norm = 0.0;
    bool bound_holds_everywhere() const {
        return std::all_of(rows.begin(), rows.end(), [](const StudyRow& r) { return r.bound_holds; });
    }
};

/// Convergence study for a target f = alpha_f^T phi in the truncated span: for each
/// node set, fit s_m to f's node values and compare |f - s_m| with 2 ||f|| P_m on
/// eval_grid. Solver failures propagate.
inline StudyResult convergence_study(const FeatureModel& model,
                                     const Eigen::Ref<const Eigen::VectorXd>& alpha_f, int m,
                                     const std::vector<Eigen::MatrixXd>& node_sets,
                                     const Eigen::Ref<const Eigen::MatrixXd>& eval_grid,
                                     int fill_grid_per_dim, const SolverOptions& opts = {}) {
    require_even_order(m);
    if (alpha_f.size() != model.truncation())
        throw DimensionMismatch("target needs one coefficient per feature");
    StudyResult out;
    out.f_norm = banach_norm_direct(alpha_f, double(m) / (m - 1));
    const double slack = 1e-6 * (1.0 + out.f_norm);

    std::vector<Eigen::VectorXd> grid_phi;
    grid_phi.reserve(static_cast<std::size_t>(eval_grid.rows()));
    for (Eigen::Index g = 0; g < eval_grid.rows(); ++g)
        grid_phi.push_back(eval_features(model, eval_grid.row(g).transpose()));

    for (const Eigen::MatrixXd& pts : node_sets) {
        Eigen::VectorXd y(pts.rows());
        for (Eigen::Index i = 0; i < pts.rows(); ++i)
            y[i] = eval_features(model, pts.row(i).transpose()).dot(alpha_f);
        const Interpolant s = fit(model, NodeSet::make(pts, y), m, opts);
        const PowerFunction pf(model, pts, opts);

        StudyRow row;
        row.n = pts.rows();
        row.h = fill_distance(pts, model.domain(), fill_grid_per_dim);
        Eigen::VectorXd bounds(eval_grid.rows());
        parallel_for(eval_grid.rows(), [&](Eigen::Index g) {
            bounds[g] = error_bound(out.f_norm, pf(m, eval_grid.row(g).transpose()));
        });
        for (Eigen::Index g = 0; g < eval_grid.rows(); ++g) {
            const double err = std::abs(grid_phi[static_cast<std::size_t>(g)].dot(alpha_f - s.alpha()));
            const double bound = bounds[g];
            row.max_error = std::max(row.max_error, err);
            row.max_bound = std::max(row.max_bound, bound);
            if (err > bound + slack) row.bound_holds = false;
        }
        if (!out.rows.empty()) {
            const StudyRow& prev = out.rows.back();
            if (prev.max_error > 0.0 && row.max_error > 0.0 && prev.h > 0.0 && row.h > 0.0 &&
                prev.h != row.h)
                row.slope = std::log(row.max_error / prev.max_error) / std::log(row.h / prev.h);
        }
        out.rows.push_back(row);
    }
    return out;
}

}  // namespace mkinterp
