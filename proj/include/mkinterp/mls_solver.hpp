#pragma once

// Solvers for the multi-linear system A_m c^{m-1} = y and the regularized
// coefficient problem, working on the rank-one-sum form of A_m.
//
// Interpolation: A_m c^{m-1} - y is the gradient of the convex potential
//
//     F(c) = (1/m) A_m c^m - y . c = (1/m) sum_k (v_k . c)^m - y . c,
//
// so the system is solved by damped Newton on F with Armijo backtracking.
// Hessian: (m-1) sum_k (v_k . c)^{m-2} v_k v_k^T. Convergence is declared on the
// system residual ||A_m c^{m-1} - y||_2.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mkinterp/errors.hpp"
#include "mkinterp/multi_tensor.hpp"
#include "mkinterp/sampling.hpp"

namespace mkinterp {

enum class InitKind { Zero, LinearSolve };

struct SolverOptions {
    double residual_tol = 1e-10;  // absolute 2-norm
    int max_iterations = 200;
    double ridge_floor = 1e-12;
    double line_search_shrink = 0.5;
    double armijo_constant = 1e-4;
    InitKind init = InitKind::LinearSolve;
    std::optional<int> multistart;  // unset: 1 for interpolation, 8 for regularized
    std::uint64_t seed = 0;         // random multistart points

    void validate() const {
        if (!(residual_tol > 0.0)) throw InvalidInput("residual_tol must be > 0");
        if (max_iterations < 1) throw InvalidInput("max_iterations must be >= 1");
        if (!(ridge_floor > 0.0)) throw InvalidInput("ridge_floor must be > 0");
        if (!(line_search_shrink > 0.0 && line_search_shrink < 1.0))
            throw InvalidInput("line_search_shrink must lie in (0, 1)");
        if (!(armijo_constant > 0.0 && armijo_constant < 1.0))
            throw InvalidInput("armijo_constant must lie in (0, 1)");
        if (multistart && *multistart < 1) throw InvalidInput("multistart must be >= 1");
    }
};

struct SolveReport {
    Eigen::VectorXd coefficients;
    // Interpolation: ||A_m c^{m-1} - y||_2. Regularized: ||grad G(c)||_2.
    double residual_norm = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
    std::vector<double> objective_trace;
    // V lacks full row rank: A_m is only semi-definite and the system may be inconsistent.
    bool singular_design = false;
    // Regularized only: distinct converged local minimizers over all starts.
    std::vector<Eigen::VectorXd> local_minimizers;
};

class NotConverged : public Error {
public:
    explicit NotConverged(SolveReport report, const std::string& what = "solver did not converge")
        : Error(what + " (residual " + std::to_string(report.residual_norm) + " after " +
                std::to_string(report.iterations) + " iterations)"),
          report_(std::move(report)) {}
    const SolveReport& report() const { return report_; }

private:
    SolveReport report_;
};

class SingularDesign : public Error {
public:
    explicit SingularDesign(SolveReport report)
        : Error("feature Gram lacks full row rank; the multi-linear system has no solution "
                "(need K >= n and independent feature rows)"),
          report_(std::move(report)) {}
    const SolveReport& report() const { return report_; }

private:
    SolveReport report_;
};

/// ||A_m c^{m-1} - y||_2.
inline double residual_norm(const FeatureGram& g, int m,
                            const Eigen::Ref<const Eigen::VectorXd>& c,
                            const Eigen::Ref<const Eigen::VectorXd>& y) {
    detail::check_length(g, y.size(), "value vector");
    return (contract_m_minus_1(g, m, c) - y).norm();
}

namespace detail {

inline Eigen::VectorXd odd_power(const Eigen::VectorXd& a, int e) {
    Eigen::VectorXd out(a.size());
    for (Eigen::Index k = 0; k < a.size(); ++k) out[k] = int_pow(a[k], e);
    return out;
}

// U diag(w) U^T
inline Eigen::MatrixXd weighted_gram(const Eigen::MatrixXd& U, const Eigen::VectorXd& w) {
    return U * w.asDiagonal() * U.transpose();
}

// Solves (H + mu I) p = rhs with mu = 0 first, then ridge_floor scaled up by 10
// until the Cholesky factorization succeeds.
inline Eigen::VectorXd ridge_solve(const Eigen::MatrixXd& H, const Eigen::VectorXd& rhs,
                                   double ridge_floor) {
    const double scale = std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
    double mu = 0.0;
    for (int attempt = 0; attempt < 40; ++attempt) {
        Eigen::MatrixXd Hr = H;
        Hr.diagonal().array() += mu;
        Eigen::LLT<Eigen::MatrixXd> llt(Hr);
        if (llt.info() == Eigen::Success) {
            Eigen::VectorXd p = llt.solve(rhs);
            if (p.allFinite()) return p;
        }
        mu = mu == 0.0 ? ridge_floor * scale : mu * 10.0;
    }
    return rhs / scale;
}

enum class StopRule { GradientNorm, NewtonDecrement };

struct PowerSumResult {
    Eigen::VectorXd z;
    double objective = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> trace;
};

// Damped Newton for the convex function
//     f(z) = (1/m) sum_k (b_k + (U^T z)_k)^m - y . z,     m even,
// grad f = U r^{m-1} - y,  hess f = (m-1) U diag(r^{m-2}) U^T,  r = b + U^T z.
// GradientNorm stops on ||grad f|| <= tol. NewtonDecrement stops on
// lambda^2/2 <= tol * |f| + floor, floor = (1/m) sum_k delta_k^m with delta_k the rounding
// level of r_k; a stall once the decrement is below the objective's rounding level also
// counts as converged under that rule.
class PowerSumNewton {
public:
    PowerSumNewton(const Eigen::MatrixXd& U, Eigen::VectorXd b, Eigen::VectorXd y, int m,
                   const SolverOptions& opts)
        : U_(U), b_(std::move(b)), y_(std::move(y)), m_(m), opts_(opts) {}

    double objective(const Eigen::VectorXd& z) const {
        const Eigen::VectorXd r = b_ + U_.transpose() * z;
        double s = 0.0;
        for (Eigen::Index k = 0; k < r.size(); ++k) s += int_pow(r[k], m_);
        return s / m_ - y_.dot(z);
    }

    // (1/m) sum_k |r_k|^m + |y . z|: scale of the rounding error in objective(z)
    double magnitude(const Eigen::VectorXd& z) const {
        const Eigen::VectorXd r = b_ + U_.transpose() * z;
        double s = 0.0;
        for (Eigen::Index k = 0; k < r.size(); ++k) s += int_pow(r[k], m_);
        return s / m_ + std::abs(y_.dot(z));
    }

    Eigen::VectorXd gradient(const Eigen::VectorXd& z) const {
        const Eigen::VectorXd r = b_ + U_.transpose() * z;
        return U_ * odd_power(r, m_ - 1) - y_;
    }

    PowerSumResult run(Eigen::VectorXd z, StopRule rule, double tol) const {
        PowerSumResult res;
        double f = objective(z);
        Eigen::VectorXd g = gradient(z);
        res.trace.push_back(f);
        for (;;) {
            const double gnorm = g.norm();
            if (!std::isfinite(gnorm) || !std::isfinite(f)) break;
            if (rule == StopRule::GradientNorm && gnorm <= tol) {
                res.converged = true;
                break;
            }
            if (gnorm == 0.0) {
                res.converged = true;
                break;
            }
            if (res.iterations >= opts_.max_iterations) break;

            const Eigen::VectorXd r = b_ + U_.transpose() * z;
            Eigen::VectorXd p;
            if (m_ > 2 && r.cwiseAbs().maxCoeff() == 0.0) {
                // Hessian vanishes: exact minimizer along the steepest-descent ray.
                p = -g;
                const Eigen::VectorXd up = U_.transpose() * p;
                double denom = 0.0;
                for (Eigen::Index k = 0; k < up.size(); ++k) denom += int_pow(up[k], m_);
                const double num = y_.dot(p);
                if (!(denom > 0.0) || !(num > 0.0)) break;
                p *= std::pow(num / denom, 1.0 / (m_ - 1));
            } else {
                Eigen::VectorXd w(r.size());
                for (Eigen::Index k = 0; k < r.size(); ++k) w[k] = (m_ - 1) * int_pow(r[k], m_ - 2);
                p = ridge_solve(weighted_gram(U_, w), -g, opts_.ridge_floor);
                if (!(g.dot(p) < 0.0)) p = -g;
            }

            const double slope = g.dot(p);
            if (rule == StopRule::NewtonDecrement && -slope / 2.0 <= tol * std::abs(f) + noise_floor(z)) {
                res.converged = true;
                break;
            }

            double step = 1.0;
            Eigen::VectorXd z_new = z + p;
            double f_new = objective(z_new);
            Eigen::VectorXd g_new;
            if (-slope <= 1e-10 * magnitude(z)) {
                // Predicted decrease is below the objective's rounding level: take the
                // full step as long as it still reduces the gradient.
                g_new = gradient(z_new);
                if (!(g_new.norm() < gnorm)) {
                    res.converged = rule == StopRule::NewtonDecrement;
                    break;
                }
            } else {
                while (!(f_new <= f + opts_.armijo_constant * step * slope) && step > 1e-20) {
                    step *= opts_.line_search_shrink;
                    z_new = z + step * p;
                    f_new = objective(z_new);
                }
                if (!(step > 1e-20)) break;
                g_new = gradient(z_new);
            }
            z = std::move(z_new);
            g = std::move(g_new);
            f = f_new;
            ++res.iterations;
            res.trace.push_back(f);
        }
        res.objective = f;
        res.gradient_norm = g.norm();
        res.z = std::move(z);
        return res;
    }

private:
    double noise_floor(const Eigen::VectorXd& z) const {
        const Eigen::VectorXd scale = b_.cwiseAbs() + U_.cwiseAbs().transpose() * z.cwiseAbs();
        double s = 0.0;
        for (Eigen::Index k = 0; k < scale.size(); ++k)
            s += int_pow(64.0 * std::numeric_limits<double>::epsilon() * scale[k], m_);
        return s / m_;
    }

    const Eigen::MatrixXd& U_;
    Eigen::VectorXd b_;
    Eigen::VectorXd y_;
    int m_;
    const SolverOptions& opts_;
};

// Least-squares solution of (V V^T) c = y; minimum-norm when singular.
inline Eigen::VectorXd linear_solve(const FeatureGram& g, const Eigen::VectorXd& y) {
    const Eigen::MatrixXd A2 = g.V * g.V.transpose();
    if (g.full_row_rank) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(A2);
        if (ldlt.info() == Eigen::Success) {
            Eigen::VectorXd c = ldlt.solve(y);
            if (c.allFinite()) return c;
        }
    }
    return Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(A2).solve(y);
}

// Linear solve, rescaled by t = (y.c0 / A_m c0^m)^{1/(m-1)} (the minimizer of F along c0).
inline Eigen::VectorXd linear_warm_start(const FeatureGram& g, int m, const Eigen::VectorXd& y) {
    Eigen::VectorXd c0 = linear_solve(g, y);
    const double denom = contract_m(g, m, c0);
    const double num = y.dot(c0);
    if (num > 0.0 && denom > 0.0 && std::isfinite(num / denom))
        c0 *= std::pow(num / denom, 1.0 / (m - 1));
    return c0;
}

}  // namespace detail

/// Solves A_m c^{m-1} = y. Never throws on non-convergence: inspect `converged`.
inline SolveReport solve_multilinear(const FeatureGram& g, int m,
                                     const Eigen::Ref<const Eigen::VectorXd>& y,
                                     const SolverOptions& opts = {}) {
    require_even_order(m);
    detail::check_length(g, y.size(), "value vector");
    opts.validate();

    SolveReport report;
    report.singular_design = !g.full_row_rank;
    const Eigen::VectorXd yv = y;
    Eigen::VectorXd c0 = opts.init == InitKind::Zero ? Eigen::VectorXd::Zero(g.n())
                                                     : detail::linear_warm_start(g, m, yv);

    detail::PowerSumNewton newton(g.V, Eigen::VectorXd::Zero(g.K()), yv, m, opts);
    detail::PowerSumResult res = newton.run(std::move(c0), detail::StopRule::GradientNorm,
                                            opts.residual_tol);
    report.coefficients = std::move(res.z);
    report.residual_norm = residual_norm(g, m, report.coefficients, yv);
    report.iterations = res.iterations;
    report.converged = res.converged && report.residual_norm <= opts.residual_tol;
    report.objective_trace = std::move(res.trace);
    return report;
}

namespace detail {

// G(c) = ||A_m c^{m-1} - y||^2 + sigma A_m c^m and its derivatives. With a = V^T c,
// r = V a^{m-1} - y and J = (m-1) V diag(a^{m-2}) V^T:
//   grad G = 2 J r + sigma m V a^{m-1}
//   hess G = 2 J^2 + 2 (m-1)(m-2) V diag(a^{m-3} (V^T r)) V^T + sigma m J
class RegularizedObjective {
public:
    RegularizedObjective(const FeatureGram& g, int m, Eigen::VectorXd y, double sigma)
        : g_(g), m_(m), y_(std::move(y)), sigma_(sigma) {}

    double value(const Eigen::VectorXd& c) const {
        const Eigen::VectorXd a = g_.V.transpose() * c;
        double pen = 0.0;
        for (Eigen::Index k = 0; k < a.size(); ++k) pen += int_pow(a[k], m_);
        return (g_.V * odd_power(a, m_ - 1) - y_).squaredNorm() + sigma_ * pen;
    }

    Eigen::VectorXd gradient(const Eigen::VectorXd& c) const {
        const Eigen::VectorXd a = g_.V.transpose() * c;
        const Eigen::VectorXd am1 = odd_power(a, m_ - 1);
        const Eigen::VectorXd r = g_.V * am1 - y_;
        return 2.0 * jacobian(a) * r + sigma_ * m_ * (g_.V * am1);
    }

    // Newton matrix when positive definite, else the Gauss-Newton part 2 J^2 + sigma m J.
    Eigen::VectorXd direction(const Eigen::VectorXd& c, const Eigen::VectorXd& grad,
                              double ridge_floor) const {
        const Eigen::VectorXd a = g_.V.transpose() * c;
        const Eigen::MatrixXd J = jacobian(a);
        const Eigen::MatrixXd gn = 2.0 * J * J + sigma_ * m_ * J;
        if (m_ > 2) {
            const Eigen::VectorXd r = g_.V * odd_power(a, m_ - 1) - y_;
            const Eigen::VectorXd vr = g_.V.transpose() * r;
            Eigen::VectorXd w(a.size());
            for (Eigen::Index k = 0; k < a.size(); ++k)
                w[k] = 2.0 * (m_ - 1) * (m_ - 2) * int_pow(a[k], m_ - 3) * vr[k];
            const Eigen::MatrixXd H = gn + weighted_gram(g_.V, w);
            Eigen::LLT<Eigen::MatrixXd> llt(H);
            if (llt.info() == Eigen::Success) {
                Eigen::VectorXd p = llt.solve(-grad);
                if (p.allFinite() && grad.dot(p) < 0.0) return p;
            }
        }
        Eigen::VectorXd p = ridge_solve(gn, -grad, ridge_floor);
        if (!(grad.dot(p) < 0.0)) p = -grad;
        return p;
    }

private:
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& a) const {
        Eigen::VectorXd w(a.size());
        for (Eigen::Index k = 0; k < a.size(); ++k) w[k] = (m_ - 1) * int_pow(a[k], m_ - 2);
        return weighted_gram(g_.V, w);
    }

    const FeatureGram& g_;
    int m_;
    Eigen::VectorXd y_;
    double sigma_;
};

inline PowerSumResult descend_regularized(const RegularizedObjective& obj, Eigen::VectorXd c,
                                          const SolverOptions& opts, double tol) {
    PowerSumResult res;
    double f = obj.value(c);
    Eigen::VectorXd grad = obj.gradient(c);
    res.trace.push_back(f);
    while (std::isfinite(f) && grad.allFinite()) {
        if (grad.norm() <= tol) {
            res.converged = true;
            break;
        }
        if (res.iterations >= opts.max_iterations) break;
        const Eigen::VectorXd p = obj.direction(c, grad, opts.ridge_floor);
        const double slope = grad.dot(p);
        double step = 1.0;
        Eigen::VectorXd c_new = c + p;
        double f_new = obj.value(c_new);
        while (!(f_new <= f + opts.armijo_constant * step * slope) && step > 1e-20) {
            step *= opts.line_search_shrink;
            c_new = c + step * p;
            f_new = obj.value(c_new);
        }
        if (!(step > 1e-20)) break;
        c = std::move(c_new);
        f = f_new;
        grad = obj.gradient(c);
        ++res.iterations;
        res.trace.push_back(f);
    }
    res.objective = f;
    res.gradient_norm = grad.norm();
    res.z = std::move(c);
    return res;
}

}  // namespace detail

/// Minimizes ||A_m c^{m-1} - y||^2 + sigma A_m c^m from several starts: the
/// interpolation warm start, then seeded normal points at the same scale.
/// Returns the best minimizer; all distinct converged minimizers are listed in
/// `local_minimizers`. Convergence: ||grad G|| <= residual_tol * max(1, ||y||^2).
inline SolveReport solve_regularized(const FeatureGram& g, int m,
                                     const Eigen::Ref<const Eigen::VectorXd>& y, double sigma,
                                     const SolverOptions& opts = {}) {
    require_even_order(m);
    detail::check_length(g, y.size(), "value vector");
    opts.validate();
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidInput("sigma must be > 0");

    const Eigen::VectorXd yv = y;
    const int starts = opts.multistart.value_or(8);
    const double tol = opts.residual_tol * std::max(1.0, yv.squaredNorm());
    detail::RegularizedObjective obj(g, m, yv, sigma);
    SeededSampler rng(opts.seed);

    const Eigen::VectorXd warm = detail::linear_warm_start(g, m, yv);
    const double scale = warm.norm() > 0.0 ? warm.norm() / std::sqrt(double(g.n())) : 1.0;

    SolveReport best;
    best.singular_design = !g.full_row_rank;
    double best_value = std::numeric_limits<double>::infinity();
    std::vector<Eigen::VectorXd> minima;
    for (int s = 0; s < starts; ++s) {
        Eigen::VectorXd c0 = s == 0 ? warm : Eigen::VectorXd(scale * rng.normal_vector(g.n()));
        detail::PowerSumResult res = detail::descend_regularized(obj, std::move(c0), opts, tol);
        if (res.converged) {
            const bool seen = std::any_of(minima.begin(), minima.end(), [&](const auto& q) {
                return (q - res.z).norm() <= 1e-6 * (1.0 + std::max(q.norm(), res.z.norm()));
            });
            if (!seen) minima.push_back(res.z);
        }
        // prefer converged runs, then lower objective
        const bool better = (res.converged && !best.converged) ||
                            (res.converged == best.converged && res.objective < best_value);
        if (s == 0 || better) {
            best_value = res.objective;
            best.coefficients = res.z;
            best.residual_norm = res.gradient_norm;
            best.iterations = res.iterations;
            best.converged = res.converged;
            best.objective_trace = std::move(res.trace);
        }
    }
    best.local_minimizers = std::move(minima);
    return best;
}

}  // namespace mkinterp
