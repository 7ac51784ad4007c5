#pragma once

// Interpolant s_m(x) = B_m(x) c^{m-1} built from the special multi-kernel Phi_m.
// Expanding B_m gives the feature-space form used for evaluation,
//
//     s_m(x) = sum_k alpha_k phi_k(x),   alpha_k = (v_k . c)^{m-1},
//
// so s_m lies in B^p, p = m/(m-1), with ||s_m|| = ||alpha||_p = (A_m c^m)^{1-1/m}.

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "mkinterp/errors.hpp"
#include "mkinterp/feature_model.hpp"
#include "mkinterp/mls_solver.hpp"
#include "mkinterp/multi_tensor.hpp"

namespace mkinterp {

/// Minimum pairwise node distance.
inline constexpr double kMinNodeSeparation = 1e-12;

class DuplicateNodes : public InvalidInput {
public:
    DuplicateNodes(Eigen::Index first, Eigen::Index second)
        : InvalidInput("nodes " + std::to_string(first + 1) + " and " + std::to_string(second + 1) +
                       " coincide"),
          first_(first),
          second_(second) {}
    // zero-based
    Eigen::Index first() const { return first_; }
    Eigen::Index second() const { return second_; }

private:
    Eigen::Index first_;
    Eigen::Index second_;
};

struct NodeSet {
    Eigen::MatrixXd points;  // n x d, one node per row
    Eigen::VectorXd values;  // y_1..y_n

    Eigen::Index size() const { return points.rows(); }
    int dim() const { return static_cast<int>(points.cols()); }

    static NodeSet make(Eigen::MatrixXd points, Eigen::VectorXd values) {
        if (points.rows() < 1) throw InvalidInput("need at least one node");
        if (points.rows() != values.size())
            throw DimensionMismatch("need one value per node");
        if (!points.allFinite() || !values.allFinite())
            throw InvalidInput("nodes and values must be finite");
        for (Eigen::Index i = 0; i < points.rows(); ++i) {
            for (Eigen::Index j = i + 1; j < points.rows(); ++j) {
                if ((points.row(i) - points.row(j)).norm() <= kMinNodeSeparation)
                    throw DuplicateNodes(i, j);
            }
        }
        return NodeSet{std::move(points), std::move(values)};
    }
};

/// ||alpha||_p for 1 < p < infinity.
inline double banach_norm_direct(const Eigen::Ref<const Eigen::VectorXd>& alpha, double p) {
    if (!(p > 1.0) || !std::isfinite(p))
        throw InvalidExponent("exponent p must lie in (1, inf), got " + std::to_string(p));
    const double amax = alpha.size() ? alpha.cwiseAbs().maxCoeff() : 0.0;
    if (amax == 0.0) return 0.0;
    double s = 0.0;
    for (Eigen::Index k = 0; k < alpha.size(); ++k) s += std::pow(std::abs(alpha[k]) / amax, p);
    return amax * std::pow(s, 1.0 / p);
}

/// Coefficients of the Gateaux derivative of ||.||_{B^p} at f = alpha^T phi:
/// beta_k = alpha_k |alpha_k|^{p-2} / ||alpha||_p^{p-1}.
inline Eigen::VectorXd gateaux_coefficients(const Eigen::Ref<const Eigen::VectorXd>& alpha,
                                            double p) {
    const double norm = banach_norm_direct(alpha, p);
    if (norm == 0.0) throw ZeroFunction("the norm is not differentiable at f = 0");
    Eigen::VectorXd beta(alpha.size());
    for (Eigen::Index k = 0; k < alpha.size(); ++k) {
        const double mag = std::pow(std::abs(alpha[k]) / norm, p - 1.0);
        beta[k] = alpha[k] < 0.0 ? -mag : (alpha[k] > 0.0 ? mag : 0.0);
    }
    return beta;
}

/// Dual pairing <f, g> = alpha . beta of f = alpha^T phi and g = beta^T phi.
inline double dual_pairing(const Eigen::Ref<const Eigen::VectorXd>& alpha,
                           const Eigen::Ref<const Eigen::VectorXd>& beta) {
    if (alpha.size() != beta.size()) throw DimensionMismatch("coefficient lengths differ");
    return alpha.dot(beta);
}

class Interpolant {
public:
    /// Assembles an interpolant from stored coefficients (no solve).
    Interpolant(FeatureModel model, NodeSet nodes, int order, Eigen::VectorXd coefficients)
        : model_(std::move(model)),
          nodes_(std::move(nodes)),
          order_(order),
          coefficients_(std::move(coefficients)) {
        require_even_order(order_);
        gram_ = build_gram(model_, nodes_.points);
        if (coefficients_.size() != nodes_.size())
            throw DimensionMismatch("need one coefficient per node");
        alpha_ = detail::odd_power(gram_.V.transpose() * coefficients_, order_ - 1);
    }

    const FeatureModel& model() const { return model_; }
    const NodeSet& nodes() const { return nodes_; }
    int order() const { return order_; }
    const Eigen::VectorXd& coefficients() const { return coefficients_; }
    const FeatureGram& gram() const { return gram_; }
    const Eigen::VectorXd& alpha() const { return alpha_; }

    /// Exponent of the Banach space holding s_m: m/(m-1).
    double norm_exponent() const { return double(order_) / (order_ - 1); }

private:
    FeatureModel model_;
    NodeSet nodes_;
    int order_;
    Eigen::VectorXd coefficients_;
    FeatureGram gram_;
    Eigen::VectorXd alpha_;
};

struct FitResult {
    Interpolant interpolant;
    SolveReport report;
};

/// Builds the Gram, solves A_m c^{m-1} = y and returns the interpolant together
/// with the solver report, whether or not the solve converged.
inline FitResult fit_with_report(const FeatureModel& model, const NodeSet& nodes, int m,
                                 const SolverOptions& opts = {}) {
    require_even_order(m);
    if (nodes.dim() != model.dim())
        throw DimensionMismatch("node dimension does not match the feature model");
    const FeatureGram gram = build_gram(model, nodes.points);
    SolveReport report = solve_multilinear(gram, m, nodes.values, opts);
    Interpolant s(model, nodes, m, report.coefficients);
    return FitResult{std::move(s), std::move(report)};
}

/// As fit_with_report, but throws SingularDesign (rank-deficient Gram, unsolved)
/// or NotConverged.
inline Interpolant fit(const FeatureModel& model, const NodeSet& nodes, int m,
                       const SolverOptions& opts = {}) {
    FitResult r = fit_with_report(model, nodes, m, opts);
    if (!r.report.converged) {
        if (r.report.singular_design) throw SingularDesign(std::move(r.report));
        throw NotConverged(std::move(r.report));
    }
    return std::move(r.interpolant);
}

/// s_m(x) = sum_k (v_k . c)^{m-1} phi_k(x), O(K).
inline double evaluate(const Interpolant& s, const Eigen::Ref<const Eigen::VectorXd>& x) {
    return eval_features(s.model(), x).dot(s.alpha());
}

/// alpha_k = (v_k . c)^{m-1}: expansion of s_m in the feature basis.
inline Eigen::VectorXd feature_coefficients(const Interpolant& s) { return s.alpha(); }

/// (A_m c^m)^{(m-1)/m}, the B^{m/(m-1)} norm of s_m.
inline double banach_norm_via_tensor(const Interpolant& s) {
    const double amc = contract_m(s.gram(), s.order(), s.coefficients());
    return std::pow(amc, double(s.order() - 1) / s.order());
}

}  // namespace mkinterp
