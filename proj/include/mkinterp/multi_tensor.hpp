#pragma once

// The symmetric tensor A_m = (Phi_m(x_i1, ..., x_im)) is never formed in the
// solver paths. Its rank-one-sum form A_m = sum_k v_k^{(x)m}, with v_k the k-th
// column of the feature Gram V (n x K), gives
//
//     A_m c^{m-1} = sum_k (v_k . c)^{m-1} v_k,    A_m c^m = sum_k (v_k . c)^m,
//
// both in O(nK). DenseTensor materializes A_m for small-n cross-checks only.

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/QR>

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mkinterp/errors.hpp"
#include "mkinterp/feature_model.hpp"
#include "mkinterp/sampling.hpp"

namespace mkinterp {

struct FeatureGram {
    Eigen::MatrixXd V;  // n x K, column k = (phi_k(x_1), ..., phi_k(x_n))
    bool full_row_rank = false;

    Eigen::Index n() const { return V.rows(); }
    Eigen::Index K() const { return V.cols(); }

    static FeatureGram from_matrix(Eigen::MatrixXd V) {
        if (V.rows() < 1 || V.cols() < 1) throw InvalidInput("feature Gram needs n, K >= 1");
        if (!V.allFinite()) throw InvalidInput("feature Gram contains non-finite values");
        FeatureGram g;
        g.full_row_rank = V.cols() >= V.rows() && Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(V).rank() == V.rows();
        g.V = std::move(V);
        return g;
    }
};

/// Gram of `model` at the rows of `points` (n x d).
inline FeatureGram build_gram(const FeatureModel& model,
                              const Eigen::Ref<const Eigen::MatrixXd>& points) {
    if (points.cols() != model.dim())
        throw DimensionMismatch("node dimension does not match the feature model");
    Eigen::MatrixXd V(points.rows(), model.truncation());
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        V.row(i) = eval_features(model, points.row(i).transpose()).transpose();
    return FeatureGram::from_matrix(std::move(V));
}

namespace detail {

inline void check_length(const FeatureGram& g, Eigen::Index len, const char* what) {
    if (len != g.n())
        throw DimensionMismatch(std::string(what) + " has length " + std::to_string(len) +
                                ", expected n=" + std::to_string(g.n()));
}

}  // namespace detail

/// A_m c^{m-1} = sum_k (v_k . c)^{m-1} v_k.
inline Eigen::VectorXd contract_m_minus_1(const FeatureGram& g, int m,
                                          const Eigen::Ref<const Eigen::VectorXd>& c) {
    require_even_order(m);
    detail::check_length(g, c.size(), "coefficient vector");
    Eigen::VectorXd a = g.V.transpose() * c;
    for (Eigen::Index k = 0; k < a.size(); ++k) a[k] = detail::int_pow(a[k], m - 1);
    return g.V * a;
}

/// A_m c^m = sum_k (v_k . c)^m, nonnegative for even m.
inline double contract_m(const FeatureGram& g, int m, const Eigen::Ref<const Eigen::VectorXd>& c) {
    require_even_order(m);
    detail::check_length(g, c.size(), "coefficient vector");
    const Eigen::VectorXd a = g.V.transpose() * c;
    double s = 0.0;
    for (Eigen::Index k = 0; k < a.size(); ++k) s += detail::int_pow(a[k], m);
    return s;
}

/// Explicit order-m tensor, entries in row-major index order (last index fastest).
class DenseTensor {
public:
    DenseTensor(int order, Eigen::Index dim, std::vector<double> entries)
        : order_(order), dim_(dim), entries_(std::move(entries)) {}

    int order() const { return order_; }
    Eigen::Index dim() const { return dim_; }
    const std::vector<double>& entries() const { return entries_; }

    /// Zero-based multi-index.
    double at(std::span<const int> index) const {
        if (static_cast<int>(index.size()) != order_)
            throw DimensionMismatch("tensor index has the wrong number of components");
        std::size_t flat = 0;
        for (int i : index) {
            if (i < 0 || i >= dim_) throw DimensionMismatch("tensor index out of range");
            flat = flat * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(i);
        }
        return entries_[flat];
    }

private:
    int order_;
    Eigen::Index dim_;
    std::vector<double> entries_;
};

inline constexpr std::size_t kDefaultDenseBudget = 10'000'000;

inline DenseTensor dense_tensor(const FeatureGram& g, int m,
                                std::size_t budget = kDefaultDenseBudget) {
    require_even_order(m);
    const auto n = static_cast<std::size_t>(g.n());
    std::size_t total = 1;
    for (int j = 0; j < m; ++j) {
        if (total > budget / n + 1) throw BudgetExceeded("dense tensor exceeds the entry budget");
        total *= n;
    }
    if (total > budget)
        throw BudgetExceeded("dense tensor needs " + std::to_string(total) +
                             " entries, budget is " + std::to_string(budget));
    std::vector<double> entries(total);
    std::vector<int> idx(static_cast<std::size_t>(m), 0);
    Eigen::VectorXd prod(g.K());
    for (std::size_t flat = 0; flat < total; ++flat) {
        prod.setOnes();
        for (int i : idx) prod.array() *= g.V.row(i).transpose().array();
        entries[flat] = prod.sum();
        for (int j = m - 1; j >= 0; --j) {
            if (++idx[static_cast<std::size_t>(j)] < static_cast<int>(n)) break;
            idx[static_cast<std::size_t>(j)] = 0;
        }
    }
    return DenseTensor(m, g.n(), std::move(entries));
}

/// (c - d) . (A_m c^{m-1} - A_m d^{m-1}). Values within rounding of zero are
/// reported as exactly 0.
inline double monotonicity_gap(const FeatureGram& g, int m,
                               const Eigen::Ref<const Eigen::VectorXd>& c,
                               const Eigen::Ref<const Eigen::VectorXd>& d) {
    const Eigen::VectorXd ac = contract_m_minus_1(g, m, c);
    const Eigen::VectorXd ad = contract_m_minus_1(g, m, d);
    const double gap = (c - d).dot(ac - ad);
    const double scale = (c - d).norm() * (ac.norm() + ad.norm());
    if (std::abs(gap) <= 64.0 * std::numeric_limits<double>::epsilon() * scale) return 0.0;
    return gap;
}

struct MonotoneReport {
    double min_gap = std::numeric_limits<double>::infinity();
    int pairs_checked = 0;
    // pairs (c, d) with nonpositive gap
    std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> witnesses;
};

/// Falsification check of strict monotonicity of c -> A_m c^{m-1} on `trials` random
/// standard-normal pairs. When V lacks full row rank the null-space directions of
/// V^T are probed as well (pairs (z, 0) for each basis vector z).
inline MonotoneReport check_strict_monotone(const FeatureGram& g, int m, int trials,
                                            std::uint64_t rng_seed) {
    require_even_order(m);
    if (trials < 1) throw InvalidInput("trials must be >= 1");
    SeededSampler rng(rng_seed);
    MonotoneReport report;
    auto record = [&](const Eigen::VectorXd& c, const Eigen::VectorXd& d) {
        const double gap = monotonicity_gap(g, m, c, d);
        ++report.pairs_checked;
        report.min_gap = std::min(report.min_gap, gap);
        if (gap <= 0.0) report.witnesses.emplace_back(c, d);
    };
    for (int t = 0; t < trials; ++t) {
        Eigen::VectorXd c = rng.normal_vector(g.n());
        Eigen::VectorXd d = rng.normal_vector(g.n());
        while (c == d) d = rng.normal_vector(g.n());
        record(c, d);
    }
    if (!g.full_row_rank) {
        const Eigen::MatrixXd null_basis =
            Eigen::FullPivLU<Eigen::MatrixXd>(g.V.transpose()).kernel();
        if (null_basis.norm() > 0.0) {
            for (Eigen::Index j = 0; j < null_basis.cols(); ++j)
                record(null_basis.col(j), Eigen::VectorXd::Zero(g.n()));
        }
    }
    return report;
}

struct SemiPdReport {
    double min_value = std::numeric_limits<double>::infinity();          // includes c = 0
    double min_nonzero_value = std::numeric_limits<double>::infinity();  // over sampled c != 0
};

/// min of A_m c^m over c = 0 and `trials` standard-normal samples.
inline SemiPdReport check_semi_pd(const FeatureGram& g, int m, int trials, std::uint64_t rng_seed) {
    require_even_order(m);
    if (trials < 1) throw InvalidInput("trials must be >= 1");
    SeededSampler rng(rng_seed);
    SemiPdReport report;
    report.min_value = contract_m(g, m, Eigen::VectorXd::Zero(g.n()));
    for (int t = 0; t < trials; ++t) {
        Eigen::VectorXd c = rng.normal_vector(g.n());
        if (c.isZero(0.0)) continue;
        const double v = contract_m(g, m, c);
        report.min_value = std::min(report.min_value, v);
        report.min_nonzero_value = std::min(report.min_nonzero_value, v);
    }
    return report;
}

}  // namespace mkinterp
