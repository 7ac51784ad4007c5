#pragma once

// Truncated feature expansions phi_k = sqrt(w_k) * b_k on a compact box, and
// the kernels built from them:
//
//     Phi_2(z1, z2)       = sum_k phi_k(z1) phi_k(z2)
//     Phi_m(z1, ..., zm)  = sum_k prod_i phi_k(z_i)
//
// Base functions b_k are evaluated in normalized coordinates
// t_j = (2 x_j - (lower_j + upper_j)) / (upper_j - lower_j), so t = x on [-1,1]^d.
//
// Enumeration order (fixed, so feature indices are reproducible):
//   PowerSeries    graded by total degree |a|; inside a degree, lexicographically
//                  descending in the exponent vector (x1 first):
//                  1; x1, x2; x1^2, x1 x2, x2^2; ...
//                  default weight rho^|a|.
//   Trigonometric  per axis the 1-D modes 1, cos(pi j t), sin(pi j t) with level j.
//                  Graded by total level; inside a level, frequency vectors in
//                  descending lex order, then the cos/sin assignment of the
//                  active axes in ascending binary order (cos = 0, sin = 1,
//                  axis 1 most significant): 1; cos(pi t), sin(pi t); ...
//                  default weight rho^level.
//   CustomTable    feature values given directly at tabulated points (weights 1).

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mkinterp/errors.hpp"

namespace mkinterp {

/// Points within this distance of a face are accepted and clamped onto it.
inline constexpr double kDomainTolerance = 1e-12;

class Domain {
public:
    Domain(Eigen::VectorXd lower, Eigen::VectorXd upper)
        : lower_(std::move(lower)), upper_(std::move(upper)) {
        if (lower_.size() == 0 || lower_.size() != upper_.size())
            throw DimensionMismatch("domain bounds must be nonempty and of equal length");
        for (Eigen::Index j = 0; j < lower_.size(); ++j) {
            if (!(lower_[j] < upper_[j]))
                throw InvalidInput("domain requires lower < upper on every axis (axis " +
                                   std::to_string(j + 1) + ")");
        }
    }

    static Domain cube(int dim, double lo = -1.0, double hi = 1.0) {
        return Domain(Eigen::VectorXd::Constant(dim, lo), Eigen::VectorXd::Constant(dim, hi));
    }

    int dim() const { return static_cast<int>(lower_.size()); }
    const Eigen::VectorXd& lower() const { return lower_; }
    const Eigen::VectorXd& upper() const { return upper_; }

    bool contains(const Eigen::Ref<const Eigen::VectorXd>& x) const {
        if (x.size() != lower_.size()) return false;
        for (Eigen::Index j = 0; j < x.size(); ++j) {
            if (!(x[j] >= lower_[j] - kDomainTolerance && x[j] <= upper_[j] + kDomainTolerance))
                return false;
        }
        return true;
    }

    /// Returns x clamped onto the box; throws PointOutsideDomain beyond the tolerance.
    Eigen::VectorXd clamp(const Eigen::Ref<const Eigen::VectorXd>& x) const {
        if (x.size() != lower_.size())
            throw DimensionMismatch("point has dimension " + std::to_string(x.size()) +
                                    ", domain has " + std::to_string(lower_.size()));
        if (!contains(x)) throw PointOutsideDomain("point lies outside the domain box");
        return x.cwiseMax(lower_).cwiseMin(upper_);
    }

private:
    Eigen::VectorXd lower_;
    Eigen::VectorXd upper_;
};

/// Uniform tensor grid with `per_dim` points per axis (endpoints included), one
/// point per row, first axis varying slowest.
inline Eigen::MatrixXd tensor_grid(const Domain& domain, int per_dim) {
    if (per_dim < 2) throw InvalidInput("grid needs at least 2 points per axis");
    const int d = domain.dim();
    Eigen::Index total = 1;
    for (int j = 0; j < d; ++j) total *= per_dim;
    Eigen::MatrixXd grid(total, d);
    std::vector<int> idx(d, 0);
    for (Eigen::Index row = 0; row < total; ++row) {
        for (int j = 0; j < d; ++j) {
            const double lo = domain.lower()[j];
            const double hi = domain.upper()[j];
            grid(row, j) = idx[j] == per_dim - 1
                               ? hi
                               : lo + (hi - lo) * static_cast<double>(idx[j]) / (per_dim - 1);
        }
        for (int j = d - 1; j >= 0; --j) {
            if (++idx[j] < per_dim) break;
            idx[j] = 0;
        }
    }
    return grid;
}

enum class FeatureFamily { PowerSeries, Trigonometric, CustomTable };

inline std::string_view to_string(FeatureFamily f) {
    switch (f) {
        case FeatureFamily::PowerSeries: return "power_series";
        case FeatureFamily::Trigonometric: return "trigonometric";
        case FeatureFamily::CustomTable: return "custom_table";
    }
    return "unknown";
}

inline FeatureFamily parse_family(std::string_view name) {
    if (name == "power_series" || name == "power") return FeatureFamily::PowerSeries;
    if (name == "trigonometric" || name == "trig") return FeatureFamily::Trigonometric;
    if (name == "custom_table" || name == "custom") return FeatureFamily::CustomTable;
    throw InvalidInput("unknown feature family '" + std::string(name) + "'");
}

/// Index data of one feature: exponents (PowerSeries) or frequencies
/// (Trigonometric) per axis; `sine_mask` bit j selects sin on axis j.
struct FeatureIndex {
    std::vector<int> degree;
    std::uint32_t sine_mask = 0;

    int level() const {
        int s = 0;
        for (int a : degree) s += a;
        return s;
    }
    friend bool operator==(const FeatureIndex&, const FeatureIndex&) = default;
};

namespace detail {

// Compositions of `total` into `parts` nonnegative parts, lexicographically descending.
inline void compositions(int total, int parts, std::vector<int>& prefix,
                         std::vector<std::vector<int>>& out) {
    if (parts == 1) {
        prefix.push_back(total);
        out.push_back(prefix);
        prefix.pop_back();
        return;
    }
    for (int first = total; first >= 0; --first) {
        prefix.push_back(first);
        compositions(total - first, parts - 1, prefix, out);
        prefix.pop_back();
    }
}

inline std::vector<FeatureIndex> enumerate_indices(FeatureFamily family, int dim, int count) {
    std::vector<FeatureIndex> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int level = 0; static_cast<int>(out.size()) < count; ++level) {
        std::vector<std::vector<int>> comps;
        std::vector<int> prefix;
        compositions(level, dim, prefix, comps);
        for (const auto& c : comps) {
            if (family == FeatureFamily::PowerSeries) {
                out.push_back({c, 0});
            } else {
                std::vector<int> active;
                for (int j = 0; j < dim; ++j)
                    if (c[j] > 0) active.push_back(j);
                const std::uint32_t variants = 1u << active.size();
                for (std::uint32_t v = 0; v < variants; ++v) {
                    std::uint32_t mask = 0;
                    for (std::size_t a = 0; a < active.size(); ++a) {
                        // first active axis is the most significant bit of v
                        if (v & (1u << (active.size() - 1 - a))) mask |= 1u << active[a];
                    }
                    out.push_back({c, mask});
                    if (static_cast<int>(out.size()) == count) break;
                }
            }
            if (static_cast<int>(out.size()) == count) break;
        }
    }
    return out;
}

inline double int_pow(double base, int e) {
    double r = 1.0;
    for (int i = 0; i < e; ++i) r *= base;
    return r;
}

}  // namespace detail

class FeatureModel {
public:
    /// Graded monomials x^a with weights rho^|a| (or explicit weights).
    static FeatureModel power_series(Domain domain, int truncation, double rho = 0.5,
                                     std::vector<double> weights = {}) {
        check_truncation(truncation);
        auto idx = detail::enumerate_indices(FeatureFamily::PowerSeries, domain.dim(), truncation);
        return FeatureModel(std::move(domain), FeatureFamily::PowerSeries, std::move(idx), rho,
                            std::move(weights));
    }

    /// Monomials with caller-chosen exponents and weights.
    static FeatureModel power_series(Domain domain, std::vector<FeatureIndex> indices,
                                     std::vector<double> weights) {
        check_truncation(static_cast<int>(indices.size()));
        for (const auto& fi : indices) {
            if (static_cast<int>(fi.degree.size()) != domain.dim())
                throw DimensionMismatch("feature index dimension does not match domain");
        }
        return FeatureModel(std::move(domain), FeatureFamily::PowerSeries, std::move(indices), 1.0,
                            std::move(weights));
    }

    static FeatureModel trigonometric(Domain domain, int truncation, double rho = 0.5,
                                      std::vector<double> weights = {}) {
        check_truncation(truncation);
        auto idx =
            detail::enumerate_indices(FeatureFamily::Trigonometric, domain.dim(), truncation);
        return FeatureModel(std::move(domain), FeatureFamily::Trigonometric, std::move(idx), rho,
                            std::move(weights));
    }

    /// Tabulated features: row i of `features` holds (phi_1(p_i), ..., phi_K(p_i)) for
    /// row i of `points`. Evaluation is only defined at the tabulated points.
    static FeatureModel custom_table(Domain domain, Eigen::MatrixXd points,
                                     Eigen::MatrixXd features) {
        if (points.rows() == 0 || points.rows() != features.rows())
            throw DimensionMismatch("custom table needs one feature row per tabulated point");
        if (points.cols() != domain.dim())
            throw DimensionMismatch("custom table points do not match the domain dimension");
        check_truncation(static_cast<int>(features.cols()));
        if (!features.allFinite()) throw InvalidInput("custom table contains non-finite values");
        for (Eigen::Index i = 0; i < points.rows(); ++i) {
            if (!domain.contains(points.row(i).transpose()))
                throw PointOutsideDomain("custom table point " + std::to_string(i + 1) +
                                         " lies outside the domain");
        }
        FeatureModel model(std::move(domain), FeatureFamily::CustomTable, {}, 1.0,
                           std::vector<double>(static_cast<std::size_t>(features.cols()), 1.0));
        model.table_points_ = std::move(points);
        model.table_features_ = std::move(features);
        return model;
    }

    const Domain& domain() const { return domain_; }
    FeatureFamily family() const { return family_; }
    int dim() const { return domain_.dim(); }
    int truncation() const { return static_cast<int>(weights_.size()); }
    double decay() const { return rho_; }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<FeatureIndex>& indices() const { return indices_; }
    const Eigen::MatrixXd& table_points() const { return table_points_; }
    const Eigen::MatrixXd& table_features() const { return table_features_; }

    /// phi_1(x), ..., phi_K(x) written into `out` (size K). x must already be in the box.
    void features_into(const Eigen::Ref<const Eigen::VectorXd>& x,
                       Eigen::Ref<Eigen::VectorXd> out) const {
        if (family_ == FeatureFamily::CustomTable) {
            for (Eigen::Index i = 0; i < table_points_.rows(); ++i) {
                if ((table_points_.row(i).transpose() - x).cwiseAbs().maxCoeff() <=
                    kDomainTolerance) {
                    out = table_features_.row(i).transpose();
                    return;
                }
            }
            throw PointNotTabulated("point is not one of the tabulated custom-table points");
        }
        const int d = dim();
        Eigen::VectorXd t(d);
        for (int j = 0; j < d; ++j) {
            const double lo = domain_.lower()[j];
            const double hi = domain_.upper()[j];
            t[j] = (2.0 * x[j] - (lo + hi)) / (hi - lo);
        }
        for (int k = 0; k < truncation(); ++k) {
            const FeatureIndex& fi = indices_[static_cast<std::size_t>(k)];
            double b = 1.0;
            for (int j = 0; j < d; ++j) {
                const int a = fi.degree[static_cast<std::size_t>(j)];
                if (family_ == FeatureFamily::PowerSeries) {
                    b *= detail::int_pow(t[j], a);
                } else if (a > 0) {
                    const double arg = std::numbers::pi * a * t[j];
                    b *= (fi.sine_mask >> j) & 1u ? std::sin(arg) : std::cos(arg);
                }
            }
            out[k] = sqrt_weights_[static_cast<std::size_t>(k)] * b;
        }
    }

private:
    FeatureModel(Domain domain, FeatureFamily family, std::vector<FeatureIndex> indices,
                 double rho, std::vector<double> weights)
        : domain_(std::move(domain)), family_(family), indices_(std::move(indices)), rho_(rho) {
        if (weights.empty()) {
            if (!(rho > 0.0)) throw InvalidInput("weight decay rho must be positive");
            for (const auto& fi : indices_) weights.push_back(std::pow(rho, fi.level()));
        }
        if (family_ != FeatureFamily::CustomTable && weights.size() != indices_.size())
            throw DimensionMismatch("need one weight per feature");
        for (double w : weights) {
            if (!(w > 0.0) || !std::isfinite(w)) throw InvalidInput("feature weights must be > 0");
        }
        weights_ = std::move(weights);
        sqrt_weights_.reserve(weights_.size());
        for (double w : weights_) sqrt_weights_.push_back(std::sqrt(w));
    }

    static void check_truncation(int k) {
        if (k < 1) throw InvalidInput("truncation K must be >= 1");
    }

    Domain domain_;
    FeatureFamily family_;
    std::vector<FeatureIndex> indices_;
    double rho_ = 1.0;
    std::vector<double> weights_;
    std::vector<double> sqrt_weights_;
    Eigen::MatrixXd table_points_;
    Eigen::MatrixXd table_features_;
};

inline void require_even_order(int m) {
    if (m < 2 || m % 2 != 0) throw OddOrderUnsupported(m);
}

/// (phi_1(x), ..., phi_K(x)).
inline Eigen::VectorXd eval_features(const FeatureModel& model,
                                     const Eigen::Ref<const Eigen::VectorXd>& x) {
    const Eigen::VectorXd xc = model.domain().clamp(x);
    Eigen::VectorXd out(model.truncation());
    model.features_into(xc, out);
    return out;
}

/// Phi_2(z1, z2) = sum_k phi_k(z1) phi_k(z2).
inline double eval_kernel2(const FeatureModel& model, const Eigen::Ref<const Eigen::VectorXd>& z1,
                           const Eigen::Ref<const Eigen::VectorXd>& z2) {
    return eval_features(model, z1).dot(eval_features(model, z2));
}

/// Phi_m(z_1, ..., z_m) = sum_k prod_i phi_k(z_i), for even m >= 2.
inline double eval_multikernel(const FeatureModel& model, int m,
                               std::span<const Eigen::VectorXd> points) {
    require_even_order(m);
    if (static_cast<int>(points.size()) != m)
        throw DimensionMismatch("multi-kernel of order " + std::to_string(m) + " needs " +
                                std::to_string(m) + " points");
    Eigen::VectorXd prod = eval_features(model, points[0]);
    for (std::size_t i = 1; i < points.size(); ++i)
        prod.array() *= eval_features(model, points[i]).array();
    return prod.sum();
}

struct SummabilityReport {
    double max_abs_sum = 0.0;
    // max over the grid of (sum over the last floor(K/2) features) / (sum over all), 0 for K = 1
    double tail_ratio = 0.0;
};

inline SummabilityReport check_summability(const FeatureModel& model,
                                           const Eigen::Ref<const Eigen::MatrixXd>& grid) {
    if (grid.rows() == 0) throw InvalidInput("summability check needs a nonempty grid");
    const int K = model.truncation();
    const int tail_start = K - K / 2;
    SummabilityReport report;
    for (Eigen::Index i = 0; i < grid.rows(); ++i) {
        const Eigen::VectorXd phi = eval_features(model, grid.row(i).transpose()).cwiseAbs();
        const double total = phi.sum();
        const double tail = phi.tail(K - tail_start).sum();
        report.max_abs_sum = std::max(report.max_abs_sum, total);
        if (total > 0.0) report.tail_ratio = std::max(report.tail_ratio, tail / total);
    }
    return report;
}

}  // namespace mkinterp
