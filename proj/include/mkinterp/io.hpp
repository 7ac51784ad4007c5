#pragma once

// Text formats.
//
// Numbers are written as the shortest decimal that parses back to the same double
// (at most 17 significant digits), so CSV and JSON files round-trip bit-exactly.
//
// Data CSV      header "x1,...,xd,y", one node per row.
// Points CSV    header "x1,...,xd"; a trailing "y" column is accepted and ignored.
// Interpolant   JSON object, see interpolant_to_json.
// Custom table  JSON object {"points": [[...], ...], "features": [[...], ...],
//               "domain": {"lower": [...], "upper": [...]}}; features holds one row per
//               point (phi_1(p_i), ..., phi_K(p_i)); domain is optional.

#include <Eigen/Core>

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "mkinterp/errors.hpp"
#include "mkinterp/feature_model.hpp"
#include "mkinterp/interpolant.hpp"
#include "mkinterp/mls_solver.hpp"

namespace mkinterp::io {

using Json = nlohmann::ordered_json;

/// Malformed text input; line is 1-based, 0 when not tied to a line.
class ParseError : public InvalidInput {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : InvalidInput(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
          line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

inline std::string format_double(double v) {
    char buf[64];
    // general: fixed only where it is not longer than the shortest digits
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general);
    return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

/// Parses a finite decimal; throws ParseError naming source and line.
inline double parse_double(std::string_view text, const std::string& source, std::size_t line) {
    std::string_view s = trim(text);
    if (s.empty()) throw ParseError(source, line, "empty value");
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ParseError(source, line, "cannot parse '" + std::string(trim(text)) + "' as a number");
    if (!std::isfinite(v)) throw ParseError(source, line, "non-finite value");
    return v;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    for (;;) {
        const auto comma = line.find(',');
        out.push_back(trim(line.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        line.remove_prefix(comma + 1);
    }
    return out;
}

struct CsvTable {
    std::vector<std::string> header;
    Eigen::MatrixXd rows;
};

/// Numeric CSV with a header line; blank lines are skipped.
inline CsvTable read_csv(std::istream& in, const std::string& source) {
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::vector<double>> rows;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto fields = split_fields(line);
        if (!have_header) {
            for (auto f : fields) t.header.emplace_back(f);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size())
            throw ParseError(source, lineno,
                             "expected " + std::to_string(t.header.size()) + " fields, found " +
                                 std::to_string(fields.size()));
        std::vector<double> row;
        row.reserve(fields.size());
        for (auto f : fields) row.push_back(parse_double(f, source, lineno));
        rows.push_back(std::move(row));
    }
    if (!have_header) throw ParseError(source, 0, "missing header line");
    t.rows.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            t.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return t;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, 0, "cannot open file for reading");
    return in;
}

namespace detail {

inline void check_coordinate_header(const std::vector<std::string>& header, std::size_t d,
                                    const std::string& source) {
    if (d == 0) throw ParseError(source, 1, "header needs at least one coordinate column x1");
    for (std::size_t j = 0; j < d; ++j) {
        const std::string want = "x" + std::to_string(j + 1);
        if (header[j] != want)
            throw ParseError(source, 1, "header column " + std::to_string(j + 1) + " is '" +
                                            header[j] + "', expected '" + want + "'");
    }
}

}  // namespace detail

/// Data CSV "x1,...,xd,y" to a validated NodeSet; duplicate nodes cite their data lines.
inline NodeSet read_data_csv(std::istream& in, const std::string& source) {
    const CsvTable t = read_csv(in, source);
    if (t.header.size() < 2 || t.header.back() != "y")
        throw ParseError(source, 1, "header must be x1,...,xd,y");
    const std::size_t d = t.header.size() - 1;
    detail::check_coordinate_header(t.header, d, source);
    if (t.rows.rows() == 0) throw ParseError(source, 0, "no data rows");
    try {
        return NodeSet::make(t.rows.leftCols(static_cast<Eigen::Index>(d)), t.rows.col(t.rows.cols() - 1));
    } catch (const DuplicateNodes& e) {
        throw ParseError(source, 0, "duplicate points in data rows " + std::to_string(e.first() + 1) +
                                        " and " + std::to_string(e.second() + 1));
    }
}

/// Points CSV "x1,...,xd" (optionally followed by "y", which is dropped).
inline Eigen::MatrixXd read_points_csv(std::istream& in, const std::string& source) {
    const CsvTable t = read_csv(in, source);
    std::size_t d = t.header.size();
    if (d >= 2 && t.header.back() == "y") --d;
    detail::check_coordinate_header(t.header, d, source);
    return t.rows.leftCols(static_cast<Eigen::Index>(d));
}

inline std::string coordinate_header(int d) {
    std::string h;
    for (int j = 0; j < d; ++j) h += (j ? ",x" : "x") + std::to_string(j + 1);
    return h;
}

// ---- JSON ----------------------------------------------------------------

inline Json vector_to_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline Json matrix_to_json(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vector_to_json(m.row(i).transpose()));
    return a;
}

inline Json domain_to_json(const Domain& d) {
    return Json{{"lower", vector_to_json(d.lower())}, {"upper", vector_to_json(d.upper())}};
}

namespace detail {

inline const Json& require(const Json& j, const char* key, const std::string& source) {
    if (!j.is_object() || !j.contains(key))
        throw ParseError(source, 0, std::string("missing key '") + key + "'");
    return j.at(key);
}

inline Eigen::VectorXd vector_from_json(const Json& j, const std::string& what,
                                        const std::string& source) {
    if (!j.is_array()) throw ParseError(source, 0, what + " must be an array of numbers");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ParseError(source, 0, what + " must be an array of numbers");
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

inline Eigen::MatrixXd matrix_from_json(const Json& j, const std::string& what,
                                        const std::string& source) {
    if (!j.is_array()) throw ParseError(source, 0, what + " must be an array of rows");
    Eigen::MatrixXd m;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const Eigen::VectorXd row = vector_from_json(j[i], what, source);
        if (i == 0) m.resize(static_cast<Eigen::Index>(j.size()), row.size());
        if (row.size() != m.cols()) throw ParseError(source, 0, what + " rows differ in length");
        m.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return m;
}

inline int int_from_json(const Json& j, const std::string& what, const std::string& source) {
    if (!j.is_number_integer()) throw ParseError(source, 0, what + " must be an integer");
    return j.get<int>();
}

}  // namespace detail

inline Domain domain_from_json(const Json& j, const std::string& source) {
    return Domain(detail::vector_from_json(detail::require(j, "lower", source), "domain.lower", source),
                  detail::vector_from_json(detail::require(j, "upper", source), "domain.upper", source));
}

/// Custom-table document; without "domain" the bounding box of the points is used,
/// widened by 1 on axes where it is degenerate.
inline FeatureModel custom_table_from_json(const Json& j, const std::string& source) {
    Eigen::MatrixXd points = detail::matrix_from_json(detail::require(j, "points", source), "points", source);
    Eigen::MatrixXd features =
        detail::matrix_from_json(detail::require(j, "features", source), "features", source);
    if (points.rows() == 0) throw ParseError(source, 0, "custom table has no points");
    if (features.rows() != points.rows())
        throw ParseError(source, 0, "features needs one row per point");
    if (j.contains("domain"))
        return FeatureModel::custom_table(domain_from_json(j.at("domain"), source), std::move(points),
                                          std::move(features));
    Eigen::VectorXd lo = points.colwise().minCoeff().transpose();
    Eigen::VectorXd hi = points.colwise().maxCoeff().transpose();
    for (Eigen::Index k = 0; k < lo.size(); ++k) {
        if (!(lo[k] < hi[k])) {
            lo[k] -= 1.0;
            hi[k] += 1.0;
        }
    }
    return FeatureModel::custom_table(Domain(lo, hi), std::move(points), std::move(features));
}

inline Json parse_json(std::istream& in, const std::string& source) {
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw ParseError(source, 0, std::string("invalid JSON: ") + e.what());
    }
}

inline Json model_to_json(const FeatureModel& model) {
    Json j;
    j["family"] = std::string(to_string(model.family()));
    j["domain"] = domain_to_json(model.domain());
    j["truncation"] = model.truncation();
    if (model.family() == FeatureFamily::CustomTable) {
        j["table"] = Json{{"points", matrix_to_json(model.table_points())},
                          {"features", matrix_to_json(model.table_features())}};
        return j;
    }
    j["decay"] = model.decay();
    j["weights"] = model.weights();
    const auto defaults =
        mkinterp::detail::enumerate_indices(model.family(), model.dim(), model.truncation());
    if (model.indices() != defaults) {
        Json idx = Json::array();
        for (const FeatureIndex& fi : model.indices())
            idx.push_back(Json{{"degree", fi.degree}, {"sine_mask", fi.sine_mask}});
        j["indices"] = std::move(idx);
    }
    return j;
}

inline FeatureModel model_from_json(const Json& j, const std::string& source) {
    if (!j.is_object()) throw ParseError(source, 0, "expected a JSON object");
    const Json& fam = detail::require(j, "family", source);
    if (!fam.is_string()) throw ParseError(source, 0, "family must be a string");
    FeatureFamily family;
    try {
        family = parse_family(fam.get<std::string>());
    } catch (const InvalidInput& e) {
        throw ParseError(source, 0, e.what());
    }
    const Domain domain = domain_from_json(detail::require(j, "domain", source), source);
    const int K = detail::int_from_json(detail::require(j, "truncation", source), "truncation", source);

    if (family == FeatureFamily::CustomTable) {
        Json table = detail::require(j, "table", source);
        table["domain"] = domain_to_json(domain);
        FeatureModel m = custom_table_from_json(table, source);
        if (m.truncation() != K) throw ParseError(source, 0, "truncation does not match the table");
        return m;
    }

    const Json& dec = detail::require(j, "decay", source);
    if (!dec.is_number()) throw ParseError(source, 0, "decay must be a number");
    std::vector<double> weights;
    if (j.contains("weights")) {
        const Eigen::VectorXd w = detail::vector_from_json(j.at("weights"), "weights", source);
        weights.assign(w.data(), w.data() + w.size());
        if (static_cast<int>(weights.size()) != K)
            throw ParseError(source, 0, "weights needs one entry per feature");
    }
    if (j.contains("indices")) {
        if (family != FeatureFamily::PowerSeries)
            throw ParseError(source, 0, "explicit indices are only supported for power_series");
        std::vector<FeatureIndex> idx;
        for (const Json& e : j.at("indices")) {
            FeatureIndex fi;
            fi.degree = detail::require(e, "degree", source).get<std::vector<int>>();
            idx.push_back(std::move(fi));
        }
        if (static_cast<int>(idx.size()) != K)
            throw ParseError(source, 0, "indices needs one entry per feature");
        return FeatureModel::power_series(domain, std::move(idx), std::move(weights));
    }
    const double rho = dec.get<double>();
    return family == FeatureFamily::PowerSeries
               ? FeatureModel::power_series(domain, K, rho, std::move(weights))
               : FeatureModel::trigonometric(domain, K, rho, std::move(weights));
}

/// {"family", "domain", "truncation", "decay", "weights", ["indices" | "table"],
///  "order", "nodes", "values", "coefficients"}. Extra keys are ignored on load.
inline Json interpolant_to_json(const Interpolant& s) {
    Json j = model_to_json(s.model());
    j["order"] = s.order();
    j["nodes"] = matrix_to_json(s.nodes().points);
    j["values"] = vector_to_json(s.nodes().values);
    j["coefficients"] = vector_to_json(s.coefficients());
    return j;
}

/// Rebuilds the model and Gram from the document; no solve is performed.
inline Interpolant interpolant_from_json(const Json& j, const std::string& source) {
    try {
        FeatureModel model = model_from_json(j, source);
        const int m = detail::int_from_json(detail::require(j, "order", source), "order", source);
        Eigen::MatrixXd nodes = detail::matrix_from_json(detail::require(j, "nodes", source), "nodes", source);
        Eigen::VectorXd values = detail::vector_from_json(detail::require(j, "values", source), "values", source);
        Eigen::VectorXd coef =
            detail::vector_from_json(detail::require(j, "coefficients", source), "coefficients", source);
        if (nodes.cols() != model.dim() && nodes.rows() > 0)
            throw ParseError(source, 0, "node dimension does not match the domain");
        return Interpolant(std::move(model), NodeSet::make(std::move(nodes), std::move(values)), m,
                           std::move(coef));
    } catch (const ParseError&) {
        throw;
    } catch (const Json::exception& e) {
        throw ParseError(source, 0, std::string("schema mismatch: ") + e.what());
    } catch (const Error& e) {
        throw ParseError(source, 0, e.what());
    }
}

/// Deterministic serialization: two-space indent, trailing newline.
inline void write_json(std::ostream& out, const Json& j) {
    out << j.dump(2) << '\n';
}

}  // namespace mkinterp::io
