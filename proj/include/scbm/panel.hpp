#pragma once

#include "scbm/core.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace scbm {

/// A q-variate series of length T (rows are observation times).
///
/// Seasonal phase of row t is (t + t0_phase) mod seasons when seasons > 0.
/// Values are never modified after construction; transforms return new panels.
class TimeSeriesPanel {
public:
    TimeSeriesPanel() = default;

    TimeSeriesPanel(Matrix values, std::vector<std::string> series_names, int t0_phase = 0,
                    int seasons = 0, std::vector<std::string> transforms = {},
                    std::vector<std::string> row_labels = {})
        : values_(std::move(values)),
          names_(std::move(series_names)),
          t0_phase_(t0_phase),
          seasons_(seasons),
          transforms_(std::move(transforms)),
          row_labels_(std::move(row_labels)) {
        validate();
    }

    /// Panel with default names y1..yq.
    static TimeSeriesPanel from_matrix(Matrix values, int t0_phase = 0, int seasons = 0) {
        std::vector<std::string> names;
        for (Eigen::Index j = 0; j < values.cols(); ++j) names.push_back("y" + std::to_string(j + 1));
        return TimeSeriesPanel(std::move(values), std::move(names), t0_phase, seasons);
    }

    [[nodiscard]] const Matrix& values() const noexcept { return values_; }
    [[nodiscard]] Eigen::Index length() const noexcept { return values_.rows(); }
    [[nodiscard]] Eigen::Index dimension() const noexcept { return values_.cols(); }
    [[nodiscard]] const std::vector<std::string>& series_names() const noexcept { return names_; }
    [[nodiscard]] int t0_phase() const noexcept { return t0_phase_; }
    [[nodiscard]] int seasons() const noexcept { return seasons_; }
    [[nodiscard]] const std::vector<std::string>& transforms() const noexcept { return transforms_; }
    [[nodiscard]] const std::vector<std::string>& row_labels() const noexcept { return row_labels_; }

    /// Seasonal phase of row t under `s` seasons.
    [[nodiscard]] int phase(Eigen::Index t, int s) const {
        return static_cast<int>((t + t0_phase_) % s);
    }

    /// Same data, different seasonal alignment.
    [[nodiscard]] TimeSeriesPanel with_phase(int t0_phase, int seasons) const {
        return TimeSeriesPanel(values_, names_, t0_phase, seasons, transforms_, row_labels_);
    }

private:
    void validate() const {
        if (values_.rows() < 1 || values_.cols() < 1) throw EmptyInput("panel needs T >= 1 and q >= 1");
        if (!values_.allFinite()) throw DomainError("panel contains NaN or infinite entries");
        if (static_cast<Eigen::Index>(names_.size()) != values_.cols())
            throw LengthMismatch("series_names must have one entry per column");
        std::set<std::string> seen;
        for (const auto& n : names_) {
            if (!seen.insert(n).second) throw DuplicateName("duplicate series name '" + n + "'");
        }
        if (seasons_ < 0) throw DomainError("seasons must be non-negative");
        if (seasons_ > 0 && (t0_phase_ < 0 || t0_phase_ >= seasons_))
            throw DomainError("t0_phase must lie in [0, seasons)");
        if (!row_labels_.empty() && static_cast<Eigen::Index>(row_labels_.size()) != values_.rows())
            throw LengthMismatch("row labels must have one entry per row");
    }

    Matrix values_;
    std::vector<std::string> names_;
    int t0_phase_ = 0;
    int seasons_ = 0;
    std::vector<std::string> transforms_;
    std::vector<std::string> row_labels_;
};

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace detail {

/// Split one RFC-4180 record. Handles quoted fields and doubled quotes; a
/// quoted field may not span lines.
inline std::vector<std::string> split_csv_record(std::string_view line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    fields.push_back(std::move(field));
    return fields;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::string quote_csv(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += '"';
    return out;
}

}  // namespace detail

/// Read a numeric panel from CSV. Rows and columns in ParseError are 1-based
/// (data rows exclude the header). A named date column is kept as opaque row
/// labels and dropped from the values.
inline TimeSeriesPanel load_csv(const std::string& path, bool has_header = true,
                                const std::optional<std::string>& date_column = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw EmptyInput("cannot open '" + path + "'");
    std::string line;
    std::vector<std::string> header;
    if (has_header) {
        if (!std::getline(in, line)) throw EmptyInput("'" + path + "' is empty");
        if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);
        for (auto& f : detail::split_csv_record(line)) header.emplace_back(detail::trim(f));
    }
    std::optional<std::size_t> date_index;
    if (date_column) {
        if (!has_header) throw ConfigError("a date column can only be named when the file has a header");
        for (std::size_t j = 0; j < header.size(); ++j) {
            if (header[j] == *date_column) date_index = j;
        }
        if (!date_index) throw ConfigError("date column '" + *date_column + "' not found");
    }

    std::vector<std::vector<double>> rows;
    std::vector<std::string> labels;
    std::size_t width = header.size();
    std::size_t row_no = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++row_no;
        auto fields = detail::split_csv_record(line);
        if (width == 0) width = fields.size();
        if (fields.size() != width)
            throw ParseError(row_no, std::min(fields.size(), width) + 1, "expected " +
                                                                           std::to_string(width) + " fields");
        std::vector<double> row;
        for (std::size_t j = 0; j < fields.size(); ++j) {
            if (date_index && j == *date_index) {
                labels.emplace_back(detail::trim(fields[j]));
                continue;
            }
            auto v = detail::parse_double(fields[j]);
            if (!v) throw ParseError(row_no, j + 1, "'" + fields[j] + "' is not a finite number");
            row.push_back(*v);
        }
        rows.push_back(std::move(row));
    }
    const std::size_t q = width - (date_index ? 1 : 0);
    if (rows.empty() || q == 0) throw EmptyInput("'" + path + "' has no numeric data");

    Matrix values(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(q));
    for (std::size_t t = 0; t < rows.size(); ++t)
        for (std::size_t j = 0; j < q; ++j) values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = rows[t][j];

    std::vector<std::string> names;
    for (std::size_t j = 0; j < width; ++j) {
        if (date_index && j == *date_index) continue;
        names.push_back(has_header ? header[j] : "y" + std::to_string(names.size() + 1));
    }
    return TimeSeriesPanel(std::move(values), std::move(names), 0, 0, {}, std::move(labels));
}

/// Write a panel as CSV with 12 significant digits.
inline void write_csv(const TimeSeriesPanel& panel, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    const bool dated = !panel.row_labels().empty();
    if (dated) out << "date,";
    for (std::size_t j = 0; j < panel.series_names().size(); ++j) {
        if (j > 0) out << ',';
        out << detail::quote_csv(panel.series_names()[j]);
    }
    out << '\n';
    char buf[32];
    for (Eigen::Index t = 0; t < panel.length(); ++t) {
        if (dated) out << detail::quote_csv(panel.row_labels()[static_cast<std::size_t>(t)]) << ',';
        for (Eigen::Index j = 0; j < panel.dimension(); ++j) {
            if (j > 0) out << ',';
            std::snprintf(buf, sizeof buf, "%.12g", panel.values()(t, j));
            out << buf;
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

enum class Transform { none, log_diff, diff, demean };

inline std::string to_string(Transform t) {
    switch (t) {
        case Transform::log_diff: return "log_diff";
        case Transform::diff: return "diff";
        case Transform::demean: return "demean";
        default: return "none";
    }
}

inline Transform transform_from_string(const std::string& s) {
    if (s == "none") return Transform::none;
    if (s == "log_diff") return Transform::log_diff;
    if (s == "diff") return Transform::diff;
    if (s == "demean") return Transform::demean;
    throw ConfigError("unknown transform '" + s + "'");
}

inline TimeSeriesPanel transform(const TimeSeriesPanel& panel, Transform kind) {
    auto tags = panel.transforms();
    tags.push_back(to_string(kind));
    const Matrix& x = panel.values();
    if (kind == Transform::none || kind == Transform::demean) {
        Matrix out = x;
        if (kind == Transform::demean) out.rowwise() -= x.colwise().mean();
        return TimeSeriesPanel(std::move(out), panel.series_names(), panel.t0_phase(), panel.seasons(),
                               std::move(tags), panel.row_labels());
    }
    if (panel.length() < 2) throw LengthError("differencing needs at least two observations");
    const Eigen::Index n = panel.length() - 1;
    Matrix out;
    if (kind == Transform::log_diff) {
        if ((x.array() <= 0.0).any()) throw DomainError("log_diff requires strictly positive values");
        const Matrix logs = x.array().log().matrix();
        out = logs.bottomRows(n) - logs.topRows(n);
    } else {
        out = x.bottomRows(n) - x.topRows(n);
    }
    const int s = panel.seasons();
    const int t0 = s > 0 ? (panel.t0_phase() + 1) % s : panel.t0_phase();
    std::vector<std::string> labels;
    if (!panel.row_labels().empty()) labels.assign(panel.row_labels().begin() + 1, panel.row_labels().end());
    return TimeSeriesPanel(std::move(out), panel.series_names(), t0, s, std::move(tags), std::move(labels));
}

// ---------------------------------------------------------------------------
// Horizon aggregates
// ---------------------------------------------------------------------------

/// Short/medium/long trailing means of a panel. Rows before a window is
/// complete hold NaN; every row from `valid_from` on is populated.
struct HorizonAggregates {
    Matrix short_term;
    Matrix medium;
    Matrix long_term;
    int b_m = 0;
    int b_l = 0;
    Eigen::Index valid_from = 0;
    Eigen::Index effective_sample_size = 0;
};

namespace detail {
inline Matrix trailing_mean(const Matrix& x, int window) {
    Matrix out = Matrix::Constant(x.rows(), x.cols(), std::numeric_limits<double>::quiet_NaN());
    if (x.rows() < window) return out;
    Eigen::RowVectorXd sum = x.topRows(window).colwise().sum();
    out.row(window - 1) = sum / window;
    for (Eigen::Index t = window; t < x.rows(); ++t) {
        sum += x.row(t) - x.row(t - window);
        out.row(t) = sum / window;
    }
    return out;
}
}  // namespace detail

inline HorizonAggregates horizon_aggregates(const TimeSeriesPanel& panel, int b_m, int b_l) {
    if (!(1 < b_m && b_m < b_l)) throw DomainError("horizon lengths must satisfy 1 < b_M < b_L");
    if (panel.length() <= b_l) throw LengthError("panel length must exceed b_L");
    HorizonAggregates agg;
    agg.short_term = panel.values();
    agg.medium = detail::trailing_mean(panel.values(), b_m);
    agg.long_term = detail::trailing_mean(panel.values(), b_l);
    agg.b_m = b_m;
    agg.b_l = b_l;
    agg.valid_from = b_l - 1;
    agg.effective_sample_size = panel.length() - b_l;
    return agg;
}

}  // namespace scbm
