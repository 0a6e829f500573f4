#pragma once

#include "scbm/core.hpp"

#include <json.hpp>

#include <fstream>
#include <string>

namespace scbm {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Dense row-major nested-array encoding.
inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const json& j) {
    if (!j.is_array()) throw ConfigError("matrix must be a nested array");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j.at(0).size());
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j.at(static_cast<std::size_t>(i));
        if (static_cast<Eigen::Index>(row.size()) != cols) throw ConfigError("ragged matrix in JSON");
        for (Eigen::Index jj = 0; jj < cols; ++jj) m(i, jj) = row.at(static_cast<std::size_t>(jj)).get<double>();
    }
    return m;
}

/// 1-based label encoding.
inline json labels_to_json(const Labels& labels) {
    json out = json::array();
    for (int l : labels) out.push_back(l + 1);
    return out;
}

inline Labels labels_from_json(const json& j) {
    Labels out;
    for (const auto& v : j) out.push_back(v.get<int>() - 1);
    return out;
}

inline json ranks_to_json(const std::vector<RankPair>& ranks) {
    json out = json::array();
    for (const auto& r : ranks) out.push_back({r.k_y, r.k_z});
    return out;
}

inline std::vector<RankPair> ranks_from_json(const json& j) {
    std::vector<RankPair> out;
    for (const auto& r : j) out.push_back({r.at(0).get<int>(), r.at(1).get<int>()});
    return out;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    return json::parse(in);
}

inline void write_json_file(const json& doc, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << doc.dump(2) << '\n';
}

}  // namespace scbm
