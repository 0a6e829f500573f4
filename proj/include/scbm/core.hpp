#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace scbm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Community labels, 0-based internally. Serialized forms are 1-based.
using Labels = std::vector<int>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t row, std::size_t column, const std::string& what)
        : Error("parse error at row " + std::to_string(row) + ", column " +
                std::to_string(column) + ": " + what),
          row_(row), column_(column) {}
    [[nodiscard]] std::size_t row() const noexcept { return row_; }
    [[nodiscard]] std::size_t column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::size_t column_;
};

class EmptyInput : public Error { using Error::Error; };
class DuplicateName : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class LengthError : public Error { using Error::Error; };
class LengthMismatch : public Error { using Error::Error; };
class ShapeMismatch : public Error { using Error::Error; };
class SingularScaling : public Error { using Error::Error; };
class DegenerateDesign : public Error { using Error::Error; };
class StabilityFailure : public Error { using Error::Error; };
class EigenFailure : public Error { using Error::Error; };
class ConvergenceFailure : public Error { using Error::Error; };
class DegenerateGap : public Error { using Error::Error; };
class RankConstraintViolation : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };

class RankDeficient : public Error {
public:
    RankDeficient(Eigen::Index rank, Eigen::Index columns)
        : Error("design is rank deficient: numerical rank " + std::to_string(rank) + " of " +
                std::to_string(columns) + " columns"),
          rank_(rank) {}
    [[nodiscard]] Eigen::Index rank() const noexcept { return rank_; }

private:
    Eigen::Index rank_;
};

// ---------------------------------------------------------------------------
// Stage chains
// ---------------------------------------------------------------------------

/// Topology of the stage sequence: seasons that wrap around, or horizons
/// ordered long to short.
enum class ChainKind { pvar_cyclic, vhar_linear };

inline std::string to_string(ChainKind kind) {
    return kind == ChainKind::pvar_cyclic ? "pvar_cyclic" : "vhar_linear";
}

inline ChainKind chain_kind_from_string(const std::string& s) {
    if (s == "pvar_cyclic" || s == "pvar") return ChainKind::pvar_cyclic;
    if (s == "vhar_linear" || s == "vhar") return ChainKind::vhar_linear;
    throw ConfigError("unknown chain kind '" + s + "'");
}

/// Sending and receiving community counts of one stage.
struct RankPair {
    int k_y = 1;
    int k_z = 1;
    friend bool operator==(const RankPair&, const RankPair&) = default;
};

/// Number of VHAR stages (long, medium, short).
inline constexpr std::size_t kVharStages = 3;

/// A path position is one distinct label vector shared by linked stage roles.
/// PVAR with s seasons has s positions: position m holds Y_m = Z_{m-1}.
/// VHAR has three: {Y_L = Z_L = Y_M}, {Z_M = Y_S}, {Z_S}.
inline std::size_t position_count(ChainKind kind, std::size_t stages) {
    return kind == ChainKind::pvar_cyclic ? stages : std::size_t{3};
}

/// Positions (sending, receiving) used by a stage.
inline std::pair<std::size_t, std::size_t> stage_positions(ChainKind kind, std::size_t stage,
                                                           std::size_t stages) {
    if (kind == ChainKind::pvar_cyclic) return {stage, (stage + 1) % stages};
    switch (stage) {
        case 0: return {0, 0};
        case 1: return {0, 1};
        default: return {1, 2};
    }
}

inline void validate_ranks(ChainKind kind, const std::vector<RankPair>& ranks) {
    if (ranks.empty()) throw RankConstraintViolation("rank configuration is empty");
    for (const auto& r : ranks) {
        if (r.k_y < 1 || r.k_z < 1)
            throw RankConstraintViolation("community counts must be positive");
    }
    const std::size_t s = ranks.size();
    if (kind == ChainKind::pvar_cyclic) {
        for (std::size_t m = 0; m < s; ++m) {
            const std::size_t next = (m + 1) % s;
            if (ranks[m].k_z != ranks[next].k_y)
                throw RankConstraintViolation(
                    "cyclic constraint broken: K_z of stage " + std::to_string(m + 1) +
                    " differs from K_y of stage " + std::to_string(next + 1));
        }
        return;
    }
    if (s != kVharStages)
        throw RankConstraintViolation("VHAR chains have exactly three stages");
    if (!(ranks[0].k_y == ranks[0].k_z && ranks[0].k_z == ranks[1].k_y))
        throw RankConstraintViolation("VHAR constraint K_y(L) = K_z(L) = K_y(M) broken");
    if (ranks[1].k_z != ranks[2].k_y)
        throw RankConstraintViolation("VHAR constraint K_z(M) = K_y(S) broken");
}

/// Community count of every path position implied by a valid rank configuration.
inline std::vector<int> position_counts(ChainKind kind, const std::vector<RankPair>& ranks) {
    validate_ranks(kind, ranks);
    if (kind == ChainKind::pvar_cyclic) {
        std::vector<int> out;
        out.reserve(ranks.size());
        for (const auto& r : ranks) out.push_back(r.k_y);
        return out;
    }
    return {ranks[0].k_y, ranks[1].k_z, ranks[2].k_z};
}

inline std::vector<RankPair> ranks_from_position_counts(ChainKind kind,
                                                        const std::vector<int>& counts) {
    const std::size_t stages = kind == ChainKind::pvar_cyclic ? counts.size() : kVharStages;
    if (counts.size() != position_count(kind, stages))
        throw RankConstraintViolation("wrong number of position counts");
    std::vector<RankPair> ranks(stages);
    for (std::size_t m = 0; m < stages; ++m) {
        auto [py, pz] = stage_positions(kind, m, stages);
        ranks[m] = {counts[py], counts[pz]};
    }
    return ranks;
}

/// Flattened (K_y1, K_z1, K_y2, ...) form used in configs.
inline std::vector<RankPair> ranks_from_flat(const std::vector<int>& flat) {
    if (flat.empty() || flat.size() % 2 != 0)
        throw RankConstraintViolation("flat rank list must hold (K_y, K_z) pairs");
    std::vector<RankPair> out;
    for (std::size_t i = 0; i < flat.size(); i += 2) out.push_back({flat[i], flat[i + 1]});
    return out;
}

/// Largest singular value.
inline double spectral_norm(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
}

/// Number of distinct labels in a 0-based label vector (max + 1).
inline int label_count(const Labels& labels) {
    int k = 0;
    for (int l : labels) k = std::max(k, l + 1);
    return k;
}

}  // namespace scbm
