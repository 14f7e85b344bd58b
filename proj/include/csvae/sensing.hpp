#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "csvae/binary_io.hpp"
#include "csvae/data_model.hpp"
#include "csvae/error.hpp"
#include "csvae/rng.hpp"

namespace csvae {

enum class MatrixKind : std::uint8_t { Proposition = 0, Unconstrained = 1, Selection = 2 };

inline const char* to_string(MatrixKind kind) {
    switch (kind) {
        case MatrixKind::Proposition: return "proposition";
        case MatrixKind::Unconstrained: return "unconstrained";
        case MatrixKind::Selection: return "selection";
    }
    return "unknown";
}

/// Construction parameters. Only meaningful for the Proposition kind; zero otherwise
/// (except `seed`, which is also recorded for Unconstrained).
struct MatrixMeta {
    double power_budget = 0.0;  // P_T, watts
    double d = 0.0;             // Chebyshev width parameter
    double mu_x = 0.0;
    double sigma_x = 0.0;
    double sigma_a = 0.0;  // entry standard deviation
    std::uint64_t seed = 0;
};

/// An m x n linear sensing operator with m < n. Immutable once built.
struct MeasurementMatrix {
    Eigen::MatrixXd entries;
    MatrixKind kind = MatrixKind::Unconstrained;
    MatrixMeta meta;
    std::vector<std::uint32_t> selected_features;  // Selection kind only

    Eigen::Index m() const { return entries.rows(); }
    Eigen::Index n() const { return entries.cols(); }

    /// FNV-1a over kind, shape, entry bits and selection indices, as 16 hex digits.
    std::string digest() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto mix = [&h](std::uint64_t word) {
            for (int b = 0; b < 8; ++b) {
                h ^= (word >> (8 * b)) & 0xFFu;
                h *= 0x100000001b3ULL;
            }
        };
        mix(static_cast<std::uint64_t>(kind));
        mix(static_cast<std::uint64_t>(m()));
        mix(static_cast<std::uint64_t>(n()));
        for (Eigen::Index i = 0; i < m(); ++i)
            for (Eigen::Index j = 0; j < n(); ++j) mix(std::bit_cast<std::uint64_t>(entries(i, j)));
        for (auto idx : selected_features) mix(idx);
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }
};

/// sigma_a^2 = P_T / (n^2 d^2 (d sigma_x + |mu_x|)^2): the entry variance that keeps
/// (1/m)||Ax||^2 <= P_T whenever every x_j lies within d standard deviations of mu_x.
inline double proposition_variance(Eigen::Index n, double power_budget, double d, const SourceStats& stats) {
    detail::require(n > 0, "proposition matrix: n must be positive");
    detail::require(power_budget > 0.0, "proposition matrix: P_T must be positive");
    detail::require(d > 0.0, "proposition matrix: d must be positive");
    detail::require(stats.sigma_x >= 0.0, "proposition matrix: sigma_x must be non-negative");
    const double spread = d * stats.sigma_x + std::abs(stats.mu_x);
    detail::require(spread > 0.0, "proposition matrix: degenerate source statistics (sigma_x = mu_x = 0)");
    const double nd = static_cast<double>(n);
    return power_budget / (nd * nd * d * d * spread * spread);
}

inline MeasurementMatrix build_proposition_matrix(Eigen::Index m, Eigen::Index n, double power_budget, double d,
                                                  const SourceStats& stats, std::uint64_t seed) {
    detail::require(m >= 1 && m < n, "proposition matrix: requires 1 <= m < n");
    const double variance = proposition_variance(n, power_budget, d, stats);
    const double sigma_a = std::sqrt(variance);

    MeasurementMatrix A;
    A.kind = MatrixKind::Proposition;
    A.entries.resize(m, n);
    auto engine = rng::stream(seed, rng::Purpose::Matrix);
    rng::fill_normal(A.entries, engine, sigma_a);
    A.meta = MatrixMeta{power_budget, d, stats.mu_x, stats.sigma_x, sigma_a, seed};
    return A;
}

inline MeasurementMatrix build_unconstrained_matrix(Eigen::Index m, Eigen::Index n, std::uint64_t seed) {
    detail::require(m >= 1 && m < n, "unconstrained matrix: requires 1 <= m < n");
    MeasurementMatrix B;
    B.kind = MatrixKind::Unconstrained;
    B.entries.resize(m, n);
    auto engine = rng::stream(seed, rng::Purpose::Matrix);
    rng::fill_normal(B.entries, engine, 1.0 / std::sqrt(static_cast<double>(m)));
    B.meta.seed = seed;
    return B;
}

/// Row r picks feature sensor*features_per_sensor + offset for the r-th
/// (sensor, offset) pair, sensors in the order given.
inline MeasurementMatrix build_selection_matrix(const std::vector<std::uint32_t>& sensor_indices,
                                                Eigen::Index features_per_sensor, Eigen::Index n) {
    detail::require(!sensor_indices.empty(), "selection matrix: no sensors given");
    detail::require(features_per_sensor >= 1, "selection matrix: features_per_sensor must be positive");
    const Eigen::Index sensor_count = n / features_per_sensor;
    std::set<std::uint32_t> seen;
    for (auto s : sensor_indices) {
        detail::require(static_cast<Eigen::Index>(s) < sensor_count,
                        "selection matrix: sensor index " + std::to_string(s) + " out of range");
        detail::require(seen.insert(s).second, "selection matrix: duplicate sensor index " + std::to_string(s));
    }
    const Eigen::Index m = features_per_sensor * static_cast<Eigen::Index>(sensor_indices.size());
    detail::require(m < n, "selection matrix: selecting " + std::to_string(m) + " of " + std::to_string(n) +
                               " features leaves no compression (m must be < n)");

    MeasurementMatrix S;
    S.kind = MatrixKind::Selection;
    S.entries = Eigen::MatrixXd::Zero(m, n);
    Eigen::Index row = 0;
    for (auto s : sensor_indices) {
        for (Eigen::Index k = 0; k < features_per_sensor; ++k, ++row) {
            const auto feature = static_cast<std::uint32_t>(s * features_per_sensor + k);
            S.entries(row, feature) = 1.0;
            S.selected_features.push_back(feature);
        }
    }
    return S;
}

/// Scales y so that (1/m)||y||^2 = P_T exactly; the zero vector stays zero.
inline Eigen::VectorXd power_normalize(const Eigen::VectorXd& y, double power_budget) {
    const double norm = y.norm();
    if (norm == 0.0) return y;
    return (std::sqrt(static_cast<double>(y.size()) * power_budget) / norm) * y;
}

inline Eigen::VectorXd measure(const MeasurementMatrix& A, const Eigen::VectorXd& x, bool normalize_power = false,
                               double power_budget = 0.0) {
    detail::require(x.size() == A.n(), "measure: frame dimension " + std::to_string(x.size()) +
                                           " does not match matrix n = " + std::to_string(A.n()));
    Eigen::VectorXd y = A.entries * x;
    if (normalize_power) {
        detail::require(power_budget > 0.0, "measure: power normalization needs P_T > 0");
        y = power_normalize(y, power_budget);
    }
    return y;
}

/// Measurements for every frame; row i of the result is A x_i.
inline RowMatrix measure_all(const MeasurementMatrix& A, const FrameSet& set, bool normalize_power = false,
                             double power_budget = 0.0) {
    detail::require(set.n_features() == A.n(), "measure: frame dimension does not match matrix n");
    RowMatrix Y = set.frames * A.entries.transpose();
    if (normalize_power) {
        detail::require(power_budget > 0.0, "measure: power normalization needs P_T > 0");
        for (Eigen::Index i = 0; i < Y.rows(); ++i) {
            Eigen::VectorXd yi = Y.row(i).transpose();
            Y.row(i) = power_normalize(yi, power_budget).transpose();
        }
    }
    return Y;
}

/// Fraction of frames whose transmit power (1/m)||Ax||^2 stays within P_T.
inline double power_check(const MeasurementMatrix& A, const FrameSet& set, double power_budget) {
    detail::require(set.n_frames() > 0, "power_check: empty frame set");
    const RowMatrix Y = measure_all(A, set);
    const double m = static_cast<double>(A.m());
    Eigen::Index ok = 0;
    for (Eigen::Index i = 0; i < Y.rows(); ++i)
        if (Y.row(i).squaredNorm() / m <= power_budget) ++ok;
    return static_cast<double>(ok) / static_cast<double>(set.n_frames());
}

// ---------------------------------------------------------------------------
// Set-restricted eigenvalue check:  ||A(v1 - v2)|| >= gamma ||v1 - v2|| - kappa.

struct SRecReport {
    double gamma = 0.0;
    double kappa = 0.0;
    double satisfied_fraction = 0.0;
    std::size_t pair_count = 0;
};

/// Pairs are given as two equally-shaped sets; pair i is (first row i, second row i).
inline SRecReport s_rec_estimate(const MeasurementMatrix& A, const RowMatrix& first, const RowMatrix& second,
                                 double gamma, double kappa) {
    detail::require(gamma > 0.0, "s_rec: gamma must be positive");
    detail::require(kappa >= 0.0, "s_rec: kappa must be non-negative");
    detail::require(first.rows() > 0, "s_rec: empty pair set");
    detail::require(first.rows() == second.rows() && first.cols() == second.cols() && first.cols() == A.n(),
                    "s_rec: pair shapes do not match the matrix");
    std::size_t ok = 0;
    for (Eigen::Index i = 0; i < first.rows(); ++i) {
        const Eigen::VectorXd v = (first.row(i) - second.row(i)).transpose();
        if ((A.entries * v).norm() >= gamma * v.norm() - kappa) ++ok;
    }
    const auto count = static_cast<std::size_t>(first.rows());
    return SRecReport{gamma, kappa, static_cast<double>(ok) / static_cast<double>(count), count};
}

/// Half the RMS column norm of A, i.e. half the typical gain ||Av|| / ||v||.
/// For a Proposition matrix this is about sigma_a sqrt(m) / 2.
inline double default_s_rec_gamma(const MeasurementMatrix& A) {
    detail::require(A.n() > 0, "s_rec: empty matrix");
    return 0.5 * A.entries.norm() / std::sqrt(static_cast<double>(A.n()));
}

/// Smallest kappa >= 0 for which at least `target` of the pairs satisfy the
/// inequality at the given gamma.
inline SRecReport fit_s_rec_kappa(const MeasurementMatrix& A, const RowMatrix& first, const RowMatrix& second,
                                  double gamma, double target) {
    detail::require(target > 0.0 && target <= 1.0, "s_rec: target fraction must be in (0, 1]");
    detail::require(gamma > 0.0, "s_rec: gamma must be positive");
    detail::require(first.rows() > 0, "s_rec: empty pair set");
    detail::require(first.rows() == second.rows() && first.cols() == A.n() && second.cols() == A.n(),
                    "s_rec: pair shapes do not match the matrix");
    std::vector<double> deficit;
    deficit.reserve(static_cast<std::size_t>(first.rows()));
    for (Eigen::Index i = 0; i < first.rows(); ++i) {
        const Eigen::VectorXd v = (first.row(i) - second.row(i)).transpose();
        deficit.push_back(gamma * v.norm() - (A.entries * v).norm());
    }
    std::sort(deficit.begin(), deficit.end());
    const auto needed = static_cast<std::size_t>(std::ceil(target * static_cast<double>(deficit.size()) - 1e-12));
    const double kappa = std::max(0.0, deficit[std::max<std::size_t>(needed, 1) - 1]);
    return s_rec_estimate(A, first, second, gamma, kappa);
}

// ---------------------------------------------------------------------------
// Matrix file: "CSM1", u8 kind, u32 m, u32 n, f64 meta x6, f64 entries row-major,
// then for Selection: u32 count + u32 indices.

inline void save_matrix(const MeasurementMatrix& A, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    binary::write_magic(out, "CSM1");
    binary::write_uint<std::uint8_t>(out, static_cast<std::uint8_t>(A.kind));
    binary::write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(A.m()));
    binary::write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(A.n()));
    for (double v : {A.meta.power_budget, A.meta.d, A.meta.mu_x, A.meta.sigma_x, A.meta.sigma_a,
                     static_cast<double>(A.meta.seed)})
        binary::write_f64(out, v);
    for (Eigen::Index i = 0; i < A.m(); ++i)
        for (Eigen::Index j = 0; j < A.n(); ++j) binary::write_f64(out, A.entries(i, j));
    if (A.kind == MatrixKind::Selection) {
        binary::write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(A.selected_features.size()));
        for (auto idx : A.selected_features) binary::write_uint<std::uint32_t>(out, idx);
    }
    if (!out) throw DataError("write failed: " + path);
}

inline MeasurementMatrix load_matrix(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open matrix file: " + path);
    const std::string what = "matrix file " + path;
    binary::expect_magic(in, "CSM1", what);
    const auto kind = binary::read_uint<std::uint8_t>(in, what);
    if (kind > 2) throw DataError(what + ": unknown matrix kind " + std::to_string(kind));
    const auto m = binary::read_uint<std::uint32_t>(in, what);
    const auto n = binary::read_uint<std::uint32_t>(in, what);
    MeasurementMatrix A;
    A.kind = static_cast<MatrixKind>(kind);
    A.meta.power_budget = binary::read_f64(in, what);
    A.meta.d = binary::read_f64(in, what);
    A.meta.mu_x = binary::read_f64(in, what);
    A.meta.sigma_x = binary::read_f64(in, what);
    A.meta.sigma_a = binary::read_f64(in, what);
    A.meta.seed = static_cast<std::uint64_t>(binary::read_f64(in, what));
    A.entries.resize(m, n);
    for (std::uint32_t i = 0; i < m; ++i)
        for (std::uint32_t j = 0; j < n; ++j) A.entries(i, j) = binary::read_f64(in, what);
    if (A.kind == MatrixKind::Selection) {
        const auto count = binary::read_uint<std::uint32_t>(in, what);
        for (std::uint32_t k = 0; k < count; ++k) A.selected_features.push_back(binary::read_uint<std::uint32_t>(in, what));
    }
    if (!A.entries.allFinite()) throw DataError(what + ": non-finite entries");
    return A;
}

}  // namespace csvae
