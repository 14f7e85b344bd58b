#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "csvae/binary_io.hpp"
#include "csvae/error.hpp"
#include "csvae/rng.hpp"

namespace csvae {

/// Frames are stored one per row.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-feature extrema used for the min-max map onto [-1, 1].
struct NormStats {
    Eigen::VectorXd per_feature_min;
    Eigen::VectorXd per_feature_max;

    Eigen::Index n_features() const { return per_feature_min.size(); }
};

/// Scalar mean / population standard deviation over every normalized entry.
struct SourceStats {
    double mu_x = 0.0;
    double sigma_x = 0.0;
};

/// A batch of n-dimensional source frames.
///
/// When `normalized` is set the entries lie in [-1, 1] and `stats` (if
/// present) holds the map that produced them.
struct FrameSet {
    RowMatrix frames;
    bool normalized = false;
    std::optional<NormStats> stats;

    Eigen::Index n_frames() const { return frames.rows(); }
    Eigen::Index n_features() const { return frames.cols(); }

    /// Frames [begin, begin + count) as a new set sharing normalization.
    FrameSet slice(Eigen::Index begin, Eigen::Index count) const {
        detail::require(begin >= 0 && count >= 0 && begin + count <= n_frames(), "slice out of range");
        return FrameSet{frames.middleRows(begin, count), normalized, stats};
    }
};

namespace detail {

inline void require_finite_frames(const FrameSet& set) {
    if (!set.frames.allFinite()) throw DataError("frame set contains non-finite entries");
}

}  // namespace detail

inline NormStats normalize_fit(const FrameSet& set) {
    detail::require(set.n_frames() > 0 && set.n_features() > 0, "normalize_fit: empty frame set");
    detail::require(!set.normalized, "normalize_fit: frames are already normalized");
    detail::require_finite_frames(set);
    return NormStats{set.frames.colwise().minCoeff().transpose(), set.frames.colwise().maxCoeff().transpose()};
}

inline FrameSet normalize_apply(const FrameSet& set, const NormStats& stats) {
    detail::require(stats.n_features() == set.n_features(), "normalize_apply: dimension mismatch");
    detail::require_finite_frames(set);
    FrameSet out{RowMatrix(set.n_frames(), set.n_features()), true, stats};
    for (Eigen::Index j = 0; j < set.n_features(); ++j) {
        const double lo = stats.per_feature_min[j];
        const double hi = stats.per_feature_max[j];
        const double range = hi - lo;
        for (Eigen::Index i = 0; i < set.n_frames(); ++i) {
            if (range <= 0.0) {
                out.frames(i, j) = 0.0;
                continue;
            }
            const double v = 2.0 * (set.frames(i, j) - lo) / range - 1.0;
            out.frames(i, j) = std::clamp(v, -1.0, 1.0);
        }
    }
    return out;
}

inline FrameSet denormalize(const FrameSet& set, const NormStats& stats) {
    detail::require(set.normalized, "denormalize: frames are not normalized");
    detail::require(stats.n_features() == set.n_features(), "denormalize: dimension mismatch");
    FrameSet out{RowMatrix(set.n_frames(), set.n_features()), false, std::nullopt};
    for (Eigen::Index j = 0; j < set.n_features(); ++j) {
        const double lo = stats.per_feature_min[j];
        const double range = stats.per_feature_max[j] - lo;
        for (Eigen::Index i = 0; i < set.n_frames(); ++i)
            out.frames(i, j) = lo + 0.5 * (set.frames(i, j) + 1.0) * range;
    }
    return out;
}

inline SourceStats source_stats(const FrameSet& set) {
    detail::require(set.frames.size() > 0, "source_stats: empty frame set");
    const double count = static_cast<double>(set.frames.size());
    const double mean = set.frames.sum() / count;
    const double var = (set.frames.array() - mean).square().sum() / count;
    return SourceStats{mean, std::sqrt(std::max(var, 0.0))};
}

// Orthonormal DCT-II and its inverse (DCT-III). Direct O(n^2); n is a few hundred.

inline Eigen::MatrixXd dct_basis(Eigen::Index n) {
    // basis(f, j): coefficient f contribution to sample j
    Eigen::MatrixXd basis(n, n);
    const double nd = static_cast<double>(n);
    for (Eigen::Index f = 0; f < n; ++f) {
        const double scale = f == 0 ? std::sqrt(1.0 / nd) : std::sqrt(2.0 / nd);
        for (Eigen::Index j = 0; j < n; ++j)
            basis(f, j) = scale * std::cos(std::numbers::pi * (static_cast<double>(j) + 0.5) * static_cast<double>(f) / nd);
    }
    return basis;
}

inline Eigen::VectorXd dct(const Eigen::VectorXd& signal) { return dct_basis(signal.size()) * signal; }
inline Eigen::VectorXd idct(const Eigen::VectorXd& coeffs) { return dct_basis(coeffs.size()).transpose() * coeffs; }

/// Nearly k-sparse frames: k dominant low-frequency DCT coefficients with
/// standard deviation 1/(1+f), all others 1% of the weakest dominant scale.
/// A single affine map over all entries brings the set into [-1, 1], which
/// keeps each frame's DCT spectrum intact apart from the DC term.
inline FrameSet gen_synthetic(Eigen::Index n_frames, Eigen::Index n_features, Eigen::Index k, std::uint64_t seed) {
    detail::require(n_frames > 0 && n_features > 0, "gen_synthetic: empty shape");
    detail::require(k >= 1 && k <= n_features, "gen_synthetic: sparsity k out of range [1, n_features]");

    const Eigen::MatrixXd basis = dct_basis(n_features);
    const double residue_scale = 0.01 / static_cast<double>(k);
    RowMatrix coeffs(n_frames, n_features);
    for (Eigen::Index i = 0; i < n_frames; ++i) {
        auto engine = rng::stream(seed, rng::Purpose::Synthetic, static_cast<std::uint64_t>(i));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Eigen::Index f = 0; f < n_features; ++f) {
            const double scale = f < k ? 1.0 / (1.0 + static_cast<double>(f)) : residue_scale;
            coeffs(i, f) = scale * normal(engine);
        }
    }
    RowMatrix raw = coeffs * basis;

    const double lo = raw.minCoeff();
    const double hi = raw.maxCoeff();
    NormStats stats{Eigen::VectorXd::Constant(n_features, lo), Eigen::VectorXd::Constant(n_features, hi)};
    return normalize_apply(FrameSet{std::move(raw), false, std::nullopt}, stats);
}

// ---------------------------------------------------------------------------
// Frame file: "CSF1", u32 version, u32 n_features, u64 n_frames, u8 normalized,
// f32 payload row-major, then (if normalized) f64 min[n] and f64 max[n].

inline constexpr std::uint32_t kFrameFileVersion = 1;

inline void save_frames(const FrameSet& set, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    binary::write_magic(out, "CSF1");
    binary::write_uint<std::uint32_t>(out, kFrameFileVersion);
    binary::write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(set.n_features()));
    binary::write_uint<std::uint64_t>(out, static_cast<std::uint64_t>(set.n_frames()));
    binary::write_uint<std::uint8_t>(out, set.normalized ? 1 : 0);
    for (Eigen::Index i = 0; i < set.n_frames(); ++i)
        for (Eigen::Index j = 0; j < set.n_features(); ++j)
            binary::write_f32(out, static_cast<float>(set.frames(i, j)));
    if (set.normalized) {
        const NormStats stats = set.stats.value_or(NormStats{Eigen::VectorXd::Constant(set.n_features(), -1.0),
                                                             Eigen::VectorXd::Constant(set.n_features(), 1.0)});
        for (Eigen::Index j = 0; j < set.n_features(); ++j) binary::write_f64(out, stats.per_feature_min[j]);
        for (Eigen::Index j = 0; j < set.n_features(); ++j) binary::write_f64(out, stats.per_feature_max[j]);
    }
    if (!out) throw DataError("write failed: " + path);
}

inline FrameSet load_frames(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open frame file: " + path);
    const std::string what = "frame file " + path;
    binary::expect_magic(in, "CSF1", what);
    const auto version = binary::read_uint<std::uint32_t>(in, what);
    if (version != kFrameFileVersion) throw DataError(what + ": unsupported version " + std::to_string(version));
    const auto n_features = binary::read_uint<std::uint32_t>(in, what);
    const auto n_frames = binary::read_uint<std::uint64_t>(in, what);
    const auto flag = binary::read_uint<std::uint8_t>(in, what);
    if (flag > 1) throw DataError(what + ": bad normalized flag");

    FrameSet set{RowMatrix(static_cast<Eigen::Index>(n_frames), static_cast<Eigen::Index>(n_features)), flag == 1,
                 std::nullopt};
    std::vector<char> row(static_cast<std::size_t>(n_features) * 4);
    for (std::uint64_t i = 0; i < n_frames; ++i) {
        in.read(row.data(), static_cast<std::streamsize>(row.size()));
        if (in.gcount() != static_cast<std::streamsize>(row.size()))
            throw DataError(what + ": truncated payload (header declares " + std::to_string(n_frames) +
                            " frames, found " + std::to_string(i) + ")");
        for (std::uint32_t j = 0; j < n_features; ++j) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b)
                bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(row[j * 4 + b])) << (8 * b);
            set.frames(static_cast<Eigen::Index>(i), j) = std::bit_cast<float>(bits);
        }
    }
    if (set.normalized) {
        NormStats stats{Eigen::VectorXd(n_features), Eigen::VectorXd(n_features)};
        for (std::uint32_t j = 0; j < n_features; ++j) stats.per_feature_min[j] = binary::read_f64(in, what);
        for (std::uint32_t j = 0; j < n_features; ++j) stats.per_feature_max[j] = binary::read_f64(in, what);
        set.stats = std::move(stats);
    }
    detail::require_finite_frames(set);
    return set;
}

/// CSV import: one frame per row, optional header row, raw (unnormalized) values.
inline FrameSet load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open CSV file: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::vector<double> values;
        std::stringstream fields(line);
        std::string field;
        bool numeric = true;
        while (std::getline(fields, field, ',')) {
            if (field.find_first_not_of(" \t") == std::string::npos) {  // missing feature
                values.push_back(std::numeric_limits<double>::quiet_NaN());
                continue;
            }
            try {
                std::size_t used = 0;
                values.push_back(std::stod(field, &used));
                if (field.find_first_not_of(" \t", used) != std::string::npos) numeric = false;
            } catch (const std::exception&) {
                numeric = false;
            }
        }
        if (!numeric) {
            if (rows.empty() && line_no == 1) continue;  // header
            throw DataError(path + ":" + std::to_string(line_no) + ": non-numeric field");
        }
        if (!rows.empty() && values.size() != rows.front().size())
            throw DataError(path + ":" + std::to_string(line_no) + ": inconsistent column count");
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw DataError(path + ": no frames");

    FrameSet set{RowMatrix(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size())), false,
                 std::nullopt};
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            set.frames(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return set;
}

/// Drops frames with any non-finite entry (missing features in recorded data).
inline FrameSet drop_nonfinite(const FrameSet& set) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < set.n_frames(); ++i)
        if (set.frames.row(i).allFinite()) keep.push_back(i);
    FrameSet out{RowMatrix(static_cast<Eigen::Index>(keep.size()), set.n_features()), set.normalized, set.stats};
    for (std::size_t r = 0; r < keep.size(); ++r) out.frames.row(static_cast<Eigen::Index>(r)) = set.frames.row(keep[r]);
    return out;
}

}  // namespace csvae
