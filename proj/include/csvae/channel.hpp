#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

#include "csvae/data_model.hpp"
#include "csvae/error.hpp"
#include "csvae/rng.hpp"

namespace csvae {

/// Additive white Gaussian noise channel. sigma_n is on the normalized signal scale.
struct ChannelConfig {
    double sigma_n = 0.0;
    std::uint64_t seed = 0;
};

/// y + eta with eta_i ~ N(0, sigma_n^2). The noise for a frame depends only on
/// (seed, frame_index), never on what else is in the batch.
inline Eigen::VectorXd awgn(const Eigen::VectorXd& y, const ChannelConfig& cfg, std::uint64_t frame_index = 0,
                            rng::Purpose purpose = rng::Purpose::Channel) {
    detail::require(cfg.sigma_n >= 0.0, "awgn: sigma_n must be non-negative");
    if (!y.allFinite()) throw DataError("awgn: non-finite input");
    if (cfg.sigma_n == 0.0) return y;
    auto engine = rng::stream(cfg.seed, purpose, frame_index);
    std::normal_distribution<double> noise(0.0, cfg.sigma_n);
    Eigen::VectorXd out = y;
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += noise(engine);
    return out;
}

/// Row-wise awgn; row i uses frame index first_index + i.
inline RowMatrix awgn_all(const RowMatrix& Y, const ChannelConfig& cfg, std::uint64_t first_index = 0,
                          rng::Purpose purpose = rng::Purpose::Channel) {
    detail::require(cfg.sigma_n >= 0.0, "awgn: sigma_n must be non-negative");
    if (!Y.allFinite()) throw DataError("awgn: non-finite input");
    RowMatrix out = Y;
    if (cfg.sigma_n == 0.0) return out;
    std::normal_distribution<double> noise(0.0, cfg.sigma_n);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        auto engine = rng::stream(cfg.seed, purpose, first_index + static_cast<std::uint64_t>(i));
        noise.reset();
        for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) += noise(engine);
    }
    return out;
}

}  // namespace csvae
