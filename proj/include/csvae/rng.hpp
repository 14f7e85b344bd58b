#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace csvae::rng {

// Independent streams are keyed by (seed, purpose, index) so that reordering
// or batching never changes which numbers a given frame sees.
enum class Purpose : std::uint64_t {
    Matrix = 1,
    Synthetic = 2,
    Channel = 3,
    TrainChannel = 4,
    Init = 5,
    Shuffle = 6,
    Epsilon = 7,
    Pairs = 8,
    Power = 9,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::mt19937_64 stream(std::uint64_t seed, Purpose purpose, std::uint64_t index = 0) {
    std::uint64_t key = splitmix64(seed);
    key = splitmix64(key ^ static_cast<std::uint64_t>(purpose));
    key = splitmix64(key ^ index);
    return std::mt19937_64(key);
}

template <typename Derived>
void fill_normal(Eigen::DenseBase<Derived>& out, std::mt19937_64& engine, double stddev = 1.0) {
    std::normal_distribution<double> dist(0.0, stddev);
    // row-major fill order regardless of storage
    for (Eigen::Index r = 0; r < out.rows(); ++r)
        for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = dist(engine);
}

}  // namespace csvae::rng
