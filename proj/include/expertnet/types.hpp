#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace expertnet {

// Row-per-sample batches throughout: a batch of N points in d dimensions is N x d.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent stream seeds from (seed, tag...).
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

template <typename... Tags>
constexpr std::uint64_t derive_seed(std::uint64_t seed, Tags... tags) noexcept {
    std::uint64_t h = mix_seed(seed);
    ((h = mix_seed(h ^ static_cast<std::uint64_t>(tags))), ...);
    return h;
}

// Uniform double in [0, 1) from the top 53 bits; independent of the standard
// library's distribution implementation.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Index permutation of [0, n) via Fisher-Yates driven by uniform01.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
        if (j >= i) j = i - 1;
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

// Rows of `m` selected by `rows`, in order.
inline Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
    return out;
}

}  // namespace expertnet
