#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace mie {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Per-(node,state) data: outer index is the grid node (0..N), inner the state.
template <typename T>
using Field = std::vector<std::vector<T>>;

// Scalar per (node,state): row = node, col = state.
using ScalarField = Eigen::MatrixXd;

template <typename T>
Field<T> constant_field(std::size_t node_count, std::size_t state_count, const T& value) {
    return Field<T>(node_count, std::vector<T>(state_count, value));
}

inline ScalarField constant_scalar_field(std::size_t node_count, std::size_t state_count,
                                         double value) {
    return ScalarField::Constant(static_cast<Eigen::Index>(node_count),
                                 static_cast<Eigen::Index>(state_count), value);
}

// splitmix64: derives statistically independent per-path seeds from (seed, index).
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline unsigned worker_threads() {
    if (const char* env = std::getenv("MIE_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    return 1;
}

// Chunked parallel loop; the work partition is independent of the thread count,
// so results assembled per-index are deterministic.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
    unsigned threads = worker_threads();
    if (threads <= 1 || count < 2 * threads) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    std::size_t chunk = (count + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        std::size_t lo = t * chunk;
        std::size_t hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace mie
