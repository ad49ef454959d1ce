#pragma once

// Test-only oracles, independent of the solver implementations they check:
// a fixed-step RK4 integrator for backward ODEs (single-state continuum
// limits), exhaustive path enumeration for the affine representation formula,
// and deterministic random-instance builders.

#include <cstdint>
#include <functional>
#include <vector>

#include "mie/core.hpp"
#include "mie/feynman_kac.hpp"
#include "mie/markov_chain.hpp"
#include "mie/time_grid.hpp"

namespace oracle {

using mie::Field;
using mie::Mat;
using mie::Vec;

// Solves u'(r) = f(u(r)) backward from u(T) = g down to r = 0 with RK4 on a
// fine fixed grid; returns u(0). Step count 200000 puts the O(h^4) error far
// below every tolerance used against it.
inline double backward_ode(const std::function<double(double)>& f, double terminal, double horizon,
                           std::size_t steps = 200000) {
    double h = horizon / static_cast<double>(steps);
    double u = terminal;
    for (std::size_t i = 0; i < steps; ++i) {
        // integrate in decreasing r: du/dr = f(u) => step -h
        double k1 = f(u);
        double k2 = f(u - 0.5 * h * k1);
        double k3 = f(u - 0.5 * h * k2);
        double k4 = f(u - h * k3);
        u -= h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return u;
}

// E_{j_from,x}[ Sigma_{j_from,N} g(X_N) ] - E[ sum_t Sigma_{j_from,t} w_t a_t ]
// by brute force over every path, weighted by transition products, with
// Sigma the ordered product of (I - w b) factors.
inline Vec enumerate_linear_representation(const mie::MarkovChainModel& chain,
                                           const mie::TimeGrid& grid, const Field<Vec>& a_field,
                                           const Field<Mat>& b_field, const Mat& g,
                                           std::size_t j_from, std::size_t x) {
    std::size_t n = grid.steps();
    Eigen::Index k = g.cols();
    Mat eye = Mat::Identity(k, k);
    Vec total = Vec::Zero(k);

    std::vector<std::size_t> path(n - j_from + 1, 0);
    path[0] = x;
    std::function<void(std::size_t, double)> recurse = [&](std::size_t depth, double prob) {
        std::size_t j = j_from + depth;
        if (j == n) {
            Mat sigma = eye;
            Vec a_int = Vec::Zero(k);
            for (std::size_t l = j_from; l < n; ++l) {
                std::size_t xl = path[l - j_from];
                a_int += grid.weight(l) * (sigma * a_field[l][xl]);
                sigma = sigma * (eye - grid.weight(l) * b_field[l][xl]);
            }
            total += prob * (sigma * g.row(static_cast<Eigen::Index>(path.back())).transpose() -
                             a_int);
            return;
        }
        for (std::size_t y = 0; y < chain.state_count(); ++y) {
            double p = chain.transition(j)(static_cast<Eigen::Index>(path[depth]),
                                           static_cast<Eigen::Index>(y));
            if (p == 0.0) continue;
            path[depth + 1] = y;
            recurse(depth + 1, prob * p);
        }
    };
    recurse(0, 1.0);
    return total;
}

// xorshift-based deterministic uniforms for instance generation.
struct Rng {
    std::uint64_t state;
    explicit Rng(std::uint64_t seed) : state(seed ? seed : 0x9e3779b97f4a7c15ULL) {}
    double uniform() {
        std::uint64_t z = state;
        z ^= z >> 12;
        z ^= z << 25;
        z ^= z >> 27;
        state = z;
        return static_cast<double>((z * 0x2545f4914f6cdd1dULL) >> 11) * 0x1.0p-53;
    }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::size_t index(std::size_t bound) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(bound)) % bound;
    }
};

inline mie::MarkovChainModel random_chain(Rng& rng, std::size_t states, std::size_t steps) {
    std::vector<Mat> ps(steps);
    auto s = static_cast<Eigen::Index>(states);
    for (auto& p : ps) {
        p = Mat(s, s);
        for (Eigen::Index r = 0; r < s; ++r) {
            double row_sum = 0.0;
            for (Eigen::Index c = 0; c < s; ++c) {
                p(r, c) = rng.uniform(0.05, 1.0);
                row_sum += p(r, c);
            }
            p.row(r) /= row_sum;
        }
    }
    return mie::MarkovChainModel(states, std::move(ps));
}

inline Field<Vec> random_vec_field(Rng& rng, std::size_t nodes, std::size_t states,
                                   Eigen::Index k, double scale) {
    Field<Vec> f(nodes, std::vector<Vec>(states));
    for (auto& row : f)
        for (auto& v : row) {
            v = Vec(k);
            for (Eigen::Index c = 0; c < k; ++c) v[c] = rng.uniform(-scale, scale);
        }
    return f;
}

inline Field<Mat> random_mat_field(Rng& rng, std::size_t nodes, std::size_t states,
                                   Eigen::Index k, double scale) {
    Field<Mat> f(nodes, std::vector<Mat>(states));
    for (auto& row : f)
        for (auto& m : row) {
            m = Mat(k, k);
            for (Eigen::Index r = 0; r < k; ++r)
                for (Eigen::Index c = 0; c < k; ++c) m(r, c) = rng.uniform(-scale, scale);
        }
    return f;
}

}  // namespace oracle
