#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mie/core.hpp"
#include "mie/errors.hpp"
#include "mie/time_grid.hpp"

namespace mie {

constexpr double kRowSumTol = 1e-12;

// One realized trajectory of the chain from a start node to the terminal node.
struct PathSample {
    std::size_t start_index = 0;
    std::vector<std::size_t> states;  // one entry per node from start_index to N
    std::uint64_t seed = 0;
};

// Time-inhomogeneous finite-state chain: one row-stochastic matrix per grid
// step. Expectations are exact matrix-vector propagation; sampling is the
// Monte Carlo cross-check. Immutable after construction.
class MarkovChainModel {
public:
    MarkovChainModel(std::size_t state_count, std::vector<Mat> transitions)
        : state_count_(state_count), transitions_(std::move(transitions)) {
        if (state_count_ == 0) throw std::invalid_argument("MarkovChainModel: empty state space");
        auto n = static_cast<Eigen::Index>(state_count_);
        for (std::size_t j = 0; j < transitions_.size(); ++j) {
            const Mat& p = transitions_[j];
            if (p.rows() != n || p.cols() != n)
                throw std::invalid_argument("MarkovChainModel: transition " + std::to_string(j) +
                                            " has wrong shape");
            for (Eigen::Index r = 0; r < n; ++r) {
                double row_sum = 0.0;
                for (Eigen::Index c = 0; c < n; ++c) {
                    if (!(p(r, c) >= 0.0))
                        throw std::invalid_argument("MarkovChainModel: negative entry in step " +
                                                    std::to_string(j));
                    row_sum += p(r, c);
                }
                if (std::abs(row_sum - 1.0) > kRowSumTol)
                    throw std::invalid_argument("MarkovChainModel: row " + std::to_string(r) +
                                                " of step " + std::to_string(j) +
                                                " sums to " + std::to_string(row_sum));
            }
        }
    }

    static MarkovChainModel identity(std::size_t state_count, std::size_t step_count) {
        auto n = static_cast<Eigen::Index>(state_count);
        return MarkovChainModel(state_count, std::vector<Mat>(step_count, Mat::Identity(n, n)));
    }

    static MarkovChainModel uniform(std::size_t state_count, std::size_t step_count) {
        auto n = static_cast<Eigen::Index>(state_count);
        Mat p = Mat::Constant(n, n, 1.0 / static_cast<double>(state_count));
        return MarkovChainModel(state_count, std::vector<Mat>(step_count, p));
    }

    std::size_t state_count() const { return state_count_; }
    std::size_t step_count() const { return transitions_.size(); }
    const Mat& transition(std::size_t j) const { return transitions_.at(j); }

    // E_{t_jfrom, x}[phi(X_{t_jto})] for every start state x at once:
    // (P_{j_from} P_{j_from+1} ... P_{j_to-1}) phi. phi is S x k.
    Mat expectation(std::size_t j_from, std::size_t j_to, const Mat& phi) const {
        if (j_from > j_to || j_to > step_count())
            throw std::invalid_argument("expectation: node range out of bounds");
        if (phi.rows() != static_cast<Eigen::Index>(state_count_))
            throw std::invalid_argument("expectation: phi has " + std::to_string(phi.rows()) +
                                        " rows, chain has " + std::to_string(state_count_) +
                                        " states");
        Mat acc = phi;
        for (std::size_t j = j_to; j > j_from; --j) acc = transitions_[j - 1] * acc;
        return acc;
    }

    Vec expectation(std::size_t j_from, std::size_t j_to, const Vec& phi) const {
        Mat r = expectation(j_from, j_to, Mat(phi));
        return Vec(r.col(0));
    }

    // count independent paths from (j_from, x); deterministic given seed, and
    // the per-path seed derivation makes paths independent of the thread count.
    std::vector<PathSample> sample_paths(std::size_t j_from, std::size_t x, std::size_t count,
                                         std::uint64_t seed) const {
        if (count < 1) throw std::invalid_argument("sample_paths: count must be positive");
        if (x >= state_count_) throw std::invalid_argument("sample_paths: invalid start state");
        if (j_from > step_count()) throw std::invalid_argument("sample_paths: invalid start node");
        std::vector<PathSample> paths(count);
        parallel_for(count, [&](std::size_t i) {
            PathSample& p = paths[i];
            p.start_index = j_from;
            p.seed = split_seed(seed, i);
            p.states.resize(step_count() - j_from + 1);
            p.states[0] = x;
            std::uint64_t rng = p.seed;
            std::size_t cur = x;
            for (std::size_t j = j_from; j < step_count(); ++j) {
                cur = step(j, cur, &rng);
                p.states[j - j_from + 1] = cur;
            }
        });
        return paths;
    }

private:
    // xorshift* stream; uniform doubles via the top 53 bits, so sampling is
    // bit-reproducible across platforms (std distributions are not).
    static double next_uniform(std::uint64_t* state) {
        std::uint64_t z = *state;
        z ^= z >> 12;
        z ^= z << 25;
        z ^= z >> 27;
        *state = z;
        return static_cast<double>((z * 0x2545f4914f6cdd1dULL) >> 11) * 0x1.0p-53;
    }

    std::size_t step(std::size_t j, std::size_t x, std::uint64_t* rng) const {
        double u = next_uniform(rng);
        const Mat& p = transitions_[j];
        double cdf = 0.0;
        auto row = static_cast<Eigen::Index>(x);
        for (Eigen::Index y = 0; y + 1 < p.cols(); ++y) {
            cdf += p(row, y);
            if (u < cdf) return static_cast<std::size_t>(y);
        }
        return state_count_ - 1;
    }

    std::size_t state_count_;
    std::vector<Mat> transitions_;
};

// History-state encoding for the path lift: a tuple (h_0,...,h_N) over the base
// state space maps to sum_m h_m * S^m.
inline std::size_t encode_history(std::span<const std::size_t> history, std::size_t base_states) {
    std::size_t idx = 0;
    std::size_t scale = 1;
    for (std::size_t m = 0; m < history.size(); ++m) {
        idx += history[m] * scale;
        scale *= base_states;
    }
    return idx;
}

inline std::vector<std::size_t> decode_history(std::size_t idx, std::size_t base_states,
                                               std::size_t length) {
    std::vector<std::size_t> h(length);
    for (std::size_t m = 0; m < length; ++m) {
        h[m] = idx % base_states;
        idx /= base_states;
    }
    return h;
}

// The constant-x tuple: the lifted start state for a chain begun at x.
inline std::size_t lifted_start_state(std::size_t x, std::size_t base_states,
                                      std::size_t node_count) {
    std::vector<std::size_t> h(node_count, x);
    return encode_history(h, base_states);
}

// Chain on history tuples, realizing the path process on a finite horizon: the
// state at node j is the trajectory stopped at j (coordinates beyond j repeat
// the current state). Expectations of terminal-coordinate functionals agree
// with the base chain exactly.
inline MarkovChainModel path_lift(const MarkovChainModel& chain, const TimeGrid& grid,
                                  std::size_t state_budget = 1024) {
    if (chain.step_count() != grid.steps())
        throw std::invalid_argument("path_lift: chain and grid disagree on step count");
    std::size_t s = chain.state_count();
    std::size_t n_nodes = grid.node_count();
    std::size_t lifted = 1;
    for (std::size_t m = 0; m < n_nodes; ++m) {
        if (lifted > state_budget / s + 1) {
            // Overflow-safe required-size report: recompute with saturation.
            double req = std::pow(static_cast<double>(s), static_cast<double>(n_nodes));
            std::size_t required = req > 1e18 ? static_cast<std::size_t>(-1)
                                              : static_cast<std::size_t>(req);
            throw capacity_error(required, state_budget,
                                 "path_lift: requires " + std::to_string(required) +
                                     " history states, budget is " + std::to_string(state_budget));
        }
        lifted *= s;
    }
    if (lifted > state_budget)
        throw capacity_error(lifted, state_budget,
                             "path_lift: requires " + std::to_string(lifted) +
                                 " history states, budget is " + std::to_string(state_budget));

    auto ln = static_cast<Eigen::Index>(lifted);
    std::vector<Mat> steps(chain.step_count());
    for (std::size_t j = 0; j < chain.step_count(); ++j) {
        Mat p = Mat::Zero(ln, ln);
        for (std::size_t idx = 0; idx < lifted; ++idx) {
            auto h = decode_history(idx, s, n_nodes);
            std::size_t x = h[j];
            for (std::size_t y = 0; y < s; ++y) {
                auto h2 = h;
                for (std::size_t m = j + 1; m < n_nodes; ++m) h2[m] = y;
                std::size_t tgt = encode_history(h2, s);
                p(static_cast<Eigen::Index>(idx), static_cast<Eigen::Index>(tgt)) +=
                    chain.transition(j)(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
            }
        }
        steps[j] = std::move(p);
    }
    return MarkovChainModel(lifted, std::move(steps));
}

}  // namespace mie
