#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mie/core.hpp"

namespace mie {

// Discretization of ([0,T], mu): ordered nodes t_0 = 0 < ... < t_N = T and
// nonnegative step weights, weights[j] ~ mu([t_j, t_{j+1})). All integrals in
// this library are left-point sums against these weights. Immutable.
class TimeGrid {
public:
    TimeGrid(std::vector<double> nodes, std::vector<double> weights)
        : nodes_(std::move(nodes)), weights_(std::move(weights)) {
        if (nodes_.size() < 2) throw std::invalid_argument("TimeGrid: need at least two nodes");
        if (nodes_.front() != 0.0) throw std::invalid_argument("TimeGrid: first node must be 0");
        for (std::size_t j = 0; j + 1 < nodes_.size(); ++j)
            if (!(nodes_[j] < nodes_[j + 1]))
                throw std::invalid_argument("TimeGrid: nodes must be strictly increasing");
        if (weights_.size() != nodes_.size() - 1)
            throw std::invalid_argument("TimeGrid: need one weight per step");
        double total = 0.0;
        for (double w : weights_) {
            if (!(w >= 0.0)) throw std::invalid_argument("TimeGrid: weights must be nonnegative");
            total += w;
        }
        if (!std::isfinite(total)) throw std::invalid_argument("TimeGrid: total mass must be finite");
    }

    // Uniform nodes t_j = j T / N with Lebesgue weights T/N.
    static TimeGrid uniform(double horizon, std::size_t steps) {
        return uniform(horizon, steps, nullptr);
    }

    // Uniform nodes; weights[j] = (T/N) * density(t_j) (left-point rule).
    static TimeGrid uniform(double horizon, std::size_t steps,
                            const std::function<double(double)>& density) {
        if (!(horizon > 0.0)) throw std::invalid_argument("TimeGrid: horizon must be positive");
        if (steps < 1) throw std::invalid_argument("TimeGrid: need at least one step");
        std::vector<double> nodes(steps + 1);
        std::vector<double> weights(steps);
        double dt = horizon / static_cast<double>(steps);
        for (std::size_t j = 0; j <= steps; ++j)
            nodes[j] = (j == steps) ? horizon : dt * static_cast<double>(j);
        for (std::size_t j = 0; j < steps; ++j) {
            double w = dt;
            if (density) {
                double d = density(nodes[j]);
                if (!(d >= 0.0) || !std::isfinite(d))
                    throw std::invalid_argument("TimeGrid: density must be finite and nonnegative");
                w = dt * d;
            }
            weights[j] = w;
        }
        return TimeGrid(std::move(nodes), std::move(weights));
    }

    std::size_t steps() const { return weights_.size(); }
    std::size_t node_count() const { return nodes_.size(); }
    double node(std::size_t j) const { return nodes_.at(j); }
    double weight(std::size_t j) const { return weights_.at(j); }
    double horizon() const { return nodes_.back(); }
    const std::vector<double>& nodes() const { return nodes_; }
    const std::vector<double>& weights() const { return weights_; }

    // Sum of weights over [j_from, j_to): the mu-mass of that index range.
    double mass(std::size_t j_from, std::size_t j_to) const {
        check_range(j_from, j_to);
        double s = 0.0;
        for (std::size_t j = j_from; j < j_to; ++j) s += weights_[j];
        return s;
    }

    double total_mass() const { return mass(0, steps()); }

    void check_range(std::size_t j_from, std::size_t j_to) const {
        if (j_from > j_to || j_to > steps())
            throw std::invalid_argument("TimeGrid: index range [" + std::to_string(j_from) + "," +
                                        std::to_string(j_to) + "] out of bounds");
    }

private:
    std::vector<double> nodes_;
    std::vector<double> weights_;
};

// Left-point quadrature: sum_{j=j_from}^{j_to-1} weights[j] * values[j].
// Accumulated left to right; an empty range gives zero.
inline double integrate(const TimeGrid& grid, std::span<const double> values, std::size_t j_from,
                        std::size_t j_to) {
    grid.check_range(j_from, j_to);
    if (j_to > j_from && values.size() < j_to)
        throw std::invalid_argument("integrate: values cover fewer nodes than the range");
    double acc = 0.0;
    for (std::size_t j = j_from; j < j_to; ++j) acc += grid.weight(j) * values[j];
    return acc;
}

inline Vec integrate(const TimeGrid& grid, std::span<const Vec> values, std::size_t j_from,
                     std::size_t j_to, Eigen::Index dim) {
    grid.check_range(j_from, j_to);
    if (j_to > j_from && values.size() < j_to)
        throw std::invalid_argument("integrate: values cover fewer nodes than the range");
    Vec acc = Vec::Zero(dim);
    for (std::size_t j = j_from; j < j_to; ++j) {
        if (values[j].size() != dim) throw std::invalid_argument("integrate: dimension mismatch");
        acc += grid.weight(j) * values[j];
    }
    return acc;
}

inline Vec integrate(const TimeGrid& grid, std::span<const Vec> values, std::size_t j_from,
                     std::size_t j_to) {
    Eigen::Index dim = values.empty() ? 1 : values.front().size();
    return integrate(grid, values, j_from, j_to, dim);
}

}  // namespace mie
