#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mie/core.hpp"
#include "mie/generator.hpp"
#include "mie/time_grid.hpp"

namespace mie {

// u[node][state] in R^k. A full field covers nodes 0..N; a partial field
// (from the blow-up monitor) covers first_node..N. The terminal slice is
// pinned to the terminal data by every producer.
class SolutionField {
public:
    SolutionField(TimeGrid grid, std::size_t first_node, std::vector<Mat> values)
        : grid_(std::move(grid)), first_node_(first_node), values_(std::move(values)) {
        if (first_node_ + values_.size() != grid_.node_count())
            throw std::invalid_argument("SolutionField: slice count does not reach the horizon");
        if (values_.empty()) throw std::invalid_argument("SolutionField: no slices");
        auto rows = values_.front().rows();
        auto cols = values_.front().cols();
        for (const Mat& v : values_)
            if (v.rows() != rows || v.cols() != cols)
                throw std::invalid_argument("SolutionField: ragged slices");
    }

    static SolutionField zero(const TimeGrid& grid, std::size_t state_count, Eigen::Index k) {
        return SolutionField(grid, 0,
                             std::vector<Mat>(grid.node_count(),
                                              Mat::Zero(static_cast<Eigen::Index>(state_count), k)));
    }

    const TimeGrid& grid() const { return grid_; }
    std::size_t first_node() const { return first_node_; }
    std::size_t state_count() const { return static_cast<std::size_t>(values_.front().rows()); }
    Eigen::Index dim() const { return values_.front().cols(); }

    // Slice at grid node j (rows = states, cols = components).
    const Mat& slice(std::size_t j) const {
        if (j < first_node_ || j >= first_node_ + values_.size())
            throw std::invalid_argument("SolutionField: node " + std::to_string(j) +
                                        " outside the covered range");
        return values_[j - first_node_];
    }
    Mat& slice(std::size_t j) {
        return const_cast<Mat&>(static_cast<const SolutionField*>(this)->slice(j));
    }

    Vec value(std::size_t j, std::size_t x) const {
        return slice(j).row(static_cast<Eigen::Index>(x)).transpose();
    }

    // sup over covered (j,x) of the Euclidean distance to the other field.
    double sup_distance(const SolutionField& other) const {
        if (first_node_ != other.first_node_ || values_.size() != other.values_.size())
            throw std::invalid_argument("sup_distance: fields cover different ranges");
        double sup = 0.0;
        for (std::size_t s = 0; s < values_.size(); ++s) {
            Mat diff = values_[s] - other.values_[s];
            for (Eigen::Index r = 0; r < diff.rows(); ++r)
                sup = std::max(sup, diff.row(r).norm());
        }
        return sup;
    }

    double sup_norm() const {
        double sup = 0.0;
        for (const Mat& v : values_)
            for (Eigen::Index r = 0; r < v.rows(); ++r) sup = std::max(sup, v.row(r).norm());
        return sup;
    }

    // Componentwise bounding box over all covered values.
    CompactBox hull() const {
        Vec lo = Vec::Constant(dim(), kInf), hi = Vec::Constant(dim(), -kInf);
        for (const Mat& v : values_) {
            for (Eigen::Index c = 0; c < v.cols(); ++c) {
                lo[c] = std::min(lo[c], v.col(c).minCoeff());
                hi[c] = std::max(hi[c], v.col(c).maxCoeff());
            }
        }
        return CompactBox(lo, hi);
    }

private:
    TimeGrid grid_;
    std::size_t first_node_;
    std::vector<Mat> values_;
};

// Convergence/blow-up diagnostics of a solve.
struct BlowupRecord {
    double t_minus_estimate = 0.0;
    std::string trigger;  // "boundary" or "growth"
    std::size_t halt_node = 0;
};

struct SolveReport {
    bool converged = false;
    std::size_t iterations = 0;
    double final_residual = 0.0;  // sup-norm of the last Picard increment
    double defect = 0.0;          // sup of the one-step equation residual
    std::optional<BlowupRecord> blowup;
    // min over states of min{dist(u,boundary), 1/(1+|u|)} per covered node
    // (blow-up marches only).
    std::vector<double> condB_trace;
    std::vector<double> increment_history;  // sup|u_n - u_{n-1}| per sweep
    std::optional<CompactBox> iterate_hull;
    std::vector<double> clip_level_differences;  // 1-D global solver only
};

}  // namespace mie
