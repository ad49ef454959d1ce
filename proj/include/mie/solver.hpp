#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mie/core.hpp"
#include "mie/errors.hpp"
#include "mie/generator.hpp"
#include "mie/markov_chain.hpp"
#include "mie/solution_field.hpp"
#include "mie/time_grid.hpp"

namespace mie {

struct PicardOptions {
    std::size_t max_iter = 200;
    double tol = 1e-10;
    double damping = 1.0;  // in (0,1]; 1 is the undamped iteration
    // Where the driver is evaluated inside each sweep. `propagated` feeds f the
    // next slice's propagated expectation, which makes the fixed point
    // identical to the explicit one-step recursion (and to the affine DP), and
    // turns the factorial contraction tail into an exact discrete bound.
    // `slice` feeds f the slice's own previous-iterate value.
    enum class FArg { propagated, slice };
    FArg f_arg = FArg::propagated;
};

namespace detail {

inline void check_solver_inputs(const MarkovChainModel& chain, const TimeGrid& grid,
                                const Generator& gen, const Mat& g) {
    if (chain.step_count() != grid.steps())
        throw std::invalid_argument("solver: chain and grid disagree on step count");
    if (g.rows() != static_cast<Eigen::Index>(chain.state_count()))
        throw std::invalid_argument("solver: terminal data must cover every state");
    if (g.cols() != gen.dim())
        throw std::invalid_argument("solver: terminal data dimension != generator dimension");
    for (Eigen::Index x = 0; x < g.rows(); ++x) {
        Vec gx = g.row(x).transpose();
        if (!gx.allFinite() || !gen.domain().contains(gx))
            throw std::invalid_argument("solver: terminal value at state " + std::to_string(x) +
                                        " lies outside the domain");
    }
}

inline void expand_hull(Vec& lo, Vec& hi, const Mat& slice) {
    for (Eigen::Index c = 0; c < slice.cols(); ++c) {
        lo[c] = std::min(lo[c], slice.col(c).minCoeff());
        hi[c] = std::max(hi[c], slice.col(c).maxCoeff());
    }
}

inline double sup_row_norm_diff(const std::vector<Mat>& a, const std::vector<Mat>& b) {
    double sup = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        Mat d = a[j] - b[j];
        for (Eigen::Index r = 0; r < d.rows(); ++r) sup = std::max(sup, d.row(r).norm());
    }
    return sup;
}

}  // namespace detail

// One-step equation defect per (node,state):
//   |E_{t_j,x}[u(t_{j+1}, X)] - u(t_j,x) - w_j f(t_j, x, u(t_j,x))|,
// the epsilon-approximate-solution statistic for adjacent node pairs. One-step
// defects compose into the full two-parameter defect through the Markov
// property. Rows outside the field's coverage (and the terminal row) are zero.
inline ScalarField residual(const MarkovChainModel& chain, const TimeGrid& grid,
                            const Generator& gen, const SolutionField& u) {
    if (chain.step_count() != grid.steps())
        throw std::invalid_argument("residual: chain and grid disagree on step count");
    ScalarField res = constant_scalar_field(grid.node_count(), chain.state_count(), 0.0);
    for (std::size_t j = u.first_node(); j < grid.steps(); ++j) {
        Mat propagated = chain.transition(j) * u.slice(j + 1);
        for (std::size_t x = 0; x < chain.state_count(); ++x) {
            Vec own = u.value(j, x);
            Vec defect = propagated.row(static_cast<Eigen::Index>(x)).transpose() - own -
                         grid.weight(j) * gen(j, x, own);
            res(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(x)) = defect.norm();
        }
    }
    return res;
}

// Picard iteration for the discretized terminal value problem:
//   u_0(j,x) = E_{t_j,x}[g(X_T)],
//   u_n(j,x) = u_0(j,x) - E_{t_j,x}[ sum_l w_l f(t_l, X_l, arg_l) ],
// each sweep computed exactly by one backward accumulation. Domain exits are
// errors, never clamped.
inline std::pair<SolutionField, SolveReport> picard_solve(const MarkovChainModel& chain,
                                                          const TimeGrid& grid,
                                                          const Generator& gen, const Mat& g,
                                                          const PicardOptions& opts = {}) {
    detail::check_solver_inputs(chain, grid, gen, g);
    if (!(opts.damping > 0.0 && opts.damping <= 1.0))
        throw std::invalid_argument("picard_solve: damping must lie in (0,1]");
    if (opts.max_iter < 1) throw std::invalid_argument("picard_solve: max_iter must be positive");

    std::size_t n = grid.steps();
    auto s = static_cast<Eigen::Index>(chain.state_count());
    Eigen::Index k = gen.dim();

    std::vector<Mat> u0(n + 1);
    u0[n] = g;
    for (std::size_t j = n; j > 0; --j) u0[j - 1] = chain.transition(j - 1) * u0[j];

    Vec hull_lo = Vec::Constant(k, kInf), hull_hi = Vec::Constant(k, -kInf);
    for (const Mat& slice : u0) detail::expand_hull(hull_lo, hull_hi, slice);

    std::vector<Mat> cur = u0;
    SolveReport report;
    for (std::size_t it = 0; it < opts.max_iter; ++it) {
        std::vector<Mat> accum(n + 1);
        accum[n] = Mat::Zero(s, k);
        for (std::size_t j = n; j > 0; --j) {
            std::size_t jj = j - 1;
            Mat prop_next = chain.transition(jj) * cur[j];
            Mat fa(s, k);
            for (Eigen::Index x = 0; x < s; ++x) {
                Vec arg = opts.f_arg == PicardOptions::FArg::propagated
                              ? Vec(prop_next.row(x).transpose())
                              : Vec(cur[jj].row(x).transpose());
                if (!gen.domain().contains(arg)) {
                    arg = gen.domain().snap(arg);
                    if (!gen.domain().contains(arg))
                        throw domain_exit_error(jj, static_cast<std::size_t>(x), arg,
                                                "picard_solve: iterate left the domain at node " +
                                                    std::to_string(jj));
                }
                fa.row(x) = gen(jj, static_cast<std::size_t>(x), arg).transpose();
            }
            accum[jj] = chain.transition(jj) * accum[j] + grid.weight(jj) * fa;
        }

        std::vector<Mat> next(n + 1);
        next[n] = g;
        for (std::size_t j = 0; j < n; ++j) next[j] = u0[j] - accum[j];
        if (opts.damping < 1.0)
            for (std::size_t j = 0; j < n; ++j)
                next[j] = cur[j] + opts.damping * (next[j] - cur[j]);

        for (std::size_t j = 0; j < n; ++j) {
            for (Eigen::Index x = 0; x < s; ++x) {
                Vec v = next[j].row(x).transpose();
                if (!v.allFinite())
                    throw domain_exit_error(j, static_cast<std::size_t>(x), v,
                                            "picard_solve: iterate diverged at node " +
                                                std::to_string(j));
                if (!gen.domain().contains(v)) {
                    v = gen.domain().snap(v);
                    if (!gen.domain().contains(v))
                        throw domain_exit_error(j, static_cast<std::size_t>(x), v,
                                                "picard_solve: iterate left the domain at node " +
                                                    std::to_string(j));
                    next[j].row(x) = v.transpose();
                }
            }
            detail::expand_hull(hull_lo, hull_hi, next[j]);
        }

        double increment = detail::sup_row_norm_diff(next, cur);
        report.increment_history.push_back(increment);
        report.iterations = it + 1;
        report.final_residual = increment;
        cur = std::move(next);
        if (increment <= opts.tol) {
            report.converged = true;
            break;
        }
    }

    report.iterate_hull = CompactBox(hull_lo, hull_hi);
    SolutionField field(grid, 0, std::move(cur));
    report.defect = residual(chain, grid, gen, field).maxCoeff();
    return {std::move(field), std::move(report)};
}

// The explicit epsilon-approximate construction: macro intervals
// T = t_{i_0} > t_{i_1} > ... > 0 are filled by
//   u(r,x) = E_{r,x}[u(t_i, X_{t_i})]
//          - E_{r,x}[ sum w_l f(t_l, X_l, E_{t_l,X_l}[u(t_i, X_{t_i})]) ]
// where u(t_i, .) is the previous stage's value at the macro node.
inline SolutionField epsilon_stepper(const MarkovChainModel& chain, const TimeGrid& grid,
                                     const Generator& gen, const Mat& g,
                                     const std::vector<std::size_t>& macro_nodes) {
    detail::check_solver_inputs(chain, grid, gen, g);
    if (macro_nodes.size() < 2 || macro_nodes.front() != 0 || macro_nodes.back() != grid.steps())
        throw std::invalid_argument("epsilon_stepper: macro nodes must run from 0 to N");
    for (std::size_t i = 0; i + 1 < macro_nodes.size(); ++i)
        if (!(macro_nodes[i] < macro_nodes[i + 1]))
            throw std::invalid_argument("epsilon_stepper: macro nodes must be strictly increasing");

    std::size_t n = grid.steps();
    auto s = static_cast<Eigen::Index>(chain.state_count());
    Eigen::Index k = gen.dim();
    std::vector<Mat> u(n + 1, Mat::Zero(s, k));
    u[n] = g;

    for (std::size_t stage = macro_nodes.size() - 1; stage > 0; --stage) {
        std::size_t hi = macro_nodes[stage];
        std::size_t lo = macro_nodes[stage - 1];

        std::vector<Mat> h(hi + 1);
        h[hi] = u[hi];
        for (std::size_t j = hi; j > lo; --j) {
            h[j - 1] = chain.transition(j - 1) * h[j];
            for (Eigen::Index x = 0; x < s; ++x) {
                Vec v = h[j - 1].row(x).transpose();
                if (!gen.domain().contains(v)) {
                    v = gen.domain().snap(v);
                    if (!gen.domain().contains(v))
                        throw domain_exit_error(
                            j - 1, static_cast<std::size_t>(x), v,
                            "epsilon_stepper: propagated value left the domain");
                    h[j - 1].row(x) = v.transpose();
                }
            }
        }

        std::vector<Mat> accum(hi + 1);
        accum[hi] = Mat::Zero(s, k);
        for (std::size_t j = hi; j > lo; --j) {
            std::size_t jj = j - 1;
            Mat fa(s, k);
            for (Eigen::Index x = 0; x < s; ++x)
                fa.row(x) = gen(jj, static_cast<std::size_t>(x), Vec(h[jj].row(x).transpose()))
                                .transpose();
            accum[jj] = chain.transition(jj) * accum[j] + grid.weight(jj) * fa;
        }

        for (std::size_t j = lo; j < hi; ++j) {
            u[j] = h[j] - accum[j];
            for (Eigen::Index x = 0; x < s; ++x) {
                Vec v = u[j].row(x).transpose();
                if (!v.allFinite())
                    throw domain_exit_error(j, static_cast<std::size_t>(x), v,
                                            "epsilon_stepper: value diverged");
                if (!gen.domain().contains(v)) {
                    v = gen.domain().snap(v);
                    if (!gen.domain().contains(v))
                        throw domain_exit_error(j, static_cast<std::size_t>(x), v,
                                                "epsilon_stepper: value left the domain");
                    u[j].row(x) = v.transpose();
                }
            }
        }
    }
    return SolutionField(grid, 0, std::move(u));
}

// The condition-(B) statistic of a slice: min over states of
// min{ dist(u, boundary), 1/(1+|u|) }.
inline double condition_b_statistic(const Domain& domain, const Mat& slice) {
    double stat = kInf;
    for (Eigen::Index x = 0; x < slice.rows(); ++x) {
        Vec v = slice.row(x).transpose();
        stat = std::min(stat, std::min(domain.boundary_distance(v), 1.0 / (1.0 + v.norm())));
    }
    return stat;
}

// Marches the explicit recursion backward from T, recording the condition-(B)
// statistic per slice, and halts at the first slice where the statistic drops
// below `threshold` or the iterate exits the domain. Halting is a normal
// outcome: the report carries the t_g^- estimate and which term fired.
inline std::pair<SolutionField, SolveReport> march_with_blowup_monitor(
    const MarkovChainModel& chain, const TimeGrid& grid, const Generator& gen, const Mat& g,
    double threshold) {
    detail::check_solver_inputs(chain, grid, gen, g);
    if (!(threshold > 0.0))
        throw std::invalid_argument("march_with_blowup_monitor: threshold must be positive");
    for (Eigen::Index x = 0; x < g.rows(); ++x) {
        Vec gx = g.row(x).transpose();
        if (!(gen.domain().boundary_distance(gx) > 0.0))
            throw precondition_error(
                "march_with_blowup_monitor: terminal data touches the boundary");
    }

    std::size_t n = grid.steps();
    auto s = static_cast<Eigen::Index>(chain.state_count());
    std::vector<Mat> slices;  // built backward, slices[0] is node N
    slices.reserve(n + 1);
    slices.push_back(g);
    std::vector<double> trace;
    trace.push_back(condition_b_statistic(gen.domain(), g));

    SolveReport report;
    std::size_t first_valid = 0;
    for (std::size_t j = n; j > 0; --j) {
        std::size_t jj = j - 1;
        Mat propagated = chain.transition(jj) * slices.back();
        Mat value(s, gen.dim());
        bool exited = false;
        for (Eigen::Index x = 0; x < s; ++x) {
            Vec prop = gen.domain().snap(propagated.row(x).transpose());
            if (!gen.domain().contains(prop)) {
                exited = true;
                break;
            }
            Vec v = prop - grid.weight(jj) * gen(jj, static_cast<std::size_t>(x), prop);
            if (!v.allFinite()) {
                exited = true;
                break;
            }
            v = gen.domain().snap(v);
            if (!gen.domain().contains(v)) {
                exited = true;
                break;
            }
            value.row(x) = v.transpose();
        }
        if (exited) {
            first_valid = j;
            report.blowup = BlowupRecord{grid.node(j), "boundary", j};
            break;
        }

        double stat = condition_b_statistic(gen.domain(), value);
        slices.push_back(std::move(value));
        trace.push_back(stat);
        if (stat < threshold) {
            first_valid = jj;
            // Identify which term of the statistic fired at the worst state.
            double worst_dist = kInf, worst_growth = kInf;
            const Mat& sl = slices.back();
            for (Eigen::Index x = 0; x < s; ++x) {
                Vec v = sl.row(x).transpose();
                worst_dist = std::min(worst_dist, gen.domain().boundary_distance(v));
                worst_growth = std::min(worst_growth, 1.0 / (1.0 + v.norm()));
            }
            report.blowup =
                BlowupRecord{grid.node(jj), worst_dist <= worst_growth ? "boundary" : "growth", jj};
            break;
        }
    }

    std::reverse(slices.begin(), slices.end());
    std::reverse(trace.begin(), trace.end());
    report.condB_trace = std::move(trace);
    report.converged = !report.blowup.has_value();
    SolutionField field(grid, first_valid, std::move(slices));
    report.defect = residual(chain, grid, gen, field).maxCoeff();
    return {std::move(field), std::move(report)};
}

// 1-D global solver: terminal data is clipped away from finite endpoints at
// rate 2^{-n}, each level is solved on the closed interval (the driver's
// continuous extension), and the deepest level is returned together with the
// per-level sup-differences as a uniform-Cauchy diagnostic.
inline std::pair<SolutionField, SolveReport> solve_1d_global(const MarkovChainModel& chain,
                                                             const TimeGrid& grid,
                                                             const Generator& gen, const Mat& g,
                                                             std::size_t clip_depth,
                                                             const PicardOptions& opts = {}) {
    if (gen.dim() != 1) throw std::invalid_argument("solve_1d_global: generator must be 1-D");
    if (clip_depth < 1) throw std::invalid_argument("solve_1d_global: clip_depth must be positive");
    Generator closed = gen.on_closure();
    detail::check_solver_inputs(chain, grid, closed, g);

    const AxisBounds& axis = gen.domain().axis(0);
    double d_lo = axis.lower, d_hi = axis.upper;
    bool lo_finite = std::isfinite(d_lo), hi_finite = std::isfinite(d_hi);

    // Endpoint sign conditions: f <= 0 at the lower endpoint, f >= 0 at the
    // upper, sampled exactly over all (node,state).
    constexpr double kSignTol = 1e-9;
    for (std::size_t j = 0; j < grid.node_count(); ++j) {
        for (std::size_t x = 0; x < chain.state_count(); ++x) {
            if (lo_finite) {
                Vec w(1);
                w[0] = d_lo;
                if (closed(j, x, w)[0] > kSignTol)
                    throw precondition_error(
                        "solve_1d_global: f > 0 at the lower endpoint (node " +
                        std::to_string(j) + ", state " + std::to_string(x) + ")");
            }
            if (hi_finite) {
                Vec w(1);
                w[0] = d_hi;
                if (closed(j, x, w)[0] < -kSignTol)
                    throw precondition_error(
                        "solve_1d_global: f < 0 at the upper endpoint (node " +
                        std::to_string(j) + ", state " + std::to_string(x) + ")");
            }
        }
    }

    auto clip_level = [&](std::size_t level) {
        Mat gn = g;
        double scale = std::pow(0.5, static_cast<double>(level));
        for (Eigen::Index x = 0; x < gn.rows(); ++x) {
            double v = gn(x, 0);
            if (lo_finite && hi_finite) {
                double margin = (d_hi - d_lo) * scale;
                v = std::min(std::max(v, d_lo + margin), d_hi - margin);
            } else if (lo_finite) {
                v = std::max(v, d_lo + scale);
            } else if (hi_finite) {
                v = std::min(v, d_hi - scale);
            }
            gn(x, 0) = v;
        }
        return gn;
    };

    std::optional<SolutionField> previous;
    SolveReport report;
    std::size_t levels = (lo_finite || hi_finite) ? clip_depth : 1;
    for (std::size_t level = 1; level <= levels; ++level) {
        Mat gn = clip_level(level);
        std::optional<std::pair<SolutionField, SolveReport>> solved;
        try {
            solved = picard_solve(chain, grid, closed, gn, opts);
        } catch (const domain_exit_error& e) {
            if (!previous) throw;  // even the first clip level blows up
            report.converged = false;
            report.blowup = BlowupRecord{grid.node(e.node()), "boundary", e.node()};
            return {std::move(*previous), std::move(report)};
        }
        if (previous)
            report.clip_level_differences.push_back(previous->sup_distance(solved->first));
        previous = std::move(solved->first);
        report.converged = solved->second.converged;
        report.iterations = solved->second.iterations;
        report.final_residual = solved->second.final_residual;
        report.defect = solved->second.defect;
        report.increment_history = solved->second.increment_history;
        report.iterate_hull = solved->second.iterate_hull;
        if (!report.clip_level_differences.empty() &&
            report.clip_level_differences.back() < opts.tol)
            break;  // successive clip levels have stabilized
    }
    return {std::move(*previous), std::move(report)};
}

// Local-horizon selector: beta defaults to half the distance of the
// {E_{r,x}[g(X_T)]} hull from the boundary (1.0 when that distance is
// infinite), alpha is the largest grid-aligned horizon whose mu-bound mass
// stays below beta. On [T-alpha, T] the explicit stepper provably stays inside
// the closed beta-neighborhood of the hull.
struct LocalHorizon {
    double alpha = 0.0;
    double beta = 0.0;
    std::size_t node = 0;  // first node of the horizon
    CompactBox region;     // the closed beta-neighborhood used for the bound
};

inline LocalHorizon local_horizon(const MarkovChainModel& chain, const TimeGrid& grid,
                                  const Generator& gen, const Mat& g,
                                  std::optional<double> beta_request = std::nullopt) {
    detail::check_solver_inputs(chain, grid, gen, g);
    if (!gen.has_mu_bound())
        throw precondition_error("local_horizon: generator lacks mu-bound metadata");
    for (Eigen::Index x = 0; x < g.rows(); ++x)
        if (!(gen.domain().boundary_distance(Vec(g.row(x).transpose())) > 0.0))
            throw precondition_error("local_horizon: terminal data touches the boundary");

    std::size_t n = grid.steps();
    std::vector<Mat> u0(n + 1);
    u0[n] = g;
    for (std::size_t j = n; j > 0; --j) u0[j - 1] = chain.transition(j - 1) * u0[j];

    double hull_distance = kInf;
    Vec lo = Vec::Constant(gen.dim(), kInf), hi = Vec::Constant(gen.dim(), -kInf);
    for (const Mat& slice : u0) {
        detail::expand_hull(lo, hi, slice);
        for (Eigen::Index x = 0; x < slice.rows(); ++x)
            hull_distance =
                std::min(hull_distance, gen.domain().boundary_distance(Vec(slice.row(x).transpose())));
    }

    double beta;
    if (beta_request) {
        beta = *beta_request;
        if (!(beta > 0.0)) throw std::invalid_argument("local_horizon: beta must be positive");
        if (std::isfinite(hull_distance) && beta > hull_distance / 2.0)
            throw std::invalid_argument("local_horizon: beta exceeds half the hull distance");
    } else {
        beta = std::isfinite(hull_distance) ? hull_distance / 2.0 : 1.0;
    }

    // Closed beta-neighborhood of the hull, intersected with the domain closure.
    for (Eigen::Index i = 0; i < gen.dim(); ++i) {
        const AxisBounds& a = gen.domain().axis(i);
        lo[i] = std::max(lo[i] - beta, a.lower);
        hi[i] = std::min(hi[i] + beta, a.upper);
    }
    CompactBox region(lo, hi);

    std::size_t horizon_node = n;
    double tail = 0.0;
    while (horizon_node > 0) {
        std::size_t l = horizon_node - 1;
        double a_sup = 0.0;
        for (std::size_t x = 0; x < chain.state_count(); ++x)
            a_sup = std::max(a_sup, gen.mu_bound(l, x, region));
        if (tail + grid.weight(l) * a_sup > beta) break;
        tail += grid.weight(l) * a_sup;
        --horizon_node;
    }
    if (horizon_node == n)
        throw precondition_error(
            "local_horizon: no positive grid-aligned horizon satisfies the mass condition; "
            "refine the grid");
    return LocalHorizon{grid.horizon() - grid.node(horizon_node), beta, horizon_node, region};
}

// Contraction-tail coefficients for the Picard increments: with
// a_l = w_l lambda_l, increments obey sup|u_{n+1}-u_n| <= C_n * sup|u_1-u_0|
// where C_n sums products over strictly increasing index tuples for the
// propagated sweep (hence C_n <= (sum a)^n / n!) and over nondecreasing tuples
// for the slice sweep.
inline std::vector<double> picard_tail_coefficients(const TimeGrid& grid,
                                                    const std::vector<double>& lambda_per_node,
                                                    std::size_t n_max,
                                                    PicardOptions::FArg mode) {
    std::size_t n = grid.steps();
    if (lambda_per_node.size() < n)
        throw std::invalid_argument("picard_tail_coefficients: need lambda per step node");
    std::vector<double> a(n);
    for (std::size_t l = 0; l < n; ++l) a[l] = grid.weight(l) * lambda_per_node[l];

    std::vector<double> coeffs;
    coeffs.reserve(n_max);
    std::vector<double> prev(n + 1, 1.0);
    for (std::size_t order = 1; order <= n_max; ++order) {
        std::vector<double> cur(n + 1, 0.0);
        if (mode == PicardOptions::FArg::propagated) {
            for (std::size_t j = n; j > 0; --j) cur[j - 1] = cur[j] + a[j - 1] * prev[j];
        } else {
            for (std::size_t j = n; j > 0; --j) cur[j - 1] = cur[j] + a[j - 1] * prev[j - 1];
        }
        coeffs.push_back(cur[0]);
        prev = std::move(cur);
    }
    return coeffs;
}

}  // namespace mie
