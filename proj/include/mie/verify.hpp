#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mie/core.hpp"
#include "mie/errors.hpp"
#include "mie/feynman_kac.hpp"
#include "mie/generator.hpp"
#include "mie/markov_chain.hpp"
#include "mie/solution_field.hpp"
#include "mie/time_grid.hpp"

namespace mie {

struct CheckTolerance {
    double absolute = 1e-9;
    double relative = 1e-9;

    double slack_floor(double bound_magnitude) const {
        return absolute + relative * std::abs(bound_magnitude);
    }
};

struct CheckResult {
    bool passed = false;
    double worst_slack = 0.0;  // min over checked points of bound - quantity
    std::optional<std::pair<std::size_t, std::size_t>> witness;  // (node, state) of worst slack
    std::size_t checked = 0;
    std::size_t skipped = 0;  // premise violations are excluded, never failures
};

// Per-step propagation kernel of the bound recursions. `discrete_exact` uses
// the factor 1/(1 - w b), which dominates the inclusive left-point premise
// exactly; `exponential` uses e^{w b}, the paper's form, which dominates the
// explicit scheme exactly (1 + wb <= e^{wb}) but undershoots the inclusive
// premise at O((wb)^2).
enum class BoundKernel { discrete_exact, exponential };

namespace detail {

inline void check_field_shape(const MarkovChainModel& chain, const TimeGrid& grid,
                              const ScalarField& f, const char* name) {
    if (f.rows() != static_cast<Eigen::Index>(grid.node_count()) ||
        f.cols() != static_cast<Eigen::Index>(chain.state_count()))
        throw std::invalid_argument(std::string(name) + ": field shape must be (nodes x states)");
}

}  // namespace detail

// The Gronwall majorant E_{r,x}[ e^{int b} ( h(X_T) + int a ) ] realized on
// the grid by a backward recursion with the selected per-step kernel.
inline ScalarField gronwall_bound(const MarkovChainModel& chain, const TimeGrid& grid,
                                  const Vec& h, const ScalarField& a, const ScalarField& b,
                                  BoundKernel kernel = BoundKernel::discrete_exact) {
    detail::check_field_shape(chain, grid, a, "gronwall_bound(a)");
    detail::check_field_shape(chain, grid, b, "gronwall_bound(b)");
    if (h.size() != static_cast<Eigen::Index>(chain.state_count()))
        throw std::invalid_argument("gronwall_bound: h must cover every state");
    if (h.minCoeff() < 0.0 || a.minCoeff() < 0.0 || b.minCoeff() < 0.0)
        throw std::invalid_argument("gronwall_bound: inputs must be nonnegative");

    std::size_t n = grid.steps();
    auto s = static_cast<Eigen::Index>(chain.state_count());
    ScalarField out = constant_scalar_field(grid.node_count(), chain.state_count(), 0.0);
    Vec g_cur = h;                 // the h + int a part under the kernel
    Vec ones = Vec::Ones(s);       // E[ e^{int b} ] companion recursion
    out.row(static_cast<Eigen::Index>(n)) = h.transpose();

    if (kernel == BoundKernel::exponential) {
        Vec exp_cur = ones;
        for (std::size_t j = n; j > 0; --j) {
            std::size_t jj = j - 1;
            Vec pg = chain.transition(jj) * g_cur;
            Vec pe = chain.transition(jj) * exp_cur;
            Vec g_next(s), e_next(s);
            for (Eigen::Index x = 0; x < s; ++x) {
                auto r = static_cast<Eigen::Index>(jj);
                double factor = std::exp(grid.weight(jj) * b(r, x));
                g_next[x] = factor * (pg[x] + grid.weight(jj) * a(r, x) * pe[x]);
                e_next[x] = factor * pe[x];
            }
            g_cur = std::move(g_next);
            exp_cur = std::move(e_next);
            out.row(static_cast<Eigen::Index>(jj)) = g_cur.transpose();
        }
        return out;
    }

    // discrete_exact: the fixed point of the inclusive premise operator,
    //   G(j,x) = (Eh + w a + P S(j+1)) / (1 - w b),  S = int (a + b G).
    Vec eh = h;
    Vec integral = Vec::Zero(s);
    for (std::size_t j = n; j > 0; --j) {
        std::size_t jj = j - 1;
        Vec peh = chain.transition(jj) * eh;
        Vec pint = chain.transition(jj) * integral;
        Vec g_next(s), int_next(s);
        for (Eigen::Index x = 0; x < s; ++x) {
            auto r = static_cast<Eigen::Index>(jj);
            double denom = 1.0 - grid.weight(jj) * b(r, x);
            if (!(denom > 0.0))
                throw std::invalid_argument(
                    "gronwall_bound: w*b >= 1 at node " + std::to_string(jj) +
                    "; the grid is too coarse for the discrete-exact kernel");
            double g_val = (peh[x] + grid.weight(jj) * a(r, x) + pint[x]) / denom;
            g_next[x] = g_val;
            int_next[x] = grid.weight(jj) * (a(r, x) + b(r, x) * g_val) + pint[x];
        }
        eh = std::move(peh);
        integral = std::move(int_next);
        out.row(static_cast<Eigen::Index>(jj)) = g_next.transpose();
    }
    return out;
}

// Premise-conditional Gronwall check: at points where
//   v <= E[h] + E[int (a + b v)]           (inclusive left-point sums)
// holds, assert v <= gronwall_bound. Premise violations are skipped and
// counted, matching the lemma's implication shape.
inline CheckResult check_gronwall(const MarkovChainModel& chain, const TimeGrid& grid,
                                  const ScalarField& v, const Vec& h, const ScalarField& a,
                                  const ScalarField& b, CheckTolerance tol = {},
                                  BoundKernel kernel = BoundKernel::discrete_exact) {
    detail::check_field_shape(chain, grid, v, "check_gronwall(v)");
    if (v.minCoeff() < 0.0)
        throw std::invalid_argument("check_gronwall: v must be nonnegative");
    ScalarField bound = gronwall_bound(chain, grid, h, a, b, kernel);

    // Premise right-hand side: E[h] + E[ sum w (a + b v) ].
    std::size_t n = grid.steps();
    auto s = static_cast<Eigen::Index>(chain.state_count());
    ScalarField premise_rhs = constant_scalar_field(grid.node_count(), chain.state_count(), 0.0);
    Vec eh = h;
    Vec integral = Vec::Zero(s);
    premise_rhs.row(static_cast<Eigen::Index>(n)) = h.transpose();
    for (std::size_t j = n; j > 0; --j) {
        std::size_t jj = j - 1;
        eh = chain.transition(jj) * eh;
        integral = chain.transition(jj) * integral;
        for (Eigen::Index x = 0; x < s; ++x) {
            auto r = static_cast<Eigen::Index>(jj);
            integral[x] += grid.weight(jj) * (a(r, x) + b(r, x) * v(r, x));
        }
        premise_rhs.row(static_cast<Eigen::Index>(jj)) = (eh + integral).transpose();
    }

    CheckResult res;
    res.worst_slack = kInf;
    for (Eigen::Index j = 0; j < v.rows(); ++j) {
        for (Eigen::Index x = 0; x < v.cols(); ++x) {
            if (v(j, x) > premise_rhs(j, x) + tol.slack_floor(premise_rhs(j, x))) {
                ++res.skipped;
                continue;
            }
            ++res.checked;
            double slack = bound(j, x) - v(j, x);
            if (slack < res.worst_slack) {
                res.worst_slack = slack;
                res.witness = {static_cast<std::size_t>(j), static_cast<std::size_t>(x)};
            }
        }
    }
    if (res.checked == 0) res.worst_slack = 0.0;
    double floor = res.witness ? tol.slack_floor(bound(static_cast<Eigen::Index>(res.witness->first),
                                                       static_cast<Eigen::Index>(res.witness->second)))
                               : tol.absolute;
    res.passed = res.worst_slack >= -floor;
    return res;
}

// Pointwise ordering of two k=1 solutions (f <= f~ and g >= g~ imply u >= u~).
inline CheckResult check_comparison(const SolutionField& u, const SolutionField& u_tilde,
                                    CheckTolerance tol = {}) {
    if (u.dim() != 1 || u_tilde.dim() != 1)
        throw std::invalid_argument("check_comparison: fields must be one-dimensional");
    if (u.grid().node_count() != u_tilde.grid().node_count() ||
        u.first_node() != u_tilde.first_node() || u.state_count() != u_tilde.state_count())
        throw std::invalid_argument("check_comparison: fields cover different ranges");
    for (std::size_t j = 0; j < u.grid().node_count(); ++j)
        if (u.grid().node(j) != u_tilde.grid().node(j))
            throw std::invalid_argument("check_comparison: grids differ");

    CheckResult res;
    res.worst_slack = kInf;
    for (std::size_t j = u.first_node(); j < u.grid().node_count(); ++j) {
        for (std::size_t x = 0; x < u.state_count(); ++x) {
            ++res.checked;
            double slack = u.value(j, x)[0] - u_tilde.value(j, x)[0];
            if (slack < res.worst_slack) {
                res.worst_slack = slack;
                res.witness = {j, x};
            }
        }
    }
    res.passed = res.worst_slack >= -tol.absolute;
    return res;
}

namespace detail {

// Spot-check that (a,b) dominate the driver affinely on the solution's values.
inline void verify_affine_bound(const Generator& gen, const SolutionField& u,
                                const ScalarField& a, const ScalarField& b,
                                CheckTolerance tol) {
    for (std::size_t j = u.first_node(); j < u.grid().node_count(); ++j) {
        for (std::size_t x = 0; x < u.state_count(); ++x) {
            Vec w = u.value(j, x);
            auto r = static_cast<Eigen::Index>(j);
            auto c = static_cast<Eigen::Index>(x);
            double budget = a(r, c) + b(r, c) * w.norm();
            if (gen(j, x, w).norm() > budget + tol.slack_floor(budget))
                throw precondition_error(
                    "check_growth: |f| exceeds the affine bound at node " + std::to_string(j) +
                    ", state " + std::to_string(x));
        }
    }
}

}  // namespace detail

// Growth estimate |u(r,x)| <= E[ e^{int b} (|g| + int a) ] for affine bounds
// |f| <= a + b|w|. When gen is supplied, the bound validity is spot-checked on
// the solution's own values first.
inline CheckResult check_growth(const SolutionField& u, const Mat& g,
                                const ScalarField& a, const ScalarField& b,
                                const MarkovChainModel& chain, const TimeGrid& grid,
                                CheckTolerance tol = {},
                                BoundKernel kernel = BoundKernel::exponential,
                                const Generator* gen = nullptr) {
    if (gen) detail::verify_affine_bound(*gen, u, a, b, tol);
    Vec h(g.rows());
    for (Eigen::Index x = 0; x < g.rows(); ++x) h[x] = g.row(x).norm();
    ScalarField bound = gronwall_bound(chain, grid, h, a, b, kernel);

    CheckResult res;
    res.worst_slack = kInf;
    for (std::size_t j = u.first_node(); j < grid.node_count(); ++j) {
        for (std::size_t x = 0; x < u.state_count(); ++x) {
            ++res.checked;
            double slack = bound(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(x)) -
                           u.value(j, x).norm();
            if (slack < res.worst_slack) {
                res.worst_slack = slack;
                res.witness = {j, x};
            }
        }
    }
    double floor = res.witness ? tol.slack_floor(bound(static_cast<Eigen::Index>(res.witness->first),
                                                       static_cast<Eigen::Index>(res.witness->second)))
                               : tol.absolute;
    res.passed = res.worst_slack >= -floor;
    return res;
}

// One-sided growth for interval domains with finite lower endpoint:
//   u - d_lo <= E[ e^{int b} ( (g - d_lo) + int (a + b|d_lo|) ) ].
inline CheckResult check_one_sided_growth(const SolutionField& u, const Mat& g, double d_lower,
                                          const ScalarField& a, const ScalarField& b,
                                          const MarkovChainModel& chain, const TimeGrid& grid,
                                          CheckTolerance tol = {},
                                          BoundKernel kernel = BoundKernel::exponential) {
    if (u.dim() != 1)
        throw std::invalid_argument("check_one_sided_growth: field must be one-dimensional");
    Vec h(g.rows());
    for (Eigen::Index x = 0; x < g.rows(); ++x) {
        h[x] = g(x, 0) - d_lower;
        if (h[x] < 0.0)
            throw std::invalid_argument("check_one_sided_growth: terminal data below d_lower");
    }
    ScalarField shifted_a = a.array() + b.array() * std::abs(d_lower);
    ScalarField bound = gronwall_bound(chain, grid, h, shifted_a, b, kernel);

    CheckResult res;
    res.worst_slack = kInf;
    for (std::size_t j = u.first_node(); j < grid.node_count(); ++j) {
        for (std::size_t x = 0; x < u.state_count(); ++x) {
            ++res.checked;
            double slack = bound(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(x)) -
                           (u.value(j, x)[0] - d_lower);
            if (slack < res.worst_slack) {
                res.worst_slack = slack;
                res.witness = {j, x};
            }
        }
    }
    double floor = res.witness ? tol.slack_floor(bound(static_cast<Eigen::Index>(res.witness->first),
                                                       static_cast<Eigen::Index>(res.witness->second)))
                               : tol.absolute;
    res.passed = res.worst_slack >= -floor;
    return res;
}

// Boundary lower bound for interval domains: u - d_lo >= c (E[g] - d_lo) with
// c = e^{- sum_l w_l sup_x n(l,x)} built from the dominating field n of the
// difference quotients near the endpoint.
inline CheckResult check_boundary_lower(const SolutionField& u, const Mat& g, double d_lower,
                                        const ScalarField& n_field,
                                        const MarkovChainModel& chain, const TimeGrid& grid,
                                        CheckTolerance tol = {}) {
    if (u.dim() != 1)
        throw std::invalid_argument("check_boundary_lower: field must be one-dimensional");
    detail::check_field_shape(chain, grid, n_field, "check_boundary_lower(n)");
    if (n_field.minCoeff() < 0.0)
        throw std::invalid_argument("check_boundary_lower: n must be nonnegative");

    double mass = 0.0;
    for (std::size_t l = 0; l < grid.steps(); ++l)
        mass += grid.weight(l) * n_field.row(static_cast<Eigen::Index>(l)).maxCoeff();
    double c = std::exp(-mass);

    std::size_t n = grid.steps();
    std::vector<Vec> eg(n + 1);
    eg[n] = g.col(0);
    for (std::size_t j = n; j > 0; --j) eg[j - 1] = chain.transition(j - 1) * eg[j];

    CheckResult res;
    res.worst_slack = kInf;
    for (std::size_t j = u.first_node(); j < grid.node_count(); ++j) {
        for (std::size_t x = 0; x < u.state_count(); ++x) {
            ++res.checked;
            double lhs = u.value(j, x)[0] - d_lower;
            double rhs = c * (eg[j][static_cast<Eigen::Index>(x)] - d_lower);
            double slack = lhs - rhs;
            if (slack < res.worst_slack) {
                res.worst_slack = slack;
                res.witness = {j, x};
            }
        }
    }
    res.passed = res.worst_slack >= -tol.slack_floor(1.0 + c);
    return res;
}

// Stability bound for two approximate solutions with Lipschitz field lambda
// and defect fields eps, eps~ (scheme residuals stand in for the paper's
// epsilon functions, as documented):
//   |u - u~| <= E[ e^{int lambda} ( |g - g~| + int (eps + eps~) ) ].
inline CheckResult check_stability(const SolutionField& u, const SolutionField& u_tilde,
                                   const Mat& g, const Mat& g_tilde, const ScalarField& lambda,
                                   const ScalarField& eps, const ScalarField& eps_tilde,
                                   const MarkovChainModel& chain, const TimeGrid& grid,
                                   CheckTolerance tol = {},
                                   BoundKernel kernel = BoundKernel::discrete_exact) {
    Vec h(g.rows());
    for (Eigen::Index x = 0; x < g.rows(); ++x) h[x] = (g.row(x) - g_tilde.row(x)).norm();
    ScalarField defects = eps + eps_tilde;
    ScalarField bound = gronwall_bound(chain, grid, h, defects, lambda, kernel);

    CheckResult res;
    res.worst_slack = kInf;
    for (std::size_t j = u.first_node(); j < grid.node_count(); ++j) {
        for (std::size_t x = 0; x < u.state_count(); ++x) {
            ++res.checked;
            double diff = (u.value(j, x) - u_tilde.value(j, x)).norm();
            double slack = bound(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(x)) - diff;
            if (slack < res.worst_slack) {
                res.worst_slack = slack;
                res.witness = {j, x};
            }
        }
    }
    double floor = res.witness ? tol.slack_floor(bound(static_cast<Eigen::Index>(res.witness->first),
                                                       static_cast<Eigen::Index>(res.witness->second)))
                               : tol.absolute;
    res.passed = res.worst_slack >= -floor;
    return res;
}

// Propagator identities along one path: Sigma_{r,r} = I, the cocycle, the
// reverse-product inverse, the norm bound, and (when the factors commute) the
// exponential reduction.
inline CheckResult check_sigma(const SigmaPropagator& prop,
                               std::span<const std::size_t> state_of_node, std::size_t j_from,
                               std::size_t j_to, CheckTolerance tol = {}) {
    CheckResult res;
    res.worst_slack = kInf;
    Eigen::Index k = prop.dim();
    auto note = [&](double violation, std::size_t node) {
        ++res.checked;
        double slack = -violation;  // violations are distances above zero
        if (slack < res.worst_slack) {
            res.worst_slack = slack;
            res.witness = {node, 0};
        }
    };

    Mat eye = Mat::Identity(k, k);
    for (std::size_t r = j_from; r <= j_to; ++r) {
        Mat sigma_rr = sigma_product(prop, state_of_node, r, r).value;
        note((sigma_rr - eye).norm(), r);
    }

    Mat whole = sigma_product(prop, state_of_node, j_from, j_to).value;
    for (std::size_t mid = j_from; mid <= j_to; ++mid) {
        Mat left = sigma_product(prop, state_of_node, j_from, mid).value;
        Mat right = sigma_product(prop, state_of_node, mid, j_to).value;
        note((left * right - whole).norm(), mid);
    }

    SigmaProductResult forward = sigma_product(prop, state_of_node, j_from, j_to);
    if (forward.invertible) {
        Mat inverse = eye;  // reverse-ordered product of factor inverses
        for (std::size_t l = j_to; l > j_from; --l)
            inverse = inverse * prop.factor(l - 1, state_of_node[l - 1]).inverse();
        note((forward.value * inverse - eye).norm(), j_from);
    }

    double mass = 0.0;
    for (std::size_t l = j_from; l < j_to; ++l)
        mass += prop.grid().weight(l) * prop.b(l, state_of_node[l]).norm();
    double norm_bound = std::sqrt(static_cast<double>(k)) * std::exp(mass);
    note(std::max(0.0, whole.norm() - norm_bound), j_from);

    res.passed = res.worst_slack >= -tol.slack_floor(1.0);
    return res;
}

}  // namespace mie
