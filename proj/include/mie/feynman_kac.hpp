#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mie/core.hpp"
#include "mie/errors.hpp"
#include "mie/markov_chain.hpp"
#include "mie/solution_field.hpp"
#include "mie/time_grid.hpp"

namespace mie {

// Matrix exponential: scaling and squaring with a Taylor sum at the scaled
// level. Order 20 at scaled norm <= 0.5 leaves a remainder below 1e-26, far
// inside the 1e-14 target; matrices here are desk-scale (k <= 3).
inline Mat expm(const Mat& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("expm: matrix must be square");
    double nrm = m.norm();
    int squarings = 0;
    if (nrm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(nrm / 0.5)));
    Mat a = m / std::pow(2.0, squarings);
    Mat term = Mat::Identity(m.rows(), m.cols());
    Mat sum = term;
    for (int n = 1; n <= 20; ++n) {
        term = (term * a) / static_cast<double>(n);
        sum += term;
    }
    for (int i = 0; i < squarings; ++i) sum = sum * sum;
    return sum;
}

// Per-(node,state) first-order factors M_j(x) = I - w_j b(t_j, x). The ordered
// product of these factors realizes the propagator on the grid with an exact
// cocycle identity.
class SigmaPropagator {
public:
    SigmaPropagator(TimeGrid grid, Field<Mat> b_field, std::size_t series_order = 30)
        : grid_(std::move(grid)), b_(std::move(b_field)), series_order_(series_order) {
        if (b_.size() != grid_.node_count())
            throw std::invalid_argument("SigmaPropagator: b field must cover every node");
        if (b_.front().empty()) throw std::invalid_argument("SigmaPropagator: empty b field");
        k_ = b_.front().front().rows();
        for (const auto& row : b_)
            for (const Mat& m : row)
                if (m.rows() != k_ || m.cols() != k_)
                    throw std::invalid_argument("SigmaPropagator: ragged b field");
    }

    Eigen::Index dim() const { return k_; }
    const TimeGrid& grid() const { return grid_; }
    std::size_t state_count() const { return b_.front().size(); }
    std::size_t series_order() const { return series_order_; }
    const Mat& b(std::size_t j, std::size_t x) const { return b_.at(j).at(x); }

    Mat factor(std::size_t j, std::size_t x) const {
        return Mat::Identity(k_, k_) - grid_.weight(j) * b_.at(j).at(x);
    }

private:
    TimeGrid grid_;
    Field<Mat> b_;
    std::size_t series_order_;
    Eigen::Index k_;
};

struct SigmaSeriesResult {
    Mat value;                      // sum_{n<=order} (-1)^n Sigma^(n)
    double tail_bound = 0.0;        // sqrt(k) e^L L^{order+1}/(order+1)!
    std::vector<double> term_norms; // |Sigma^(n)| per order
};

// Discrete Sigma^(n) recursion along a frozen path: the inner factor is taken
// from the subinterval's right node, so the alternating series telescopes
// exactly to the ordered product of (I - w b) factors and each term obeys
// |Sigma^(n)| <= sqrt(k)/n! (sum w|b|)^n.
inline SigmaSeriesResult sigma_series(const std::vector<Mat>& b_along_path, const TimeGrid& grid,
                                      std::size_t j_from, std::size_t j_to, std::size_t order) {
    grid.check_range(j_from, j_to);
    if (j_to > j_from && b_along_path.size() < j_to)
        throw std::invalid_argument("sigma_series: b values cover fewer nodes than the range");
    Eigen::Index k = b_along_path.empty() ? 1 : b_along_path.front().rows();

    std::size_t len = j_to - j_from;
    // Tail weights L_j = sum_{l>=j} w_l |b_l| for the per-term bound.
    std::vector<double> tail(len + 1, 0.0);
    for (std::size_t i = len; i > 0; --i) {
        std::size_t l = j_from + i - 1;
        tail[i - 1] = tail[i] + grid.weight(l) * b_along_path[l].norm();
    }

    SigmaSeriesResult res;
    res.value = Mat::Identity(k, k);
    res.term_norms.push_back(std::sqrt(static_cast<double>(k)));

    std::vector<Mat> prev(len + 1, Mat::Identity(k, k));  // Sigma^(n-1) from each node
    double factorial = 1.0;
    for (std::size_t n = 1; n <= order; ++n) {
        factorial *= static_cast<double>(n);
        std::vector<Mat> cur(len + 1, Mat::Zero(k, k));
        for (std::size_t i = len; i > 0; --i) {
            std::size_t l = j_from + i - 1;
            cur[i - 1] = cur[i] + grid.weight(l) * (b_along_path[l] * prev[i]);
            double bound =
                std::sqrt(static_cast<double>(k)) / factorial * std::pow(tail[i - 1], n);
            if (cur[i - 1].norm() > bound * (1.0 + 1e-9) + 1e-300)
                throw std::logic_error("sigma_series: term bound violated");
        }
        res.term_norms.push_back(cur[0].norm());
        res.value += (n % 2 == 0 ? 1.0 : -1.0) * cur[0];
        prev = std::move(cur);
    }

    double total = tail[0];
    double tail_term = std::pow(total, order + 1);
    for (std::size_t n = 1; n <= order + 1; ++n) tail_term /= static_cast<double>(n);
    res.tail_bound = std::sqrt(static_cast<double>(k)) * std::exp(total) * tail_term;
    return res;
}

struct SigmaProductResult {
    Mat value;
    bool invertible = true;
};

// Ordered product M_{j_from}(x_{j_from}) ... M_{j_to-1}(x_{j_to-1});
// state_of_node[l] is the state occupied at node l. Cocycle splits are exact
// up to floating point. A singular factor (w b with eigenvalue 1) is reported,
// the value is still returned.
inline SigmaProductResult sigma_product(const SigmaPropagator& prop,
                                        std::span<const std::size_t> state_of_node,
                                        std::size_t j_from, std::size_t j_to) {
    prop.grid().check_range(j_from, j_to);
    if (j_to > j_from && state_of_node.size() < j_to)
        throw std::invalid_argument("sigma_product: path covers fewer nodes than the range");
    Eigen::Index k = prop.dim();
    SigmaProductResult res;
    res.value = Mat::Identity(k, k);
    double log_norm_budget = 0.0;
    for (std::size_t l = j_from; l < j_to; ++l) {
        Mat f = prop.factor(l, state_of_node[l]);
        if (std::abs(Eigen::FullPivLU<Mat>(f).determinant()) < 1e-14) res.invertible = false;
        res.value = res.value * f;
        log_norm_budget += prop.grid().weight(l) * prop.b(l, state_of_node[l]).norm();
    }
    double bound = std::sqrt(static_cast<double>(k)) * std::exp(log_norm_budget);
    if (res.value.norm() > bound * (1.0 + 1e-9) + 1e-300)
        throw std::logic_error("sigma_product: norm bound violated");
    return res;
}

inline SigmaProductResult sigma_product(const SigmaPropagator& prop, const PathSample& path,
                                        std::size_t j_from, std::size_t j_to) {
    if (path.start_index > j_from)
        throw std::invalid_argument("sigma_product: path starts after the requested range");
    std::vector<std::size_t> by_node(j_to, 0);
    for (std::size_t l = j_from; l < j_to; ++l) by_node[l] = path.states.at(l - path.start_index);
    return sigma_product(prop, by_node, j_from, j_to);
}

// Commuting-field propagator e^{-B int c dmu}. The three overloads cover a
// constant matrix, a constant matrix scaled by a per-node field c(t_l) along a
// path, and a general per-node matrix family whose pairwise commutation is
// validated up to 1e-12.
inline Mat commuting_exponential(const Mat& b_const, const TimeGrid& grid, std::size_t j_from,
                                 std::size_t j_to) {
    grid.check_range(j_from, j_to);
    return expm(-grid.mass(j_from, j_to) * b_const);
}

inline Mat commuting_exponential(const Mat& b_const, std::span<const double> c_along_path,
                                 const TimeGrid& grid, std::size_t j_from, std::size_t j_to) {
    grid.check_range(j_from, j_to);
    if (j_to > j_from && c_along_path.size() < j_to)
        throw std::invalid_argument("commuting_exponential: c values cover fewer nodes");
    double mass = 0.0;
    for (std::size_t l = j_from; l < j_to; ++l) mass += grid.weight(l) * c_along_path[l];
    return expm(-mass * b_const);
}

inline Mat commuting_exponential(const std::vector<Mat>& b_along_path, const TimeGrid& grid,
                                 std::size_t j_from, std::size_t j_to) {
    grid.check_range(j_from, j_to);
    if (j_to > j_from && b_along_path.size() < j_to)
        throw std::invalid_argument("commuting_exponential: b values cover fewer nodes");
    for (std::size_t l = j_from; l < j_to; ++l) {
        for (std::size_t m = l + 1; m < j_to; ++m) {
            Mat comm = b_along_path[l] * b_along_path[m] - b_along_path[m] * b_along_path[l];
            if (comm.norm() > 1e-12 * (1.0 + b_along_path[l].norm() * b_along_path[m].norm()))
                throw precondition_error("commuting_exponential: factors at nodes " +
                                         std::to_string(l) + " and " + std::to_string(m) +
                                         " do not commute");
        }
    }
    Eigen::Index k = b_along_path.empty() ? 1 : b_along_path.front().rows();
    Mat acc = Mat::Zero(k, k);
    for (std::size_t l = j_from; l < j_to; ++l) acc += grid.weight(l) * b_along_path[l];
    return expm(-acc);
}

// ---------------------------------------------------------------------------
// Affine backward dynamic programs.

namespace detail {

inline void check_affine_fields(const MarkovChainModel& chain, const TimeGrid& grid,
                                const Field<Vec>& a_field, const Field<Mat>& b_field,
                                const Mat& g) {
    if (chain.step_count() != grid.steps())
        throw std::invalid_argument("affine solve: chain and grid disagree on step count");
    if (a_field.size() != grid.node_count() || b_field.size() != grid.node_count())
        throw std::invalid_argument("affine solve: fields must cover every node");
    if (a_field.front().size() != chain.state_count() ||
        b_field.front().size() != chain.state_count())
        throw std::invalid_argument("affine solve: fields must cover every state");
    if (g.rows() != static_cast<Eigen::Index>(chain.state_count()))
        throw std::invalid_argument("affine solve: terminal data must cover every state");
    if (a_field.front().front().size() != g.cols())
        throw std::invalid_argument("affine solve: terminal data dimension != k");
}

}  // namespace detail

// Exact-on-grid dynamic program for the affine driver f = a + b w:
//   V(N,x) = g(x),  V(j,x) = (I - w_j b(j,x)) sum_y P_j[x][y] V(j+1,y) - w_j a(j,x).
// V equals the path-sum of ordered-product propagators applied to g minus the
// propagated a-integral (exhaustively checkable on small instances).
inline SolutionField linear_solve_backward(const MarkovChainModel& chain, const TimeGrid& grid,
                                           const Field<Vec>& a_field, const Field<Mat>& b_field,
                                           const Mat& g) {
    detail::check_affine_fields(chain, grid, a_field, b_field, g);
    Eigen::Index k = g.cols();
    auto s = static_cast<Eigen::Index>(chain.state_count());
    std::size_t n = grid.steps();
    std::vector<Mat> values(n + 1);
    values[n] = g;
    Mat eye = Mat::Identity(k, k);
    for (std::size_t j = n; j > 0; --j) {
        std::size_t jj = j - 1;
        Mat propagated = chain.transition(jj) * values[j];  // S x k
        Mat out(s, k);
        for (Eigen::Index x = 0; x < s; ++x) {
            const Mat& b = b_field[jj][static_cast<std::size_t>(x)];
            const Vec& a = a_field[jj][static_cast<std::size_t>(x)];
            out.row(x) = ((eye - grid.weight(jj) * b) * propagated.row(x).transpose() -
                          grid.weight(jj) * a)
                             .transpose();
        }
        values[jj] = std::move(out);
    }
    return SolutionField(grid, 0, std::move(values));
}

// k = 1 specialization with exact per-step exponential factors e^{-w b}:
//   V(j,x) = e^{-w_j b(j,x)} (P_j V(j+1))(x) - w_j a(j,x).
inline SolutionField scalar_fk(const MarkovChainModel& chain, const TimeGrid& grid,
                               const ScalarField& a, const ScalarField& b, const Vec& g) {
    if (chain.step_count() != grid.steps())
        throw std::invalid_argument("scalar_fk: chain and grid disagree on step count");
    if (a.rows() != static_cast<Eigen::Index>(grid.node_count()) ||
        a.cols() != static_cast<Eigen::Index>(chain.state_count()) || a.rows() != b.rows() ||
        a.cols() != b.cols())
        throw std::invalid_argument("scalar_fk: field shapes must be (nodes x states)");
    if (g.size() != static_cast<Eigen::Index>(chain.state_count()))
        throw std::invalid_argument("scalar_fk: terminal data must cover every state");
    std::size_t n = grid.steps();
    std::vector<Mat> values(n + 1);
    values[n] = g;
    for (std::size_t j = n; j > 0; --j) {
        std::size_t jj = j - 1;
        Vec propagated = chain.transition(jj) * values[j].col(0);
        Vec out(propagated.size());
        for (Eigen::Index x = 0; x < propagated.size(); ++x) {
            auto r = static_cast<Eigen::Index>(jj);
            out[x] = std::exp(-grid.weight(jj) * b(r, x)) * propagated[x] -
                     grid.weight(jj) * a(r, x);
        }
        values[jj] = out;
    }
    return SolutionField(grid, 0, std::move(values));
}

// Same per-step exact-exponential discretization for general k (used by the
// CLI's exp mode): V(j,x) = expm(-w_j b(j,x)) (P_j V(j+1))(x) - w_j a(j,x).
inline SolutionField exp_solve_backward(const MarkovChainModel& chain, const TimeGrid& grid,
                                        const Field<Vec>& a_field, const Field<Mat>& b_field,
                                        const Mat& g) {
    detail::check_affine_fields(chain, grid, a_field, b_field, g);
    auto s = static_cast<Eigen::Index>(chain.state_count());
    std::size_t n = grid.steps();
    std::vector<Mat> values(n + 1);
    values[n] = g;
    for (std::size_t j = n; j > 0; --j) {
        std::size_t jj = j - 1;
        Mat propagated = chain.transition(jj) * values[j];
        Mat out(s, g.cols());
        for (Eigen::Index x = 0; x < s; ++x) {
            const Mat& b = b_field[jj][static_cast<std::size_t>(x)];
            const Vec& a = a_field[jj][static_cast<std::size_t>(x)];
            out.row(x) = (expm(-grid.weight(jj) * b) * propagated.row(x).transpose() -
                          grid.weight(jj) * a)
                             .transpose();
        }
        values[jj] = std::move(out);
    }
    return SolutionField(grid, 0, std::move(values));
}

// Truncated-series evaluation of the representation formula: the g-part sums
// (-1)^n Sigma^(n) to `order`, the a-part to order-1, matching the Picard
// iterate's series form. W_n and A_n satisfy strictly-future recursions so the
// series telescopes toward the product DP as order grows.
inline SolutionField series_solve_backward(const MarkovChainModel& chain, const TimeGrid& grid,
                                           const Field<Vec>& a_field, const Field<Mat>& b_field,
                                           const Mat& g, std::size_t order) {
    detail::check_affine_fields(chain, grid, a_field, b_field, g);
    auto s = static_cast<Eigen::Index>(chain.state_count());
    Eigen::Index k = g.cols();
    std::size_t n_steps = grid.steps();

    auto zero_slices = [&] {
        return std::vector<Mat>(n_steps + 1, Mat::Zero(s, k));
    };

    // W_n(j,x) = E[ S_n(j->N) g ], A_n(j,x) = E[ sum_t S_n(j->t) w_t a_t ].
    std::vector<Mat> w_prev(n_steps + 1, Mat::Zero(s, k));
    std::vector<Mat> a_prev = zero_slices();
    w_prev[n_steps] = g;
    for (std::size_t j = n_steps; j > 0; --j) {
        std::size_t jj = j - 1;
        w_prev[jj] = chain.transition(jj) * w_prev[j];
        Mat acc = chain.transition(jj) * a_prev[j];
        for (Eigen::Index x = 0; x < s; ++x)
            acc.row(x) += grid.weight(jj) * a_field[jj][static_cast<std::size_t>(x)].transpose();
        a_prev[jj] = std::move(acc);
    }

    std::vector<Mat> total(n_steps + 1);
    for (std::size_t j = 0; j <= n_steps; ++j) total[j] = w_prev[j] - a_prev[j];

    for (std::size_t n = 1; n <= order; ++n) {
        std::vector<Mat> w_cur = zero_slices();
        std::vector<Mat> a_cur = zero_slices();
        for (std::size_t j = n_steps; j > 0; --j) {
            std::size_t jj = j - 1;
            Mat prop_w = chain.transition(jj) * w_cur[j];
            Mat prop_w_prev = chain.transition(jj) * w_prev[j];
            Mat prop_a = chain.transition(jj) * a_cur[j];
            Mat prop_a_prev = chain.transition(jj) * a_prev[j];
            for (Eigen::Index x = 0; x < s; ++x) {
                const Mat& b = b_field[jj][static_cast<std::size_t>(x)];
                w_cur[jj].row(x) =
                    prop_w.row(x) +
                    grid.weight(jj) * (b * prop_w_prev.row(x).transpose()).transpose();
                a_cur[jj].row(x) =
                    prop_a.row(x) +
                    grid.weight(jj) * (b * prop_a_prev.row(x).transpose()).transpose();
            }
        }
        double sign = (n % 2 == 0) ? 1.0 : -1.0;
        for (std::size_t j = 0; j <= n_steps; ++j) {
            total[j] += sign * w_cur[j];
            if (n < order) total[j] -= sign * a_cur[j];  // a-part stops at order-1
        }
        w_prev = std::move(w_cur);
        a_prev = std::move(a_cur);
    }
    total[n_steps] = g;
    return SolutionField(grid, 0, std::move(total));
}

// Monte Carlo cross-check of the representation formula: paths are sampled
// from every (j,x), the ordered-product propagator is accumulated along each
// path, and componentwise standard errors are reported. The backward
// recursion stays the authoritative evaluator.
struct MonteCarloField {
    SolutionField mean;
    SolutionField standard_error;
};

inline MonteCarloField fk_monte_carlo(const MarkovChainModel& chain, const TimeGrid& grid,
                                      const Field<Vec>& a_field, const Field<Mat>& b_field,
                                      const Mat& g, std::size_t path_count, std::uint64_t seed) {
    detail::check_affine_fields(chain, grid, a_field, b_field, g);
    if (path_count < 2) throw std::invalid_argument("fk_monte_carlo: need at least two paths");
    auto s = static_cast<Eigen::Index>(chain.state_count());
    Eigen::Index k = g.cols();
    std::size_t n = grid.steps();
    Mat eye = Mat::Identity(k, k);

    std::vector<Mat> means(n + 1, Mat::Zero(s, k));
    std::vector<Mat> errs(n + 1, Mat::Zero(s, k));
    means[n] = g;
    for (std::size_t j = 0; j < n; ++j) {
        for (Eigen::Index x = 0; x < s; ++x) {
            auto paths = chain.sample_paths(j, static_cast<std::size_t>(x), path_count,
                                            split_seed(seed, j * chain.state_count() +
                                                                 static_cast<std::size_t>(x)));
            Vec acc = Vec::Zero(k);
            Vec acc_sq = Vec::Zero(k);
            for (const PathSample& p : paths) {
                Mat sigma = eye;
                Vec a_int = Vec::Zero(k);
                for (std::size_t l = j; l < n; ++l) {
                    std::size_t xl = p.states[l - j];
                    a_int += grid.weight(l) * (sigma * a_field[l][xl]);
                    sigma = sigma * (eye - grid.weight(l) * b_field[l][xl]);
                }
                Vec sample = sigma * g.row(static_cast<Eigen::Index>(p.states.back())).transpose() -
                             a_int;
                acc += sample;
                acc_sq += sample.cwiseProduct(sample);
            }
            Vec mean = acc / static_cast<double>(path_count);
            Vec var = (acc_sq / static_cast<double>(path_count) - mean.cwiseProduct(mean))
                          .cwiseMax(0.0);
            means[j].row(x) = mean.transpose();
            errs[j].row(x) =
                (var / static_cast<double>(path_count - 1)).cwiseSqrt().transpose();
        }
    }
    return MonteCarloField{SolutionField(grid, 0, std::move(means)),
                           SolutionField(grid, 0, std::move(errs))};
}

// ---------------------------------------------------------------------------
// The 2-D trigonometric example: b = c(t,x) [[0, delta],[eps, 0]], a = 0.
// With theta = sqrt(|delta eps|) int c dmu the solution is assembled from
// expectations of e^{-+rho theta}, where rho = 1 if delta*eps > 0 and rho = i
// otherwise; both sign cases reduce to real cosh/sinh resp. cos/sin output.
// Evaluated with exact per-step exponential factors, independently of the
// first-order matrix recursion it is cross-checked against.
inline SolutionField coshsinh_example(const MarkovChainModel& chain, const TimeGrid& grid,
                                      const ScalarField& c, double delta, double eps,
                                      const Vec& g1, const Vec& g2) {
    if (delta == 0.0 || eps == 0.0)
        throw std::invalid_argument("coshsinh_example: delta and eps must be nonzero");
    if (chain.step_count() != grid.steps())
        throw std::invalid_argument("coshsinh_example: chain and grid disagree on step count");
    auto s = static_cast<Eigen::Index>(chain.state_count());
    if (g1.size() != s || g2.size() != s)
        throw std::invalid_argument("coshsinh_example: terminal data must cover every state");
    if (c.rows() != static_cast<Eigen::Index>(grid.node_count()) || c.cols() != s)
        throw std::invalid_argument("coshsinh_example: c field shape must be (nodes x states)");

    using Cplx = std::complex<double>;
    using VecC = Eigen::VectorXcd;
    const double kappa = std::sqrt(std::abs(delta * eps));
    const Cplx rho = delta * eps > 0.0 ? Cplx(1.0, 0.0) : Cplx(0.0, 1.0);

    // Z^{+-}_g(j,x) = E_{j,x}[ e^{-+ rho kappa int_j^T c dmu} g(X_T) ].
    auto backward = [&](const Vec& g, const Cplx& exponent_scale) {
        std::vector<VecC> z(grid.steps() + 1);
        z[grid.steps()] = g.cast<Cplx>();
        for (std::size_t j = grid.steps(); j > 0; --j) {
            std::size_t jj = j - 1;
            VecC prop = chain.transition(jj).cast<Cplx>() * z[j];
            for (Eigen::Index x = 0; x < s; ++x)
                prop[x] *= std::exp(exponent_scale * grid.weight(jj) *
                                    c(static_cast<Eigen::Index>(jj), x));
            z[jj] = std::move(prop);
        }
        return z;
    };
    auto zp1 = backward(g1, -rho * kappa);
    auto zm1 = backward(g1, rho * kappa);
    auto zp2 = backward(g2, -rho * kappa);
    auto zm2 = backward(g2, rho * kappa);

    std::vector<Mat> values(grid.steps() + 1);
    double worst_imag = 0.0;
    for (std::size_t j = 0; j <= grid.steps(); ++j) {
        Mat out(s, 2);
        for (Eigen::Index x = 0; x < s; ++x) {
            Cplx cosh1 = 0.5 * (zp1[j][x] + zm1[j][x]);
            Cplx sinh1 = 0.5 * (zp1[j][x] - zm1[j][x]);
            Cplx cosh2 = 0.5 * (zp2[j][x] + zm2[j][x]);
            Cplx sinh2 = 0.5 * (zp2[j][x] - zm2[j][x]);
            Cplx u1 = cosh1 + rho * (kappa / eps) * sinh2;
            Cplx u2 = rho * (kappa / delta) * sinh1 + cosh2;
            worst_imag = std::max({worst_imag, std::abs(u1.imag()), std::abs(u2.imag())});
            out(x, 0) = u1.real();
            out(x, 1) = u2.real();
        }
        values[j] = std::move(out);
    }
    if (worst_imag > 1e-9)
        throw std::logic_error("coshsinh_example: output failed to reduce to real values");
    return SolutionField(grid, 0, std::move(values));
}

}  // namespace mie
