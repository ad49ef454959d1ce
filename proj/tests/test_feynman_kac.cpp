#include <catch_amalgamated.hpp>

#include <cmath>

#include "mie/feynman_kac.hpp"
#include "mie/solver.hpp"
#include "oracles.hpp"

using namespace mie;

namespace {

Mat coshsinh_matrix(double t) {
    Mat m(2, 2);
    m << std::cosh(t), -std::sinh(t), -std::sinh(t), std::cosh(t);
    return m;
}

}  // namespace

TEST_CASE("matrix exponential basics") {
    REQUIRE((expm(Mat::Zero(3, 3)) - Mat::Identity(3, 3)).norm() == 0.0);

    Mat b(2, 2);
    b << 0.0, 1.0, 1.0, 0.0;
    REQUIRE((expm(-b) - coshsinh_matrix(1.0)).norm() < 1e-14);

    oracle::Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        Mat a(3, 3);
        for (Eigen::Index r = 0; r < 3; ++r)
            for (Eigen::Index c = 0; c < 3; ++c) a(r, c) = rng.uniform(-2.0, 2.0);
        Mat whole = expm(a);
        Mat half = expm(0.5 * a);
        REQUIRE((half * half - whole).norm() < 1e-12 * whole.norm());
        REQUIRE((expm(a) * expm(-a) - Mat::Identity(3, 3)).norm() < 1e-12 * whole.norm());
    }
}

TEST_CASE("sigma series examples") {
    SECTION("zero field gives the identity at any order") {
        TimeGrid grid = TimeGrid::uniform(1.0, 10);
        std::vector<Mat> b(10, Mat::Zero(2, 2));
        auto res = sigma_series(b, grid, 0, 10, 12);
        REQUIRE((res.value - Mat::Identity(2, 2)).norm() == 0.0);
    }
    SECTION("order zero truncates at the identity") {
        TimeGrid grid = TimeGrid::uniform(1.0, 5);
        std::vector<Mat> b(5, Mat::Ones(1, 1));
        auto res = sigma_series(b, grid, 0, 5, 0);
        REQUIRE(res.value(0, 0) == 1.0);
        REQUIRE(res.tail_bound > 0.0);
    }
    SECTION("scalar unit field sums to e^{-1}") {
        TimeGrid grid = TimeGrid::uniform(1.0, 2000);
        std::vector<Mat> b(2000, Mat::Ones(1, 1));
        auto res = sigma_series(b, grid, 0, 2000, 30);
        REQUIRE_THAT(res.value(0, 0), Catch::Matchers::WithinAbs(std::exp(-1.0), 1e-3));
    }
}

TEST_CASE("sigma series telescopes to the ordered product within the tail") {
    oracle::Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        std::size_t steps = 4 + rng.index(12);
        Eigen::Index k = 1 + static_cast<Eigen::Index>(rng.index(3));
        TimeGrid grid = TimeGrid::uniform(1.0, steps);
        std::vector<Mat> b_path(steps);
        Field<Mat> b_field(steps + 1, std::vector<Mat>(1));
        for (std::size_t l = 0; l < steps; ++l) {
            Mat m(k, k);
            for (Eigen::Index r = 0; r < k; ++r)
                for (Eigen::Index c = 0; c < k; ++c) m(r, c) = rng.uniform(-1.5, 1.5);
            b_path[l] = m;
            b_field[l][0] = m;
        }
        b_field[steps][0] = Mat::Zero(k, k);
        std::size_t order = 4 + rng.index(10);
        auto series = sigma_series(b_path, grid, 0, steps, order);

        SigmaPropagator prop(grid, b_field);
        std::vector<std::size_t> states(steps, 0);
        auto product = sigma_product(prop, states, 0, steps);
        REQUIRE((series.value - product.value).norm() <= series.tail_bound + 1e-12);
    }
}

TEST_CASE("sigma product examples and identities") {
    SECTION("empty range gives the identity exactly") {
        TimeGrid grid = TimeGrid::uniform(1.0, 4);
        SigmaPropagator prop(grid, constant_field(5, 1, Mat(Mat::Ones(1, 1))));
        std::vector<std::size_t> states(5, 0);
        REQUIRE(sigma_product(prop, states, 2, 2).value(0, 0) == 1.0);
    }
    SECTION("constant swap field approaches the hyperbolic rotation") {
        std::size_t n = 4000;
        TimeGrid grid = TimeGrid::uniform(1.0, n);
        Mat b(2, 2);
        b << 0.0, 1.0, 1.0, 0.0;
        SigmaPropagator prop(grid, constant_field(n + 1, 1, b));
        std::vector<std::size_t> states(n + 1, 0);
        auto res = sigma_product(prop, states, 0, n);
        REQUIRE(res.invertible);
        REQUIRE((res.value - coshsinh_matrix(1.0)).norm() < 1e-3);
    }
    SECTION("cocycle splits are exact to machine precision") {
        oracle::Rng rng(19);
        std::size_t n = 24;
        TimeGrid grid = TimeGrid::uniform(2.0, n);
        Field<Mat> field(n + 1, std::vector<Mat>(2));
        for (auto& row : field)
            for (auto& m : row) {
                m = Mat(2, 2);
                for (Eigen::Index r = 0; r < 2; ++r)
                    for (Eigen::Index c = 0; c < 2; ++c) m(r, c) = rng.uniform(-1.0, 1.0);
            }
        SigmaPropagator prop(grid, field);
        std::vector<std::size_t> states(n + 1);
        for (auto& s : states) s = rng.index(2);
        auto whole = sigma_product(prop, states, 0, n);
        for (std::size_t mid : {0ul, 7ul, 12ul, 24ul}) {
            auto left = sigma_product(prop, states, 0, mid);
            auto right = sigma_product(prop, states, mid, n);
            REQUIRE((left.value * right.value - whole.value).norm() < 1e-12);
        }
    }
    SECTION("a singular factor is reported, value still returned") {
        TimeGrid grid({0.0, 0.5, 1.0}, {0.5, 0.5});
        Mat b = 2.0 * Mat::Identity(1, 1);  // factor 1 - 0.5*2 = 0
        SigmaPropagator prop(grid, constant_field(3, 1, b));
        std::vector<std::size_t> states(3, 0);
        auto res = sigma_product(prop, states, 0, 2);
        REQUIRE_FALSE(res.invertible);
        REQUIRE(res.value(0, 0) == 0.0);
    }
    SECTION("reverse product of inverses inverts the propagator") {
        oracle::Rng rng(23);
        std::size_t n = 10;
        TimeGrid grid = TimeGrid::uniform(1.0, n);
        Field<Mat> field(n + 1, std::vector<Mat>(1));
        for (auto& row : field) {
            row[0] = Mat(2, 2);
            for (Eigen::Index r = 0; r < 2; ++r)
                for (Eigen::Index c = 0; c < 2; ++c) row[0](r, c) = rng.uniform(-1.0, 1.0);
        }
        SigmaPropagator prop(grid, field);
        std::vector<std::size_t> states(n + 1, 0);
        auto forward = sigma_product(prop, states, 0, n);
        REQUIRE(forward.invertible);
        Mat inverse = Mat::Identity(2, 2);
        for (std::size_t l = n; l > 0; --l)
            inverse = inverse * prop.factor(l - 1, 0).inverse();
        REQUIRE((forward.value * inverse - Mat::Identity(2, 2)).norm() < 1e-10);
    }
}

TEST_CASE("commuting exponential overloads") {
    TimeGrid grid = TimeGrid::uniform(1.0, 100);
    SECTION("zero field") {
        REQUIRE((commuting_exponential(Mat::Zero(2, 2), grid, 0, 100) -
                 Mat::Identity(2, 2)).norm() == 0.0);
    }
    SECTION("scalar unit field is exactly e^{-1}") {
        Mat b = Mat::Ones(1, 1);
        Mat out = commuting_exponential(b, grid, 0, 100);
        REQUIRE_THAT(out(0, 0), Catch::Matchers::WithinAbs(std::exp(-1.0), 1e-14));
    }
    SECTION("swap matrix with unit scale") {
        Mat b(2, 2);
        b << 0.0, 1.0, 1.0, 0.0;
        std::vector<double> c(grid.node_count(), 1.0);
        Mat out = commuting_exponential(b, c, grid, 0, 100);
        REQUIRE((out - coshsinh_matrix(1.0)).norm() < 1e-13);
    }
    SECTION("non-commuting path is rejected with the violating pair") {
        std::vector<Mat> b(4, Mat::Zero(2, 2));
        b[0] << 0.0, 1.0, 0.0, 0.0;
        b[2] << 0.0, 0.0, 1.0, 0.0;
        TimeGrid small = TimeGrid::uniform(1.0, 4);
        try {
            commuting_exponential(b, small, 0, 4);
            FAIL("expected precondition_error");
        } catch (const precondition_error& e) {
            REQUIRE(std::string(e.what()).find("0") != std::string::npos);
            REQUIRE(std::string(e.what()).find("2") != std::string::npos);
        }
    }
    SECTION("product tracks the exponential within the quadratic budget") {
        oracle::Rng rng(29);
        for (int trial = 0; trial < 30; ++trial) {
            std::size_t n = 8 + rng.index(30);
            TimeGrid g = TimeGrid::uniform(1.0, n);
            Mat big(2, 2);
            for (Eigen::Index r = 0; r < 2; ++r)
                for (Eigen::Index c = 0; c < 2; ++c) big(r, c) = rng.uniform(-1.0, 1.0);
            std::vector<double> c(n + 1);
            Field<Mat> field(n + 1, std::vector<Mat>(1));
            for (std::size_t l = 0; l <= n; ++l) {
                c[l] = rng.uniform(-1.0, 1.0);
                field[l][0] = c[l] * big;
            }
            SigmaPropagator prop(g, field);
            std::vector<std::size_t> states(n + 1, 0);
            Mat product = sigma_product(prop, states, 0, n).value;
            Mat exact = commuting_exponential(big, c, g, 0, n);

            double budget = 0.0, mass = 0.0;
            for (std::size_t l = 0; l < n; ++l) {
                double a = g.weight(l) * std::abs(c[l]) * big.norm();
                budget += a * a / 2.0;
                mass += a;
            }
            double slack = std::sqrt(2.0) * std::exp(mass) * budget + 1e-12;
            REQUIRE((product - exact).norm() <= slack);
        }
    }
}

TEST_CASE("linear backward recursion examples") {
    SECTION("no driver reduces to the propagated terminal data") {
        oracle::Rng rng(31);
        auto chain = oracle::random_chain(rng, 3, 6);
        TimeGrid grid = TimeGrid::uniform(1.0, 6);
        Mat g(3, 1);
        g << 0.4, -0.1, 0.9;
        auto zero_a = constant_field(7, 3, Vec(Vec::Zero(1)));
        auto zero_b = constant_field(7, 3, Mat(Mat::Zero(1, 1)));
        auto field = linear_solve_backward(chain, grid, zero_a, zero_b, g);
        for (std::size_t j = 0; j <= 6; ++j) {
            Vec expect = chain.expectation(j, 6, Vec(g.col(0)));
            for (std::size_t x = 0; x < 3; ++x)
                REQUIRE_THAT(field.value(j, x)[0],
                             Catch::Matchers::WithinAbs(expect[static_cast<Eigen::Index>(x)],
                                                        1e-14));
        }
    }
    SECTION("pure source integrates the weights") {
        std::size_t n = 1000;
        auto chain = MarkovChainModel::identity(1, n);
        TimeGrid grid = TimeGrid::uniform(1.0, n);
        auto a = constant_field(n + 1, 1, Vec(Vec::Ones(1)));
        auto b = constant_field(n + 1, 1, Mat(Mat::Zero(1, 1)));
        auto field = linear_solve_backward(chain, grid, a, b, Mat::Zero(1, 1));
        REQUIRE_THAT(field.value(0, 0)[0], Catch::Matchers::WithinAbs(-1.0, 1e-12));
    }
    SECTION("exhaustive path enumeration matches the recursion") {
        oracle::Rng rng(37);
        for (int trial = 0; trial < 25; ++trial) {
            std::size_t states = 2 + rng.index(2);
            std::size_t steps = 2 + rng.index(3);
            auto chain = oracle::random_chain(rng, states, steps);
            TimeGrid grid = TimeGrid::uniform(1.0, steps);
            Eigen::Index k = 1 + static_cast<Eigen::Index>(rng.index(2));
            auto a = oracle::random_vec_field(rng, steps + 1, states, k, 1.0);
            auto b = oracle::random_mat_field(rng, steps + 1, states, k, 0.8);
            Mat g(static_cast<Eigen::Index>(states), k);
            for (Eigen::Index r = 0; r < g.rows(); ++r)
                for (Eigen::Index c = 0; c < k; ++c) g(r, c) = rng.uniform(-1.0, 1.0);

            auto field = linear_solve_backward(chain, grid, a, b, g);
            for (std::size_t j : {std::size_t{0}, steps / 2}) {
                for (std::size_t x = 0; x < states; ++x) {
                    Vec brute =
                        oracle::enumerate_linear_representation(chain, grid, a, b, g, j, x);
                    REQUIRE((field.value(j, x) - brute).norm() < 1e-12);
                }
            }
        }
    }
    SECTION("picard agrees with the recursion on affine drivers") {
        oracle::Rng rng(41);
        auto chain = oracle::random_chain(rng, 3, 5);
        TimeGrid grid = TimeGrid::uniform(1.0, 5);
        auto a = oracle::random_vec_field(rng, 6, 3, 2, 0.5);
        auto b = oracle::random_mat_field(rng, 6, 3, 2, 0.6);
        Mat g(3, 2);
        for (Eigen::Index r = 0; r < 3; ++r)
            for (Eigen::Index c = 0; c < 2; ++c) g(r, c) = rng.uniform(-1.0, 1.0);
        auto gen = make_affine(a, b);
        auto [picard_field, report] = picard_solve(chain, grid, gen, g);
        REQUIRE(report.converged);
        auto linear = linear_solve_backward(chain, grid, a, b, g);
        REQUIRE(picard_field.sup_distance(linear) < 1e-10);
    }
}

TEST_CASE("scalar Feynman-Kac closed forms") {
    std::size_t n = 2000;
    auto chain = MarkovChainModel::identity(1, n);
    TimeGrid grid = TimeGrid::uniform(1.0, n);
    auto zeros = constant_scalar_field(n + 1, 1, 0.0);
    auto ones = constant_scalar_field(n + 1, 1, 1.0);

    SECTION("pure discounting is exact") {
        auto field = scalar_fk(chain, grid, zeros, ones, Vec::Ones(1));
        REQUIRE_THAT(field.value(0, 0)[0], Catch::Matchers::WithinAbs(std::exp(-1.0), 1e-12));
    }
    SECTION("no coefficients reduces to the expectation") {
        Vec g(1);
        g[0] = 0.75;
        auto field = scalar_fk(chain, grid, zeros, zeros, g);
        REQUIRE(field.value(0, 0)[0] == 0.75);
    }
    SECTION("discounted source matches the integral") {
        auto field = scalar_fk(chain, grid, ones, ones, Vec::Zero(1));
        REQUIRE_THAT(field.value(0, 0)[0],
                     Catch::Matchers::WithinAbs(-(1.0 - std::exp(-1.0)), 1e-3));
    }
    SECTION("agrees with the first-order recursion at O(dt)") {
        auto field = scalar_fk(chain, grid, zeros, ones, Vec::Ones(1));
        auto a = constant_field(n + 1, 1, Vec(Vec::Zero(1)));
        auto b = constant_field(n + 1, 1, Mat(Mat::Ones(1, 1)));
        auto linear = linear_solve_backward(chain, grid, a, b, Mat::Ones(1, 1));
        REQUIRE(field.sup_distance(linear) < 1e-3);
    }
    SECTION("exp-mode recursion specializes to scalar_fk for k = 1") {
        oracle::Rng rng(47);
        auto rchain = oracle::random_chain(rng, 2, 30);
        TimeGrid rgrid = TimeGrid::uniform(1.0, 30);
        ScalarField a(31, 2), b(31, 2);
        Field<Vec> af(31, std::vector<Vec>(2));
        Field<Mat> bf(31, std::vector<Mat>(2));
        for (Eigen::Index j = 0; j <= 30; ++j) {
            for (Eigen::Index x = 0; x < 2; ++x) {
                a(j, x) = rng.uniform(-1.0, 1.0);
                b(j, x) = rng.uniform(-1.0, 1.0);
                af[static_cast<std::size_t>(j)][static_cast<std::size_t>(x)] =
                    Vec::Constant(1, a(j, x));
                bf[static_cast<std::size_t>(j)][static_cast<std::size_t>(x)] =
                    Mat::Constant(1, 1, b(j, x));
            }
        }
        Vec g(2);
        g << 0.3, -0.6;
        auto direct = scalar_fk(rchain, rgrid, a, b, g);
        auto via_expm = exp_solve_backward(rchain, rgrid, af, bf, Mat(g));
        REQUIRE(direct.sup_distance(via_expm) < 1e-13);
    }
}

TEST_CASE("series-mode field evaluation converges to the product recursion") {
    oracle::Rng rng(53);
    auto chain = oracle::random_chain(rng, 2, 12);
    TimeGrid grid = TimeGrid::uniform(1.0, 12);
    auto a = oracle::random_vec_field(rng, 13, 2, 2, 0.4);
    auto b = oracle::random_mat_field(rng, 13, 2, 2, 0.5);
    Mat g(2, 2);
    for (Eigen::Index r = 0; r < 2; ++r)
        for (Eigen::Index c = 0; c < 2; ++c) g(r, c) = rng.uniform(-1.0, 1.0);
    auto product = linear_solve_backward(chain, grid, a, b, g);
    auto series = series_solve_backward(chain, grid, a, b, g, 40);
    REQUIRE(product.sup_distance(series) < 1e-10);
    double coarse = product.sup_distance(series_solve_backward(chain, grid, a, b, g, 3));
    double fine = product.sup_distance(series_solve_backward(chain, grid, a, b, g, 8));
    REQUIRE(fine < coarse);
}

TEST_CASE("Monte Carlo evaluation brackets the recursion") {
    oracle::Rng rng(59);
    auto chain = oracle::random_chain(rng, 2, 5);
    TimeGrid grid = TimeGrid::uniform(1.0, 5);
    auto a = oracle::random_vec_field(rng, 6, 2, 1, 0.4);
    auto b = oracle::random_mat_field(rng, 6, 2, 1, 0.5);
    Mat g(2, 1);
    g << 0.8, -0.3;
    auto exact = linear_solve_backward(chain, grid, a, b, g);
    auto mc = fk_monte_carlo(chain, grid, a, b, g, 20000, 101);
    for (std::size_t j = 0; j <= 5; ++j) {
        for (std::size_t x = 0; x < 2; ++x) {
            double err = (mc.mean.value(j, x) - exact.value(j, x)).norm();
            double band = 5.0 * mc.standard_error.value(j, x).norm() + 1e-12;
            REQUIRE(err <= band);
        }
    }
    auto again = fk_monte_carlo(chain, grid, a, b, g, 20000, 101);
    REQUIRE(mc.mean.sup_distance(again.mean) == 0.0);
}

TEST_CASE("trigonometric example") {
    std::size_t n = 4000;
    auto chain = MarkovChainModel::identity(1, n);
    TimeGrid grid = TimeGrid::uniform(1.0, n);
    ScalarField c = constant_scalar_field(n + 1, 1, 1.0);
    Vec g1 = Vec::Ones(1), g2 = Vec::Zero(1);

    SECTION("hyperbolic case hits (cosh 1, -sinh 1)") {
        auto field = coshsinh_example(chain, grid, c, 1.0, 1.0, g1, g2);
        REQUIRE_THAT(field.value(0, 0)[0], Catch::Matchers::WithinAbs(std::cosh(1.0), 1e-3));
        REQUIRE_THAT(field.value(0, 0)[1], Catch::Matchers::WithinAbs(-std::sinh(1.0), 1e-3));
    }
    SECTION("zero scale returns the terminal data") {
        ScalarField zero = constant_scalar_field(n + 1, 1, 0.0);
        auto field = coshsinh_example(chain, grid, zero, 2.0, -3.0, g1, g2);
        REQUIRE(field.value(0, 0)[0] == 1.0);
        REQUIRE(field.value(0, 0)[1] == 0.0);
    }
    SECTION("mixed signs reduce to circular functions") {
        auto field = coshsinh_example(chain, grid, c, 1.0, -1.0, g1, g2);
        REQUIRE_THAT(field.value(0, 0)[0], Catch::Matchers::WithinAbs(std::cos(1.0), 1e-6));
        REQUIRE_THAT(field.value(0, 0)[1], Catch::Matchers::WithinAbs(std::sin(1.0), 1e-6));

        Mat big(2, 2);
        big << 0.0, 1.0, -1.0, 0.0;
        Field<Vec> a_field = constant_field(n + 1, 1, Vec(Vec::Zero(2)));
        Field<Mat> b_field = constant_field(n + 1, 1, big);
        Mat g(1, 2);
        g << 1.0, 0.0;
        auto recursion = linear_solve_backward(chain, grid, a_field, b_field, g);
        REQUIRE(field.sup_distance(recursion) < 1e-3);
    }
    SECTION("degenerate couplings are rejected") {
        REQUIRE_THROWS_AS(coshsinh_example(chain, grid, c, 0.0, 1.0, g1, g2),
                          std::invalid_argument);
        REQUIRE_THROWS_AS(coshsinh_example(chain, grid, c, 1.0, 0.0, g1, g2),
                          std::invalid_argument);
    }
    SECTION("state-dependent scale agrees with the matrix recursion") {
        oracle::Rng rng(61);
        std::size_t steps = 60;
        auto rchain = oracle::random_chain(rng, 3, steps);
        TimeGrid rgrid = TimeGrid::uniform(1.0, steps);
        ScalarField cs(steps + 1, 3);
        for (Eigen::Index j = 0; j <= static_cast<Eigen::Index>(steps); ++j)
            for (Eigen::Index x = 0; x < 3; ++x) cs(j, x) = rng.uniform(-1.0, 1.0);
        Vec h1(3), h2(3);
        for (Eigen::Index x = 0; x < 3; ++x) {
            h1[x] = rng.uniform(-1.0, 1.0);
            h2[x] = rng.uniform(-1.0, 1.0);
        }
        double delta = 0.7, eps = -1.3;
        auto field = coshsinh_example(rchain, rgrid, cs, delta, eps, h1, h2);

        Mat big(2, 2);
        big << 0.0, delta, eps, 0.0;
        Field<Vec> a_field = constant_field(steps + 1, 3, Vec(Vec::Zero(2)));
        Field<Mat> b_field(steps + 1, std::vector<Mat>(3));
        for (std::size_t j = 0; j <= steps; ++j)
            for (std::size_t x = 0; x < 3; ++x)
                b_field[j][x] =
                    cs(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(x)) * big;
        Mat g(3, 2);
        g.col(0) = h1;
        g.col(1) = h2;
        auto recursion = linear_solve_backward(rchain, rgrid, a_field, b_field, g);
        REQUIRE(field.sup_distance(recursion) < 5e-2);  // O(dt) at 60 steps
    }
}
