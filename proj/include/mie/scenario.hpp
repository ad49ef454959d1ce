#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mie/config.hpp"
#include "mie/core.hpp"
#include "mie/errors.hpp"
#include "mie/generator.hpp"
#include "mie/markov_chain.hpp"
#include "mie/solver.hpp"
#include "mie/time_grid.hpp"

namespace mie {

// [grid] T, steps, density = "lebesgue" | "linear" | [[t, value], ...]
inline TimeGrid build_grid(const TomlTable& sec) {
    double horizon = sec.at("T").as_number();
    long steps = sec.at("steps").as_integer();
    if (steps < 1) throw config_error("grid: steps must be positive");
    if (!sec.has("density"))
        return TimeGrid::uniform(horizon, static_cast<std::size_t>(steps));

    const TomlValue& d = sec.at("density");
    if (d.is_string()) {
        const std::string& name = d.as_string();
        if (name == "lebesgue")
            return TimeGrid::uniform(horizon, static_cast<std::size_t>(steps));
        if (name == "linear")
            return TimeGrid::uniform(horizon, static_cast<std::size_t>(steps),
                                     [](double t) { return t; });
        throw config_error("grid: unknown density '" + name + "'");
    }
    // piecewise-linear sample table [[t, value], ...]
    std::vector<std::pair<double, double>> samples;
    for (const TomlValue& row : d.as_array()) {
        auto pair = row.as_number_array();
        if (pair.size() != 2) throw config_error("grid: density samples must be [t, value]");
        samples.emplace_back(pair[0], pair[1]);
    }
    if (samples.size() < 2) throw config_error("grid: density table needs at least two samples");
    for (std::size_t i = 0; i + 1 < samples.size(); ++i)
        if (!(samples[i].first < samples[i + 1].first))
            throw config_error("grid: density sample times must increase");
    auto interp = [samples](double t) {
        if (t <= samples.front().first) return samples.front().second;
        if (t >= samples.back().first) return samples.back().second;
        for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
            if (t <= samples[i + 1].first) {
                double frac = (t - samples[i].first) / (samples[i + 1].first - samples[i].first);
                return samples[i].second + frac * (samples[i + 1].second - samples[i].second);
            }
        }
        return samples.back().second;
    };
    return TimeGrid::uniform(horizon, static_cast<std::size_t>(steps), interp);
}

// [chain] states, transitions = "identity" | "uniform" | matrix | per-step
// array of matrices.
inline MarkovChainModel build_chain(const TomlTable& sec, std::size_t steps) {
    long states = sec.at("states").as_integer();
    if (states < 1) throw config_error("chain: states must be positive");
    auto s = static_cast<std::size_t>(states);
    if (!sec.has("transitions")) return MarkovChainModel::identity(s, steps);

    const TomlValue& t = sec.at("transitions");
    if (t.is_string()) {
        const std::string& name = t.as_string();
        if (name == "identity") return MarkovChainModel::identity(s, steps);
        if (name == "uniform") return MarkovChainModel::uniform(s, steps);
        throw config_error("chain: unknown transitions '" + name + "'");
    }

    auto parse_matrix = [s](const TomlValue& v) {
        const auto& rows = v.as_array();
        if (rows.size() != s) throw config_error("chain: matrix row count != states");
        Mat m(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s));
        for (std::size_t r = 0; r < s; ++r) {
            auto row = rows[r].as_number_array();
            if (row.size() != s) throw config_error("chain: matrix column count != states");
            for (std::size_t c = 0; c < s; ++c)
                m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
        }
        return m;
    };

    const auto& outer = t.as_array();
    if (outer.empty()) throw config_error("chain: empty transitions");
    bool per_step = outer.front().is_array() && !outer.front().as_array().empty() &&
                    outer.front().as_array().front().is_array();
    std::vector<Mat> matrices;
    if (per_step) {
        for (const TomlValue& v : outer) matrices.push_back(parse_matrix(v));
        if (matrices.size() != steps)
            throw config_error("chain: per-step table length != grid steps");
    } else {
        matrices.assign(steps, parse_matrix(t));
    }
    try {
        return MarkovChainModel(s, std::move(matrices));
    } catch (const std::invalid_argument& e) {
        throw config_error(std::string("chain: ") + e.what());
    }
}

// [generator] family = "affine" | "branching" | "power" with per-family keys.
inline Generator build_generator(const TomlTable& sec, std::size_t node_count,
                                 std::size_t state_count) {
    std::string family = sec.string_or("family", "affine");
    if (family == "affine") {
        // a = number | k-array; b = number | k x k array-of-arrays
        Eigen::Index k = 1;
        Vec a(1);
        a[0] = 0.0;
        if (sec.has("a")) {
            const TomlValue& av = sec.at("a");
            if (av.is_number()) {
                a[0] = av.as_number();
            } else {
                auto nums = av.as_number_array();
                k = static_cast<Eigen::Index>(nums.size());
                a = Eigen::Map<Vec>(nums.data(), k);
            }
        }
        Mat b = Mat::Zero(k, k);
        if (sec.has("b")) {
            const TomlValue& bv = sec.at("b");
            if (bv.is_number()) {
                if (k != 1) throw config_error("generator: scalar b with vector a");
                b(0, 0) = bv.as_number();
            } else {
                const auto& rows = bv.as_array();
                if (static_cast<Eigen::Index>(rows.size()) != k && sec.has("a"))
                    throw config_error("generator: b rows != dimension of a");
                k = static_cast<Eigen::Index>(rows.size());
                if (a.size() != k) a = Vec::Zero(k);
                b = Mat::Zero(k, k);
                for (Eigen::Index r = 0; r < k; ++r) {
                    auto row = rows[static_cast<std::size_t>(r)].as_number_array();
                    if (static_cast<Eigen::Index>(row.size()) != k)
                        throw config_error("generator: b must be square");
                    for (Eigen::Index c = 0; c < k; ++c) b(r, c) = row[static_cast<std::size_t>(c)];
                }
            }
        }
        return make_affine_constant(node_count, state_count, a, b);
    }
    if (family == "branching") {
        BranchingMechanism m;
        m.b = constant_scalar_field(node_count, state_count, sec.number_or("b", 0.0));
        m.c = constant_scalar_field(node_count, state_count, sec.number_or("c", 0.0));
        if (sec.has("stable")) {
            for (const TomlValue& term : sec.at("stable").as_array()) {
                auto pair = term.as_number_array();
                if (pair.size() != 2)
                    throw config_error("generator: stable terms are [d, alpha] pairs");
                m.stable_terms.push_back(
                    {constant_scalar_field(node_count, state_count, pair[0]), pair[1]});
            }
        }
        if (sec.has("kernel")) {
            for (const TomlValue& entry : sec.at("kernel").as_array()) {
                auto pair = entry.as_number_array();
                if (pair.size() != 2)
                    throw config_error("generator: kernel entries are [u, mass] pairs");
                m.kernel_table.emplace_back(pair[0], pair[1]);
            }
        }
        try {
            return make_branching(std::move(m));
        } catch (const std::invalid_argument& e) {
            throw config_error(std::string("generator: ") + e.what());
        }
    }
    if (family == "power") {
        if (!sec.has("coefficients") || !sec.has("powers"))
            throw config_error("generator: power family needs coefficients and powers");
        Domain domain = Domain::all(1);
        if (sec.has("domain")) {
            const TomlValue& dv = sec.at("domain");
            if (dv.is_string()) {
                if (dv.as_string() != "all")
                    throw config_error("generator: unknown domain '" + dv.as_string() + "'");
            } else {
                auto bounds = dv.as_number_array();
                if (bounds.size() != 2) throw config_error("generator: domain is [lo, hi]");
                domain = Domain::interval(bounds[0], bounds[1]);
            }
        }
        try {
            return make_power(sec.at("coefficients").as_number_array(),
                              sec.at("powers").as_number_array(), domain);
        } catch (const std::invalid_argument& e) {
            throw config_error(std::string("generator: ") + e.what());
        }
    }
    throw config_error("generator: unknown family '" + family + "'");
}

// [terminal] values = per-state (scalars or k-arrays) | constant = scalar or
// k-array | indicator = state index.
inline Mat build_terminal(const TomlTable& sec, std::size_t state_count, Eigen::Index k) {
    auto s = static_cast<Eigen::Index>(state_count);
    if (sec.has("values")) {
        const auto& rows = sec.at("values").as_array();
        if (static_cast<Eigen::Index>(rows.size()) != s)
            throw config_error("terminal: values must cover every state");
        Mat g(s, k);
        for (Eigen::Index x = 0; x < s; ++x) {
            const TomlValue& row = rows[static_cast<std::size_t>(x)];
            if (row.is_number()) {
                if (k != 1) throw config_error("terminal: scalar row for k > 1");
                g(x, 0) = row.as_number();
            } else {
                auto nums = row.as_number_array();
                if (static_cast<Eigen::Index>(nums.size()) != k)
                    throw config_error("terminal: row dimension != k");
                for (Eigen::Index c = 0; c < k; ++c) g(x, c) = nums[static_cast<std::size_t>(c)];
            }
        }
        return g;
    }
    if (sec.has("constant")) {
        const TomlValue& cv = sec.at("constant");
        Mat g(s, k);
        if (cv.is_number()) {
            if (k != 1) throw config_error("terminal: scalar constant for k > 1");
            g.setConstant(cv.as_number());
        } else {
            auto nums = cv.as_number_array();
            if (static_cast<Eigen::Index>(nums.size()) != k)
                throw config_error("terminal: constant dimension != k");
            for (Eigen::Index x = 0; x < s; ++x)
                for (Eigen::Index c = 0; c < k; ++c) g(x, c) = nums[static_cast<std::size_t>(c)];
        }
        return g;
    }
    if (sec.has("indicator")) {
        long idx = sec.at("indicator").as_integer();
        if (idx < 0 || idx >= static_cast<long>(state_count))
            throw config_error("terminal: indicator state out of range");
        Mat g = Mat::Zero(s, k);
        g(static_cast<Eigen::Index>(idx), 0) = 1.0;
        return g;
    }
    throw config_error("terminal: need values, constant, or indicator");
}

struct SolverSettings {
    PicardOptions picard;
    std::size_t clip_depth = 20;
    double blowup_threshold = 1e-2;
    std::string method = "picard";  // picard | stepper | global1d
    std::size_t macro_stride = 1;   // stepper: macro node spacing in grid steps
};

inline SolverSettings build_solver_settings(const TomlDocument& doc) {
    SolverSettings s;
    if (!doc.has_section("solver")) return s;
    const TomlTable& sec = doc.section("solver");
    s.picard.max_iter = static_cast<std::size_t>(sec.integer_or("max_iter", 200));
    s.picard.tol = sec.number_or("tol", 1e-10);
    s.picard.damping = sec.number_or("damping", 1.0);
    std::string f_arg = sec.string_or("f_arg", "propagated");
    if (f_arg == "propagated") {
        s.picard.f_arg = PicardOptions::FArg::propagated;
    } else if (f_arg == "slice") {
        s.picard.f_arg = PicardOptions::FArg::slice;
    } else {
        throw config_error("solver: f_arg must be 'propagated' or 'slice'");
    }
    s.clip_depth = static_cast<std::size_t>(sec.integer_or("clip_depth", 20));
    s.blowup_threshold = sec.number_or("blowup_threshold", 1e-2);
    s.method = sec.string_or("method", "picard");
    if (s.method != "picard" && s.method != "stepper" && s.method != "global1d")
        throw config_error("solver: unknown method '" + s.method + "'");
    s.macro_stride = static_cast<std::size_t>(sec.integer_or("macro_stride", 1));
    if (s.macro_stride < 1) throw config_error("solver: macro_stride must be positive");
    return s;
}

// A fully cross-validated scenario: generator dimension = terminal dimension,
// chain steps = grid steps.
struct Scenario {
    TimeGrid grid;
    MarkovChainModel chain;
    Generator generator;
    Mat terminal;
    SolverSettings solver;
};

inline Scenario load_scenario(const TomlDocument& doc) {
    TimeGrid grid = build_grid(doc.section("grid"));
    MarkovChainModel chain = build_chain(doc.section("chain"), grid.steps());
    Generator gen = build_generator(doc.section("generator"), grid.node_count(),
                                    chain.state_count());
    Mat terminal = build_terminal(doc.section("terminal"), chain.state_count(), gen.dim());
    return Scenario{std::move(grid), std::move(chain), std::move(gen), std::move(terminal),
                    build_solver_settings(doc)};
}

// Extracts constant affine fields for the Feynman-Kac evaluators; only the
// affine family exposes them.
inline std::pair<Field<Vec>, Field<Mat>> affine_fields_from_config(const TomlTable& sec,
                                                                   std::size_t node_count,
                                                                   std::size_t state_count,
                                                                   Eigen::Index k) {
    Generator gen = build_generator(sec, node_count, state_count);
    if (gen.family() != "affine")
        throw config_error("fk: generator family must be affine");
    if (gen.dim() != k) throw config_error("fk: generator dimension mismatch");
    Field<Vec> a(node_count, std::vector<Vec>(state_count));
    Field<Mat> b(node_count, std::vector<Mat>(state_count));
    Vec zero = Vec::Zero(k);
    Mat eye = Mat::Identity(k, k);
    for (std::size_t j = 0; j < node_count; ++j) {
        for (std::size_t x = 0; x < state_count; ++x) {
            a[j][x] = gen(j, x, zero);
            Mat m(k, k);
            for (Eigen::Index c = 0; c < k; ++c)
                m.col(c) = gen(j, x, Vec(eye.col(c))) - a[j][x];
            b[j][x] = m;
        }
    }
    return {std::move(a), std::move(b)};
}

}  // namespace mie
