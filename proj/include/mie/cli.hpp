#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mie/config.hpp"
#include "mie/csv.hpp"
#include "mie/errors.hpp"
#include "mie/feynman_kac.hpp"
#include "mie/scenario.hpp"
#include "mie/solver.hpp"
#include "mie/verify.hpp"

namespace mie::cli {

using nlohmann::json;

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot write '" + path.string() + "'");
    out << text;
}

inline json report_to_json(const SolveReport& report) {
    json j;
    j["converged"] = report.converged;
    j["iterations"] = report.iterations;
    j["final_residual"] = report.final_residual;
    j["defect"] = report.defect;
    if (report.blowup) {
        j["blowup"] = {{"t_minus_estimate", report.blowup->t_minus_estimate},
                       {"trigger", report.blowup->trigger},
                       {"halt_node", report.blowup->halt_node}};
    } else {
        j["blowup"] = nullptr;
    }
    j["increment_history"] = report.increment_history;
    j["clip_level_differences"] = report.clip_level_differences;
    if (report.iterate_hull) {
        std::vector<double> lo(report.iterate_hull->lower.data(),
                               report.iterate_hull->lower.data() + report.iterate_hull->lower.size());
        std::vector<double> hi(report.iterate_hull->upper.data(),
                               report.iterate_hull->upper.data() + report.iterate_hull->upper.size());
        j["iterate_hull"] = {{"lower", lo}, {"upper", hi}};
    } else {
        j["iterate_hull"] = nullptr;
    }
    return j;
}

inline json check_to_json(const CheckResult& res) {
    json j;
    j["passed"] = res.passed;
    j["worst_slack"] = res.worst_slack;
    if (res.witness) {
        j["witness"] = {{"node", res.witness->first}, {"state", res.witness->second}};
    } else {
        j["witness"] = nullptr;
    }
    j["checked"] = res.checked;
    j["skipped"] = res.skipped;
    return j;
}

inline std::string trace_csv(const SolutionField& field, const std::vector<double>& trace) {
    std::ostringstream out;
    out << "node_time,condB_statistic\n";
    for (std::size_t i = 0; i < trace.size(); ++i)
        out << format_double(field.grid().node(field.first_node() + i)) << ","
            << format_double(trace[i]) << "\n";
    return out.str();
}

struct CommonFlags {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<double> tol;
    std::optional<long> max_iter;
    std::optional<double> threshold;
    std::optional<std::string> mode;
    std::optional<long> seed;
};

inline std::filesystem::path out_path(const CommonFlags& flags, const TomlDocument& doc,
                                      const std::string& key, const std::string& fallback) {
    std::string name = fallback;
    if (doc.has_section("output") && doc.section("output").has(key))
        name = doc.section("output").at(key).as_string();
    return std::filesystem::path(flags.out_dir) / name;
}

inline SolverSettings settings_with_overrides(const TomlDocument& doc, const CommonFlags& flags) {
    SolverSettings s = build_solver_settings(doc);
    if (flags.tol) s.picard.tol = *flags.tol;
    if (flags.max_iter) s.picard.max_iter = static_cast<std::size_t>(*flags.max_iter);
    if (flags.threshold) s.blowup_threshold = *flags.threshold;
    return s;
}

inline int run_solve(const CommonFlags& flags) {
    TomlDocument doc = parse_toml_file(flags.config_path);
    Scenario sc = load_scenario(doc);
    SolverSettings settings = settings_with_overrides(doc, flags);

    SolutionField field = SolutionField::zero(sc.grid, sc.chain.state_count(), sc.generator.dim());
    SolveReport report;
    if (settings.method == "picard") {
        auto solved = picard_solve(sc.chain, sc.grid, sc.generator, sc.terminal, settings.picard);
        field = std::move(solved.first);
        report = std::move(solved.second);
    } else if (settings.method == "stepper") {
        std::vector<std::size_t> macro;
        for (std::size_t j = 0; j < sc.grid.steps(); j += settings.macro_stride) macro.push_back(j);
        macro.push_back(sc.grid.steps());
        field = epsilon_stepper(sc.chain, sc.grid, sc.generator, sc.terminal, macro);
        report.converged = true;
        report.iterations = 1;
        report.defect = residual(sc.chain, sc.grid, sc.generator, field).maxCoeff();
    } else {  // global1d
        auto solved = solve_1d_global(sc.chain, sc.grid, sc.generator, sc.terminal,
                                      settings.clip_depth, settings.picard);
        field = std::move(solved.first);
        report = std::move(solved.second);
    }

    write_text_file(out_path(flags, doc, "csv", "solution.csv"), solution_to_csv(field));
    write_text_file(out_path(flags, doc, "report", "report.json"),
                    report_to_json(report).dump(2) + "\n");
    return report.converged ? 0 : 2;
}

inline int run_blowup(const CommonFlags& flags) {
    TomlDocument doc = parse_toml_file(flags.config_path);
    Scenario sc = load_scenario(doc);
    SolverSettings settings = settings_with_overrides(doc, flags);

    auto [field, report] = march_with_blowup_monitor(sc.chain, sc.grid, sc.generator, sc.terminal,
                                                     settings.blowup_threshold);
    write_text_file(out_path(flags, doc, "csv", "solution.csv"), solution_to_csv(field));
    write_text_file(out_path(flags, doc, "trace", "trace.csv"),
                    trace_csv(field, report.condB_trace));
    write_text_file(out_path(flags, doc, "report", "report.json"),
                    report_to_json(report).dump(2) + "\n");
    return 0;  // halting is a normal outcome
}

inline int run_fk(const CommonFlags& flags) {
    TomlDocument doc = parse_toml_file(flags.config_path);
    TimeGrid grid = build_grid(doc.section("grid"));
    MarkovChainModel chain = build_chain(doc.section("chain"), grid.steps());
    Generator gen = build_generator(doc.section("generator"), grid.node_count(),
                                    chain.state_count());
    Mat g = build_terminal(doc.section("terminal"), chain.state_count(), gen.dim());
    auto [a_field, b_field] = affine_fields_from_config(doc.section("generator"),
                                                        grid.node_count(), chain.state_count(),
                                                        gen.dim());

    std::string mode = "product";
    long order = 30;
    long paths = 2000;
    std::uint64_t seed = 12345;
    if (doc.has_section("fk")) {
        const TomlTable& sec = doc.section("fk");
        mode = sec.string_or("mode", mode);
        order = sec.integer_or("order", order);
        paths = sec.integer_or("paths", paths);
        seed = static_cast<std::uint64_t>(sec.integer_or("seed", static_cast<long>(seed)));
    }
    if (flags.mode) mode = *flags.mode;
    if (flags.seed) seed = static_cast<std::uint64_t>(*flags.seed);

    json meta;
    meta["mode"] = mode;
    std::string csv;
    if (mode == "product") {
        csv = solution_to_csv(linear_solve_backward(chain, grid, a_field, b_field, g));
    } else if (mode == "exp") {
        csv = solution_to_csv(exp_solve_backward(chain, grid, a_field, b_field, g));
    } else if (mode == "series") {
        meta["order"] = order;
        csv = solution_to_csv(series_solve_backward(chain, grid, a_field, b_field, g,
                                                    static_cast<std::size_t>(order)));
    } else if (mode == "mc") {
        meta["paths"] = paths;
        meta["seed"] = seed;
        auto mc = fk_monte_carlo(chain, grid, a_field, b_field, g,
                                 static_cast<std::size_t>(paths), seed);
        double max_se = 0.0;
        for (std::size_t j = 0; j < grid.node_count(); ++j)
            for (std::size_t x = 0; x < chain.state_count(); ++x)
                max_se = std::max(max_se, mc.standard_error.value(j, x).norm());
        meta["max_stderr"] = max_se;
        csv = solution_to_csv(mc.mean, &mc.standard_error);
    } else {
        throw config_error("fk: unknown mode '" + mode + "'");
    }
    write_text_file(out_path(flags, doc, "csv", "solution.csv"), csv);
    write_text_file(out_path(flags, doc, "report", "report.json"), meta.dump(2) + "\n");
    return 0;
}

inline int run_verify(const CommonFlags& flags) {
    TomlDocument doc = parse_toml_file(flags.config_path);
    if (!doc.has_section("verify")) throw config_error("verify: missing [verify] section");
    const TomlTable& sec = doc.section("verify");
    std::string checker = sec.at("checker").as_string();
    CheckTolerance tol;
    tol.absolute = sec.number_or("tol", tol.absolute);
    tol.relative = sec.number_or("tol_rel", tol.relative);
    BoundKernel kernel = sec.string_or("kernel", "default") == "exponential"
                             ? BoundKernel::exponential
                             : BoundKernel::discrete_exact;

    auto load_field = [&](const std::string& key) {
        return table_to_field(read_solution_csv_file(sec.at(key).as_string()));
    };
    auto load_field_on = [&](const std::string& key, const TimeGrid& grid) {
        return table_to_field(read_solution_csv_file(sec.at(key).as_string()), grid);
    };

    CheckResult result;
    if (checker == "comparison") {
        result = check_comparison(load_field("u"), load_field("u_tilde"), tol);
    } else if (checker == "growth" || checker == "one_sided_growth" ||
               checker == "boundary_lower" || checker == "gronwall" || checker == "stability") {
        TimeGrid grid = build_grid(doc.section("grid"));
        MarkovChainModel chain = build_chain(doc.section("chain"), grid.steps());
        auto nodes = grid.node_count();
        auto states = chain.state_count();
        if (checker == "growth") {
            SolutionField u = load_field_on("u", grid);
            Mat g = u.slice(grid.steps());
            result = check_growth(u, g,
                                  constant_scalar_field(nodes, states, sec.number_or("a", 0.0)),
                                  constant_scalar_field(nodes, states, sec.number_or("b", 0.0)),
                                  chain, grid, tol,
                                  sec.string_or("kernel", "exponential") == "exponential"
                                      ? BoundKernel::exponential
                                      : BoundKernel::discrete_exact);
        } else if (checker == "one_sided_growth") {
            SolutionField u = load_field_on("u", grid);
            result = check_one_sided_growth(
                u, u.slice(grid.steps()), sec.number_or("d_lower", 0.0),
                constant_scalar_field(nodes, states, sec.number_or("a", 0.0)),
                constant_scalar_field(nodes, states, sec.number_or("b", 0.0)), chain, grid, tol);
        } else if (checker == "boundary_lower") {
            SolutionField u = load_field_on("u", grid);
            result = check_boundary_lower(
                u, u.slice(grid.steps()), sec.number_or("d_lower", 0.0),
                constant_scalar_field(nodes, states, sec.at("n").as_number()), chain, grid, tol);
        } else if (checker == "gronwall") {
            SolutionField v = load_field_on("v", grid);
            ScalarField vf(nodes, states);
            for (std::size_t j = 0; j < nodes; ++j)
                for (std::size_t x = 0; x < states; ++x)
                    vf(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(x)) =
                        v.value(j, x)[0];
            auto h_nums = sec.at("h").as_number_array();
            if (h_nums.size() != states)
                throw config_error("verify: h must cover every state");
            Vec h = Eigen::Map<Vec>(h_nums.data(), static_cast<Eigen::Index>(states));
            result = check_gronwall(
                chain, grid, vf, h,
                constant_scalar_field(nodes, states, sec.number_or("a", 0.0)),
                constant_scalar_field(nodes, states, sec.number_or("b", 0.0)), tol, kernel);
        } else {  // stability
            SolutionField u = load_field_on("u", grid);
            SolutionField ut = load_field_on("u_tilde", grid);
            result = check_stability(
                u, ut, u.slice(grid.steps()), ut.slice(grid.steps()),
                constant_scalar_field(nodes, states, sec.number_or("lambda", 0.0)),
                constant_scalar_field(nodes, states, sec.number_or("eps", 0.0)),
                constant_scalar_field(nodes, states, sec.number_or("eps_tilde", 0.0)), chain,
                grid, tol, kernel);
        }
    } else {
        throw config_error("verify: unknown checker '" + checker + "'");
    }

    write_text_file(out_path(flags, doc, "report", "check.json"),
                    check_to_json(result).dump(2) + "\n");
    return result.passed ? 0 : 1;
}

inline int run_mechanism(const CommonFlags& flags) {
    TomlDocument doc = parse_toml_file(flags.config_path);
    if (!doc.has_section("mechanism")) throw config_error("mechanism: missing [mechanism] section");
    const TomlTable& sec = doc.section("mechanism");
    auto result = mechanism_kernel_check(
        sec.at("d").as_number(), sec.at("alpha").as_number(), sec.at("w").as_number(),
        static_cast<std::size_t>(sec.integer_or("nodes", 200)));
    json j;
    j["closed_form"] = result.closed_form;
    j["quadrature"] = result.quadrature;
    j["abs_error"] = result.abs_error;
    write_text_file(out_path(flags, doc, "report", "kernel.json"), j.dump(2) + "\n");
    return 0;
}

inline int run_coshsinh(const CommonFlags& flags) {
    TomlDocument doc = parse_toml_file(flags.config_path);
    if (!doc.has_section("coshsinh")) throw config_error("coshsinh: missing [coshsinh] section");
    const TomlTable& sec = doc.section("coshsinh");
    TimeGrid grid = build_grid(doc.section("grid"));
    MarkovChainModel chain = build_chain(doc.section("chain"), grid.steps());
    Mat g = build_terminal(doc.section("terminal"), chain.state_count(), 2);

    double delta = sec.at("delta").as_number();
    double eps = sec.at("eps").as_number();
    ScalarField c = constant_scalar_field(grid.node_count(), chain.state_count(),
                                          sec.number_or("c", 1.0));
    SolutionField field =
        coshsinh_example(chain, grid, c, delta, eps, Vec(g.col(0)), Vec(g.col(1)));

    // Cross-check against the first-order matrix recursion with b = c B.
    Mat big_b(2, 2);
    big_b << 0.0, delta, eps, 0.0;
    Field<Vec> a_field = constant_field(grid.node_count(), chain.state_count(), Vec(Vec::Zero(2)));
    Field<Mat> b_field(grid.node_count(), std::vector<Mat>(chain.state_count()));
    for (std::size_t j = 0; j < grid.node_count(); ++j)
        for (std::size_t x = 0; x < chain.state_count(); ++x)
            b_field[j][x] = c(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(x)) * big_b;
    SolutionField recursion = linear_solve_backward(chain, grid, a_field, b_field, g);

    json j;
    j["sup_difference_vs_matrix_recursion"] = field.sup_distance(recursion);
    write_text_file(out_path(flags, doc, "csv", "solution.csv"), solution_to_csv(field));
    write_text_file(out_path(flags, doc, "report", "agreement.json"), j.dump(2) + "\n");
    return 0;
}

}  // namespace detail

// Batch entry point; returns the process exit code.
// 0 success/pass, 1 failed check, 2 solver error, 3 config/usage error.
inline int run(std::vector<std::string> args) {
    CLI::App app{"Solvers and checkers for Markovian integral equations on finite chains"};
    app.require_subcommand(1);

    detail::CommonFlags flags;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config_path, "scenario config file")->required();
        sub->add_option("--out-dir", flags.out_dir, "output directory");
        sub->add_option_function<double>(
            "--tol", [&](double v) { flags.tol = v; }, "override solver tolerance");
        sub->add_option_function<long>(
            "--max-iter", [&](long v) { flags.max_iter = v; }, "override iteration cap");
        sub->add_option_function<double>(
            "--threshold", [&](double v) { flags.threshold = v; },
            "override blow-up threshold");
        sub->add_option_function<std::string>(
            "--mode", [&](const std::string& v) { flags.mode = v; }, "fk propagator mode");
        sub->add_option_function<long>(
            "--seed", [&](long v) { flags.seed = v; }, "sampling seed");
    };

    CLI::App* solve = app.add_subcommand("solve", "solve a scenario");
    CLI::App* blowup = app.add_subcommand("blowup", "march with the condition-(B) monitor");
    CLI::App* fk = app.add_subcommand("fk", "affine Feynman-Kac evaluation");
    CLI::App* verify = app.add_subcommand("verify", "run a named checker on result files");
    CLI::App* mechanism = app.add_subcommand("mechanism", "stable-kernel identity check");
    CLI::App* coshsinh = app.add_subcommand("coshsinh", "2-D trigonometric closed form");
    for (CLI::App* sub : {solve, blowup, fk, verify, mechanism, coshsinh}) add_common(sub);

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 3;
    }

    try {
        if (solve->parsed()) return detail::run_solve(flags);
        if (blowup->parsed()) return detail::run_blowup(flags);
        if (fk->parsed()) return detail::run_fk(flags);
        if (verify->parsed()) return detail::run_verify(flags);
        if (mechanism->parsed()) return detail::run_mechanism(flags);
        if (coshsinh->parsed()) return detail::run_coshsinh(flags);
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 2;
    }
    return 3;
}

inline int run(int argc, char** argv) {
    return run(std::vector<std::string>(argv + 1, argv + argc));
}

}  // namespace mie::cli
