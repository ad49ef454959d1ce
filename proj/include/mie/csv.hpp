#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mie/core.hpp"
#include "mie/errors.hpp"
#include "mie/solution_field.hpp"

namespace mie {

// Shortest round-trip decimal for a double (std::to_chars with no precision
// argument); parsing it back with from_chars reproduces the bits.
inline std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& token) {
    double v = 0.0;
    auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size())
        throw config_error("csv: malformed number '" + token + "'");
    return v;
}

// Fixed schema: node_time,state,u_1,...,u_k (plus stderr when a standard-error
// field accompanies a Monte Carlo estimate). Rows cover the field's nodes in
// ascending node-major, state-minor order.
inline void write_solution_csv(std::ostream& out, const SolutionField& field,
                               const SolutionField* standard_error = nullptr) {
    out << "node_time,state";
    for (Eigen::Index c = 0; c < field.dim(); ++c) out << ",u_" << (c + 1);
    if (standard_error) out << ",stderr";
    out << "\n";
    for (std::size_t j = field.first_node(); j < field.grid().node_count(); ++j) {
        for (std::size_t x = 0; x < field.state_count(); ++x) {
            out << format_double(field.grid().node(j)) << "," << x;
            Vec v = field.value(j, x);
            for (Eigen::Index c = 0; c < v.size(); ++c) out << "," << format_double(v[c]);
            if (standard_error) out << "," << format_double(standard_error->value(j, x).norm());
            out << "\n";
        }
    }
}

inline std::string solution_to_csv(const SolutionField& field,
                                   const SolutionField* standard_error = nullptr) {
    std::ostringstream out;
    write_solution_csv(out, field, standard_error);
    return out.str();
}

// Raw table form of a solution CSV; node times are kept verbatim so a
// round-trip is bitwise faithful.
struct RawSolutionTable {
    std::vector<double> times;    // ascending, one per covered node
    std::vector<Mat> values;      // per covered node: states x k
    Eigen::Index dim = 0;
};

inline RawSolutionTable read_solution_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw config_error("csv: empty file");
    std::size_t columns = 1;
    for (char c : line)
        if (c == ',') ++columns;
    bool has_stderr = line.size() >= 6 && line.rfind(",stderr") != std::string::npos;
    Eigen::Index k = static_cast<Eigen::Index>(columns) - 2 - (has_stderr ? 1 : 0);
    if (k < 1) throw config_error("csv: expected node_time,state,u_1,... header");

    RawSolutionTable table;
    table.dim = k;
    std::vector<std::vector<Vec>> rows_by_node;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != columns) throw config_error("csv: ragged row '" + line + "'");
        double t = parse_double(cells[0]);
        auto state = static_cast<std::size_t>(parse_double(cells[1]));
        Vec v(k);
        for (Eigen::Index c = 0; c < k; ++c) v[c] = parse_double(cells[2 + c]);
        if (table.times.empty() || table.times.back() != t) {
            table.times.push_back(t);
            rows_by_node.emplace_back();
        }
        if (state != rows_by_node.back().size())
            throw config_error("csv: states out of order at time " + cells[0]);
        rows_by_node.back().push_back(std::move(v));
    }
    for (const auto& rows : rows_by_node) {
        Mat m(static_cast<Eigen::Index>(rows.size()), k);
        for (std::size_t x = 0; x < rows.size(); ++x)
            m.row(static_cast<Eigen::Index>(x)) = rows[x].transpose();
        table.values.push_back(std::move(m));
    }
    return table;
}

inline RawSolutionTable read_solution_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("csv: cannot open '" + path + "'");
    return read_solution_csv(in);
}

// Rebuilds a SolutionField from a raw table. When the table's first time is
// positive a synthetic origin node is prepended (partial fields); weights are
// the node gaps, which the ordering checks need but no quadrature uses.
inline SolutionField table_to_field(const RawSolutionTable& table) {
    if (table.times.empty()) throw config_error("csv: no rows");
    std::vector<double> nodes;
    std::size_t first_node = 0;
    if (table.times.front() > 0.0) {
        nodes.push_back(0.0);
        first_node = 1;
    } else if (table.times.front() != 0.0) {
        throw config_error("csv: negative node time");
    }
    nodes.insert(nodes.end(), table.times.begin(), table.times.end());
    std::vector<double> weights(nodes.size() - 1);
    for (std::size_t j = 0; j + 1 < nodes.size(); ++j) weights[j] = nodes[j + 1] - nodes[j];
    return SolutionField(TimeGrid(std::move(nodes), std::move(weights)), first_node, table.values);
}

// Validates the table against a scenario grid and returns the field on it.
inline SolutionField table_to_field(const RawSolutionTable& table, const TimeGrid& grid) {
    if (table.times.empty()) throw config_error("csv: no rows");
    std::size_t first_node = grid.node_count() - table.times.size();
    for (std::size_t i = 0; i < table.times.size(); ++i)
        if (grid.node(first_node + i) != table.times[i])
            throw config_error("csv: node times do not match the scenario grid");
    return SolutionField(grid, first_node, table.values);
}

}  // namespace mie
