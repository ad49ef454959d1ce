#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace mie {

// Solver iterate or propagated value left the generator's domain.
class domain_exit_error : public std::runtime_error {
public:
    domain_exit_error(std::size_t node, std::size_t state, Eigen::VectorXd value,
                      const std::string& what_arg)
        : std::runtime_error(what_arg), node_(node), state_(state), value_(std::move(value)) {}

    std::size_t node() const { return node_; }
    std::size_t state() const { return state_; }
    const Eigen::VectorXd& value() const { return value_; }

private:
    std::size_t node_;
    std::size_t state_;
    Eigen::VectorXd value_;
};

// A construction would exceed a configured resource budget.
class capacity_error : public std::runtime_error {
public:
    capacity_error(std::size_t required, std::size_t budget, const std::string& what_arg)
        : std::runtime_error(what_arg), required_(required), budget_(budget) {}

    std::size_t required() const { return required_; }
    std::size_t budget() const { return budget_; }

private:
    std::size_t required_;
    std::size_t budget_;
};

// A mathematical precondition of an operation does not hold for the supplied data.
class precondition_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Scenario/config file could not be parsed or validated.
class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mie
