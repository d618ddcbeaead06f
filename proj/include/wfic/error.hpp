#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wfic {

/// Argument or evaluation point outside the operation's domain.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A numerical routine could not reach its tolerance, or produced a
/// non-finite value.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Simulation produced an inconsistent object (ties in a merged timeline,
/// a grid path too short for the requested skeleton, ...).
class SimulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A configured budget (tree states, sample size) is violated.
class BudgetError : public std::runtime_error {
public:
    BudgetError(const std::string& what, std::size_t required)
        : std::runtime_error(what), required_(required) {}

    [[nodiscard]] std::size_t required() const noexcept { return required_; }

private:
    std::size_t required_;
};

/// Contract violated by user-supplied input (negative payoffs, too few paths).
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace wfic
