#pragma once

#include <stdexcept>
#include <string>

namespace rops {

// Error taxonomy mirrors the CLI exit codes (see tools/).
struct PlanError : std::runtime_error {
    explicit PlanError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

struct SimulationError : std::runtime_error {
    explicit SimulationError(const std::string& what) : std::runtime_error(what) {}
};

struct PricingError : std::runtime_error {
    explicit PricingError(const std::string& what) : std::runtime_error(what) {}
};

struct OptimError : std::runtime_error {
    explicit OptimError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace rops
