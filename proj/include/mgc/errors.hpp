#pragma once

#include <stdexcept>
#include <string>

namespace mgc {

// Bad user-supplied configuration (ranges, toggles, budgets).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

// API misuse: shape/length mismatches, preconditions.
struct ContractViolation : std::logic_error {
    explicit ContractViolation(const std::string& msg) : std::logic_error("contract violation: " + msg) {}
};

// Missing or inconsistent data (unknown ids, absent artifacts).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error("data error: " + msg) {}
};

// Training blew up (non-finite loss, collapsed embeddings).
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error("divergence: " + msg) {}
};

}  // namespace mgc
