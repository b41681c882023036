#pragma once

#include <stdexcept>
#include <string>

namespace crackclf {

// Violated precondition or shape/value contract on a public entry point.
struct ContractViolation : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Filesystem, decode, or container-format failure.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void expect(bool cond, const std::string& msg) {
    if (!cond) throw ContractViolation(msg);
}

} // namespace crackclf
