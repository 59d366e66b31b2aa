#pragma once

#include <stdexcept>
#include <string>

namespace prcaps {

// Config/validation problems: CLI maps these to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent dataset files: also exit code 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values during training: exit code 3.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem failures: exit code 4.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace prcaps
