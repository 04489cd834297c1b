#pragma once

#include <stdexcept>
#include <string>

namespace itebench {

// Error classes map one-to-one onto CLI exit codes (see tools/itebench.cpp).

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Non-finite input data or gradients.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Too few samples for a statistic (median heuristic, MMD groups, kmeans).
struct InsufficientDataError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Missing/corrupt files, dimension mismatches between artifacts.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace itebench
