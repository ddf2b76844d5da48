#pragma once

#include <stdexcept>
#include <string>

namespace slidefuse {

struct NotFoundError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct BoundsError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace slidefuse
