#pragma once

#include <stdexcept>
#include <string>

namespace incant {

// Error taxonomy mirrors the CLI exit-code contract:
//   input_error -> 2, capability_error -> 3, numeric_error -> 4.
struct input_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct capability_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace incant
