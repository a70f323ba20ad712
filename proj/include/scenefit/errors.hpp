#pragma once

#include <stdexcept>
#include <string>

namespace scenefit {

// Error taxonomy mirrored by the CLI exit codes.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg)
        : std::runtime_error(msg) {}
};

struct DependencyError : std::runtime_error {
    explicit DependencyError(const std::string& msg)
        : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg)
        : std::runtime_error(msg) {}
};

}  // namespace scenefit
