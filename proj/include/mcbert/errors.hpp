#pragma once

#include <stdexcept>
#include <string>

namespace mcbert {

// Shape or axis disagreement between tensors.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Token id outside the vocabulary.
struct VocabError : std::runtime_error {
    explicit VocabError(const std::string& msg) : std::runtime_error(msg) {}
};

// Sequence longer than the model supports.
struct LengthError : std::runtime_error {
    explicit LengthError(const std::string& msg) : std::runtime_error(msg) {}
};

// Not enough distinct tokens to draw the requested negatives.
struct SupportError : std::runtime_error {
    explicit SupportError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration or input file. CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf encountered where finite values are required. CLI maps this to exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace mcbert
