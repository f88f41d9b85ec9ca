#pragma once

#include <stdexcept>
#include <string>

namespace mlta {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data (files, records, labels).
struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error("parse error: " + msg) {}
};

struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& msg) : Error("dimension mismatch: " + msg) {}
};

struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& msg) : Error("shape mismatch: " + msg) {}
};

struct EmptyAfterCleaning : Error {
    explicit EmptyAfterCleaning(const std::string& msg) : Error("empty after cleaning: " + msg) {}
};

struct LengthMismatch : Error {
    explicit LengthMismatch(const std::string& msg) : Error("length mismatch: " + msg) {}
};

struct MixedLabels : Error {
    explicit MixedLabels(const std::string& msg) : Error("mixed labels: " + msg) {}
};

struct NonScalarLoss : Error {
    explicit NonScalarLoss(const std::string& msg) : Error("non-scalar loss: " + msg) {}
};

struct NonFiniteValue : Error {
    explicit NonFiniteValue(const std::string& msg) : Error("non-finite value: " + msg) {}
};

struct NonFiniteGradient : Error {
    explicit NonFiniteGradient(const std::string& msg) : Error("non-finite gradient: " + msg) {}
};

struct TooFewSamples : Error {
    explicit TooFewSamples(const std::string& msg) : Error("too few samples: " + msg) {}
};

struct BadGroupSize : Error {
    explicit BadGroupSize(const std::string& msg) : Error("bad group size: " + msg) {}
};

struct EmptyMatrix : Error {
    explicit EmptyMatrix(const std::string& msg) : Error("empty matrix: " + msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

}  // namespace mlta
