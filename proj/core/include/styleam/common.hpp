#pragma once

#include <cstdint>
#include <iostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace styleam {

// Error taxonomy shared across the library. CLI maps these onto exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid hyperparameter, model/architecture mismatch, bad config file.
struct ConfigError : Error {
    using Error::Error;
};

// Bad runtime input values (out-of-range lambda, empty batch, ...).
struct InputError : Error {
    using Error::Error;
};

// Tensor shape / dimensionality mismatch.
struct ShapeError : InputError {
    using InputError::InputError;
};

// File system or parse failures; message carries path context.
struct IoError : Error {
    using Error::Error;
};

// Correlation undefined (too few samples, zero variance); carries a diagnostic.
struct MetricError : Error {
    using Error::Error;
};

inline void log_warn(std::string_view msg) {
    std::cerr << "[warn] " << msg << "\n";
}

// FNV-1a, used for config digests and rng stream derivation.
inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace styleam
