#pragma once

#include <stdexcept>
#include <string>

namespace elsa {

// Error taxonomy. The CLI maps these onto process exit codes:
// config/usage -> 1, data -> 2, infeasibility -> 3, integrity -> 4.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or size disagreement between tensors, layers, or batches.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Non-finite value produced where the engine guarantees finiteness.
class NumericError : public Error {
public:
    using Error::Error;
};

// Malformed configuration file or bad command usage.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed or empty dataset input.
class DataError : public Error {
public:
    using Error::Error;
};

// A sparsity target that cannot be met given the frozen set.
class InfeasibleError : public Error {
public:
    using Error::Error;
};

// An operation precondition was violated by the caller (e.g. stamping a
// zero word, keepset missing a frozen index).
class ContractError : public Error {
public:
    using Error::Error;
};

// Checksum, digest, or structural corruption in a stored model.
class IntegrityError : public Error {
public:
    using Error::Error;
};

// Filesystem-level failure.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace elsa
