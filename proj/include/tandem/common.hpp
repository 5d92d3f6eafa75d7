#pragma once

#include <stdexcept>
#include <string>

namespace tandem {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Filesystem and parsing failures (missing files, malformed CSV/JSON).
class IoError : public Error {
public:
    using Error::Error;
};

// Schema violations: unknown columns, kind mismatches, malformed sidecars.
class SchemaError : public Error {
public:
    using Error::Error;
};

// Structurally invalid operation specs or hyperparameter configurations.
class SpecError : public Error {
public:
    using Error::Error;
};

// Degenerate fits: zero-variance scaling targets, all-missing inputs, k out of range.
class FitError : public Error {
public:
    using Error::Error;
};

// Learner failures: empty feature matrices, single-class training splits.
class TrainError : public Error {
public:
    using Error::Error;
};

// Protocol misuse: exhausted budgets, uninitialized ranges, mismatched outcomes.
class StateError : public Error {
public:
    using Error::Error;
};

// Proposer failures that survive retries and have no fallback.
class ProposerError : public Error {
public:
    using Error::Error;
};

}  // namespace tandem
