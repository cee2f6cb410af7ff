#pragma once

#include <stdexcept>
#include <string>

namespace topo {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Geodesic inverse iteration hit the cap (near-antipodal input).
struct NonConvergenceError : Error {
    NonConvergenceError(const std::string& msg, int pair_i = -1, int pair_j = -1)
        : Error(msg), i(pair_i), j(pair_j) {}
    int i;
    int j;
};

struct ShapeMismatchError : Error {
    using Error::Error;
};

struct DegenerateScaleError : Error {
    using Error::Error;
};

struct EmptyDiagramError : Error {
    using Error::Error;
};

struct InputTooLargeError : Error {
    using Error::Error;
};

struct NotScalarError : Error {
    using Error::Error;
};

struct SeriesTooShortError : Error {
    using Error::Error;
};

struct WindowTooShortError : Error {
    using Error::Error;
};

struct WrongAggregatorError : Error {
    using Error::Error;
};

struct EmptyEnsembleError : Error {
    using Error::Error;
};

struct TooFewEventsError : Error {
    using Error::Error;
};

// Training loss became non-finite; carries the epoch where it happened.
struct DivergenceError : Error {
    DivergenceError(const std::string& msg, int at_epoch) : Error(msg), epoch(at_epoch) {}
    int epoch;
};

// Malformed or inconsistent input files (CLI exit code 2).
struct DataError : Error {
    using Error::Error;
};

// Bad flags or arguments (CLI exit code 1).
struct UsageError : Error {
    using Error::Error;
};

}  // namespace topo
