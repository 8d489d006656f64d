#pragma once

#include <stdexcept>
#include <string>

namespace traj {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or size mismatch between inputs.
struct DimensionError : Error {
    using Error::Error;
};

// A scalar argument is invalid (negative degree, non-positive scale, ...).
struct ArgumentError : Error {
    using Error::Error;
};

// A time or index falls outside the valid interval.
struct RangeError : Error {
    using Error::Error;
};

// Non-finite or otherwise unusable input data.
struct DataError : Error {
    using Error::Error;
};

// Numerically rank-deficient input where full rank is required.
struct DegeneracyError : Error {
    using Error::Error;
};

// A caller violated a documented interface contract (e.g. non-orthonormal basis).
struct ContractError : Error {
    using Error::Error;
};

// Inconsistent configuration (mismatched grids, impossible split, ...).
struct ConfigError : Error {
    using Error::Error;
};

// A stated operation precondition does not hold for the given data.
struct PreconditionError : Error {
    using Error::Error;
};

// Unknown row / subject requested.
struct IndexError : Error {
    using Error::Error;
};

// Singular or ill-conditioned design matrix.
struct RankError : Error {
    using Error::Error;
};

// An almost-surely-invertible factor turned out numerically singular.
struct SingularityError : Error {
    using Error::Error;
};

// Malformed input file; message carries the line number.
struct ParseError : Error {
    using Error::Error;
};

}  // namespace traj
