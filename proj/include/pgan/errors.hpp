#pragma once

#include <stdexcept>
#include <string>

namespace pgan {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shapes disagree with an operation's contract.
struct ShapeError : Error {
    using Error::Error;
};

// A value is outside its allowed domain (bad score, bad manifest line, ...).
struct ValidationError : Error {
    using Error::Error;
};

// An API precondition was violated (non-scalar loss, missing class, ...).
struct ContractError : Error {
    using Error::Error;
};

// Gradients contain NaN/Inf; the optimizer refuses to apply them.
struct GradientError : Error {
    using Error::Error;
};

// Batch norm asked to normalize over fewer than two values.
struct DegenerateBatchError : Error {
    using Error::Error;
};

// Filesystem / file-format failures.
struct IoError : Error {
    using Error::Error;
};

// Checkpoint-file failures, one type per failure mode.
struct CheckpointError : IoError {
    using IoError::IoError;
};
struct BadMagicError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct VersionError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct TruncatedError : CheckpointError {
    using CheckpointError::CheckpointError;
};

}  // namespace pgan
