// SPDX-License-Identifier: MIT
#pragma once

#include <stdexcept>
#include <string>

namespace segplan {

/// Failure categories raised by the library.
enum class ErrorCode {
    BadMagic,
    UnsupportedDatatype,
    UnsupportedLayout,
    TruncatedFile,
    GeometryMismatch,
    MissingChannel,
    SchemaVersionMismatch,
    IoFailure,
    NoLabel,
    InconsistentChannels,
    EmptyInput,
    MissingStats,
    BudgetTooSmall,
    NoConvergence,
    TooFewResolutions,
    DegenerateTarget,
    ZeroVariance,
    MarginTooSmall,
    NotOneHot,
    PatchLargerThanVolume,
    ShapeMismatch,
    TooFewGroups,
    InvalidArgument,
};

/// Stable identifier of an error code, e.g. "BadMagic".
const char* to_string(ErrorCode code) noexcept;

/// Process exit status for an error code: 2 validation, 3 I/O, 4 non-convergence.
int exit_code(ErrorCode code) noexcept;

/// Exception carrying an ErrorCode.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace segplan
