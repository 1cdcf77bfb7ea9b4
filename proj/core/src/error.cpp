// SPDX-License-Identifier: MIT
#include "segplan/error.hpp"

namespace segplan {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::UnsupportedDatatype: return "UnsupportedDatatype";
        case ErrorCode::UnsupportedLayout: return "UnsupportedLayout";
        case ErrorCode::TruncatedFile: return "TruncatedFile";
        case ErrorCode::GeometryMismatch: return "GeometryMismatch";
        case ErrorCode::MissingChannel: return "MissingChannel";
        case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::NoLabel: return "NoLabel";
        case ErrorCode::InconsistentChannels: return "InconsistentChannels";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::MissingStats: return "MissingStats";
        case ErrorCode::BudgetTooSmall: return "BudgetTooSmall";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::TooFewResolutions: return "TooFewResolutions";
        case ErrorCode::DegenerateTarget: return "DegenerateTarget";
        case ErrorCode::ZeroVariance: return "ZeroVariance";
        case ErrorCode::MarginTooSmall: return "MarginTooSmall";
        case ErrorCode::NotOneHot: return "NotOneHot";
        case ErrorCode::PatchLargerThanVolume: return "PatchLargerThanVolume";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::TooFewGroups: return "TooFewGroups";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

int exit_code(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::BadMagic:
        case ErrorCode::UnsupportedDatatype:
        case ErrorCode::UnsupportedLayout:
        case ErrorCode::TruncatedFile:
        case ErrorCode::MissingChannel:
        case ErrorCode::IoFailure:
            return 3;
        case ErrorCode::NoConvergence:
        case ErrorCode::BudgetTooSmall:
            return 4;
        default:
            return 2;
    }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace segplan
