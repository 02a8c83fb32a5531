#include "restrav/error.hpp"

namespace restrav {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::SourceTooShort: return "SourceTooShort";
    case ErrorCode::DecodeFailure: return "DecodeFailure";
    case ErrorCode::BackendLoadFailure: return "BackendLoadFailure";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteOutput: return "NonFiniteOutput";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::TooFewFrames: return "TooFewFrames";
    case ErrorCode::EmptySignal: return "EmptySignal";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::MissingGenerator: return "MissingGenerator";
    case ErrorCode::ManifestError: return "ManifestError";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::UnpairedRecord: return "UnpairedRecord";
    case ErrorCode::EmptySubset: return "EmptySubset";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

}  // namespace restrav
