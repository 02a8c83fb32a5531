#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace restrav {

enum class ErrorCode {
    ConfigInvalid,
    SourceTooShort,
    DecodeFailure,
    BackendLoadFailure,
    ShapeMismatch,
    NonFiniteOutput,
    FormatError,
    ChecksumMismatch,
    TooFewFrames,
    EmptySignal,
    DegenerateData,
    LayoutMismatch,
    LengthMismatch,
    MissingGenerator,
    ManifestError,
    ProtocolViolation,
    UnpairedRecord,
    EmptySubset,
    TooFewSamples,
    IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

// Single exception type for the toolkit; callers branch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace restrav
