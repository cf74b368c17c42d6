#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lexforge {

enum class ErrorCode {
    CorpusEmpty,
    VocabTooSmall,
    UnknownToken,
    ContextOverflow,
    ShapeError,
    DoubleBackward,
    NotScalar,
    NoTargets,
    EmptyOutputMask,
    NoData,
    StagePrecondition,
    ChecksumError,
    VersionError,
    EmptyField,
    ParseError,
    SchemaError,
    TooLong,
    UnknownMetric,
    BadReference,
    MissingInput,
    IoError,
    InvalidArgument,
};

std::string_view error_name(ErrorCode code);

// Every failure the library reports carries one of the codes above so callers
// (and the CLI exit-code table) can dispatch on the class of error.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace lexforge
