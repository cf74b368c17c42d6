#include "lexforge/errors.hpp"

namespace lexforge {

std::string_view error_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::CorpusEmpty: return "CorpusEmpty";
        case ErrorCode::VocabTooSmall: return "VocabTooSmall";
        case ErrorCode::UnknownToken: return "UnknownToken";
        case ErrorCode::ContextOverflow: return "ContextOverflow";
        case ErrorCode::ShapeError: return "ShapeError";
        case ErrorCode::DoubleBackward: return "DoubleBackward";
        case ErrorCode::NotScalar: return "NotScalar";
        case ErrorCode::NoTargets: return "NoTargets";
        case ErrorCode::EmptyOutputMask: return "EmptyOutputMask";
        case ErrorCode::NoData: return "NoData";
        case ErrorCode::StagePrecondition: return "StagePreconditionError";
        case ErrorCode::ChecksumError: return "ChecksumError";
        case ErrorCode::VersionError: return "VersionError";
        case ErrorCode::EmptyField: return "EmptyField";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::SchemaError: return "SchemaError";
        case ErrorCode::TooLong: return "TooLong";
        case ErrorCode::UnknownMetric: return "UnknownMetric";
        case ErrorCode::BadReference: return "BadReference";
        case ErrorCode::MissingInput: return "MissingInput";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Error";
}

}  // namespace lexforge
