#include "isoword/error.hpp"

namespace isoword {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotWav: return "NotWav";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::EmptyBuffer: return "EmptyBuffer";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::UnknownSyntheticKeyword: return "UnknownSyntheticKeyword";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::BadLength: return "BadLength";
    case ErrorCode::LagTooLarge: return "LagTooLarge";
    case ErrorCode::ZeroEnergy: return "ZeroEnergy";
    case ErrorCode::NoSpeech: return "NoSpeech";
    case ErrorCode::TooFewVectors: return "TooFewVectors";
    case ErrorCode::BadSize: return "BadSize";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::MissingClass: return "MissingClass";
    case ErrorCode::SymbolOutOfRange: return "SymbolOutOfRange";
    case ErrorCode::ImpossibleSequence: return "ImpossibleSequence";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::InsufficientExamples: return "InsufficientExamples";
    case ErrorCode::InsufficientSpeakers: return "InsufficientSpeakers";
    case ErrorCode::EmptyVocabulary: return "EmptyVocabulary";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptModel: return "CorruptModel";
    case ErrorCode::EmptyKeyword: return "EmptyKeyword";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::InvalidPictureRecord: return "InvalidPictureRecord";
    case ErrorCode::CorruptStore: return "CorruptStore";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace isoword
