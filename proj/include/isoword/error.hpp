#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace isoword {

enum class ErrorCode {
  // audio
  NotWav,
  UnsupportedFormat,
  Truncated,
  EmptyBuffer,
  IoError,
  UnknownSyntheticKeyword,
  // frontend
  EmptyInput,
  InsufficientSamples,
  BadLength,
  LagTooLarge,
  ZeroEnergy,
  NoSpeech,
  // quantizer / ann
  TooFewVectors,
  BadSize,
  DimMismatch,
  MissingClass,
  // hmm
  SymbolOutOfRange,
  ImpossibleSequence,
  EmptyTrainingSet,
  // recognizer
  InsufficientExamples,
  InsufficientSpeakers,
  EmptyVocabulary,
  VersionMismatch,
  CorruptModel,
  // retrieval
  EmptyKeyword,
  DuplicateId,
  InvalidPictureRecord,
  CorruptStore,
  // shared
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so that
// callers (the CLI in particular) can map faults onto exit codes and messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

}  // namespace isoword
