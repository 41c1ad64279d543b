#pragma once

#include <stdexcept>
#include <string>

namespace muze {

// Base type for all library failures. The concrete subtypes mirror the
// failure kinds individual operations can report, so callers (and the C API)
// can map them to stable error codes.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public Error {
public:
  using Error::Error;
};

// Invalid experiment/CLI configuration. The CLI maps this to exit code 2.
class ConfigError : public Error {
public:
  using Error::Error;
};

// --- data model ---
class DataError : public Error {
public:
  using Error::Error;
};
struct UnknownIdError : DataError { using DataError::DataError; };
struct DuplicateObjectIdError : DataError { using DataError::DataError; };
struct MalformedCellError : DataError { using DataError::DataError; };
struct UnknownAttributeError : DataError { using DataError::DataError; };
// A query attribute has no known value where a training target is required.
struct QueryAttributeUnknownError : DataError { using DataError::DataError; };

// --- encoders ---
class EncoderError : public Error {
public:
  using Error::Error;
};
struct EmptyTextError : EncoderError { using EncoderError::EncoderError; };
struct MissingImageError : EncoderError { using EncoderError::EncoderError; };

// --- numeric core / parsenet ---
struct ShapeError : Error { using Error::Error; };
struct SequenceTooLongError : Error { using Error::Error; };
struct ZeroNormError : Error { using Error::Error; };

// --- training ---
struct NoTrainableRecordsError : Error { using Error::Error; };
struct DivergedLossError : Error { using Error::Error; };

// --- evaluation ---
struct EmptyInputError : Error { using Error::Error; };
struct NoPositiveClassError : Error { using Error::Error; };
struct DegenerateCandidateSetError : Error { using Error::Error; };

// --- synthetic ---
struct CyclicDependencyError : Error { using Error::Error; };

// --- harness ---
struct IncompatibleRunsError : Error { using Error::Error; };

class StageFailedError : public Error {
public:
  StageFailedError(const std::string& stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

private:
  std::string stage_;
};

}  // namespace muze
