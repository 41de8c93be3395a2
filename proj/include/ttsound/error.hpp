#pragma once

#include <stdexcept>
#include <string>

namespace ttsound {

/// Broad failure category. The CLI maps these onto its exit codes.
enum class ErrorKind
{
  Input,   // bad arguments, missing files, parameter violations
  Data,    // malformed or inconsistent data, format errors
  Numeric, // NaN/Inf or other numeric breakdown
};

class Error : public std::runtime_error
{
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), mKind(kind)
  {}

  ErrorKind kind() const noexcept { return mKind; }

private:
  ErrorKind mKind;
};

#define TTSOUND_DEFINE_ERROR(Name, Kind)                                       \
  class Name : public Error                                                    \
  {                                                                            \
  public:                                                                      \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {}   \
  };

// audio_io
TTSOUND_DEFINE_ERROR(FormatError, Data)
TTSOUND_DEFINE_ERROR(UnsupportedError, Data)
TTSOUND_DEFINE_ERROR(EmptyError, Data)
TTSOUND_DEFINE_ERROR(ValidationError, Data)
TTSOUND_DEFINE_ERROR(DanglingReferenceError, Input)
TTSOUND_DEFINE_ERROR(IoError, Input)
TTSOUND_DEFINE_ERROR(DegenerateError, Data)

// detect / features
TTSOUND_DEFINE_ERROR(ParameterError, Input)
TTSOUND_DEFINE_ERROR(LengthError, Input)
TTSOUND_DEFINE_ERROR(ProtocolError, Input)
TTSOUND_DEFINE_ERROR(DesignError, Input)

// classify / eval
TTSOUND_DEFINE_ERROR(ShapeError, Input)
TTSOUND_DEFINE_ERROR(BatchError, Input)
TTSOUND_DEFINE_ERROR(NumericError, Numeric)
TTSOUND_DEFINE_ERROR(DataError, Data)
TTSOUND_DEFINE_ERROR(StratificationError, Data)
TTSOUND_DEFINE_ERROR(MissingLabelsError, Input) // task has no usable labels in the input

#undef TTSOUND_DEFINE_ERROR

} // namespace ttsound
