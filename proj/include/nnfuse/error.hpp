#pragma once

#include <stdexcept>
#include <string>

namespace nnfuse {

/// Failure categories. The CLI maps each one to a distinct exit code.
enum class ErrorKind {
  kIo,                  // missing or unreadable file
  kParse,               // malformed CSV / JSON / encoded artifact
  kSchema,              // invalid harmonization spec or population model
  kMapping,             // raw value with no harmonized category
  kData,                // value-level violation (negative count, missing y)
  kDimension,           // bit-vector length mismatch
  kDictionaryMismatch,  // datasets encoded with different dictionaries
  kMatch,               // matching preconditions (empty buckets, ...)
  kArgument,            // bad parameter value
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo: return "io";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kMapping: return "mapping";
    case ErrorKind::kData: return "data";
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kDictionaryMismatch: return "dictionary-mismatch";
    case ErrorKind::kMatch: return "match";
    case ErrorKind::kArgument: return "argument";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace nnfuse
