#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace agdet {

enum class ErrorCode {
  EmptyCloud,
  NonFinite,
  InvalidArgument,
  NotEnoughPoints,
  DuplicateIndex,
  IndexOutOfRange,
  ShapeError,
  RotatedBoxUnsupported,
  PackingFailed,
  MissingAttention,
  // parse / io family
  MalformedHeader,
  VertexCountMismatch,
  ParseError,
  SchemaError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NotEnoughPoints: return "NotEnoughPoints";
    case ErrorCode::DuplicateIndex: return "DuplicateIndex";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::RotatedBoxUnsupported: return "RotatedBoxUnsupported";
    case ErrorCode::PackingFailed: return "PackingFailed";
    case ErrorCode::MissingAttention: return "MissingAttention";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::VertexCountMismatch: return "VertexCountMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// True for errors raised while reading or writing files.
constexpr bool is_io_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedHeader:
    case ErrorCode::VertexCountMismatch:
    case ErrorCode::ParseError:
    case ErrorCode::SchemaError:
    case ErrorCode::IoError:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Parse failure carrying the 1-based line number (0 when not line-oriented)
/// or a JSON pointer locating the offending value.
class ParseFailure : public Error {
 public:
  ParseFailure(ErrorCode code, std::size_t line, const std::string& what)
      : Error(code, "line " + std::to_string(line) + ": " + what), line_(line) {}
  ParseFailure(ErrorCode code, std::string pointer, const std::string& what)
      : Error(code, pointer + ": " + what), line_(0), pointer_(std::move(pointer)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::size_t line_;
  std::string pointer_;
};

}  // namespace agdet
