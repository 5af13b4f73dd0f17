#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ovp {

enum class ErrorCode {
  InvalidCode,
  InvalidConfig,
  IdentifierCode,
  DisabledCode,
  CorruptPair,
  NonFiniteInput,
  EmptyTensor,
  BadHeader,
  BadMagic,
  UnsupportedVersion,
  TruncatedPayload,
  ShapeMismatch,
  AccOverflow,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidCode: return "InvalidCode";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IdentifierCode: return "IdentifierCode";
    case ErrorCode::DisabledCode: return "DisabledCode";
    case ErrorCode::CorruptPair: return "CorruptPair";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::EmptyTensor: return "EmptyTensor";
    case ErrorCode::BadHeader: return "BadHeader";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::AccOverflow: return "AccOverflow";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

// All library failures surface as this exception. `index` is the flattened
// element index (codec) or reduction lane (compute) when one applies.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what,
        std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        index_(index) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> index_;
};

}  // namespace ovp
