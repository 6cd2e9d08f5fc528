#pragma once

#include <stdexcept>
#include <string>

namespace drgrade {

enum class ErrorKind {
  InvalidArgument,
  ShapeMismatch,
  NoContent,
  NonFinite,
  Io,
  Decode,
  Parse,
  BadMagic,
  UnsupportedVersion,
  ArchMismatch,
  Truncated,
  State,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::ShapeMismatch: return "shape mismatch";
    case ErrorKind::NoContent: return "no content";
    case ErrorKind::NonFinite: return "non-finite value";
    case ErrorKind::Io: return "i/o error";
    case ErrorKind::Decode: return "decode error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::BadMagic: return "bad magic";
    case ErrorKind::UnsupportedVersion: return "unsupported version";
    case ErrorKind::ArchMismatch: return "architecture mismatch";
    case ErrorKind::Truncated: return "truncated file";
    case ErrorKind::State: return "invalid state";
  }
  return "error";
}

#define DRGRADE_REQUIRE(cond, kind, msg)               \
  do {                                                 \
    if (!(cond)) throw ::drgrade::Error((kind), (msg)); \
  } while (0)

}  // namespace drgrade
