#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace voxpix {

// Machine-parsable failure classes; the CLI prints these verbatim.
enum class ErrorKind {
  invalid_argument,
  non_watertight,
  degenerate,
  shape_mismatch,
  io,
  config_mismatch,
  non_finite,
  empty_reconstruction,
  budget,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::non_watertight: return "non_watertight";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::shape_mismatch: return "shape_mismatch";
    case ErrorKind::io: return "io";
    case ErrorKind::config_mismatch: return "config_mismatch";
    case ErrorKind::non_finite: return "non_finite";
    case ErrorKind::empty_reconstruction: return "empty_reconstruction";
    case ErrorKind::budget: return "budget";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace voxpix
