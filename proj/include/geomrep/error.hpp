#pragma once

#include <stdexcept>
#include <string>

namespace geomrep {

enum class ErrorKind {
  kInvalidRotation,
  kBehindCamera,
  kDegenerateGeometry,
  kDegeneratePose,
  kDegenerateLatent,
  kConfig,
  kShapeMismatch,
  kFrameMismatch,
  kIo,
  kBadMagic,
  kNonFinite,
  kMissingInput,
  kDependencyOrder,
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
    case ErrorKind::kInvalidRotation: return "invalid rotation";
    case ErrorKind::kBehindCamera: return "behind camera";
    case ErrorKind::kDegenerateGeometry: return "degenerate geometry";
    case ErrorKind::kDegeneratePose: return "degenerate pose";
    case ErrorKind::kDegenerateLatent: return "degenerate latent";
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kShapeMismatch: return "shape mismatch";
    case ErrorKind::kFrameMismatch: return "frame mismatch";
    case ErrorKind::kIo: return "I/O error";
    case ErrorKind::kBadMagic: return "bad magic";
    case ErrorKind::kNonFinite: return "non-finite value";
    case ErrorKind::kMissingInput: return "missing input";
    case ErrorKind::kDependencyOrder: return "dependency order";
  }
  return "error";
}

}  // namespace geomrep
