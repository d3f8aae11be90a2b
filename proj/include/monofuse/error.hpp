#pragma once

#include <stdexcept>
#include <string>

namespace monofuse {

enum class Errc {
  FileNotFound,
  MalformedHeader,
  UnsupportedBitDepth,
  BadMagic,
  TruncatedPayload,
  DimensionOverflow,
  Io,
  ZeroVariance,
  DimensionMismatch,
  InvalidArgument,
  SingularSystem,
  InputTooLarge,
  ShapeMismatch,
  NonFinite,
  EmptyDataset,
  ArchitectureMismatch,
  Config,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace monofuse
