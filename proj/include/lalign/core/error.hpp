#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace lalign {

// All toolkit failures carry a stable machine-readable code ("NonSquare",
// "ManifestMismatch", ...) next to the human-readable message.
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& msg)
      : std::runtime_error(code + ": " + msg), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

[[noreturn]] inline void fail(std::string code, const std::string& msg) {
  throw Error(std::move(code), msg);
}

}  // namespace lalign
