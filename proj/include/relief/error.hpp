#ifndef RELIEF_ERROR_HPP_
#define RELIEF_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace relief {

// Mirrors the status codes of the C API (see relief/relief_swarm.h).
enum class ErrorCode {
  InvalidArgument = 1,
  Io = 2,
  Parse = 3,
  Precondition = 4,
  MaskedAction = 5,
  Dimension = 6,
  Config = 7,
  TooLarge = 8,
  Numeric = 9,
  UndefinedRate = 10,
  Generation = 11,
  SchemaVersion = 12,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

const char* error_code_name(ErrorCode code) noexcept;

}  // namespace relief

#endif  // RELIEF_ERROR_HPP_
