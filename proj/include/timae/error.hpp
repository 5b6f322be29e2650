#pragma once

#include <stdexcept>
#include <string>

namespace timae {

/// Base class for every error raised by the library. `kind()` is a stable
/// short tag used by the CLI to pick exit codes and by tests to match.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + " error: " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define TIMAE_DEFINE_ERROR(Name, tag) \
  class Name : public Error {         \
   public:                            \
    explicit Name(const std::string& what) : Error(tag, what) {} \
  };

TIMAE_DEFINE_ERROR(DimensionError, "dimension")
TIMAE_DEFINE_ERROR(IndexError, "index")
TIMAE_DEFINE_ERROR(NumericError, "numeric")
TIMAE_DEFINE_ERROR(ParameterError, "parameter")
TIMAE_DEFINE_ERROR(ContractError, "contract")
TIMAE_DEFINE_ERROR(ConfigError, "configuration")
TIMAE_DEFINE_ERROR(ParseError, "parse")
TIMAE_DEFINE_ERROR(FormatError, "format")
TIMAE_DEFINE_ERROR(VersionError, "version")
TIMAE_DEFINE_ERROR(IoError, "io")
TIMAE_DEFINE_ERROR(InvariantError, "invariant")
TIMAE_DEFINE_ERROR(SolverError, "solver")

#undef TIMAE_DEFINE_ERROR

}  // namespace timae
