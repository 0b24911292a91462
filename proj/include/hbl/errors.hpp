#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hbl {

enum class ErrorKind {
  kConfig,
  kDimension,
  kDomain,
  kContract,
  kNumerical,
  kDynamics,
  kRegime,
  kStructure,
  kOracleCap,
  kIo,
};

std::string_view to_string(ErrorKind kind);

/// Base class for every error raised by the library. Each error carries a
/// kind so the CLI can map it onto an exit code without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define HBL_DEFINE_ERROR(Name, Kind)                                    \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

HBL_DEFINE_ERROR(ConfigError, kConfig)
HBL_DEFINE_ERROR(DimensionError, kDimension)
HBL_DEFINE_ERROR(DomainError, kDomain)
HBL_DEFINE_ERROR(ContractViolation, kContract)
HBL_DEFINE_ERROR(NumericalFailure, kNumerical)
HBL_DEFINE_ERROR(DynamicsFailure, kDynamics)
HBL_DEFINE_ERROR(RegimeViolation, kRegime)
HBL_DEFINE_ERROR(StructureError, kStructure)
HBL_DEFINE_ERROR(OracleCapError, kOracleCap)
HBL_DEFINE_ERROR(IoError, kIo)

#undef HBL_DEFINE_ERROR

// Process exit codes used by the CLI.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailure = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitNumericalFailure = 3;

int exit_code_for(ErrorKind kind);

}  // namespace hbl
