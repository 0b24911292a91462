#include "hbl/errors.hpp"

namespace hbl {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kContract: return "contract";
    case ErrorKind::kNumerical: return "numerical";
    case ErrorKind::kDynamics: return "dynamics";
    case ErrorKind::kRegime: return "regime";
    case ErrorKind::kStructure: return "structure";
    case ErrorKind::kOracleCap: return "oracle-cap";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kDimension:
    case ErrorKind::kDomain:
    case ErrorKind::kOracleCap:
    case ErrorKind::kIo:
      return kExitConfigError;
    default:
      return kExitNumericalFailure;
  }
}

}  // namespace hbl
