#pragma once

#include <stdexcept>
#include <string>

namespace ap {

// Error taxonomy shared across the toolkit. The C API maps kinds to status codes.
enum class ErrorKind {
  Dimension,   // tensor shape mismatch
  Domain,      // math op evaluated outside its domain (div by 0, log of <=0, ...)
  Contract,    // caller violated an API precondition
  Numeric,     // non-finite value where a finite one is required
  Schema,      // input file is missing a required column/field
  Data,        // input file content is inconsistent (non-monotone frames, too short, ...)
  Config,      // run/model configuration is invalid or incompatible
  Infeasible,  // state transition not realizable by the bicycle model
  Io,          // filesystem failure
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Data: return "data";
    case ErrorKind::Config: return "config";
    case ErrorKind::Infeasible: return "infeasible";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace ap
