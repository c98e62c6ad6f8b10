#pragma once

#include <stdexcept>
#include <string>

namespace podreach {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Violated numeric precondition or invariant (non-PD covariance, singular
// matrix, NaN mass, rejected fit).
struct NumericError : Error {
  using Error::Error;
};

// Invalid or unreadable configuration/model input.  Messages carry a
// JSON-path-style location, e.g. "$.solver.horizon: expected positive integer".
struct ConfigError : Error {
  using Error::Error;
};

// Policy file does not belong to the model it is being used with.
struct MismatchError : Error {
  using Error::Error;
};

// Structurally corrupt artifact (unparseable or truncated policy file).
struct DataError : Error {
  using Error::Error;
};

}  // namespace podreach
