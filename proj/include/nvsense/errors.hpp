#pragma once

#include <stdexcept>
#include <string>

namespace nvsense {

// Base class for every error the toolkit throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad run configuration (missing file, malformed JSON, schema violation).
struct ConfigError : Error {
  using Error::Error;
};

// A domain invariant was violated by otherwise well-formed input.
struct ValidationError : Error {
  using Error::Error;
};

// Sequence text could not be tokenized; carries 1-based line/column.
struct ParseError : Error {
  ParseError(const std::string& what, int line_, int column_)
      : Error(what + " (line " + std::to_string(line_) + ", column " +
              std::to_string(column_) + ")"),
        line(line_),
        column(column_) {}
  int line;
  int column;
};

// Pulse events overlap or the echo timing is inconsistent.
struct InvalidTiming : ValidationError {
  using ValidationError::ValidationError;
};

// Static-field calibration: no sign assignment reproduces the measured
// frequencies within the configured residual threshold.
struct NoConsistentSignAssignment : Error {
  using Error::Error;
};

// Static-field calibration: measured frequencies straddle the zero-field
// splitting, so they do not all lie on one Zeeman branch.
struct InvalidBranch : Error {
  using Error::Error;
};

// The integrator would need more steps than the configured ceiling.
struct StepSizeUnderflow : Error {
  using Error::Error;
};

// A nonlinear fit failed to converge or produced non-finite values.
struct FitDiverged : Error {
  using Error::Error;
};

// A sensitivity denominator |dP/dB| is numerically zero (degenerate
// geometry, e.g. field orthogonal to every selected axis).
struct ZeroGradient : Error {
  using Error::Error;
};

// A vector amplitude estimate is statistically consistent with zero, so its
// sign (and direction) cannot be reported.
struct AmbiguousSign : Error {
  using Error::Error;
};

}  // namespace nvsense
