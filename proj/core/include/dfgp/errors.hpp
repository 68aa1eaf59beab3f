#pragma once

#include <stdexcept>
#include <string>

namespace dfgp {

/// Operand shapes do not conform (elementwise mismatch, bad matmul dims,
/// out-of-range slice, gradient of the wrong size).
class ShapeError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// An operation produced a NaN or Inf. Non-finite values are rejected at the
/// op that created them instead of flowing into later computations.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// backward() was asked to run from a tensor that is not a result recorded on
/// the tape being replayed.
class TapeError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Cholesky failed for every jitter in the schedule.
class NotPositiveDefiniteError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Triangular solve hit a zero diagonal entry.
class SingularError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input row, duplicate key, or misaligned series while ingesting.
class ParseError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A series has a hole of more than one step in its hourly grid.
class GapError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A series is too short for the requested train window + horizon.
class LengthError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent run configuration (unknown key, bad value, empty
/// dataset handed to the trainer).
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Scalar argument outside its mathematical domain (quantile level outside
/// (0,1), negative variance, non-positive step size).
class DomainError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A metric normalizer is zero or the evaluation set is empty.
class DegenerateNormalizerError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Forecast requested for a series id the checkpoint was not trained on.
class UnknownSeriesError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace dfgp
