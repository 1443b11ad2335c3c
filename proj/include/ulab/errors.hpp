#pragma once

#include <stdexcept>
#include <string>

namespace ulab {

/// Shape or dimension mismatch between operands.
class shape_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Violated call contract (bad argument range, non-scalar root, ...).
class contract_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Arithmetic failure: division by exact zero, sqrt of a negative,
/// non-finite values where finiteness is required.
class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Degenerate input: empty batch, zero extent, zero fan-in.
class degenerate_input_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Instance exceeds a hard size guard.
class capacity_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed file: bad magic, truncation, unknown config key, type error.
class format_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A required optional input was not supplied.
class missing_data_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Training produced a non-finite objective.
class diverged_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Standardized moment requested for a (near-)constant sample.
class undefined_moment_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ulab
