#pragma once

#include <stdexcept>
#include <string>

namespace mfg {

// Library code throws; the CLI maps exception types onto process exit codes
// so scripted callers can tell schema problems from data problems.
enum class ExitCode : int {
  ok = 0,
  failure = 1,
  usage = 2,
  io = 3,
  schema = 4,
  data = 5,
  compat = 6,
};

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unreadable or unwritable files.
struct IoError : Error {
  using Error::Error;
};

// Malformed input: bad JSON lines, wrong array arity, unparseable configs.
struct SchemaError : Error {
  using Error::Error;
};

// Structurally fine input that violates a precondition: empty datasets,
// single-class AUC, stratification with too few samples.
struct DataError : Error {
  using Error::Error;
};

// Checkpoint and dataset disagree (attribute width, class count, version).
struct CompatError : Error {
  using Error::Error;
};

// Input is not a PE image at all (missing MZ or PE\0\0 magic).
struct NotAPeError : SchemaError {
  using SchemaError::SchemaError;
};

}  // namespace mfg
