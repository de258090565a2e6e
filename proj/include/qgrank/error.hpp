#pragma once

#include <stdexcept>
#include <string>

namespace qgrank {

/// Malformed or inconsistent input data (bad files, degenerate arguments,
/// trace or oracle misses). Maps to exit code 2 in the CLI.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Arguments outside their valid domain, e.g. both words empty.
class DegenerateInput : public DataError {
public:
  using DataError::DataError;
};

/// Out-of-range configuration values.
class ConfigError : public DataError {
public:
  using DataError::DataError;
};

/// A decoder step was requested for a prefix the recorded trace never saw.
class TraceMiss : public DataError {
public:
  using DataError::DataError;
};

/// A replayed QA oracle has no prediction for the requested question.
class OracleMiss : public DataError {
public:
  using DataError::DataError;
};

/// Something that cannot happen on valid input did. Exit code 3.
class InvariantError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

} // namespace qgrank
