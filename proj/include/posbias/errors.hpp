#pragma once

#include <stdexcept>
#include <string>

namespace posbias {

/// Base class for every toolkit error.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid design spec or tool configuration; the message names the offending field.
class ValidationError : public Error {
  using Error::Error;
};

/// Unknown template id / category label, out-of-range layer or head index, bad flags.
class ConfigError : public Error {
  using Error::Error;
};

/// Malformed or inconsistent data: non-finite logits, shape mismatches.
class DataError : public Error {
  using Error::Error;
};

/// The two candidate tickers share their first subword token; the trial cannot
/// be scored and must be excluded.
class AmbiguousCandidatesError : public DataError {
  using DataError::DataError;
};

/// The selected backend cannot serve the request (e.g. activation traces from a
/// remote endpoint).
class UnsupportedCapabilityError : public Error {
  using Error::Error;
};

/// The remote endpoint answered, but one or both candidate tokens were missing
/// from the returned top-k distribution.
class IncompleteLogitsError : public DataError {
  using DataError::DataError;
};

/// Transport-level failure that survived the retry budget.
class TransportError : public Error {
  using Error::Error;
};

/// An analysis cell is missing replications; the message lists absent trial ids.
class IncompleteCellError : public DataError {
  using DataError::DataError;
};

/// Appending a decision whose trial id is already present in the store.
class DuplicateTrialError : public Error {
  using Error::Error;
};

/// The cluster bootstrap needs at least two clusters.
class InsufficientClustersError : public Error {
  using Error::Error;
};

/// A pipeline stage was invoked before its prerequisite stage completed.
class StageError : public Error {
  using Error::Error;
};

/// An on-disk container (trace dump, weight file, store record) failed the
/// magic, version or schema check.
class ParseError : public DataError {
  using DataError::DataError;
};

}  // namespace posbias
