#pragma once

#include <stdexcept>
#include <string>

namespace legalrag {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition.
class ContractError : public Error {
public:
  using Error::Error;
};

/// Invalid or inconsistent configuration (unknown key, dimension mismatch, ...).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Hard ingest failure (the corpus directory itself is unusable).
class IngestError : public Error {
public:
  using Error::Error;
};

/// Index file could not be loaded. `what()` names the failure.
class IndexLoadError : public Error {
public:
  using Error::Error;
};

/// Embedding or generation server could not be reached or kept failing.
class GatewayError : public Error {
public:
  GatewayError(const std::string& msg, bool retryable)
      : Error(msg), retryable_(retryable) {}
  bool retryable() const noexcept { return retryable_; }

private:
  bool retryable_;
};

/// The server answered, but not in the expected wire format.
class ProtocolError : public GatewayError {
public:
  explicit ProtocolError(const std::string& msg) : GatewayError(msg, false) {}
};

/// Malformed evaluation input (dataset line, CSV row, ...).
class DatasetError : public Error {
public:
  using Error::Error;
};

} // namespace legalrag
