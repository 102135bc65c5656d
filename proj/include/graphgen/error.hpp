#pragma once

#include <stdexcept>
#include <string>

namespace graphgen {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IngestError : Error {
  using Error::Error;
};

// Caller broke a documented precondition.
struct ContractError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

// Non-retryable HTTP failure.
struct RequestError : Error {
  RequestError(int status_code, std::string response_body)
      : Error("request failed with HTTP " + std::to_string(status_code) + ": " + response_body),
        status(status_code),
        body(std::move(response_body)) {}
  int status;
  std::string body;
};

// 429, 5xx, timeouts and dropped connections.  Status 0 means no HTTP
// response was received.
struct TransientError : Error {
  TransientError(int status_code, const std::string& what) : Error(what), status(status_code) {}
  int status;
};

// Retry budget exhausted.
struct TimeoutError : Error {
  using Error::Error;
};

// Response could not be decoded.
struct ProtocolError : Error {
  using Error::Error;
};

struct CassetteMiss : Error {
  using Error::Error;
};

struct ExtractionError : Error {
  ExtractionError(const std::string& what, std::string raw)
      : Error(what), raw_response(std::move(raw)) {}
  std::string raw_response;
};

struct ProbeError : Error {
  using Error::Error;
};

struct LoadError : Error {
  using Error::Error;
};

}  // namespace graphgen
