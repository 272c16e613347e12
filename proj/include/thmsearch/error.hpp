#pragma once

#include <stdexcept>
#include <string>

namespace thmsearch {

// Exit-code classes shared by the CLI; values are a stable scripting contract.
enum class ErrorClass : int { usage = 1, data = 2, provider = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const noexcept { return cls_; }

 private:
  ErrorClass cls_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorClass::usage, what) {}
};

// Malformed, inconsistent or stale artifacts.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorClass::data, what) {}
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

// Transport or protocol failure talking to a remote generation/embedding service.
class ProviderError : public Error {
 public:
  explicit ProviderError(const std::string& what, bool transient = true)
      : Error(ErrorClass::provider, what), transient_(transient) {}
  bool transient() const noexcept { return transient_; }

 private:
  bool transient_;
};

class ProviderTimeout : public ProviderError {
 public:
  explicit ProviderTimeout(const std::string& what) : ProviderError(what, true) {}
};

}  // namespace thmsearch
