#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <variant>

namespace rlver {

/// Root of every error the toolkit raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller violated an operation's precondition.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration, missing template slot, bad scenario file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The simulator could not produce a usable judgment; the episode is dropped.
class EpisodeAbort : public Error {
 public:
  using Error::Error;
};

/// A batch was built by a different policy snapshot than the one being updated.
class StaleBatch : public Error {
 public:
  using Error::Error;
};

class TransportFailure : public Error {
 public:
  using Error::Error;
};

class PermanentFailure : public Error {
 public:
  PermanentFailure(const std::string& what, int status) : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

/// Replay mode was asked for a request that is not in the cache.
class ReplayMiss : public Error {
 public:
  using Error::Error;
};

class CacheCorrupt : public Error {
 public:
  using Error::Error;
};

/// Exception form of a parse failure, for paths that must unwind.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Result of feeding unstructured text to a parser that could not extract a value.
struct ParseFailure {
  std::string reason;
  std::string raw;
};

/// Value-or-ParseFailure. Parsers return this instead of throwing.
template <typename T>
class Parsed {
 public:
  Parsed(T value) : state_(std::move(value)) {}  // NOLINT(google-explicit-constructor)
  Parsed(ParseFailure failure) : state_(std::move(failure)) {}  // NOLINT(google-explicit-constructor)

  bool ok() const noexcept { return std::holds_alternative<T>(state_); }
  explicit operator bool() const noexcept { return ok(); }

  const T& value() const& {
    if (!ok()) throw UsageError("Parsed::value() on failure: " + failure().reason);
    return std::get<T>(state_);
  }
  T&& value() && {
    if (!ok()) throw UsageError("Parsed::value() on failure: " + failure().reason);
    return std::get<T>(std::move(state_));
  }
  const T* operator->() const { return &value(); }
  const T& operator*() const& { return value(); }

  const ParseFailure& failure() const { return std::get<ParseFailure>(state_); }

 private:
  std::variant<T, ParseFailure> state_;
};

}  // namespace rlver
