#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedcvar {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Non-finite value encountered where the math guarantees a finite one.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class PartitionError : public Error {
 public:
  using Error::Error;
};

class InvalidDistribution : public Error {
 public:
  using Error::Error;
};

/// Local training produced non-finite parameters.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t round, std::size_t user, std::size_t epoch)
      : Error("training diverged at round " + std::to_string(round) + ", user " +
              std::to_string(user) + ", epoch " + std::to_string(epoch)),
        round_(round), user_(user), epoch_(epoch) {}
  std::size_t round() const noexcept { return round_; }
  std::size_t user() const noexcept { return user_; }
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t round_, user_, epoch_;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : Error("config key '" + key + "': " + what), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace fedcvar
