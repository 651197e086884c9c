#pragma once

#include <stdexcept>
#include <string>

namespace alo {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
   public:
    using Error::Error;
};

/// Non-finite or out-of-domain numeric value.
class NumericError : public Error {
   public:
    using Error::Error;
};

/// API used outside of its contract (e.g. backward on a non-scalar).
class ContractError : public Error {
   public:
    using Error::Error;
};

class ConfigError : public Error {
   public:
    using Error::Error;
};

/// Sample data violates a precondition (label out of range, bad span...).
class DataError : public Error {
   public:
    using Error::Error;
};

class DomainError : public Error {
   public:
    using Error::Error;
};

/// Malformed serialized input. `line()` is 1-based, 0 when unknown.
class ParseError : public Error {
   public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

   private:
    std::size_t line_;
};

/// A training run diverged or otherwise failed.
class RunError : public Error {
   public:
    using Error::Error;
};

}  // namespace alo
