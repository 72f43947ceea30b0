#pragma once

#include <stdexcept>
#include <string>

namespace stylealign {

// Runtime failures (I/O, malformed input files) map to CLI exit code 1;
// ConfigError maps to exit code 2 together with usage errors.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
  public:
    using Error::Error;
};

// A caller violated an operation's precondition.
class ContractError : public Error {
  public:
    using Error::Error;
};

class RangeError : public Error {
  public:
    using Error::Error;
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

class ParseError : public Error {
  public:
    using Error::Error;
};

class SchemaError : public Error {
  public:
    using Error::Error;
};

// Malformed model input, e.g. a token id outside the vocabulary.
class InputError : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

}    // namespace stylealign
