#ifndef MIXER_ERROR_HPP_
#define MIXER_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace mixer {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand shapes do not satisfy an operation's contract.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A vector whose norm falls below the division guard (1e-12).
class DegenerateVectorError : public Error {
 public:
  using Error::Error;
};

// A class/modality label outside its declared range.
class LabelError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. backward on a non-scalar root.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed input file; message carries line/field diagnostics.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values encountered during training; message names the
// offending loss component.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A batch cannot be sampled (e.g. an identity missing one modality).
class SamplingError : public Error {
 public:
  using Error::Error;
};

// An evaluation protocol ended with zero usable queries.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace mixer

#endif  // MIXER_ERROR_HPP_
