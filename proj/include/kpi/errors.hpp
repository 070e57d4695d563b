#pragma once

#include <stdexcept>
#include <string>

namespace kpi {

// Base for all pipeline errors; the CLI maps these to nonzero exits.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidInput : Error {
  using Error::Error;
};

struct EncoderUnavailable : Error {
  using Error::Error;
};

struct ExtractionUnavailable : Error {
  using Error::Error;
};

struct UnknownDisease : Error {
  using Error::Error;
};

struct UnknownCategory : Error {
  using Error::Error;
};

struct DegenerateEmbedding : Error {
  using Error::Error;
};

struct InvalidGraph : Error {
  using Error::Error;
};

struct InvalidRanking : Error {
  using Error::Error;
};

struct DivergenceAbort : Error {
  DivergenceAbort(const std::string& what, long step_index)
      : Error(what), step(step_index) {}
  long step;
};

struct ConfigError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace kpi
