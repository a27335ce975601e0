#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace agf {

// Base for every error raised by the toolkit. Subclasses map onto the CLI exit
// code families (usage, config, dependency, runtime).
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
  public:
    using Error::Error;
};

class InputError : public Error {
  public:
    using Error::Error;
};

// Misuse of the autodiff trace (non-scalar root, stale trace, ...).
class ContractError : public Error {
  public:
    using Error::Error;
};

class SpecError : public Error {
  public:
    using Error::Error;
};

class SpecMismatchError : public SpecError {
  public:
    using SpecError::SpecError;
};

class UnsupportedTopologyError : public SpecError {
  public:
    using SpecError::SpecError;
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

class DependencyError : public Error {
  public:
    using Error::Error;
};

class TrainingError : public Error {
  public:
    TrainingError(const std::string& what, std::size_t epoch)
        : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
    std::size_t epoch() const noexcept { return epoch_; }

  private:
    std::size_t epoch_;
};

class IoError : public Error {
  public:
    using Error::Error;
};

// Malformed file content. `location` is a byte offset for binary formats and a
// 1-based line number for text formats.
class FormatError : public Error {
  public:
    enum class Unit { Byte, Line };

    FormatError(const std::string& what, std::size_t location, Unit unit = Unit::Byte)
        : Error(what + (unit == Unit::Byte ? " at byte offset " : " at line ") +
                std::to_string(location)),
          location_(location),
          unit_(unit) {}

    std::size_t location() const noexcept { return location_; }
    Unit unit() const noexcept { return unit_; }

  private:
    std::size_t location_;
    Unit unit_;
};

}  // namespace agf
