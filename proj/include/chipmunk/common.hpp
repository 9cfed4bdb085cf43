// Shared error types for the chipmunk-sim library.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace chipmunk {

// Base class for all simulator errors.
class SimError : public std::runtime_error {
 public:
  explicit SimError(const std::string& msg) : std::runtime_error(msg) {}
};

// Fixed-point format violations (mismatched fracs, NaN into quantize, ...).
class FormatError : public SimError {
 public:
  using SimError::SimError;
};

// Shape mismatches between vectors/matrices/layers.
class DimensionError : public SimError {
 public:
  using SimError::SimError;
};

// Weight-stream framing problems. `position` is the byte offset at which the
// stream was found short, long or malformed.
class LoadError : public SimError {
 public:
  LoadError(const std::string& msg, std::size_t position)
      : SimError(msg + " (byte position " + std::to_string(position) + ")"),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

// Configuration does not fit the tile SRAM / grid.
class CapacityError : public SimError {
 public:
  using SimError::SimError;
};

// Datapath phases driven out of order.
class SequenceError : public SimError {
 public:
  using SimError::SimError;
};

// Network file / weight file schema violations. `field` names the offending
// JSON field (or header field) when known.
class ParseError : public SimError {
 public:
  explicit ParseError(const std::string& msg, std::string field = "")
      : SimError(field.empty() ? msg : field + ": " + msg),
        field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace chipmunk
