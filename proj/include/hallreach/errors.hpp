#pragma once

#include <stdexcept>
#include <string>

namespace hallreach {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration values or malformed configuration files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A position that is not inside the hallway corridor (a crash state).
class OutOfTrackError : public Error {
 public:
  using Error::Error;
};

/// The flow enclosure could not find an a-priori bounding box.
class EnclosureFailure : public Error {
 public:
  using Error::Error;
};

/// Controller / scan / ray-count dimension mismatch.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

/// Interval operation outside its mathematical domain (e.g. division by an
/// interval containing zero).
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace hallreach
