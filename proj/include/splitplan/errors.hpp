// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace splitplan {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Convolution/pooling geometry that cannot produce a positive output dim.
class GeometryError : public Error {
 public:
  using Error::Error;
};

// Graph-structure violations: bad DAG, Add shape mismatch, missing markers.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Unknown model names, unsupported variants, bad builder preconditions.
class CatalogError : public Error {
 public:
  using Error::Error;
};

// Device-profile problems: unknown node ids, non-positive totals.
class ProfileError : public Error {
 public:
  using Error::Error;
};

// Frame encoding precondition violations (payload length mismatch).
class FramingError : public Error {
 public:
  using Error::Error;
};

// Malformed frames: bad magic, bad version, bad field values.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Frame shorter than its own length fields claim.
class IncompleteFrameError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

// CRC mismatch on a received payload.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

// Transport failures in the emulated channel.
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed data files (profiles, graph descriptions, tradeoff CSV).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace splitplan
