#pragma once

#include <stdexcept>
#include <string>

namespace terranav {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Plane fit has no unique solution (fewer than 3 points, or the point set
/// is collinear/coincident). Signals insufficient ground evidence.
class DegenerateFitError : public Error {
 public:
  explicit DegenerateFitError(const std::string& what) : Error(what) {}
};

/// An operation that requires at least one point received an empty cloud.
class EmptyCloudError : public Error {
 public:
  explicit EmptyCloudError(const std::string& what) : Error(what) {}
};

/// Scan timestamps regressed; indicates a driver or simulator bug upstream.
class StaleScanError : public Error {
 public:
  explicit StaleScanError(const std::string& what) : Error(what) {}
};

/// A normal with non-positive z cannot be decomposed into roll/pitch.
class InvalidNormalError : public Error {
 public:
  explicit InvalidNormalError(const std::string& what) : Error(what) {}
};

/// A check that requires a settled pose was given a non-settled one.
class NotSettledError : public Error {
 public:
  explicit NotSettledError(const std::string& what) : Error(what) {}
};

/// Terrain spec contains contradictory features (e.g. a wall inside a hole).
class InvalidSpecError : public Error {
 public:
  explicit InvalidSpecError(const std::string& what) : Error(what) {}
};

/// Scenario configuration error; the message carries the offending field path.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

/// Run artifacts are incomplete or inconsistent and cannot be replayed.
class CorruptArtifactError : public Error {
 public:
  explicit CorruptArtifactError(const std::string& what) : Error(what) {}
};

}  // namespace terranav
