#pragma once

#include <stdexcept>
#include <string>

namespace radmap {

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// geometry
struct NonUnitDirection : Error { using Error::Error; };
struct OutOfRange : Error { using Error::Error; };

// physics
struct KinematicallyForbidden : Error { using Error::Error; };
struct OverlappingWindows : Error { using Error::Error; };
struct DegenerateLeverArm : Error { using Error::Error; };

// simulator
struct SourceInsideDetector : Error { using Error::Error; };

// reconstruction
struct AllRowsEmpty : Error { using Error::Error; };
struct ZeroDenominator : Error { using Error::Error; };

// localization
struct EmptyGrid : Error { using Error::Error; };
struct LabelMismatch : Error { using Error::Error; };
struct NoOkRows : Error { using Error::Error; };

// file parsing / cli
struct ParseError : Error { using Error::Error; };

// pipeline: artifacts in the output directory do not match the requested
// configuration, so a later stage refuses to reuse them
struct StaleArtifacts : Error { using Error::Error; };

}  // namespace radmap
