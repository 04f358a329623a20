#pragma once

#include <stdexcept>
#include <string>

namespace inamp {

/// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- tensor core ---
struct InvalidShape : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct BroadcastError : Error { using Error::Error; };
struct InvalidAxis : Error { using Error::Error; };
struct NotScalar : Error { using Error::Error; };
struct DisconnectedGraph : Error { using Error::Error; };
struct InvalidEps : Error { using Error::Error; };
struct NonFiniteValue : Error { using Error::Error; };

// --- nn ops ---
struct ChannelMismatch : Error { using Error::Error; };
struct SpatialUnderflow : Error { using Error::Error; };
struct OddSpatialDim : Error { using Error::Error; };
struct LabelOutOfRange : Error { using Error::Error; };
struct InvalidLr : Error { using Error::Error; };

// --- attention / amplification ---
struct SpatialMismatch : Error { using Error::Error; };
struct ReductionUnderflow : Error { using Error::Error; };
struct IndexOutOfRange : Error { using Error::Error; };

// --- data & formats ---
struct IoError : Error { using Error::Error; };
struct BadMagic : Error { using Error::Error; };
struct UnsupportedVersion : Error { using Error::Error; };
struct TruncatedFile : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct EmptyManifest : Error { using Error::Error; };
struct MissingBand : Error { using Error::Error; };
struct RangeError : Error { using Error::Error; };

// --- metrics ---
struct EmptyInput : Error { using Error::Error; };
struct EmptyMatrix : Error { using Error::Error; };
struct DegenerateMarginals : Error { using Error::Error; };
struct NoTargetSamples : Error { using Error::Error; };

// --- harness ---
struct EmptySplit : Error { using Error::Error; };
struct Divergence : Error { using Error::Error; };

}  // namespace inamp
