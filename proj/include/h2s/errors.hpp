#pragma once

#include <stdexcept>
#include <string>

namespace h2s {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// audio_ingest
struct MalformedWav : Error { using Error::Error; };
struct UnsupportedEncoding : Error { using Error::Error; };
struct TooShort : Error { using Error::Error; };
struct SilentClip : Error { using Error::Error; };

// spectrogram
struct ClipTooShortForReflect : Error { using Error::Error; };
struct DegenerateFilter : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct BadMagic : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };

// embedder
struct ShapeError : Error { using Error::Error; };
struct ZeroVector : Error { using Error::Error; };
struct BadLabel : Error { using Error::Error; };
struct InsufficientData : Error { using Error::Error; };

// vector_index
struct DimMismatch : Error { using Error::Error; };
struct DuplicateId : Error { using Error::Error; };
struct EmptyIndex : Error { using Error::Error; };
struct TooFewPoints : Error { using Error::Error; };
struct BadNprobe : Error { using Error::Error; };
struct BadSubspace : Error { using Error::Error; };
struct VersionMismatch : Error { using Error::Error; };

// evaluation
struct EmptyEval : Error { using Error::Error; };

// cli / config
struct ConfigError : Error { using Error::Error; };

}  // namespace h2s
