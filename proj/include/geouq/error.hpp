#pragma once

#include <stdexcept>
#include <string>

namespace geouq {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Client / transport
struct AuthError : Error { using Error::Error; };
struct RateLimited : Error { using Error::Error; };
struct TransportError : Error { using Error::Error; };
struct MalformedResponse : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct UnparseableVerdict : Error { using Error::Error; };

// Curation
struct MissingReference : Error { using Error::Error; };

// Numerics
struct PreconditionError : Error { using Error::Error; };
struct ZeroVector : Error { using Error::Error; };
struct KTooLarge : Error { using Error::Error; };
struct NonFiniteObjective : Error { using Error::Error; };
struct TooManyVertices : Error { using Error::Error; };
struct SimplexViolation : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };

// Evaluation
struct SingleClassValidation : Error { using Error::Error; };
struct SingleClass : Error { using Error::Error; };
struct EmptySet : Error { using Error::Error; };

// Pipeline
struct ConfigError : Error { using Error::Error; };
struct MissingInput : Error { using Error::Error; };
struct StageError : Error { using Error::Error; };

}  // namespace geouq
