#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace argus {

/// Every failure the library reports; callers branch on these directly.
enum class Errc {
  InvalidArgument,
  InvalidGeometry,
  InvalidLayer,
  InvalidRaster,
  UnsupportedFormat,
  // ingest
  MalformedHeader,
  UnsupportedShapeType,
  RecordCountMismatch,
  UnknownCrs,
  MissingHeaderKey,
  CellCountMismatch,
  NonNumericCell,
  UnsupportedCompression,
  UnsupportedLayout,
  MissingGeoreference,
  EmptyInput,
  RaggedRow,
  InvalidPattern,
  // crs
  LatitudeOutOfRange,
  OutOfProjectionDomain,
  AntipodalPoint,
  // standardize
  TypeConflict,
  CardinalityTooHigh,
  NoSuchColumn,
  // enrich
  NoSamples,
  DuplicateSampleLocation,
  TooFewSamples,
  DegenerateDistances,
  SingularSystem,
  NoPoints,
  NonpositiveBandwidth,
  EmptyBoundary,
  CrsMismatch,
  // geopackage
  IoFailure,
  PathExists,
  DuplicateLayer,
  UnsupportedType,
  NoSuchLayer,
  CorruptGeometryBlob,
  CorruptSidecar,
  // query
  NotReadOnly,
  SqlError,
  UnparsableQuestion,
  UnknownColumn,
  AmbiguousLayer,
  Timeout,
  HttpError,
  MalformedResponse,
  // pipeline
  ParseError,
  UnknownKey,
  DanglingReference,
  StageFailed,
  PartialRunArtifactsRemoved,
  UnknownLicense,
};

const char* to_string(Errc code) noexcept;

/// Coarse classification used for CLI exit codes.
enum class ErrorCategory { usage, data, io };

ErrorCategory category(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message,
        std::optional<std::int64_t> detail = std::nullopt,
        std::vector<std::string> notes = {});

  Errc code() const noexcept { return code_; }
  /// Row number, cell index, HTTP status, line number... depending on code.
  std::optional<std::int64_t> detail() const noexcept { return detail_; }
  /// Free-form extras such as suggestions or a matched prefix.
  const std::vector<std::string>& notes() const noexcept { return notes_; }

 private:
  Errc code_;
  std::optional<std::int64_t> detail_;
  std::vector<std::string> notes_;
};

/// Like category(code), but stage failures report the category of the
/// error they wrap (its code name is the third note).
ErrorCategory category(const Error& e) noexcept;

[[noreturn]] void fail(Errc code, const std::string& message,
                       std::optional<std::int64_t> detail = std::nullopt,
                       std::vector<std::string> notes = {});

}  // namespace argus
