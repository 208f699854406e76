#include "argus/error.hpp"

namespace argus {

const char* to_string(Errc code) noexcept {
  switch (code) {
#define ARGUS_ERRC(name) \
  case Errc::name:       \
    return #name;
    ARGUS_ERRC(InvalidArgument)
    ARGUS_ERRC(InvalidGeometry)
    ARGUS_ERRC(InvalidLayer)
    ARGUS_ERRC(InvalidRaster)
    ARGUS_ERRC(UnsupportedFormat)
    ARGUS_ERRC(MalformedHeader)
    ARGUS_ERRC(UnsupportedShapeType)
    ARGUS_ERRC(RecordCountMismatch)
    ARGUS_ERRC(UnknownCrs)
    ARGUS_ERRC(MissingHeaderKey)
    ARGUS_ERRC(CellCountMismatch)
    ARGUS_ERRC(NonNumericCell)
    ARGUS_ERRC(UnsupportedCompression)
    ARGUS_ERRC(UnsupportedLayout)
    ARGUS_ERRC(MissingGeoreference)
    ARGUS_ERRC(EmptyInput)
    ARGUS_ERRC(RaggedRow)
    ARGUS_ERRC(InvalidPattern)
    ARGUS_ERRC(LatitudeOutOfRange)
    ARGUS_ERRC(OutOfProjectionDomain)
    ARGUS_ERRC(AntipodalPoint)
    ARGUS_ERRC(TypeConflict)
    ARGUS_ERRC(CardinalityTooHigh)
    ARGUS_ERRC(NoSuchColumn)
    ARGUS_ERRC(NoSamples)
    ARGUS_ERRC(DuplicateSampleLocation)
    ARGUS_ERRC(TooFewSamples)
    ARGUS_ERRC(DegenerateDistances)
    ARGUS_ERRC(SingularSystem)
    ARGUS_ERRC(NoPoints)
    ARGUS_ERRC(NonpositiveBandwidth)
    ARGUS_ERRC(EmptyBoundary)
    ARGUS_ERRC(CrsMismatch)
    ARGUS_ERRC(IoFailure)
    ARGUS_ERRC(PathExists)
    ARGUS_ERRC(DuplicateLayer)
    ARGUS_ERRC(UnsupportedType)
    ARGUS_ERRC(NoSuchLayer)
    ARGUS_ERRC(CorruptGeometryBlob)
    ARGUS_ERRC(CorruptSidecar)
    ARGUS_ERRC(NotReadOnly)
    ARGUS_ERRC(SqlError)
    ARGUS_ERRC(UnparsableQuestion)
    ARGUS_ERRC(UnknownColumn)
    ARGUS_ERRC(AmbiguousLayer)
    ARGUS_ERRC(Timeout)
    ARGUS_ERRC(HttpError)
    ARGUS_ERRC(MalformedResponse)
    ARGUS_ERRC(ParseError)
    ARGUS_ERRC(UnknownKey)
    ARGUS_ERRC(DanglingReference)
    ARGUS_ERRC(StageFailed)
    ARGUS_ERRC(PartialRunArtifactsRemoved)
    ARGUS_ERRC(UnknownLicense)
#undef ARGUS_ERRC
  }
  return "Unknown";
}

ErrorCategory category(Errc code) noexcept {
  switch (code) {
    case Errc::IoFailure:
    case Errc::PathExists:
    case Errc::Timeout:
    case Errc::HttpError:
      return ErrorCategory::io;
    case Errc::InvalidArgument:
      return ErrorCategory::usage;
    default:
      return ErrorCategory::data;
  }
}

ErrorCategory category(const Error& e) noexcept {
  if ((e.code() == Errc::StageFailed || e.code() == Errc::PartialRunArtifactsRemoved) && e.notes().size() >= 3) {
    for (int i = 0; i <= static_cast<int>(Errc::UnknownLicense); ++i)
      if (e.notes()[2] == to_string(static_cast<Errc>(i))) return category(static_cast<Errc>(i));
  }
  return category(e.code());
}

Error::Error(Errc code, const std::string& message,
             std::optional<std::int64_t> detail, std::vector<std::string> notes)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      detail_(detail),
      notes_(std::move(notes)) {}

void fail(Errc code, const std::string& message,
          std::optional<std::int64_t> detail, std::vector<std::string> notes) {
  throw Error(code, message, detail, std::move(notes));
}

}  // namespace argus
