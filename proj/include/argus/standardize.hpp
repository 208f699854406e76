#pragma once

#include "argus/model.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace argus::standardize {

/// canonical = raw * factor + offset
struct UnitConversion {
  double factor = 1.0;
  double offset = 0.0;

  double to_canonical(double raw) const noexcept { return raw * factor + offset; }
  double from_canonical(double canonical) const noexcept { return (canonical - offset) / factor; }
  bool operator==(const UnitConversion&) const = default;
};

struct DictionaryEntry {
  std::string canonical_name;
  std::string description;
  std::optional<std::string> unit;
  ValueType value_type = ValueType::text;
  std::vector<std::string> synonyms;
  std::map<std::string, UnitConversion> conversions;  // raw unit -> canonical unit

  /// Conversion from `raw_unit`; identity for the canonical unit itself.
  std::optional<UnitConversion> conversion_from(std::string_view raw_unit) const;
  bool operator==(const DictionaryEntry&) const = default;
};

/// Lowercase with '_', '-' and spaces removed.
std::string match_key(std::string_view name);

class AttributeDictionary {
 public:
  AttributeDictionary() = default;
  /// Throws InvalidArgument on duplicate canonical names, a synonym claimed
  /// by two entries, or a non-finite/zero conversion factor.
  explicit AttributeDictionary(std::vector<DictionaryEntry> entries);

  /// `canonical|description|unit|type|synonyms;...|unit=factor[,offset];...`
  /// One entry per line, '#' comments, optional header row. ParseError
  /// carries the 1-based line number.
  static AttributeDictionary parse(std::string_view text);
  static AttributeDictionary load(const std::string& path);
  std::string serialize() const;

  const std::vector<DictionaryEntry>& entries() const noexcept { return entries_; }
  /// Entry whose canonical name or any synonym has the same match key.
  const DictionaryEntry* match(std::string_view name) const;
  const DictionaryEntry* find(std::string_view canonical_name) const;

 private:
  std::vector<DictionaryEntry> entries_;
  std::map<std::string, std::size_t> index_;  // match key -> entry
};

enum class FieldStatus { matched, unmatched, type_conflict, unknown_unit, name_conflict };

const char* to_string(FieldStatus s) noexcept;

struct FieldOutcome {
  std::string raw_name;
  std::optional<std::string> canonical_name;  // the dictionary entry, even when not applied
  FieldStatus status = FieldStatus::unmatched;
  std::string note;
};

struct StandardizationReport {
  std::string layer;
  std::size_t matched = 0;
  std::size_t total = 0;
  std::vector<FieldOutcome> fields;

  std::vector<std::string> unmatched() const;
  /// Plain-text report with matched and unmatched sections.
  std::string to_text() const;
};

std::pair<FeatureLayer, StandardizationReport> standardize_layer(const FeatureLayer& layer,
                                                                 const AttributeDictionary& dict);

/// Rasters carry one attribute, the band named in metadata "band".
std::pair<RasterGrid, StandardizationReport> standardize_raster(const RasterGrid& grid, std::string_view name,
                                                                const AttributeDictionary& dict);

/// Fields whose raw name already equals a canonical name, with the canonical
/// unit or none, get canonical_name set and nothing else changes. Used to
/// measure how standardized raw inputs are before the dictionary is applied.
FeatureLayer mark_already_canonical(const FeatureLayer& layer, const AttributeDictionary& dict);
RasterGrid mark_already_canonical(const RasterGrid& grid, const AttributeDictionary& dict);

/// Fields with canonical_name set over all fields; each raster is one field,
/// counted when metadata "band.canonical" is present. 0/0 gives 1.
double standardization_ratio(const std::vector<FeatureLayer>& layers, const std::vector<RasterGrid>& rasters = {});

/// Newer values win. Empty keys throw InvalidArgument.
FeatureLayer attach_metadata(const FeatureLayer& layer, const Metadata& entries);
RasterGrid attach_metadata(const RasterGrid& grid, const Metadata& entries);

inline constexpr std::size_t kMaxOneHotCardinality = 64;

struct OneHotReport {
  std::string column;
  std::vector<std::string> indicator_columns;
  std::size_t null_count = 0;
};

/// Appends an integer 0/1 column per distinct value, in sorted value order.
std::pair<FeatureLayer, OneHotReport> one_hot(const FeatureLayer& layer, std::string_view column);

}  // namespace argus::standardize
