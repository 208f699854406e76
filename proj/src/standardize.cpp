#include "argus/standardize.hpp"

#include "argus/error.hpp"
#include "argus/text.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace argus::standardize {

std::string match_key(std::string_view name) {
  std::string out;
  for (char c : trim(name))
    if (c != '_' && c != '-' && c != ' ') out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::optional<UnitConversion> DictionaryEntry::conversion_from(std::string_view raw_unit) const {
  const auto u = trim(raw_unit);
  if (unit && (u == *unit || iequals(u, *unit))) return UnitConversion{};
  if (auto it = conversions.find(std::string(u)); it != conversions.end()) return it->second;
  for (const auto& [k, v] : conversions)
    if (iequals(k, u)) return v;
  return std::nullopt;
}

AttributeDictionary::AttributeDictionary(std::vector<DictionaryEntry> entries) : entries_(std::move(entries)) {
  std::set<std::string> canon;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (!is_identifier(e.canonical_name))
      fail(Errc::InvalidArgument, "dictionary canonical name '" + e.canonical_name + "' is not an identifier");
    if (!canon.insert(e.canonical_name).second)
      fail(Errc::InvalidArgument, "dictionary lists canonical name '" + e.canonical_name + "' twice");
    for (const auto& [u, c] : e.conversions)
      if (!std::isfinite(c.factor) || c.factor == 0 || !std::isfinite(c.offset))
        fail(Errc::InvalidArgument, "conversion " + u + " for '" + e.canonical_name + "' needs a finite nonzero factor");
  }
  // Canonical names are implicit synonyms.
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    std::vector<std::string> names = entries_[i].synonyms;
    names.push_back(entries_[i].canonical_name);
    for (const auto& n : names) {
      const auto key = match_key(n);
      if (key.empty()) continue;
      auto [it, fresh] = index_.emplace(key, i);
      if (!fresh && it->second != i)
        fail(Errc::InvalidArgument, "synonym '" + n + "' maps to both '" + entries_[it->second].canonical_name +
                                        "' and '" + entries_[i].canonical_name + "'");
    }
  }
}

AttributeDictionary AttributeDictionary::parse(std::string_view text) {
  std::vector<DictionaryEntry> entries;
  const auto lines = split(text, '\n');
  bool first = true;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const auto line = trim(lines[n]);
    if (line.empty() || line.front() == '#') continue;
    const auto lineno = static_cast<std::int64_t>(n + 1);
    auto cols = split(line, '|');
    for (auto& c : cols) c = std::string(trim(c));
    if (first && iequals(cols[0], "canonical_name")) {
      first = false;
      continue;
    }
    first = false;
    if (cols.size() < 4 || cols.size() > 6)
      fail(Errc::ParseError, "dictionary line " + std::to_string(lineno) + ": expected 4 to 6 '|' columns", lineno);
    cols.resize(6);
    DictionaryEntry e;
    e.canonical_name = cols[0];
    e.description = cols[1];
    if (!cols[2].empty()) e.unit = cols[2];
    const auto type = parse_value_type(cols[3]);
    if (!type) fail(Errc::ParseError, "dictionary line " + std::to_string(lineno) + ": unknown type '" + cols[3] + "'", lineno);
    e.value_type = *type;
    for (const auto& s : split(cols[4], ';'))
      if (!trim(s).empty()) e.synonyms.emplace_back(trim(s));
    for (const auto& conv : split(cols[5], ';')) {
      const auto c = trim(conv);
      if (c.empty()) continue;
      const auto eq = c.rfind('=');
      if (eq == std::string_view::npos || eq == 0)
        fail(Errc::ParseError, "dictionary line " + std::to_string(lineno) + ": conversion '" + std::string(c) +
                                   "' is not unit=factor[,offset]", lineno);
      const auto nums = split(c.substr(eq + 1), ',');
      UnitConversion uc;
      // A factor may be written as a fraction, e.g. km/h=1/3.6.
      std::optional<double> f;
      if (const auto parts = split(trim(nums[0]), '/'); parts.size() == 2) {
        const auto a = parse_double(trim(parts[0])), b = parse_double(trim(parts[1]));
        if (a && b && *b != 0) f = *a / *b;
      } else {
        f = parse_double(trim(nums[0]));
      }
      const auto o = nums.size() > 1 ? parse_double(trim(nums[1])) : std::optional<double>(0.0);
      if (!f || !o || nums.size() > 2)
        fail(Errc::ParseError, "dictionary line " + std::to_string(lineno) + ": bad conversion numbers in '" +
                                   std::string(c) + "'", lineno);
      uc.factor = *f;
      uc.offset = *o;
      e.conversions[std::string(trim(c.substr(0, eq)))] = uc;
    }
    entries.push_back(std::move(e));
  }
  return AttributeDictionary(std::move(entries));
}

AttributeDictionary AttributeDictionary::load(const std::string& path) { return parse(read_file(path)); }

std::string AttributeDictionary::serialize() const {
  std::string out = "canonical_name|description|unit|type|synonyms|conversions\n";
  for (const auto& e : entries_) {
    std::string syn, conv;
    for (const auto& s : e.synonyms) syn += (syn.empty() ? "" : ";") + s;
    for (const auto& [u, c] : e.conversions) {
      if (!conv.empty()) conv += ';';
      conv += u + "=" + format_double(c.factor);
      if (c.offset != 0) conv += "," + format_double(c.offset);
    }
    out += e.canonical_name + "|" + e.description + "|" + e.unit.value_or("") + "|" + to_string(e.value_type) + "|" +
           syn + "|" + conv + "\n";
  }
  return out;
}

const DictionaryEntry* AttributeDictionary::match(std::string_view name) const {
  const auto it = index_.find(match_key(name));
  return it == index_.end() ? nullptr : &entries_[it->second];
}

const DictionaryEntry* AttributeDictionary::find(std::string_view canonical_name) const {
  for (const auto& e : entries_)
    if (e.canonical_name == canonical_name) return &e;
  return nullptr;
}

const char* to_string(FieldStatus s) noexcept {
  switch (s) {
    case FieldStatus::matched: return "matched";
    case FieldStatus::unmatched: return "unmatched";
    case FieldStatus::type_conflict: return "type_conflict";
    case FieldStatus::unknown_unit: return "unknown_unit";
    case FieldStatus::name_conflict: return "name_conflict";
  }
  return "unmatched";
}

std::vector<std::string> StandardizationReport::unmatched() const {
  std::vector<std::string> out;
  for (const auto& f : fields)
    if (f.status != FieldStatus::matched) out.push_back(f.raw_name);
  return out;
}

std::string StandardizationReport::to_text() const {
  std::string out = "layer: " + layer + "\nmatched: " + std::to_string(matched) + "/" + std::to_string(total) + "\n";
  out += "[matched]\n";
  for (const auto& f : fields)
    if (f.status == FieldStatus::matched) out += "  " + f.raw_name + " -> " + f.canonical_name.value_or("") + "\n";
  out += "[unmatched]\n";
  for (const auto& f : fields) {
    if (f.status == FieldStatus::matched) continue;
    out += "  " + f.raw_name + " (" + to_string(f.status);
    if (!f.note.empty()) out += ": " + f.note;
    out += ")\n";
  }
  return out;
}

namespace {

bool is_numeric(ValueType t) { return t == ValueType::integer || t == ValueType::real; }

// Resulting field type when the dictionary type accepts the observed one.
std::optional<ValueType> accepted_type(ValueType dict, ValueType field, const FeatureLayer& layer, std::size_t col) {
  switch (dict) {
    case ValueType::real: return is_numeric(field) ? std::optional(ValueType::real) : std::nullopt;
    case ValueType::integer: return field == ValueType::integer ? std::optional(dict) : std::nullopt;
    case ValueType::boolean: return field == dict ? std::optional(dict) : std::nullopt;
    case ValueType::categorical:
    case ValueType::text:
      return field == ValueType::text || field == ValueType::categorical ? std::optional(dict) : std::nullopt;
    case ValueType::date:
      if (field == ValueType::date) return dict;
      if (field != ValueType::text) return std::nullopt;
      for (const auto& r : layer.rows())
        if (!is_null(r.cells[col]) && !is_iso_date(std::get<std::string>(r.cells[col]))) return std::nullopt;
      return dict;
  }
  return std::nullopt;
}

double as_double(const Cell& c) {
  if (auto* i = std::get_if<std::int64_t>(&c)) return static_cast<double>(*i);
  return std::get<double>(c);
}

struct Plan {
  const DictionaryEntry* entry = nullptr;
  ValueType type{};
  UnitConversion conversion;
};

}  // namespace

std::pair<FeatureLayer, StandardizationReport> standardize_layer(const FeatureLayer& layer,
                                                                 const AttributeDictionary& dict) {
  const auto& schema = layer.schema();
  StandardizationReport report;
  report.layer = layer.name();
  report.total = schema.size();

  std::vector<std::optional<Plan>> plans(schema.size());
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto& f = schema[i];
    FieldOutcome out{f.raw_name, std::nullopt, FieldStatus::unmatched, {}};
    const DictionaryEntry* e = f.canonical_name ? dict.match(*f.canonical_name) : dict.match(f.raw_name);
    if (!e && f.canonical_name) {
      // Canonical already assigned outside this dictionary, e.g. derived indicators.
      out.canonical_name = f.canonical_name;
      out.status = FieldStatus::matched;
      out.note = "canonical name kept";
      report.fields.push_back(std::move(out));
      continue;
    }
    if (!e) {
      report.fields.push_back(std::move(out));
      continue;
    }
    out.canonical_name = e->canonical_name;
    const auto type = accepted_type(e->value_type, f.value_type, layer, i);
    if (!type) {
      out.status = FieldStatus::type_conflict;
      out.note = std::string("dictionary type ") + to_string(e->value_type) + ", field type " + to_string(f.value_type);
      report.fields.push_back(std::move(out));
      continue;
    }
    UnitConversion conv;
    if (f.unit && is_numeric(*type)) {
      const auto c = e->conversion_from(*f.unit);
      if (!c) {
        out.status = FieldStatus::unknown_unit;
        out.note = "no conversion from '" + *f.unit + "' to '" + e->unit.value_or("") + "'";
        report.fields.push_back(std::move(out));
        continue;
      }
      conv = *c;
    }
    if (*type == ValueType::integer && conv != UnitConversion{}) {
      for (const auto& r : layer.rows()) {
        if (is_null(r.cells[i])) continue;
        const double v = conv.to_canonical(as_double(r.cells[i]));
        if (v != std::round(v)) {
          out.status = FieldStatus::type_conflict;
          out.note = "conversion gives fractional values for an integer attribute";
          break;
        }
      }
      if (out.status == FieldStatus::type_conflict) {
        report.fields.push_back(std::move(out));
        continue;
      }
    }
    plans[i] = Plan{e, *type, conv};
    out.status = FieldStatus::matched;
    report.fields.push_back(std::move(out));
  }

  // Column names must stay unique once canonical names are applied.
  std::set<std::string> taken;
  for (std::size_t i = 0; i < schema.size(); ++i)
    if (!plans[i]) taken.insert(schema[i].column_name());
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (!plans[i]) continue;
    if (!taken.insert(plans[i]->entry->canonical_name).second) {
      report.fields[i].status = FieldStatus::name_conflict;
      report.fields[i].note = "column '" + plans[i]->entry->canonical_name + "' already present";
      plans[i].reset();
      taken.insert(schema[i].column_name());
    }
  }

  auto new_schema = schema;
  auto md = layer.metadata();
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (report.fields[i].status == FieldStatus::matched) ++report.matched;
    if (!plans[i]) continue;
    const auto& e = *plans[i]->entry;
    auto& f = new_schema[i];
    f.canonical_name = e.canonical_name;
    f.description = e.description;
    f.value_type = plans[i]->type;
    if (is_numeric(f.value_type) || !f.unit) f.unit = e.unit;
    md["schema." + e.canonical_name + ".description"] = e.description;
  }

  auto rows = layer.rows();
  for (auto& r : rows) {
    for (std::size_t i = 0; i < schema.size(); ++i) {
      if (!plans[i] || is_null(r.cells[i])) continue;
      auto& cell = r.cells[i];
      const auto& p = *plans[i];
      if (p.type == ValueType::real) cell = p.conversion.to_canonical(as_double(cell));
      else if (p.type == ValueType::integer && p.conversion != UnitConversion{})
        cell = static_cast<std::int64_t>(std::llround(p.conversion.to_canonical(as_double(cell))));
    }
  }
  const bool all = report.matched == report.total;
  return {FeatureLayer(layer.name(), layer.crs(), std::move(new_schema), std::move(rows), std::move(md), all),
          std::move(report)};
}

std::pair<RasterGrid, StandardizationReport> standardize_raster(const RasterGrid& grid, std::string_view name,
                                                                const AttributeDictionary& dict) {
  auto md = grid.metadata();
  const std::string band = md.count("band") ? md.at("band") : "value";
  StandardizationReport report;
  report.layer = std::string(name);
  report.total = 1;
  FieldOutcome out{band, std::nullopt, FieldStatus::unmatched, {}};

  const auto canon = md.find("band.canonical");
  const DictionaryEntry* e = dict.match(canon != md.end() ? canon->second : band);
  if (!e && canon != md.end()) {
    out.canonical_name = canon->second;
    out.status = FieldStatus::matched;
    out.note = "canonical name kept";
  } else if (e) {
    out.canonical_name = e->canonical_name;
    if (!is_numeric(e->value_type)) {
      out.status = FieldStatus::type_conflict;
      out.note = std::string("dictionary type ") + to_string(e->value_type) + ", raster values are real";
    } else {
      UnitConversion conv;
      std::optional<UnitConversion> found = conv;
      if (md.count("band.unit")) found = e->conversion_from(md.at("band.unit"));
      if (!found) {
        out.status = FieldStatus::unknown_unit;
        out.note = "no conversion from '" + md.at("band.unit") + "' to '" + e->unit.value_or("") + "'";
      } else {
        out.status = FieldStatus::matched;
        conv = *found;
        md["band.canonical"] = e->canonical_name;
        if (e->unit) md["band.unit"] = *e->unit;
        md["band.description"] = e->description;
        md["schema." + e->canonical_name + ".description"] = e->description;
        RasterValues values = grid.values();
        if (conv != UnitConversion{})
          values = grid.values().unaryExpr(
              [&](double v) { return grid.is_nodata(v) ? v : conv.to_canonical(v); });
        report.matched = 1;
        report.fields.push_back(std::move(out));
        return {grid.with_values(std::move(values)).with_metadata(std::move(md)), std::move(report)};
      }
    }
  }
  if (out.status == FieldStatus::matched) report.matched = 1;
  report.fields.push_back(std::move(out));
  return {grid, std::move(report)};
}

FeatureLayer mark_already_canonical(const FeatureLayer& layer, const AttributeDictionary& dict) {
  auto schema = layer.schema();
  for (auto& f : schema) {
    if (f.canonical_name) continue;
    const auto* e = dict.find(f.raw_name);
    if (e && (!f.unit || f.unit == e->unit)) f.canonical_name = e->canonical_name;
  }
  return FeatureLayer(layer.name(), layer.crs(), std::move(schema), layer.rows(), layer.metadata(),
                      layer.standardized());
}

RasterGrid mark_already_canonical(const RasterGrid& grid, const AttributeDictionary& dict) {
  auto md = grid.metadata();
  if (md.count("band.canonical")) return grid;
  const std::string band = md.count("band") ? md.at("band") : "value";
  const auto* e = dict.find(band);
  if (e && (!md.count("band.unit") || md.at("band.unit") == e->unit)) {
    md["band.canonical"] = e->canonical_name;
    return grid.with_metadata(std::move(md));
  }
  return grid;
}

double standardization_ratio(const std::vector<FeatureLayer>& layers, const std::vector<RasterGrid>& rasters) {
  std::size_t set = 0, total = 0;
  for (const auto& l : layers)
    for (const auto& f : l.schema()) {
      ++total;
      if (f.canonical_name) ++set;
    }
  for (const auto& r : rasters) {
    ++total;
    if (r.metadata().count("band.canonical")) ++set;
  }
  return total == 0 ? 1.0 : static_cast<double>(set) / static_cast<double>(total);
}

namespace {

Metadata merged(Metadata md, const Metadata& entries) {
  for (const auto& [k, v] : entries) {
    if (trim(k).empty()) fail(Errc::InvalidArgument, "metadata keys must be nonempty");
    md[k] = v;
  }
  return md;
}

}  // namespace

FeatureLayer attach_metadata(const FeatureLayer& layer, const Metadata& entries) {
  return FeatureLayer(layer.name(), layer.crs(), layer.schema(), layer.rows(), merged(layer.metadata(), entries),
                      layer.standardized());
}

RasterGrid attach_metadata(const RasterGrid& grid, const Metadata& entries) {
  return grid.with_metadata(merged(grid.metadata(), entries));
}

std::pair<FeatureLayer, OneHotReport> one_hot(const FeatureLayer& layer, std::string_view column) {
  const auto idx = layer.field_index(column);
  if (!idx) fail(Errc::NoSuchColumn, "layer '" + layer.name() + "' has no column '" + std::string(column) + "'");
  const auto& src = layer.schema()[*idx];
  if (src.value_type != ValueType::text && src.value_type != ValueType::categorical)
    fail(Errc::TypeConflict, "one-hot encoding needs a text or categorical column, '" + std::string(column) + "' is " +
                                 to_string(src.value_type));

  std::set<std::string> distinct;
  OneHotReport report;
  report.column = src.column_name();
  for (const auto& r : layer.rows()) {
    if (is_null(r.cells[*idx])) ++report.null_count;
    else distinct.insert(std::get<std::string>(r.cells[*idx]));
  }
  if (distinct.size() > kMaxOneHotCardinality)
    fail(Errc::CardinalityTooHigh,
         "column '" + report.column + "' has " + std::to_string(distinct.size()) + " distinct values (limit " +
             std::to_string(kMaxOneHotCardinality) + ")",
         static_cast<std::int64_t>(distinct.size()));

  auto schema = layer.schema();
  std::set<std::string> taken;
  for (const auto& f : schema) taken.insert(f.column_name());
  std::vector<std::string> values(distinct.begin(), distinct.end());
  for (std::size_t k = 0; k < values.size(); ++k) {
    std::string slug = snake_case(values[k]);
    if (slug.empty()) slug = "value_" + std::to_string(k + 1);
    std::string name = report.column + "_" + slug;
    for (int n = 2; taken.count(name); ++n) name = report.column + "_" + slug + "_" + std::to_string(n);
    taken.insert(name);
    AttributeField f;
    f.raw_name = name;
    if (src.canonical_name) f.canonical_name = name;
    f.value_type = ValueType::integer;
    f.description = "1 when " + report.column + " is '" + values[k] + "'";
    schema.push_back(std::move(f));
    report.indicator_columns.push_back(std::move(name));
  }

  auto rows = layer.rows();
  for (auto& r : rows) {
    const Cell v = r.cells[*idx];
    for (const auto& value : values)
      r.cells.emplace_back(std::int64_t{!is_null(v) && std::get<std::string>(v) == value ? 1 : 0});
  }
  auto md = layer.metadata();
  md["one_hot." + report.column] = std::to_string(values.size()) + " indicators";
  return {FeatureLayer(layer.name(), layer.crs(), std::move(schema), std::move(rows), std::move(md),
                       layer.standardized() && src.canonical_name.has_value()),
          std::move(report)};
}

}  // namespace argus::standardize
