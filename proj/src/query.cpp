#include "argus/query.hpp"

#include "argus/hash.hpp"
#include "argus/text.hpp"
#include "sqlite_db.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <sstream>

namespace argus::query {

using detail::quote_ident;
using detail::Statement;

// ---------------------------------------------------------------------------
// SQL passthrough

namespace {

// Offset just past the comment or quoted run starting at i, or i if none.
std::size_t skip_quoted_or_comment(std::string_view s, std::size_t i) {
  const char c = s[i];
  if (c == '-' && i + 1 < s.size() && s[i + 1] == '-') {
    const auto nl = s.find('\n', i);
    return nl == std::string_view::npos ? s.size() : nl + 1;
  }
  if (c == '/' && i + 1 < s.size() && s[i + 1] == '*') {
    const auto end = s.find("*/", i + 2);
    return end == std::string_view::npos ? s.size() : end + 2;
  }
  char close = 0;
  if (c == '\'' || c == '"' || c == '`') close = c;
  if (c == '[') close = ']';
  if (!close) return i;
  for (std::size_t j = i + 1; j < s.size(); ++j) {
    if (s[j] != close) continue;
    if (close != ']' && j + 1 < s.size() && s[j + 1] == close) {
      ++j;  // doubled quote
      continue;
    }
    return j + 1;
  }
  return s.size();
}

// Leading whitespace and comments skipped.
std::size_t skip_blank(std::string_view s, std::size_t i) {
  while (i < s.size()) {
    if (std::isspace(static_cast<unsigned char>(s[i]))) {
      ++i;
      continue;
    }
    if (s[i] != '-' && s[i] != '/') break;
    const auto j = skip_quoted_or_comment(s, i);
    if (j == i) break;
    i = j;
  }
  return i;
}

std::string hex_of(const std::vector<std::uint8_t>& b) {
  static const char* digits = "0123456789ABCDEF";
  std::string out = "X'";
  for (auto v : b) {
    out += digits[v >> 4];
    out += digits[v & 15];
  }
  return out + "'";
}

}  // namespace

void check_read_only(std::string_view sql) {
  const auto start = skip_blank(sql, 0);
  std::size_t word_end = start;
  while (word_end < sql.size() && std::isalpha(static_cast<unsigned char>(sql[word_end]))) ++word_end;
  const auto first = sql.substr(start, word_end - start);
  if (!iequals(first, "SELECT") && !iequals(first, "WITH"))
    fail(Errc::NotReadOnly, "only SELECT or WITH queries are allowed, got '" + std::string(first) + "'");
  for (std::size_t i = start; i < sql.size();) {
    const auto j = skip_quoted_or_comment(sql, i);
    if (j != i) {
      i = j;
      continue;
    }
    if (sql[i] == ';') {
      std::size_t k = i + 1;
      while ((k = skip_blank(sql, k)) < sql.size() && sql[k] == ';') ++k;
      if (k < sql.size()) fail(Errc::NotReadOnly, "only one statement is allowed");
      return;
    }
    ++i;
  }
}

ResultTable sql_query(const gpkg::Database& db, std::string_view sql) {
  check_read_only(sql);
  Statement s(db.handle(), sql);
  if (!sqlite3_stmt_readonly(s.raw())) fail(Errc::NotReadOnly, "statement would modify the database");
  ResultTable t;
  for (int i = 0; i < s.columns(); ++i) t.columns.push_back(s.column_name(i));
  while (s.step()) {
    std::vector<Cell> row;
    row.reserve(t.columns.size());
    for (int i = 0; i < s.columns(); ++i) {
      switch (s.type(i)) {
        case SQLITE_NULL: row.emplace_back(std::monostate{}); break;
        case SQLITE_INTEGER: row.emplace_back(s.integer(i)); break;
        case SQLITE_FLOAT: row.emplace_back(s.real(i)); break;
        case SQLITE_BLOB: {
          const auto b = s.blob(i);
          std::string text;
          if (b.size() >= 2 && b[0] == 'G' && b[1] == 'P') {
            try {
              text = to_wkt(gpkg::decode_geometry(b).geometry);
            } catch (const Error&) {
              text = hex_of(b);
            }
          } else {
            text = hex_of(b);
          }
          row.emplace_back(std::move(text));
          break;
        }
        default: row.emplace_back(s.text(i));
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string normalize_sql(std::string_view sql) {
  std::string out;
  bool pending_space = false;
  auto emit = [&](std::string_view piece) {
    if (pending_space && !out.empty()) {
      const char prev = out.back(), next = piece.front();
      const bool tight = prev == '(' || prev == ',' || prev == '.' || next == ')' || next == ',' || next == '(' ||
                         next == '.';
      if (!tight) out += ' ';
    }
    pending_space = false;
    out += piece;
  };
  for (std::size_t i = 0; i < sql.size();) {
    const char c = sql[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = true;
      ++i;
      continue;
    }
    const auto j = skip_quoted_or_comment(sql, i);
    if (j != i) {
      if (c == '\'') {
        emit(sql.substr(i, j - i));
      } else if (c == '"' || c == '`' || c == '[') {
        emit(to_upper(sql.substr(i + 1, j - i - 2)));
      } else {
        pending_space = true;  // comment
      }
      i = j;
      continue;
    }
    emit(to_upper(sql.substr(i, 1)));
    // Keep runs of word characters together.
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') pending_space = false;
    std::size_t k = i + 1;
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
      while (k < sql.size() && (std::isalnum(static_cast<unsigned char>(sql[k])) || sql[k] == '_' || sql[k] == '.')) {
        out += static_cast<char>(std::toupper(static_cast<unsigned char>(sql[k])));
        ++k;
      }
    }
    i = k;
  }
  while (!out.empty() && (out.back() == ';' || out.back() == ' ')) out.pop_back();
  return out;
}

// ---------------------------------------------------------------------------
// Catalog

namespace {

ValueType declared_type(std::string_view declared) {
  const auto t = to_upper(trim(declared));
  if (t == "BOOLEAN") return ValueType::boolean;
  if (t == "DATE") return ValueType::date;
  if (t.find("INT") != std::string::npos) return ValueType::integer;
  if (t == "REAL" || t == "DOUBLE" || t == "FLOAT" || t == "NUMERIC") return ValueType::real;
  return ValueType::text;
}

// Lower-cased with separators dropped, so "Wind Speed" matches wind_speed.
std::string key_of(std::string_view s) {
  std::string out;
  for (char c : s)
    if (c != '_' && c != ' ' && c != '-') out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

const CatalogColumn* CatalogLayer::find(std::string_view column) const {
  for (const auto& c : columns)
    if (iequals(c.name, column)) return &c;
  return nullptr;
}

const CatalogLayer* Catalog::find(std::string_view layer) const {
  for (const auto& l : layers_)
    if (iequals(l.name, layer)) return &l;
  return nullptr;
}

Catalog Catalog::from_database(const gpkg::Database& db) {
  std::vector<CatalogLayer> layers;
  for (const auto& summary : db.list_layers()) {
    if (summary.kind != gpkg::LayerKind::vector) continue;
    CatalogLayer layer{summary.name, {}, summary.row_count};
    std::string geom;
    {
      Statement g(db.handle(), "SELECT column_name FROM gpkg_geometry_columns WHERE table_name = ?1");
      g.bind(1, summary.name);
      if (g.step()) geom = g.text(0);
    }
    std::map<std::string, ValueType> recorded;
    {
      Statement has(db.handle(), "SELECT 1 FROM sqlite_master WHERE type = 'table' AND name = 'argus_fields'");
      if (has.step()) {
        Statement f(db.handle(), "SELECT column_name, value_type FROM argus_fields WHERE table_name = ?1");
        f.bind(1, summary.name);
        while (f.step()) recorded[f.text(0)] = parse_value_type(f.text(1)).value_or(ValueType::text);
      }
    }
    Statement ti(db.handle(), "SELECT name, type, pk FROM pragma_table_info(?1) ORDER BY cid");
    ti.bind(1, summary.name);
    while (ti.step()) {
      const auto name = ti.text(0);
      if (ti.integer(2) > 0 || name == geom) continue;
      const auto it = recorded.find(name);
      layer.columns.push_back({name, it != recorded.end() ? it->second : declared_type(ti.text(1))});
    }
    layers.push_back(std::move(layer));
  }
  return Catalog(std::move(layers));
}

// ---------------------------------------------------------------------------
// Natural-language grammar

const char* to_string(Aggregate a) noexcept {
  switch (a) {
    case Aggregate::avg: return "avg";
    case Aggregate::min: return "min";
    case Aggregate::max: return "max";
    case Aggregate::sum: return "sum";
    case Aggregate::count: return "count";
    default: return "none";
  }
}

const char* to_string(CompareOp op) noexcept {
  switch (op) {
    case CompareOp::lt: return "<";
    case CompareOp::gt: return ">";
    case CompareOp::le: return "<=";
    case CompareOp::ge: return ">=";
    case CompareOp::between: return "between";
    default: return "=";
  }
}

namespace {

enum class TokKind { word, number, date, symbol, quoted };

struct Token {
  TokKind kind;
  std::string text;   // as written
  std::string lower;  // for keyword matching
};

bool word_byte(unsigned char c) { return std::isalnum(c) || c == '_' || c == '\'' || c >= 0x80; }

std::vector<Token> tokenize(std::string_view q) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto push = [&](TokKind k, std::string text) {
    auto lower = to_lower(text);
    out.push_back({k, std::move(text), std::move(lower)});
  };
  while (i < q.size()) {
    const auto c = static_cast<unsigned char>(q[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    // ≤ and ≥ in UTF-8.
    if (c == 0xE2 && i + 2 < q.size() && static_cast<unsigned char>(q[i + 1]) == 0x89 &&
        (static_cast<unsigned char>(q[i + 2]) == 0xA4 || static_cast<unsigned char>(q[i + 2]) == 0xA5)) {
      push(TokKind::symbol, static_cast<unsigned char>(q[i + 2]) == 0xA4 ? "<=" : ">=");
      i += 3;
      continue;
    }
    if (c == '<' || c == '>' || c == '=' || c == '!') {
      std::size_t j = i + 1;
      while (j < q.size() && (q[j] == '=' || q[j] == '>')) ++j;
      push(TokKind::symbol, std::string(q.substr(i, j - i)));
      i = j;
      continue;
    }
    if (c == '"' || c == '\'') {
      const auto end = q.find(static_cast<char>(c), i + 1);
      const auto stop = end == std::string_view::npos ? q.size() : end;
      push(TokKind::quoted, std::string(q.substr(i + 1, stop - i - 1)));
      i = stop == q.size() ? stop : stop + 1;
      continue;
    }
    const bool signed_number = (c == '-' || c == '+') && i + 1 < q.size() && std::isdigit(static_cast<unsigned char>(q[i + 1])) &&
                               (out.empty() || out.back().kind != TokKind::number);
    if (std::isdigit(c) || signed_number) {
      std::size_t j = i + 1;
      while (j < q.size() && (std::isdigit(static_cast<unsigned char>(q[j])) || q[j] == '.' || q[j] == '-')) ++j;
      std::string text(q.substr(i, j - i));
      while (!text.empty() && (text.back() == '.' || text.back() == '-')) {
        text.pop_back();
        --j;
      }
      if (is_iso_date(text)) push(TokKind::date, text);
      else if (parse_double(text)) push(TokKind::number, text);
      else push(TokKind::word, text);
      i = j;
      continue;
    }
    if (word_byte(c)) {
      std::size_t j = i;
      while (j < q.size() && (word_byte(static_cast<unsigned char>(q[j])) || q[j] == '-')) ++j;
      push(TokKind::word, std::string(q.substr(i, j - i)));
      i = j;
      continue;
    }
    ++i;  // punctuation separates tokens
  }
  return out;
}

struct Span {
  std::string joined;  // tokens joined with '_'
  std::size_t count = 0;
};

struct RawCond {
  Span column;
  CompareOp op;
  std::vector<Token> literals;
};

struct RawQuery {
  bool how_many = false;
  std::optional<Aggregate> aggregate;
  Span target;
  std::optional<Span> layer;
  std::vector<RawCond> conds;
  std::optional<Span> group;
};

const std::vector<std::string> kStopWords = {"in", "from", "where", "with", "per", "by", "grouped", "group", "for"};

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : t_(std::move(toks)) {}

  RawQuery parse() {
    RawQuery q;
    if (accept({"how", "many"})) {
      q.how_many = true;
    } else if (accept({"what", "is"}) || accept({"what", "are"}) || accept({"what's"}) || accept({"show", "me"}) ||
               accept({"show"}) || accept({"which"}) || accept({"list"}) || accept({"give", "me"}) || accept({"find"})) {
    }
    const bool interrog = pos_ > 0;
    skip_articles();
    q.aggregate = aggregate();
    if (q.aggregate) {
      accept({"of"});
      skip_articles();
    }
    if (q.how_many) q.aggregate = Aggregate::count;
    q.target = span_until(kStopWords);
    if (q.target.count == 0 || q.target.count > 4) unparsable(q.target.count);
    if (accept({"in"}) || accept({"from"})) {
      skip_articles();
      q.layer = span_until({"where", "with", "per", "by", "grouped", "group", "for"});
      if (q.layer->count == 0 || q.layer->count > 4) unparsable(q.layer->count);
    }
    if (!interrog && !q.aggregate && !q.layer) {
      pos_ = 0;
      unparsable();
    }
    if (accept({"where"}) || accept({"with"})) {
      do q.conds.push_back(condition());
      while (accept({"and"}));
    }
    if (accept({"grouped", "by"}) || accept({"group", "by"}) || accept({"for", "each"}) || accept({"per"}) ||
        accept({"by"})) {
      q.group = span_until({});
      if (q.group->count == 0 || q.group->count > 4) unparsable(q.group->count);
    }
    if (pos_ != t_.size()) unparsable();
    return q;
  }

 private:
  bool at_word(std::size_t i, std::string_view w) const {
    return i < t_.size() && (t_[i].kind == TokKind::word || t_[i].kind == TokKind::symbol) && t_[i].lower == w;
  }

  bool accept(std::initializer_list<std::string_view> words) {
    std::size_t i = pos_;
    for (auto w : words)
      if (!at_word(i++, w)) return false;
    advance(words.size());
    return true;
  }

  void advance(std::size_t n) { pos_ += n; }

  void skip_articles() {
    while (accept({"the"}) || accept({"a"}) || accept({"an"})) {
    }
  }

  std::optional<Aggregate> aggregate() {
    static const std::pair<std::string_view, Aggregate> words[] = {
        {"average", Aggregate::avg}, {"mean", Aggregate::avg},    {"avg", Aggregate::avg},
        {"maximum", Aggregate::max}, {"max", Aggregate::max},     {"highest", Aggregate::max},
        {"largest", Aggregate::max}, {"minimum", Aggregate::min}, {"min", Aggregate::min},
        {"lowest", Aggregate::min},  {"smallest", Aggregate::min}, {"sum", Aggregate::sum},
        {"total", Aggregate::sum},   {"count", Aggregate::count}};
    if (accept({"number", "of"})) return Aggregate::count;
    for (const auto& [w, a] : words)
      if (accept({w})) return a;
    return std::nullopt;
  }

  Span span_until(const std::vector<std::string>& stops) {
    Span s;
    while (pos_ < t_.size()) {
      const auto& tok = t_[pos_];
      if (tok.kind != TokKind::word) break;
      if (std::find(stops.begin(), stops.end(), tok.lower) != stops.end()) break;
      s.joined += (s.count ? "_" : "") + tok.lower;
      ++s.count;
      advance(1);
    }
    return s;
  }

  std::optional<CompareOp> op() {
    if (accept({"is"})) {
      if (auto o = op_word()) return o;
      accept({"equal", "to"});
      return CompareOp::eq;
    }
    return op_word();
  }

  std::optional<CompareOp> op_word() {
    if (accept({"above"}) || accept({"over"}) || accept({">"}) || accept({"greater", "than"}) ||
        accept({"more", "than"}) || accept({"exceeding"}))
      return CompareOp::gt;
    if (accept({"below"}) || accept({"under"}) || accept({"<"}) || accept({"less", "than"}) ||
        accept({"fewer", "than"}))
      return CompareOp::lt;
    if (accept({"at", "least"}) || accept({">="})) return CompareOp::ge;
    if (accept({"at", "most"}) || accept({"<="})) return CompareOp::le;
    if (accept({"="}) || accept({"=="}) || accept({"equals"}) || accept({"equal", "to"})) return CompareOp::eq;
    if (accept({"between"})) return CompareOp::between;
    return std::nullopt;
  }

  Token value() {
    if (pos_ >= t_.size()) unparsable();
    const auto& tok = t_[pos_];
    if (tok.kind != TokKind::number && tok.kind != TokKind::date) unparsable();
    advance(1);
    return tok;
  }

  RawCond condition() {
    RawCond c;
    c.column = span_until({"is", "above", "over", "greater", "more", "exceeding", "below", "under", "less", "fewer", "at",
                           "equals", "equal", "between"});
    if (c.column.count == 0 || c.column.count > 4) unparsable();
    const auto o = op();
    if (!o) unparsable();
    c.op = *o;
    if (c.op == CompareOp::between) {
      c.literals.push_back(value());
      if (!accept({"and"})) unparsable();
      c.literals.push_back(value());
    } else if (c.op != CompareOp::eq) {
      c.literals.push_back(value());
    } else {
      if (pos_ >= t_.size()) unparsable();
      if (t_[pos_].kind != TokKind::word) {
        if (t_[pos_].kind == TokKind::symbol) unparsable();
        c.literals.push_back(t_[pos_]);
        advance(1);
      } else {
        // Bare words up to the next connective form one text literal.
        Token joined{TokKind::quoted, "", ""};
        while (pos_ < t_.size() && t_[pos_].kind == TokKind::word && t_[pos_].lower != "and" &&
               t_[pos_].lower != "per" && t_[pos_].lower != "by" && t_[pos_].lower != "grouped" &&
               t_[pos_].lower != "group" && t_[pos_].lower != "for") {
          joined.text += (joined.text.empty() ? "" : " ") + t_[pos_].text;
          advance(1);
        }
        if (joined.text.empty()) unparsable();
        joined.kind = TokKind::word;
        joined.lower = to_lower(joined.text);
        c.literals.push_back(joined);
      }
    }
    return c;
  }

  // `rejected` tokens just consumed by a span do not count as understood.
  [[noreturn]] void unparsable(std::size_t rejected = 0) const {
    const std::size_t understood = pos_ - rejected;
    std::string prefix;
    for (std::size_t i = 0; i < understood && i < t_.size(); ++i) prefix += (i ? " " : "") + t_[i].text;
    fail(Errc::UnparsableQuestion,
         prefix.empty() ? std::string("question is outside the supported grammar")
                        : "question is outside the supported grammar after '" + prefix + "'",
         static_cast<std::int64_t>(understood), {prefix});
  }

  std::vector<Token> t_;
  std::size_t pos_ = 0;
};

struct Match {
  std::string name;
  std::size_t distance = 0;
};

// Exact (separator-insensitive) match first, then the unique nearest name
// within two edits. Ties return every tied candidate.
std::vector<Match> nearest(std::string_view wanted, const std::vector<std::string>& names) {
  const auto k = key_of(wanted);
  std::vector<Match> exact;
  for (const auto& n : names)
    if (key_of(n) == k) exact.push_back({n, 0});
  if (!exact.empty()) return exact;
  std::vector<Match> near;
  std::size_t best = 3;
  for (const auto& n : names) {
    const auto d = edit_distance(k, key_of(n));
    if (d > 2 || d * 2 > k.size()) continue;
    if (d < best) {
      best = d;
      near.clear();
    }
    if (d == best) near.push_back({n, d});
  }
  return near;
}

std::vector<std::string> suggestions(std::string_view wanted, const std::vector<std::string>& names) {
  std::vector<std::pair<std::size_t, std::string>> ranked;
  for (const auto& n : names) ranked.emplace_back(edit_distance(key_of(wanted), key_of(n)), n);
  std::sort(ranked.begin(), ranked.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && i < 3; ++i) out.push_back(ranked[i].second);
  return out;
}

std::vector<std::string> layer_names(const Catalog& c) {
  std::vector<std::string> out;
  for (const auto& l : c.layers()) out.push_back(l.name);
  return out;
}

std::vector<std::string> column_names(const CatalogLayer& l) {
  std::vector<std::string> out;
  for (const auto& c : l.columns) out.push_back(c.name);
  return out;
}

bool numeric(ValueType t) { return t == ValueType::integer || t == ValueType::real; }

class Resolver {
 public:
  Resolver(const Catalog& c, NlQueryAst& ast) : catalog_(c), ast_(ast) {}

  std::optional<std::string> layer(const Span& s, bool required) {
    const auto m = nearest(s.joined, layer_names(catalog_));
    if (m.empty()) {
      if (required) fail(Errc::NoSuchLayer, "no layer named '" + s.joined + "'", std::nullopt, suggestions(s.joined, layer_names(catalog_)));
      return std::nullopt;
    }
    if (m.size() > 1) ambiguous(s.joined, m);
    note(s.joined, m[0], "layer");
    return m[0].name;
  }

  const CatalogColumn& column(const CatalogLayer& l, const Span& s) {
    const auto m = nearest(s.joined, column_names(l));
    if (m.size() != 1)
      fail(Errc::UnknownColumn, "layer '" + l.name + "' has no column '" + s.joined + "'", std::nullopt,
           suggestions(s.joined, column_names(l)));
    note(s.joined, m[0], "column");
    return *l.find(m[0].name);
  }

  std::optional<std::string> try_column(const CatalogLayer& l, const Span& s) {
    const auto m = nearest(s.joined, column_names(l));
    if (m.size() != 1) return std::nullopt;
    note(s.joined, m[0], "column");
    return m[0].name;
  }

  // Layer owning a column when the question names none.
  std::string layer_for_column(const Span& s) {
    std::vector<Match> owners;
    std::size_t best = 3;
    for (const auto& l : catalog_.layers()) {
      const auto m = nearest(s.joined, column_names(l));
      if (m.size() != 1) continue;
      if (m[0].distance < best) {
        best = m[0].distance;
        owners.clear();
      }
      if (m[0].distance == best) owners.push_back({l.name, m[0].distance});
    }
    if (owners.empty()) {
      std::vector<std::string> all;
      for (const auto& l : catalog_.layers())
        for (const auto& c : l.columns) all.push_back(c.name);
      fail(Errc::UnknownColumn, "no layer has a column '" + s.joined + "'", std::nullopt, suggestions(s.joined, all));
    }
    if (owners.size() > 1) ambiguous(s.joined, owners);
    return owners[0].name;
  }

 private:
  [[noreturn]] void ambiguous(const std::string& what, const std::vector<Match>& m) const {
    std::vector<std::string> names;
    for (const auto& x : m) names.push_back(x.name);
    fail(Errc::AmbiguousLayer, "'" + what + "' could refer to " + join(names, ", "), std::nullopt, names);
  }

  void note(const std::string& wanted, const Match& m, const char* what) {
    if (m.distance > 0) ast_.corrections.push_back(std::string(what) + " '" + wanted + "' read as '" + m.name + "'");
  }

  const Catalog& catalog_;
  NlQueryAst& ast_;
};

Cell literal_for(const Token& tok, const CatalogColumn& col, CompareOp op) {
  auto bad = [&](const std::string& why) -> Cell {
    fail(Errc::UnparsableQuestion, "cannot compare column '" + col.name + "' with '" + tok.text + "': " + why, std::nullopt,
         {tok.text});
  };
  if (numeric(col.type)) {
    if (tok.kind != TokKind::number) return bad("expected a number");
    if (auto i = parse_int(tok.text)) return *i;
    return *parse_double(tok.text);
  }
  if (col.type == ValueType::boolean) {
    if (op != CompareOp::eq) return bad("booleans only support equality");
    if (tok.lower == "true" || tok.lower == "yes" || tok.lower == "1") return std::int64_t{1};
    if (tok.lower == "false" || tok.lower == "no" || tok.lower == "0") return std::int64_t{0};
    return bad("expected true or false");
  }
  if (col.type == ValueType::date) {
    if (tok.kind != TokKind::date) return bad("expected a YYYY-MM-DD date");
    return tok.text;
  }
  if (op != CompareOp::eq) return bad("text columns only support equality");
  return tok.text;
}

}  // namespace

NlQueryAst parse_nl(std::string_view question, const Catalog& catalog) {
  if (trim(question).empty()) fail(Errc::UnparsableQuestion, "empty question", 0);
  const RawQuery raw = Parser(tokenize(question)).parse();

  NlQueryAst ast;
  ast.aggregate = raw.aggregate.value_or(Aggregate::none);
  Resolver r(catalog, ast);
  const bool counting = ast.aggregate == Aggregate::count;

  bool target_is_layer = false;
  if (raw.layer) {
    ast.layer = *r.layer(*raw.layer, true);
  } else if (counting) {
    if (auto l = r.layer(raw.target, false)) {
      ast.layer = *l;
      target_is_layer = true;
    }
  }
  if (ast.layer.empty()) ast.layer = r.layer_for_column(raw.target);
  const CatalogLayer& layer = *catalog.find(ast.layer);

  if (!target_is_layer) {
    if (counting) {
      // Anything that is not a column counts rows ("number of stations").
      if (key_of(raw.target.joined) != key_of(layer.name)) ast.target_column = r.try_column(layer, raw.target);
    } else {
      const auto& col = r.column(layer, raw.target);
      if ((ast.aggregate == Aggregate::avg || ast.aggregate == Aggregate::sum) && !numeric(col.type))
        fail(Errc::UnparsableQuestion, "cannot " + std::string(to_string(ast.aggregate)) + " non-numeric column '" + col.name + "'",
             std::nullopt, {col.name});
      ast.target_column = col.name;
    }
  }

  for (const auto& c : raw.conds) {
    const auto& col = r.column(layer, c.column);
    Filter f{col.name, c.op, {}};
    for (const auto& lit : c.literals) f.values.push_back(literal_for(lit, col, c.op));
    ast.filters.push_back(std::move(f));
  }
  if (raw.group) {
    if (ast.aggregate == Aggregate::none)
      fail(Errc::UnparsableQuestion, "grouping needs an aggregate", std::nullopt, {raw.group->joined});
    ast.group_by = r.column(layer, *raw.group).name;
  }
  return ast;
}

namespace {

std::string sql_literal(const Cell& c) {
  if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
  if (const auto* b = std::get_if<bool>(&c)) return *b ? "1" : "0";
  if (const auto* s = std::get_if<std::string>(&c)) {
    std::string out = "'";
    for (char ch : *s) out += ch == '\'' ? std::string("''") : std::string(1, ch);
    return out + "'";
  }
  return "NULL";
}

}  // namespace

std::string ast_to_sql(const NlQueryAst& ast) {
  std::string select;
  const std::string target = ast.target_column ? quote_ident(*ast.target_column) : "*";
  switch (ast.aggregate) {
    case Aggregate::avg: select = "AVG(" + target + ")"; break;
    case Aggregate::min: select = "MIN(" + target + ")"; break;
    case Aggregate::max: select = "MAX(" + target + ")"; break;
    case Aggregate::sum: select = "SUM(" + target + ")"; break;
    case Aggregate::count: select = "COUNT(" + target + ")"; break;
    case Aggregate::none: select = target; break;
  }
  std::string sql = "SELECT ";
  if (ast.group_by) sql += quote_ident(*ast.group_by) + ", ";
  sql += select + " FROM " + quote_ident(ast.layer);
  for (std::size_t i = 0; i < ast.filters.size(); ++i) {
    const auto& f = ast.filters[i];
    sql += i ? " AND " : " WHERE ";
    sql += quote_ident(f.column);
    if (f.op == CompareOp::between)
      sql += " BETWEEN " + sql_literal(f.values.at(0)) + " AND " + sql_literal(f.values.at(1));
    else
      sql += std::string(" ") + to_string(f.op) + " " + sql_literal(f.values.at(0));
  }
  if (ast.group_by) sql += " GROUP BY " + quote_ident(*ast.group_by);
  return sql;
}

// ---------------------------------------------------------------------------
// Table QA

std::string render_cell(const Cell& c) {
  if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
  if (const auto* b = std::get_if<bool>(&c)) return *b ? "true" : "false";
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  return "";
}

namespace {

std::size_t code_points(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++n;
  return n;
}

// First `n` code points of s.
std::string prefix_points(std::string_view s, std::size_t n) {
  std::size_t seen = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) {
      if (seen == n) return std::string(s.substr(0, i));
      ++seen;
    }
  }
  return std::string(s);
}

std::string row_text(const std::vector<Cell>& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) out += (i ? " | " : "") + render_cell(row[i]);
  return out;
}

}  // namespace

std::string serialize_table_for_qa(const ResultTable& table, int max_rows, std::size_t max_chars) {
  if (max_rows < 1) fail(Errc::InvalidArgument, "max_rows must be at least 1");
  const std::string header = join(table.columns, " | ");
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < table.rows.size() && i < static_cast<std::size_t>(max_rows); ++i)
    lines.push_back(row_text(table.rows[i]));

  auto assemble = [&](std::size_t keep) {
    std::string out = header;
    for (std::size_t i = 0; i < keep; ++i) out += "\n" + lines[i];
    const auto dropped = table.rows.size() - keep;
    if (dropped) out += "\n\xE2\x80\xA6 (" + std::to_string(dropped) + " more rows)";
    return out;
  };
  std::size_t keep = lines.size();
  std::string out = assemble(keep);
  while (code_points(out) > max_chars && keep > 0) out = assemble(--keep);
  if (code_points(out) > max_chars) out = prefix_points(out, max_chars);
  return out;
}

std::optional<RemoteQaConfig> RemoteQaConfig::from_environment() {
  const char* url = std::getenv("ARGUS_QA_ENDPOINT");
  if (!url || !*url) return std::nullopt;
  RemoteQaConfig c;
  c.url = url;
  if (const char* token = std::getenv("ARGUS_QA_TOKEN"); token && *token) c.auth_token = token;
  return c;
}

void RemoteQaConfig::validate() const {
  if (!istarts_with(url, "http://") && !istarts_with(url, "https://"))
    fail(Errc::InvalidArgument, "QA endpoint must be an http(s) URL, got '" + url + "'");
  if (timeout.count() <= 0) fail(Errc::InvalidArgument, "QA timeout must be positive");
}

// ---------------------------------------------------------------------------
// Suite evaluation

const char* to_string(Outcome o) noexcept {
  switch (o) {
    case Outcome::correct: return "correct";
    case Outcome::unparsable: return "unparsable";
    default: return "incorrect";
  }
}

std::size_t SuiteReport::count(Outcome o) const {
  return static_cast<std::size_t>(std::count_if(cases.begin(), cases.end(), [&](const auto& c) { return c.outcome == o; }));
}

double SuiteReport::accuracy() const {
  return cases.empty() ? 0.0 : static_cast<double>(count(Outcome::correct)) / static_cast<double>(cases.size());
}

std::string SuiteReport::to_text() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    out << i + 1 << ". [" << to_string(c.outcome) << "] " << c.question << "\n";
    if (c.sql) out << "   " << *c.sql << "\n";
    if (!c.note.empty()) out << "   " << c.note << "\n";
  }
  out << "correct " << count(Outcome::correct) << "/" << cases.size() << ", unparsable " << count(Outcome::unparsable)
      << ", incorrect " << count(Outcome::incorrect) << "\n";
  return out.str();
}

std::vector<SuiteCase> parse_suite(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ParseError, std::string("question suite is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) fail(Errc::ParseError, "question suite must be a JSON array");
  std::vector<SuiteCase> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& e = doc[i];
    if (!e.is_object() || !e.contains("question") || !e["question"].is_string())
      fail(Errc::ParseError, "suite entry " + std::to_string(i + 1) + " needs a string \"question\"", static_cast<std::int64_t>(i + 1));
    SuiteCase c{e["question"].get<std::string>(), std::nullopt, std::nullopt};
    for (const char* key : {"expected_sql", "expected_answer"}) {
      if (!e.contains(key)) continue;
      if (!e[key].is_string())
        fail(Errc::ParseError, "suite entry " + std::to_string(i + 1) + ": \"" + key + "\" must be a string",
             static_cast<std::int64_t>(i + 1));
      (std::string_view(key) == "expected_sql" ? c.expected_sql : c.expected_answer) = e[key].get<std::string>();
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<SuiteCase> load_suite(const std::string& path) { return parse_suite(read_file(path)); }

namespace {

// Rows rendered without the header, one per line.
std::string answer_text(const ResultTable& t) {
  std::string out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) out += (i ? "\n" : "") + row_text(t.rows[i]);
  return out;
}

bool same_value(std::string_view a, std::string_view b) {
  a = trim(a);
  b = trim(b);
  if (a == b) return true;
  const auto x = parse_double(a), y = parse_double(b);
  return x && y && std::abs(*x - *y) <= 1e-9 * std::max({1.0, std::abs(*x), std::abs(*y)});
}

bool same_answer(std::string_view got, std::string_view expected) {
  const auto g = split(got, '\n'), e = split(expected, '\n');
  if (g.size() != e.size()) return false;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto gc = split(g[i], '|'), ec = split(e[i], '|');
    if (gc.size() != ec.size()) return false;
    for (std::size_t j = 0; j < gc.size(); ++j)
      if (!same_value(gc[j], ec[j])) return false;
  }
  return true;
}

}  // namespace

SuiteReport evaluate_nl_suite(const gpkg::Database& db, const std::vector<SuiteCase>& suite) {
  if (suite.empty()) fail(Errc::InvalidArgument, "question suite is empty");
  const auto catalog = Catalog::from_database(db);
  SuiteReport report;
  for (const auto& c : suite) {
    CaseResult r{c.question, Outcome::incorrect, std::nullopt, ""};
    try {
      const auto ast = parse_nl(c.question, catalog);
      r.sql = ast_to_sql(ast);
      if (c.expected_sql && normalize_sql(*r.sql) == normalize_sql(*c.expected_sql)) {
        r.outcome = Outcome::correct;
      } else {
        const auto got = answer_text(sql_query(db, *r.sql));
        std::optional<std::string> want = c.expected_answer;
        if (!want && c.expected_sql) want = answer_text(sql_query(db, *c.expected_sql));
        if (want && same_answer(got, *want)) {
          r.outcome = Outcome::correct;
        } else {
          r.note = "answer '" + got + "'" + (want ? " expected '" + *want + "'" : std::string(" with nothing to compare"));
        }
      }
    } catch (const Error& e) {
      const bool grammar = e.code() == Errc::UnparsableQuestion || e.code() == Errc::UnknownColumn ||
                           e.code() == Errc::AmbiguousLayer || e.code() == Errc::NoSuchLayer;
      r.outcome = grammar ? Outcome::unparsable : Outcome::incorrect;
      r.note = e.what();
    }
    report.cases.push_back(std::move(r));
  }
  return report;
}

}  // namespace argus::query
