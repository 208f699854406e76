#pragma once

#include "argus/geopackage.hpp"
#include "argus/model.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace argus::query {

// --- SQL passthrough --------------------------------------------------------

struct ResultTable {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  std::size_t size() const noexcept { return rows.size(); }
  bool operator==(const ResultTable&) const = default;
};

/// Rejects anything that is not a single SELECT/WITH statement with NotReadOnly.
void check_read_only(std::string_view sql);

/// Runs one read-only statement. Geometry blobs come back as WKT text.
ResultTable sql_query(const gpkg::Database& db, std::string_view sql);

/// Whitespace collapsed, text outside string literals upper-cased, identifier
/// quotes and a trailing semicolon removed.
std::string normalize_sql(std::string_view sql);

// --- catalog ----------------------------------------------------------------

struct CatalogColumn {
  std::string name;
  ValueType type = ValueType::text;
};

struct CatalogLayer {
  std::string name;
  std::vector<CatalogColumn> columns;
  std::int64_t row_count = 0;

  const CatalogColumn* find(std::string_view column) const;
};

class Catalog {
 public:
  Catalog() = default;
  explicit Catalog(std::vector<CatalogLayer> layers) : layers_(std::move(layers)) {}

  /// Vector layers of the database with their attribute columns.
  static Catalog from_database(const gpkg::Database& db);

  const std::vector<CatalogLayer>& layers() const noexcept { return layers_; }
  const CatalogLayer* find(std::string_view layer) const;

 private:
  std::vector<CatalogLayer> layers_;
};

// --- restricted natural language --------------------------------------------

enum class Aggregate { none, avg, min, max, sum, count };
enum class CompareOp { eq, lt, gt, le, ge, between };

const char* to_string(Aggregate a) noexcept;
const char* to_string(CompareOp op) noexcept;

struct Filter {
  std::string column;
  CompareOp op = CompareOp::eq;
  std::vector<Cell> values;  // two for between, otherwise one

  bool operator==(const Filter&) const = default;
};

struct NlQueryAst {
  Aggregate aggregate = Aggregate::none;
  std::optional<std::string> target_column;
  std::string layer;
  std::vector<Filter> filters;
  std::optional<std::string> group_by;
  /// Fuzzy matches applied while resolving names.
  std::vector<std::string> corrections;

  /// Compares the query itself, not the correction notes.
  bool operator==(const NlQueryAst& o) const {
    return aggregate == o.aggregate && target_column == o.target_column && layer == o.layer && filters == o.filters &&
           group_by == o.group_by;
  }
};

/// UnparsableQuestion carries the number of tokens understood as detail and
/// the matched prefix as a note. UnknownColumn notes hold up to three
/// suggestions; AmbiguousLayer notes hold the candidates.
NlQueryAst parse_nl(std::string_view question, const Catalog& catalog);

std::string ast_to_sql(const NlQueryAst& ast);

// --- table QA ----------------------------------------------------------------

std::string render_cell(const Cell& c);

/// Header plus up to `max_rows` pipe-delimited rows, never longer than
/// `max_chars` code points.
std::string serialize_table_for_qa(const ResultTable& table, int max_rows, std::size_t max_chars);

struct RemoteQaConfig {
  std::string url;
  std::chrono::milliseconds timeout{10000};
  std::optional<std::string> auth_token;

  /// ARGUS_QA_ENDPOINT, when set.
  static std::optional<RemoteQaConfig> from_environment();
  void validate() const;
};

/// What the caller may log about one exchange; the auth token never appears.
struct QaExchange {
  std::string url;
  std::string question;
  std::string table_sha256;
  int status = 0;
  std::string answer;
  std::chrono::milliseconds elapsed{0};
};

using QaLogger = std::function<void(const QaExchange&)>;

/// POSTs {"question","table"} and returns the response's "answer".
std::string remote_qa(std::string_view question, std::string_view table, const RemoteQaConfig& config,
                      const QaLogger& log = {});

// --- suite evaluation --------------------------------------------------------

struct SuiteCase {
  std::string question;
  std::optional<std::string> expected_sql;
  std::optional<std::string> expected_answer;
};

enum class Outcome { correct, incorrect, unparsable };
const char* to_string(Outcome o) noexcept;

struct CaseResult {
  std::string question;
  Outcome outcome = Outcome::incorrect;
  std::optional<std::string> sql;
  std::string note;
};

struct SuiteReport {
  std::vector<CaseResult> cases;

  std::size_t count(Outcome o) const;
  double accuracy() const;
  std::string to_text() const;
};

/// JSON: an array of {"question", "expected_sql"?, "expected_answer"?}.
std::vector<SuiteCase> parse_suite(std::string_view json);
std::vector<SuiteCase> load_suite(const std::string& path);

SuiteReport evaluate_nl_suite(const gpkg::Database& db, const std::vector<SuiteCase>& suite);

}  // namespace argus::query
