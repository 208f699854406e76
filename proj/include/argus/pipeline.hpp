#pragma once

#include "argus/enrich.hpp"
#include "argus/geopackage.hpp"
#include "argus/ingest.hpp"
#include "argus/model.hpp"
#include "argus/query.hpp"
#include "argus/standardize.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace argus::pipeline {

// --- manifest ---------------------------------------------------------------

struct InputSpec {
  std::string id;  // also the layer name
  ingest::SourceDescriptor source;
  int line = 0;
};

enum class StepKind { idw, kriging, kde, one_hot, augment };

const char* to_string(StepKind k) noexcept;
std::optional<StepKind> parse_step_kind(std::string_view s);

/// Raster-producing steps write a new layer; one_hot and augment may replace
/// their source by naming it as target.
struct EnrichmentStep {
  std::string name;
  StepKind kind = StepKind::idw;
  std::string source;
  std::string target;
  std::string column;  // value column (idw, kriging), category column (one_hot, augment)
  double cell_size = 0;
  std::optional<int> crs;
  std::optional<Envelope> bbox;
  double power = 2.0;
  std::optional<double> max_radius;
  enrich::VariogramKind variogram = enrich::VariogramKind::spherical;
  int bins = 12;
  bool jitter = false;
  std::optional<double> bandwidth;
  std::string category;  // augment: the rare value
  std::size_t count = 0;
  double sigma = 0;
  std::uint64_t seed = 1;
  int line = 0;

  bool produces_raster() const noexcept {
    return kind == StepKind::idw || kind == StepKind::kriging || kind == StepKind::kde;
  }
};

/// Point coverage of `points` at `radius` before, raster coverage of
/// `raster` after, both over the site boundary.
struct CoverageTarget {
  std::string name;
  std::string points;
  double radius = 0;
  std::string raster;
  int line = 0;
};

struct PublishConfig {
  std::string license;
  std::string title;
  std::vector<std::string> creators;
  std::optional<std::string> doi;
  std::string directory;
};

struct PipelineManifest {
  SiteConfig site;
  std::vector<InputSpec> inputs;
  std::string dictionary_path;
  std::vector<EnrichmentStep> steps;
  std::string output_gpkg;
  std::optional<Timestamp> timestamp;  // pins gpkg_contents.last_change
  std::vector<CoverageTarget> coverage;
  std::vector<std::string> analysis;  // SQL statements timed as one script
  std::optional<PublishConfig> publish;
  std::optional<query::RemoteQaConfig> qa;

  const InputSpec* input(std::string_view id) const;
};

/// Relative paths resolve against `base_dir`. ParseError and UnknownKey carry
/// the 1-based line; DanglingReference names the step and the missing layer.
PipelineManifest load_manifest(std::string_view text, const std::string& base_dir = ".");
PipelineManifest load_manifest_file(const std::string& path);

// --- provenance ---------------------------------------------------------------

/// Append-only and safe to share between workers.
class ProvenanceLog {
 public:
  void append(ProvenanceRecord r);
  /// Stage order, then the order in which inputs and steps were declared.
  std::vector<ProvenanceRecord> records() const;
  void set_order(std::vector<std::string> ids);

 private:
  mutable std::mutex mu_;
  std::vector<ProvenanceRecord> records_;
  std::vector<std::string> order_;
};

std::string to_json_line(const ProvenanceRecord& r);
ProvenanceRecord parse_json_line(std::string_view line);
void write_provenance(const std::string& path, const std::vector<ProvenanceRecord>& records);
void append_provenance(const std::string& path, const ProvenanceRecord& record);
std::vector<ProvenanceRecord> read_provenance(const std::string& path);

/// Content hash of a dataset independent of how it was produced.
std::string dataset_digest(const ingest::Dataset& d);

// --- metrics ----------------------------------------------------------------

struct CoverageMetric {
  std::string name;
  double before = 0;
  double after = 0;
};

struct MetricsReport {
  std::size_t n_input_datasets = 0;
  std::size_t n_databases = 0;
  std::size_t n_layers = 0;
  double standardized_ratio_before = 0;
  double standardized_ratio_after = 0;
  std::vector<CoverageMetric> coverage;
  std::vector<std::pair<std::string, double>> stage_seconds;
  std::optional<double> cross_dataset_query_seconds;
  std::size_t analysis_statements = 0;

  std::string to_text() const;
  std::string to_json() const;
  static MetricsReport from_json(std::string_view json);
};

using StageTimings = std::vector<std::pair<Stage, double>>;

/// `before` holds the freshly ingested datasets keyed by layer name.
MetricsReport metrics_report(const std::vector<std::pair<std::string, ingest::Dataset>>& before,
                             const gpkg::Database& db, const StageTimings& timings, const PipelineManifest& manifest,
                             const standardize::AttributeDictionary& dict);

// --- run --------------------------------------------------------------------

struct RunOptions {
  int workers = 1;
  /// Stop after this stage. Before integrate nothing is written to disk.
  Stage last_stage = Stage::integrate;
  /// Whether to write <stem>.provenance.jsonl and <stem>.metrics.json.
  bool write_reports = true;
};

struct RunResult {
  std::string database_path;  // empty when stopped before integrate
  MetricsReport metrics;
  std::vector<ProvenanceRecord> provenance;
  std::vector<standardize::StandardizationReport> reports;
  std::vector<std::pair<std::string, ingest::Dataset>> datasets;  // final layers in integration order
};

/// Failures raise StageFailed naming the input and stage; once output files
/// exist they are removed first and PartialRunArtifactsRemoved is raised.
RunResult run(const PipelineManifest& manifest, const RunOptions& options = {});

/// Runs `fn(i)` for i in [0, n) on up to `workers` threads. After a failure no
/// new items start; the failure with the lowest index is rethrown.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

std::string provenance_path(const std::string& gpkg_path);
std::string metrics_path(const std::string& gpkg_path);

// --- publication --------------------------------------------------------------

struct License {
  std::string id;
  std::string name;
  std::string url;
};

/// Built-in SPDX subset suitable for data.
const std::vector<License>& known_licenses();
const License* find_license(std::string_view spdx_id);

/// Copies the database, its sidecars and provenance into `config.directory`
/// with a LICENSE and descriptor.json, replacing any previous bundle.
std::string publish(const std::string& gpkg_path, const PublishConfig& config,
                    std::optional<Timestamp> when = std::nullopt);

}  // namespace argus::pipeline
