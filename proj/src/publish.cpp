#include "argus/hash.hpp"
#include "argus/pipeline.hpp"
#include "argus/text.hpp"

#include <json.hpp>

#include <filesystem>

namespace argus::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<License>& known_licenses() {
  static const std::vector<License> list{
      {"CC-BY-4.0", "Creative Commons Attribution 4.0 International", "https://creativecommons.org/licenses/by/4.0/"},
      {"CC-BY-SA-4.0", "Creative Commons Attribution Share Alike 4.0 International",
       "https://creativecommons.org/licenses/by-sa/4.0/"},
      {"CC-BY-NC-4.0", "Creative Commons Attribution Non Commercial 4.0 International",
       "https://creativecommons.org/licenses/by-nc/4.0/"},
      {"CC0-1.0", "Creative Commons Zero v1.0 Universal", "https://creativecommons.org/publicdomain/zero/1.0/"},
      {"ODbL-1.0", "Open Data Commons Open Database License v1.0", "https://opendatacommons.org/licenses/odbl/1-0/"},
      {"ODC-By-1.0", "Open Data Commons Attribution License v1.0", "https://opendatacommons.org/licenses/by/1-0/"},
      {"PDDL-1.0", "Open Data Commons Public Domain Dedication & License 1.0",
       "https://opendatacommons.org/licenses/pddl/1-0/"},
      {"MIT", "MIT License", "https://opensource.org/licenses/MIT"},
      {"Apache-2.0", "Apache License 2.0", "https://www.apache.org/licenses/LICENSE-2.0"},
  };
  return list;
}

const License* find_license(std::string_view spdx_id) {
  for (const auto& l : known_licenses())
    if (l.id == spdx_id) return &l;
  return nullptr;
}

namespace {

std::string citation(const PublishConfig& c, Timestamp when) {
  const auto year = format_timestamp(when).substr(0, 4);
  std::string text = c.creators.empty() ? std::string("Anonymous") : join(c.creators, "; ");
  text += " (" + year + "). " + c.title + ".";
  if (c.doi) text += " https://doi.org/" + *c.doi;
  return text;
}

}  // namespace

std::string publish(const std::string& gpkg_path, const PublishConfig& config, std::optional<Timestamp> when) {
  const auto* license = find_license(config.license);
  if (!license) {
    std::vector<std::string> ids;
    for (const auto& l : known_licenses()) ids.push_back(l.id);
    fail(Errc::UnknownLicense, "unknown license '" + config.license + "'; known: " + join(ids, ", "), std::nullopt,
         ids);
  }
  if (config.title.empty()) fail(Errc::InvalidArgument, "publication needs a title");
  if (config.directory.empty()) fail(Errc::InvalidArgument, "publication needs a target directory");
  if (!fs::is_regular_file(gpkg_path)) fail(Errc::IoFailure, "database '" + gpkg_path + "' does not exist");

  // Collect what to ship before touching the target.
  std::vector<std::string> files{gpkg_path};
  {
    const auto db = gpkg::Database::open(gpkg_path);
    for (const auto& s : db.list_layers())
      if (s.kind == gpkg::LayerKind::raster_sidecar) {
        db.resolve_raster(s.name);  // verifies the checksum
        files.push_back(db.sidecar_path(s.name));
      }
  }
  for (const auto& p : {provenance_path(gpkg_path), metrics_path(gpkg_path)})
    if (fs::is_regular_file(p)) files.push_back(p);

  const Timestamp published = when.value_or(std::chrono::system_clock::now());
  const fs::path target = fs::absolute(config.directory);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path temp = target.parent_path() / ("." + target.filename().string() + ".tmp");
  std::error_code ec;
  fs::remove_all(temp, ec);
  try {
    fs::create_directories(temp);
    json listing = json::array();
    for (const auto& f : files) {
      const auto name = fs::path(f).filename();
      fs::copy_file(f, temp / name);
      listing.push_back({{"path", name.string()},
                         {"sha256", sha256_file((temp / name).string())},
                         {"bytes", fs::file_size(temp / name)}});
    }
    write_file((temp / "LICENSE").string(),
               license->name + "\nSPDX-License-Identifier: " + license->id + "\n" + license->url + "\n");
    json descriptor{{"title", config.title},
                    {"creators", config.creators},
                    {"license", {{"id", license->id}, {"name", license->name}, {"url", license->url}}},
                    {"published", format_timestamp(published)},
                    {"citation", {{"doi", config.doi ? json(*config.doi) : json()}, {"text", citation(config, published)}}},
                    {"files", listing},
                    {"tool_version", kToolVersion}};
    write_file((temp / "descriptor.json").string(), descriptor.dump(2) + "\n");
    fs::remove_all(target, ec);
    fs::rename(temp, target);
  } catch (const fs::filesystem_error& e) {
    fs::remove_all(temp, ec);
    fail(Errc::IoFailure, std::string("publish failed: ") + e.what());
  } catch (...) {
    fs::remove_all(temp, ec);
    throw;
  }
  return target.string();
}

}  // namespace argus::pipeline
