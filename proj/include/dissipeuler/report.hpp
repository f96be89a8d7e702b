#pragma once

// Artifact directory plumbing: content hashes, the manifest, and the plain-text
// summary of a run directory.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dissipeuler {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

// One audit row. `source` names the module/operation that produced it.
struct AuditRow {
  std::string name;
  std::string source;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string note;
};

nlohmann::json to_json(const AuditRow& row);

// Writes manifest.json listing every other regular file under `dir` (sorted,
// relative paths) with its size and SHA-256. No timestamps or host details.
void write_manifest(const std::filesystem::path& dir, const nlohmann::json& header);

struct RenderResult {
  bool ok = false;      // artifacts complete and every audit passed
  bool complete = false;
  std::vector<std::string> missing;
  std::vector<std::string> corrupted;  // hash mismatch
  std::string text;
};

// Reads manifest.json and report.json from a run directory and renders the
// audit table; lists missing or altered artifacts.
RenderResult report_render(const std::filesystem::path& dir);

}  // namespace dissipeuler
