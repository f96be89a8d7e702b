#include "dissipeuler/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <openssl/evp.h>

namespace dissipeuler {

namespace fs = std::filesystem;

namespace {

std::string hex(const unsigned char* data, unsigned len) {
  std::ostringstream s;
  for (unsigned i = 0; i < len; ++i) s << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(data[i]);
  return s.str();
}

class Digest {
 public:
  Digest() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256: init failed");
  }
  ~Digest() { EVP_MD_CTX_free(ctx_); }
  Digest(const Digest&) = delete;
  Digest& operator=(const Digest&) = delete;
  void update(const char* data, std::size_t len) {
    if (EVP_DigestUpdate(ctx_, data, len) != 1) throw std::runtime_error("sha256: update failed");
  }
  std::string finish() {
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    if (EVP_DigestFinal_ex(ctx_, out, &len) != 1) throw std::runtime_error("sha256: final failed");
    return hex(out, len);
  }

 private:
  EVP_MD_CTX* ctx_;
};

std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  Digest d;
  d.update(bytes.data(), bytes.size());
  return d.finish();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  Digest d;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    d.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return d.finish();
}

nlohmann::json to_json(const AuditRow& row) {
  nlohmann::json j = {{"name", row.name},         {"source", row.source}, {"value", row.value},
                      {"tolerance", row.tolerance}, {"pass", row.pass}};
  if (!row.note.empty()) j["note"] = row.note;
  return j;
}

void write_manifest(const fs::path& dir, const nlohmann::json& header) {
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), dir).generic_string();
    if (rel == "manifest.json") continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  nlohmann::json manifest = header;
  manifest["files"] = nlohmann::json::array();
  for (const auto& f : files)
    manifest["files"].push_back(
        {{"path", f}, {"bytes", fs::file_size(dir / f)}, {"sha256", sha256_file(dir / f)}});
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
}

RenderResult report_render(const fs::path& dir) {
  RenderResult r;
  std::ostringstream text;
  if (!fs::is_directory(dir)) {
    r.missing.push_back(dir.string());
    r.text = "missing run directory: " + dir.string() + "\n";
    return r;
  }
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    r.missing.push_back("manifest.json");
    r.text = "missing artifacts in " + dir.string() + ":\n  manifest.json\n";
    return r;
  }
  nlohmann::json manifest;
  try {
    std::ifstream in(manifest_path);
    manifest = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    r.corrupted.push_back("manifest.json");
    r.text = std::string("unreadable manifest.json: ") + e.what() + "\n";
    return r;
  }
  for (const auto& f : manifest.value("files", nlohmann::json::array())) {
    const std::string path = f.at("path").get<std::string>();
    if (!fs::exists(dir / path)) {
      r.missing.push_back(path);
    } else if (sha256_file(dir / path) != f.at("sha256").get<std::string>()) {
      r.corrupted.push_back(path);
    }
  }
  const bool listed_report = std::any_of(manifest["files"].begin(), manifest["files"].end(),
                                         [](const nlohmann::json& f) { return f.at("path") == "report.json"; });
  if (!listed_report || !fs::exists(dir / "report.json")) {
    if (std::find(r.missing.begin(), r.missing.end(), "report.json") == r.missing.end())
      r.missing.push_back("report.json");
  }
  r.complete = r.missing.empty() && r.corrupted.empty();

  text << "run: " << dir.string() << "\n";
  text << "experiment: " << manifest.value("experiment", std::string("?")) << ", seed "
       << manifest.value("seed", nlohmann::json(nullptr)).dump() << "\n";
  for (const auto& m : r.missing) text << "MISSING  " << m << "\n";
  for (const auto& c : r.corrupted) text << "ALTERED  " << c << " (hash mismatch)\n";

  bool all_pass = false;
  if (fs::exists(dir / "report.json")) {
    std::ifstream in(dir / "report.json");
    const auto report = nlohmann::json::parse(in);
    const auto& audits = report.at("audits");
    std::size_t name_w = 5;
    std::size_t src_w = 6;
    for (const auto& a : audits) {
      name_w = std::max(name_w, a.at("name").get<std::string>().size());
      src_w = std::max(src_w, a.at("source").get<std::string>().size());
    }
    text << "\n"
         << std::left << std::setw(6) << "" << std::setw(static_cast<int>(name_w) + 2) << "audit"
         << std::setw(static_cast<int>(src_w) + 2) << "source" << std::setw(12) << "value" << std::setw(12)
         << "tolerance" << "margin\n";
    all_pass = true;
    for (const auto& a : audits) {
      const bool pass = a.at("pass").get<bool>();
      all_pass = all_pass && pass;
      const double value = a.at("value").get<double>();
      const double tol = a.at("tolerance").get<double>();
      text << std::left << std::setw(6) << (pass ? "PASS" : "FAIL") << std::setw(static_cast<int>(name_w) + 2)
           << a.at("name").get<std::string>() << std::setw(static_cast<int>(src_w) + 2)
           << a.at("source").get<std::string>() << std::setw(12) << format_number(value) << std::setw(12)
           << format_number(tol) << format_number(tol - value);
      if (a.contains("note")) text << "  (" << a.at("note").get<std::string>() << ")";
      text << "\n";
    }
    text << "\n" << (all_pass ? "all audits passed" : "some audits FAILED") << "\n";
    text << "traces: see *.csv in the run directory; reports: report.json\n";
  }
  r.ok = r.complete && all_pass;
  r.text = text.str();
  return r;
}

}  // namespace dissipeuler
