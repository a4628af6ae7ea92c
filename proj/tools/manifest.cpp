#include "manifest.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>

#include "hteqtl/errors.hpp"
#include "hteqtl/hash.hpp"
#include "hteqtl/model_io.hpp"

namespace fs = std::filesystem;

namespace hteqtl::cli {

fs::path Manifest::path_for(const fs::path& primary) {
  fs::path p = primary;
  if (!p.has_filename()) p = p.parent_path();
  return p.string() + ".manifest.json";
}

void Manifest::hash_into(const fs::path& path, std::vector<FileHash>& out) {
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out.push_back({fs::absolute(f).lexically_normal().string(), sha256_file(f)});
    return;
  }
  out.push_back({fs::absolute(path).lexically_normal().string(), sha256_file(path)});
}

void Manifest::input(const fs::path& path) { hash_into(path, inputs_); }
void Manifest::output(const fs::path& path) { hash_into(path, outputs_); }

std::string Manifest::to_json() const {
  nlohmann::ordered_json j;
  j["tool"] = "ht-eqtl";
  j["version"] = kToolVersion;
  j["command"] = command_;
  j["seed"] = seed_;
  j["threads"] = threads_;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  for (const auto& [k, v] : params_) params[k] = v;
  j["params"] = params;
  auto files = [](const std::vector<FileHash>& v) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (const auto& f : v) a.push_back({{"path", f.path}, {"sha256", f.sha256}});
    return a;
  };
  j["inputs"] = files(inputs_);
  j["outputs"] = files(outputs_);
  return j.dump(2) + "\n";
}

void Manifest::write(const fs::path& primary) const { write_text(path_for(primary), to_json()); }

std::string recorded_output_hash(const fs::path& file) {
  const fs::path mpath = Manifest::path_for(file);
  if (!fs::exists(mpath)) return {};
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(mpath));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(mpath.string() + ": " + e.what());
  }
  if (!j.contains("outputs")) return {};
  const auto target = fs::weakly_canonical(file);
  for (const auto& o : j["outputs"]) {
    if (!o.contains("path") || !o.contains("sha256")) continue;
    if (fs::weakly_canonical(o["path"].get<std::string>()) == target) return o["sha256"].get<std::string>();
  }
  return {};
}

}  // namespace hteqtl::cli
