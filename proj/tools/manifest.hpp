#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace hteqtl::cli {

inline constexpr const char* kToolVersion = "1.0.0";

// Run record written next to the primary output as <output>.manifest.json.
class Manifest {
public:
  explicit Manifest(std::string command) : command_(std::move(command)) {}

  void param(const std::string& name, const std::string& value) { params_[name] = value; }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void set_threads(int threads) { threads_ = threads; }
  void input(const std::filesystem::path& path);  // files, or every regular file of a directory
  void output(const std::filesystem::path& path);

  std::string to_json() const;
  void write(const std::filesystem::path& primary) const;

  static std::filesystem::path path_for(const std::filesystem::path& primary);

private:
  struct FileHash {
    std::string path;
    std::string sha256;
  };
  static void hash_into(const std::filesystem::path& path, std::vector<FileHash>& out);

  std::string command_;
  std::map<std::string, std::string> params_;
  std::vector<FileHash> inputs_;
  std::vector<FileHash> outputs_;
  std::uint64_t seed_ = 0;
  int threads_ = 1;
};

// sha256 recorded for `file` in the manifest of `file`, if that manifest exists.
std::string recorded_output_hash(const std::filesystem::path& file);

}  // namespace hteqtl::cli
