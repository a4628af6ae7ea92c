#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hteqtl/model.hpp"

namespace hteqtl {

enum class ZFormat { Tsv, Binary };

// "<path>.tissues.json", written next to every z-matrix.
std::filesystem::path tissues_sidecar(const std::filesystem::path& zpath);

// Chunked reader for either format; binary detected by the "HTZ1" magic.
// Binary rows carry no identifiers, their pair_id is the 0-based row number.
class ZReader {
public:
  explicit ZReader(const std::filesystem::path& path);

  ZFormat format() const { return format_; }
  int cols() const { return cols_; }
  const std::vector<std::string>& header_names() const { return names_; }
  std::optional<std::uint64_t> total_rows() const { return total_; }

  // Reads up to max_rows rows; returns the number read (0 at end).
  std::size_t next(std::size_t max_rows, std::vector<std::string>& ids, RowMatrix& values);

private:
  std::filesystem::path path_;
  std::ifstream in_;
  ZFormat format_ = ZFormat::Tsv;
  int cols_ = 0;
  std::vector<std::string> names_;
  std::optional<std::uint64_t> total_;
  std::uint64_t row_ = 0;
  std::uint64_t line_no_ = 1;
};

class ZWriter {
public:
  ZWriter(const std::filesystem::path& path, ZFormat format, const std::vector<std::string>& tissue_names);
  ~ZWriter();
  ZWriter(const ZWriter&) = delete;
  ZWriter& operator=(const ZWriter&) = delete;

  void write(const std::vector<std::string>& ids, const RowMatrix& values);
  void close();

private:
  std::filesystem::path path_;
  std::ofstream out_;
  ZFormat format_;
  int cols_;
  std::uint64_t rows_ = 0;
  bool closed_ = false;
};

// Whole-file read; tissues from `tissues` or the sidecar.
ZMatrix read_zmatrix(const std::filesystem::path& path, const TissueSet* tissues = nullptr);
// Writes the matrix and its tissue sidecar.
void write_zmatrix(const ZMatrix& z, const std::filesystem::path& path, ZFormat format = ZFormat::Tsv);

TissueSet read_tissues_for(const std::filesystem::path& zpath);

}  // namespace hteqtl
