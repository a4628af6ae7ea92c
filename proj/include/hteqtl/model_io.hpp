#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hteqtl/model.hpp"

namespace hteqtl {

inline constexpr int kModelFormatVersion = 1;

// Shortest-free fixed form: 17 significant digits, "%.17g".
std::string format_real(double x);

std::string serialize_model(const FullModel& model);
// Parses and validates; any invariant violation is an InputError.
FullModel deserialize_model(const std::string& text);

void write_model(const FullModel& model, const std::filesystem::path& path);
FullModel read_model(const std::filesystem::path& path);

std::string serialize_pairwise(const PairwiseModel& m);
PairwiseModel deserialize_pairwise(const std::string& text);

// A pairwise directory holds tissues.json plus one pair_<i>_<j>.json per fit.
struct PairwiseDir {
  TissueSet tissues;
  std::vector<PairwiseModel> pairs;  // sorted by (i, j)
};
void write_pairwise_dir(const std::filesystem::path& dir, const TissueSet& tissues,
                        const std::vector<PairwiseModel>& pairs);
PairwiseDir read_pairwise_dir(const std::filesystem::path& dir);
std::string pairwise_file_name(int i, int j);

std::string serialize_tissues(const TissueSet& t);
TissueSet deserialize_tissues(const std::string& text);

std::string read_text(const std::filesystem::path& path);
// Writes via a temporary file and rename.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace hteqtl
