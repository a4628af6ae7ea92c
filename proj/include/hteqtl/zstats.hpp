#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "hteqtl/model.hpp"

namespace hteqtl {

inline constexpr double kCorrClamp = 1e-12;

// Feature-by-sample table as read from a TSV (header = sample ids, first
// column = feature ids).
struct FeatureTable {
  std::vector<std::string> feature_ids;
  std::vector<std::string> sample_ids;
  RowMatrix values;

  int find(const std::string& id) const;  // -1 when absent
};

FeatureTable read_feature_table(const std::filesystem::path& path);

struct TissueData {
  std::string name;
  FeatureTable expression;  // G x n
  FeatureTable genotype;    // S x n, minor-allele dosage
  FeatureTable covariates;  // c x n (may have zero rows)

  int samples() const { return static_cast<int>(expression.sample_ids.size()); }
  int covariate_count() const { return static_cast<int>(covariates.values.rows()); }
};

// Loads <dir>/expression.tsv, genotype.tsv and covariates.tsv and aligns the
// genotype and covariate columns to the expression sample order.
TissueData load_tissue_dir(const std::string& name, const std::filesystem::path& dir);

std::vector<std::pair<std::string, std::string>> read_pairs(const std::filesystem::path& path);

// Y minus its projection on the row space of [1; C], via Householder QR.
RowMatrix residualize(const RowMatrix& y, const RowMatrix& c);

double corr_to_z(double r, double d);

TissueSet tissue_set_of(const std::vector<TissueData>& data);

ZMatrix compute_z_matrix(const std::vector<TissueData>& data,
                         const std::vector<std::pair<std::string, std::string>>& pairs, const TissueSet& tissues,
                         int threads = 0);

}  // namespace hteqtl
