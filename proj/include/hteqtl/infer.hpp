#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hteqtl/model.hpp"
#include "hteqtl/mvn.hpp"

namespace hteqtl {

class ZReader;

inline constexpr std::size_t kDefaultChunkRows = 65536;

// Delta_ab + Sigma_ab * g_a * g_b.
Matrix config_cov(const Configuration& g, const Matrix& delta, const Matrix& sigma);

// Cholesky factor and log prior for every retained configuration.
class ComponentCache {
public:
  explicit ComponentCache(const FullModel& model);

  int dims() const { return dims_; }
  std::size_t size() const { return configs_.size(); }
  const Configuration& config(std::size_t i) const { return configs_[i]; }
  double log_prior(std::size_t i) const { return log_prior_[i]; }
  const CholFactor& factor(std::size_t i) const { return factors_[i]; }

  // out(c, r) = log p(g_c) + log f_c(z_r) for the n rows of a row-major panel.
  void log_joint(const double* rows, std::size_t n, Matrix& out) const;

private:
  int dims_ = 0;
  std::vector<Configuration> configs_;
  std::vector<double> log_prior_;
  std::vector<CholFactor> factors_;
};

// 1 for retained configurations inside the family. DomainError when either
// side of the partition is empty.
std::vector<std::uint8_t> family_mask(const ComponentCache& cache, const ConfigFamily& family);

double lfdr(const Eigen::Ref<const Vector>& z, const ComponentCache& cache, const ConfigFamily& family);

// lfdr for every row, parallel over fixed row blocks.
std::vector<double> lfdr_rows(const RowMatrix& z, const ComponentCache& cache, const std::vector<std::uint8_t>& mask,
                              int threads = 0);

// Streams the reader in chunks, appending one lfdr per row.
std::vector<double> lfdr_stream(ZReader& reader, const ComponentCache& cache, const std::vector<std::uint8_t>& mask,
                                std::size_t chunk_rows = kDefaultChunkRows, int threads = 0);

// Rejects the longest ascending-lfdr prefix whose mean stays below alpha.
// Ties are ordered by original index.
DiscoverySet adaptive_reject(std::vector<double> lfdrs, double alpha);

DiscoverySet test_family(const ZMatrix& z, const FullModel& model, const ConfigFamily& family, double alpha,
                         int threads = 0);

Vector hamming_mass(const FullModel& model);

struct Merge {
  int left;   // cluster ids: leaves 0..K-1, merges K, K+1, ...
  int right;
  double height;
};

struct Dendrogram {
  std::vector<Merge> merges;
  std::string newick;
};

// Single linkage on 1 - correlation(Sigma).
Dendrogram tissue_cluster(const Matrix& sigma, const std::vector<std::string>& names);

}  // namespace hteqtl
