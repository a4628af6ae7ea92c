#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "hteqtl/model.hpp"

namespace hteqtl {

inline constexpr int kMaxDirectTissues = 4;
inline constexpr double kEmSlack = 1e-9;

struct EmOptions {
  int max_iters = 500;
  double rel_tol = 1e-6;
  std::optional<std::uint64_t> subsample = 1'000'000;
  std::uint64_t seed = 0;
  int threads = 0;

  void check() const;
};

// Parameters of the k-tissue mixture, k <= 4. p is indexed by
// Configuration::bits, so for k = 2 the order is p00, p01, p10, p11.
struct MixtureParams {
  Matrix delta;
  Matrix sigma;
  std::vector<double> p;

  int size() const { return static_cast<int>(delta.rows()); }
  std::vector<std::string> violations() const;

  static MixtureParams from_pairwise(const PairwiseModel& m);
};

struct MixtureFit {
  MixtureParams params;
  double loglik = 0.0;
  int iters = 0;
  bool converged = false;
  std::vector<double> trace;  // pseudo-log-likelihood after each E-step
};

// Covariance of configuration g: Delta + Sigma restricted to the active block.
Matrix component_cov(const Matrix& delta, const Matrix& sigma, const Configuration& g);

// N x 2^k posterior configuration weights.
RowMatrix estep(const RowMatrix& z, const MixtureParams& params, int threads = 0);
double pseudo_loglik(const RowMatrix& z, const MixtureParams& params, int threads = 0);

// Rows used for fitting: all rows, or the seeded subsample in ascending order.
std::vector<std::size_t> subsample_rows(std::size_t n, const EmOptions& opts);

MixtureParams default_init(const RowMatrix& z);

MixtureFit fit_em(const RowMatrix& z, const std::optional<MixtureParams>& init, const EmOptions& opts);

PairwiseModel to_pairwise(const MixtureFit& fit, int i, int j);

// Fits tissues (i, j) of z on the seeded subsample.
PairwiseModel fit_pair(const ZMatrix& z, int i, int j, const EmOptions& opts);

// All K(K-1)/2 pairs, ordered (0,1), (0,2), ..., (K-2,K-1).
std::vector<PairwiseModel> fit_all_pairs(const ZMatrix& z, const EmOptions& opts, int threads = 0);

}  // namespace hteqtl
