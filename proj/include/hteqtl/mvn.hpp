#pragma once

#include <cstdint>
#include <map>

#include "hteqtl/configuration.hpp"
#include "hteqtl/model.hpp"

namespace hteqtl {

inline constexpr std::uint64_t kDefaultMassDraws = 10'000'000;
inline constexpr std::uint64_t kDefaultMassSeed = 20170401;
inline constexpr double kRepairFloor = 0.01;

double norm_cdf(double x);
double norm_sf(double x);  // upper tail, relative accuracy into the far tail
double norm_quantile(double p);
double log_norm_pdf(double x);

// Lower Cholesky factor of a covariance.
struct CholFactor {
  Matrix lower;
  double log_det = 0.0;

  // DomainError when `cov` is not positive definite.
  static CholFactor of(const Matrix& cov, const std::string& what = "covariance");
  int size() const { return static_cast<int>(lower.rows()); }
};

double logpdf(const Eigen::Ref<const Vector>& z, const CholFactor& factor);

// P(W1 >= tau1, W2 >= tau2) for a standard bivariate normal with correlation
// omega. Absolute error below 1e-14; results under 1e-4 are refined by
// positive-integrand quadrature so tail cells keep relative accuracy.
double bvn_upper(double tau1, double tau2, double omega);

bool is_positive_definite(const Matrix& m);

// Eigenvalue flooring followed by rescaling to unit diagonal. Returns the
// input unchanged when it is already PD with unit diagonal.
Matrix pd_repair(const Matrix& m, double floor = kRepairFloor);

// Counts of configurations 1{W_k > tau_k} over `draws` samples from
// N(0, omega). Counts sum to `draws`.
std::map<Configuration, std::uint64_t> mc_config_counts(const Matrix& omega, const Vector& tau, std::uint64_t draws,
                                                        std::uint64_t seed, int threads = 0);
std::map<Configuration, double> mc_config_mass(const Matrix& omega, const Vector& tau, std::uint64_t draws,
                                               std::uint64_t seed, int threads = 0);

// Exact probability of the rectangle selected by gamma, K <= 4.
double rect_prob_exact(const Matrix& omega, const Vector& tau, const Configuration& gamma);

}  // namespace hteqtl
