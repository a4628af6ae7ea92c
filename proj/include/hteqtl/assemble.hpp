#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hteqtl/model.hpp"
#include "hteqtl/mvn.hpp"
#include "hteqtl/pairfit.hpp"

namespace hteqtl {

inline constexpr double kPriorThreshold = 1e-5;
inline constexpr double kProbitBound = 0.999;

struct ProbitPair {
  double tau1 = 0.0;
  double tau2 = 0.0;
  double omega = 0.0;
  int i = 0;
  int j = 1;
};

struct PriorOptions {
  double threshold = kPriorThreshold;
  std::uint64_t draws = kDefaultMassDraws;
  std::uint64_t seed = kDefaultMassSeed;
  bool exact_small = true;  // rectangle probabilities instead of Monte Carlo when K <= 4
  int threads = 0;
};

// Delta and Sigma from the pairwise fits; pairs must cover every (i, j), i < j.
Matrix assemble_delta(const std::vector<PairwiseModel>& pairs, int k);
Matrix assemble_sigma(const std::vector<PairwiseModel>& pairs, int k);

// Cell probabilities (p00, p01, p10, p11) of the bivariate probit model.
std::array<double, 4> probit_cells(double tau1, double tau2, double omega);
ProbitPair probit_solve(const std::array<double, 4>& p, int i = 0, int j = 1);

Vector aggregate_tau(const std::vector<ProbitPair>& pairs, int k);
Matrix assemble_omega(const std::vector<ProbitPair>& pairs, int k);

// Canonically ordered prior; 0...0 and 1...1 are always retained.
std::vector<PriorEntry> build_prior(const Matrix& omega, const Vector& tau, const PriorOptions& opts = {});

FullModel assemble_full(const std::vector<PairwiseModel>& pairs, const TissueSet& tissues,
                        const PriorOptions& opts = {}, std::vector<std::string>* warnings = nullptr);

// Sets tau and Omega from the one- and two-tissue marginals of model.prior.
// Pairs whose marginal cells admit no probit solution get omega = 0.
void probit_summary(FullModel& model);

// Full model from a direct small-K fit: the fitted prior is kept as is, and
// Omega and tau come from probit solves on its two-tissue marginals.
FullModel direct_model(const MixtureParams& params, const TissueSet& tissues);

}  // namespace hteqtl
