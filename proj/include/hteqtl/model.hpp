#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hteqtl/configuration.hpp"

namespace hteqtl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kSimplexTol = 1e-12;

struct TissueSet {
  std::vector<std::string> names;
  std::vector<int> n;     // sample sizes
  std::vector<int> c;     // covariates removed
  std::vector<double> d;  // n - c - 3

  // Builds d from n and c and checks every invariant.
  static TissueSet make(std::vector<std::string> names, std::vector<int> n, std::vector<int> c);

  int size() const { return static_cast<int>(names.size()); }
  int index_of(const std::string& name) const;  // -1 when absent
  std::vector<std::string> violations() const;
  TissueSet subset(const std::vector<int>& idx) const;

  friend bool operator==(const TissueSet&, const TissueSet&) = default;
};

// N x K z-statistics, row-major so that a block of rows is a contiguous K x B
// column-major panel.
struct ZMatrix {
  std::vector<std::string> pair_ids;
  RowMatrix values;
  TissueSet tissues;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  int cols() const { return static_cast<int>(values.cols()); }
  // Throws ContractViolation on size mismatch or non-finite entries.
  void check() const;
};

struct PairwiseModel {
  int tissue_i = 0;
  int tissue_j = 1;
  std::array<double, 4> p{};  // p00, p01, p10, p11 (first digit is tissue_i)
  double delta = 0.0;
  Eigen::Matrix2d sigma = Eigen::Matrix2d::Zero();
  double loglik = 0.0;
  int iters = 0;
  bool converged = false;

  std::vector<std::string> violations() const;
};

struct PriorEntry {
  Configuration config;
  double prob = 0.0;
  friend bool operator==(const PriorEntry&, const PriorEntry&) = default;
};

struct FullModel {
  TissueSet tissues;
  Matrix delta;
  Matrix sigma;
  Matrix omega;
  Vector tau;
  Vector mu;
  std::vector<PriorEntry> prior;  // canonical order, retained entries only

  int size() const { return tissues.size(); }
  double prior_of(const Configuration& g) const;  // 0 when not retained
};

struct Violation {
  std::string field;
  std::string rule;
  std::string detail;
};

std::vector<Violation> validate(const FullModel& model);
// Throws DomainError listing every violation.
void require_valid(const FullModel& model);

std::string describe(const std::vector<Violation>& v);

// Family of alternative configurations S for an lfdr test.
class ConfigFamily {
public:
  enum class Kind { AnyEqtl, AllTissues, TissueSpecific, InTissue, SingleTissue, Custom };

  static ConfigFamily any_eqtl() { return ConfigFamily(Kind::AnyEqtl); }
  static ConfigFamily all_tissues() { return ConfigFamily(Kind::AllTissues); }
  static ConfigFamily tissue_specific() { return ConfigFamily(Kind::TissueSpecific); }
  static ConfigFamily in_tissue(int k);
  static ConfigFamily single_tissue(int k);
  // Must be non-empty; strictness against {0,1}^K is checked by check(K).
  static ConfigFamily custom(std::vector<Configuration> set);

  // CLI syntax: any | all | tissue-specific | in-tissue:<name> |
  // single-tissue:<name> | custom:@file
  static ConfigFamily parse(const std::string& spec, const TissueSet& tissues);

  Kind kind() const { return kind_; }
  int tissue() const { return tissue_; }
  const std::vector<Configuration>& custom_set() const { return custom_; }

  bool contains(const Configuration& g) const;
  void check(int k) const;
  ConfigFamily complement(int k) const;  // as a Custom family (k <= 24)
  std::string label(const TissueSet* tissues = nullptr) const;

private:
  explicit ConfigFamily(Kind kind) : kind_(kind) {}
  Kind kind_;
  int tissue_ = -1;
  std::vector<Configuration> custom_;
};

struct DiscoverySet {
  ConfigFamily family = ConfigFamily::any_eqtl();
  double alpha = 0.05;
  std::vector<double> lfdrs;
  std::size_t n_reject = 0;
  std::vector<std::uint8_t> rejected;
  double achieved_mean_lfdr = 0.0;
};

}  // namespace hteqtl
