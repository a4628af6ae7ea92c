#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hteqtl/assemble.hpp"
#include "hteqtl/model.hpp"
#include "hteqtl/pairfit.hpp"

namespace hteqtl {

// Simulation truth: class 0 mass 0.94, class K mass 0.04, 0.01
// each over classes 1 and K-1; Delta off-diagonals in [0.1, 0.3]; Sigma
// variances in [3.5, 4.5] with correlations in [0.6, 0.9].
FullModel simulation_preset(int k = 9);

struct SimData {
  ZMatrix z;
  std::vector<Configuration> truth;
  std::uint64_t seed = 0;
};

// One counter stream per pair, so output does not depend on the thread count.
SimData sample_data(const FullModel& model, std::size_t n_pairs, std::uint64_t seed, int threads = 0);

void write_truth(const std::filesystem::path& path, const SimData& data);
// pair_id and configuration per row.
std::vector<std::pair<std::string, Configuration>> read_truth(const std::filesystem::path& path);

enum class TbtMethod { MinP, MaxP, DiffP, Single };

struct TbtSpec {
  TbtMethod method = TbtMethod::MinP;
  int tissue = -1;  // Single only

  // minP | maxP | diffP | single:<tissue name>
  static TbtSpec parse(const std::string& text, const TissueSet& tissues);
  std::string label() const;
};

// Smaller score means stronger evidence for every method.
std::vector<double> tbt_scores(const RowMatrix& z, const TbtSpec& spec, int threads = 0);

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

RocCurve roc_curve(const std::vector<double>& scores, const std::vector<Configuration>& truth,
                   const ConfigFamily& family);

std::array<double, 3> quartiles(std::vector<double> values);

// Configurations missing from either prior count with mass `floor`.
double kl_divergence(const std::vector<PriorEntry>& p, const std::vector<PriorEntry>& q, double floor = 1e-12);

struct RecoveryReport {
  std::vector<double> delta_errors;  // off-diagonal, upper triangle
  std::vector<double> sigma_errors;  // upper triangle with diagonal
  std::array<double, 3> delta_quartiles{};
  std::array<double, 3> sigma_quartiles{};
  double kl = 0.0;
};

RecoveryReport recovery_report(const FullModel& truth, const FullModel& fitted);

struct TimingOptions {
  std::size_t n_pairs = 100000;
  std::uint64_t seed = 1;
  EmOptions em;
  PriorOptions prior;
  int direct_max_k = kMaxDirectTissues;
  int threads = 1;

  TimingOptions() { prior.draws = 1'000'000; }
};

struct TimingRow {
  int k = 0;
  std::string arm;  // "pairwise" or "direct"
  double seconds = 0.0;
  double assemble_seconds = 0.0;
  int n_fits = 0;
  std::vector<int> iters;  // per fit
};

// Nested models: data are simulated once at the largest K and each K uses
// the leading columns.
std::vector<TimingRow> timing_sweep(const std::vector<int>& ks, const TimingOptions& opts);
std::string timing_csv(const std::vector<TimingRow>& rows);

}  // namespace hteqtl
