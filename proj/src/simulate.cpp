#include "hteqtl/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "hteqtl/errors.hpp"
#include "hteqtl/infer.hpp"
#include "hteqtl/model_io.hpp"
#include "hteqtl/mvn.hpp"
#include "hteqtl/parallel.hpp"
#include "hteqtl/rng.hpp"

namespace hteqtl {

namespace {

constexpr std::size_t kSimBlock = 8192;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

FullModel simulation_preset(int k) {
  if (k < 2 || k > kMaxTissues) throw InputError("preset needs 2 to 63 tissues");
  FullModel m;
  std::vector<std::string> names;
  for (int a = 0; a < k; ++a) names.push_back("T" + std::to_string(a + 1));
  m.tissues = TissueSet::make(names, std::vector<int>(k, 300), std::vector<int>(k, 10));

  const double span = std::max(k - 2, 7);
  m.delta = Matrix::Identity(k, k);
  Matrix corr = Matrix::Identity(k, k);
  Vector sd(k);
  for (int a = 0; a < k; ++a) {
    sd(a) = std::sqrt(3.5 + static_cast<double>(a) / (k - 1));
    for (int b = a + 1; b < k; ++b) {
      const double lag = (b - a - 1) / span;
      m.delta(a, b) = m.delta(b, a) = 0.3 - 0.2 * lag;
      corr(a, b) = corr(b, a) = 0.9 - 0.3 * lag;
    }
  }
  m.sigma = sd.asDiagonal() * corr * sd.asDiagonal();
  m.sigma = (0.5 * (m.sigma + m.sigma.transpose())).eval();
  m.mu = Vector::Zero(k);

  std::map<Configuration, double> mass;
  mass[Configuration::zeros(k)] += 0.94;
  mass[Configuration::ones(k)] += 0.04;
  for (int a = 0; a < k; ++a) {
    mass[Configuration::zeros(k).with(a, true)] += 0.01 / k;
    mass[Configuration::ones(k).with(a, false)] += 0.01 / k;
  }
  for (const auto& [g, p] : mass) m.prior.push_back({g, p});
  probit_summary(m);
  require_valid(m);
  return m;
}

SimData sample_data(const FullModel& model, std::size_t n_pairs, std::uint64_t seed, int threads) {
  require_valid(model);
  const int k = model.size();
  const std::size_t nc = model.prior.size();
  std::vector<double> cum(nc);
  CompensatedSum run;
  for (std::size_t c = 0; c < nc; ++c) {
    run.add(model.prior[c].prob);
    cum[c] = run.value();
  }
  std::vector<Matrix> chol;
  for (const auto& e : model.prior)
    chol.push_back(CholFactor::of(config_cov(e.config, model.delta, model.sigma),
                                  "covariance of configuration " + e.config.to_string())
                       .lower);

  SimData out;
  out.seed = seed;
  out.z.tissues = model.tissues;
  out.z.values.resize(static_cast<Eigen::Index>(n_pairs), k);
  out.z.pair_ids.resize(n_pairs);
  out.truth.resize(n_pairs, Configuration::zeros(k));
  parallel_for_blocks(
      block_count(n_pairs, kSimBlock),
      [&](std::size_t b) {
        Vector e(k);
        const std::size_t lo = b * kSimBlock;
        const std::size_t hi = std::min(n_pairs, lo + kSimBlock);
        for (std::size_t i = lo; i < hi; ++i) {
          CounterStream s(seed, StreamPurpose::SimValues, i);
          const double u = s.next_uniform() * cum.back();
          const std::size_t c = std::min<std::size_t>(
              static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin()), nc - 1);
          for (int a = 0; a < k; ++a) e(a) = s.next_normal();
          out.z.values.row(static_cast<Eigen::Index>(i)) = (chol[c].triangularView<Eigen::Lower>() * e).transpose();
          out.truth[i] = model.prior[c].config;
          out.z.pair_ids[i] = "pair" + std::to_string(i);
        }
      },
      threads);
  return out;
}

void write_truth(const std::filesystem::path& path, const SimData& data) {
  std::string text = "pair_id\tbits\n";
  for (std::size_t i = 0; i < data.truth.size(); ++i)
    text += data.z.pair_ids[i] + "\t" + data.truth[i].to_string() + "\n";
  write_text(path, text);
}

std::vector<std::pair<std::string, Configuration>> read_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<std::pair<std::string, Configuration>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line_no == 1 && line.rfind("pair_id", 0) == 0)) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw InputError(path.string() + ":" + std::to_string(line_no) + ": expected 2 columns");
    out.emplace_back(line.substr(0, tab), Configuration::from_string(line.substr(tab + 1)));
  }
  return out;
}

TbtSpec TbtSpec::parse(const std::string& text, const TissueSet& tissues) {
  if (text == "minP") return {TbtMethod::MinP, -1};
  if (text == "maxP") return {TbtMethod::MaxP, -1};
  if (text == "diffP") return {TbtMethod::DiffP, -1};
  if (text.rfind("single:", 0) == 0) {
    const int t = tissues.index_of(text.substr(7));
    if (t < 0) throw InputError("unknown tissue in TBT method: " + text.substr(7));
    return {TbtMethod::Single, t};
  }
  throw InputError("unknown TBT method '" + text + "' (expected minP, maxP, diffP or single:<tissue>)");
}

std::string TbtSpec::label() const {
  switch (method) {
    case TbtMethod::MinP: return "minP";
    case TbtMethod::MaxP: return "maxP";
    case TbtMethod::DiffP: return "diffP";
    default: return "single:" + std::to_string(tissue);
  }
}

std::vector<double> tbt_scores(const RowMatrix& z, const TbtSpec& spec, int threads) {
  const int k = static_cast<int>(z.cols());
  if (spec.method == TbtMethod::Single && (spec.tissue < 0 || spec.tissue >= k))
    throw ContractViolation("TBT tissue index out of range");
  const std::size_t n = static_cast<std::size_t>(z.rows());
  std::vector<double> out(n);
  parallel_for_blocks(
      block_count(n, kSimBlock),
      [&](std::size_t b) {
        const std::size_t hi = std::min(n, (b + 1) * kSimBlock);
        for (std::size_t i = b * kSimBlock; i < hi; ++i) {
          const auto r = static_cast<Eigen::Index>(i);
          auto pval = [&](int a) { return std::min(1.0, 2.0 * norm_sf(std::abs(z(r, a)))); };
          if (spec.method == TbtMethod::Single) {
            out[i] = pval(spec.tissue);
            continue;
          }
          double lo = 1.0, hi_p = 0.0;
          for (int a = 0; a < k; ++a) {
            const double p = pval(a);
            lo = std::min(lo, p);
            hi_p = std::max(hi_p, p);
          }
          out[i] = spec.method == TbtMethod::MinP ? lo : spec.method == TbtMethod::MaxP ? hi_p : -(hi_p - lo);
        }
      },
      threads);
  return out;
}

RocCurve roc_curve(const std::vector<double>& scores, const std::vector<Configuration>& truth,
                   const ConfigFamily& family) {
  if (scores.size() != truth.size()) throw ContractViolation("scores and truth differ in length");
  const std::size_t n = scores.size();
  std::vector<std::uint8_t> pos(n);
  RocCurve out;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(scores[i])) throw InputError("score " + std::to_string(i) + " is NaN");
    pos[i] = family.contains(truth[i]) ? 1 : 0;
    out.positives += pos[i];
  }
  out.negatives = n - out.positives;
  if (out.positives == 0 || out.negatives == 0)
    throw DomainError("family " + family.label() + " has " + std::to_string(out.positives) + " positives and " +
                      std::to_string(out.negatives) + " negatives in the truth; ROC is undefined");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  const double np = static_cast<double>(out.positives), nn = static_cast<double>(out.negatives);
  out.points.push_back({-std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < n;) {
    const double s = scores[order[i]];
    while (i < n && scores[order[i]] == s) {
      (pos[order[i]] ? tp : fp) += 1;
      ++i;
    }
    const RocPoint prev = out.points.back();
    const RocPoint cur{s, fp / nn, tp / np};
    out.auc += (cur.fpr - prev.fpr) * (cur.tpr + prev.tpr) * 0.5;
    out.points.push_back(cur);
  }
  return out;
}

std::array<double, 3> quartiles(std::vector<double> v) {
  if (v.empty()) return {0.0, 0.0, 0.0};
  std::sort(v.begin(), v.end());
  auto at = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  return {at(0.25), at(0.5), at(0.75)};
}

double kl_divergence(const std::vector<PriorEntry>& p, const std::vector<PriorEntry>& q, double floor) {
  std::map<Configuration, std::pair<double, double>> both;
  for (const auto& e : p) both[e.config].first = e.prob;
  for (const auto& e : q) both[e.config].second = e.prob;
  CompensatedSum s;
  for (const auto& [g, v] : both) {
    const double a = std::max(v.first, floor), b = std::max(v.second, floor);
    s.add(a * std::log(a / b));
  }
  return s.value();
}

RecoveryReport recovery_report(const FullModel& truth, const FullModel& fitted) {
  if (truth.size() != fitted.size() || truth.tissues.names != fitted.tissues.names)
    throw ContractViolation("recovery report needs models over the same tissues");
  const int k = truth.size();
  RecoveryReport r;
  for (int a = 0; a < k; ++a)
    for (int b = a; b < k; ++b) {
      if (b > a)
        r.delta_errors.push_back(std::abs(fitted.delta(a, b) - truth.delta(a, b)) / std::abs(truth.delta(a, b)));
      r.sigma_errors.push_back(std::abs(fitted.sigma(a, b) - truth.sigma(a, b)) / std::abs(truth.sigma(a, b)));
    }
  r.delta_quartiles = quartiles(r.delta_errors);
  r.sigma_quartiles = quartiles(r.sigma_errors);
  r.kl = kl_divergence(truth.prior, fitted.prior);
  return r;
}

std::vector<TimingRow> timing_sweep(const std::vector<int>& ks, const TimingOptions& opts) {
  if (ks.empty()) throw InputError("timing sweep needs at least one K");
  const int kmax = *std::max_element(ks.begin(), ks.end());
  if (*std::min_element(ks.begin(), ks.end()) < 2) throw InputError("timing sweep needs K >= 2");
  const FullModel truth = simulation_preset(kmax);
  const SimData data = sample_data(truth, opts.n_pairs, opts.seed, opts.threads);

  std::vector<TimingRow> rows;
  for (int k : ks) {
    std::vector<int> cols(k);
    std::iota(cols.begin(), cols.end(), 0);
    ZMatrix z;
    z.tissues = data.z.tissues.subset(cols);
    z.values = data.z.values.leftCols(k);
    z.pair_ids = data.z.pair_ids;

    TimingRow pw;
    pw.k = k;
    pw.arm = "pairwise";
    auto t0 = std::chrono::steady_clock::now();
    EmOptions em = opts.em;
    em.threads = opts.threads;
    const auto pairs = fit_all_pairs(z, em, opts.threads);
    auto t1 = std::chrono::steady_clock::now();
    PriorOptions prior = opts.prior;
    prior.threads = opts.threads;
    assemble_full(pairs, z.tissues, prior);
    pw.assemble_seconds = seconds_since(t1);
    pw.seconds = seconds_since(t0);
    pw.n_fits = static_cast<int>(pairs.size());
    for (const auto& p : pairs) pw.iters.push_back(p.iters);
    rows.push_back(pw);

    if (k <= opts.direct_max_k) {
      TimingRow d;
      d.k = k;
      d.arm = "direct";
      auto t2 = std::chrono::steady_clock::now();
      const auto fit = fit_em(z.values, std::nullopt, em);
      d.seconds = seconds_since(t2);
      d.n_fits = 1;
      d.iters.push_back(fit.iters);
      rows.push_back(d);
    }
  }
  return rows;
}

std::string timing_csv(const std::vector<TimingRow>& rows) {
  std::ostringstream out;
  out << "K,arm,seconds,n_fits,assemble_seconds,total_iters\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d,%s,%.6f,%d,%.6f,%d\n", r.k, r.arm.c_str(), r.seconds, r.n_fits,
                  r.assemble_seconds, std::accumulate(r.iters.begin(), r.iters.end(), 0));
    out << buf;
  }
  return out.str();
}

}  // namespace hteqtl
