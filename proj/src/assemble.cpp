#include "hteqtl/assemble.hpp"

#include <algorithm>
#include <boost/math/tools/toms748_solve.hpp>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "hteqtl/errors.hpp"
#include "hteqtl/parallel.hpp"

namespace hteqtl {

namespace {

std::string pair_label(int i, int j) { return "(" + std::to_string(i) + "," + std::to_string(j) + ")"; }

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

// Index of each unordered pair in the input, with completeness checks.
std::vector<std::vector<int>> pair_index(const std::vector<PairwiseModel>& pairs, int k) {
  if (k < 2) throw InputError("assembly needs at least 2 tissues");
  std::vector<std::vector<int>> idx(k, std::vector<int>(k, -1));
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    int i = pairs[n].tissue_i, j = pairs[n].tissue_j;
    if (i < 0 || j < 0 || i >= k || j >= k || i == j)
      throw InputError("pairwise fit with invalid tissues " + pair_label(i, j));
    if (i > j) std::swap(i, j);
    if (idx[i][j] >= 0) throw InputError("duplicate pairwise fit for " + pair_label(i, j));
    idx[i][j] = idx[j][i] = static_cast<int>(n);
  }
  std::string missing;
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j)
      if (idx[i][j] < 0) missing += " " + pair_label(i, j);
  if (!missing.empty()) throw InputError("missing pairwise fits:" + missing);
  return idx;
}

// Entry of the pairwise model oriented so that position 0 is tissue a.
double oriented_sigma(const PairwiseModel& m, int a, int pos_a, int pos_b) {
  const bool flip = m.tissue_i != a;
  return flip ? m.sigma(1 - pos_a, 1 - pos_b) : m.sigma(pos_a, pos_b);
}

double cell_for(int which, double tau1, double tau2, double omega) {
  switch (which) {
    case 0: return bvn_upper(-tau1, -tau2, omega);
    case 1: return bvn_upper(-tau1, tau2, -omega);
    case 2: return bvn_upper(tau1, -tau2, -omega);
    default: return bvn_upper(tau1, tau2, omega);
  }
}

double threshold_from(double below, double above) {
  return below <= above ? norm_quantile(below) : -norm_quantile(above);
}

template <class F>
auto tagged(const char* stage, F&& f) {
  try {
    return f();
  } catch (const DomainError& e) {
    throw DomainError(std::string(stage) + ": " + e.what());
  } catch (const InputError& e) {
    throw InputError(std::string(stage) + ": " + e.what());
  }
}

}  // namespace

Matrix assemble_delta(const std::vector<PairwiseModel>& pairs, int k) {
  const auto idx = pair_index(pairs, k);
  Matrix d = Matrix::Identity(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j) d(i, j) = d(j, i) = pairs[idx[i][j]].delta;
  return pd_repair(d);
}

Matrix assemble_sigma(const std::vector<PairwiseModel>& pairs, int k) {
  const auto idx = pair_index(pairs, k);
  for (const auto& m : pairs)
    if (!(m.sigma(0, 0) > 0.0 && m.sigma(1, 1) > 0.0))
      throw DomainError("pairwise fit " + pair_label(m.tissue_i, m.tissue_j) + " has a non-positive Sigma variance");
  Vector diag = Vector::Constant(k, std::numeric_limits<double>::infinity());
  Matrix corr = Matrix::Identity(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j) {
      const auto& m = pairs[idx[i][j]];
      const double sii = oriented_sigma(m, i, 0, 0);
      const double sjj = oriented_sigma(m, i, 1, 1);
      diag(i) = std::min(diag(i), sii);
      diag(j) = std::min(diag(j), sjj);
      corr(i, j) = corr(j, i) = m.sigma(0, 1) / std::sqrt(sii * sjj);
    }
  const Matrix c = pd_repair(corr);
  const Vector sd = diag.cwiseSqrt();
  Matrix s = sd.asDiagonal() * c * sd.asDiagonal();
  return 0.5 * (s + s.transpose());
}

std::array<double, 4> probit_cells(double tau1, double tau2, double omega) {
  return {cell_for(0, tau1, tau2, omega), cell_for(1, tau1, tau2, omega), cell_for(2, tau1, tau2, omega),
          cell_for(3, tau1, tau2, omega)};
}

ProbitPair probit_solve(const std::array<double, 4>& p, int i, int j) {
  for (double v : p)
    if (!(v > 0.0 && v < 1.0))
      throw DomainError("probit solve for pair " + pair_label(i, j) + " needs every cell probability in (0,1)");
  ProbitPair out;
  out.i = i;
  out.j = j;
  out.tau1 = threshold_from(p[0] + p[1], p[2] + p[3]);
  out.tau2 = threshold_from(p[0] + p[2], p[1] + p[3]);

  // Match the smallest cell on the log scale; each cell is monotone in omega.
  const int which = static_cast<int>(std::min_element(p.begin(), p.end()) - p.begin());
  const double sign = (which == 0 || which == 3) ? 1.0 : -1.0;
  const double target = std::log(p[which]);
  auto g = [&](double w) { return sign * (std::log(std::max(cell_for(which, out.tau1, out.tau2, w), 1e-300)) - target); };

  const double glo = g(-kProbitBound), ghi = g(kProbitBound);
  if (glo > 0.0 || ghi < 0.0) {
    const double q1 = p[2] + p[3], q2 = p[1] + p[3];
    const double lo = std::max(0.0, q1 + q2 - 1.0), hi = std::min(q1, q2);
    throw DomainError("probit solve for pair " + pair_label(i, j) + " is infeasible: p11 = " + fmt(p[3]) +
                      " with marginals (" + fmt(q1) + ", " + fmt(q2) + "); Frechet bounds [" + fmt(lo) + ", " +
                      fmt(hi) + "], reachable range [" + fmt(bvn_upper(out.tau1, out.tau2, -kProbitBound)) + ", " +
                      fmt(bvn_upper(out.tau1, out.tau2, kProbitBound)) + "]");
  }
  if (glo == 0.0) {
    out.omega = -kProbitBound;
  } else if (ghi == 0.0) {
    out.omega = kProbitBound;
  } else {
    std::uintmax_t iters = 200;
    auto r = boost::math::tools::toms748_solve(g, -kProbitBound, kProbitBound, glo, ghi,
                                               boost::math::tools::eps_tolerance<double>(52), iters);
    out.omega = 0.5 * (r.first + r.second);
  }
  return out;
}

Vector aggregate_tau(const std::vector<ProbitPair>& pairs, int k) {
  Vector tau = Vector::Constant(k, std::numeric_limits<double>::infinity());
  std::set<std::pair<int, int>> seen;
  for (const auto& pp : pairs) {
    if (pp.i < 0 || pp.j < 0 || pp.i >= k || pp.j >= k || pp.i == pp.j)
      throw InputError("probit pair with invalid tissues " + pair_label(pp.i, pp.j));
    const bool ordered = pp.i < pp.j;
    const int a = ordered ? pp.i : pp.j, b = ordered ? pp.j : pp.i;
    seen.insert({a, b});
    tau(pp.i) = std::min(tau(pp.i), pp.tau1);
    tau(pp.j) = std::min(tau(pp.j), pp.tau2);
  }
  std::string missing;
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j)
      if (!seen.count({i, j})) missing += " " + pair_label(i, j);
  if (!missing.empty()) throw InputError("missing probit pairs:" + missing);
  return tau;
}

Matrix assemble_omega(const std::vector<ProbitPair>& pairs, int k) {
  Matrix o = Matrix::Identity(k, k);
  for (const auto& pp : pairs) o(pp.i, pp.j) = o(pp.j, pp.i) = pp.omega;
  return pd_repair(o);
}

std::vector<PriorEntry> build_prior(const Matrix& omega, const Vector& tau, const PriorOptions& opts) {
  const int k = static_cast<int>(omega.rows());
  if (tau.size() != k) throw ContractViolation("tau and Omega dimensions disagree");
  if (!(opts.threshold >= 0.0)) throw InputError("prior threshold must be non-negative");
  if (!is_positive_definite(omega)) throw DomainError("Omega is not positive definite");

  std::map<Configuration, double> mass;
  if (k <= 4 && opts.exact_small) {
    for (const auto& g : Configuration::enumerate(k)) mass[g] = rect_prob_exact(omega, tau, g);
  } else {
    mass = mc_config_mass(omega, tau, opts.draws, opts.seed, opts.threads);
  }
  const auto zero = Configuration::zeros(k), ones = Configuration::ones(k);
  mass.try_emplace(zero, 0.0);
  mass.try_emplace(ones, 0.0);

  std::vector<PriorEntry> out;
  CompensatedSum total;
  for (const auto& [g, m] : mass) {
    if (m >= opts.threshold || g == zero || g == ones) {
      out.push_back({g, m});
      total.add(m);
    }
  }
  if (!(total.value() > 0.0)) throw InternalError("prior has no mass after truncation");
  const double t = total.value();
  for (auto& e : out) e.prob /= t;
  return out;
}

FullModel assemble_full(const std::vector<PairwiseModel>& pairs, const TissueSet& tissues, const PriorOptions& opts,
                        std::vector<std::string>* warnings) {
  const int k = tissues.size();
  FullModel m;
  m.tissues = tissues;
  m.delta = tagged("assemble Delta", [&] { return assemble_delta(pairs, k); });
  m.sigma = tagged("assemble Sigma", [&] { return assemble_sigma(pairs, k); });

  std::vector<ProbitPair> probits(pairs.size());
  tagged("probit solve", [&] {
    parallel_for_blocks(
        pairs.size(),
        [&](std::size_t b) { probits[b] = probit_solve(pairs[b].p, pairs[b].tissue_i, pairs[b].tissue_j); },
        opts.threads);
    return 0;
  });
  if (warnings)
    for (const auto& pp : probits)
      if (pp.omega < 0.0)
        warnings->push_back("negative probit correlation " + fmt(pp.omega) + " for pair " +
                            pair_label(pp.i, pp.j));

  m.omega = tagged("assemble Omega", [&] { return assemble_omega(probits, k); });
  m.tau = tagged("aggregate thresholds", [&] { return aggregate_tau(probits, k); });
  m.mu = Vector::Zero(k);
  m.prior = tagged("build prior", [&] { return build_prior(m.omega, m.tau, opts); });
  require_valid(m);
  return m;
}

void probit_summary(FullModel& m) {
  const int k = m.size();
  m.tau = Vector::Zero(k);
  m.omega = Matrix::Identity(k, k);
  std::vector<double> above(k, 0.0);
  std::vector<std::array<double, 4>> cells;
  std::vector<std::pair<int, int>> idx;
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b) {
      cells.push_back({});
      idx.emplace_back(a, b);
    }
  for (const auto& e : m.prior) {
    for (int a = 0; a < k; ++a)
      if (e.config.test(a)) above[a] += e.prob;
    for (std::size_t n = 0; n < idx.size(); ++n)
      cells[n][(e.config.test(idx[n].first) ? 2 : 0) + (e.config.test(idx[n].second) ? 1 : 0)] += e.prob;
  }
  for (int a = 0; a < k; ++a) m.tau(a) = threshold_from(1.0 - above[a], above[a]);
  std::vector<ProbitPair> probits;
  for (std::size_t n = 0; n < idx.size(); ++n) {
    const auto [a, b] = idx[n];
    try {
      probits.push_back(probit_solve(cells[n], a, b));
    } catch (const DomainError&) {
      probits.push_back({m.tau(a), m.tau(b), 0.0, a, b});
    }
  }
  if (k > 1) m.omega = assemble_omega(probits, k);
}

FullModel direct_model(const MixtureParams& params, const TissueSet& tissues) {
  const int k = params.size();
  if (tissues.size() != k) throw ContractViolation("tissue count does not match the fit");
  FullModel m;
  m.tissues = tissues;
  m.delta = params.delta;
  m.sigma = 0.5 * (params.sigma + params.sigma.transpose());
  m.mu = Vector::Zero(k);
  CompensatedSum total;
  for (int c = 0; c < (1 << k); ++c)
    if (params.p[c] > 0.0) {
      m.prior.push_back({Configuration{std::uint64_t(c), k}, params.p[c]});
      total.add(params.p[c]);
    }
  for (auto& e : m.prior) e.prob /= total.value();
  probit_summary(m);
  require_valid(m);
  return m;
}

}  // namespace hteqtl
