#include "hteqtl/pairfit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "hteqtl/errors.hpp"
#include "hteqtl/mvn.hpp"
#include "hteqtl/parallel.hpp"
#include "hteqtl/rng.hpp"

namespace hteqtl {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr std::size_t kRowBlock = 8192;
constexpr double kCorrBound = 0.999;
constexpr double kSigmaLo = 1e-6;
constexpr double kSigmaHi = 100.0;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Component {
  int config = 0;
  double log_const = 0.0;
  std::array<double, 16> inv{};  // row-major k x k
};

void check_shape(const MixtureParams& m) {
  const int k = m.size();
  if (k < 1 || k > kMaxDirectTissues)
    throw ContractViolation("mixture parameters must cover 1 to 4 tissues, got " + std::to_string(k));
  if (m.delta.cols() != k || m.sigma.rows() != k || m.sigma.cols() != k ||
      m.p.size() != (std::size_t{1} << k))
    throw ContractViolation("mixture parameter dimensions disagree");
  double s = 0.0;
  for (double v : m.p) {
    if (!(v >= 0.0)) throw ContractViolation("mixture weights must be non-negative");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ContractViolation("mixture weights must sum to 1");
}

std::vector<Component> build_components(const MixtureParams& m) {
  const int k = m.size();
  std::vector<Component> out;
  for (int c = 0; c < (1 << k); ++c) {
    if (m.p[c] <= 0.0) continue;
    const Configuration g{static_cast<std::uint64_t>(c), k};
    const Matrix cov = component_cov(m.delta, m.sigma, g);
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success || llt.matrixLLT().diagonal().minCoeff() <= 0.0)
      throw DomainError("component covariance for configuration " + g.to_string() + " is not positive definite");
    const Matrix inv = llt.solve(Matrix::Identity(k, k));
    Component comp;
    comp.config = c;
    comp.log_const = std::log(m.p[c]) - 0.5 * (k * kLog2Pi) -
                     llt.matrixLLT().diagonal().array().log().sum();
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) comp.inv[a * k + b] = inv(a, b);
    out.push_back(comp);
  }
  return out;
}

struct BlockStats {
  CompensatedSum loglik;
  std::vector<double> w;  // per configuration
  std::vector<double> s;  // per configuration, k x k
};

template <int K>
void process_rows(const double* rows, std::size_t n, const std::vector<Component>& comps, double* resp,
                  BlockStats* stats) {
  constexpr int C = 1 << K;
  const int m = static_cast<int>(comps.size());
  double l[C];
  for (std::size_t r = 0; r < n; ++r) {
    const double* x = rows + r * K;
    double mx = kNegInf;
    for (int i = 0; i < m; ++i) {
      const double* inv = comps[i].inv.data();
      double q = 0.0;
      for (int a = 0; a < K; ++a) {
        double y = 0.0;
        for (int b = 0; b < K; ++b) y += inv[a * K + b] * x[b];
        q += x[a] * y;
      }
      l[i] = comps[i].log_const - 0.5 * q;
      mx = std::max(mx, l[i]);
    }
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
      l[i] = std::exp(l[i] - mx);
      total += l[i];
    }
    if (resp) {
      double* out = resp + r * C;
      std::fill(out, out + C, 0.0);
      for (int i = 0; i < m; ++i) out[comps[i].config] = l[i] / total;
    }
    if (stats) {
      stats->loglik.add(mx + std::log(total));
      for (int i = 0; i < m; ++i) {
        const double w = l[i] / total;
        const int c = comps[i].config;
        stats->w[c] += w;
        double* s = stats->s.data() + c * K * K;
        for (int a = 0; a < K; ++a) {
          const double wa = w * x[a];
          for (int b = a; b < K; ++b) s[a * K + b] += wa * x[b];
        }
      }
    }
  }
}

void dispatch(int k, const double* rows, std::size_t n, const std::vector<Component>& comps, double* resp,
              BlockStats* stats) {
  switch (k) {
    case 1: process_rows<1>(rows, n, comps, resp, stats); break;
    case 2: process_rows<2>(rows, n, comps, resp, stats); break;
    case 3: process_rows<3>(rows, n, comps, resp, stats); break;
    case 4: process_rows<4>(rows, n, comps, resp, stats); break;
    default: throw ContractViolation("unsupported tissue count");
  }
}

struct Sufficient {
  double loglik = 0.0;
  double n = 0.0;
  std::vector<double> w;
  std::vector<Matrix> s;
};

Sufficient accumulate(const RowMatrix& z, const std::vector<Component>& comps, int threads) {
  const int k = static_cast<int>(z.cols());
  const int nc = 1 << k;
  const std::size_t n = static_cast<std::size_t>(z.rows());
  const std::size_t nb = block_count(n, kRowBlock);
  std::vector<BlockStats> blocks(nb);
  parallel_for_blocks(
      nb,
      [&](std::size_t b) {
        BlockStats& st = blocks[b];
        st.w.assign(nc, 0.0);
        st.s.assign(static_cast<std::size_t>(nc) * k * k, 0.0);
        const std::size_t lo = b * kRowBlock;
        const std::size_t hi = std::min(n, lo + kRowBlock);
        dispatch(k, z.data() + lo * k, hi - lo, comps, nullptr, &st);
      },
      threads);

  Sufficient out;
  out.n = static_cast<double>(n);
  CompensatedSum ll;
  std::vector<CompensatedSum> w(nc);
  std::vector<CompensatedSum> s(static_cast<std::size_t>(nc) * k * k);
  for (const auto& st : blocks) {
    ll.add(st.loglik.value());
    for (int c = 0; c < nc; ++c) w[c].add(st.w[c]);
    for (std::size_t i = 0; i < s.size(); ++i) s[i].add(st.s[i]);
  }
  out.loglik = ll.value();
  out.w.resize(nc);
  out.s.assign(nc, Matrix::Zero(k, k));
  for (int c = 0; c < nc; ++c) {
    out.w[c] = w[c].value();
    for (int a = 0; a < k; ++a)
      for (int b = a; b < k; ++b) out.s[c](a, b) = out.s[c](b, a) = s[(c * k + a) * k + b].value();
  }
  return out;
}

// Expected complete-data log-likelihood, (Delta, Sigma) part, constants dropped.
double q_value(const Matrix& delta, const Matrix& sigma, const Sufficient& st) {
  const int k = static_cast<int>(delta.rows());
  double q = 0.0;
  for (int c = 0; c < (1 << k); ++c) {
    if (st.w[c] <= 0.0) continue;
    const Matrix cov = component_cov(delta, sigma, Configuration{static_cast<std::uint64_t>(c), k});
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) return kNegInf;
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    if (!std::isfinite(log_det)) return kNegInf;
    const double tr = llt.solve(st.s[c]).trace();
    q -= 0.5 * (st.w[c] * log_det + tr);
  }
  return q;
}

// Correlation matrices through canonical partial correlations.
Matrix corr_from_cpc(const double* x, int k) {
  Matrix l = Matrix::Zero(k, k);
  l(0, 0) = 1.0;
  int idx = 0;
  for (int i = 1; i < k; ++i) {
    double rest = 1.0;
    for (int j = 0; j < i; ++j) {
      const double zc = kCorrBound * std::tanh(x[idx++]);
      l(i, j) = zc * std::sqrt(rest);
      rest -= l(i, j) * l(i, j);
    }
    l(i, i) = std::sqrt(std::max(rest, 0.0));
  }
  Matrix r = l * l.transpose();
  r.diagonal().setOnes();
  return r;
}

void cpc_from_corr(const Matrix& r, double* x) {
  const int k = static_cast<int>(r.rows());
  Eigen::LLT<Matrix> llt(r);
  const Matrix l = llt.matrixL();
  int idx = 0;
  for (int i = 1; i < k; ++i) {
    double rest = 1.0;
    for (int j = 0; j < i; ++j) {
      double zc = l(i, j) / std::sqrt(std::max(rest, 1e-300));
      zc = std::clamp(zc, -0.998, 0.998);
      x[idx++] = std::atanh(zc / kCorrBound);
      rest -= l(i, j) * l(i, j);
    }
  }
}

struct Layout {
  int k;
  int nd() const { return k * (k - 1) / 2; }
  int size() const { return 2 * nd() + k; }
};

void unpack(const Layout& lay, const Vector& x, Matrix& delta, Matrix& sigma) {
  const int k = lay.k;
  delta = corr_from_cpc(x.data(), k);
  const Matrix r = corr_from_cpc(x.data() + lay.nd() + k, k);
  Vector sd(k);
  for (int i = 0; i < k; ++i)
    sd(i) = std::sqrt(kSigmaLo + (kSigmaHi - kSigmaLo) / (1.0 + std::exp(-x(lay.nd() + i))));
  sigma = sd.asDiagonal() * r * sd.asDiagonal();
}

Vector pack(const Layout& lay, const Matrix& delta, const Matrix& sigma) {
  const int k = lay.k;
  Vector x = Vector::Zero(lay.size());
  if (k > 1) cpc_from_corr(delta, x.data());
  Vector sd(k);
  for (int i = 0; i < k; ++i) {
    const double s = std::clamp(sigma(i, i), 1e-5, kSigmaHi - 0.1);
    x(lay.nd() + i) = std::log((s - kSigmaLo) / (kSigmaHi - s));
    sd(i) = std::sqrt(std::max(sigma(i, i), 1e-5));
  }
  if (k > 1) {
    Matrix r = sd.cwiseInverse().asDiagonal() * sigma * sd.cwiseInverse().asDiagonal();
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j)
        if (i != j) r(i, j) = std::clamp(r(i, j), -0.99, 0.99);
    r.diagonal().setOnes();
    cpc_from_corr(pd_repair(r), x.data() + lay.nd() + k);
  }
  return x;
}

template <class F>
Vector numeric_gradient(F& f, const Vector& x, double fx) {
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x(i)));
    xp(i) = x(i) + h;
    const double fp = f(xp);
    xp(i) = x(i) - h;
    const double fm = f(xp);
    xp(i) = x(i);
    if (std::isfinite(fp) && std::isfinite(fm))
      g(i) = (fp - fm) / (2.0 * h);
    else if (std::isfinite(fm))
      g(i) = (fx - fm) / h;
    else if (std::isfinite(fp))
      g(i) = (fp - fx) / h;
    else
      g(i) = 0.0;
  }
  return g;
}

// Quasi-Newton minimization with Armijo backtracking.
template <class F>
Vector bfgs_minimize(F& f, Vector x, int max_iter) {
  const Eigen::Index m = x.size();
  double fx = f(x);
  Vector g = numeric_gradient(f, x, fx);
  Matrix h = Matrix::Identity(m, m);
  for (int it = 0; it < max_iter; ++it) {
    if (g.lpNorm<Eigen::Infinity>() < 1e-10) break;
    Vector d = -h * g;
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      h.setIdentity();
      d = -g;
      slope = -g.squaredNorm();
    }
    double t = 1.0;
    Vector xn;
    double fn = 0.0;
    bool ok = false;
    for (int ls = 0; ls < 60; ++ls) {
      xn = x + t * d;
      fn = f(xn);
      if (std::isfinite(fn) && fn <= fx + 1e-4 * t * slope) {
        ok = true;
        break;
      }
      t *= 0.5;
    }
    if (!ok) break;
    const Vector gn = numeric_gradient(f, xn, fn);
    const Vector s = xn - x;
    const Vector y = gn - g;
    const double sy = s.dot(y);
    const double drop = fx - fn;
    x = xn;
    g = gn;
    fx = fn;
    if (sy > 1e-14) {
      const double rho = 1.0 / sy;
      const Matrix a = Matrix::Identity(m, m) - rho * s * y.transpose();
      h = a * h * a.transpose() + rho * s * s.transpose();
    }
    if (drop <= 1e-15 * (1.0 + std::abs(fx))) break;
  }
  return x;
}

void require_finite(const RowMatrix& z) {
  if (!z.allFinite()) throw InputError("z-statistics contain non-finite values");
}

}  // namespace

void EmOptions::check() const {
  if (max_iters < 1) throw InputError("max_iters must be at least 1");
  if (!(rel_tol > 0.0)) throw InputError("rel_tol must be positive");
  if (subsample && *subsample < 1) throw InputError("subsample must be positive");
}

std::vector<std::string> MixtureParams::violations() const {
  std::vector<std::string> v;
  const int k = size();
  if (k < 1 || k > kMaxDirectTissues) {
    v.push_back("tissue count must be 1 to 4");
    return v;
  }
  if (delta.cols() != k || sigma.rows() != k || sigma.cols() != k || p.size() != (std::size_t{1} << k)) {
    v.push_back("dimensions disagree");
    return v;
  }
  double s = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) v.push_back("negative mixture weight");
    s += x;
  }
  if (std::abs(s - 1.0) > 1e-9) v.push_back("mixture weights do not sum to 1");
  if ((delta.diagonal().array() - 1.0).abs().maxCoeff() > 1e-12) v.push_back("Delta diagonal not 1");
  if ((delta - delta.transpose()).cwiseAbs().maxCoeff() > 1e-12) v.push_back("Delta not symmetric");
  else if (!is_positive_definite(delta)) v.push_back("Delta not positive definite");
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12) v.push_back("Sigma not symmetric");
  else if (Eigen::SelfAdjointEigenSolver<Matrix>(sigma).eigenvalues().minCoeff() < -1e-10)
    v.push_back("Sigma not positive semidefinite");
  return v;
}

MixtureParams MixtureParams::from_pairwise(const PairwiseModel& m) {
  MixtureParams out;
  out.delta = Matrix::Identity(2, 2);
  out.delta(0, 1) = out.delta(1, 0) = m.delta;
  out.sigma = m.sigma;
  out.p.assign(m.p.begin(), m.p.end());
  return out;
}

Matrix component_cov(const Matrix& delta, const Matrix& sigma, const Configuration& g) {
  Matrix cov = delta;
  const int k = static_cast<int>(delta.rows());
  for (int a = 0; a < k; ++a) {
    if (!g.test(a)) continue;
    for (int b = 0; b < k; ++b)
      if (g.test(b)) cov(a, b) += sigma(a, b);
  }
  return cov;
}

RowMatrix estep(const RowMatrix& z, const MixtureParams& params, int threads) {
  check_shape(params);
  const int k = params.size();
  if (z.cols() != k) throw ContractViolation("z has " + std::to_string(z.cols()) + " columns, parameters have " +
                                             std::to_string(k));
  const auto comps = build_components(params);
  const std::size_t n = static_cast<std::size_t>(z.rows());
  RowMatrix resp(z.rows(), 1 << k);
  parallel_for_blocks(
      block_count(n, kRowBlock),
      [&](std::size_t b) {
        const std::size_t lo = b * kRowBlock;
        const std::size_t hi = std::min(n, lo + kRowBlock);
        dispatch(k, z.data() + lo * k, hi - lo, comps, resp.data() + lo * (std::size_t{1} << k), nullptr);
      },
      threads);
  return resp;
}

double pseudo_loglik(const RowMatrix& z, const MixtureParams& params, int threads) {
  check_shape(params);
  if (z.cols() != params.size()) throw ContractViolation("z and parameter dimensions disagree");
  return accumulate(z, build_components(params), threads).loglik;
}

std::vector<std::size_t> subsample_rows(std::size_t n, const EmOptions& opts) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (!opts.subsample || n <= *opts.subsample) return rows;
  const std::size_t m = static_cast<std::size_t>(*opts.subsample);
  std::vector<std::pair<std::uint64_t, std::size_t>> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = {CounterStream(opts.seed, StreamPurpose::Subsample, i).next_u64(), i};
  std::nth_element(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(m), keys.end());
  rows.resize(m);
  for (std::size_t i = 0; i < m; ++i) rows[i] = keys[i].second;
  std::sort(rows.begin(), rows.end());
  return rows;
}

MixtureParams default_init(const RowMatrix& z) {
  const int k = static_cast<int>(z.cols());
  const Eigen::Index n = z.rows();
  MixtureParams m;
  m.delta = Matrix::Identity(k, k);
  Matrix sig_corr = Matrix::Identity(k, k);
  Vector sig_sum = Vector::Zero(k);
  Vector sig_cnt = Vector::Zero(k);

  if (k == 1) {
    double s = 0.0;
    int cnt = 0;
    for (Eigen::Index r = 0; r < n; ++r)
      if (std::abs(z(r, 0)) > 3.0) {
        s += z(r, 0) * z(r, 0);
        ++cnt;
      }
    sig_sum(0) = cnt >= 10 ? s / cnt - 1.0 : 4.0;
    sig_cnt(0) = 1;
  }

  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      int cnt = 0;
      for (Eigen::Index r = 0; r < n; ++r) {
        const double x = z(r, a), y = z(r, b);
        if (std::abs(x) < 1.0 && std::abs(y) < 1.0) {
          sa += x, sb += y, saa += x * x, sbb += y * y, sab += x * y;
          ++cnt;
        }
      }
      double d0 = 0.0;
      if (cnt >= 10) {
        const double cov = sab - sa * sb / cnt;
        const double va = saa - sa * sa / cnt;
        const double vb = sbb - sb * sb / cnt;
        if (va > 0 && vb > 0) d0 = cov / std::sqrt(va * vb);
      }
      d0 = std::clamp(d0, -0.9, 0.9);
      m.delta(a, b) = m.delta(b, a) = d0;

      sa = sb = saa = sbb = sab = 0;
      cnt = 0;
      for (Eigen::Index r = 0; r < n; ++r) {
        const double x = z(r, a), y = z(r, b);
        if (std::abs(x) > 3.0 && std::abs(y) > 3.0) {
          sa += x, sb += y, saa += x * x, sbb += y * y, sab += x * y;
          ++cnt;
        }
      }
      Eigen::Matrix2d s2 = 4.0 * Eigen::Matrix2d::Identity();
      if (cnt >= 10) {
        s2 << saa - sa * sa / cnt, sab - sa * sb / cnt, sab - sa * sb / cnt, sbb - sb * sb / cnt;
        s2 /= (cnt - 1);
        s2(0, 0) -= 1.0;
        s2(1, 1) -= 1.0;
        s2(0, 1) -= d0;
        s2(1, 0) -= d0;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(s2);
        s2 = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() * es.eigenvectors().transpose();
      }
      sig_sum(a) += s2(0, 0);
      sig_sum(b) += s2(1, 1);
      sig_cnt(a) += 1;
      sig_cnt(b) += 1;
      const double den = std::sqrt(std::max(s2(0, 0), 1e-12) * std::max(s2(1, 1), 1e-12));
      sig_corr(a, b) = sig_corr(b, a) = std::clamp(s2(0, 1) / den, -0.9, 0.9);
    }

  if (k > 2) {
    m.delta = pd_repair(m.delta);
    sig_corr = pd_repair(sig_corr);
  }
  Vector sd(k);
  for (int a = 0; a < k; ++a) sd(a) = std::sqrt(std::clamp(sig_sum(a) / sig_cnt(a), 1e-3, 99.0));
  m.sigma = sd.asDiagonal() * sig_corr * sd.asDiagonal();

  const int nc = 1 << k;
  m.p.assign(nc, 0.0);
  if (k == 1) {
    m.p = {0.85, 0.15};
  } else {
    m.p[0] = 0.85;
    m.p[nc - 1] = 0.07;
    for (int c = 1; c < nc - 1; ++c) m.p[c] = 0.08 / (nc - 2);
  }
  return m;
}

MixtureFit fit_em(const RowMatrix& z_all, const std::optional<MixtureParams>& init, const EmOptions& opts) {
  opts.check();
  const int k = static_cast<int>(z_all.cols());
  if (k < 1 || k > kMaxDirectTissues)
    throw DomainError("direct mixture fitting supports 1 to 4 tissues, got " + std::to_string(k) +
                      "; use pairwise fitting and assembly");
  require_finite(z_all);

  RowMatrix z;
  const auto rows = subsample_rows(static_cast<std::size_t>(z_all.rows()), opts);
  if (rows.size() == static_cast<std::size_t>(z_all.rows())) {
    z = z_all;
  } else {
    z.resize(static_cast<Eigen::Index>(rows.size()), k);
    for (std::size_t i = 0; i < rows.size(); ++i) z.row(static_cast<Eigen::Index>(i)) = z_all.row(static_cast<Eigen::Index>(rows[i]));
  }
  const std::size_t min_rows = std::size_t{10} << k;
  if (rows.size() < min_rows)
    throw InputError("refusing to fit " + std::to_string(k) + " tissues on " + std::to_string(rows.size()) +
                     " rows; at least " + std::to_string(min_rows) + " are required");

  MixtureFit fit;
  fit.params = init ? *init : default_init(z);
  if (auto v = fit.params.violations(); !v.empty()) {
    std::string msg = "invalid initial parameters:";
    for (auto& s : v) msg += " " + s + ";";
    throw DomainError(msg);
  }

  const Layout lay{k};
  const int nc = 1 << k;
  Sufficient st = accumulate(z, build_components(fit.params), opts.threads);
  fit.loglik = st.loglik;
  fit.trace.push_back(st.loglik);

  for (int it = 1; it <= opts.max_iters; ++it) {
    MixtureParams next = fit.params;
    double wsum = 0.0;
    for (int c = 0; c < nc; ++c) wsum += st.w[c];
    for (int c = 0; c < nc; ++c) next.p[c] = st.w[c] / wsum;

    const double q_old = q_value(fit.params.delta, fit.params.sigma, st);
    auto objective = [&](const Vector& x) {
      Matrix d, s;
      unpack(lay, x, d, s);
      return -q_value(d, s, st) / st.n;
    };
    const Vector x = bfgs_minimize(objective, pack(lay, fit.params.delta, fit.params.sigma), 200);
    Matrix d, s;
    unpack(lay, x, d, s);
    const double q_new = q_value(d, s, st);
    if (q_new > q_old + 1e-13 * std::abs(q_old)) {
      next.delta = d;
      next.sigma = s;
    }

    Sufficient st_next = accumulate(z, build_components(next), opts.threads);
    if (st_next.loglik < fit.loglik - kEmSlack)
      throw InternalError("pseudo-log-likelihood decreased from " + std::to_string(fit.loglik) + " to " +
                          std::to_string(st_next.loglik) + " at iteration " + std::to_string(it));
    const double change = std::abs(st_next.loglik - fit.loglik);
    const double scale = std::abs(fit.loglik);
    fit.params = std::move(next);
    fit.loglik = st_next.loglik;
    fit.trace.push_back(st_next.loglik);
    fit.iters = it;
    st = std::move(st_next);
    if (change <= opts.rel_tol * scale) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

PairwiseModel to_pairwise(const MixtureFit& fit, int i, int j) {
  if (fit.params.size() != 2) throw ContractViolation("pairwise conversion needs a 2-tissue fit");
  PairwiseModel m;
  m.tissue_i = i;
  m.tissue_j = j;
  for (int c = 0; c < 4; ++c) m.p[c] = fit.params.p[c];
  m.delta = fit.params.delta(0, 1);
  m.sigma = fit.params.sigma;
  m.loglik = fit.loglik;
  m.iters = fit.iters;
  m.converged = fit.converged;
  return m;
}

PairwiseModel fit_pair(const ZMatrix& z, int i, int j, const EmOptions& opts) {
  const int k = z.cols();
  if (i < 0 || j < 0 || i >= k || j >= k || i == j) throw ContractViolation("invalid tissue pair");
  const auto rows = subsample_rows(z.rows(), opts);
  RowMatrix sub(static_cast<Eigen::Index>(rows.size()), 2);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    sub(static_cast<Eigen::Index>(r), 0) = z.values(static_cast<Eigen::Index>(rows[r]), i);
    sub(static_cast<Eigen::Index>(r), 1) = z.values(static_cast<Eigen::Index>(rows[r]), j);
  }
  EmOptions inner = opts;
  inner.subsample.reset();
  return to_pairwise(fit_em(sub, std::nullopt, inner), i, j);
}

std::vector<PairwiseModel> fit_all_pairs(const ZMatrix& z, const EmOptions& opts, int threads) {
  const int k = z.cols();
  if (k < 2) throw InputError("pairwise fitting needs at least 2 tissues");
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j) pairs.emplace_back(i, j);
  std::vector<PairwiseModel> out(pairs.size());
  const int workers = resolve_threads(threads);
  EmOptions inner = opts;
  if (workers > 1) inner.threads = 1;
  parallel_for_blocks(
      pairs.size(), [&](std::size_t b) { out[b] = fit_pair(z, pairs[b].first, pairs[b].second, inner); }, workers);
  return out;
}

}  // namespace hteqtl
