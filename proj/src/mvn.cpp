#include "hteqtl/mvn.hpp"

#include <algorithm>
#include <array>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <numbers>

#include "hteqtl/errors.hpp"
#include "hteqtl/parallel.hpp"
#include "hteqtl/rng.hpp"

namespace hteqtl {

namespace {
constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double norm_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }
double log_norm_pdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -kInf;
    if (p == 1.0) return kInf;
    throw DomainError("normal quantile of " + std::to_string(p));
  }
  static const boost::math::normal standard;
  return boost::math::quantile(standard, p);
}

CholFactor CholFactor::of(const Matrix& cov, const std::string& what) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw DomainError(what + " is not positive definite");
  CholFactor f;
  f.lower = llt.matrixL();
  f.log_det = 2.0 * f.lower.diagonal().array().log().sum();
  if (!std::isfinite(f.log_det) || (f.lower.diagonal().array() <= 0.0).any())
    throw DomainError(what + " is numerically singular");
  return f;
}

double logpdf(const Eigen::Ref<const Vector>& z, const CholFactor& f) {
  if (z.size() != f.size()) throw ContractViolation("logpdf: dimension mismatch");
  Vector y = f.lower.triangularView<Eigen::Lower>().solve(z);
  return -f.size() * kLogSqrt2Pi - 0.5 * f.log_det - 0.5 * y.squaredNorm();
}

// ---------------------------------------------------------------------------
// Bivariate normal upper orthant. Drezner & Wesolowsky (1990) with Genz's
// refinements: 6/12/20-point Gauss-Legendre depending on |r|, and an
// asymptotic expansion for |r| >= 0.925.

namespace {

double bvn_genz(double h, double k, double r) {
  if (h == kInf || k == kInf) return 0.0;
  if (h == -kInf) return k == -kInf ? 1.0 : norm_sf(k);
  if (k == -kInf) return norm_sf(h);
  if (r == 0.0) return norm_sf(h) * norm_sf(k);

  static constexpr std::array<double, 3> w6 = {0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
  static constexpr std::array<double, 3> x6 = {0.9324695142031522, 0.6612093864662647, 0.2386191860831970};
  static constexpr std::array<double, 6> w12 = {.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                                0.2031674267230659, 0.2334925365383547, 0.2491470458134029};
  static constexpr std::array<double, 6> x12 = {0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                                                0.5873179542866171, 0.3678314989981802, 0.1252334085114692};
  static constexpr std::array<double, 10> w20 = {.01761400713915212, .04060142980038694, .06267204833410906,
                                                 .08327674157670475, 0.1019301198172404, 0.1181945319615184,
                                                 0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
                                                 0.1527533871307259};
  static constexpr std::array<double, 10> x20 = {0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                                                 0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                                                 0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                                                 0.07652652113349733};
  const double* w;
  const double* x;
  int ng;
  const double ar = std::abs(r);
  if (ar < 0.3) {
    w = w6.data(), x = x6.data(), ng = 3;
  } else if (ar < 0.75) {
    w = w12.data(), x = x12.data(), ng = 6;
  } else {
    w = w20.data(), x = x20.data(), ng = 10;
  }

  const double tp = 2.0 * std::numbers::pi;
  double hk = h * k;
  double bvn = 0.0;
  if (ar < 0.925) {
    const double hs = (h * h + k * k) / 2.0;
    const double asr = std::asin(r) / 2.0;
    for (int i = 0; i < ng; ++i) {
      for (double sgn : {-1.0, 1.0}) {
        const double sn = std::sin(asr * (1.0 + sgn * x[i]));
        bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    return std::clamp(bvn * asr / tp + norm_sf(h) * norm_sf(k), 0.0, 1.0);
  }

  double kk = k;
  if (r < 0.0) {
    kk = -k;
    hk = -hk;
  }
  if (ar < 1.0) {
    const double as = 1.0 - r * r;
    double a = std::sqrt(as);
    const double bs = (h - kk) * (h - kk);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 80.0;
    double asr = -(bs / as + hk) / 2.0;
    if (asr > -100.0) bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
    if (hk > -100.0) {
      const double b = std::sqrt(bs);
      const double sp = std::sqrt(tp) * norm_cdf(-b / a);
      bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
    }
    a /= 2.0;
    double acc = 0.0;
    for (int i = 0; i < ng; ++i) {
      for (double sgn : {-1.0, 1.0}) {
        const double xs0 = a * (1.0 + sgn * x[i]);
        const double xs = xs0 * xs0;
        const double asr_i = -(bs / xs + hk) / 2.0;
        if (asr_i <= -100.0) continue;
        const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
        const double rs = std::sqrt(1.0 - xs);
        const double ep = std::exp(-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
        acc += w[i] * std::exp(asr_i) * (sp - ep);
      }
    }
    bvn = (a * acc - bvn) / tp;
  }
  if (r > 0.0) {
    bvn += norm_sf(std::max(h, kk));
  } else if (h >= kk) {
    bvn = -bvn;
  } else {
    const double l = h < 0.0 ? norm_cdf(kk) - norm_cdf(h) : norm_sf(h) - norm_sf(kk);
    bvn = l - bvn;
  }
  return std::clamp(bvn, 0.0, 1.0);
}

// Positive-integrand form P = int_a^inf phi(x) Phi((r x - b)/s) dx, integrating
// over the coordinate with the larger threshold.
double bvn_tail(double h, double k, double r) {
  const double a = std::max(h, k);
  const double b = std::min(h, k);
  const double s = std::sqrt((1.0 - r) * (1.0 + r));
  auto f = [&](double x) { return std::exp(log_norm_pdf(x)) * norm_sf((b - r * x) / s); };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, kInf, 12, 1e-13);
}

}  // namespace

double bvn_upper(double tau1, double tau2, double omega) {
  if (!(std::abs(omega) < 1.0)) throw DomainError("bvn_upper: |omega| must be < 1, got " + std::to_string(omega));
  if (std::isnan(tau1) || std::isnan(tau2)) throw DomainError("bvn_upper: NaN threshold");
  double p = bvn_genz(tau1, tau2, omega);
  if (p < 1e-4 && omega != 0.0 && std::isfinite(tau1) && std::isfinite(tau2)) p = bvn_tail(tau1, tau2, omega);
  return p;
}

bool is_positive_definite(const Matrix& m) {
  if (m.rows() != m.cols() || !m.allFinite()) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() > 0.0;
}

Matrix pd_repair(const Matrix& m, double floor) {
  if (m.rows() != m.cols()) throw ContractViolation("pd_repair: matrix not square");
  if (!m.allFinite()) throw ContractViolation("pd_repair: non-finite entries");
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10) throw ContractViolation("pd_repair: matrix not symmetric");
  if (!(floor > 0.0)) throw ContractViolation("pd_repair: floor must be positive");

  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  const bool unit_diag = (m.diagonal().array() - 1.0).abs().maxCoeff() <= 1e-12;
  if (es.eigenvalues().minCoeff() > 0.0 && unit_diag) return m;

  Vector lambda = es.eigenvalues();
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    if (lambda(i) <= 0.0) lambda(i) = floor;
  Matrix rebuilt = es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
  Vector inv_sd = rebuilt.diagonal().array().rsqrt();
  Matrix out = inv_sd.asDiagonal() * rebuilt * inv_sd.asDiagonal();
  out = (0.5 * (out + out.transpose())).eval();
  out.diagonal().setOnes();
  return out;
}

// ---------------------------------------------------------------------------

std::map<Configuration, std::uint64_t> mc_config_counts(const Matrix& omega, const Vector& tau, std::uint64_t draws,
                                                        std::uint64_t seed, int threads) {
  const int k = static_cast<int>(omega.rows());
  if (omega.cols() != k || tau.size() != k) throw ContractViolation("mc_config_mass: dimension mismatch");
  if (k < 1 || k > kMaxTissues) throw ContractViolation("mc_config_mass: unsupported K");
  const CholFactor chol = CholFactor::of(omega, "Omega");
  const Matrix& l = chol.lower;

  constexpr std::uint64_t kBlock = 1 << 16;
  const std::size_t n_blocks = block_count(draws, kBlock);
  std::vector<std::vector<std::pair<std::uint64_t, std::uint64_t>>> per_block(n_blocks);

  parallel_for_blocks(
      n_blocks,
      [&](std::size_t b) {
        const std::uint64_t begin = b * kBlock;
        const std::uint64_t end = std::min(draws, begin + kBlock);
        std::vector<std::uint64_t> codes(end - begin);
        std::vector<double> normals(k);
        for (std::uint64_t d = begin; d < end; ++d) {
          CounterStream rng(seed, StreamPurpose::ConfigMass, d);
          for (int i = 0; i < k; ++i) normals[i] = rng.next_normal();
          std::uint64_t code = 0;
          for (int i = 0; i < k; ++i) {
            double w = 0.0;
            for (int j = 0; j <= i; ++j) w += l(i, j) * normals[j];
            code = (code << 1) | static_cast<std::uint64_t>(w > tau(i));
          }
          codes[d - begin] = code;
        }
        std::sort(codes.begin(), codes.end());
        auto& out = per_block[b];
        for (std::size_t i = 0; i < codes.size();) {
          std::size_t j = i;
          while (j < codes.size() && codes[j] == codes[i]) ++j;
          out.emplace_back(codes[i], j - i);
          i = j;
        }
      },
      threads);

  std::map<Configuration, std::uint64_t> counts;
  for (const auto& block : per_block)
    for (const auto& [code, n] : block) counts[Configuration(code, k)] += n;
  return counts;
}

std::map<Configuration, double> mc_config_mass(const Matrix& omega, const Vector& tau, std::uint64_t draws,
                                               std::uint64_t seed, int threads) {
  if (draws == 0) throw ContractViolation("mc_config_mass: draws must be positive");
  std::map<Configuration, double> mass;
  for (const auto& [g, n] : mc_config_counts(omega, tau, draws, seed, threads))
    mass[g] = static_cast<double>(n) / static_cast<double>(draws);
  return mass;
}

// ---------------------------------------------------------------------------

namespace {

// P(V >= t) for V ~ N(0, corr), corr a correlation matrix, dim <= 4.
double upper_orthant(const Matrix& corr, const Vector& t) {
  const int k = static_cast<int>(t.size());
  if (k == 1) return norm_sf(t(0));
  if (k == 2) return bvn_genz(t(0), t(1), std::clamp(corr(0, 1), -1.0 + 1e-15, 1.0 - 1e-15));

  // Condition on the coordinate with the largest threshold.
  int pivot = 0;
  for (int i = 1; i < k; ++i)
    if (t(i) > t(pivot)) pivot = i;
  std::vector<int> rest;
  for (int i = 0; i < k; ++i)
    if (i != pivot) rest.push_back(i);

  const int m = k - 1;
  Vector c(m), sd(m);
  Matrix cond(m, m);
  for (int a = 0; a < m; ++a) c(a) = corr(rest[a], pivot);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) cond(a, b) = corr(rest[a], rest[b]) - c(a) * c(b);
  for (int a = 0; a < m; ++a) sd(a) = std::sqrt(cond(a, a));
  Matrix rcorr = sd.cwiseInverse().asDiagonal() * cond * sd.cwiseInverse().asDiagonal();
  rcorr.diagonal().setOnes();

  auto integrand = [&](double x) {
    Vector tt(m);
    for (int a = 0; a < m; ++a) tt(a) = (t(rest[a]) - c(a) * x) / sd(a);
    return std::exp(log_norm_pdf(x)) * upper_orthant(rcorr, tt);
  };
  // phi(x) is below 1e-21 past |x| = 10.
  const double lo = std::max(t(pivot), -10.0);
  const double hi = 10.0;
  if (lo >= hi) return 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, lo, hi, 12, 1e-11);
}

}  // namespace

double rect_prob_exact(const Matrix& omega, const Vector& tau, const Configuration& gamma) {
  const int k = static_cast<int>(tau.size());
  if (omega.rows() != k || omega.cols() != k || gamma.size() != k)
    throw ContractViolation("rect_prob_exact: dimension mismatch");
  if (k > 4)
    throw DomainError("rect_prob_exact supports K <= 4 (got " + std::to_string(k) + "); use mc_config_mass");
  if (!is_positive_definite(omega)) throw DomainError("Omega is not positive definite");

  // Reflect lower half-lines so every coordinate is an upper orthant.
  Vector sign(k), t(k);
  for (int i = 0; i < k; ++i) {
    sign(i) = gamma.test(i) ? 1.0 : -1.0;
    t(i) = sign(i) * tau(i);
  }
  Matrix corr = sign.asDiagonal() * omega * sign.asDiagonal();
  if (k == 2) return bvn_upper(t(0), t(1), corr(0, 1));
  return std::clamp(upper_orthant(corr, t), 0.0, 1.0);
}

}  // namespace hteqtl
