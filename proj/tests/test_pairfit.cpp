#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "hteqtl/errors.hpp"
#include "hteqtl/mvn.hpp"
#include "hteqtl/pairfit.hpp"

using namespace hteqtl;

namespace {

// Draws rows from sum_g p(g) N(0, Delta + Sigma o g g').
RowMatrix sample_mixture(const MixtureParams& m, int n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::discrete_distribution<int> pick(m.p.begin(), m.p.end());
  const int k = m.size();
  std::vector<Matrix> chol;
  for (int c = 0; c < (1 << k); ++c)
    chol.push_back(component_cov(m.delta, m.sigma, Configuration{std::uint64_t(c), k}).llt().matrixL());
  RowMatrix z(n, k);
  Vector e(k);
  for (int r = 0; r < n; ++r) {
    const int c = pick(gen);
    for (int a = 0; a < k; ++a) e(a) = nd(gen);
    z.row(r) = (chol[c] * e).transpose();
  }
  return z;
}

MixtureParams pair_truth() {
  MixtureParams m;
  m.delta = Matrix::Identity(2, 2);
  m.delta(0, 1) = m.delta(1, 0) = 0.3;
  m.sigma.resize(2, 2);
  m.sigma << 4, 2.4, 2.4, 4;
  m.p = {0.90, 0.02, 0.02, 0.06};
  return m;
}

MixtureParams null_params(double delta) {
  MixtureParams m;
  m.delta = Matrix::Identity(2, 2);
  m.delta(0, 1) = m.delta(1, 0) = delta;
  m.sigma = Matrix::Zero(2, 2);
  m.p = {1.0, 0.0, 0.0, 0.0};
  return m;
}

}  // namespace

TEST_CASE("estep degenerate prior") {
  RowMatrix z = sample_mixture(pair_truth(), 200, 1);
  auto w = estep(z, null_params(0.3));
  CHECK(w.col(0).minCoeff() == 1.0);
  CHECK(w.rightCols(3).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("estep scalar two-component example") {
  MixtureParams m;
  m.delta = Matrix::Ones(1, 1);
  m.sigma = Matrix::Constant(1, 1, 4.0);
  m.p = {0.5, 0.5};
  RowMatrix z = RowMatrix::Zero(1, 1);
  auto w = estep(z, m);
  // phi(0;0,1) / (phi(0;0,1) + phi(0;0,5)) = sqrt5 / (sqrt5 + 1)
  CHECK(w(0, 0) == doctest::Approx(0.6909830056250525).epsilon(1e-14));
  CHECK(w(0, 1) == doctest::Approx(1 - 0.6909830056250525).epsilon(1e-14));
}

TEST_CASE("estep rows are stochastic and match a direct density oracle") {
  auto m = pair_truth();
  RowMatrix z = sample_mixture(m, 3000, 2) * 1.5;
  z(0, 0) = 40.0;
  z(0, 1) = -35.0;
  auto w = estep(z, m, 3);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    CHECK(w.row(r).minCoeff() >= 0.0);
    CHECK(std::abs(w.row(r).sum() - 1.0) <= 1e-12);
  }
  for (int r = 1; r < 50; ++r) {
    double dens[4], tot = 0;
    for (int c = 0; c < 4; ++c) {
      Matrix cov = component_cov(m.delta, m.sigma, Configuration{std::uint64_t(c), 2});
      Vector x = z.row(r).transpose();
      dens[c] = m.p[c] * std::exp(-0.5 * x.dot(cov.inverse() * x)) / (2 * M_PI * std::sqrt(cov.determinant()));
      tot += dens[c];
    }
    for (int c = 0; c < 4; ++c) CHECK(w(r, c) == doctest::Approx(dens[c] / tot).epsilon(1e-10));
  }
}

TEST_CASE("estep and pseudo_loglik reject non-PD components") {
  auto m = pair_truth();
  m.sigma << 4, 0, 0, -3;
  RowMatrix z = RowMatrix::Zero(5, 2);
  CHECK_THROWS_WITH_AS(estep(z, m), doctest::Contains("01"), DomainError);
  CHECK_THROWS_AS(pseudo_loglik(z, m), DomainError);
}

TEST_CASE("pseudo_loglik basics") {
  auto m = null_params(0.3);
  RowMatrix z(1, 2);
  z << 0.7, -1.1;
  Matrix cov = m.delta;
  CHECK(pseudo_loglik(z, m) == doctest::Approx(logpdf(z.row(0).transpose(), CholFactor::of(cov))).epsilon(1e-14));

  auto t = pair_truth();
  RowMatrix data = sample_mixture(t, 5000, 3);
  RowMatrix perm = data;
  std::vector<int> idx(5000);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), std::mt19937(4));
  for (int i = 0; i < 5000; ++i) perm.row(i) = data.row(idx[i]);
  CHECK(pseudo_loglik(perm, t) == doctest::Approx(pseudo_loglik(data, t)).epsilon(1e-12));

  RowMatrix null_data = sample_mixture(null_params(0.3), 100000, 5);
  const double at_truth = pseudo_loglik(null_data, null_params(0.3));
  CHECK(pseudo_loglik(null_data, null_params(0.4)) < at_truth);
  CHECK(pseudo_loglik(null_data, null_params(0.2)) < at_truth);
}

TEST_CASE("fit_em recovers two-tissue parameters") {
  auto truth = pair_truth();
  RowMatrix z = sample_mixture(truth, 100000, 11);
  auto fit = fit_em(z, std::nullopt, EmOptions{});
  CHECK(fit.converged);
  for (int c = 0; c < 4; ++c) CHECK(std::abs(fit.params.p[c] - truth.p[c]) <= 0.01);
  CHECK(std::abs(fit.params.delta(0, 1) - 0.3) <= 0.03);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      CHECK(std::abs(fit.params.sigma(a, b) - truth.sigma(a, b)) <= 0.15 * std::abs(truth.sigma(a, b)));
  for (std::size_t i = 1; i < fit.trace.size(); ++i) CHECK(fit.trace[i] >= fit.trace[i - 1] - kEmSlack);
  auto pm = to_pairwise(fit, 0, 1);
  CHECK(pm.violations().empty());
}

TEST_CASE("fit_em on pure null data") {
  RowMatrix z = sample_mixture(null_params(0.3), 100000, 12);
  auto fit = fit_em(z, std::nullopt, EmOptions{});
  CHECK(fit.params.p[0] >= 0.99);
  CHECK(std::abs(fit.params.delta(0, 1) - 0.3) <= 0.03);
}

TEST_CASE("fit_em started at the truth never decreases") {
  auto truth = pair_truth();
  RowMatrix z = sample_mixture(truth, 20000, 13);
  EmOptions o;
  o.rel_tol = 1e-12;
  o.max_iters = 40;
  auto fit = fit_em(z, truth, o);
  REQUIRE(fit.trace.size() >= 2);
  for (std::size_t i = 1; i < fit.trace.size(); ++i) CHECK(fit.trace[i] >= fit.trace[i - 1] - kEmSlack);
  CHECK(fit.loglik >= pseudo_loglik(z, truth));
}

TEST_CASE("fit_em refuses too few rows and bad options") {
  RowMatrix z = sample_mixture(pair_truth(), 39, 14);
  CHECK_THROWS_AS(fit_em(z, std::nullopt, EmOptions{}), InputError);
  RowMatrix z5 = RowMatrix::Zero(1000, 5);
  CHECK_THROWS_AS(fit_em(z5, std::nullopt, EmOptions{}), DomainError);
  EmOptions bad;
  bad.max_iters = 0;
  CHECK_THROWS_AS(fit_em(sample_mixture(pair_truth(), 100, 1), std::nullopt, bad), InputError);
  bad = EmOptions{};
  bad.rel_tol = 0;
  CHECK_THROWS_AS(fit_em(sample_mixture(pair_truth(), 100, 1), std::nullopt, bad), InputError);
}

TEST_CASE("fit_em is deterministic across thread counts and runs") {
  RowMatrix z = sample_mixture(pair_truth(), 30000, 15);
  EmOptions a;
  a.threads = 1;
  a.subsample = 20000;
  a.seed = 99;
  EmOptions b = a;
  b.threads = 4;
  auto f1 = fit_em(z, std::nullopt, a);
  auto f2 = fit_em(z, std::nullopt, b);
  auto f3 = fit_em(z, std::nullopt, a);
  CHECK(f1.loglik == f2.loglik);
  CHECK(f1.params.p == f2.params.p);
  CHECK(f1.params.sigma == f2.params.sigma);
  CHECK(f1.params.delta == f3.params.delta);
  CHECK(f1.iters == f3.iters);
}

TEST_CASE("subsample selection") {
  EmOptions o;
  o.subsample = 100;
  o.seed = 5;
  auto r = subsample_rows(1000, o);
  CHECK(r.size() == 100);
  CHECK(std::is_sorted(r.begin(), r.end()));
  CHECK(std::adjacent_find(r.begin(), r.end()) == r.end());
  CHECK(r == subsample_rows(1000, o));
  o.seed = 6;
  CHECK(r != subsample_rows(1000, o));
  CHECK(subsample_rows(50, o).size() == 50);
}

TEST_CASE("swapping tissue columns swaps the estimates") {
  auto truth = pair_truth();
  truth.sigma << 4.5, 2.0, 2.0, 3.0;
  truth.p = {0.88, 0.03, 0.02, 0.07};
  RowMatrix z = sample_mixture(truth, 50000, 16);
  RowMatrix zs = z.rowwise().reverse();
  auto f = fit_em(z, std::nullopt, EmOptions{});
  auto g = fit_em(zs, std::nullopt, EmOptions{});
  CHECK(std::abs(f.params.p[0] - g.params.p[0]) < 1e-5);
  CHECK(std::abs(f.params.p[1] - g.params.p[2]) < 1e-5);
  CHECK(std::abs(f.params.p[2] - g.params.p[1]) < 1e-5);
  CHECK(std::abs(f.params.p[3] - g.params.p[3]) < 1e-5);
  CHECK(std::abs(f.params.delta(0, 1) - g.params.delta(0, 1)) < 1e-5);
  CHECK(std::abs(f.params.sigma(0, 0) - g.params.sigma(1, 1)) < 1e-4);
  CHECK(std::abs(f.params.sigma(1, 1) - g.params.sigma(0, 0)) < 1e-4);
  CHECK(std::abs(f.params.sigma(0, 1) - g.params.sigma(1, 0)) < 1e-4);
}

TEST_CASE("three-tissue direct fit recovers parameters") {
  MixtureParams t;
  t.delta.resize(3, 3);
  t.delta << 1, 0.2, 0.1, 0.2, 1, 0.3, 0.1, 0.3, 1;
  t.sigma.resize(3, 3);
  t.sigma << 4, 2.8, 2.4, 2.8, 4, 2.8, 2.4, 2.8, 4;
  t.p = {0.85, 0.02, 0.02, 0.01, 0.02, 0.01, 0.01, 0.06};
  RowMatrix z = sample_mixture(t, 100000, 17);
  auto fit = fit_em(z, std::nullopt, EmOptions{});
  for (int c = 0; c < 8; ++c) CHECK(std::abs(fit.params.p[c] - t.p[c]) <= 0.01);
  CHECK((fit.params.delta - t.delta).cwiseAbs().maxCoeff() <= 0.03);
  CHECK(((fit.params.sigma - t.sigma).array() / t.sigma.array()).abs().maxCoeff() <= 0.15);
}

TEST_CASE("fit_all_pairs covers every pair in order") {
  MixtureParams t;
  t.delta = Matrix::Identity(3, 3);
  t.sigma = 4.0 * Matrix::Identity(3, 3);
  t.p = {0.9, 0.02, 0.02, 0.0, 0.02, 0.0, 0.0, 0.04};
  ZMatrix z;
  z.values = sample_mixture(t, 5000, 18);
  z.tissues = TissueSet::make({"A", "B", "C"}, {60, 60, 60}, {0, 0, 0});
  for (int i = 0; i < 5000; ++i) z.pair_ids.push_back(std::to_string(i));
  auto fits = fit_all_pairs(z, EmOptions{}, 2);
  REQUIRE(fits.size() == 3);
  CHECK(fits[0].tissue_i == 0);
  CHECK(fits[0].tissue_j == 1);
  CHECK(fits[2].tissue_i == 1);
  CHECK(fits[2].tissue_j == 2);
  auto single = fit_pair(z, 0, 2, EmOptions{});
  CHECK(single.loglik == fits[1].loglik);
  CHECK(single.p == fits[1].p);
}
