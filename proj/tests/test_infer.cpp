#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "hteqtl/errors.hpp"
#include "hteqtl/infer.hpp"
#include "hteqtl/zmatrix_io.hpp"

using namespace hteqtl;

namespace {

Configuration cfg(const char* s) { return Configuration::from_string(s); }

FullModel scalar_model() {
  FullModel m;
  m.tissues = TissueSet::make({"T"}, {100}, {0});
  m.delta = Matrix::Ones(1, 1);
  m.sigma = Matrix::Constant(1, 1, 4.0);
  m.omega = Matrix::Ones(1, 1);
  m.tau = Vector::Zero(1);
  m.mu = Vector::Zero(1);
  m.prior = {{cfg("0"), 0.95}, {cfg("1"), 0.05}};
  return m;
}

FullModel three_tissue_model() {
  FullModel m;
  m.tissues = TissueSet::make({"A", "B", "C"}, {100, 100, 100}, {0, 0, 0});
  m.delta.resize(3, 3);
  m.delta << 1, .2, .1, .2, 1, .3, .1, .3, 1;
  m.sigma.resize(3, 3);
  m.sigma << 4, 2.8, 2.4, 2.8, 4, 2.8, 2.4, 2.8, 4;
  m.omega = Matrix::Identity(3, 3);
  m.tau = Vector::Zero(3);
  m.mu = Vector::Zero(3);
  m.prior = {{cfg("000"), 0.85}, {cfg("001"), 0.02}, {cfg("010"), 0.02}, {cfg("011"), 0.01},
             {cfg("100"), 0.02}, {cfg("101"), 0.01}, {cfg("110"), 0.01}, {cfg("111"), 0.06}};
  return m;
}

struct Sample {
  ZMatrix z;
  std::vector<Configuration> truth;
};

Sample sample(const FullModel& m, int n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  std::vector<double> w;
  for (auto& e : m.prior) w.push_back(e.prob);
  std::discrete_distribution<int> pick(w.begin(), w.end());
  const int k = m.size();
  std::vector<Matrix> chol;
  for (auto& e : m.prior) chol.push_back(config_cov(e.config, m.delta, m.sigma).llt().matrixL());
  Sample s;
  s.z.tissues = m.tissues;
  s.z.values.resize(n, k);
  Vector e(k);
  for (int r = 0; r < n; ++r) {
    const int c = pick(gen);
    for (int a = 0; a < k; ++a) e(a) = nd(gen);
    s.z.values.row(r) = (chol[c] * e).transpose();
    s.z.pair_ids.push_back(std::to_string(r));
    s.truth.push_back(m.prior[c].config);
  }
  return s;
}

}  // namespace

TEST_CASE("config_cov") {
  Matrix d(2, 2), s(2, 2);
  d << 1, .3, .3, 1;
  s << 4, 2, 2, 5;
  CHECK(config_cov(cfg("00"), d, s) == d);
  CHECK(config_cov(cfg("11"), d, s) == d + s);
  Matrix e(2, 2);
  e << 5, .3, .3, 1;
  CHECK(config_cov(cfg("10"), d, s) == e);
}

TEST_CASE("scalar lfdr") {
  auto m = scalar_model();
  ComponentCache cache(m);
  Vector z = Vector::Zero(1);
  // .95 phi(0;0,1) / (.95 phi(0;0,1) + .05 phi(0;0,5)) = .95 / (.95 + .05/sqrt5)
  CHECK(lfdr(z, cache, ConfigFamily::any_eqtl()) == doctest::Approx(0.9770037186405233).epsilon(1e-14));
  z(0) = 40;
  CHECK(lfdr(z, cache, ConfigFamily::any_eqtl()) < 1e-100);
  double prev = 2;
  for (double x = 0; x < 12; x += 0.05) {
    z(0) = x;
    const double a = lfdr(z, cache, ConfigFamily::any_eqtl());
    z(0) = -x;
    CHECK(lfdr(z, cache, ConfigFamily::any_eqtl()) == a);
    if (x > 0) CHECK(a < prev);
    prev = a;
  }
}

TEST_CASE("complementary families sum to one") {
  auto m = three_tissue_model();
  ComponentCache cache(m);
  auto s = sample(m, 500, 1);
  for (auto fam : {ConfigFamily::any_eqtl(), ConfigFamily::all_tissues(), ConfigFamily::tissue_specific(),
                   ConfigFamily::in_tissue(1), ConfigFamily::single_tissue(2)}) {
    auto comp = fam.complement(3);
    auto a = lfdr_rows(s.z.values, cache, family_mask(cache, fam));
    auto b = lfdr_rows(s.z.values, cache, family_mask(cache, comp));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] + b[i] - 1.0) < 1e-12);
  }
}

TEST_CASE("lfdr matches a direct density oracle") {
  auto m = three_tissue_model();
  ComponentCache cache(m);
  auto s = sample(m, 100, 2);
  auto fam = ConfigFamily::tissue_specific();
  auto v = lfdr_rows(s.z.values, cache, family_mask(cache, fam), 2);
  for (int r = 0; r < 100; ++r) {
    double num = 0, den = 0;
    Vector x = s.z.values.row(r).transpose();
    for (auto& e : m.prior) {
      Matrix c = config_cov(e.config, m.delta, m.sigma);
      double f = e.prob * std::exp(-0.5 * x.dot(c.inverse() * x)) / std::sqrt(std::pow(2 * M_PI, 3) * c.determinant());
      den += f;
      if (!fam.contains(e.config)) num += f;
    }
    CHECK(v[r] == doctest::Approx(num / den).epsilon(1e-10));
  }
}

TEST_CASE("degenerate families are rejected") {
  auto m = three_tissue_model();
  m.prior = {{cfg("000"), 0.9}, {cfg("111"), 0.1}};
  ComponentCache cache(m);
  CHECK_THROWS_AS(family_mask(cache, ConfigFamily::tissue_specific()), DomainError);
  CHECK_THROWS_AS(family_mask(cache, ConfigFamily::single_tissue(0)), DomainError);
  CHECK_NOTHROW(family_mask(cache, ConfigFamily::all_tissues()));
}

TEST_CASE("adaptive_reject examples") {
  auto d = adaptive_reject({0.01, 0.02, 0.10, 0.50}, 0.05);
  CHECK(d.n_reject == 3);
  CHECK(d.rejected == std::vector<std::uint8_t>{1, 1, 1, 0});
  CHECK(d.achieved_mean_lfdr == doctest::Approx(0.13 / 3));

  d = adaptive_reject({0.50, 0.10, 0.01, 0.02}, 0.05);
  CHECK(d.rejected == std::vector<std::uint8_t>{0, 1, 1, 1});

  d = adaptive_reject(std::vector<double>(7, 0.0), 0.05);
  CHECK(d.n_reject == 7);
  d = adaptive_reject({0.05, 0.2, 0.9}, 0.05);
  CHECK(d.n_reject == 0);
  CHECK(d.achieved_mean_lfdr == 0.0);
  CHECK(adaptive_reject({}, 0.05).n_reject == 0);
  CHECK_THROWS_AS(adaptive_reject({0.1}, 0.0), InputError);
  CHECK_THROWS_AS(adaptive_reject({1.1}, 0.5), ContractViolation);

  // ties resolve by original index
  d = adaptive_reject({0.04, 0.06, 0.04, 0.06, 0.04}, 0.046);
  CHECK(d.n_reject == 4);
  CHECK(d.rejected == std::vector<std::uint8_t>{1, 1, 1, 0, 1});
}

TEST_CASE("adaptive_reject prefix and monotonicity properties") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> l(200);
    for (auto& x : l) x = std::pow(u(gen), 3);
    auto d = adaptive_reject(l, 0.1);
    double max_rej = -1, min_kept = 2;
    for (std::size_t i = 0; i < l.size(); ++i)
      (d.rejected[i] ? max_rej : min_kept) = d.rejected[i] ? std::max(max_rej, l[i]) : std::min(min_kept, l[i]);
    CHECK(max_rej <= min_kept);
    double top = *std::max_element(l.begin(), l.end());
    l.push_back(std::min(1.0, top + 0.01));
    CHECK(adaptive_reject(l, 0.1).n_reject >= d.n_reject);
  }
}

TEST_CASE("test_family controls FDR on data from the model") {
  auto m = three_tissue_model();
  auto s = sample(m, 100000, 4);
  for (auto fam : {ConfigFamily::any_eqtl(), ConfigFamily::all_tissues(), ConfigFamily::tissue_specific()}) {
    auto d = test_family(s.z, m, fam, 0.05);
    std::size_t fp = 0;
    for (std::size_t i = 0; i < d.rejected.size(); ++i)
      if (d.rejected[i] && !fam.contains(s.truth[i])) ++fp;
    REQUIRE(d.n_reject > 0);
    CHECK(double(fp) / d.n_reject <= 0.07);
    CHECK(d.achieved_mean_lfdr < 0.05);
  }
}

TEST_CASE("test_family limits and consistency") {
  auto m = three_tissue_model();
  auto s = sample(m, 3000, 5);
  auto d = test_family(s.z, m, ConfigFamily::any_eqtl(), 1 - 1e-9);
  std::size_t below = std::count_if(d.lfdrs.begin(), d.lfdrs.end(), [](double v) { return v < 1.0; });
  CHECK(d.n_reject == below);

  auto sm = scalar_model();
  ZMatrix z1;
  z1.tissues = sm.tissues;
  z1.values = RowMatrix::Zero(3, 1);
  z1.values(1, 0) = 2.0;
  z1.pair_ids = {"a", "b", "c"};
  auto d1 = test_family(z1, sm, ConfigFamily::in_tissue(0), 0.5);
  CHECK(d1.lfdrs[0] == doctest::Approx(0.9770037186405233).epsilon(1e-14));

  // the same rows in another order give the same per-row lfdrs
  ZMatrix rev = s.z;
  rev.values = s.z.values.colwise().reverse();
  auto a = test_family(s.z, m, ConfigFamily::in_tissue(1), 0.05);
  auto b = test_family(rev, m, ConfigFamily::in_tissue(1), 0.05);
  CHECK(a.n_reject == b.n_reject);
  for (std::size_t i = 0; i < a.lfdrs.size(); ++i)
    CHECK(std::abs(a.lfdrs[i] - b.lfdrs[a.lfdrs.size() - 1 - i]) < 1e-14);

  ZMatrix wrong = s.z;
  wrong.values = RowMatrix::Zero(3, 2);
  CHECK_THROWS_AS(test_family(wrong, m, ConfigFamily::any_eqtl(), 0.05), ContractViolation);
}

TEST_CASE("lfdr is thread-count independent and streaming agrees") {
  auto m = three_tissue_model();
  auto s = sample(m, 20000, 6);
  ComponentCache cache(m);
  auto mask = family_mask(cache, ConfigFamily::any_eqtl());
  auto one = lfdr_rows(s.z.values, cache, mask, 1);
  auto four = lfdr_rows(s.z.values, cache, mask, 4);
  CHECK(one == four);

  auto path = std::filesystem::temp_directory_path() / "hteqtl_stream.htz";
  write_zmatrix(s.z, path, ZFormat::Binary);
  ZReader reader(path);
  auto streamed = lfdr_stream(reader, cache, mask, 4096, 2);
  REQUIRE(streamed.size() == one.size());
  for (std::size_t i = 0; i < one.size(); ++i) CHECK(std::abs(streamed[i] - one[i]) < 1e-14);
  std::filesystem::remove(path);
  std::filesystem::remove(tissues_sidecar(path));
}

TEST_CASE("hamming_mass") {
  auto m = three_tissue_model();
  m.prior = {{cfg("000"), 0.9}, {cfg("111"), 0.1}};
  Vector h = hamming_mass(m);
  CHECK(h(0) == 0.9);
  CHECK(h(1) == 0.0);
  CHECK(h(3) == 0.1);

  FullModel u;
  u.tissues = TissueSet::make({"a", "b", "c", "d"}, {50, 50, 50, 50}, {0, 0, 0, 0});
  for (auto& g : Configuration::enumerate(4)) u.prior.push_back({g, 1.0 / 16});
  h = hamming_mass(u);
  const double binom[5] = {1, 4, 6, 4, 1};
  for (int i = 0; i < 5; ++i) CHECK(h(i) == doctest::Approx(binom[i] / 16));
}

TEST_CASE("tissue_cluster") {
  Matrix c(4, 4);
  c << 1, .9, .4, .3, .9, 1, .5, .2, .4, .5, 1, .8, .3, .2, .8, 1;
  Vector sd(4);
  sd << 2, 1.5, 1, 3;
  Matrix s = sd.asDiagonal() * c * sd.asDiagonal();
  auto d = tissue_cluster(s, {"t1", "t2", "t3", "t4"});
  REQUIRE(d.merges.size() == 3);
  CHECK(d.merges[0].left == 0);
  CHECK(d.merges[0].right == 1);
  CHECK(d.merges[0].height == doctest::Approx(0.1));
  CHECK(d.merges[1].left == 2);
  CHECK(d.merges[1].right == 3);
  CHECK(d.merges[1].height == doctest::Approx(0.2));
  CHECK(d.merges[2].height == doctest::Approx(0.5));
  CHECK(d.newick == "((t1:0.1,t2:0.1):0.4,(t3:0.2,t4:0.2):0.3);");

  Matrix diag = Vector::Constant(3, 4.0).asDiagonal();
  d = tissue_cluster(diag, {"a", "b", "c"});
  for (auto& mg : d.merges) CHECK(mg.height == 1.0);

  Matrix blocks = Matrix::Zero(4, 4);
  blocks.topLeftCorner(2, 2).setConstant(3.0);
  blocks.bottomRightCorner(2, 2).setConstant(2.0);
  d = tissue_cluster(blocks, {"a", "b", "c", "d"});
  CHECK(std::abs(d.merges[0].height) < 1e-15);
  CHECK(std::abs(d.merges[1].height) < 1e-15);
  CHECK(d.merges[2].height == 1.0);

  diag(1, 1) = 0;
  CHECK_THROWS_AS(tissue_cluster(diag, {"a", "b", "c"}), DomainError);
}
