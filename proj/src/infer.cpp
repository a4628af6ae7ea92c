#include "hteqtl/infer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "hteqtl/errors.hpp"
#include "hteqtl/parallel.hpp"
#include "hteqtl/zmatrix_io.hpp"

namespace hteqtl {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr std::size_t kInnerRows = 1024;

void lfdr_panel(const ComponentCache& cache, const std::vector<std::uint8_t>& mask, const double* rows, std::size_t n,
                double* out, Matrix& work) {
  cache.log_joint(rows, n, work);
  const Eigen::Index m = work.rows();
  for (std::size_t r = 0; r < n; ++r) {
    const double* col = work.data() + static_cast<Eigen::Index>(r) * m;
    double mx_all = -std::numeric_limits<double>::infinity();
    double mx_null = mx_all;
    for (Eigen::Index c = 0; c < m; ++c) {
      mx_all = std::max(mx_all, col[c]);
      if (!mask[c]) mx_null = std::max(mx_null, col[c]);
    }
    double s_all = 0.0, s_null = 0.0;
    for (Eigen::Index c = 0; c < m; ++c) {
      s_all += std::exp(col[c] - mx_all);
      if (!mask[c]) s_null += std::exp(col[c] - mx_null);
    }
    double v = std::exp(mx_null + std::log(s_null) - mx_all - std::log(s_all));
    out[r] = std::clamp(std::isnan(v) ? 1.0 : v, 0.0, 1.0);
  }
}

void lfdr_block_parallel(const ComponentCache& cache, const std::vector<std::uint8_t>& mask, const double* rows,
                         std::size_t n, double* out, int threads) {
  const int k = cache.dims();
  parallel_for_blocks(
      block_count(n, kInnerRows),
      [&](std::size_t b) {
        thread_local Matrix work;
        const std::size_t lo = b * kInnerRows;
        const std::size_t hi = std::min(n, lo + kInnerRows);
        lfdr_panel(cache, mask, rows + lo * static_cast<std::size_t>(k), hi - lo, out + lo, work);
      },
      threads);
}

std::string newick_label(const std::string& name) {
  if (name.find_first_of("():;,'[] \t") == std::string::npos) return name;
  std::string out = "'";
  for (char ch : name) {
    if (ch == '\'') out += '\'';
    out += ch;
  }
  return out + "'";
}

std::string newick_length(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", std::max(x, 0.0));
  return buf;
}

}  // namespace

Matrix config_cov(const Configuration& g, const Matrix& delta, const Matrix& sigma) {
  Matrix cov = delta;
  const int k = static_cast<int>(delta.rows());
  for (int a = 0; a < k; ++a)
    if (g.test(a))
      for (int b = 0; b < k; ++b)
        if (g.test(b)) cov(a, b) += sigma(a, b);
  return cov;
}

ComponentCache::ComponentCache(const FullModel& model) : dims_(model.size()) {
  for (const auto& e : model.prior) {
    if (e.prob <= 0.0) continue;
    configs_.push_back(e.config);
    log_prior_.push_back(std::log(e.prob));
    factors_.push_back(
        CholFactor::of(config_cov(e.config, model.delta, model.sigma), "covariance of configuration " + e.config.to_string()));
  }
  if (configs_.empty()) throw DomainError("model has no configuration with positive prior mass");
}

void ComponentCache::log_joint(const double* rows, std::size_t n, Matrix& out) const {
  const Eigen::Index k = dims_;
  const Eigen::Index b = static_cast<Eigen::Index>(n);
  Eigen::Map<const Matrix> panel(rows, k, b);
  out.resize(static_cast<Eigen::Index>(configs_.size()), b);
  Matrix y(k, b);
  for (std::size_t c = 0; c < configs_.size(); ++c) {
    y = panel;
    factors_[c].lower.triangularView<Eigen::Lower>().solveInPlace(y);
    const double base = log_prior_[c] - 0.5 * (k * kLog2Pi + factors_[c].log_det);
    out.row(static_cast<Eigen::Index>(c)) = (base - 0.5 * y.colwise().squaredNorm().array()).matrix();
  }
}

std::vector<std::uint8_t> family_mask(const ComponentCache& cache, const ConfigFamily& family) {
  family.check(cache.dims());
  std::vector<std::uint8_t> mask(cache.size());
  std::size_t in = 0;
  for (std::size_t i = 0; i < cache.size(); ++i) {
    mask[i] = family.contains(cache.config(i)) ? 1 : 0;
    in += mask[i];
  }
  if (in == 0)
    throw DomainError("family " + family.label() + " has no retained configuration; the test is impossible under this prior");
  if (in == cache.size())
    throw DomainError("family " + family.label() + " contains every retained configuration; there is no null");
  return mask;
}

double lfdr(const Eigen::Ref<const Vector>& z, const ComponentCache& cache, const ConfigFamily& family) {
  if (z.size() != cache.dims()) throw ContractViolation("lfdr: dimension mismatch");
  const auto mask = family_mask(cache, family);
  Vector zz = z;
  Matrix work;
  double out = 0.0;
  lfdr_panel(cache, mask, zz.data(), 1, &out, work);
  return out;
}

std::vector<double> lfdr_rows(const RowMatrix& z, const ComponentCache& cache, const std::vector<std::uint8_t>& mask,
                              int threads) {
  if (z.cols() != cache.dims()) throw ContractViolation("lfdr: z has " + std::to_string(z.cols()) +
                                                        " columns, model has " + std::to_string(cache.dims()));
  if (mask.size() != cache.size()) throw ContractViolation("lfdr: mask size mismatch");
  std::vector<double> out(static_cast<std::size_t>(z.rows()));
  lfdr_block_parallel(cache, mask, z.data(), out.size(), out.data(), threads);
  return out;
}

std::vector<double> lfdr_stream(ZReader& reader, const ComponentCache& cache, const std::vector<std::uint8_t>& mask,
                                std::size_t chunk_rows, int threads) {
  if (reader.cols() != cache.dims())
    throw ContractViolation("z-matrix has " + std::to_string(reader.cols()) + " columns, model has " +
                            std::to_string(cache.dims()));
  if (chunk_rows == 0) throw InputError("chunk size must be positive");
  std::vector<double> out;
  if (auto n = reader.total_rows()) out.reserve(static_cast<std::size_t>(*n));
  std::vector<std::string> ids;
  RowMatrix chunk;
  while (std::size_t got = reader.next(chunk_rows, ids, chunk)) {
    if (!chunk.topRows(static_cast<Eigen::Index>(got)).allFinite())
      throw InputError("z-matrix contains non-finite values near row " + std::to_string(out.size() + 1));
    const std::size_t at = out.size();
    out.resize(at + got);
    lfdr_block_parallel(cache, mask, chunk.data(), got, out.data() + at, threads);
  }
  return out;
}

DiscoverySet adaptive_reject(std::vector<double> lfdrs, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0,1)");
  for (double v : lfdrs)
    if (!(v >= 0.0 && v <= 1.0)) throw ContractViolation("lfdr outside [0,1]");
  const std::size_t n = lfdrs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lfdrs[a] < lfdrs[b]; });

  CompensatedSum running;
  std::size_t n_star = 0;
  double mean_at_star = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    running.add(lfdrs[order[i]]);
    const double mean = running.value() / static_cast<double>(i + 1);
    if (mean < alpha) {
      n_star = i + 1;
      mean_at_star = mean;
    }
  }
  DiscoverySet d;
  d.alpha = alpha;
  d.n_reject = n_star;
  d.achieved_mean_lfdr = mean_at_star;
  d.rejected.assign(n, 0);
  for (std::size_t i = 0; i < n_star; ++i) d.rejected[order[i]] = 1;
  d.lfdrs = std::move(lfdrs);
  return d;
}

DiscoverySet test_family(const ZMatrix& z, const FullModel& model, const ConfigFamily& family, double alpha,
                         int threads) {
  if (z.cols() != model.size()) throw ContractViolation("z-matrix and model have different tissue counts");
  if (z.tissues.names != model.tissues.names) throw ContractViolation("z-matrix and model tissues differ");
  ComponentCache cache(model);
  const auto mask = family_mask(cache, family);
  auto d = adaptive_reject(lfdr_rows(z.values, cache, mask, threads), alpha);
  d.family = family;
  return d;
}

Vector hamming_mass(const FullModel& model) {
  const int k = model.size();
  std::vector<CompensatedSum> s(static_cast<std::size_t>(k) + 1);
  for (const auto& e : model.prior) s[static_cast<std::size_t>(e.config.hamming())].add(e.prob);
  Vector out(k + 1);
  for (int m = 0; m <= k; ++m) out(m) = s[static_cast<std::size_t>(m)].value();
  return out;
}

Dendrogram tissue_cluster(const Matrix& sigma, const std::vector<std::string>& names) {
  const int k = static_cast<int>(sigma.rows());
  if (sigma.cols() != k || static_cast<int>(names.size()) != k)
    throw ContractViolation("tissue_cluster: dimension mismatch");
  if (k < 1) throw ContractViolation("tissue_cluster: empty matrix");
  for (int a = 0; a < k; ++a)
    if (!(sigma(a, a) > 0.0))
      throw DomainError("Sigma variance for tissue " + names[a] + " is not positive; correlation undefined");

  Matrix dist(k, k);
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) dist(a, b) = 1.0 - sigma(a, b) / std::sqrt(sigma(a, a) * sigma(b, b));

  std::vector<std::vector<int>> members;
  std::vector<int> active;
  std::vector<double> height;
  std::vector<std::string> text;
  for (int a = 0; a < k; ++a) {
    members.push_back({a});
    active.push_back(a);
    height.push_back(0.0);
    text.push_back(newick_label(names[a]));
  }
  Dendrogram out;
  while (active.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 1;
    for (std::size_t i = 0; i < active.size(); ++i)
      for (std::size_t j = i + 1; j < active.size(); ++j) {
        double d = std::numeric_limits<double>::infinity();
        for (int a : members[active[i]])
          for (int b : members[active[j]]) d = std::min(d, dist(a, b));
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    const int left = active[bi], right = active[bj];
    const int id = static_cast<int>(members.size());
    std::vector<int> merged = members[left];
    merged.insert(merged.end(), members[right].begin(), members[right].end());
    std::sort(merged.begin(), merged.end());
    members.push_back(merged);
    const double h = std::max({best, height[left], height[right]});
    height.push_back(h);
    text.push_back("(" + text[left] + ":" + newick_length(h - height[left]) + "," + text[right] + ":" +
                   newick_length(h - height[right]) + ")");
    out.merges.push_back({left, right, h});
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(bj));
    active[bi] = id;
    std::sort(active.begin(), active.end(),
              [&](int x, int y) { return members[x].front() < members[y].front(); });
  }
  out.newick = text[active.front()] + ";";
  return out;
}

}  // namespace hteqtl
