#include "hteqtl/zstats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "hteqtl/errors.hpp"
#include "hteqtl/parallel.hpp"

namespace hteqtl {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().remove_suffix(1);
  return out;
}

double parse_double(std::string_view s, const std::filesystem::path& path, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw InputError(path.string() + ":" + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  return v;
}

}  // namespace

int FeatureTable::find(const std::string& id) const {
  for (std::size_t i = 0; i < feature_ids.size(); ++i)
    if (feature_ids[i] == id) return static_cast<int>(i);
  return -1;
}

FeatureTable read_feature_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  FeatureTable t;
  std::string line;
  if (!std::getline(in, line)) throw InputError(path.string() + ": empty file");
  auto head = split_tabs(line);
  for (std::size_t i = 1; i < head.size(); ++i) t.sample_ids.emplace_back(head[i]);
  const std::size_t n = t.sample_ids.size();
  std::vector<double> flat;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto f = split_tabs(line);
    if (f.size() != n + 1)
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(n + 1) +
                       " fields, got " + std::to_string(f.size()));
    t.feature_ids.emplace_back(f[0]);
    for (std::size_t i = 1; i <= n; ++i) flat.push_back(parse_double(f[i], path, line_no));
  }
  t.values = Eigen::Map<RowMatrix>(flat.data(), static_cast<Eigen::Index>(t.feature_ids.size()),
                                   static_cast<Eigen::Index>(n));
  return t;
}

namespace {

FeatureTable align_columns(FeatureTable t, const std::vector<std::string>& order, const std::filesystem::path& path) {
  if (t.sample_ids == order) return t;
  if (t.sample_ids.size() != order.size())
    throw InputError(path.string() + ": sample count differs from expression.tsv");
  std::unordered_map<std::string, Eigen::Index> pos;
  for (std::size_t i = 0; i < t.sample_ids.size(); ++i) pos[t.sample_ids[i]] = static_cast<Eigen::Index>(i);
  RowMatrix v(t.values.rows(), t.values.cols());
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto it = pos.find(order[i]);
    if (it == pos.end()) throw InputError(path.string() + ": sample '" + order[i] + "' missing");
    v.col(static_cast<Eigen::Index>(i)) = t.values.col(it->second);
  }
  t.values = std::move(v);
  t.sample_ids = order;
  return t;
}

}  // namespace

TissueData load_tissue_dir(const std::string& name, const std::filesystem::path& dir) {
  TissueData d;
  d.name = name;
  d.expression = read_feature_table(dir / "expression.tsv");
  d.genotype = align_columns(read_feature_table(dir / "genotype.tsv"), d.expression.sample_ids, dir / "genotype.tsv");
  d.covariates =
      align_columns(read_feature_table(dir / "covariates.tsv"), d.expression.sample_ids, dir / "covariates.tsv");
  return d;
}

std::vector<std::pair<std::string, std::string>> read_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    auto f = split_tabs(line);
    if (f.size() < 2) throw InputError(path.string() + ":" + std::to_string(line_no) + ": expected gene_id<TAB>snp_id");
    if (line_no == 1 && f[0] == "gene_id") continue;
    out.emplace_back(std::string(f[0]), std::string(f[1]));
  }
  return out;
}

RowMatrix residualize(const RowMatrix& y, const RowMatrix& c) {
  const Eigen::Index n = y.cols();
  const Eigen::Index nc = c.rows();
  if (c.cols() != n && nc > 0) throw ContractViolation("residualize: sample counts differ");
  if (n <= nc) throw InputError("residualize: need more samples (" + std::to_string(n) + ") than covariates (" +
                                std::to_string(nc) + ")");

  Matrix x(n, nc + 1);
  x.col(0).setOnes();
  for (Eigen::Index j = 0; j < nc; ++j) x.col(j + 1) = c.row(j).transpose();

  Eigen::HouseholderQR<Matrix> qr(x);
  const Matrix r = qr.matrixQR().topRows(nc + 1).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j <= nc; ++j) {
    const double scale = x.col(j).norm();
    if (!(std::abs(r(j, j)) > 1e-10 * std::max(scale, 1e-300))) {
      if (j == 0) throw InputError("residualize: intercept column is degenerate");
      throw InputError("residualize: covariate " + std::to_string(j - 1) + " is linearly dependent on earlier rows");
    }
  }
  const Matrix q = qr.householderQ() * Matrix::Identity(n, nc + 1);
  RowMatrix out = y - (y * q) * q.transpose();
  return out;
}

double corr_to_z(double r, double d) {
  if (!(std::abs(r) <= 1.0)) throw ContractViolation("corr_to_z: |r| > 1");
  if (!(d >= 1.0)) throw ContractViolation("corr_to_z: d < 1");
  return std::atanh(std::clamp(r, -1.0 + kCorrClamp, 1.0 - kCorrClamp)) * std::sqrt(d);
}

TissueSet tissue_set_of(const std::vector<TissueData>& data) {
  std::vector<std::string> names;
  std::vector<int> n, c;
  for (const auto& t : data) {
    names.push_back(t.name);
    n.push_back(t.samples());
    c.push_back(t.covariate_count());
  }
  return TissueSet::make(std::move(names), std::move(n), std::move(c));
}

ZMatrix compute_z_matrix(const std::vector<TissueData>& data,
                         const std::vector<std::pair<std::string, std::string>>& pairs, const TissueSet& tissues,
                         int threads) {
  const int k = static_cast<int>(data.size());
  if (tissues.size() != k) throw ContractViolation("compute_z_matrix: tissue set size differs from data");
  for (int t = 0; t < k; ++t) {
    if (tissues.n[t] != data[t].samples() || tissues.c[t] != data[t].covariate_count())
      throw ContractViolation("compute_z_matrix: tissue '" + tissues.names[t] + "' n/c disagree with data");
  }

  // Residualize only referenced rows; each tissue's matrices are then read-only.
  struct Prepared {
    std::unordered_map<std::string, Eigen::Index> gene_row, snp_row;
    RowMatrix expr, geno;
    Vector expr_norm, geno_norm;
  };
  std::vector<Prepared> prep(static_cast<std::size_t>(k));
  for (int t = 0; t < k; ++t) {
    const auto& td = data[t];
    auto& p = prep[t];
    std::vector<Eigen::Index> gsel, ssel;
    for (const auto& [gene, snp] : pairs) {
      if (!p.gene_row.count(gene)) {
        int i = td.expression.find(gene);
        if (i < 0) throw InputError("gene '" + gene + "' not found in tissue '" + td.name + "'");
        p.gene_row[gene] = static_cast<Eigen::Index>(gsel.size());
        gsel.push_back(i);
      }
      if (!p.snp_row.count(snp)) {
        int i = td.genotype.find(snp);
        if (i < 0) throw InputError("SNP '" + snp + "' not found in tissue '" + td.name + "'");
        p.snp_row[snp] = static_cast<Eigen::Index>(ssel.size());
        ssel.push_back(i);
      }
    }
    RowMatrix e = td.expression.values(gsel, Eigen::all);
    RowMatrix g = td.genotype.values(ssel, Eigen::all);
    p.expr = residualize(e, td.covariates.values);
    p.geno = residualize(g, td.covariates.values);
    p.expr_norm = p.expr.rowwise().norm();
    p.geno_norm = p.geno.rowwise().norm();
    // Rows whose residual is numerically zero relative to the raw row.
    for (Eigen::Index i = 0; i < e.rows(); ++i)
      if (p.expr_norm(i) <= 1e-10 * std::max(1.0, e.row(i).norm())) p.expr_norm(i) = 0.0;
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      if (p.geno_norm(i) <= 1e-10 * std::max(1.0, g.row(i).norm())) p.geno_norm(i) = 0.0;
  }

  ZMatrix z;
  z.tissues = tissues;
  z.values.resize(static_cast<Eigen::Index>(pairs.size()), k);
  z.pair_ids.resize(pairs.size());
  constexpr std::size_t kBlock = 4096;
  parallel_for_blocks(
      block_count(pairs.size(), kBlock),
      [&](std::size_t b) {
        const std::size_t end = std::min(pairs.size(), (b + 1) * kBlock);
        for (std::size_t row = b * kBlock; row < end; ++row) {
          const auto& [gene, snp] = pairs[row];
          z.pair_ids[row] = gene + ":" + snp;
          for (int t = 0; t < k; ++t) {
            const auto& p = prep[t];
            const Eigen::Index gi = p.gene_row.at(gene), si = p.snp_row.at(snp);
            const double ne = p.expr_norm(gi), ns = p.geno_norm(si);
            if (ne == 0.0 || ns == 0.0)
              throw InputError("zero-variance residual for pair " + gene + ":" + snp + " in tissue '" +
                               tissues.names[t] + "'");
            double r = p.expr.row(gi).dot(p.geno.row(si)) / (ne * ns);
            r = std::clamp(r, -1.0, 1.0);
            z.values(static_cast<Eigen::Index>(row), t) = corr_to_z(r, tissues.d[t]);
          }
        }
      },
      threads);
  return z;
}

}  // namespace hteqtl
