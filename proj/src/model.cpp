#include "hteqtl/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "hteqtl/errors.hpp"

namespace hteqtl {

TissueSet TissueSet::make(std::vector<std::string> names, std::vector<int> n, std::vector<int> c) {
  TissueSet t;
  t.names = std::move(names);
  t.n = std::move(n);
  t.c = std::move(c);
  if (t.n.size() == t.c.size()) {
    for (std::size_t k = 0; k < t.n.size(); ++k) t.d.push_back(double(t.n[k] - t.c[k] - 3));
  }
  if (auto v = t.violations(); !v.empty()) {
    std::string msg = "invalid tissue set:";
    for (auto& s : v) msg += " " + s + ";";
    throw InputError(msg);
  }
  return t;
}

int TissueSet::index_of(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

std::vector<std::string> TissueSet::violations() const {
  std::vector<std::string> out;
  const std::size_t k = names.size();
  if (k < 1) out.push_back("no tissues");
  if (n.size() != k || c.size() != k || d.size() != k) {
    out.push_back("names/n/c/d lengths differ");
    return out;
  }
  std::set<std::string> seen(names.begin(), names.end());
  if (seen.size() != k) out.push_back("tissue names not unique");
  for (std::size_t i = 0; i < k; ++i) {
    if (names[i].empty()) out.push_back("empty tissue name");
    if (n[i] <= 0) out.push_back("n[" + names[i] + "] not positive");
    if (c[i] < 0) out.push_back("c[" + names[i] + "] negative");
    if (std::abs(d[i] - double(n[i] - c[i] - 3)) > 1e-9) out.push_back("d[" + names[i] + "] != n - c - 3");
    if (!(d[i] >= 1.0)) out.push_back("d[" + names[i] + "] < 1");
  }
  return out;
}

TissueSet TissueSet::subset(const std::vector<int>& idx) const {
  TissueSet t;
  for (int i : idx) {
    t.names.push_back(names.at(i));
    t.n.push_back(n.at(i));
    t.c.push_back(c.at(i));
    t.d.push_back(d.at(i));
  }
  return t;
}

void ZMatrix::check() const {
  if (pair_ids.size() != rows()) throw ContractViolation("ZMatrix: pair_ids and rows differ");
  if (tissues.size() != cols()) throw ContractViolation("ZMatrix: tissue count and columns differ");
  if (!values.allFinite()) throw ContractViolation("ZMatrix: non-finite entries");
}

std::vector<std::string> PairwiseModel::violations() const {
  std::vector<std::string> out;
  if (!(tissue_i >= 0 && tissue_i < tissue_j)) out.push_back("tissue indices not ordered");
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) out.push_back("p component negative");
    s += v;
  }
  if (std::abs(s - 1.0) > kSimplexTol) out.push_back("p does not sum to 1");
  if (!(std::abs(delta) < 1.0)) out.push_back("|delta| >= 1");
  if (std::abs(sigma(0, 1) - sigma(1, 0)) > 1e-12) out.push_back("sigma not symmetric");
  if (!(sigma(0, 0) >= 0 && sigma(1, 1) >= 0) || sigma(0, 1) * sigma(0, 1) > sigma(0, 0) * sigma(1, 1) * (1 + 1e-12))
    out.push_back("sigma not PSD");
  return out;
}

double FullModel::prior_of(const Configuration& g) const {
  auto it = std::lower_bound(prior.begin(), prior.end(), g,
                             [](const PriorEntry& e, const Configuration& c) { return e.config < c; });
  return (it != prior.end() && it->config == g) ? it->prob : 0.0;
}

namespace {

void check_square(const Matrix& m, int k, const char* name, std::vector<Violation>& out) {
  if (m.rows() != k || m.cols() != k) {
    out.push_back({name, "dimension", "expected " + std::to_string(k) + "x" + std::to_string(k)});
  }
}

double min_eigen(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void check_correlation(const Matrix& m, const char* name, std::vector<Violation>& out) {
  if (!m.allFinite()) {
    out.push_back({name, "finite", "non-finite entries"});
    return;
  }
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) out.push_back({name, std::string(name) + " symmetric", ""});
  if ((m.diagonal().array() - 1.0).abs().maxCoeff() > 1e-12)
    out.push_back({name, std::string(name) + " unit diagonal", "diagonal entries must equal 1"});
  if (!(min_eigen(m) > 0.0)) out.push_back({name, std::string(name) + " PD", "smallest eigenvalue not positive"});
}

}  // namespace

std::vector<Violation> validate(const FullModel& model) {
  std::vector<Violation> out;
  for (auto& v : model.tissues.violations()) out.push_back({"tissues", "tissue set", v});
  const int k = model.tissues.size();
  if (k < 1) return out;

  check_square(model.delta, k, "delta", out);
  check_square(model.sigma, k, "sigma", out);
  check_square(model.omega, k, "omega", out);
  if (model.tau.size() != k) out.push_back({"tau", "dimension", "expected length " + std::to_string(k)});
  if (model.mu.size() != k) out.push_back({"mu", "dimension", "expected length " + std::to_string(k)});
  if (!out.empty()) return out;

  check_correlation(model.delta, "Delta", out);
  check_correlation(model.omega, "Omega", out);

  const Matrix& s = model.sigma;
  if (!s.allFinite()) {
    out.push_back({"sigma", "Sigma PSD", "non-finite entries"});
  } else {
    bool psd = (s - s.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, s.cwiseAbs().maxCoeff());
    for (int a = 0; a < k && psd; ++a) {
      if (s(a, a) < 0) psd = false;
      for (int b = a + 1; b < k && psd; ++b)
        if (s(a, b) * s(a, b) > s(a, a) * s(b, b) * (1 + 1e-12)) psd = false;
    }
    if (psd && min_eigen(s) < -1e-10 * std::max(1.0, s.diagonal().maxCoeff())) psd = false;
    if (!psd) out.push_back({"sigma", "Sigma PSD", "Sigma must be symmetric positive semidefinite"});
  }

  if (!model.tau.allFinite()) out.push_back({"tau", "finite", "non-finite thresholds"});
  if (model.mu.cwiseAbs().maxCoeff() != 0.0) out.push_back({"mu", "mu zero", "mu must be identically zero"});

  if (model.prior.empty()) {
    out.push_back({"prior", "prior non-empty", "no retained configurations"});
    return out;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < model.prior.size(); ++i) {
    const auto& e = model.prior[i];
    if (e.config.size() != k) {
      out.push_back({"prior", "configuration length", e.config.to_string()});
      continue;
    }
    if (!(e.prob >= 0.0 && e.prob <= 1.0)) out.push_back({"prior", "probability range", e.config.to_string()});
    if (i > 0 && !(model.prior[i - 1].config < e.config))
      out.push_back({"prior", "canonical order", "configurations must be strictly increasing"});
    total += e.prob;
  }
  if (std::abs(total - 1.0) > kSimplexTol)
    out.push_back({"prior", "prior normalization", "probabilities sum to " + std::to_string(total)});
  return out;
}

std::string describe(const std::vector<Violation>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << "; ";
    os << v[i].field << ": " << v[i].rule;
    if (!v[i].detail.empty()) os << " (" << v[i].detail << ")";
  }
  return os.str();
}

void require_valid(const FullModel& model) {
  auto v = validate(model);
  if (!v.empty()) throw DomainError("invalid model: " + describe(v));
}

// ---- ConfigFamily ----

ConfigFamily ConfigFamily::in_tissue(int k) {
  ConfigFamily f(Kind::InTissue);
  f.tissue_ = k;
  return f;
}

ConfigFamily ConfigFamily::single_tissue(int k) {
  ConfigFamily f(Kind::SingleTissue);
  f.tissue_ = k;
  return f;
}

ConfigFamily ConfigFamily::custom(std::vector<Configuration> set) {
  if (set.empty()) throw InputError("custom family is empty");
  std::sort(set.begin(), set.end());
  set.erase(std::unique(set.begin(), set.end()), set.end());
  const int k = set.front().size();
  for (auto& g : set)
    if (g.size() != k) throw InputError("custom family mixes configuration lengths");
  ConfigFamily f(Kind::Custom);
  f.custom_ = std::move(set);
  return f;
}

ConfigFamily ConfigFamily::parse(const std::string& spec, const TissueSet& tissues) {
  auto tissue_arg = [&](const std::string& prefix) {
    std::string name = spec.substr(prefix.size());
    int k = tissues.index_of(name);
    if (k < 0) throw InputError("unknown tissue '" + name + "' in family '" + spec + "'");
    return k;
  };
  if (spec == "any") return any_eqtl();
  if (spec == "all") return all_tissues();
  if (spec == "tissue-specific") return tissue_specific();
  if (spec.rfind("in-tissue:", 0) == 0) return in_tissue(tissue_arg("in-tissue:"));
  if (spec.rfind("single-tissue:", 0) == 0) return single_tissue(tissue_arg("single-tissue:"));
  if (spec.rfind("custom:@", 0) == 0) {
    std::string path = spec.substr(8);
    std::ifstream in(path);
    if (!in) throw InputError("cannot open custom family file " + path);
    std::vector<Configuration> set;
    std::string line;
    while (std::getline(in, line)) {
      auto b = line.find_first_not_of(" \t\r");
      if (b == std::string::npos || line[b] == '#') continue;
      auto e = line.find_last_not_of(" \t\r");
      set.push_back(Configuration::from_string(line.substr(b, e - b + 1)));
    }
    auto f = custom(std::move(set));
    f.check(tissues.size());
    return f;
  }
  throw InputError("unknown family '" + spec + "'");
}

bool ConfigFamily::contains(const Configuration& g) const {
  switch (kind_) {
    case Kind::AnyEqtl: return !g.is_zero();
    case Kind::AllTissues: return g.is_ones();
    case Kind::TissueSpecific: return !g.is_zero() && !g.is_ones();
    case Kind::InTissue: return g.test(tissue_);
    case Kind::SingleTissue: return g.test(tissue_) && g.hamming() == 1;
    case Kind::Custom: return std::binary_search(custom_.begin(), custom_.end(), g);
  }
  return false;
}

void ConfigFamily::check(int k) const {
  if ((kind_ == Kind::InTissue || kind_ == Kind::SingleTissue) && (tissue_ < 0 || tissue_ >= k))
    throw ContractViolation("family tissue index out of range");
  if (kind_ == Kind::Custom) {
    if (custom_.front().size() != k) throw InputError("custom family configuration length differs from K");
    if (k < 64 && custom_.size() >= (std::size_t{1} << std::min(k, 62)))
      throw InputError("custom family must be a strict subset of {0,1}^K");
  }
}

ConfigFamily ConfigFamily::complement(int k) const {
  std::vector<Configuration> set;
  for (auto& g : Configuration::enumerate(k))
    if (!contains(g)) set.push_back(g);
  return custom(std::move(set));
}

std::string ConfigFamily::label(const TissueSet* tissues) const {
  auto name = [&] {
    if (tissues && tissue_ >= 0 && tissue_ < tissues->size()) return tissues->names[tissue_];
    return std::to_string(tissue_);
  };
  switch (kind_) {
    case Kind::AnyEqtl: return "any";
    case Kind::AllTissues: return "all";
    case Kind::TissueSpecific: return "tissue-specific";
    case Kind::InTissue: return "in-tissue:" + name();
    case Kind::SingleTissue: return "single-tissue:" + name();
    case Kind::Custom: {
      std::string s = "custom:";
      for (std::size_t i = 0; i < custom_.size(); ++i) s += (i ? "," : "") + custom_[i].to_string();
      return s;
    }
  }
  return "?";
}

}  // namespace hteqtl
