#include "hteqtl/model_io.hpp"

#include <cmath>
#include <cstdio>
#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "hteqtl/errors.hpp"
#include "json.hpp"

namespace hteqtl {

using nlohmann::json;

std::string format_real(double x) {
  if (!std::isfinite(x)) throw ContractViolation("cannot format non-finite real");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

std::string quote(const std::string& s) { return json(s).dump(); }

template <class Range, class F>
std::string array(const Range& r, F&& f) {
  std::string s = "[";
  bool first = true;
  for (const auto& v : r) {
    if (!first) s += ", ";
    s += f(v);
    first = false;
  }
  return s + "]";
}

std::string real_array(const std::vector<double>& v) { return array(v, format_real); }

std::string vector_json(const Vector& v) {
  return real_array(std::vector<double>(v.data(), v.data() + v.size()));
}

std::string matrix_json(const Matrix& m, const std::string& indent) {
  std::string s = "[";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    s += (r ? ",\n" + indent + " " : "");
    Vector row = m.row(r).transpose();
    s += vector_json(row);
  }
  return s + "]";
}

std::string tissues_json(const TissueSet& t, const std::string& indent) {
  auto ints = [](const std::vector<int>& v) { return array(v, [](int x) { return std::to_string(x); }); };
  std::string s = "{\n";
  s += indent + "  \"names\": " + array(t.names, quote) + ",\n";
  s += indent + "  \"n\": " + ints(t.n) + ",\n";
  s += indent + "  \"c\": " + ints(t.c) + ",\n";
  s += indent + "  \"d\": " + real_array(t.d) + "\n";
  return s + indent + "}";
}

Matrix matrix_from(const json& j, const char* field) {
  if (!j.is_array()) throw InputError(std::string("field '") + field + "' is not an array of arrays");
  const auto rows = j.size();
  const auto cols = rows ? j.at(0).size() : 0;
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (j[r].size() != cols) throw InputError(std::string("ragged matrix in '") + field + "'");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

Vector vector_from(const json& j) {
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

TissueSet tissues_from(const json& j) {
  TissueSet t;
  t.names = j.at("names").get<std::vector<std::string>>();
  t.n = j.at("n").get<std::vector<int>>();
  t.c = j.at("c").get<std::vector<int>>();
  t.d = j.at("d").get<std::vector<double>>();
  return t;
}

template <class F>
auto parse_or_throw(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw InputError("malformed " + what + ": " + e.what());
  }
}

}  // namespace

std::string serialize_model(const FullModel& m) {
  std::ostringstream os;
  os << "{\n";
  os << "  \"version\": " << kModelFormatVersion << ",\n";
  os << "  \"tissues\": " << tissues_json(m.tissues, "  ") << ",\n";
  os << "  \"delta\": " << matrix_json(m.delta, "           ") << ",\n";
  os << "  \"sigma\": " << matrix_json(m.sigma, "           ") << ",\n";
  os << "  \"omega\": " << matrix_json(m.omega, "           ") << ",\n";
  os << "  \"tau\": " << vector_json(m.tau) << ",\n";
  os << "  \"mu\": " << vector_json(m.mu) << ",\n";
  os << "  \"prior\": [";
  for (std::size_t i = 0; i < m.prior.size(); ++i) {
    os << (i ? ",\n    " : "\n    ") << "{\"bits\": \"" << m.prior[i].config.to_string()
       << "\", \"prob\": " << format_real(m.prior[i].prob) << "}";
  }
  os << "\n  ]\n}\n";
  return os.str();
}

FullModel deserialize_model(const std::string& text) {
  FullModel m = parse_or_throw("model file", [&] {
    json j = json::parse(text);
    int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) throw InputError("unsupported model version " + std::to_string(version));
    FullModel out;
    out.tissues = tissues_from(j.at("tissues"));
    out.delta = matrix_from(j.at("delta"), "delta");
    out.sigma = matrix_from(j.at("sigma"), "sigma");
    out.omega = matrix_from(j.at("omega"), "omega");
    out.tau = vector_from(j.at("tau"));
    out.mu = vector_from(j.at("mu"));
    for (const auto& e : j.at("prior"))
      out.prior.push_back({Configuration::from_string(e.at("bits").get<std::string>()), e.at("prob").get<double>()});
    return out;
  });
  auto v = validate(m);
  if (!v.empty()) throw InputError("model validation failed: " + describe(v));
  return m;
}

void write_model(const FullModel& model, const std::filesystem::path& path) {
  write_text(path, serialize_model(model));
}

FullModel read_model(const std::filesystem::path& path) {
  try {
    return deserialize_model(read_text(path));
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

std::string serialize_pairwise(const PairwiseModel& m) {
  std::ostringstream os;
  os << "{\n";
  os << "  \"i\": " << m.tissue_i << ",\n";
  os << "  \"j\": " << m.tissue_j << ",\n";
  os << "  \"p\": " << real_array({m.p.begin(), m.p.end()}) << ",\n";
  os << "  \"delta\": " << format_real(m.delta) << ",\n";
  os << "  \"sigma\": " << matrix_json(m.sigma, "           ") << ",\n";
  os << "  \"loglik\": " << format_real(m.loglik) << ",\n";
  os << "  \"iters\": " << m.iters << ",\n";
  os << "  \"converged\": " << (m.converged ? "true" : "false") << "\n";
  os << "}\n";
  return os.str();
}

PairwiseModel deserialize_pairwise(const std::string& text) {
  PairwiseModel m = parse_or_throw("pairwise file", [&] {
    json j = json::parse(text);
    PairwiseModel out;
    out.tissue_i = j.at("i").get<int>();
    out.tissue_j = j.at("j").get<int>();
    auto p = j.at("p").get<std::vector<double>>();
    if (p.size() != 4) throw InputError("pairwise p must have 4 entries");
    std::copy(p.begin(), p.end(), out.p.begin());
    out.delta = j.at("delta").get<double>();
    Matrix s = matrix_from(j.at("sigma"), "sigma");
    if (s.rows() != 2 || s.cols() != 2) throw InputError("pairwise sigma must be 2x2");
    out.sigma = s;
    out.loglik = j.at("loglik").get<double>();
    out.iters = j.at("iters").get<int>();
    out.converged = j.at("converged").get<bool>();
    return out;
  });
  if (auto v = m.violations(); !v.empty()) {
    std::string msg = "pairwise model invalid:";
    for (auto& s : v) msg += " " + s + ";";
    throw InputError(msg);
  }
  return m;
}

std::string serialize_tissues(const TissueSet& t) { return tissues_json(t, "") + "\n"; }

TissueSet deserialize_tissues(const std::string& text) {
  TissueSet t = parse_or_throw("tissue file", [&] { return tissues_from(json::parse(text)); });
  if (auto v = t.violations(); !v.empty()) throw InputError("invalid tissue set: " + v.front());
  return t;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out << text;
    out.flush();
    if (!out) throw InputError("write failed for " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw InputError("cannot rename into " + path.string() + ": " + ec.message());
}

std::string pairwise_file_name(int i, int j) {
  return "pair_" + std::to_string(i) + "_" + std::to_string(j) + ".json";
}

void write_pairwise_dir(const std::filesystem::path& dir, const TissueSet& tissues,
                        const std::vector<PairwiseModel>& pairs) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InputError("cannot create directory " + dir.string() + ": " + ec.message());
  write_text(dir / "tissues.json", serialize_tissues(tissues));
  for (const auto& p : pairs) write_text(dir / pairwise_file_name(p.tissue_i, p.tissue_j), serialize_pairwise(p));
}

PairwiseDir read_pairwise_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw InputError("not a directory: " + dir.string());
  PairwiseDir out;
  out.tissues = deserialize_tissues(read_text(dir / "tissues.json"));
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind("pair_", 0) == 0 && e.path().extension() == ".json")
      files.push_back(e.path());
  }
  std::set<std::pair<int, int>> seen;
  for (const auto& f : files) {
    PairwiseModel m;
    try {
      m = deserialize_pairwise(read_text(f));
    } catch (const InputError& e) {
      throw InputError(f.string() + ": " + e.what());
    }
    if (m.tissue_i >= out.tissues.size() || m.tissue_j >= out.tissues.size())
      throw InputError(f.string() + ": tissue index out of range");
    if (!seen.insert({m.tissue_i, m.tissue_j}).second)
      throw InputError("duplicate pairwise fit for (" + std::to_string(m.tissue_i) + "," +
                       std::to_string(m.tissue_j) + ")");
    out.pairs.push_back(m);
  }
  std::sort(out.pairs.begin(), out.pairs.end(), [](const PairwiseModel& a, const PairwiseModel& b) {
    return std::pair(a.tissue_i, a.tissue_j) < std::pair(b.tissue_i, b.tissue_j);
  });
  return out;
}

}  // namespace hteqtl
