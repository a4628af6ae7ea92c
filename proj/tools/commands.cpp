#include "commands.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "hteqtl/assemble.hpp"
#include "hteqtl/errors.hpp"
#include "hteqtl/hash.hpp"
#include "hteqtl/infer.hpp"
#include "hteqtl/model_io.hpp"
#include "hteqtl/pairfit.hpp"
#include "hteqtl/parallel.hpp"
#include "hteqtl/simulate.hpp"
#include "hteqtl/zmatrix_io.hpp"
#include "hteqtl/zstats.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;

namespace hteqtl::cli {

namespace {

int g_log_level = 2;  // 0 error, 1 warn, 2 info, 3 debug
std::string g_output_dir;

void log(int level, const std::string& msg) {
  static const char* tags[] = {"error", "warn", "info", "debug"};
  if (level <= g_log_level) std::cerr << "ht-eqtl [" << tags[level] << "] " << msg << "\n";
}
void info(const std::string& msg) { log(2, msg); }
void warn(const std::string& msg) { log(1, msg); }

fs::path out_path(const std::string& p) {
  fs::path path(p);
  if (!g_output_dir.empty() && path.is_relative()) path = fs::path(g_output_dir) / path;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  return path;
}

ZFormat parse_format(const std::string& s) {
  if (s == "tsv") return ZFormat::Tsv;
  if (s == "binary") return ZFormat::Binary;
  throw InputError("unknown z format '" + s + "' (tsv or binary)");
}

std::string short_real(double x) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

void record_params(Manifest& m, const CLI::App& sub) {
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_name();
    if (name == "--help" || name == "-h") continue;
    std::string value = opt->results().empty() ? opt->get_default_str() : join(opt->results(), ",");
    if (opt->get_expected_min() == 0 && opt->count() == 0) value = "false";
    m.param(name, value);
  }
  m.param("global.log-level", g_log_level == 0   ? "error"
                              : g_log_level == 1 ? "warn"
                              : g_log_level == 2 ? "info"
                                                 : "debug");
  m.param("global.output-dir", g_output_dir);
  m.set_threads(default_threads());
}

Manifest start_manifest(const CLI::App& sub, std::uint64_t seed) {
  Manifest m(sub.get_name());
  record_params(m, sub);
  m.set_seed(seed);
  return m;
}

EmOptions em_options(int max_iters, double rel_tol, std::uint64_t subsample, std::uint64_t seed) {
  EmOptions em;
  em.max_iters = max_iters;
  em.rel_tol = rel_tol;
  if (subsample == 0)
    em.subsample.reset();
  else
    em.subsample = subsample;
  em.seed = seed;
  em.check();
  return em;
}

std::vector<std::pair<int, int>> parse_pair_filter(const std::string& spec, const TissueSet& tissues) {
  std::vector<std::pair<int, int>> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw InputError("--pairs entry '" + item + "' is not <tissue>:<tissue>");
    int a = tissues.index_of(item.substr(0, colon));
    int b = tissues.index_of(item.substr(colon + 1));
    if (a < 0 || b < 0) throw InputError("--pairs entry '" + item + "' names an unknown tissue");
    if (a == b) throw InputError("--pairs entry '" + item + "' repeats a tissue");
    if (a > b) std::swap(a, b);
    if (std::find(out.begin(), out.end(), std::pair{a, b}) == out.end()) out.emplace_back(a, b);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> parse_k_list(const std::string& spec) {
  std::vector<int> ks;
  std::stringstream ss(spec);
  std::string item;
  auto to_int = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw InputError("bad K list '" + spec + "'");
    }
  };
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      ks.push_back(to_int(item));
    } else {
      const int lo = to_int(item.substr(0, dash));
      const int hi = to_int(item.substr(dash + 1));
      if (hi < lo) throw InputError("bad K range '" + item + "'");
      for (int k = lo; k <= hi; ++k) ks.push_back(k);
    }
  }
  if (ks.empty()) throw InputError("empty K list");
  return ks;
}

// ---- compute-z

struct ComputeZ {
  std::vector<std::string> tissues;
  std::string pairs;
  std::string out;
  std::string format = "tsv";
  std::uint64_t seed = 0;

  void run(const CLI::App& sub) {
    auto m = start_manifest(sub, seed);
    const ZFormat fmt = parse_format(format);
    std::vector<TissueData> data;
    for (const auto& spec : tissues) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
        throw InputError("--tissue expects NAME=DIR, got '" + spec + "'");
      const std::string name = spec.substr(0, eq);
      const fs::path dir = spec.substr(eq + 1);
      data.push_back(load_tissue_dir(name, dir));
      for (const char* f : {"expression.tsv", "genotype.tsv", "covariates.tsv"}) m.input(dir / f);
      info("loaded tissue " + name + ": " + std::to_string(data.back().samples()) + " samples, " +
           std::to_string(data.back().covariate_count()) + " covariates");
    }
    const TissueSet ts = tissue_set_of(data);
    const auto pair_list = read_pairs(pairs);
    m.input(pairs);
    const ZMatrix z = compute_z_matrix(data, pair_list, ts);
    const fs::path path = out_path(out);
    write_zmatrix(z, path, fmt);
    m.output(path);
    m.output(tissues_sidecar(path));
    m.write(path);
    info("wrote " + std::to_string(z.rows()) + " x " + std::to_string(z.cols()) + " z-matrix to " + path.string());
  }
};

// ---- fit-pairs

struct FitPairs {
  std::string z;
  std::string out;
  std::string pairs;
  bool force = false;
  bool strict = false;
  int max_iters = 500;
  double rel_tol = 1e-6;
  std::uint64_t subsample = 1'000'000;
  std::uint64_t seed = 0;

  void run(const CLI::App& sub) {
    auto m = start_manifest(sub, seed);
    const EmOptions em = em_options(max_iters, rel_tol, subsample, seed);
    const ZMatrix zm = read_zmatrix(z);
    m.input(z);
    const int k = zm.cols();
    if (k < 2) throw InputError("pairwise fitting needs at least 2 tissues");

    std::vector<std::pair<int, int>> wanted;
    if (pairs.empty()) {
      for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j) wanted.emplace_back(i, j);
    } else {
      wanted = parse_pair_filter(pairs, zm.tissues);
    }

    const fs::path dir = out_path(out);
    fs::create_directories(dir);
    const fs::path tissues_file = dir / "tissues.json";
    const std::string tissues_text = serialize_tissues(zm.tissues);
    if (fs::exists(tissues_file)) {
      if (deserialize_tissues(read_text(tissues_file)) != zm.tissues)
        throw InputError(tissues_file.string() + ": tissue set differs from " + z);
    } else {
      write_text(tissues_file, tissues_text);
    }

    std::vector<std::pair<int, int>> todo;
    std::size_t skipped = 0;
    for (const auto& [i, j] : wanted) {
      const fs::path f = dir / pairwise_file_name(i, j);
      if (!force && fs::exists(f)) {
        const PairwiseModel prev = deserialize_pairwise(read_text(f));
        if (prev.tissue_i != i || prev.tissue_j != j) throw InputError(f.string() + ": tissue indices do not match");
        if (prev.converged) {
          ++skipped;
          continue;
        }
      }
      todo.emplace_back(i, j);
    }

    std::vector<PairwiseModel> fits(todo.size());
    const int workers = resolve_threads(0);
    EmOptions inner = em;
    inner.threads = (workers > 1 && todo.size() > 1) ? 1 : workers;
    parallel_for_blocks(
        todo.size(),
        [&](std::size_t b) {
          fits[b] = fit_pair(zm, todo[b].first, todo[b].second, inner);
          write_text(dir / pairwise_file_name(todo[b].first, todo[b].second), serialize_pairwise(fits[b]));
        },
        workers);

    std::vector<std::string> unconverged;
    for (const auto& f : fits)
      if (!f.converged) unconverged.push_back(zm.tissues.names[f.tissue_i] + ":" + zm.tissues.names[f.tissue_j]);

    m.output(dir);
    m.write(dir);
    info("fit " + std::to_string(fits.size()) + " pairs, skipped " + std::to_string(skipped) + " converged, " +
         std::to_string(unconverged.size()) + " not converged");
    if (!unconverged.empty()) {
      const std::string msg = "not converged within " + std::to_string(max_iters) + " iterations: " + join(unconverged, ", ");
      if (strict) throw DomainError(msg);
      warn(msg);
    }
  }
};

// ---- assemble

struct Assemble {
  std::string pairs_dir;
  std::string out;
  double threshold = kPriorThreshold;
  std::uint64_t draws = kDefaultMassDraws;
  std::uint64_t seed = kDefaultMassSeed;
  bool monte_carlo = false;

  void run(const CLI::App& sub) {
    auto m = start_manifest(sub, seed);
    const PairwiseDir pd = read_pairwise_dir(pairs_dir);
    m.input(pairs_dir);
    PriorOptions opts;
    opts.threshold = threshold;
    opts.draws = draws;
    opts.seed = seed;
    opts.exact_small = !monte_carlo;
    std::vector<std::string> warnings;
    const FullModel model = assemble_full(pd.pairs, pd.tissues, opts, &warnings);
    for (const auto& w : warnings) warn(w);
    const fs::path path = out_path(out);
    write_model(model, path);
    m.output(path);
    m.write(path);
    info("assembled K=" + std::to_string(model.size()) + " model with " + std::to_string(model.prior.size()) +
         " retained configurations");
  }
};

// ---- fit-direct

struct FitDirect {
  std::string z;
  std::string out;
  int max_iters = 500;
  double rel_tol = 1e-6;
  std::uint64_t subsample = 1'000'000;
  std::uint64_t seed = 0;

  void run(const CLI::App& sub) {
    auto m = start_manifest(sub, seed);
    const EmOptions em = em_options(max_iters, rel_tol, subsample, seed);
    const ZMatrix zm = read_zmatrix(z);
    m.input(z);
    if (zm.cols() > kMaxDirectTissues)
      throw DomainError("direct fit supports at most " + std::to_string(kMaxDirectTissues) + " tissues, got " +
                        std::to_string(zm.cols()));
    const auto rows = subsample_rows(zm.rows(), em);
    RowMatrix sub_z(static_cast<Eigen::Index>(rows.size()), zm.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) sub_z.row(static_cast<Eigen::Index>(r)) = zm.values.row(static_cast<Eigen::Index>(rows[r]));
    EmOptions inner = em;
    inner.subsample.reset();
    const MixtureFit fit = fit_em(sub_z, std::nullopt, inner);
    if (!fit.converged) warn("direct fit did not converge within " + std::to_string(max_iters) + " iterations");
    const FullModel model = direct_model(fit.params, zm.tissues);
    const fs::path path = out_path(out);
    write_model(model, path);
    m.output(path);
    m.write(path);
    info("direct K=" + std::to_string(zm.cols()) + " fit: " + std::to_string(fit.iters) + " iterations");
  }
};

// ---- test

struct Test {
  std::string model;
  std::string z;
  std::string family = "any";
  double alpha = 0.05;
  std::string out;
  std::size_t chunk = kDefaultChunkRows;
  bool no_verify = false;
  std::uint64_t seed = 0;

  void run(const CLI::App& sub) {
    auto m = start_manifest(sub, seed);
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("--alpha must lie in (0, 1)");
    if (chunk == 0) throw InputError("--chunk must be positive");
    const std::string model_hash = sha256_file(model);
    if (!no_verify) {
      const std::string recorded = recorded_output_hash(model);
      if (!recorded.empty() && recorded != model_hash)
        throw InputError(model + ": contents differ from the run recorded in " +
                         Manifest::path_for(model).string());
    }
    const FullModel fm = read_model(model);
    m.input(model);
    m.input(z);
    const ConfigFamily fam = ConfigFamily::parse(family, fm.tissues);

    ZReader reader(z);
    if (reader.cols() != fm.size())
      throw InputError(z + ": " + std::to_string(reader.cols()) + " columns, model has " + std::to_string(fm.size()) +
                       " tissues");
    if (reader.format() == ZFormat::Tsv && reader.header_names() != fm.tissues.names)
      throw InputError(z + ": tissue columns differ from the model's tissues");

    const ComponentCache cache(fm);
    const auto mask = family_mask(cache, fam);
    std::vector<double> lfdrs = lfdr_stream(reader, cache, mask, chunk);
    const std::size_t n = lfdrs.size();
    const DiscoverySet ds = adaptive_reject(std::move(lfdrs), alpha);

    const fs::path path = out_path(out);
    const fs::path tmp = path.string() + ".tmp";
    {
      std::ofstream os(tmp, std::ios::binary);
      if (!os) throw InputError("cannot write " + path.string());
      os << "# family=" << fam.label(&fm.tissues) << "\n";
      os << "# alpha=" << short_real(alpha) << "\n";
      os << "# n_reject=" << ds.n_reject << "\n";
      os << "# achieved_mean_lfdr=" << format_real(ds.achieved_mean_lfdr) << "\n";
      os << "# model_sha256=" << model_hash << "\n";
      os << "pair_id\tlfdr\trejected\n";
      ZReader again(z);
      std::vector<std::string> ids;
      RowMatrix block;
      std::size_t row = 0;
      std::string line;
      char buf[40];
      while (std::size_t got = again.next(chunk, ids, block)) {
        for (std::size_t r = 0; r < got; ++r, ++row) {
          if (row >= n) throw InputError(z + ": file changed between passes");
          std::snprintf(buf, sizeof buf, "%.17g", ds.lfdrs[row]);
          line.clear();
          line += ids[r];
          line += '\t';
          line += buf;
          line += ds.rejected[row] ? "\t1\n" : "\t0\n";
          os << line;
        }
      }
      if (row != n) throw InputError(z + ": file changed between passes");
      if (!os.flush()) throw InputError("cannot write " + path.string());
    }
    fs::rename(tmp, path);
    m.output(path);
    m.write(path);
    info(std::to_string(ds.n_reject) + " of " + std::to_string(n) + " pairs rejected for family " +
         fam.label(&fm.tissues) + " at alpha=" + short_real(alpha));
  }
};

// ---- simulate

struct Simulate {
  std::string model;
  int preset = 0;
  std::size_t n = 100000;
  std::uint64_t seed = 1;
  std::string out;
  std::string truth;
  std::string format = "tsv";

  void run(const CLI::App& sub) {
    auto m = start_manifest(sub, seed);
    const ZFormat fmt = parse_format(format);
    if (model.empty() == (preset == 0)) throw InputError("give exactly one of --model or --preset");
    FullModel fm;
    if (!model.empty()) {
      fm = read_model(model);
      m.input(model);
    } else {
      fm = simulation_preset(preset);
    }
    if (n == 0) throw InputError("--n must be positive");
    const SimData data = sample_data(fm, n, seed);
    const fs::path zpath = out_path(out);
    const fs::path tpath = truth.empty() ? fs::path(zpath.string() + ".truth.tsv") : out_path(truth);
    write_zmatrix(data.z, zpath, fmt);
    write_truth(tpath, data);
    m.output(zpath);
    m.output(tissues_sidecar(zpath));
    m.output(tpath);
    m.write(zpath);
    info("simulated " + std::to_string(n) + " pairs at K=" + std::to_string(fm.size()));
  }
};

// ---- roc

struct Roc {
  std::string z;
  std::string truth;
  std::string family = "any";
  std::string model;
  std::string tbt;
  std::string out;
  std::uint64_t seed = 0;

  void run(const CLI::App& sub) {
    auto m = start_manifest(sub, seed);
    if (model.empty() == tbt.empty()) throw InputError("give exactly one of --model or --tbt");
    const ZMatrix zm = read_zmatrix(z);
    m.input(z);
    const auto t = read_truth(truth);
    m.input(truth);
    if (t.size() != zm.rows())
      throw InputError(truth + ": " + std::to_string(t.size()) + " rows, z-matrix has " + std::to_string(zm.rows()));
    std::vector<Configuration> configs;
    configs.reserve(t.size());
    const bool by_row = ZReader(z).format() == ZFormat::Binary;
    for (std::size_t r = 0; r < t.size(); ++r) {
      if (!by_row && t[r].first != zm.pair_ids[r])
        throw InputError(truth + ": pair_id '" + t[r].first + "' at row " + std::to_string(r + 1) + " differs from '" +
                         zm.pair_ids[r] + "'");
      if (t[r].second.size() != zm.cols()) throw InputError(truth + ": configuration width differs from z columns");
      configs.push_back(t[r].second);
    }
    const ConfigFamily fam = ConfigFamily::parse(family, zm.tissues);
    std::vector<double> scores;
    std::string scorer;
    if (!model.empty()) {
      const FullModel fm = read_model(model);
      m.input(model);
      if (fm.tissues.names != zm.tissues.names) throw InputError(model + ": tissues differ from " + z);
      const ComponentCache cache(fm);
      scores = lfdr_rows(zm.values, cache, family_mask(cache, fam));
      scorer = "lfdr";
    } else {
      const TbtSpec spec = TbtSpec::parse(tbt, zm.tissues);
      scores = tbt_scores(zm.values, spec);
      scorer = spec.label();
    }
    const RocCurve curve = roc_curve(scores, configs, fam);

    const fs::path path = out_path(out);
    std::string csv = "threshold,fpr,tpr\n";
    for (const auto& p : curve.points) {
      csv += std::isfinite(p.threshold) ? format_real(p.threshold) : std::string(p.threshold < 0 ? "-inf" : "inf");
      csv += ',' + format_real(p.fpr) + ',' + format_real(p.tpr) + '\n';
    }
    write_text(path, csv);
    const fs::path auc_path = path.string() + ".auc.txt";
    write_text(auc_path, "family=" + fam.label(&zm.tissues) + "\tscore=" + scorer + "\tauc=" + format_real(curve.auc) +
                             "\tpositives=" + std::to_string(curve.positives) +
                             "\tnegatives=" + std::to_string(curve.negatives) + "\n");
    m.output(path);
    m.output(auc_path);
    m.write(path);
    info(scorer + " AUC " + format_real(curve.auc) + " for family " + fam.label(&zm.tissues));
  }
};

// ---- summarize

struct Summarize {
  std::string model;
  std::string out_prefix;
  std::uint64_t seed = 0;

  void run(const CLI::App& sub) {
    auto m = start_manifest(sub, seed);
    const FullModel fm = read_model(model);
    m.input(model);
    const Vector h = hamming_mass(fm);
    std::string csv = "class,mass\n";
    for (Eigen::Index c = 0; c < h.size(); ++c) csv += std::to_string(c) + ',' + format_real(h(c)) + '\n';
    const fs::path prefix = out_path(out_prefix);
    const fs::path hpath = prefix.string() + ".hamming.csv";
    const fs::path npath = prefix.string() + ".newick";
    write_text(hpath, csv);
    write_text(npath, tissue_cluster(fm.sigma, fm.tissues.names).newick + "\n");
    m.output(hpath);
    m.output(npath);
    m.write(hpath);
    info("wrote " + hpath.string() + " and " + npath.string());
  }
};

// ---- timing

struct Timing {
  std::string ks = "2-10";
  std::size_t n = 100000;
  std::uint64_t seed = 1;
  int direct_max_k = kMaxDirectTissues;
  int max_iters = 500;
  double rel_tol = 1e-6;
  std::uint64_t draws = 1'000'000;
  std::string out;

  void run(const CLI::App& sub) {
    auto m = start_manifest(sub, seed);
    TimingOptions opts;
    opts.n_pairs = n;
    opts.seed = seed;
    opts.direct_max_k = direct_max_k;
    opts.em = em_options(max_iters, rel_tol, 0, seed);
    opts.prior.draws = draws;
    opts.threads = 1;
    const auto rows = timing_sweep(parse_k_list(ks), opts);
    const fs::path path = out_path(out);
    write_text(path, timing_csv(rows));
    m.output(path);
    m.write(path);
    for (const auto& r : rows) info("K=" + std::to_string(r.k) + " " + r.arm + " " + format_real(r.seconds) + " s");
  }
};

// ---- preset

struct Preset {
  int k = 9;
  std::string out;
  std::uint64_t seed = 0;

  void run(const CLI::App& sub) {
    auto m = start_manifest(sub, seed);
    const fs::path path = out_path(out);
    write_model(simulation_preset(k), path);
    m.output(path);
    m.write(path);
  }
};

template <class T>
std::shared_ptr<T> attach(CLI::App* sub, std::function<void()>& action) {
  auto cmd = std::make_shared<T>();
  sub->callback([cmd, sub, &action] { action = [cmd, sub] { cmd->run(*sub); }; });
  return cmd;
}

}  // namespace

void apply_globals(const GlobalOptions& g) {
  if (g.log_level == "error")
    g_log_level = 0;
  else if (g.log_level == "warn")
    g_log_level = 1;
  else if (g.log_level == "info")
    g_log_level = 2;
  else if (g.log_level == "debug")
    g_log_level = 3;
  else
    throw InputError("unknown log level '" + g.log_level + "'");
  g_output_dir = g.output_dir;
  if (g.threads.empty()) return;
  if (g.threads == "auto") {
    set_default_threads(static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
    return;
  }
  int t = 0;
  try {
    std::size_t used = 0;
    t = std::stoi(g.threads, &used);
    if (used != g.threads.size()) t = 0;
  } catch (const std::exception&) {
    t = 0;
  }
  if (t < 1) throw InputError("--threads must be a positive integer or 'auto'");
  set_default_threads(t);
}

void register_commands(CLI::App& app, GlobalOptions& g, std::function<void()>& action) {
  app.add_option("--threads", g.threads, "Worker threads (integer or 'auto'; default HT_EQTL_THREADS)");
  app.add_option("--log-level", g.log_level, "error | warn | info | debug")->capture_default_str();
  app.add_option("--output-dir", g.output_dir, "Directory for relative output paths");
  app.require_subcommand(1);
  app.fallthrough();

  {
    auto* s = app.add_subcommand("compute-z", "Fisher-transformed z-statistics from per-tissue expression data");
    auto c = attach<ComputeZ>(s, action);
    s->add_option("--tissue", c->tissues, "NAME=DIR with expression.tsv, genotype.tsv, covariates.tsv")->required();
    s->add_option("--pairs", c->pairs, "gene_id<TAB>snp_id list")->required();
    s->add_option("--out", c->out, "Output z-matrix")->required();
    s->add_option("--format", c->format, "tsv | binary")->capture_default_str();
    s->add_option("--seed", c->seed)->capture_default_str();
  }
  {
    auto* s = app.add_subcommand("fit-pairs", "Fit the two-tissue model for every pair of tissues");
    auto c = attach<FitPairs>(s, action);
    s->add_option("--z", c->z, "Input z-matrix")->required();
    s->add_option("--out", c->out, "Output directory")->required();
    s->add_option("--pairs", c->pairs, "Comma-separated A:B tissue pairs (default all)");
    s->add_flag("--force", c->force, "Refit pairs that already have converged output");
    s->add_flag("--strict", c->strict, "Fail (exit 3) when a fit does not converge");
    s->add_option("--max-iters", c->max_iters)->capture_default_str();
    s->add_option("--rel-tol", c->rel_tol)->capture_default_str();
    s->add_option("--subsample", c->subsample, "Rows used per fit, 0 for all")->capture_default_str();
    s->add_option("--seed", c->seed)->capture_default_str();
  }
  {
    auto* s = app.add_subcommand("assemble", "Assemble the K-tissue model from pairwise fits");
    auto c = attach<Assemble>(s, action);
    s->add_option("--pairs-dir", c->pairs_dir, "fit-pairs output directory")->required();
    s->add_option("--out", c->out, "Output model JSON")->required();
    s->add_option("--threshold", c->threshold, "Prior truncation threshold")->capture_default_str();
    s->add_option("--draws", c->draws, "Monte Carlo draws for the prior")->capture_default_str();
    s->add_option("--seed", c->seed)->capture_default_str();
    s->add_flag("--mc", c->monte_carlo, "Use Monte Carlo even when K <= 4");
  }
  {
    auto* s = app.add_subcommand("fit-direct", "Fit the full K-tissue mixture directly (K <= 4)");
    auto c = attach<FitDirect>(s, action);
    s->add_option("--z", c->z, "Input z-matrix")->required();
    s->add_option("--out", c->out, "Output model JSON")->required();
    s->add_option("--max-iters", c->max_iters)->capture_default_str();
    s->add_option("--rel-tol", c->rel_tol)->capture_default_str();
    s->add_option("--subsample", c->subsample, "Rows used, 0 for all")->capture_default_str();
    s->add_option("--seed", c->seed)->capture_default_str();
  }
  {
    auto* s = app.add_subcommand("test", "lfdr and adaptive FDR thresholding for a configuration family");
    auto c = attach<Test>(s, action);
    s->add_option("--model", c->model, "Model JSON")->required();
    s->add_option("--z", c->z, "Input z-matrix")->required();
    s->add_option("--family", c->family,
                  "any | all | tissue-specific | in-tissue:<name> | single-tissue:<name> | custom:@file")
        ->capture_default_str();
    s->add_option("--alpha", c->alpha, "Nominal FDR level")->capture_default_str();
    s->add_option("--out", c->out, "Discoveries TSV")->required();
    s->add_option("--chunk", c->chunk, "Rows per streamed chunk")->capture_default_str();
    s->add_flag("--no-verify", c->no_verify, "Skip the model manifest hash check");
    s->add_option("--seed", c->seed)->capture_default_str();
  }
  {
    auto* s = app.add_subcommand("simulate", "Simulate z-statistics and true configurations");
    auto c = attach<Simulate>(s, action);
    s->add_option("--model", c->model, "Generating model JSON");
    s->add_option("--preset", c->preset, "Use the built-in simulation preset with this many tissues");
    s->add_option("--n", c->n, "Number of pairs")->capture_default_str();
    s->add_option("--seed", c->seed)->capture_default_str();
    s->add_option("--out", c->out, "Output z-matrix")->required();
    s->add_option("--truth", c->truth, "Truth TSV (default <out>.truth.tsv)");
    s->add_option("--format", c->format, "tsv | binary")->capture_default_str();
  }
  {
    auto* s = app.add_subcommand("roc", "ROC curve of lfdr or a tissue-by-tissue statistic against truth");
    auto c = attach<Roc>(s, action);
    s->add_option("--z", c->z, "Input z-matrix")->required();
    s->add_option("--truth", c->truth, "Truth TSV")->required();
    s->add_option("--family", c->family)->capture_default_str();
    s->add_option("--model", c->model, "Score by lfdr under this model");
    s->add_option("--tbt", c->tbt, "Score by minP | maxP | diffP | single:<name>");
    s->add_option("--out", c->out, "ROC CSV; the AUC line goes to <out>.auc.txt")->required();
    s->add_option("--seed", c->seed)->capture_default_str();
  }
  {
    auto* s = app.add_subcommand("summarize", "Hamming-class masses and tissue dendrogram of a model");
    auto c = attach<Summarize>(s, action);
    s->add_option("--model", c->model, "Model JSON")->required();
    s->add_option("--out-prefix", c->out_prefix, "Writes <prefix>.hamming.csv and <prefix>.newick")->required();
    s->add_option("--seed", c->seed)->capture_default_str();
  }
  {
    auto* s = app.add_subcommand("timing", "Fit-time sweep over K for the pairwise and direct fits");
    auto c = attach<Timing>(s, action);
    s->add_option("--k", c->ks, "K values, e.g. 2-10 or 2,4,8")->capture_default_str();
    s->add_option("--n", c->n, "Simulated pairs")->capture_default_str();
    s->add_option("--seed", c->seed)->capture_default_str();
    s->add_option("--direct-max-k", c->direct_max_k)->capture_default_str();
    s->add_option("--max-iters", c->max_iters)->capture_default_str();
    s->add_option("--rel-tol", c->rel_tol)->capture_default_str();
    s->add_option("--draws", c->draws, "Monte Carlo draws for the prior when K > 4")->capture_default_str();
    s->add_option("--out", c->out, "Timing CSV")->required();
  }
  {
    auto* s = app.add_subcommand("preset", "Write the built-in simulation model");
    auto c = attach<Preset>(s, action);
    s->add_option("--k", c->k, "Number of tissues")->capture_default_str();
    s->add_option("--out", c->out, "Output model JSON")->required();
    s->add_option("--seed", c->seed)->capture_default_str();
  }
}

}  // namespace hteqtl::cli
