#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "hteqtl/model_io.hpp"
#include "hteqtl/parallel.hpp"
#include "hteqtl/simulate.hpp"
#include "hteqtl/zmatrix_io.hpp"

namespace fs = std::filesystem;
using namespace hteqtl;

namespace {

const fs::path kToy = fs::path(HTEQTL_TEST_DATA) / "toy";

struct Sandbox {
  fs::path dir;
  explicit Sandbox(const std::string& name) {
    dir = fs::temp_directory_path() / ("hteqtl_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }
  std::string operator()(const std::string& f) const { return (dir / f).string(); }
};

struct Run {
  int code;
  std::string err;
};

Run cli(const std::string& args, const fs::path& scratch) {
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd = std::string(HTEQTL_CLI) + " " + args + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Run r{WIFEXITED(status) ? WEXITSTATUS(status) : -1, {}};
  std::ifstream in(err);
  std::stringstream ss;
  ss << in.rdbuf();
  r.err = ss.str();
  return r;
}

std::string slurp(const fs::path& p) { return read_text(p); }

std::string toy_tissues() {
  return "--tissue liver=" + (kToy / "liver").string() + " --tissue lung=" + (kToy / "lung").string() +
         " --pairs " + (kToy / "pairs.tsv").string();
}

}  // namespace

TEST_CASE("compute-z reproduces the golden toy z-matrix") {
  Sandbox s("golden");
  auto r = cli("compute-z " + toy_tissues() + " --out " + s("z.tsv"), s.dir);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(slurp(s("z.tsv")) == slurp(kToy / "golden_z.tsv"));
  CHECK(slurp(s("z.tsv.tissues.json")) == slurp(kToy / "golden_z.tsv.tissues.json"));

  // Partial correlation given one covariate, atanh(r) * sqrt(n - 1 - 3), numpy.
  const ZMatrix z = read_zmatrix(s("z.tsv"));
  const double expect[5][2] = {{2.6380488780083393, 1.8261723516826054},
                               {-0.33361846316534965, -0.74714879711051385},
                               {0.24876161408858502, 1.3040975971203213},
                               {1.3776183966305149, 1.2648870331341122},
                               {0.56155214729879621, -0.071578768379738686}};
  REQUIRE(z.rows() == 5);
  for (int r2 = 0; r2 < 5; ++r2)
    for (int c = 0; c < 2; ++c) CHECK(z.values(r2, c) == doctest::Approx(expect[r2][c]).epsilon(1e-12));
  CHECK(z.tissues.n == std::vector<int>{14, 11});
  CHECK(z.tissues.c == std::vector<int>{1, 1});
}

TEST_CASE("compute-z binary output round-trips to the TSV values") {
  Sandbox s("binary");
  REQUIRE(cli("compute-z " + toy_tissues() + " --out " + s("z.tsv"), s.dir).code == 0);
  REQUIRE(cli("compute-z " + toy_tissues() + " --format binary --out " + s("z.bin"), s.dir).code == 0);
  const ZMatrix a = read_zmatrix(s("z.tsv"));
  const ZMatrix b = read_zmatrix(s("z.bin"));
  CHECK(ZReader(s("z.bin")).format() == ZFormat::Binary);
  CHECK(a.values == b.values);
  CHECK(a.tissues == b.tissues);
}

TEST_CASE("compute-z with a missing covariates file exits 2 naming the path") {
  Sandbox s("missing");
  fs::copy(kToy / "lung", s.dir / "lung");
  fs::remove(s.dir / "lung" / "covariates.tsv");
  auto r = cli("compute-z --tissue liver=" + (kToy / "liver").string() + " --tissue lung=" + s("lung") +
                   " --pairs " + (kToy / "pairs.tsv").string() + " --out " + s("z.tsv"),
               s.dir);
  CHECK(r.code == 2);
  CHECK(r.err.find((s.dir / "lung" / "covariates.tsv").string()) != std::string::npos);
  CHECK_FALSE(fs::exists(s("z.tsv")));
}

TEST_CASE("K=3 walkthrough controls the FDR and fit-pairs is resumable") {
  Sandbox s("walk");
  REQUIRE(cli("preset --k 3 --out " + s("truth.json"), s.dir).code == 0);
  REQUIRE(cli("simulate --model " + s("truth.json") + " --n 100000 --seed 11 --out " + s("z.tsv"), s.dir).code == 0);
  auto r = cli("fit-pairs --z " + s("z.tsv") + " --out " + s("pairs"), s.dir);
  REQUIRE_MESSAGE(r.code == 0, r.err);

  std::vector<std::string> pair_files;
  for (const auto& e : fs::directory_iterator(s("pairs")))
    if (e.path().filename().string().rfind("pair_", 0) == 0) pair_files.push_back(e.path().filename().string());
  std::sort(pair_files.begin(), pair_files.end());
  CHECK(pair_files == std::vector<std::string>{"pair_0_1.json", "pair_0_2.json", "pair_1_2.json"});

  std::map<std::string, std::string> before;
  std::map<std::string, fs::file_time_type> stamps;
  for (const auto& e : fs::directory_iterator(s("pairs"))) {
    before[e.path().filename().string()] = slurp(e.path());
    stamps[e.path().filename().string()] = fs::last_write_time(e.path());
  }
  r = cli("fit-pairs --z " + s("z.tsv") + " --out " + s("pairs"), s.dir);
  REQUIRE(r.code == 0);
  CHECK(r.err.find("fit 0 pairs, skipped 3") != std::string::npos);
  std::size_t seen = 0;
  for (const auto& e : fs::directory_iterator(s("pairs"))) {
    ++seen;
    CHECK(before[e.path().filename().string()] == slurp(e.path()));
    CHECK(stamps[e.path().filename().string()] == fs::last_write_time(e.path()));
  }
  CHECK(seen == before.size());

  r = cli("fit-pairs --z " + s("z.tsv") + " --out " + s("pairs") + " --pairs T1:T3 --force", s.dir);
  REQUIRE(r.code == 0);
  CHECK(r.err.find("fit 1 pairs") != std::string::npos);
  CHECK(slurp(s("pairs/pair_0_2.json")) == before["pair_0_2.json"]);

  REQUIRE(cli("assemble --pairs-dir " + s("pairs") + " --out " + s("model.json"), s.dir).code == 0);
  REQUIRE(cli("test --model " + s("model.json") + " --z " + s("z.tsv") + " --family any --alpha 0.05 --out " +
                  s("disc.tsv"),
              s.dir)
              .code == 0);

  const auto truth = read_truth(s("z.tsv.truth.tsv"));
  std::ifstream in(s("disc.tsv"));
  std::string line;
  std::size_t header_n = 0, rejected = 0, false_rej = 0, row = 0;
  bool saw_hash = false;
  while (std::getline(in, line)) {
    if (line.rfind("# n_reject=", 0) == 0) header_n = std::stoul(line.substr(11));
    if (line.rfind("# model_sha256=", 0) == 0) saw_hash = line.size() == 15 + 64;
    if (line[0] == '#' || line.rfind("pair_id", 0) == 0) continue;
    const auto t2 = line.rfind('\t');
    const auto t1 = line.find('\t');
    REQUIRE(row < truth.size());
    CHECK(line.substr(0, t1) == truth[row].first);
    if (line.substr(t2 + 1) == "1") {
      ++rejected;
      if (truth[row].second.is_zero()) ++false_rej;
    }
    ++row;
  }
  CHECK(row == 100000);
  CHECK(saw_hash);
  REQUIRE(rejected == header_n);
  REQUIRE(rejected > 0);
  CHECK(static_cast<double>(false_rej) / static_cast<double>(rejected) <= 0.07);
}

TEST_CASE("fit-pairs output does not depend on the thread count") {
  Sandbox s("threads");
  REQUIRE(cli("simulate --preset 4 --n 20000 --seed 3 --out " + s("z.tsv"), s.dir).code == 0);
  REQUIRE(cli("--threads 1 fit-pairs --z " + s("z.tsv") + " --out " + s("p1"), s.dir).code == 0);
  REQUIRE(cli("--threads 8 fit-pairs --z " + s("z.tsv") + " --out " + s("p8"), s.dir).code == 0);
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(s("p1"))) {
    ++n;
    CHECK(slurp(e.path()) == slurp(s.dir / "p8" / e.path().filename()));
  }
  CHECK(n == 7);
}

TEST_CASE("fit-pairs --strict fails on non-converged fits, otherwise warns") {
  Sandbox s("strict");
  REQUIRE(cli("simulate --preset 2 --n 5000 --seed 3 --out " + s("z.tsv"), s.dir).code == 0);
  auto r = cli("fit-pairs --z " + s("z.tsv") + " --out " + s("p") + " --max-iters 1", s.dir);
  CHECK(r.code == 0);
  CHECK(r.err.find("not converged") != std::string::npos);
  r = cli("fit-pairs --z " + s("z.tsv") + " --out " + s("q") + " --max-iters 1 --strict", s.dir);
  CHECK(r.code == 3);
}

TEST_CASE("test resolves in-tissue families by name on a 20-tissue model") {
  Sandbox s("k20");
  FullModel m = simulation_preset(20);
  m.tissues.names[6] = "Liver";
  write_model(m, s("model.json"));
  REQUIRE(cli("simulate --model " + s("model.json") + " --n 3000 --seed 2 --format binary --out " + s("z.bin"), s.dir)
              .code == 0);
  auto r = cli("test --model " + s("model.json") + " --z " + s("z.bin") + " --family in-tissue:Liver --out " +
                   s("d.tsv"),
               s.dir);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const std::string d = slurp(s("d.tsv"));
  CHECK(d.find("# family=in-tissue:Liver\n") != std::string::npos);
  CHECK(d.find("\n0\t") != std::string::npos);  // binary rows are identified by row number

  r = cli("test --model " + s("model.json") + " --z " + s("z.bin") + " --family in-tissue:Kidney --out " + s("e.tsv"),
          s.dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("Kidney") != std::string::npos);
}

TEST_CASE("test verifies the model against its manifest") {
  Sandbox s("chain");
  REQUIRE(cli("preset --k 2 --out " + s("m.json"), s.dir).code == 0);
  REQUIRE(cli("simulate --model " + s("m.json") + " --n 2000 --out " + s("z.tsv"), s.dir).code == 0);
  REQUIRE(cli("test --model " + s("m.json") + " --z " + s("z.tsv") + " --out " + s("d.tsv"), s.dir).code == 0);

  const auto man = nlohmann::json::parse(slurp(s("d.tsv.manifest.json")));
  CHECK(man["command"] == "test");
  CHECK(man["version"] == "1.0.0");
  CHECK(man["params"]["--alpha"] == "0.05");
  CHECK(man["inputs"].size() == 2);
  CHECK(man["inputs"][0]["sha256"].get<std::string>().size() == 64);

  std::string text = slurp(s("m.json"));
  text.insert(text.size() - 1, " ");
  write_text(s("m.json"), text);
  auto r = cli("test --model " + s("m.json") + " --z " + s("z.tsv") + " --out " + s("d.tsv"), s.dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("m.json.manifest.json") != std::string::npos);
  CHECK(cli("test --no-verify --model " + s("m.json") + " --z " + s("z.tsv") + " --out " + s("d.tsv"), s.dir).code ==
        0);
}

TEST_CASE("summarize writes Hamming masses summing to one and a Newick tree") {
  Sandbox s("summ");
  REQUIRE(cli("preset --k 5 --out " + s("m.json"), s.dir).code == 0);
  REQUIRE(cli("summarize --model " + s("m.json") + " --out-prefix " + s("sum"), s.dir).code == 0);
  std::ifstream in(s("sum.hamming.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "class,mass");
  CompensatedSum total;
  int rows = 0;
  while (std::getline(in, line)) {
    total.add(std::stod(line.substr(line.find(',') + 1)));
    ++rows;
  }
  CHECK(rows == 6);
  CHECK(total.value() == doctest::Approx(1.0).epsilon(1e-12));
  const std::string nw = slurp(s("sum.newick"));
  CHECK(nw.size() > 2);
  CHECK(nw.substr(nw.size() - 2) == ";\n");
  for (const char* t : {"T1", "T2", "T3", "T4", "T5"}) CHECK(nw.find(t) != std::string::npos);
}

TEST_CASE("roc scores by lfdr or a TBT statistic and writes the AUC line") {
  Sandbox s("roc");
  REQUIRE(cli("preset --k 3 --out " + s("m.json"), s.dir).code == 0);
  REQUIRE(cli("simulate --model " + s("m.json") + " --n 5000 --seed 4 --out " + s("z.tsv"), s.dir).code == 0);
  const std::string base = "roc --z " + s("z.tsv") + " --truth " + s("z.tsv.truth.tsv");
  REQUIRE(cli(base + " --model " + s("m.json") + " --out " + s("a.csv"), s.dir).code == 0);
  REQUIRE(cli(base + " --tbt minP --out " + s("b.csv"), s.dir).code == 0);
  const std::string a = slurp(s("a.csv"));
  CHECK(a.rfind("threshold,fpr,tpr\n-inf,0,0\n", 0) == 0);
  CHECK(a.substr(a.size() - 5) == ",1,1\n");
  const std::string auc = slurp(s("a.csv.auc.txt"));
  CHECK(auc.find("auc=") != std::string::npos);
  CHECK(std::count(auc.begin(), auc.end(), '\n') == 1);
  CHECK(slurp(s("b.csv.auc.txt")).find("score=minP") != std::string::npos);
  CHECK(cli(base + " --out " + s("c.csv"), s.dir).code == 2);
  CHECK(cli(base + " --tbt medianP --out " + s("c.csv"), s.dir).code == 2);
}

TEST_CASE("failure exit codes") {
  Sandbox s("domain");
  REQUIRE(cli("simulate --preset 5 --n 1000 --out " + s("z.tsv"), s.dir).code == 0);
  CHECK(cli("fit-direct --z " + s("z.tsv") + " --out " + s("m.json"), s.dir).code == 3);
  REQUIRE(cli("preset --k 5 --out " + s("m.json"), s.dir).code == 0);
  CHECK(cli("test --model " + s("m.json") + " --z " + s("z.tsv") + " --family custom:@" + s("fam.txt") + " --out " +
                s("d.tsv"),
            s.dir)
            .code == 2);
  CHECK(cli("bogus-command", s.dir).code == 2);
}

TEST_CASE("simulate, fit-direct, assemble and test are thread-count independent") {
  Sandbox s("det");
  for (const char* t : {"1", "8"}) {
    const std::string d = std::string("t") + t + "_";
    const std::string g = std::string("--threads ") + t + " ";
    REQUIRE(cli(g + "simulate --preset 3 --n 20000 --seed 9 --out " + s(d + "z.tsv"), s.dir).code == 0);
    REQUIRE(cli(g + "fit-direct --z " + s(d + "z.tsv") + " --out " + s(d + "direct.json"), s.dir).code == 0);
    REQUIRE(cli(g + "fit-pairs --z " + s(d + "z.tsv") + " --out " + s(d + "pairs"), s.dir).code == 0);
    REQUIRE(cli(g + "assemble --mc --draws 200000 --pairs-dir " + s(d + "pairs") + " --out " + s(d + "model.json"),
                s.dir)
                .code == 0);
    REQUIRE(cli(g + "test --model " + s(d + "model.json") + " --z " + s(d + "z.tsv") + " --out " + s(d + "d.tsv"),
                s.dir)
                .code == 0);
  }
  for (const char* f : {"z.tsv", "z.tsv.truth.tsv", "direct.json", "model.json", "d.tsv"})
    CHECK_MESSAGE(slurp(s(std::string("t1_") + f)) == slurp(s(std::string("t8_") + f)), f);
}
