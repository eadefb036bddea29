#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <json.hpp>

#include "oatforge/parse.hpp"
#include "oatforge/tuner.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "oatforge_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

RunResult run_cli(const std::string& args) {
  fs::path out = work_dir() / "stdout.txt";
  fs::path err = work_dir() / "stderr.txt";
  std::string cmd = std::string(OATFORGE_BIN) + " " + args + " >" + out.string() +
                    " 2>" + err.string();
  int rc = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string fixture(const std::string& name) {
  return std::string(OATFORGE_FIXTURE_DIR) + "/" + name;
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("generate: ten candidates from the quadruple-loop kernel") {
  fs::path out = work_dir() / "gen";
  RunResult r = run_cli("generate " + fixture("exb.oat") + " --out " + out.string() +
                        " --max-threads 32");
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(out / "exb_candidates.f90"));
  CHECK(fs::exists(out / "exb_manifest"));
  CHECK(count_lines(slurp(out / "exb_manifest")) == 10);
  CHECK(r.out.find("vzxy collapse") != std::string::npos);
  CHECK(r.out.find("original") != std::string::npos);
  CHECK(r.out.find("exb_v4_1") != std::string::npos);
}

TEST_CASE("generate: missing file is a user error") {
  RunResult r = run_cli("generate no_such_file.oat");
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("no_such_file.oat") != std::string::npos);
}

TEST_CASE("generate: kernel without directives warns and emits the baseline") {
  fs::path kernel = work_dir() / "plain.oat";
  {
    std::ofstream f(kernel);
    f << "kernel plain\nparam n = 4\ndo i = 1, n\nbegin body\n! x\nend body\nenddo\n";
  }
  fs::path out = work_dir() / "gen_plain";
  RunResult r = run_cli("generate " + kernel.string() + " --out " + out.string());
  CHECK(r.exit_code == 0);
  CHECK(r.err.find("nothing to tune") != std::string::npos);
  CHECK(count_lines(slurp(out / "plain_manifest")) == 1);
}

TEST_CASE("report format twins carry the same rows") {
  fs::path out = work_dir() / "gen_fmt";
  RunResult json = run_cli("generate " + fixture("exb.oat") + " --out " + out.string() +
                           " --format json");
  REQUIRE(json.exit_code == 0);
  auto doc = nlohmann::json::parse(json.out);
  REQUIRE(doc.contains("rows"));
  CHECK(doc["rows"].size() == 10);
  CHECK(doc["rows"][9]["subroutine"] == "exb_v4_1");

  RunResult csv = run_cli("generate " + fixture("exb.oat") + " --out " + out.string() +
                          " --format csv");
  REQUIRE(csv.exit_code == 0);
  CHECK(count_lines(csv.out) == 11);  // header + ten rows
  CHECK(csv.out.rfind("variant,g,d,baseline,subroutine,label", 0) == 0);

  RunResult bad = run_cli("generate " + fixture("exb.oat") + " --out " + out.string() +
                          " --format yaml");
  CHECK(bad.exit_code == 1);
}

TEST_CASE("tune with a synthetic provider persists and best reads it back") {
  fs::path store = work_dir() / "store";
  std::string common = fixture("exb.oat") + " --store " + store.string() +
                       " --max-threads 8 --env-tag clitest";
  RunResult tune = run_cli("tune " + common +
                           " --provider synthetic:target:3:8 --threads 1,2,8 --reps 3");
  CHECK(tune.exit_code == 0);
  CHECK(tune.err.find("best: variant 3 with 8 threads") != std::string::npos);
  CHECK(tune.out.find("<-- best") != std::string::npos);

  RunResult best = run_cli("best " + common);
  CHECK(best.exit_code == 0);
  CHECK(best.out.find("store") != std::string::npos);
  // variant 3 of the (g asc, d asc) ordering is (g=1, d=3)
  CHECK(best.out.find("third loop from the outside") != std::string::npos);

  // A different max-threads is a different BP: no entry, baseline fallback.
  RunResult absent = run_cli("best " + fixture("exb.oat") + " --store " + store.string() +
                             " --max-threads 7 --env-tag clitest");
  CHECK(absent.exit_code == 0);
  CHECK(absent.out.find("baseline fallback") != std::string::npos);

  // The persisted sweep feeds the speedup-vs-variant report.
  RunResult report = run_cli("report " + common + " --format json");
  CHECK(report.exit_code == 0);
  auto doc = nlohmann::json::parse(report.out);
  REQUIRE(doc["rows"].size() == 10);
  bool best_flagged = false;
  for (const auto& row : doc["rows"]) {
    if (row["best"] == "<-- best") {
      best_flagged = true;
      CHECK(row["variant"] == 3);
      CHECK(row["best_threads"] == 8);
    }
    CHECK(row["speedup_vs_tmax"].is_number());
  }
  CHECK(best_flagged);

  // Nothing tuned for this BP yet: a user error, not a silent empty table.
  RunResult missing = run_cli("report " + fixture("exb.oat") + " --store " +
                              store.string() + " --max-threads 6 --env-tag clitest");
  CHECK(missing.exit_code == 1);
  CHECK(missing.err.find("run tune first") != std::string::npos);
}

TEST_CASE("tune rejects bad usage before any work") {
  RunResult r = run_cli("tune " + fixture("exb.oat") + " --reps 0");
  CHECK(r.exit_code == 1);
  RunResult p = run_cli("tune " + fixture("exb.oat") + " --provider nope");
  CHECK(p.exit_code == 1);
  CHECK(p.err.find("unknown provider") != std::string::npos);
}

TEST_CASE("an all-failed sweep exits with the measurement-failure code") {
  RunResult r = run_cli("tune " + fixture("exb.oat") + " --store " +
                        (work_dir() / "store_failed").string() +
                        " --provider synthetic:const:0 --max-threads 4 --reps 1");
  CHECK(r.exit_code == 3);
  CHECK(r.err.find("no successful measurements") != std::string::npos);
}

TEST_CASE("tune with the measured provider over a builtin kernel") {
  fs::path kernel = work_dir() / "axpy2.oat";
  {
    std::ofstream f(kernel);
    f << oatforge::find_builtin("axpy2").kernel_source;
  }
  fs::path store = work_dir() / "store_measured";
  RunResult r = run_cli("tune " + kernel.string() + " --store " + store.string() +
                        " --max-threads 2 --threads 1,2 --reps 2");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("ok") != std::string::npos);
  REQUIRE(fs::exists(store));
  int stored = 0;
  for (const auto& e : fs::directory_iterator(store))
    if (e.path().extension() == ".json") ++stored;
  CHECK(stored == 1);
}

TEST_CASE("tune with the measured provider needs a builtin kernel") {
  RunResult r = run_cli("tune " + fixture("exb.oat") + " --max-threads 2 --reps 1 --store " +
                        (work_dir() / "store_none").string());
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("unknown builtin kernel 'exb'") != std::string::npos);
}

TEST_CASE("best diagnoses a corrupt store file") {
  fs::path store = work_dir() / "store_corrupt";
  fs::create_directories(store);
  oatforge::Kernel k = oatforge::parse_kernel_file(fixture("exb.oat"));
  oatforge::BasicParams bp;
  bp.kernel_name = k.name;
  bp.params = k.params;
  bp.max_threads = 8;
  bp.env_tag = "default";
  {
    std::ofstream f(store / (oatforge::bp_signature(bp) + ".json"));
    f << "{ broken";
  }
  RunResult r = run_cli("best " + fixture("exb.oat") + " --store " + store.string() +
                        " --max-threads 8");
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("parse error") != std::string::npos);
}

TEST_CASE("verify passes for every variant at several thread counts") {
  RunResult r = run_cli("verify " + fixture("exb.oat") +
                        " --set nv=1 --set nz=2 --set iend_xw=3 --set nyw=2"
                        " --threads 1,2,7");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(count_lines(r.out) >= 12);  // title + header + rule + ten variants
}

TEST_CASE("verify rejects unknown parameter overrides") {
  RunResult r = run_cli("verify " + fixture("exb.oat") + " --set bogus=1");
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("unknown parameter") != std::string::npos);
}

TEST_CASE("shipped kernel files match the builtin sources") {
  for (const char* id : {"gkv_like", "axpy2"}) {
    fs::path shipped = fs::path(OATFORGE_KERNEL_DIR) / (std::string(id) + ".oat");
    REQUIRE(fs::exists(shipped));
    CHECK(slurp(shipped) == oatforge::find_builtin(id).kernel_source);
  }
}

TEST_CASE("OATFORGE_STORE provides the store directory default") {
  fs::path store = work_dir() / "store_env";
  fs::path kernel = work_dir() / "axpy2.oat";  // written by the measured test
  {
    std::ofstream f(kernel);
    f << oatforge::find_builtin("axpy2").kernel_source;
  }
  setenv("OATFORGE_STORE", store.string().c_str(), 1);
  RunResult r = run_cli("tune " + kernel.string() +
                        " --provider synthetic:inv-threads --max-threads 2 --reps 1");
  unsetenv("OATFORGE_STORE");
  CHECK(r.exit_code == 0);
  REQUIRE(fs::exists(store));
  bool has_json = false;
  for (const auto& e : fs::directory_iterator(store))
    if (e.path().extension() == ".json") has_json = true;
  CHECK(has_json);
}

TEST_CASE("subcommand is required") {
  RunResult r = run_cli("");
  CHECK(r.exit_code == 1);
  RunResult help = run_cli("--help");
  CHECK(help.exit_code == 0);
  CHECK(help.out.find("generate") != std::string::npos);
  CHECK(help.out.find("verify") != std::string::npos);
}
