#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "helpers.hpp"
#include "sdm/bench.hpp"
#include "sdm/config.hpp"

using namespace sdm;
using doctest::Approx;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "sdmcliXXXXXX").string();
    path = mkdtemp(tmpl.data());
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string thrown_message(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "<no exception>";
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(SDM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("config text: sections, comments, precedence") {
  Config cfg = Config::from_string(
      "top = 1\n"
      "[engine]\n"
      "mode = seq   # trailing comment\n"
      "# full-line comment\n"
      "\n"
      "mode = overlap\n"
      "[cache]\n"
      "partitions = 16\n",
      "inline.cfg");
  CHECK(cfg.get_int("top", 0) == 1);
  CHECK(cfg.get_string("engine.mode", "") == "overlap");  // later assignment wins
  CHECK(cfg.get_uint("cache.partitions", 0) == 16);
  CHECK_FALSE(cfg.has("mode"));  // section prefix is part of the key
}

TEST_CASE("config text: malformed lines carry origin and line number") {
  CHECK(thrown_message([] { Config::from_string("[engine\nx = 1\n", "a.cfg"); }) ==
        "a.cfg:1: unterminated section header");
  CHECK(thrown_message([] { Config::from_string("x = 1\njust words\n", "b.cfg"); }) ==
        "b.cfg:2: expected key=value");
  CHECK(thrown_message([] { Config::from_string("= 3\n", "c.cfg"); }) ==
        "c.cfg:1: empty key");
  CHECK(thrown_message([] { Config::from_string("[]\n", "d.cfg"); }) ==
        "d.cfg:1: empty section name");
  CHECK(thrown_message([] { Config::from_file("/nonexistent/nope.cfg"); })
            .find("cannot open config file") == 0);
}

TEST_CASE("config getters parse typed values strictly") {
  Config cfg = Config::from_string(
      "i = 42\n"
      "neg = -7\n"
      "d = 2.5\n"
      "t1 = true\nt2 = YES\nt3 = on\nt4 = 1\n"
      "f1 = False\nf2 = no\nf3 = OFF\nf4 = 0\n"
      "list = 3, 1,4\n"
      "empty =\n"
      "badint = 12x\n"
      "badbool = maybe\n");
  CHECK(cfg.get_int("i", 0) == 42);
  CHECK(cfg.get_int("neg", 0) == -7);
  CHECK(cfg.get_int("missing", 9) == 9);
  CHECK(cfg.get_double("d", 0.0) == Approx(2.5));
  for (const char* k : {"t1", "t2", "t3", "t4"}) CHECK(cfg.get_bool(k, false));
  for (const char* k : {"f1", "f2", "f3", "f4"}) CHECK_FALSE(cfg.get_bool(k, true));
  CHECK(cfg.get_int_list("list") == std::vector<int32_t>{3, 1, 4});
  CHECK(cfg.get_int_list("empty").empty());
  CHECK(cfg.get_int_list("missing").empty());
  CHECK_THROWS_AS(cfg.get_int("badint", 0), ConfigError);
  CHECK_THROWS_AS(cfg.get_uint("neg", 0), ConfigError);
  CHECK_THROWS_AS(cfg.get_bool("badbool", false), ConfigError);
  CHECK_THROWS_AS(cfg.require_string("missing"), ConfigError);
  CHECK(cfg.require_string("i") == "42");
}

TEST_CASE("run config maps sections onto typed fields and validates") {
  Config cfg = Config::from_string(
      "[model]\npreset = tiny\nrows = 128\n"
      "[workload]\nqueries = 50\nzipf_s = 0.9\n"
      "[device]\nprofile = nand\n"
      "[placement]\npolicy = fixed_fm\nfm_budget_bytes = 1000000\ndeny = 1,2\n"
      "[cache]\nlen_threshold = 3\n"
      "[engine]\nmode = overlap\ndeprune = yes\n"
      "[bench]\nseed = 7\n");
  RunConfig rc = RunConfig::from_config(cfg);
  CHECK(rc.model_preset == "tiny");
  CHECK(rc.preset_rows == 128);
  CHECK(rc.queries == 50);
  CHECK(rc.zipf_s == Approx(0.9));
  CHECK(rc.profile_name == "nand");
  CHECK(rc.policy == "fixed_fm");
  CHECK(rc.fm_budget_bytes == 1000000);
  CHECK(rc.deny_list == std::vector<int32_t>{1, 2});
  CHECK(rc.len_threshold == 3);
  CHECK(rc.mode == "overlap");
  CHECK(rc.deprune);
  CHECK(rc.seed == 7);

  EngineOptions opts = rc.engine_options();
  CHECK(opts.overlapped);
  CHECK(opts.deprune);
  CHECK(opts.pooled_cache.len_threshold == 3);
  CHECK(opts.device.name == "nand");
  PlacementPolicy pol = rc.placement_policy();
  CHECK(pol.kind == PlacementPolicy::Kind::FixedFm);
  CHECK(pol.fm_budget_bytes == 1000000);
  CHECK(pol.deny_list == std::vector<int32_t>{1, 2});

  CHECK_THROWS_AS(RunConfig::from_config(Config::from_string("[workload]\nqueries = 0\n")),
                  ConfigError);
  CHECK_THROWS_AS(RunConfig::from_config(Config::from_string("[bench]\nstreams = 0\n")),
                  ConfigError);
  CHECK_THROWS_AS(RunConfig::from_config(Config::from_string("[engine]\nmode = turbo\n")),
                  ConfigError);

  Config bad_profile = Config::from_string("[device]\nprofile = floppy\n");
  CHECK_THROWS_AS(RunConfig::from_config(bad_profile).engine_options(), ConfigError);
  Config bad_policy = Config::from_string("[placement]\npolicy = wishful\n");
  CHECK_THROWS_AS(RunConfig::from_config(bad_policy).placement_policy(), ConfigError);
}

TEST_CASE("synthetic presets have the documented shape") {
  ModelManifest tiny = preset_manifest("tiny", 64);
  REQUIRE(tiny.tables.size() == 5);
  CHECK(tiny.tables[0].role == TableRole::User);
  CHECK(tiny.tables[0].elem_count == 56);
  CHECK(tiny.tables[0].avg_pooling_factor == Approx(8.0));
  CHECK(tiny.tables[3].role == TableRole::Item);
  CHECK(tiny.tables[3].elem_count == 120);
  for (size_t i = 0; i < tiny.tables.size(); ++i) {
    CHECK(tiny.tables[i].table_id == static_cast<int32_t>(i + 1));
    CHECK(tiny.tables[i].num_rows == 64);
  }

  ModelManifest m1 = preset_manifest("m1", 32);
  CHECK(m1.tables.size() == 91);
  int users = 0, items = 0;
  for (const auto& t : m1.tables) (t.role == TableRole::User ? users : items) += 1;
  CHECK(users == 61);
  CHECK(items == 30);
  CHECK(m1.tables[0].elem_count == 43);
  CHECK(m1.tables[90].elem_count == 61);

  CHECK(preset_manifest("m2", 8).tables.size() == 730);
  CHECK(preset_manifest("m3", 8).tables.size() == 2700);
  CHECK_THROWS_AS(preset_manifest("m9", 64), ConfigError);
  CHECK_THROWS_AS(preset_manifest("tiny", 0), ConfigError);
}

TEST_CASE("bench runs reconcile and report identical bytes for identical inputs") {
  Config cfg = Config::from_string(
      "[model]\npreset = tiny\nrows = 256\n"
      "[workload]\nqueries = 300\n"
      "[bench]\nstreams = 2\nwarmup_window = 100\n");
  RunConfig rc = RunConfig::from_config(cfg);

  BenchReport a = run_bench(rc);
  BenchReport b = run_bench(rc);
  CHECK(a.reconciled());
  CHECK(a.queries == 300);
  CHECK(a.lookups > 0);
  CHECK(a.index_errors == 0);
  CHECK(a.qps > 0.0);
  CHECK(a.e2e.count == 300);
  CHECK(a.row_hit_rate > 0.0);
  CHECK(a.device_bytes_used > 0);
  CHECK(a.queries_to_90pct > 0);

  std::string csv_a = report_csv(a);
  std::string csv_b = report_csv(b);
  CHECK(csv_a == csv_b);
  CHECK(csv_a.rfind("# sdm-embstore report v1\n", 0) == 0);
  CHECK(csv_a.find("queries,300") != std::string::npos);

  // Offered and sustained device rates coincide once nothing can absorb reads.
  Config raw = Config::from_string(
      "[model]\npreset = tiny\nrows = 256\n"
      "[workload]\nqueries = 200\n"
      "[engine]\nrow_cache = off\npooled_cache = off\n");
  BenchReport c = run_bench(RunConfig::from_config(raw));
  CHECK(c.reconciled());
  CHECK(c.offered_iops == Approx(c.sustained_iops));
  CHECK(c.device_reads > 0);
  CHECK(c.row_hit_rate == 0.0);
}

TEST_CASE("plan output matches the reference arithmetic exactly") {
  RunConfig rc;
  std::string csv = run_plan_csv(rc);
  CHECK(csv ==
        "# sdm-embstore report v1\n"
        "fleet,t6,baseline,1200,0,1200,1200,0\n"
        "fleet,t6,tiered,2400,0,960,960,20\n"
        "fleet,t7,scale-out,1500,300,1575,1575,0\n"
        "fleet,t7,tiered,1500,0,1500,1500,4.761904762\n"
        "fleet,t9,baseline,1,0,1,1,0\n"
        "fleet,t9,tiered,1,0,1.01,0.707,29.3\n"
        "iops,m1,252000,10080,1,1\n"
        "iops,m2,5062500,506250,2,1\n"
        "iops,m3,189000000,37800000,76,10\n"
        "endurance,m1,2.60975\n"
        "warmup,0.1,5,0.5,30,0.03333333333\n"
        "latency_budget,m2,161117078.4,optane,ok,nand,exposed\n");

  RunConfig only;
  only.plan_scenario = "iops";
  std::string narrowed = run_plan_csv(only);
  CHECK(narrowed ==
        "# sdm-embstore report v1\n"
        "iops,m1,252000,10080,1,1\n"
        "iops,m2,5062500,506250,2,1\n"
        "iops,m3,189000000,37800000,76,10\n");
}

TEST_CASE("generated traces round-trip through files and feed the analyzer") {
  TempDir dir;
  Config cfg = Config::from_string(
      "[model]\npreset = tiny\nrows = 128\n"
      "[workload]\nqueries = 120\nitem_batch = 2\n"
      "[bench]\nseed = 5\nout = " +
      dir.file("trace.txt") + "\n");
  RunConfig rc = RunConfig::from_config(cfg);
  run_gen_trace(rc);

  REQUIRE(fs::exists(dir.file("trace.txt")));
  REQUIRE(fs::exists(dir.file("trace.txt.manifest")));  // synthetic model kept alongside

  Trace trace = read_trace(dir.file("trace.txt"));
  CHECK(trace.queries.size() == 120);
  CHECK(trace.table_ids.size() == 5);

  RunConfig an = rc;
  an.trace_path = dir.file("trace.txt");
  an.manifest_path = dir.file("trace.txt.manifest");
  an.analyze_window = 100;
  std::string csv = run_analyze_csv(an);

  // Leaving the manifest unset finds the sidecar, even when the rest of the
  // config would resolve to a mismatched model.
  RunConfig sidecar = an;
  sidecar.manifest_path = "";
  sidecar.preset_rows = 16;
  CHECK(run_analyze_csv(sidecar) == csv);
  CHECK(csv.rfind("# sdm-embstore report v1\nkind,table,x,value\n", 0) == 0);
  CHECK(csv.find("temporal,1,") != std::string::npos);
  CHECK(csv.find("spatial,5,") != std::string::npos);
  // Every temporal curve ends at 1 and every spatial point is a fraction.
  CHECK(csv.find("temporal,1,128,1\n") != std::string::npos);

  RunConfig missing = rc;
  missing.trace_path = "";
  CHECK_THROWS_AS(run_analyze_csv(missing), ConfigError);
  RunConfig nowhere = rc;
  nowhere.out_path = "";
  CHECK_THROWS_AS(run_gen_trace(nowhere), ConfigError);
}

TEST_CASE("the binary maps outcomes onto exit codes") {
  TempDir dir;
  CHECK(run_cli("plan") == 0);
  CHECK(run_cli("plan --config /nonexistent/x.cfg") == 2);   // config error
  CHECK(run_cli("frobnicate") == 2);                          // usage error
  CHECK(run_cli("bench --profile floppy --queries 5") == 2);  // bad device name

  write_text(dir.file("small.cfg"),
             "[model]\npreset = tiny\nrows = 64\n"
             "[workload]\nqueries = 10\n"
             "[device]\ncapacity_bytes = 100\n");
  CHECK(run_cli("bench --config " + dir.file("small.cfg")) == 3);  // model cannot load

  write_text(dir.file("ok.cfg"),
             "[model]\npreset = tiny\nrows = 64\n"
             "[workload]\nqueries = 20\n");
  CHECK(run_cli("bench --config " + dir.file("ok.cfg")) == 0);
  CHECK(run_cli("gen-trace --config " + dir.file("ok.cfg") + " --out " + dir.file("t.txt")) == 0);
  CHECK(run_cli("analyze --config " + dir.file("ok.cfg")) == 2);  // no trace given
}
