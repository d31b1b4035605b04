#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "sdm/bench.hpp"

namespace {

// Exit codes: 0 ok, 2 config/usage error, 3 runtime error.
constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

void write_or_print(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write output: " + out_path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sdm-embstore: tiered-memory embedding store workbench"};
  app.require_subcommand(1);

  std::string config_path, profile, policy, mode, out_path;
  int64_t seed = 0, queries = 0, fm_budget = 0, len_threshold = 0;
  bool deprune = false;

  auto* opt_config = app.add_option("--config", config_path, "key=value config with [sections]");
  auto* opt_seed = app.add_option("--seed", seed, "run seed");
  auto* opt_queries = app.add_option("--queries", queries, "query count when generating");
  auto* opt_profile = app.add_option("--profile", profile, "device profile: nand | optane");
  auto* opt_policy = app.add_option("--policy", policy, "placement: sm_only | fixed_fm");
  auto* opt_budget = app.add_option("--fm-budget-bytes", fm_budget, "fast-memory budget");
  auto* opt_len = app.add_option("--len-threshold", len_threshold, "pooled-cache length gate");
  auto* opt_deprune = app.add_flag("--deprune", deprune, "re-expand pruned tables at load");
  auto* opt_mode =
      app.add_option("--mode", mode, "seq | overlap")->check(CLI::IsMember({"seq", "overlap"}));
  auto* opt_out = app.add_option("--out", out_path, "output file (default stdout/report)");

  auto* cmd_bench = app.add_subcommand("bench", "load a model and replay queries");
  auto* cmd_gen = app.add_subcommand("gen-trace", "synthesize a query trace");
  auto* cmd_analyze = app.add_subcommand("analyze", "temporal/spatial locality of a trace");
  auto* cmd_plan = app.add_subcommand("plan", "capacity and power arithmetic");
  for (auto* sub : {cmd_bench, cmd_gen, cmd_analyze, cmd_plan}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    sdm::Config cfg;
    if (opt_config->count() > 0) cfg = sdm::Config::from_file(config_path);
    if (opt_seed->count() > 0) cfg.set("bench.seed", std::to_string(seed));
    if (opt_queries->count() > 0) cfg.set("workload.queries", std::to_string(queries));
    if (opt_profile->count() > 0) cfg.set("device.profile", profile);
    if (opt_policy->count() > 0) cfg.set("placement.policy", policy);
    if (opt_budget->count() > 0) cfg.set("placement.fm_budget_bytes", std::to_string(fm_budget));
    if (opt_len->count() > 0) cfg.set("cache.len_threshold", std::to_string(len_threshold));
    if (opt_deprune->count() > 0) cfg.set("engine.deprune", "true");
    if (opt_mode->count() > 0) cfg.set("engine.mode", mode);
    if (opt_out->count() > 0) cfg.set("bench.out", out_path);

    sdm::RunConfig rc = sdm::RunConfig::from_config(cfg);

    if (app.got_subcommand(cmd_bench)) {
      sdm::BenchReport rep = sdm::run_bench(rc);
      sdm::print_report(rep, std::cout);
      if (!rep.reconciled()) {
        std::cerr << "error: report failed reconciliation\n";
        return kRuntimeError;
      }
    } else if (app.got_subcommand(cmd_gen)) {
      sdm::run_gen_trace(rc);
      std::cout << "wrote " << rc.out_path << "\n";
    } else if (app.got_subcommand(cmd_analyze)) {
      write_or_print(sdm::run_analyze_csv(rc), rc.out_path);
    } else if (app.got_subcommand(cmd_plan)) {
      write_or_print(sdm::run_plan_csv(rc), rc.out_path);
    }
    return kOk;
  } catch (const sdm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}
