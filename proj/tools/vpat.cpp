// Command-line front end: run, eval, credibility, replay, serve.
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "vpat/console.hpp"
#include "vpat/credibility.hpp"
#include "vpat/deduction.hpp"
#include "vpat/evaluation.hpp"
#include "vpat/runlog.hpp"
#include "vpat/scenario.hpp"
#include "vpat/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vpat;

namespace {

std::atomic<bool> g_interrupted{false};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + p.string() + "'");
  out << text;
}

std::string read_file(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + p + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

harness::RunOptions options(const std::optional<std::uint64_t>& seed, const std::optional<bool>& halt) {
  harness::RunOptions o;
  o.seed = seed;
  o.halt_on_collision = halt;
  return o;
}

/// Runs every armed deduction and writes branch logs plus verdicts.
json deduce(const harness::ScenarioSpec& spec, const harness::Simulation& sim, const runlog::RunLog& manual,
            const harness::RunOptions& opts, const fs::path& out) {
  json verdicts = json::array();
  std::size_t n = 0;
  for (const auto& req : sim.deductions()) {
    auto v = harness::run_deduction(spec, req, harness::original_controller(spec, req.event.vehicle),
                                    spec.deduction_horizon, opts);
    const std::string name = "branch_" + std::to_string(n++) + "_" + req.event.vehicle + ".jsonl";
    write_file(out / name, v.branch_log.text);
    json j = harness::verdict_to_json(v);
    j["branch_log"] = name;
    try {
      j["comparison"] = harness::comparison_to_json(harness::compare_outcomes(manual, v.branch_log, req.event.vehicle));
    } catch (const Error& e) {
      j["comparison_error"] = e.what();
    }
    std::cout << "deduction " << req.event.vehicle << " @tick " << req.event.tick << ": " << to_string(v.outcome)
              << "\n";
    verdicts.push_back(j);
  }
  return verdicts;
}

int cmd_run(const std::string& spec_path, const std::optional<std::uint64_t>& seed, const std::optional<bool>& halt,
            const std::string& out_dir) {
  const auto spec = harness::load_scenario(spec_path);
  const auto opts = options(seed, halt);
  fs::create_directories(out_dir);
  harness::Simulation sim(spec, opts);
  const runlog::RunLog log = sim.run();
  const fs::path out(out_dir);
  write_file(out / "run.jsonl", log.text);
  std::cout << "run " << spec.id << ": " << log.ticks.size() << " ticks, " << sim.termination_reason() << "\n";
  if (!sim.deductions().empty()) write_file(out / "deductions.json", deduce(spec, sim, log, opts, out).dump(2) + "\n");
  std::cout << (out / "run.jsonl").string() << "\n";
  return 0;
}

int cmd_eval(const std::string& log_path, const std::string& scheme_path, const std::string& rules_path,
             const std::string& vut, const std::string& out_dir) {
  const runlog::RunLog log = runlog::load(log_path);
  const auto scheme = scheme_path.empty() ? evaluation::default_scheme() : evaluation::load_scheme(scheme_path);
  const auto rules = rules_path.empty() ? evaluation::default_rulebase() : evaluation::load_rulebase(rules_path);
  const auto report = evaluation::evaluate(log, scheme, vut);
  const auto findings = evaluation::diagnose(report, rules);
  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  json j = evaluation::report_to_json(report);
  j["findings"] = evaluation::findings_to_json(findings);
  write_file(out / "report.json", j.dump(2) + "\n");
  const std::string text = evaluation::render_report(report) + "\n" + evaluation::render_findings(findings);
  write_file(out / "report.txt", text);
  std::cout << text;
  return 0;
}

int cmd_credibility(const std::string& real_path, const std::string& fusion_path, const std::string& out_dir) {
  const auto real = runlog::extract_series(runlog::load(real_path));
  const auto fusion = runlog::extract_series(runlog::load(fusion_path));
  const auto report = credibility::assess(real, fusion);
  const std::string table = credibility::render_table({report});
  std::cout << table << (report.pass ? "PASS" : "FAIL") << "\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_file(fs::path(out_dir) / "credibility.json", credibility::report_to_json(report).dump(2) + "\n");
  }
  return report.pass ? 0 : 3;
}

int cmd_replay(const std::string& log_path) {
  const auto r = harness::replay(read_file(log_path));
  if (r.equal) {
    std::cout << "replay: identical\n";
    return 0;
  }
  std::cout << "replay: MISMATCH";
  if (!r.hash_ok) std::cout << " (spec hash does not match header)";
  if (r.first_divergent_line > 0) std::cout << " at line " << r.first_divergent_line;
  std::cout << "\n" << r.detail << "\n";
  return 1;
}

int cmd_serve(const std::string& spec_path, const std::optional<std::uint64_t>& seed, const std::optional<bool>& halt,
              int port, double realtime, const std::string& out_dir) {
  const auto spec = harness::load_scenario(spec_path);
  const auto opts = options(seed, halt);
  harness::Simulation sim(spec, opts);
  console::Server server(port);
  console::route_commands(server, sim);
  server.start();
  std::cout << "serving " << spec.id << " on ws://127.0.0.1:" << server.port() << "\n" << std::flush;
  std::signal(SIGINT, [](int) { g_interrupted = true; });
  console::ServeOptions so;
  so.realtime = realtime;
  so.should_stop = [] { return g_interrupted.load(); };
  const runlog::RunLog log = console::serve(sim, server, so);
  server.stop();
  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "run.jsonl", log.text);
  if (!sim.deductions().empty()) {
    write_file(fs::path(out_dir) / "deductions.json", deduce(spec, sim, log, opts, out_dir).dump(2) + "\n");
  }
  std::cout << "run " << spec.id << ": " << sim.termination_reason() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Virtual-physical fusion test harness"};
  app.require_subcommand(1);

  std::string spec, out = "out", log, scheme, rules, vut, real, fusion;
  std::optional<std::uint64_t> seed;
  std::optional<bool> halt;
  int port = 8765;
  double realtime = 1.0;

  auto* run = app.add_subcommand("run", "Run a scenario and write its log");
  run->add_option("--spec", spec, "Scenario file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--halt-on-collision", halt, "true or false");
  run->add_option("--out", out, "Output directory");

  auto* eval = app.add_subcommand("eval", "Score a run log");
  eval->add_option("--log", log, "Run log")->required()->check(CLI::ExistingFile);
  eval->add_option("--scheme", scheme, "Evaluation scheme")->check(CLI::ExistingFile);
  eval->add_option("--rules", rules, "Diagnosis rule base")->check(CLI::ExistingFile);
  eval->add_option("--vut", vut, "Vehicle to score (default: first VUT)");
  eval->add_option("--out", out, "Output directory");

  auto* cred = app.add_subcommand("credibility", "Compare a real and a fusion run");
  cred->add_option("real", real, "Real-world log")->required()->check(CLI::ExistingFile);
  cred->add_option("fusion", fusion, "Fusion log")->required()->check(CLI::ExistingFile);
  cred->add_option("--out", out, "Output directory");

  auto* rep = app.add_subcommand("replay", "Re-simulate a log and compare");
  rep->add_option("log", log, "Run log")->required()->check(CLI::ExistingFile);

  auto* serve = app.add_subcommand("serve", "Run live with the operator console service");
  serve->add_option("--spec", spec, "Scenario file")->required()->check(CLI::ExistingFile);
  serve->add_option("--seed", seed, "Override the scenario seed");
  serve->add_option("--halt-on-collision", halt, "true or false");
  serve->add_option("--port", port, "WebSocket port (0 picks one)");
  serve->add_option("--realtime", realtime, "Wall seconds per simulated second; 0 runs unpaced");
  serve->add_option("--out", out, "Output directory");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(spec, seed, halt, out);
    if (*eval) return cmd_eval(log, scheme, rules, vut, out);
    if (*cred) return cmd_credibility(real, fusion, out);
    if (*rep) return cmd_replay(log);
    if (*serve) return cmd_serve(spec, seed, halt, port, realtime, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
