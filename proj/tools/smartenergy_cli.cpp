#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "smartenergy/analytics.hpp"
#include "smartenergy/api.hpp"
#include "smartenergy/config.hpp"
#include "smartenergy/runtime.hpp"
#include "smartenergy/scenario.hpp"

namespace se = smartenergy;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

se::Timestamp require_time(const std::string& text, const char* what) {
  const auto t = se::parse_iso8601(text);
  if (!t) throw CLI::ValidationError(what, "expected an ISO timestamp");
  return *t;
}

int cmd_run(const std::string& config_path, const std::string& host, int port, const std::string& log_path,
            bool socket) {
  auto cfg = se::config::load_config(config_path);
  se::SystemClock clock;
  se::runtime::ControllerOptions opts;
  if (!log_path.empty()) opts.log_file = log_path;
  opts.use_socket = socket;
  se::runtime::Controller controller(cfg, clock, clock.now(), opts);
  se::api::ApiServer server(controller, host, port);
  std::cout << "listening on http://" << host << ":" << server.port() << "/api" << std::endl;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
  server.stop();
  return 0;
}

int cmd_replay(const std::string& script_path, const std::string& config_override, std::optional<double> speedup,
               const std::string& out_dir, bool socket, bool no_pace) {
  std::optional<se::config::Config> cfg;
  if (!config_override.empty()) cfg = se::config::load_config(config_override);
  const auto script = se::scenario::load_scenario(script_path, cfg ? &*cfg : nullptr);
  if (!cfg) cfg = se::config::load_config(script.config_path);
  se::runtime::ReplayOptions opts;
  opts.speedup = speedup;
  opts.use_socket = socket;
  opts.pace = !no_pace;
  const auto bundle = se::runtime::replay(*cfg, script, opts);
  if (!out_dir.empty()) se::runtime::write_bundle(bundle, out_dir);
  std::cout << bundle.comparison_csv;
  return 0;
}

int cmd_analyze(const std::string& csv_path, const std::string& command, double max_missing) {
  namespace an = se::analytics;
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("cannot read " + csv_path);
  const auto data = an::hourly_dataset(an::load_meter_csv(in));
  if (command == "correlations") {
    const auto pairs = an::default_pairs();
    std::cout << an::correlations_csv(an::weekly_correlations(data, pairs, max_missing));
  } else if (command == "regress") {
    std::cout << an::regression_csv(data);
  } else if (command == "subsets") {
    std::cout << an::subsets_csv(an::split_subsets(data, an::Calendar::academic_2011()));
  } else if (command == "daily") {
    std::cout << an::daily_csv(an::daily_aggregate(data));
  } else {
    throw CLI::ValidationError("command", "expected correlations, regress, subsets or daily");
  }
  return 0;
}

int cmd_report(const std::string& config_path, const std::string& scenario_path, const std::string& format) {
  if (!scenario_path.empty()) {
    const auto script = se::scenario::load_scenario(scenario_path);
    const auto cfg = se::config::load_config(config_path.empty() ? script.config_path : config_path);
    se::runtime::ReplayOptions opts;
    opts.pace = false;
    const auto bundle = se::runtime::replay(cfg, script, opts);
    std::cout << (format == "json" ? bundle.report.dump(2) + "\n" : bundle.comparison_csv);
    return 0;
  }
  if (config_path.empty()) throw CLI::ValidationError("report", "needs --config or --scenario");
  const auto cfg = se::config::load_config(config_path);
  se::SimulatedClock clock;
  se::runtime::Controller controller(cfg, clock, clock.now());
  std::cout << se::energy::estimate_csv(controller.estimates());
  return 0;
}

int cmd_synth(const std::string& out_path, const std::string& start, std::size_t hours, std::uint64_t seed,
              int interval_min) {
  namespace an = se::analytics;
  if (interval_min <= 0 || 60 % interval_min != 0) throw CLI::ValidationError("interval", "must divide 60");
  const auto data = an::synthetic_dataset(require_time(start, "start"), hours, seed);
  auto series = an::to_series(data);
  const int parts = 60 / interval_min;
  if (parts > 1) {
    for (auto& [c, s] : series) {
      std::vector<an::Sample> fine;
      for (const auto& sample : s.samples) {
        for (int k = 0; k < parts; ++k) {
          const double v = an::is_energy(c) ? sample.value / parts : sample.value;
          fine.push_back({sample.at + std::chrono::minutes{k * interval_min}, v});
        }
      }
      s.samples = std::move(fine);
    }
  }
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  an::write_meter_csv(out, series);
  return 0;
}

int cmd_recover(const std::string& log_path, const std::string& config_path, const std::string& start) {
  const auto cfg = se::config::load_config(config_path);
  const auto log = se::runtime::read_log(std::filesystem::path(log_path));
  se::SimulatedClock clock(require_time(start, "start"));
  const auto result = se::runtime::recover(cfg, clock, require_time(start, "start"), log);
  std::cout << se::runtime::to_json(*result.controller->snapshot()).dump(2) << "\n";
  if (result.corrupt_line || !result.error.empty()) {
    std::cerr << "recovery stopped after " << result.applied << " records";
    if (result.corrupt_line) std::cerr << " at line " << *result.corrupt_line;
    std::cerr << ": " << result.error << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Presence-driven building energy control and analysis"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "serve the control API with the wall clock");
  std::string run_config, host = "127.0.0.1", log_path;
  int port = 8080;
  bool run_socket = false;
  run->add_option("--config", run_config, "deployment YAML")->required()->check(CLI::ExistingFile);
  run->add_option("--host", host, "bind address");
  run->add_option("--port", port, "TCP port (0 picks one)");
  run->add_option("--log", log_path, "event log file (JSON lines)");
  run->add_flag("--socket", run_socket, "drive devices over a loopback TCP connection");

  auto* rp = app.add_subcommand("replay", "replay a scenario script against a simulated clock");
  std::string script_path, rp_config, out_dir;
  std::optional<double> speedup;
  bool rp_socket = false, no_pace = false;
  rp->add_option("script", script_path, "scenario YAML")->required()->check(CLI::ExistingFile);
  rp->add_option("--speedup", speedup, "simulated seconds per real second");
  rp->add_option("--out", out_dir, "directory for report.json, CSVs and events.jsonl");
  rp->add_option("--config", rp_config, "override the script's config");
  rp->add_flag("--socket", rp_socket, "drive devices over a loopback TCP connection");
  rp->add_flag("--no-pace", no_pace, "do not sleep between events");

  auto* an = app.add_subcommand("analyze", "analyse a meter CSV");
  std::string csv_path, command;
  double max_missing = 0.05;
  an->add_option("csv", csv_path, "timestamp,channel,value file")->required()->check(CLI::ExistingFile);
  an->add_option("command", command, "correlations | regress | subsets | daily")
      ->required()
      ->check(CLI::IsMember({"correlations", "regress", "subsets", "daily"}));
  an->add_option("--max-missing", max_missing, "largest missing fraction of a weekly window");

  auto* rep = app.add_subcommand("report", "print mode estimates, or the actual-vs-modes comparison of a scenario");
  std::string rep_config, rep_scenario, format = "csv";
  rep->add_option("--config", rep_config, "deployment YAML");
  rep->add_option("--scenario", rep_scenario, "scenario to replay (unpaced)");
  rep->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

  auto* syn = app.add_subcommand("synth", "write a synthetic meter CSV");
  std::string syn_out, syn_start = "2011-01-01T00:00:00";
  std::size_t syn_hours = 8760;
  std::uint64_t seed = 1;
  int interval = 60;
  syn->add_option("--out", syn_out, "output CSV")->required();
  syn->add_option("--start", syn_start, "first hour");
  syn->add_option("--hours", syn_hours, "number of hours");
  syn->add_option("--seed", seed, "random seed");
  syn->add_option("--interval-min", interval, "sample interval in minutes (divides 60)");

  auto* rec = app.add_subcommand("recover", "rebuild state from an event log");
  std::string rec_log, rec_config, rec_start;
  rec->add_option("log", rec_log, "events.jsonl")->required()->check(CLI::ExistingFile);
  rec->add_option("--config", rec_config, "deployment YAML")->required()->check(CLI::ExistingFile);
  rec->add_option("--start", rec_start, "instant the logged run started")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(run_config, host, port, log_path, run_socket);
    if (*rp) return cmd_replay(script_path, rp_config, speedup, out_dir, rp_socket, no_pace);
    if (*an) return cmd_analyze(csv_path, command, max_missing);
    if (*rep) return cmd_report(rep_config, rep_scenario, format);
    if (*syn) return cmd_synth(syn_out, syn_start, syn_hours, seed, interval);
    if (*rec) return cmd_recover(rec_log, rec_config, rec_start);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
