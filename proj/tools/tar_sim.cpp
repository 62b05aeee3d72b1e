// tar_sim: run, evaluate and serve tracking scenarios.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "tar/scenario.hpp"
#include "tar/server.hpp"
#include "tar/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitAborted = 3;

struct ScenarioArgs {
  std::string path;
  std::optional<std::uint64_t> seed;
  std::optional<int> redetect;
};

tar::Scenario load(const ScenarioArgs& a) {
  tar::Scenario s = tar::load_scenario(a.path);
  tar::apply_seed_env(s);
  if (a.seed) s.seed = *a.seed;
  if (a.redetect) s.redetect_level = *a.redetect;
  s.validate();
  return s;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw tar::ConfigError("cannot create output directory " + dir + ": " + ec.message());
}

int cmd_run(const ScenarioArgs& a, const std::string& out_dir) {
  const tar::Scenario s = load(a);
  ensure_dir(out_dir);
  const fs::path log_path = fs::path(out_dir) / "run.jsonl";
  std::ofstream out(log_path);
  if (!out) throw tar::ConfigError("cannot write " + log_path.string());
  const tar::RunLog log = tar::run_headless(s, &out);

  std::map<std::string, int> statuses;
  for (const auto& r : log.records) ++statuses[r.at("status").get<std::string>()];
  std::cout << "scenario " << s.name << " seed " << s.seed << ": " << log.records.size() << " ticks -> "
            << log_path.string() << '\n';
  for (const auto& [k, v] : statuses) std::cout << "  " << k << ' ' << v << '\n';
  const tar::DtwReport r = tar::evaluate_run(log);
  std::cout << "  mean DTW " << r.mean_distance << " m\n";
  return kExitOk;
}

struct EvalArgs {
  std::string log;
  std::string drone_csv;
  std::string target_csv;
  std::string dims = "xy";
  int radius = 4;
  double resample = 0.0;
  std::string case_name;
  std::string out = ".";
};

int cmd_eval(const EvalArgs& a) {
  tar::Trajectory drone;
  tar::Trajectory target;
  std::string case_name = a.case_name;
  const bool xyz = a.dims == "xyz";
  if (!a.log.empty()) {
    std::ifstream in(a.log);
    if (!in) throw tar::ConfigError("cannot open log " + a.log);
    const tar::RunLog log = tar::read_jsonl(in);
    std::tie(drone, target) = tar::run_trajectories(log, xyz);
    if (case_name.empty() && log.header.contains("case")) {
      const auto& c = log.header.at("case");
      case_name = tar::case_name(c.value("target", "target"), c.value("algorithm", "fan"),
                                 c.value("modality", "dino"), c.value("obstruction", "no"));
    }
  } else {
    if (a.drone_csv.empty() || a.target_csv.empty())
      throw tar::ConfigError("eval needs --log or both --drone-csv and --target-csv");
    std::ifstream d(a.drone_csv);
    std::ifstream t(a.target_csv);
    if (!d || !t) throw tar::ConfigError("cannot open trajectory CSV");
    drone = tar::read_csv_trajectory(d);
    target = tar::read_csv_trajectory(t);
    if (!xyz) {
      for (auto& p : drone.p) p.z() = 0.0;
      for (auto& p : target.p) p.z() = 0.0;
    }
  }
  if (a.resample > 0.0) {
    drone = tar::resample(drone, a.resample);
    target = tar::resample(target, a.resample);
  }
  tar::DtwReport r = tar::dtw_fast(drone, target, a.radius);
  r.case_name = case_name;

  ensure_dir(a.out);
  const fs::path dir(a.out);
  const json report = {{"case", r.case_name},
                       {"distance", r.distance},
                       {"mean_distance", r.mean_distance},
                       {"path_len", r.path.size()},
                       {"radius", a.radius},
                       {"dims", a.dims}};
  std::ofstream(dir / "report.json") << report.dump(2) << '\n';

  std::ofstream pairs(dir / "pair_distances.csv");
  pairs.precision(17);
  pairs << "i,j,distance\n";
  for (std::size_t k = 0; k < r.path.size(); ++k)
    pairs << r.path[k].first << ',' << r.path[k].second << ',' << r.pair_distances[k] << '\n';

  // Plot data: both tracks, plus one match segment per warp-path pair.
  std::ofstream plot(dir / "plot.csv");
  plot.precision(17);
  plot << "kind,index,x,y,x2,y2\n";
  for (std::size_t i = 0; i < drone.size(); ++i) plot << "drone," << i << ',' << drone.p[i].x() << ',' << drone.p[i].y() << ",,\n";
  for (std::size_t j = 0; j < target.size(); ++j)
    plot << "target," << j << ',' << target.p[j].x() << ',' << target.p[j].y() << ",,\n";
  for (std::size_t k = 0; k < r.path.size(); ++k) {
    const auto& [i, j] = r.path[k];
    plot << "match," << k << ',' << drone.p[i].x() << ',' << drone.p[i].y() << ',' << target.p[j].x() << ','
         << target.p[j].y() << '\n';
  }
  std::cout << report.dump(2) << '\n';
  return kExitOk;
}

extern "C" void on_signal(int) { std::_Exit(kExitOk); }

struct ServeArgs {
  unsigned short port = 1234;
  bool legacy_port = false;
  double speed = 1.0;
  bool paused = false;
  std::string encoding = "png";
  double scale = 1.0;
  std::string out;
  std::string address = "127.0.0.1";
};

int cmd_serve(const ScenarioArgs& a, const ServeArgs& sa) {
  const tar::Scenario s = load(a);
  tar::ServeOptions o;
  o.address = sa.address;
  o.port = sa.legacy_port ? 5555 : sa.port;
  o.speed = sa.speed;
  o.start_paused = sa.paused;
  o.encode.encoding = tar::parse_encoding(sa.encoding);
  o.encode.scale = sa.scale;
  if (!sa.out.empty()) {
    ensure_dir(sa.out);
    o.log_path = (fs::path(sa.out) / "run.jsonl").string();
  }
  tar::SessionServer server(s, o);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.start();
  server.wait();
  server.stop();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop one-shot tracking drone simulator"};
  app.require_subcommand(1);

  ScenarioArgs run_args;
  std::string run_out;
  auto* run = app.add_subcommand("run", "Run a scenario headless and write a JSONL log");
  run->add_option("--scenario", run_args.path, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", run_out, "Output directory")->required();
  run->add_option("--seed", run_args.seed, "Override the scenario seed");
  run->add_option("--redetect", run_args.redetect, "Re-detection level")->check(CLI::Range(1, 3));

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "DTW evaluation of a run log or two CSV trajectories");
  auto* log_opt = eval->add_option("--log", eval_args.log, "Run log (JSONL)")->check(CLI::ExistingFile);
  eval->add_option("--drone-csv", eval_args.drone_csv, "Drone trajectory CSV")->excludes(log_opt);
  eval->add_option("--target-csv", eval_args.target_csv, "Target trajectory CSV")->excludes(log_opt);
  eval->add_option("--dims", eval_args.dims, "xy or xyz")->check(CLI::IsMember({"xy", "xyz"}));
  eval->add_option("--radius", eval_args.radius, "FastDTW radius")->check(CLI::NonNegativeNumber);
  eval->add_option("--resample", eval_args.resample, "Uniform resampling step (s)");
  eval->add_option("--case", eval_args.case_name, "Case name (default: from the log header)");
  eval->add_option("--out", eval_args.out, "Output directory for report files");

  ScenarioArgs serve_args;
  ServeArgs sa;
  auto* serve = app.add_subcommand("serve", "Serve a scenario over ws://host:port/live");
  serve->add_option("--scenario", serve_args.path, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  serve->add_option("--port", sa.port, "Listen port");
  serve->add_flag("--legacy-port", sa.legacy_port, "Listen on 5555");
  serve->add_option("--address", sa.address, "Listen address");
  serve->add_option("--speed", sa.speed, "Sim seconds per wall second")->check(CLI::PositiveNumber);
  serve->add_flag("--paused", sa.paused, "Start paused");
  serve->add_option("--encoding", sa.encoding, "png or jpeg")->check(CLI::IsMember({"png", "jpeg"}));
  serve->add_option("--scale", sa.scale, "Frame resize factor")->check(CLI::PositiveNumber);
  serve->add_option("--out", sa.out, "Write the session log to this directory");
  serve->add_option("--seed", serve_args.seed, "Override the scenario seed");
  serve->add_option("--redetect", serve_args.redetect, "Re-detection level")->check(CLI::Range(1, 3));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_args, run_out);
    if (*eval) return cmd_eval(eval_args);
    if (*serve) return cmd_serve(serve_args, sa);
  } catch (const tar::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const tar::RunAborted& e) {
    std::cerr << "run aborted: " << e.what() << '\n';
    return kExitAborted;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
