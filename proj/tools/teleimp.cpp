// teleimp: grid evaluation, scenario replay, reports and the backend server.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "teleimp/app.hpp"
#include "teleimp/error.hpp"
#include "teleimp/grid.hpp"
#include "teleimp/report.hpp"
#include "teleimp/scenario.hpp"

using namespace teleimp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitFailure = 1;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  return out;
}

template <class T, class Parse, std::size_t N>
std::vector<T> pick(const std::string& flag, const std::string& value, Parse parse, const std::array<T, N>& all) {
  if (value.empty() || value == "all") return {all.begin(), all.end()};
  std::vector<T> out;
  for (const auto& item : split_list(value)) {
    const auto v = parse(item);
    if (!v) throw Error(ErrorKind::Configuration, "unknown value '" + item + "' for " + flag);
    out.push_back(*v);
  }
  return out;
}

struct ModelFlags {
  bool live = false;
  std::string confusion;
  std::string live_config;
  std::optional<std::uint64_t> budget;

  void add(CLI::App* cmd) {
    auto* mock = cmd->add_flag("--mock", "deterministic mock model (default)");
    cmd->add_flag("--live", live, "live chat-completion model; credential from the environment")->excludes(mock);
    cmd->add_option("--confusion", confusion, "mock confusion tables (JSON); identity when omitted");
    cmd->add_option("--live-config", live_config, "JSON with endpoint, model, credential_env, ...");
    cmd->add_option("--budget", budget, "maximum live requests for this run");
  }

  std::unique_ptr<vlm::ModelClient> make() const {
    if (live) {
      vlm::LiveConfig cfg;
      if (!live_config.empty()) cfg = vlm::LiveConfig::from_json(json::parse(report::read_file(live_config)));
      if (budget) cfg.request_budget = budget;
      return std::make_unique<vlm::LiveModelClient>(cfg);
    }
    vlm::ConfusionSet set;
    if (!confusion.empty()) {
      try {
        set = vlm::ConfusionSet::from_json(json::parse(report::read_file(confusion)));
      } catch (const json::exception& e) {
        throw Error(ErrorKind::Configuration, confusion + ": " + e.what());
      }
    }
    return std::make_unique<vlm::MockModelClient>(std::move(set));
  }
};

vlm::ExemplarStore exemplars_from(const std::string& dir, const sim::GrooveGeometry& geom) {
  return dir.empty() ? vlm::ExemplarStore::simulated(geom) : vlm::ExemplarStore::load(dir);
}

void print_files(const fs::path& dir, const std::vector<std::string>& names) {
  for (const auto& n : names) std::cerr << "wrote " << (dir / n).string() << '\n';
}

// ---- subcommands ----

struct GridCmd {
  std::string roles, priors, details, out = "grid_out", exemplar_dir, scene_dir;
  eval::GridOptions opts;
  ModelFlags model;

  int run() const {
    std::vector<vlm::PromptConfig> configs;
    for (auto r : pick("--roles", roles, vlm::parse_role, vlm::kAllRoles))
      for (auto p : pick("--priors", priors, vlm::parse_priors, vlm::kAllPriors))
        for (auto d : pick("--details", details, vlm::parse_detail, vlm::kAllDetails)) configs.push_back({r, p, d});
    if (!(opts.tol > 0 && opts.tol < 1)) throw Error(ErrorKind::Configuration, "--tol must be in (0, 1)");

    const auto geom = sim::build_canonical_groove();
    const auto exemplars = exemplars_from(exemplar_dir, geom);
    const auto scenes = scene_dir.empty() ? eval::SceneStore::simulated(geom) : eval::SceneStore::load(scene_dir);
    auto client = model.make();

    std::vector<eval::TrialResult> trials;
    const auto table = eval::run_grid(configs, opts, *client, exemplars, scenes, &trials);
    const fs::path dir(out);
    report::write_file(dir / "grid.json", report::grid_to_json(table, &trials).dump(2) + "\n");
    report::write_file(dir / "grid.csv", report::grid_csv(table));
    report::write_file(dir / "grid.md", report::grid_markdown(table));
    report::write_file(dir / "grid_plot.dat", report::grid_plot_data(table));
    print_files(dir, {"grid.json", "grid.csv", "grid.md", "grid_plot.dat"});
    std::cout << report::grid_markdown(table);
    std::size_t failed = 0;
    for (const auto& t : trials) failed += t.error.empty() ? 0 : 1;
    if (failed) std::cerr << failed << " trial(s) failed and were scored incorrect\n";
    return 0;
  }
};

struct SelectCmd {
  std::string in = "grid_out/grid.json";
  std::size_t keep = 9;

  int run() const {
    json j;
    try {
      j = json::parse(report::read_file(in));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Configuration, in + ": " + e.what());
    }
    for (const auto& c : eval::rank_and_select(report::grid_from_json(j), keep)) std::cout << vlm::to_string(c) << '\n';
    return 0;
  }
};

struct ReplayCmd {
  std::string script = "builtin:transitions", out = "replay_out", exemplar_dir, config;
  std::size_t decimation = 10;
  ModelFlags model;

  int run() const {
    const auto geom = sim::build_canonical_groove();
    eval::Scenario s;
    if (script == "builtin:transitions")
      s = eval::stiffness_transition_scenario(geom);
    else if (script == "builtin:backtrack")
      s = eval::backtrack_scenario(geom);
    else
      s = eval::Scenario::load(script);
    if (!config.empty()) {
      const auto c = vlm::parse_config(config);
      if (!c) throw Error(ErrorKind::Configuration, "unknown prompt configuration " + config);
      s.config = *c;
    }
    if (decimation == 0) throw Error(ErrorKind::Configuration, "--decimation must be >= 1");

    const auto exemplars = exemplars_from(exemplar_dir, geom);
    auto client = model.make();
    const auto r = eval::replay_scenario(s, geom, *client, exemplars);

    const fs::path dir(out);
    std::vector<std::string> names{"scenario.json", "telemetry.csv", "events.json"};
    report::write_file(dir / "scenario.json", s.to_json().dump(2) + "\n");
    report::write_file(dir / "telemetry.csv", r.log.to_csv(decimation));
    report::write_file(dir / "events.json", eval::events_to_json(r).dump(2) + "\n");
    for (const auto& f : report::telemetry_panels(r.log, decimation, &r.events)) {
      report::write_file(dir / f.name, f.content);
      names.push_back(f.name);
    }
    print_files(dir, names);
    for (const auto& e : r.events) {
      if (e.kind == "applied") continue;
      std::printf("%9.3f  %-9s %s\n", e.t, e.kind.c_str(), e.text.c_str());
    }
    return 0;
  }
};

struct ReportCmd {
  std::string in, format = "markdown", out;
  std::size_t decimation = 1;

  int run() const {
    const auto fmt = report::parse_format(format);
    if (!fmt) throw Error(ErrorKind::Configuration, "unknown --format '" + format + "'");
    const auto text = report::read_file(in);
    auto emit = [&](const std::string& content) {
      if (out.empty())
        std::cout << content;
      else
        report::write_file(out, content);
    };
    if (text.rfind("time,ref_x", 0) == 0) {
      const auto log = report::telemetry_from_csv(text);
      switch (*fmt) {
        case report::Format::Csv: emit(log.to_csv(decimation)); break;
        case report::Format::PlotData: {
          if (out.empty()) throw Error(ErrorKind::Configuration, "telemetry plot data needs --out DIR");
          for (const auto& f : report::telemetry_panels(log, decimation)) report::write_file(fs::path(out) / f.name, f.content);
          break;
        }
        case report::Format::Markdown:
          throw Error(ErrorKind::Configuration, "markdown applies to grid tables, not telemetry");
      }
      return 0;
    }
    eval::GridTable table;
    try {
      table = report::grid_from_json(json::parse(text));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Configuration, in + ": neither a grid table nor telemetry CSV (" + e.what() + ")");
    }
    switch (*fmt) {
      case report::Format::Csv: emit(report::grid_csv(table)); break;
      case report::Format::Markdown: emit(report::grid_markdown(table)); break;
      case report::Format::PlotData: emit(report::grid_plot_data(table)); break;
    }
    return 0;
  }
};

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

struct ServeCmd {
  std::string config;

  int run() const {
    const auto cfg = config.empty() ? app::AppConfig{} : app::AppConfig::load(config);
    app::BackendApp backend(cfg);
    backend.start();
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "http on " << backend.http_port() << ", websocket on " << backend.ws_port() << ", udp on "
              << backend.udp_port() << '\n';
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    backend.stop();
    return 0;
  }
};

struct ExemplarsCmd {
  std::string out = "scenes";
  int per_phase = 4;

  int run() const {
    const auto geom = sim::build_canonical_groove();
    const fs::path dir(out);
    vlm::ExemplarStore::simulated(geom).save(dir / "exemplars");
    eval::SceneStore::simulated(geom, per_phase).save(dir / "test_scenes");
    std::cerr << "wrote " << (dir / "exemplars").string() << " and " << (dir / "test_scenes").string() << '\n';
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaze- and speech-driven teleimpedance: evaluation and backend tools"};
  app.require_subcommand(1);

  GridCmd grid;
  auto* g = app.add_subcommand("grid", "prompt-configuration accuracy grid");
  g->add_option("--roles", grid.roles, "comma list of Role1,Role2,Role3 (default all)");
  g->add_option("--priors", grid.priors, "comma list of None,Ideal,Lab (default all)");
  g->add_option("--details", grid.details, "comma list of Low,High (default all)");
  g->add_option("--trials", grid.opts.trials, "trials per cell")->check(CLI::PositiveNumber);
  g->add_option("--tol", grid.opts.tol, "classification tolerance");
  g->add_option("--seed", grid.opts.seed, "run seed");
  g->add_option("--parallel", grid.opts.parallelism, "worker threads (0: hardware)");
  g->add_flag("!--unstratified", grid.opts.stratified, "independent draws instead of stratified quantiles");
  g->add_option("--out", grid.out, "output directory");
  g->add_option("--exemplars", grid.exemplar_dir, "few-shot exemplar directory (default: simulated)");
  g->add_option("--scenes", grid.scene_dir, "test scene directory with manifest.json (default: simulated)");
  grid.model.add(g);

  SelectCmd select;
  auto* s = app.add_subcommand("select", "rank grid rows and keep the best");
  s->add_option("--in", select.in, "grid.json from the grid command");
  s->add_option("--keep", select.keep, "number of configurations to keep");

  ReplayCmd replay;
  auto* r = app.add_subcommand("replay", "replay a scripted session against the simulated robot");
  r->add_option("--script", replay.script, "scenario JSON, builtin:transitions or builtin:backtrack");
  r->add_option("--out", replay.out, "output directory");
  r->add_option("--decimation", replay.decimation, "keep every n-th telemetry row");
  r->add_option("--prompt-config", replay.config, "override the script's prompt configuration");
  r->add_option("--exemplars", replay.exemplar_dir, "few-shot exemplar directory (default: simulated)");
  replay.model.add(r);

  ReportCmd rep;
  auto* p = app.add_subcommand("report", "re-emit a grid table or telemetry CSV");
  p->add_option("--in", rep.in, "grid.json or telemetry.csv")->required();
  p->add_option("--format", rep.format, "csv, markdown or plot-data");
  p->add_option("--out", rep.out, "output file (directory for telemetry plot data); stdout when omitted");
  p->add_option("--decimation", rep.decimation, "keep every n-th telemetry row");

  ServeCmd serve;
  auto* v = app.add_subcommand("serve", "run the HTTP/WebSocket/UDP backend");
  v->add_option("--config", serve.config, "backend config JSON");

  ExemplarsCmd ex;
  auto* e = app.add_subcommand("exemplars", "write simulated exemplars and test scenes");
  e->add_option("--out", ex.out, "output directory");
  e->add_option("--per-phase", ex.per_phase, "test scenes per phase")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? 0 : kExitConfig;
  }

  try {
    if (*g) return grid.run();
    if (*s) return select.run();
    if (*r) return replay.run();
    if (*p) return rep.run();
    if (*v) return serve.run();
    if (*e) return ex.run();
  } catch (const Error& err) {
    std::cerr << "error (" << to_string(err.kind()) << "): " << err.what() << '\n';
    // configuration problems (including unreadable inputs) are the caller's to fix
    return err.kind() == ErrorKind::Configuration || err.kind() == ErrorKind::Io ? kExitConfig : kExitFailure;
  }
  return 0;
}
