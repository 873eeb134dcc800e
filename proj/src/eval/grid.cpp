#include "teleimp/grid.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <fstream>
#include <random>
#include <thread>

#include "json.hpp"
#include "teleimp/error.hpp"
#include "teleimp/response.hpp"
#include "teleimp/scene.hpp"

namespace teleimp::eval {

using nlohmann::json;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t config_index(const vlm::PromptConfig& c) {
  return static_cast<std::uint64_t>(c.role) * 6 + static_cast<std::uint64_t>(c.priors) * 2 +
         static_cast<std::uint64_t>(c.detail);
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Fisher-Yates with explicit arithmetic so the order is identical on every
// standard library.
std::vector<int> permutation(int n, std::uint64_t seed) {
  std::vector<int> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
  }
  return p;
}

}  // namespace

std::uint64_t trial_seed(std::uint64_t seed, const vlm::PromptConfig& config, TaskPhase phase, int trial) {
  return mix(mix(mix(seed, config_index(config)), static_cast<std::uint64_t>(phase)),
             static_cast<std::uint64_t>(trial));
}

// ---- scenes ----

SceneStore SceneStore::simulated(const sim::GrooveGeometry& geom, int per_phase) {
  if (per_phase < 1) throw Error(ErrorKind::Configuration, "need at least one scene per phase");
  SceneStore store;
  for (auto phase : kAllPhases) {
    for (int k = 0; k < per_phase; ++k) {
      // fractions 0.2..0.8, skipping the exemplars' 0.5
      double s = 0.2 + 0.6 * (k + 0.5) / per_phase;
      if (std::abs(s - 0.5) < 0.05) s += 0.07;
      scene::CameraView view;
      view.target = scene::phase_view_target(geom, phase, s);
      view.environment = scene::Environment::Lab;
      view.field_of_view = 0.14;
      view.seed = 1000 + 10 * static_cast<std::uint64_t>(phase) + static_cast<std::uint64_t>(k);
      Image img = scene::render_scene(geom, view);
      const double u = view.width / 2.0, v = view.height / 2.0;
      draw_ring(img, u, v, 0.02 * img.width, 3.0, {255, 0, 0});
      store.add({phase, std::make_shared<const Image>(std::move(img)), u, v,
                 "test_" + lower(to_string(phase)) + "_" + std::to_string(k) + ".png"});
    }
  }
  return store;
}

SceneStore SceneStore::load(const std::filesystem::path& dir) {
  const auto manifest = dir / "manifest.json";
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorKind::Configuration, "missing scene manifest " + manifest.string());
  SceneStore store;
  try {
    const json j = json::parse(in);
    for (const auto& e : j.at("scenes")) {
      const auto phase = parse_phase(e.at("phase").get<std::string>());
      if (!phase) throw Error(ErrorKind::Configuration, "unknown phase in " + manifest.string());
      const std::string file = e.at("file");
      auto img = std::make_shared<const Image>(load_png((dir / file).string()));
      const double u = e.value("u", img->width / 2.0), v = e.value("v", img->height / 2.0);
      store.add({*phase, std::move(img), u, v, file});
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::Configuration, manifest.string() + ": " + ex.what());
  }
  return store;
}

void SceneStore::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  json list = json::array();
  for (const auto& bucket : scenes_)
    for (const auto& s : bucket) {
      save_png(*s.image, (dir / s.file).string());
      list.push_back({{"phase", std::string(to_string(s.phase))}, {"file", s.file}, {"u", s.u}, {"v", s.v}});
    }
  std::ofstream out(dir / "manifest.json");
  out << json{{"scenes", list}}.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::Io, "cannot write " + (dir / "manifest.json").string());
}

void SceneStore::add(TestScene scene) {
  if (!scene.image || scene.image->empty()) throw Error(ErrorKind::Image, "test scene without pixels");
  scenes_[static_cast<std::size_t>(scene.phase)].push_back(std::move(scene));
}

const std::vector<TestScene>& SceneStore::for_phase(TaskPhase phase) const {
  const auto& v = scenes_[static_cast<std::size_t>(phase)];
  if (v.empty()) throw Error(ErrorKind::Configuration, "no test scenes for phase " + std::string(to_string(phase)));
  return v;
}

std::size_t SceneStore::size() const {
  std::size_t n = 0;
  for (const auto& b : scenes_) n += b.size();
  return n;
}

// ---- scoring ----

AccuracyCell make_cell(int correct, int n) {
  if (n <= 0 || correct < 0 || correct > n) throw Error(ErrorKind::Bounds, "accuracy cell needs 0 <= correct <= n, n > 0");
  AccuracyCell c;
  c.correct = correct;
  c.n = n;
  c.mean = static_cast<double>(correct) / n;
  c.spread = std::sqrt(c.mean * (1.0 - c.mean) / n);
  return c;
}

GridRow summarize(const vlm::PromptConfig& config, const std::vector<TrialResult>& trials) {
  std::array<int, 4> correct{}, n{};
  for (const auto& t : trials) {
    if (t.config != config) continue;
    const auto i = static_cast<std::size_t>(t.phase);
    ++n[i];
    if (t.correct) ++correct[i];
  }
  GridRow row;
  row.config = config;
  for (std::size_t i = 0; i < 4; ++i) {
    if (n[i] == 0) throw Error(ErrorKind::Configuration, "no trials for " + vlm::to_string(config) + " phase " +
                                                             std::string(to_string(kAllPhases[i])));
    row.phases[i] = make_cell(correct[i], n[i]);
  }
  auto overall = [&](std::size_t count) {
    int c = 0, total = 0;
    double mean = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      c += correct[i];
      total += n[i];
      mean += row.phases[i].mean;
    }
    AccuracyCell cell = make_cell(c, total);
    cell.mean = mean / static_cast<double>(count);
    return cell;
  };
  row.with_slant = overall(4);
  row.no_slant = overall(3);  // YZSlant is the last phase
  return row;
}

GridTable run_grid(const std::vector<vlm::PromptConfig>& configs, const GridOptions& options,
                   vlm::ModelClient& client, const vlm::ExemplarStore& exemplars, const SceneStore& scenes,
                   std::vector<TrialResult>* trials_out) {
  if (options.trials < 1) throw Error(ErrorKind::Configuration, "trials per cell must be >= 1");
  if (configs.empty()) throw Error(ErrorKind::Configuration, "no prompt configurations selected");
  for (auto phase : kAllPhases) (void)scenes.for_phase(phase);

  struct Job {
    vlm::PromptConfig config;
    TaskPhase phase;
    int trial;
    std::optional<double> quantile;
  };
  std::vector<Job> jobs;
  for (const auto& cfg : configs)
    for (auto phase : kAllPhases) {
      const auto cell_seed = mix(trial_seed(options.seed, cfg, phase, -1), 0x5eedULL);
      const auto perm = permutation(options.trials, cell_seed);
      for (int t = 0; t < options.trials; ++t) {
        std::optional<double> q;
        if (options.stratified) {
          const double jitter = vlm::seeded_uniform(mix(cell_seed, static_cast<std::uint64_t>(t)));
          q = (perm[static_cast<std::size_t>(t)] + jitter) / options.trials;
        }
        jobs.push_back({cfg, phase, t, q});
      }
    }

  // one snapshot per scene, shared read-only by every trial that uses it
  std::array<std::vector<vlm::GazeSnapshot>, 4> snapshots;
  for (auto phase : kAllPhases)
    for (const auto& scene : scenes.for_phase(phase)) {
      vlm::GazeSnapshot snap;
      snap.image = *scene.image;
      snap.u = scene.u;
      snap.v = scene.v;
      snap.overlay_applied = true;
      snap.id = scene.file;
      snap.url = "scenes/" + scene.file;
      snap.scene_phase = scene.phase;
      snapshots[static_cast<std::size_t>(phase)].push_back(std::move(snap));
    }

  std::vector<TrialResult> results(jobs.size());
  std::atomic<bool> aborted{false};
  std::mutex abort_mutex;
  std::optional<Error> abort_error;
  auto run_one = [&](std::size_t i) {
    const Job& job = jobs[i];
    TrialResult r;
    r.config = job.config;
    r.phase = job.phase;
    r.trial = job.trial;
    const auto& pool = snapshots[static_cast<std::size_t>(job.phase)];
    const auto& snap = pool[static_cast<std::size_t>(job.trial) % pool.size()];
    try {
      const auto payload = vlm::build_prompt(job.config, {}, &snap, vlm::kStandardQuestion, exemplars);
      const auto raw = vlm::call_model(payload, client,
                                       {trial_seed(options.seed, job.config, job.phase, job.trial), job.quantile});
      r.predicted = vlm::parse_stiffness_response(raw).matrix;
      r.correct = classify_stiffness(*r.predicted, options.tol) == job.phase;
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Configuration) {
        // setup problem (credential, exemplars), not a model answer: stop the run
        std::lock_guard lk(abort_mutex);
        if (!abort_error) abort_error = e;
        aborted = true;
        return;
      }
      r.error = std::string(to_string(e.kind())) + ": " + e.what();
    }
    results[i] = std::move(r);
  };

  unsigned workers = options.parallelism ? options.parallelism : std::max(1u, std::thread::hardware_concurrency());
  if (!client.parallel_safe()) workers = 1;
  workers = std::min<unsigned>(workers, static_cast<unsigned>(jobs.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs.size() && !aborted; ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size() && !aborted; i = next++) run_one(i);
      });
    pool.clear();
  }
  if (abort_error) throw *abort_error;

  GridTable table;
  table.trials = options.trials;
  table.seed = options.seed;
  table.tol = options.tol;
  for (const auto& cfg : configs) table.rows.push_back(summarize(cfg, results));
  if (trials_out) *trials_out = std::move(results);
  return table;
}

std::vector<vlm::PromptConfig> rank_and_select(const GridTable& table, std::size_t keep) {
  std::vector<const GridRow*> rows;
  for (const auto& r : table.rows) rows.push_back(&r);
  std::stable_sort(rows.begin(), rows.end(), [](const GridRow* a, const GridRow* b) {
    if (a->with_slant.mean != b->with_slant.mean) return a->with_slant.mean > b->with_slant.mean;
    if (a->no_slant.mean != b->no_slant.mean) return a->no_slant.mean > b->no_slant.mean;
    return a->config < b->config;  // PromptConfig order is the enumeration order
  });
  std::vector<vlm::PromptConfig> out;
  for (std::size_t i = 0; i < rows.size() && i < keep; ++i) out.push_back(rows[i]->config);
  return out;
}

}  // namespace teleimp::eval
