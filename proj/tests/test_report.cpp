#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "teleimp/error.hpp"
#include "teleimp/report.hpp"

using namespace teleimp;
using namespace teleimp::eval;

namespace {

const sim::GrooveGeometry& geom() {
  static const auto g = sim::build_canonical_groove();
  return g;
}

vlm::ConfusionSet calibrated() {
  std::ifstream in(std::string(TELEIMP_DATA_DIR) + "/confusion_calibrated.json");
  REQUIRE(in);
  return vlm::ConfusionSet::from_json(nlohmann::json::parse(in));
}

GridTable calibrated_table(std::vector<TrialResult>* trials = nullptr) {
  static const auto exemplars = vlm::ExemplarStore::simulated(geom());
  static const auto scenes = SceneStore::simulated(geom(), 2);
  vlm::MockModelClient client(calibrated());
  return run_grid(vlm::all_configs(), {}, client, exemplars, scenes, trials);
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("cell formatting") {
  CHECK(report::format_cell(make_cell(14, 15)) == "0.93 ± 0.06");
  CHECK(report::format_cell(make_cell(15, 15)) == "1.00 ± 0.00");
  CHECK(report::format_cell(make_cell(4, 15)) == "0.27 ± 0.11");
}

TEST_CASE("markdown table layout and reference rows") {
  const auto table = calibrated_table();
  const auto md = report::grid_markdown(table);
  const auto ls = lines(md);
  REQUIRE(ls.size() == 2 + 18);
  CHECK(ls[0] ==
        "| Role | Prior | Resolution | Entrance | Y-traverse | X-traverse | YZ Slant | Overall (With Slant) | "
        "Overall (No Slant) |");
  // three label columns and six accuracy columns
  CHECK(std::count(ls[2].begin(), ls[2].end(), '|') == 10);

  // calibrated rows reproduce the reference accuracy rows to two decimals
  const std::vector<std::string> reference = {
      "| Role 3 | Lab | High | 1.00 ± 0.00 | 0.93 ± 0.06 | 1.00 ± 0.00 | 0.00 ± 0.00 | 0.73 ± 0.06 | 0.98 ± 0.02 |",
      "| Role 1 | Lab | High | 1.00 ± 0.00 | 0.67 ± 0.12 | 0.93 ± 0.06 | 0.13 ± 0.09 | 0.68 ± 0.06 | 0.87 ± 0.05 |",
      "| Role 2 | Lab | High | 0.93 ± 0.06 | 0.67 ± 0.12 | 1.00 ± 0.00 | 0.07 ± 0.06 | 0.67 ± 0.06 | 0.87 ± 0.05 |",
      "| Role 3 | Ideal | High | 0.93 ± 0.06 | 0.67 ± 0.12 | 0.93 ± 0.06 | 0.00 ± 0.00 | 0.63 ± 0.06 | 0.84 ± 0.05 |",
      "| Role 1 | Lab | Low | 1.00 ± 0.00 | 0.27 ± 0.11 | 1.00 ± 0.00 | 0.00 ± 0.00 | 0.57 ± 0.06 | 0.76 ± 0.06 |",
      "| Role 2 | Lab | Low | 1.00 ± 0.00 | 0.00 ± 0.00 | 1.00 ± 0.00 | 0.00 ± 0.00 | 0.50 ± 0.06 | 0.67 ± 0.07 |",
      "| Role 3 | Lab | Low | 1.00 ± 0.00 | 0.00 ± 0.00 | 1.00 ± 0.00 | 0.00 ± 0.00 | 0.50 ± 0.06 | 0.67 ± 0.07 |",
      "| Role 1 | Ideal | High | 0.73 ± 0.11 | 0.40 ± 0.13 | 0.60 ± 0.13 | 0.00 ± 0.00 | 0.43 ± 0.06 | 0.58 ± 0.07 |",
  };
  for (const auto& row : reference) CHECK_MESSAGE(std::find(ls.begin(), ls.end(), row) != ls.end(), row);

  // the best calibrated configuration ranks first
  const auto top = rank_and_select(table, 9);
  CHECK(top.front() == vlm::PromptConfig{vlm::Role::Role3, vlm::Priors::Lab, vlm::Detail::High});
}

TEST_CASE("reports are byte-stable") {
  std::vector<TrialResult> trials;
  const auto a = calibrated_table(&trials);
  const auto b = calibrated_table();
  CHECK(report::grid_csv(a) == report::grid_csv(b));
  CHECK(report::grid_markdown(a) == report::grid_markdown(b));
  CHECK(report::grid_plot_data(a) == report::grid_plot_data(b));
  CHECK(lines(report::grid_plot_data(a)).size() == 1 + 18 * 6);
  CHECK(lines(report::grid_csv(a)).size() == 1 + 18);

  const auto j = report::grid_to_json(a, &trials);
  CHECK(j["trial_results"].size() == 18 * 4 * 15);
  CHECK(report::grid_from_json(nlohmann::json::parse(j.dump())) == a);
  CHECK_THROWS_AS(report::grid_from_json(nlohmann::json::parse(R"({"trials":1})")), Error);
}

TEST_CASE("telemetry panels") {
  vlm::MockModelClient model;
  static const auto exemplars = vlm::ExemplarStore::simulated(geom());
  const auto r = replay_scenario(stiffness_transition_scenario(geom()), geom(), model, exemplars);
  const auto panels = report::telemetry_panels(r.log, 10, &r.events);
  REQUIRE(panels.size() == 5);
  CHECK(panels[0].name == "reference.dat");
  CHECK(panels[1].name == "measured.dat");
  CHECK(panels[2].name == "forces.dat");
  CHECK(panels[3].name == "stiffness.dat");
  const auto rows = (r.log.samples.size() + 9) / 10;
  for (std::size_t i = 0; i < 4; ++i) CHECK(lines(panels[i].content).size() == 1 + rows);
  CHECK(lines(panels[4].content).size() == 1 + 4);
  const auto again = report::telemetry_panels(r.log, 10, &r.events);
  for (std::size_t i = 0; i < panels.size(); ++i) CHECK(panels[i].content == again[i].content);

  // CSV round trip keeps every series
  const auto back = report::telemetry_from_csv(r.log.to_csv(100));
  REQUIRE(back.samples.size() == (r.log.samples.size() + 99) / 100);
  const auto& s0 = r.log.samples[100];
  CHECK(back.samples[1].time == s0.time);
  CHECK(back.samples[1].position == s0.position);
  CHECK(back.samples[1].stiffness == s0.stiffness);
  CHECK_THROWS_AS(report::telemetry_from_csv("nope\n"), Error);
  CHECK_THROWS_AS(report::telemetry_from_csv(
                      "time,ref_x,ref_y,ref_z,x,y,z,vx,vy,vz,fx,fy,fz,k00,k01,k02,k10,k11,k12,k20,k21,k22\n1,2\n"),
                  Error);
}

TEST_CASE("file helpers surface the path") {
  const auto dir = std::filesystem::temp_directory_path() / "teleimp_report_io";
  report::write_file(dir / "sub" / "a.txt", "abc");
  CHECK(report::read_file(dir / "sub" / "a.txt") == "abc");
  try {
    report::read_file("/nonexistent/x.csv");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
    CHECK(std::string(e.what()).find("/nonexistent/x.csv") != std::string::npos);
  }
}
