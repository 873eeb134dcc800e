#include "teleimp/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "teleimp/error.hpp"
#include "teleimp/response.hpp"

namespace teleimp::vlm {

using nlohmann::json;

std::string_view to_string(Role r) {
  switch (r) {
    case Role::Role1: return "Role1";
    case Role::Role2: return "Role2";
    case Role::Role3: return "Role3";
  }
  return "?";
}

std::string_view to_string(Priors p) {
  switch (p) {
    case Priors::None: return "None";
    case Priors::Ideal: return "Ideal";
    case Priors::Lab: return "Lab";
  }
  return "?";
}

std::string_view to_string(Detail d) { return d == Detail::Low ? "Low" : "High"; }

namespace {

template <class E, std::size_t N>
std::optional<E> parse_enum(std::string_view text, const std::array<E, N>& all) {
  for (E e : all) {
    const auto name = to_string(e);
    if (name.size() != text.size()) continue;
    bool same = true;
    for (std::size_t i = 0; i < name.size(); ++i)
      same &= std::tolower(static_cast<unsigned char>(name[i])) == std::tolower(static_cast<unsigned char>(text[i]));
    if (same) return e;
  }
  return std::nullopt;
}

}  // namespace

std::optional<Role> parse_role(std::string_view text) { return parse_enum(text, kAllRoles); }
std::optional<Priors> parse_priors(std::string_view text) { return parse_enum(text, kAllPriors); }
std::optional<Detail> parse_detail(std::string_view text) { return parse_enum(text, kAllDetails); }

std::vector<PromptConfig> all_configs() {
  std::vector<PromptConfig> out;
  for (Role r : kAllRoles)
    for (Priors p : kAllPriors)
      for (Detail d : kAllDetails) out.push_back({r, p, d});
  return out;
}

std::string to_string(const PromptConfig& c) {
  return std::string(to_string(c.role)) + "/" + std::string(to_string(c.priors)) + "/" +
         std::string(to_string(c.detail));
}

std::optional<PromptConfig> parse_config(std::string_view text) {
  const auto a = text.find('/');
  if (a == std::string_view::npos) return std::nullopt;
  const auto b = text.find('/', a + 1);
  if (b == std::string_view::npos) return std::nullopt;
  auto r = parse_role(text.substr(0, a));
  auto p = parse_priors(text.substr(a + 1, b - a - 1));
  auto d = parse_detail(text.substr(b + 1));
  if (!r || !p || !d) return std::nullopt;
  return PromptConfig{*r, *p, *d};
}

PreparedImage prepare_image(const Image& image, Detail detail) {
  if (image.empty() || image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3)
    throw Error(ErrorKind::Image, "image is empty or has inconsistent pixel data");
  if (detail == Detail::High) return {image, detail};
  if (image.width == kLowDetailSide && image.height == kLowDetailSide) return {image, detail};
  const int longest = std::max(image.width, image.height);
  Image scaled = image;
  if (longest > kLowDetailSide) {
    const double f = static_cast<double>(kLowDetailSide) / longest;
    const int w = std::max(1, static_cast<int>(std::lround(image.width * f)));
    const int h = std::max(1, static_cast<int>(std::lround(image.height * f)));
    scaled = resize_area(image, w, h);
  }
  return {pad_to(scaled, kLowDetailSide, kLowDetailSide), detail};
}

std::size_t PromptPayload::image_count() const {
  std::size_t n = 0;
  for (const auto& t : turns) n += t.image_ref.has_value();
  return n;
}

namespace {

constexpr std::string_view kTaskSection =
    "You are a stiffness matrix generator for a teleoperated robot. Read the operator's request and "
    "the most recent image, where a red circle marks where the operator is looking, and produce the "
    "3x3 translational stiffness matrix the robot should use next.\n";

constexpr std::string_view kFormatSection =
    "Response format: exactly one line starting with STIFFNESS=[[a,b,c],[d,e,f],[g,h,i]] giving the "
    "matrix row by row in N/m (symmetric), followed by one short confirmation sentence for the operator.\n";

constexpr std::string_view kHistorySection =
    "You may use earlier turns of this conversation, including example image and matrix pairs and the "
    "operator's previous commands, as reference.\n";

constexpr std::string_view kPhysicsSection =
    "Task physics: the robot is impedance controlled and behaves like a virtual spring pulling a peg "
    "toward the commanded position. The peg slides in a groove. A stiff spring along the groove "
    "overcomes friction; a soft spring across the groove lets the walls guide the peg with low "
    "contact force.\n"
    "Procedure: find the groove section inside the red circle, determine its direction, then build "
    "the matrix for that direction.\n"
    "Camera frame: x points from left to right, y points away from the camera, z points up. Express "
    "the matrix in this frame.\n"
    "Values: use 250 N/m along the groove direction and 100 N/m in the orthogonal directions.\n";

constexpr std::string_view kLabelSection =
    "Reference matrices for the groove sections:\n"
    "- entrance, vertical drop along z: diag(100, 100, 250)\n"
    "- groove along the y-axis (away from the camera): diag(100, 250, 100)\n"
    "- groove along the x-axis (left to right): diag(250, 100, 100)\n"
    "- slant rising at 45 degrees in the y-z plane: [[100,0,0],[0,175,75],[0,75,175]]\n";

}  // namespace

std::string system_text_for(Role role) {
  std::string text;
  text += kTaskSection;
  text += kFormatSection;
  text += kHistorySection;
  if (role == Role::Role1) return text;
  text += kPhysicsSection;
  if (role == Role::Role2) return text;
  text += kLabelSection;
  return text;
}

// ---- exemplars ----

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

json matrix_json(const StiffnessMatrix& k) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({k(r, 0), k(r, 1), k(r, 2)});
  return rows;
}

Mat3 matrix_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::Configuration, "matrix must be 3 rows");
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || row.size() != 3) throw Error(ErrorKind::Configuration, "matrix row must have 3 entries");
    for (int c = 0; c < 3; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

}  // namespace

void ExemplarStore::add(Exemplar e) {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Exemplar& x) {
    return x.environment == e.environment && x.phase == e.phase;
  });
  if (it != entries_.end())
    *it = std::move(e);
  else
    entries_.push_back(std::move(e));
}

const Exemplar* ExemplarStore::find(scene::Environment env, TaskPhase phase) const {
  for (const auto& e : entries_)
    if (e.environment == env && e.phase == phase) return &e;
  return nullptr;
}

ExemplarStore ExemplarStore::load(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorKind::Configuration, "missing exemplar manifest " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Configuration, manifest_path.string() + ": " + e.what());
  }
  ExemplarStore store;
  try {
    for (const auto& item : manifest.at("exemplars")) {
      const auto env = scene::parse_environment(item.at("environment").get<std::string>());
      const auto phase = parse_phase(item.at("phase").get<std::string>());
      if (!env || !phase) throw Error(ErrorKind::Configuration, "bad environment or phase in " + manifest_path.string());
      Exemplar e{*env, *phase, StiffnessMatrix(matrix_from_json(item.at("matrix"))),
                 item.at("file").get<std::string>(), nullptr};
      e.image = std::make_shared<const Image>(load_png((dir / e.file).string()));
      store.add(std::move(e));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Configuration, manifest_path.string() + ": " + e.what());
  }
  return store;
}

void ExemplarStore::save(const std::filesystem::path& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  json items = json::array();
  for (const auto& e : entries_) {
    if (e.image) save_png(*e.image, (dir / e.file).string());
    items.push_back({{"file", e.file},
                     {"environment", scene::to_string(e.environment)},
                     {"phase", to_string(e.phase)},
                     {"matrix", matrix_json(e.target)}});
  }
  std::ofstream out(dir / "manifest.json");
  out << json{{"exemplars", items}}.dump(2) << "\n";
  if (!out) throw Error(ErrorKind::Io, "cannot write " + (dir / "manifest.json").string());
}

ExemplarStore ExemplarStore::simulated(const sim::GrooveGeometry& geom) {
  ExemplarStore store;
  for (auto env : {scene::Environment::Ideal, scene::Environment::Lab}) {
    for (TaskPhase phase : kAllPhases) {
      scene::CameraView view;
      view.target = scene::phase_view_target(geom, phase, 0.5);
      view.environment = env;
      view.width = 960;
      view.height = 540;
      // the lab camera sits further back
      view.field_of_view = env == scene::Environment::Ideal ? 0.12 : 0.16;
      view.seed = 1000 + static_cast<std::uint64_t>(phase);
      Image img = render_scene(geom, view);
      const auto [u, v] = scene::project(view, view.target);
      draw_ring(img, u, v, 0.02 * img.width, 3.0, {255, 0, 0});
      store.add({env, phase, phase_target_stiffness(phase),
                 lower(scene::to_string(env)) + "_" + lower(to_string(phase)) + ".png",
                 std::make_shared<const Image>(std::move(img))});
    }
  }
  return store;
}

std::vector<ConversationTurn> build_priors(Priors condition, const ExemplarStore& store) {
  if (condition == Priors::None) return {};
  const auto env = condition == Priors::Ideal ? scene::Environment::Ideal : scene::Environment::Lab;
  std::vector<ConversationTurn> turns;
  for (TaskPhase phase : kAllPhases) {
    const Exemplar* e = store.find(env, phase);
    if (!e)
      throw Error(ErrorKind::Configuration, "no exemplar for environment " + std::string(scene::to_string(env)) +
                                                " phase " + std::string(to_string(phase)));
    turns.push_back({Author::Operator, std::string(kStandardQuestion), "exemplars/" + e->file, 0.0, e->image});
    turns.push_back({Author::Model, format_stiffness_response(e->target, phase_confirmation(phase)), std::nullopt,
                     0.0, nullptr});
  }
  return turns;
}

PromptPayload build_prompt(const PromptConfig& config, const std::vector<ConversationTurn>& history,
                           const GazeSnapshot* snapshot, std::string_view utterance,
                           const ExemplarStore& exemplars, double timestamp) {
  if (utterance.empty()) throw Error(ErrorKind::Configuration, "utterance must be non-empty");
  PromptPayload p;
  p.config = config;
  p.detail = config.detail;
  p.system_text = system_text_for(config.role);
  p.turns = build_priors(config.priors, exemplars);
  p.prior_count = p.turns.size();

  const std::size_t keep = std::min(history.size(), kHistoryCap - 1);
  p.turns.insert(p.turns.end(), history.end() - static_cast<std::ptrdiff_t>(keep), history.end());

  ConversationTurn final_turn{Author::Operator, std::string(utterance), std::nullopt, timestamp, nullptr};
  if (snapshot) {
    p.final_image = prepare_image(snapshot->image, config.detail);
    p.scene_phase = snapshot->scene_phase;
    final_turn.image_ref = snapshot->url;
  }
  p.turns.push_back(std::move(final_turn));
  return p;
}

// ---- token estimate ----

std::size_t image_tokens(int width, int height, Detail detail) {
  if (detail == Detail::Low) return 85;
  double w = width, h = height;
  if (std::max(w, h) > 2048) {
    const double f = 2048 / std::max(w, h);
    w *= f;
    h *= f;
  }
  if (std::min(w, h) > 768) {
    const double f = 768 / std::min(w, h);
    w *= f;
    h *= f;
  }
  const auto tiles = static_cast<std::size_t>(std::ceil(w / 512) * std::ceil(h / 512));
  return 85 + 170 * tiles;
}

std::size_t text_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      if (!in_word) ++n;
      in_word = true;
    } else {
      in_word = false;
      if (!std::isspace(c)) ++n;
    }
  }
  return n;
}

std::size_t estimate_tokens(const PromptPayload& payload) {
  std::size_t n = text_tokens(payload.system_text);
  for (std::size_t i = 0; i < payload.turns.size(); ++i) {
    const auto& t = payload.turns[i];
    n += text_tokens(t.text);
    if (!t.image_ref) continue;
    const bool is_final = i + 1 == payload.turns.size();
    if (is_final && payload.final_image)
      n += image_tokens(payload.final_image->image.width, payload.final_image->image.height, payload.detail);
    else if (t.image)
      n += image_tokens(t.image->width, t.image->height, payload.detail);
    else
      n += image_tokens(kLowDetailSide, kLowDetailSide, payload.detail);
  }
  return n;
}

}  // namespace teleimp::vlm
