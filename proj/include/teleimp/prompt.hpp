#pragma once

// Prompt construction for the stiffness-generating vision-language model:
// system roles, few-shot priors, image detail handling, history capping.

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "teleimp/groove_sim.hpp"
#include "teleimp/image.hpp"
#include "teleimp/scene.hpp"
#include "teleimp/stiffness.hpp"

namespace teleimp::vlm {

enum class Role { Role1, Role2, Role3 };
enum class Priors { None, Ideal, Lab };
enum class Detail { Low, High };

inline constexpr std::array kAllRoles{Role::Role1, Role::Role2, Role::Role3};
inline constexpr std::array kAllPriors{Priors::None, Priors::Ideal, Priors::Lab};
inline constexpr std::array kAllDetails{Detail::Low, Detail::High};

std::string_view to_string(Role r);
std::string_view to_string(Priors p);
std::string_view to_string(Detail d);
std::optional<Role> parse_role(std::string_view text);
std::optional<Priors> parse_priors(std::string_view text);
std::optional<Detail> parse_detail(std::string_view text);

struct PromptConfig {
  Role role = Role::Role3;
  Priors priors = Priors::Lab;
  Detail detail = Detail::High;
  auto operator<=>(const PromptConfig&) const = default;
};

/// All 18 combinations, role-major then priors then detail.
std::vector<PromptConfig> all_configs();
/// "Role3/Lab/High"
std::string to_string(const PromptConfig& c);
std::optional<PromptConfig> parse_config(std::string_view text);

// Live history cap in turns (operator and model turns count one each).
inline constexpr std::size_t kHistoryCap = 10;
inline constexpr int kLowDetailSide = 512;
inline constexpr std::string_view kStandardQuestion = "What is the stiffness matrix for this phase?";

enum class Author { Operator, Model };

struct ConversationTurn {
  Author author = Author::Operator;
  std::string text;
  std::optional<std::string> image_ref;  // operator turns only
  double timestamp = 0.0;
  std::shared_ptr<const Image> image;    // pixels behind image_ref, when held locally
};

struct GazeSnapshot {
  Image image;
  double u = 0.0, v = 0.0;  // gaze pixel
  bool overlay_applied = false;
  std::string id;
  std::string url;
  std::optional<TaskPhase> scene_phase;
};

struct PreparedImage {
  Image image;
  Detail detail = Detail::High;
};

/// Low: longest side down to 512 (aspect kept), then centered on a 512x512
/// canvas. High: untouched. Throws Error{Image} on empty input.
PreparedImage prepare_image(const Image& image, Detail detail);

struct PromptPayload {
  PromptConfig config;
  std::string system_text;
  std::vector<ConversationTurn> turns;  // priors, trimmed history, final operator turn
  std::size_t prior_count = 0;
  std::optional<PreparedImage> final_image;
  Detail detail = Detail::High;
  std::optional<TaskPhase> scene_phase;  // simulated-scene label, consumed by the mock

  std::size_t live_history_length() const { return turns.size() - prior_count; }
  std::size_t image_count() const;
};

std::string system_text_for(Role role);

struct Exemplar {
  scene::Environment environment;
  TaskPhase phase;
  StiffnessMatrix target;
  std::string file;  // relative to the store directory
  std::shared_ptr<const Image> image;
};

/// Few-shot exemplars, one per (environment, phase). On disk: a directory
/// of PNGs plus manifest.json listing file, environment, phase and matrix.
class ExemplarStore {
 public:
  static ExemplarStore load(const std::filesystem::path& dir);
  /// Rendered from the simulated scene, one frame per phase and environment.
  static ExemplarStore simulated(const sim::GrooveGeometry& geom);

  void save(const std::filesystem::path& dir) const;
  void add(Exemplar e);
  const Exemplar* find(scene::Environment env, TaskPhase phase) const;
  const std::vector<Exemplar>& entries() const { return entries_; }

 private:
  std::vector<Exemplar> entries_;
};

/// None -> []; Ideal/Lab -> question+image / answer pairs in phase order.
/// Throws Error{Configuration} naming the missing environment and phase.
std::vector<ConversationTurn> build_priors(Priors condition, const ExemplarStore& store);

/// system text + priors + last (kHistoryCap - 1) history turns + the new
/// operator turn, so the live part never exceeds kHistoryCap.
PromptPayload build_prompt(const PromptConfig& config, const std::vector<ConversationTurn>& history,
                           const GazeSnapshot* snapshot, std::string_view utterance,
                           const ExemplarStore& exemplars, double timestamp = 0.0);

/// Text pieces (words and punctuation marks) plus per-image cost: 85 for low
/// detail, 85 + 170 per 512 px tile for high detail.
std::size_t image_tokens(int width, int height, Detail detail);
std::size_t text_tokens(std::string_view text);
std::size_t estimate_tokens(const PromptPayload& payload);

}  // namespace teleimp::vlm
