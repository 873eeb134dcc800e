#pragma once

// Model clients behind one seam: a deterministic mock driven by confusion
// tables and keyword intents, and a live chat-completion HTTP client.

#include <array>
#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "json.hpp"

#include "teleimp/prompt.hpp"

namespace teleimp::vlm {

struct CallOptions {
  std::uint64_t seed = 0;
  // Overrides the seeded draw with a fixed point of the inverse CDF; the grid
  // uses this for stratified sampling.
  std::optional<double> quantile;
};

class ModelClient {
 public:
  virtual ~ModelClient() = default;
  /// Throws Error{ModelUnavailable} or Error{Configuration}.
  virtual std::string complete(const PromptPayload& payload, const CallOptions& options) = 0;
  /// True when concurrent complete() calls are allowed.
  virtual bool parallel_safe() const { return false; }
};

inline std::string call_model(const PromptPayload& payload, ModelClient& client, const CallOptions& options = {}) {
  return client.complete(payload, options);
}

// confusion[true_phase][predicted_phase]
using ConfusionRow = std::array<double, 4>;
using Confusion = std::array<ConfusionRow, 4>;

Confusion identity_confusion();
/// Throws Error{Configuration} unless rows are non-negative and sum to 1 within 1e-9.
void validate_confusion(const Confusion& c);
/// Inverse-CDF draw; u in [0, 1).
TaskPhase sample_phase(const ConfusionRow& row, double u);
/// Uniform [0, 1) from a 64-bit seed (splitmix64 finalizer, 53-bit mantissa).
double seeded_uniform(std::uint64_t seed);

/// Target matrix of a phase drawn from confusion[scene_phase], in the response format.
std::string mock_model(TaskPhase scene_phase, const Confusion& confusion, std::uint64_t seed);
std::string mock_model_at(TaskPhase scene_phase, const Confusion& confusion, double u);

/// Per-config confusion tables; configs without an entry use `fallback`.
/// JSON: {"default": {...}, "Role3/Lab/High": {"YZSlant": {"YTraverse": 1.0}}}
/// where each row maps predicted phase to probability; omitted rows are identity.
struct ConfusionSet {
  Confusion fallback = identity_confusion();
  std::map<PromptConfig, Confusion> per_config;

  const Confusion& for_config(const PromptConfig& c) const;
  static ConfusionSet from_json(const nlohmann::json& j);
};

/// Keyword intent of a text-only command, e.g. "along the y-axis".
std::optional<TaskPhase> phase_from_utterance(std::string_view text);
bool is_backtrack(std::string_view text);

/// Mock behaviour, in order:
///  1. backtrack request: replays the matrices of earlier forward turns in
///     reverse, one per consecutive backtrack turn;
///  2. labelled scene: confusion-table draw for the scene's phase;
///  3. keyword intent from the utterance;
///  4. "groove axis" / "next": the phase after the last answered one;
///  otherwise a reply without a matrix.
class MockModelClient : public ModelClient {
 public:
  explicit MockModelClient(ConfusionSet confusions = {});
  std::string complete(const PromptPayload& payload, const CallOptions& options) override;
  bool parallel_safe() const override { return true; }
  std::uint64_t calls() const { return calls_.load(); }

 private:
  ConfusionSet confusions_;
  std::atomic<std::uint64_t> calls_{0};
};

struct LiveConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4o";
  double timeout_s = 30.0;
  std::string credential_env = "TELEIMP_API_KEY";
  // Prefix for relative snapshot URLs; without it images are inlined as data URLs.
  std::string public_base_url;
  int max_tokens = 300;
  std::optional<std::uint64_t> request_budget;

  static LiveConfig from_json(const nlohmann::json& j);
};

class LiveModelClient : public ModelClient {
 public:
  explicit LiveModelClient(LiveConfig config);
  std::string complete(const PromptPayload& payload, const CallOptions& options) override;
  nlohmann::json request_body(const PromptPayload& payload) const;
  std::uint64_t requests_sent() const { return requests_.load(); }

 private:
  LiveConfig config_;
  std::atomic<std::uint64_t> requests_{0};
};

}  // namespace teleimp::vlm
