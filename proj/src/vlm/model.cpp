#include "teleimp/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <set>

#include "httplib.h"

#include "teleimp/error.hpp"
#include "teleimp/response.hpp"

namespace teleimp::vlm {

using nlohmann::json;

Confusion identity_confusion() {
  Confusion c{};
  for (std::size_t i = 0; i < 4; ++i) c[i][i] = 1.0;
  return c;
}

void validate_confusion(const Confusion& c) {
  for (std::size_t i = 0; i < 4; ++i) {
    double sum = 0;
    for (double p : c[i]) {
      if (!(p >= 0.0) || !std::isfinite(p))
        throw Error(ErrorKind::Configuration, "confusion row " + std::string(to_string(kAllPhases[i])) +
                                                  " has a negative or non-finite entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw Error(ErrorKind::Configuration, "confusion row " + std::string(to_string(kAllPhases[i])) +
                                                " sums to " + format_number(sum));
  }
}

TaskPhase sample_phase(const ConfusionRow& row, double u) {
  double acc = 0;
  std::size_t last = 0;
  for (std::size_t j = 0; j < 4; ++j) {
    if (row[j] <= 0) continue;
    last = j;
    acc += row[j];
    if (u < acc) return kAllPhases[j];
  }
  return kAllPhases[last];  // u at the top edge or rounding in the sum
}

double seeded_uniform(std::uint64_t seed) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return static_cast<double>(z >> 11) * 0x1.0p-53;
}

std::string mock_model_at(TaskPhase scene_phase, const Confusion& confusion, double u) {
  validate_confusion(confusion);
  const TaskPhase out = sample_phase(confusion[static_cast<std::size_t>(scene_phase)], u);
  return format_stiffness_response(phase_target_stiffness(out), phase_confirmation(out));
}

std::string mock_model(TaskPhase scene_phase, const Confusion& confusion, std::uint64_t seed) {
  return mock_model_at(scene_phase, confusion, seeded_uniform(seed));
}

const Confusion& ConfusionSet::for_config(const PromptConfig& c) const {
  auto it = per_config.find(c);
  return it == per_config.end() ? fallback : it->second;
}

namespace {

Confusion confusion_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::Configuration, "confusion table must be an object");
  Confusion c = identity_confusion();
  for (const auto& [truth, row] : j.items()) {
    const auto tp = parse_phase(truth);
    if (!tp || !row.is_object()) throw Error(ErrorKind::Configuration, "bad confusion row '" + truth + "'");
    ConfusionRow r{};
    for (const auto& [pred, p] : row.items()) {
      const auto pp = parse_phase(pred);
      if (!pp || !p.is_number()) throw Error(ErrorKind::Configuration, "bad confusion entry '" + truth + "." + pred + "'");
      r[static_cast<std::size_t>(*pp)] = p.get<double>();
    }
    c[static_cast<std::size_t>(*tp)] = r;
  }
  validate_confusion(c);
  return c;
}

}  // namespace

ConfusionSet ConfusionSet::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::Configuration, "confusion file must be an object");
  ConfusionSet set;
  for (const auto& [key, table] : j.items()) {
    if (key == "default") {
      set.fallback = confusion_from_json(table);
      continue;
    }
    const auto cfg = parse_config(key);
    if (!cfg) throw Error(ErrorKind::Configuration, "unknown prompt config '" + key + "'");
    set.per_config[*cfg] = confusion_from_json(table);
  }
  return set;
}

// ---- keyword intents ----

namespace {

std::set<std::string> words_of(std::string_view text) {
  std::set<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || ch == '-') {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.insert(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.insert(cur);
  return out;
}

bool any_of_words(const std::set<std::string>& words, std::initializer_list<std::string_view> keys) {
  for (auto k : keys)
    if (words.count(std::string(k))) return true;
  return false;
}

}  // namespace

std::optional<TaskPhase> phase_from_utterance(std::string_view text) {
  const auto w = words_of(text);
  if (any_of_words(w, {"slant", "slanted", "diagonal", "45", "yz", "y-z", "incline"})) return TaskPhase::YZSlant;
  if (any_of_words(w, {"enter", "entrance", "insert", "insertion", "vertical", "z", "z-axis"})) return TaskPhase::Entrance;
  if (any_of_words(w, {"y", "y-axis"})) return TaskPhase::YTraverse;
  if (any_of_words(w, {"x", "x-axis"})) return TaskPhase::XTraverse;
  return std::nullopt;
}

bool is_backtrack(std::string_view text) {
  const auto w = words_of(text);
  return any_of_words(w, {"backtrack", "backtracking", "reverse", "retrace"});
}

// ---- mock client ----

MockModelClient::MockModelClient(ConfusionSet confusions) : confusions_(std::move(confusions)) {
  validate_confusion(confusions_.fallback);
  for (const auto& [cfg, c] : confusions_.per_config) validate_confusion(c);
}

namespace {

std::optional<StiffnessMatrix> matrix_of(const ConversationTurn& t) {
  try {
    return parse_stiffness_response(t.text).matrix;
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::string reply_for(const StiffnessMatrix& k, std::string_view prefix) {
  const auto phase = classify_stiffness(k, kDefaultClassifyTol);
  std::string conf(prefix);
  conf += phase ? std::string(phase_confirmation(*phase)) : "Restoring an earlier stiffness.";
  return format_stiffness_response(k, conf);
}

std::string backtrack_reply(const PromptPayload& p) {
  const std::size_t begin = p.prior_count;
  const std::size_t end = p.turns.size() - 1;  // the current request
  std::vector<StiffnessMatrix> forward;
  for (std::size_t i = begin; i < end; ++i) {
    const auto& t = p.turns[i];
    if (t.author != Author::Model) continue;
    // a reply whose request fell off the history is treated as forward
    const bool answers_backtrack =
        i > begin && p.turns[i - 1].author == Author::Operator && is_backtrack(p.turns[i - 1].text);
    if (answers_backtrack) continue;
    if (auto k = matrix_of(t)) forward.push_back(*k);
  }
  if (forward.empty()) return "There is no earlier stiffness in the conversation to return to.";
  std::size_t k = 1;
  for (std::size_t i = end; i-- > begin;) {
    const auto& t = p.turns[i];
    if (t.author != Author::Operator) continue;
    if (!is_backtrack(t.text)) break;
    ++k;
  }
  const std::size_t idx = k >= forward.size() ? 0 : forward.size() - k;
  return reply_for(forward[idx], "Backtracking. ");
}

std::optional<TaskPhase> last_answered_phase(const PromptPayload& p) {
  for (std::size_t i = p.turns.size() - 1; i-- > p.prior_count;) {
    if (p.turns[i].author != Author::Model) continue;
    if (auto k = matrix_of(p.turns[i])) return classify_stiffness(*k, kDefaultClassifyTol);
  }
  return std::nullopt;
}

}  // namespace

std::string MockModelClient::complete(const PromptPayload& payload, const CallOptions& options) {
  ++calls_;
  if (payload.turns.empty()) throw Error(ErrorKind::Configuration, "empty payload");
  const std::string& text = payload.turns.back().text;

  if (is_backtrack(text)) return backtrack_reply(payload);

  if (payload.scene_phase) {
    const double u = options.quantile ? *options.quantile : seeded_uniform(options.seed);
    return mock_model_at(*payload.scene_phase, confusions_.for_config(payload.config), u);
  }
  if (auto phase = phase_from_utterance(text))
    return format_stiffness_response(phase_target_stiffness(*phase), phase_confirmation(*phase));

  const auto w = words_of(text);
  if (any_of_words(w, {"groove", "next", "continue"})) {
    const auto last = last_answered_phase(payload);
    TaskPhase next = TaskPhase::Entrance;
    if (last && *last != TaskPhase::YZSlant) next = kAllPhases[static_cast<std::size_t>(*last) + 1];
    else if (last) next = *last;
    return format_stiffness_response(phase_target_stiffness(next), phase_confirmation(next));
  }
  return "I cannot determine the phase from this request. Please name the axis or capture a snapshot.";
}

// ---- live client ----

LiveConfig LiveConfig::from_json(const json& j) {
  LiveConfig c;
  try {
    c.endpoint = j.value("endpoint", c.endpoint);
    c.model = j.value("model", c.model);
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    c.credential_env = j.value("credential_env", c.credential_env);
    c.public_base_url = j.value("public_base_url", c.public_base_url);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    if (j.contains("request_budget")) c.request_budget = j.at("request_budget").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Configuration, std::string("model config: ") + e.what());
  }
  if (!(c.timeout_s > 0)) throw Error(ErrorKind::Configuration, "model timeout must be positive");
  return c;
}

LiveModelClient::LiveModelClient(LiveConfig config) : config_(std::move(config)) {}

namespace {

bool is_absolute_url(std::string_view s) {
  return s.rfind("http://", 0) == 0 || s.rfind("https://", 0) == 0 || s.rfind("data:", 0) == 0;
}

std::string data_url(const Image& img) {
  const auto png = encode_png(img);
  return "data:image/png;base64," + httplib::detail::base64_encode(std::string(png.begin(), png.end()));
}

}  // namespace

json LiveModelClient::request_body(const PromptPayload& p) const {
  const std::string detail = p.detail == Detail::Low ? "low" : "high";
  json messages = json::array();
  messages.push_back({{"role", "system"}, {"content", p.system_text}});
  for (std::size_t i = 0; i < p.turns.size(); ++i) {
    const auto& t = p.turns[i];
    if (t.author == Author::Model) {
      messages.push_back({{"role", "assistant"}, {"content", t.text}});
      continue;
    }
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", t.text}});
    if (t.image_ref) {
      std::string url;
      const bool is_final = i + 1 == p.turns.size();
      if (is_absolute_url(*t.image_ref)) {
        url = *t.image_ref;
      } else if (!config_.public_base_url.empty() && t.image_ref->rfind('/', 0) == 0) {
        url = config_.public_base_url + *t.image_ref;
      } else if (is_final && p.final_image) {
        url = data_url(p.final_image->image);
      } else if (t.image) {
        url = data_url(prepare_image(*t.image, p.detail).image);
      } else {
        throw Error(ErrorKind::Configuration, "image " + *t.image_ref + " has no reachable URL");
      }
      content.push_back({{"type", "image_url"}, {"image_url", {{"url", url}, {"detail", detail}}}});
    }
    messages.push_back({{"role", "user"}, {"content", content}});
  }
  return {{"model", config_.model}, {"messages", messages}, {"max_tokens", config_.max_tokens}, {"temperature", 0}};
}

std::string LiveModelClient::complete(const PromptPayload& payload, const CallOptions&) {
  const char* key = std::getenv(config_.credential_env.c_str());
  if (!key || !*key)
    throw Error(ErrorKind::Configuration, "credential environment variable " + config_.credential_env + " is not set");

  const auto scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorKind::Configuration, "endpoint needs a scheme: " + config_.endpoint);
  const auto path_start = config_.endpoint.find('/', scheme_end + 3);
  const std::string origin = config_.endpoint.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);

  httplib::Client cli(origin);
  if (!cli.is_valid()) throw Error(ErrorKind::Configuration, "unsupported endpoint " + config_.endpoint);
  const auto secs = static_cast<time_t>(config_.timeout_s);
  const auto usecs = static_cast<time_t>((config_.timeout_s - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  const httplib::Headers headers{{"Authorization", std::string("Bearer ") + key}};
  const std::string body = request_body(payload).dump();

  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    if (config_.request_budget && requests_.load() >= *config_.request_budget)
      throw Error(ErrorKind::ModelUnavailable, "request budget exhausted");
    ++requests_;
    auto res = cli.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 400 && res->status < 500)
      throw Error(ErrorKind::Configuration, "model endpoint returned " + std::to_string(res->status) + ": " + res->body);
    if (res->status >= 500) {
      last_error = "status " + std::to_string(res->status);
      continue;
    }
    try {
      const auto j = json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ModelUnavailable, std::string("malformed completion: ") + e.what());
    }
  }
  throw Error(ErrorKind::ModelUnavailable, "model endpoint unreachable after retry: " + last_error);
}

}  // namespace teleimp::vlm
