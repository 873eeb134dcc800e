#include "doctest.h"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include "oracles.hpp"
#include "teleimp/error.hpp"
#include "teleimp/model.hpp"
#include "teleimp/response.hpp"

// after Eigen: <resolv.h> defines a _res macro that clashes with Eigen internals
#include "httplib.h"

using namespace teleimp;
using namespace teleimp::vlm;

namespace {

const ExemplarStore& exemplars() {
  static const ExemplarStore store = ExemplarStore::simulated(sim::build_canonical_groove());
  return store;
}

GazeSnapshot make_snapshot(TaskPhase phase, int w = 640, int h = 360) {
  GazeSnapshot s;
  s.image = Image(w, h, {120, 120, 120});
  s.u = w / 2.0;
  s.v = h / 2.0;
  s.overlay_applied = true;
  s.id = "snap1";
  s.url = "/snapshots/snap1.png";
  s.scene_phase = phase;
  return s;
}

std::vector<ConversationTurn> chat(std::size_t n) {
  std::vector<ConversationTurn> h;
  for (std::size_t i = 0; i < n; ++i)
    h.push_back({i % 2 ? Author::Model : Author::Operator, "turn " + std::to_string(i), std::nullopt,
                 static_cast<double>(i), nullptr});
  return h;
}

void expect_kind(ErrorKind kind, auto&& fn) {
  try {
    fn();
    FAIL("expected error ", to_string(kind));
  } catch (const Error& e) {
    CHECK(e.kind() == kind);
  }
}

}  // namespace

TEST_CASE("config enumeration") {
  const auto all = all_configs();
  CHECK(all.size() == 18);
  for (const auto& c : all) CHECK(parse_config(to_string(c)) == c);
  CHECK(to_string(PromptConfig{Role::Role3, Priors::Lab, Detail::High}) == "Role3/Lab/High");
  CHECK_FALSE(parse_config("Role4/Lab/High").has_value());
}

TEST_CASE("system texts grow by whole sections") {
  const auto r1 = system_text_for(Role::Role1);
  const auto r2 = system_text_for(Role::Role2);
  const auto r3 = system_text_for(Role::Role3);
  CHECK(r1.find("STIFFNESS=[[") != std::string::npos);
  CHECK(r2.find("250") != std::string::npos);
  CHECK(r2.find("100") != std::string::npos);
  CHECK(r1.find("250") == std::string::npos);
  CHECK(r3.find("x-axis (left to right): diag(250, 100, 100)") != std::string::npos);
  CHECK(r2.rfind(r1, 0) == 0);
  CHECK(r3.rfind(r2, 0) == 0);
  CHECK(r1.size() < r2.size());
  CHECK(r2.size() < r3.size());
}

TEST_CASE("token count increases with the role on fixed inputs") {
  const auto snap = make_snapshot(TaskPhase::YTraverse);
  for (Priors pr : kAllPriors) {
    for (Detail d : kAllDetails) {
      std::size_t prev = 0;
      for (Role r : kAllRoles) {
        const auto p = build_prompt({r, pr, d}, chat(4), &snap, kStandardQuestion, exemplars());
        const auto n = estimate_tokens(p);
        CHECK(n > prev);
        prev = n;
      }
    }
  }
}

TEST_CASE("image token costs") {
  CHECK(image_tokens(4000, 3000, Detail::Low) == 85);
  // documented worked examples for the tiling rule
  CHECK(image_tokens(1024, 1024, Detail::High) == 765);
  CHECK(image_tokens(2048, 4096, Detail::High) == 1105);
  CHECK(image_tokens(512, 512, Detail::High) == 255);
  CHECK(text_tokens("What is the stiffness matrix for this phase?") == 9);
}

TEST_CASE("priors") {
  CHECK(build_priors(Priors::None, exemplars()).empty());
  const auto lab = build_priors(Priors::Lab, exemplars());
  REQUIRE(lab.size() == 8);
  std::size_t images = 0;
  for (std::size_t i = 0; i < lab.size(); ++i) {
    CHECK(lab[i].author == (i % 2 ? Author::Model : Author::Operator));
    images += lab[i].image_ref.has_value();
    if (lab[i].author == Author::Model) CHECK_FALSE(lab[i].image_ref.has_value());
  }
  CHECK(images == 4);

  const auto ideal = build_priors(Priors::Ideal, exemplars());
  for (std::size_t i = 0; i < 4; ++i) {
    const auto reply = parse_stiffness_response(ideal[2 * i + 1].text);
    CHECK(reply.matrix == phase_target_stiffness(kAllPhases[i]));
  }
}

TEST_CASE("missing exemplar names environment and phase") {
  ExemplarStore partial;
  for (const auto& e : exemplars().entries())
    if (!(e.environment == scene::Environment::Lab && e.phase == TaskPhase::XTraverse)) partial.add(e);
  try {
    build_priors(Priors::Lab, partial);
    FAIL("expected configuration error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Configuration);
    CHECK(std::string(e.what()).find("Lab") != std::string::npos);
    CHECK(std::string(e.what()).find("XTraverse") != std::string::npos);
  }
  CHECK_NOTHROW(build_priors(Priors::Ideal, partial));
}

TEST_CASE("exemplar store survives save and load") {
  const auto dir = std::filesystem::temp_directory_path() / ("teleimp_ex_" + std::to_string(::getpid()));
  exemplars().save(dir);
  const auto loaded = ExemplarStore::load(dir);
  REQUIRE(loaded.entries().size() == 8);
  for (const auto& e : exemplars().entries()) {
    const auto* l = loaded.find(e.environment, e.phase);
    REQUIRE(l);
    CHECK(l->target == e.target);
    CHECK(*l->image == *e.image);
  }
  std::filesystem::remove_all(dir);
  expect_kind(ErrorKind::Configuration, [&] { ExemplarStore::load(dir); });
}

TEST_CASE("prepare_image") {
  const Image hd(1920, 1080, {50, 60, 70});
  const auto low = prepare_image(hd, Detail::Low);
  CHECK(low.image.width == 512);
  CHECK(low.image.height == 512);
  CHECK(low.detail == Detail::Low);
  // 1920x1080 scales to 512x288 and sits between two 112-row bands
  CHECK(low.image.at(256, 256) == Rgb{50, 60, 70});
  CHECK(low.image.at(256, 111) == Rgb{0, 0, 0});
  CHECK(low.image.at(256, 112) == Rgb{50, 60, 70});
  CHECK(low.image.at(256, 399) == Rgb{50, 60, 70});
  CHECK(low.image.at(256, 400) == Rgb{0, 0, 0});

  Image square(512, 512);
  std::mt19937 rng(1);
  for (auto& b : square.pixels) b = static_cast<std::uint8_t>(rng());
  CHECK(prepare_image(square, Detail::Low).image == square);

  const auto high = prepare_image(hd, Detail::High);
  CHECK(high.image.width == 1920);
  CHECK(high.image.height == 1080);
  CHECK(high.detail == Detail::High);

  expect_kind(ErrorKind::Image, [] { prepare_image(Image{}, Detail::Low); });
}

TEST_CASE("build_prompt layouts") {
  const auto snap = make_snapshot(TaskPhase::Entrance);
  const auto full = build_prompt({Role::Role3, Priors::Lab, Detail::High}, {}, &snap,
                                 "What is the stiffness matrix for this phase?", exemplars());
  CHECK(full.prior_count == 8);
  CHECK(full.turns.size() == 9);
  CHECK(full.live_history_length() == 1);
  CHECK(full.image_count() == 5);
  CHECK(full.turns.back().image_ref == snap.url);
  CHECK(full.scene_phase == TaskPhase::Entrance);
  REQUIRE(full.final_image.has_value());
  CHECK(full.final_image->image.width == 640);

  const auto bare = build_prompt({Role::Role1, Priors::None, Detail::Low}, {}, nullptr,
                                 "increase stiffness along y", exemplars());
  CHECK(bare.turns.size() == 1);
  CHECK(bare.image_count() == 0);
  CHECK_FALSE(bare.final_image.has_value());

  const auto capped = build_prompt({Role::Role1, Priors::Lab, Detail::Low}, chat(14), nullptr, "next", exemplars());
  CHECK(capped.live_history_length() == 10);
  CHECK(capped.prior_count == 8);
  CHECK(capped.turns[8].text == "turn 5");  // oldest kept
  CHECK(capped.turns.back().text == "next");

  expect_kind(ErrorKind::Configuration, [] {
    build_prompt({}, {}, nullptr, "", exemplars());
  });
}

TEST_CASE("live history never exceeds the cap") {
  for (std::size_t n = 0; n < 40; ++n) {
    const auto p = build_prompt({Role::Role2, Priors::Ideal, Detail::Low}, chat(n), nullptr, "go", exemplars());
    CHECK(p.live_history_length() <= kHistoryCap);
    CHECK(p.live_history_length() == std::min(n + 1, kHistoryCap));
    CHECK(p.prior_count + p.live_history_length() <= kHistoryCap + 8);
    for (std::size_t i = 0; i < p.prior_count; ++i) CHECK(p.turns[i].timestamp == 0.0);
  }
}

TEST_CASE("parse_stiffness_response examples") {
  const auto x = parse_stiffness_response("STIFFNESS=[[250,0,0],[0,100,0],[0,0,100]] Entering x-traverse.");
  CHECK(x.matrix == StiffnessMatrix::diagonal(250, 100, 100));
  CHECK(x.confirmation_text == "Entering x-traverse.");

  expect_kind(ErrorKind::UnparseableResponse, [] { parse_stiffness_response("I cannot determine the phase."); });

  const auto slant = parse_stiffness_response("STIFFNESS=[[100,0,0],[0,175,75],[0,75,175]] Slant detected.");
  CHECK(classify_stiffness(slant.matrix, 1e-12) == TaskPhase::YZSlant);
  CHECK((slant.matrix.matrix() - oracle::triple_product(axis_rotation(Axis::X, M_PI / 4),
                                                        Vec3(100, 250, 100).asDiagonal().toDenseMatrix()))
            .cwiseAbs()
            .maxCoeff() < 1e-9);
}

TEST_CASE("parse tolerates framing and rejects bad matrices") {
  const auto r = parse_stiffness_response("Sure. stiffness = [ [ 100, 0, 0 ],[0,100,0],[0,0,250] ]\nGo down.");
  CHECK(r.matrix == StiffnessMatrix::diagonal(100, 100, 250));
  CHECK(r.confirmation_text == "Sure. Go down.");

  // first well-formed block wins over a broken earlier one
  const auto second = parse_stiffness_response("STIFFNESS=[[1,2],[3]] STIFFNESS=[[250,0,0],[0,100,0],[0,0,100]]");
  CHECK(second.matrix == StiffnessMatrix::diagonal(250, 100, 100));
  CHECK_FALSE(second.confirmation_text.empty());

  const auto mild = parse_stiffness_response("STIFFNESS=[[250,4,0],[0,100,0],[0,0,100]] ok");
  CHECK(mild.matrix(0, 1) == 2);
  CHECK(mild.matrix(1, 0) == 2);

  expect_kind(ErrorKind::InvalidStiffness,
              [] { parse_stiffness_response("STIFFNESS=[[250,80,0],[0,100,0],[0,0,100]] x"); });
  try {
    parse_stiffness_response("STIFFNESS=[[250,0,0],[0,-5,0],[0,0,100]] x");
    FAIL("expected invalid stiffness");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidStiffness);
    CHECK(std::string(e.what()).find("-5") != std::string::npos);
  }
  const auto clamped = parse_stiffness_response("STIFFNESS=[[5000,0,0],[0,100,0],[0,0,100]] x");
  CHECK(clamped.matrix(0, 0) == doctest::Approx(kStiffnessMax));
}

TEST_CASE("parse after format is the identity") {
  for (TaskPhase p : kAllPhases) {
    const auto k = phase_target_stiffness(p);
    CHECK(parse_stiffness_response(format_stiffness_response(k, "ok")).matrix == k);
  }
  std::mt19937_64 rng(23);
  for (int i = 0; i < 100; ++i) {
    const StiffnessMatrix k(oracle::random_spd(rng, kStiffnessMin, kStiffnessMax));
    const auto back = parse_stiffness_response(format_stiffness_response(k, "ok")).matrix;
    CHECK(back.matrix() == k.matrix());
  }
}

TEST_CASE("mock model with identity confusion is always right") {
  for (TaskPhase p : kAllPhases) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto reply = parse_stiffness_response(mock_model(p, identity_confusion(), seed));
      CHECK(classify_stiffness(reply.matrix, kDefaultClassifyTol) == p);
    }
  }
}

TEST_CASE("mock model with slant confusion answers y-traverse") {
  Confusion c = identity_confusion();
  c[3] = {0, 1, 0, 0};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto reply = parse_stiffness_response(mock_model(TaskPhase::YZSlant, c, seed));
    CHECK(reply.matrix == phase_target_stiffness(TaskPhase::YTraverse));
  }
}

TEST_CASE("seeded y-traverse confusion stays in the binomial envelope") {
  Confusion c = identity_confusion();
  c[1] = {0, 0.93, 0.07, 0};
  int correct = 0;
  for (std::uint64_t t = 0; t < 15; ++t) {
    const auto reply = parse_stiffness_response(mock_model(TaskPhase::YTraverse, c, 4242 + t));
    correct += classify_stiffness(reply.matrix, kDefaultClassifyTol) == TaskPhase::YTraverse;
  }
  const double sd = std::sqrt(15 * 0.93 * 0.07);
  CHECK(std::abs(correct - 15 * 0.93) <= 3 * sd);
  // same seed, same text
  CHECK(mock_model(TaskPhase::YTraverse, c, 99) == mock_model(TaskPhase::YTraverse, c, 99));
}

TEST_CASE("seeded uniform is roughly uniform") {
  int buckets[10] = {};
  for (std::uint64_t s = 0; s < 100000; ++s) {
    const double u = seeded_uniform(s);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    ++buckets[static_cast<int>(u * 10)];
  }
  for (int b : buckets) CHECK(std::abs(b - 10000) < 500);
}

TEST_CASE("invalid confusion tables are configuration errors") {
  Confusion c = identity_confusion();
  c[0] = {0.5, 0.4, 0, 0};
  expect_kind(ErrorKind::Configuration, [&] { mock_model(TaskPhase::Entrance, c, 1); });
  c[0] = {1.5, -0.5, 0, 0};
  expect_kind(ErrorKind::Configuration, [&] { validate_confusion(c); });
}

TEST_CASE("confusion set from json") {
  const auto j = nlohmann::json::parse(R"({
    "default": {"YZSlant": {"YTraverse": 1.0}},
    "Role1/None/Low": {"Entrance": {"Entrance": 0.5, "XTraverse": 0.5}}
  })");
  const auto set = ConfusionSet::from_json(j);
  CHECK(set.fallback[3][1] == 1.0);
  CHECK(set.fallback[0][0] == 1.0);
  const auto& r1 = set.for_config({Role::Role1, Priors::None, Detail::Low});
  CHECK(r1[0][2] == 0.5);
  CHECK(r1[3][3] == 1.0);
  expect_kind(ErrorKind::Configuration, [] {
    ConfusionSet::from_json(nlohmann::json::parse(R"({"Role9/x/y": {}})"));
  });
  expect_kind(ErrorKind::Configuration, [] {
    ConfusionSet::from_json(nlohmann::json::parse(R"({"default": {"YZSlant": {"YTraverse": 0.7}}})"));
  });
}

TEST_CASE("keyword intents") {
  CHECK(phase_from_utterance("I want to enter the structure") == TaskPhase::Entrance);
  CHECK(phase_from_utterance("increase stiffness along y") == TaskPhase::YTraverse);
  CHECK(phase_from_utterance("Now move along the x-axis") == TaskPhase::XTraverse);
  CHECK(phase_from_utterance("Going up the slant at 45 degrees in the y-z plane") == TaskPhase::YZSlant);
  CHECK_FALSE(phase_from_utterance("hello there").has_value());
  CHECK(is_backtrack("I want to backtrack"));
  CHECK_FALSE(is_backtrack("go back to the lab"));
}

TEST_CASE("mock client: scene labels use the config's confusion table") {
  ConfusionSet set;
  Confusion slant_wrong = identity_confusion();
  slant_wrong[3] = {0, 1, 0, 0};
  set.per_config[{Role::Role3, Priors::Lab, Detail::High}] = slant_wrong;
  MockModelClient mock(set);
  const auto snap = make_snapshot(TaskPhase::YZSlant);
  const auto p = build_prompt({Role::Role3, Priors::Lab, Detail::High}, {}, &snap, kStandardQuestion, exemplars());
  CHECK(parse_stiffness_response(call_model(p, mock)).matrix == phase_target_stiffness(TaskPhase::YTraverse));
  const auto q = build_prompt({Role::Role2, Priors::Lab, Detail::High}, {}, &snap, kStandardQuestion, exemplars());
  CHECK(parse_stiffness_response(call_model(q, mock)).matrix == phase_target_stiffness(TaskPhase::YZSlant));
  CHECK(mock.calls() == 2);
}

TEST_CASE("mock client: groove-axis request advances to the next phase") {
  MockModelClient mock;
  std::vector<ConversationTurn> history;
  const PromptConfig cfg{Role::Role3, Priors::None, Detail::High};
  std::vector<TaskPhase> got;
  for (int i = 0; i < 5; ++i) {
    const std::string u = "Increase stiffness along the groove axis";
    const auto p = build_prompt(cfg, history, nullptr, u, exemplars());
    const auto raw = call_model(p, mock);
    got.push_back(*classify_stiffness(parse_stiffness_response(raw).matrix, 0.05));
    history.push_back({Author::Operator, u, std::nullopt, 0, nullptr});
    history.push_back({Author::Model, raw, std::nullopt, 0, nullptr});
  }
  CHECK(got == std::vector<TaskPhase>{TaskPhase::Entrance, TaskPhase::YTraverse, TaskPhase::XTraverse,
                                      TaskPhase::YZSlant, TaskPhase::YZSlant});
  const auto p = build_prompt(cfg, {}, nullptr, "tell me a joke", exemplars());
  expect_kind(ErrorKind::UnparseableResponse, [&] { parse_stiffness_response(call_model(p, mock)); });
}

TEST_CASE("mock client: backtracking replays the forward matrices in reverse") {
  MockModelClient mock;
  const PromptConfig cfg{Role::Role3, Priors::Lab, Detail::High};
  std::vector<ConversationTurn> history;
  auto ask = [&](const std::string& u, const GazeSnapshot* snap) {
    const auto p = build_prompt(cfg, history, snap, u, exemplars());
    const auto raw = call_model(p, mock);
    history.push_back({Author::Operator, u, snap ? std::optional(snap->url) : std::nullopt, 0, nullptr});
    history.push_back({Author::Model, raw, std::nullopt, 0, nullptr});
    return *classify_stiffness(parse_stiffness_response(raw).matrix, 0.05);
  };
  std::vector<TaskPhase> seq;
  for (TaskPhase p : {TaskPhase::Entrance, TaskPhase::YTraverse, TaskPhase::XTraverse}) {
    const auto snap = make_snapshot(p);
    seq.push_back(ask("What is the stiffness matrix for this phase?", &snap));
  }
  seq.push_back(ask("I want to backtrack", nullptr));
  seq.push_back(ask("Keep backtracking", nullptr));
  seq.push_back(ask("Continue to backtrack", nullptr));
  CHECK(seq == std::vector<TaskPhase>{TaskPhase::Entrance, TaskPhase::YTraverse, TaskPhase::XTraverse,
                                      TaskPhase::XTraverse, TaskPhase::YTraverse, TaskPhase::Entrance});
}

TEST_CASE("mock client: backtracking past the first phase stays there") {
  MockModelClient mock;
  const PromptConfig cfg{Role::Role3, Priors::None, Detail::High};
  std::vector<ConversationTurn> history;
  std::vector<TaskPhase> seq;
  for (const char* u : {"enter the structure", "move along the y-axis", "backtrack", "backtrack", "backtrack"}) {
    const auto p = build_prompt(cfg, history, nullptr, u, exemplars());
    const auto raw = call_model(p, mock);
    seq.push_back(*classify_stiffness(parse_stiffness_response(raw).matrix, 0.05));
    history.push_back({Author::Operator, u, std::nullopt, 0, nullptr});
    history.push_back({Author::Model, raw, std::nullopt, 0, nullptr});
  }
  CHECK(seq == std::vector<TaskPhase>{TaskPhase::Entrance, TaskPhase::YTraverse, TaskPhase::YTraverse,
                                      TaskPhase::Entrance, TaskPhase::Entrance});
  // with nothing to return to the reply carries no matrix
  const auto p = build_prompt(cfg, {}, nullptr, "backtrack", exemplars());
  expect_kind(ErrorKind::UnparseableResponse, [&] { parse_stiffness_response(call_model(p, mock)); });
}

// ---- live client against a local fake endpoint ----

namespace {

struct FakeEndpoint {
  httplib::Server server;
  int port = 0;
  std::thread thread;
  std::atomic<int> hits{0};
  std::string last_body;
  std::string last_auth;
  std::mutex mu;

  template <class Handler>
  explicit FakeEndpoint(Handler h) {
    server.Post("/v1/chat/completions", [this, h](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      {
        std::lock_guard lk(mu);
        last_body = req.body;
        last_auth = req.get_header_value("Authorization");
      }
      h(req, res);
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeEndpoint() {
    server.stop();
    thread.join();
  }
  LiveConfig config() const {
    LiveConfig c;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    c.credential_env = "TELEIMP_TEST_KEY";
    return c;
  }
};

}  // namespace

TEST_CASE("live client request shape and reply") {
  ::setenv("TELEIMP_TEST_KEY", "sk-test", 1);
  FakeEndpoint fake([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"STIFFNESS=[[100,0,0],[0,100,0],[0,0,250]] Entering."}}]})",
                    "application/json");
  });
  auto cfg = fake.config();
  cfg.public_base_url = "http://scene.example:8080";
  LiveModelClient client(cfg);
  const auto snap = make_snapshot(TaskPhase::Entrance);
  const auto p = build_prompt({Role::Role3, Priors::Lab, Detail::Low}, {}, &snap, kStandardQuestion, exemplars());
  const auto raw = call_model(p, client);
  CHECK(parse_stiffness_response(raw).matrix == phase_target_stiffness(TaskPhase::Entrance));
  CHECK(fake.hits == 1);

  const auto body = nlohmann::json::parse(fake.last_body);
  CHECK(fake.last_auth == "Bearer sk-test");
  CHECK(body["model"] == "gpt-4o");
  const auto& msgs = body["messages"];
  REQUIRE(msgs.size() == 1 + 9);
  CHECK(msgs[0]["role"] == "system");
  CHECK(msgs[2]["role"] == "assistant");
  const auto& last = msgs.back()["content"];
  CHECK(last[0]["text"] == kStandardQuestion);
  CHECK(last[1]["image_url"]["url"] == "http://scene.example:8080/snapshots/snap1.png");
  CHECK(last[1]["image_url"]["detail"] == "low");
  // priors have no public URL, so they are inlined
  CHECK(msgs[1]["content"][1]["image_url"]["url"].get<std::string>().rfind("data:image/png;base64,", 0) == 0);
}

TEST_CASE("live client error mapping") {
  ::setenv("TELEIMP_TEST_KEY", "sk-test", 1);
  const auto p = build_prompt({Role::Role1, Priors::None, Detail::High}, {}, nullptr, "enter", exemplars());

  SUBCASE("4xx is a configuration error carrying the body") {
    FakeEndpoint fake([](const httplib::Request&, httplib::Response& res) {
      res.status = 401;
      res.set_content(R"({"error":"invalid api key"})", "application/json");
    });
    LiveModelClient client(fake.config());
    try {
      call_model(p, client);
      FAIL("expected configuration error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Configuration);
      CHECK(std::string(e.what()).find("invalid api key") != std::string::npos);
    }
    CHECK(fake.hits == 1);
  }
  SUBCASE("server failure is retried once") {
    FakeEndpoint fake([](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    LiveModelClient client(fake.config());
    expect_kind(ErrorKind::ModelUnavailable, [&] { call_model(p, client); });
    CHECK(fake.hits == 2);
  }
  SUBCASE("timeout") {
    FakeEndpoint fake([](const httplib::Request&, httplib::Response& res) {
      std::this_thread::sleep_for(std::chrono::milliseconds(600));
      res.set_content("{}", "application/json");
    });
    auto cfg = fake.config();
    cfg.timeout_s = 0.2;
    LiveModelClient client(cfg);
    expect_kind(ErrorKind::ModelUnavailable, [&] { call_model(p, client); });
    CHECK(client.requests_sent() == 2);
  }
  SUBCASE("missing credential") {
    auto cfg = LiveConfig{};
    cfg.credential_env = "TELEIMP_TEST_KEY_UNSET";
    ::unsetenv("TELEIMP_TEST_KEY_UNSET");
    LiveModelClient client(cfg);
    expect_kind(ErrorKind::Configuration, [&] { call_model(p, client); });
    CHECK(client.requests_sent() == 0);
  }
  SUBCASE("budget") {
    FakeEndpoint fake([](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    auto cfg = fake.config();
    cfg.request_budget = 1;
    LiveModelClient client(cfg);
    expect_kind(ErrorKind::ModelUnavailable, [&] { call_model(p, client); });
    CHECK(fake.hits == 1);
  }
}
