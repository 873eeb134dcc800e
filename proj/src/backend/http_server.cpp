#include "teleimp/server.hpp"

#include "json.hpp"
#include "teleimp/error.hpp"

// after Eigen: <resolv.h> defines a _res macro that clashes with Eigen internals
#include "httplib.h"

namespace teleimp::server {

using nlohmann::json;

bool TelemetryFanout::offer(const wire::Telemetry& t) {
  {
    std::lock_guard lk(mutex_);
    if (any_ && t.time - last_ < period_ - 1e-9 && t.time >= last_) return false;
    any_ = true;
    last_ = t.time;
  }
  hub_.publish(backend::telemetry_event_json(t));
  return true;
}

namespace {

json mat_json(const Mat3& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2)});
  return rows;
}

json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

json ellipsoid_json(const StiffnessMatrix& k) {
  const auto ell = ellipsoid_from_stiffness(k);
  json axes = json::array();
  for (const auto& a : ell.axes) axes.push_back(vec_json(a));
  return {{"axes", axes}, {"magnitudes", ell.magnitudes}};
}

json phase_json(const std::optional<TaskPhase>& p) {
  return p ? json(std::string(to_string(*p))) : json(nullptr);
}

Vec3 vec_from(const json& j, const char* name) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::Bounds, std::string(name) + " must be [x, y, z]");
  Vec3 v(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
  if (!v.allFinite()) throw Error(ErrorKind::Bounds, std::string(name) + " must be finite");
  return v;
}

int status_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::Bounds:
    case ErrorKind::Configuration:
    case ErrorKind::Numerical:
    case ErrorKind::InvalidRotation:
      return 400;
    case ErrorKind::NotFound: return 404;
    case ErrorKind::ReindexRefused: return 409;
    case ErrorKind::UnparseableResponse:
    case ErrorKind::InvalidStiffness:
      return 422;
    case ErrorKind::Capture:
    case ErrorKind::ModelUnavailable:
      return 503;
    default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorKind kind, const std::string& message) {
  send_json(res, status_for(kind), {{"error", std::string(to_string(kind))}, {"message", message}});
}

json outcome_json(const backend::CommandOutcome& o) {
  json j{{"ok", o.ok},
         {"confirmation", o.confirmation},
         {"raw_response", o.raw_response},
         {"seq", o.stiffness_seq},
         {"db_id", o.db_id},
         {"phase", phase_json(o.phase)}};
  if (o.stiffness) {
    j["matrix"] = mat_json(o.stiffness->matrix());
    j["ellipsoid"] = ellipsoid_json(*o.stiffness);
  }
  if (o.error) {
    j["error"] = std::string(to_string(*o.error));
    j["message"] = o.error_message;
  }
  return j;
}

json state_json(const backend::SessionView& v) {
  json history = json::array();
  for (const auto& t : v.history)
    history.push_back({{"author", t.author == vlm::Author::Operator ? "operator" : "model"},
                       {"text", t.text},
                       {"image_ref", t.image_ref ? json(*t.image_ref) : json(nullptr)},
                       {"timestamp", t.timestamp}});
  json j{{"id", v.id},
         {"mode", std::string(backend::to_string(v.mode))},
         {"active_stiffness", mat_json(v.active_stiffness.matrix())},
         {"ellipsoid", ellipsoid_json(v.active_stiffness)},
         {"history", history},
         {"workspace_offset", vec_json(v.workspace_offset)},
         {"config", vlm::to_string(v.config)},
         {"pending_snapshot", v.pending_snapshot ? json(*v.pending_snapshot) : json(nullptr)}};
  if (v.telemetry) {
    const auto age = std::chrono::duration<double, std::milli>(robot::Clock::now() - v.telemetry->received).count();
    j["telemetry"] = {{"time", v.telemetry->data.time},
                      {"position", vec_json(v.telemetry->data.position)},
                      {"velocity", vec_json(v.telemetry->data.velocity)},
                      {"force", vec_json(v.telemetry->data.force)},
                      {"age_ms", age}};
  } else {
    j["telemetry"] = nullptr;
  }
  return j;
}

json entry_json(const db::StiffnessEntry& e) { return json::parse(db::entry_to_json(e)); }

json body_of(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  auto j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::Bounds, "request body must be a JSON object");
  return j;
}

}  // namespace

struct HttpServer::Impl {
  ServerDeps deps;
  ServerConfig config;
  httplib::Server svr;
  std::thread thread;

  std::shared_ptr<backend::Session> session_or_404(const httplib::Request& req) {
    auto s = deps.sessions->find(req.matches[1]);
    if (!s) throw Error(ErrorKind::NotFound, "unknown session " + std::string(req.matches[1]));
    return s;
  }

  // Wraps a handler so library errors map to JSON error responses.
  template <class F>
  httplib::Server::Handler guarded(F f) {
    return [f = std::move(f)](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        send_error(res, e.kind(), e.what());
      } catch (const json::exception& e) {
        send_error(res, ErrorKind::Bounds, std::string("malformed request: ") + e.what());
      }
    };
  }

  void routes() {
    svr.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Headers", "Content-Type"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    svr.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    svr.Post("/session", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = body_of(req);
      vlm::PromptConfig cfg{vlm::Role::Role3, vlm::Priors::Lab, vlm::Detail::High};
      if (body.contains("config")) {
        auto parsed = vlm::parse_config(body["config"].get<std::string>());
        if (!parsed) throw Error(ErrorKind::Bounds, "unknown prompt config " + body["config"].dump());
        cfg = *parsed;
      }
      auto s = deps.sessions->create(cfg, body.value("seed", std::uint64_t{0}));
      send_json(res, 201, {{"id", s->id()}, {"config", vlm::to_string(cfg)}});
    }));

    svr.Post(R"(/session/([^/]+)/capture)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto s = session_or_404(req);
      const auto body = body_of(req);
      auto snap = s->capture(body.at("u").get<double>(), body.at("v").get<double>());
      send_json(res, 200,
                {{"id", snap->id},
                 {"url", snap->url},
                 {"u", snap->u},
                 {"v", snap->v},
                 {"overlay_applied", snap->overlay_applied},
                 {"width", snap->image.width},
                 {"height", snap->image.height},
                 {"scene_phase", phase_json(snap->scene_phase)}});
    }));

    svr.Post(R"(/session/([^/]+)/command)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto s = session_or_404(req);
      const auto body = body_of(req);
      const auto text = body.at("text").get<std::string>();
      backend::CommandOutcome out;
      if (body.contains("snapshot_id")) {
        auto snap = deps.snapshots->get(body["snapshot_id"].get<std::string>());
        if (!snap) throw Error(ErrorKind::NotFound, "unknown snapshot " + body["snapshot_id"].dump());
        out = s->handle_command(text, snap);
      } else {
        out = s->handle_command_with_pending(text);
      }
      send_json(res, out.ok ? 200 : status_for(*out.error), outcome_json(out));
    }));

    svr.Post(R"(/session/([^/]+)/speech)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto s = session_or_404(req);
      if (!deps.speech) {
        send_json(res, 501, {{"error", "not_implemented"}, {"message", "no speech adapter configured"}});
        return;
      }
      const auto* p = reinterpret_cast<const std::uint8_t*>(req.body.data());
      const auto text = deps.speech->transcribe({p, req.body.size()}, req.get_header_value("Content-Type"));
      auto out = s->handle_command_with_pending(text);
      auto j = outcome_json(out);
      j["transcript"] = text;
      send_json(res, out.ok ? 200 : status_for(*out.error), j);
    }));

    svr.Post(R"(/session/([^/]+)/stiffness)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto s = session_or_404(req);
      const auto body = body_of(req);
      const auto& m = body.at("matrix");
      if (!m.is_array() || m.size() != 3) throw Error(ErrorKind::Bounds, "matrix must be 3x3");
      Mat3 k;
      for (int r = 0; r < 3; ++r) k.row(r) = vec_from(m[r], "matrix row").transpose();
      auto out = s->apply_stiffness(k, "manual");
      send_json(res, out.ok ? 200 : status_for(*out.error), outcome_json(out));
    }));

    svr.Post(R"(/session/([^/]+)/engaged)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto s = session_or_404(req);
      const auto body = body_of(req);
      if (!body.contains("flag") || !body["flag"].is_boolean()) throw Error(ErrorKind::Bounds, "flag must be boolean");
      s->set_engaged(body["flag"].get<bool>());
      send_json(res, 200, {{"mode", std::string(backend::to_string(s->mode()))}});
    }));

    svr.Post(R"(/session/([^/]+)/pose)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto s = session_or_404(req);
      const auto body = body_of(req);
      const bool sent = s->submit_pose(vec_from(body.at("position"), "position"));
      send_json(res, 200, {{"forwarded", sent}});
    }));

    svr.Post(R"(/session/([^/]+)/reindex)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto s = session_or_404(req);
      const auto body = body_of(req);
      const Vec3 zero = body.contains("local_zero") ? vec_from(body["local_zero"], "local_zero") : Vec3::Zero();
      send_json(res, 200, {{"workspace_offset", vec_json(s->reindex(zero))}});
    }));

    svr.Get(R"(/session/([^/]+)/state)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, state_json(session_or_404(req)->view()));
    }));

    svr.Get(R"(/snapshots/([^/]+)\.png)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto png = deps.snapshots->png(req.matches[1]);
      if (!png) throw Error(ErrorKind::NotFound, "unknown snapshot " + std::string(req.matches[1]));
      res.set_content(std::move(*png), "image/png");
    }));

    svr.Get("/stiffness", guarded([this](const httplib::Request&, httplib::Response& res) {
      json list = json::array();
      if (deps.db)
        for (const auto& e : deps.db->list()) list.push_back(entry_json(e));
      send_json(res, 200, list);
    }));

    svr.Get(R"(/stiffness/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      if (!deps.db) throw Error(ErrorKind::NotFound, "no stiffness database configured");
      send_json(res, 200, entry_json(deps.db->get(req.matches[1])));
    }));
  }
};

HttpServer::HttpServer(ServerDeps deps, ServerConfig config) : impl_(std::make_unique<Impl>()) {
  if (!deps.sessions || !deps.snapshots) throw Error(ErrorKind::Configuration, "http server needs sessions and snapshots");
  impl_->deps = deps;
  impl_->config = std::move(config);
  impl_->routes();
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::start() {
  auto& svr = impl_->svr;
  const auto& c = impl_->config;
  if (c.http_port == 0) {
    port_ = svr.bind_to_any_port(c.host);
    if (port_ <= 0) throw Error(ErrorKind::Io, "cannot bind http on " + c.host);
  } else {
    if (!svr.bind_to_port(c.host, c.http_port))
      throw Error(ErrorKind::Io, "cannot bind http on " + c.host + ":" + std::to_string(c.http_port));
    port_ = c.http_port;
  }
  impl_->thread = std::thread([&svr] { svr.listen_after_bind(); });
  svr.wait_until_ready();
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->svr.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace teleimp::server
