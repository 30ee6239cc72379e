#include <httplib.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <thread>

#include "profsim/annotation.hpp"

namespace profsim {

namespace {

int status_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::SessionNotFound: return 404;
    case ErrorCode::SessionCompleted:
    case ErrorCode::PendingChoice:
    case ErrorCode::NoPendingPair:
    case ErrorCode::WrongMode: return 409;
    case ErrorCode::InvalidVerdict:
    case ErrorCode::ScoreOutOfRange:
    case ErrorCode::InvalidArgument:
    case ErrorCode::SchemaViolation: return 400;
    case ErrorCode::RateLimited: return 429;
    case ErrorCode::EndpointUnreachable:
    case ErrorCode::MalformedResponse: return 502;
    case ErrorCode::EmptyPool: return 503;
    default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  const int status = status_for(code);
  if (status == 429 || status == 502) res.set_header("Retry-After", "5");
  send_json(res, status, json{{"error", to_string(code)}, {"message", message}});
}

std::optional<std::string> idempotency_key(const httplib::Request& req) {
  if (!req.has_header("Idempotency-Key")) return std::nullopt;
  auto k = trim(req.get_header_value("Idempotency-Key"));
  if (k.empty()) return std::nullopt;
  return k;
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  auto j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::InvalidArgument, "request body must be a JSON object");
  return j;
}

template <class Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const json::exception& e) {
      send_error(res, ErrorCode::InvalidArgument, e.what());
    } catch (const std::exception& e) {
      spdlog::error("annotation request {} {} failed: {}", req.method, req.path, e.what());
      send_json(res, 500, json{{"error", "Internal"}, {"message", e.what()}});
    }
  };
}

bool is_api_path(const std::string& path) {
  return path.rfind("/sessions", 0) == 0 || path.rfind("/export", 0) == 0;
}

}  // namespace

struct AnnotationServer::Impl {
  AnnotationStore& store;
  AnnotationServerConfig cfg;
  httplib::Server server;
  std::thread thread;

  Impl(AnnotationStore& s, AnnotationServerConfig c) : store(s), cfg(std::move(c)) { routes(); }

  void routes() {
    server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (cfg.token.empty() || !is_api_path(req.path)) return httplib::Server::HandlerResponse::Unhandled;
      if (req.get_header_value("Authorization") == "Bearer " + cfg.token) {
        return httplib::Server::HandlerResponse::Unhandled;
      }
      res.set_header("WWW-Authenticate", "Bearer");
      send_json(res, 401, json{{"error", "Unauthorized"}, {"message", "missing or wrong bearer token"}});
      return httplib::Server::HandlerResponse::Handled;
    });

    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, json{{"status", "ok"}});
    });

    server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      const auto mode_text = body.value("mode", std::string("PreferenceAnnotation"));
      const auto mode = session_mode_from_string(mode_text);
      if (!mode) throw Error(ErrorCode::InvalidArgument, "unknown mode '" + mode_text + "'");
      send_json(res, 201, session_view(store.create_session(*mode, idempotency_key(req))));
    }));

    server.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, session_view(store.get_session(req.matches[1])));
    }));

    server.Post(R"(/sessions/([^/]+)/message)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      if (!body.contains("text") || !body["text"].is_string()) {
        throw Error(ErrorCode::InvalidArgument, "'text' is required");
      }
      send_json(res, 200, store.post_message(req.matches[1], body["text"].get<std::string>(), idempotency_key(req)));
    }));

    server.Post(R"(/sessions/([^/]+)/choice)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      if (!body.contains("turn") || !body["turn"].is_number_unsigned()) {
        throw Error(ErrorCode::InvalidArgument, "'turn' must be a non-negative integer");
      }
      if (!body.contains("verdict") || !body["verdict"].is_string()) {
        throw Error(ErrorCode::InvalidVerdict, "'verdict' must be one of A, B, EquallyGood, EquallyBad");
      }
      send_json(res, 200,
                store.record_choice(req.matches[1], body["turn"].get<std::size_t>(),
                                    body["verdict"].get<std::string>(), body.value("annotator", std::string()),
                                    idempotency_key(req)));
    }));

    server.Post(R"(/sessions/([^/]+)/evaluation)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const auto body = parse_body(req);
                  send_json(res, 200,
                            store.submit_evaluation(likert_from_json(req.matches[1], body), idempotency_key(req)));
                }));

    server.Post(R"(/sessions/([^/]+)/complete)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, session_view(store.complete_session(req.matches[1])));
    }));

    server.Get("/export/preferences", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, to_json(store.export_preferences()));
    }));

    server.Get("/export/evaluations", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, store.export_evaluations());
    }));

    if (cfg.static_dir && !server.set_mount_point("/", cfg.static_dir->string())) {
      throw Error(ErrorCode::ConfigInvalid, "static directory not found: " + cfg.static_dir->string());
    }
  }

  int bind() {
    int port = cfg.port;
    if (port == 0) {
      port = server.bind_to_any_port(cfg.host);
    } else if (!server.bind_to_port(cfg.host, port)) {
      port = -1;
    }
    if (port < 0) throw Error(ErrorCode::IoFailure, fmt::format("cannot bind {}:{}", cfg.host, cfg.port));
    return port;
  }
};

AnnotationServer::AnnotationServer(AnnotationStore& store, AnnotationServerConfig cfg)
    : impl_(std::make_unique<Impl>(store, std::move(cfg))) {}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::start() {
  port_ = impl_->bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void AnnotationServer::run() {
  port_ = impl_->bind();
  spdlog::info("annotation service listening on {}:{}", impl_->cfg.host, port_);
  impl_->server.listen_after_bind();
}

void AnnotationServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace profsim
