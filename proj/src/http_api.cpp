#include "persuade/http_api.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace persuade {

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code,
                const std::string& message) {
  send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNotFound: return 404;
    case ErrorKind::kConflict:
    case ErrorKind::kDuplicateId:
    case ErrorKind::kState: return 409;
    case ErrorKind::kTransport:
    case ErrorKind::kHttpStatus:
    case ErrorKind::kRateLimited:
    case ErrorKind::kTimeout:
    case ErrorKind::kReplayMiss:
    case ErrorKind::kScriptMiss:
    case ErrorKind::kParseExhausted: return 502;
    case ErrorKind::kIo: return 500;
    default: return 400;
  }
}

json parse_body(const httplib::Request& req) {
  json body = json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) {
    throw ServiceError(400, "validation", "request body must be a JSON object");
  }
  return body;
}

std::string string_field(const json& body, const char* key) {
  if (!body.contains(key) || !body[key].is_string()) {
    throw ServiceError(400, "validation", std::string("'") + key + "' must be a string");
  }
  return body[key].get<std::string>();
}

/// Runs a handler and maps failures to structured error bodies.
template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const ServiceError& e) {
      send_error(res, e.http_status(), e.code(), e.what());
    } catch (const Error& e) {
      send_error(res, status_for(e.kind()), std::string(error_kind_name(e.kind())), e.what());
    } catch (const std::exception& e) {
      spdlog::error("{} {}: {}", req.method, req.path, e.what());
      send_error(res, 500, "internal", "internal error");
    }
  };
}

}  // namespace

void mount_routes(httplib::Server& server, SessionService& service, const HttpOptions& options) {
  server.set_payload_max_length(options.max_body_bytes);

  auto check_token = [token = options.rater_token](const httplib::Request& req) {
    if (token && req.get_header_value("X-Rater-Token") != *token) {
      throw ServiceError(401, "unauthorized", "missing or wrong rater token");
    }
  };

  server.Get("/v1/scenarios", guarded([&service](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, service.list_scenarios());
  }));

  server.Post("/v1/sessions", guarded([&service](const httplib::Request& req,
                                                 httplib::Response& res) {
    const json body = parse_body(req);
    std::optional<ArmPolicy> policy;
    if (body.contains("arm_policy")) {
      policy = arm_policy_from_name(string_field(body, "arm_policy"));
      if (!policy) throw ServiceError(400, "validation", "unknown arm_policy");
    }
    send_json(res, 201, service.create_session(string_field(body, "scenario_id"), policy));
  }));

  server.Post(R"(/v1/sessions/([^/]+)/turns)",
              guarded([&service](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                send_json(res, 200, service.post_turn(req.matches[1], string_field(body, "text")));
              }));

  server.Get(R"(/v1/sessions/([^/]+))",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               const bool reveal = req.get_param_value("reveal") == "true";
               send_json(res, 200, service.get_session(req.matches[1], reveal));
             }));

  server.Get("/v1/annotations/next",
             guarded([&service, check_token](const httplib::Request& req, httplib::Response& res) {
               check_token(req);
               send_json(res, 200, service.next_annotation(req.get_param_value("rater")));
             }));

  server.Post(R"(/v1/annotations/([^/]+)/verdict)",
              guarded([&service, check_token](const httplib::Request& req,
                                              httplib::Response& res) {
                check_token(req);
                const json body = parse_body(req);
                send_json(res, 201,
                          service.submit_verdict(req.matches[1], string_field(body, "rater"),
                                                 string_field(body, "verdict")));
              }));

  server.Get("/v1/reports/agreement",
             guarded([&service, check_token](const httplib::Request& req, httplib::Response& res) {
               check_token(req);
               send_json(res, 200, service.agreement());
             }));

  if (options.static_dir) {
    if (!server.set_mount_point("/", options.static_dir->string())) {
      throw Error(ErrorKind::kConfig, "static directory not found: " + options.static_dir->string());
    }
  }

  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 413) {
      send_error(res, 413, "input_too_large", "request body too large");
    } else if (res.status == 404) {
      send_error(res, 404, "not_found", "no such route");
    }
  });
}

void serve(SessionService& service, const HttpOptions& options, const std::string& host,
           int port) {
  httplib::Server server;
  mount_routes(server, service, options);
  spdlog::info("listening on {}:{}", host, port);
  if (!server.listen(host, port)) {
    throw Error(ErrorKind::kIo, "cannot listen on " + host + ":" + std::to_string(port));
  }
}

}  // namespace persuade
