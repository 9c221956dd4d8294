#pragma once

// HTTP binding of SessionService under /v1.

#include <filesystem>
#include <optional>
#include <string>

#include "persuade/session_service.hpp"

namespace httplib {
class Server;
}

namespace persuade {

struct HttpOptions {
  /// Required in X-Rater-Token on annotation and report routes when set.
  std::optional<std::string> rater_token;
  /// Directory served at "/" (the web client bundle).
  std::optional<std::filesystem::path> static_dir;
  std::size_t max_body_bytes = 64 * 1024;
};

void mount_routes(httplib::Server& server, SessionService& service, const HttpOptions& options);

/// Blocks serving until the server is stopped.
void serve(SessionService& service, const HttpOptions& options, const std::string& host, int port);

}  // namespace persuade
