#pragma once

// JSON-over-HTTP front end for the session manager.

#include "graphal/session.hpp"

#include <httplib.h>

namespace graphal {

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const SessionError& e) {
    send_json(res, e.status(), {{"error", e.what()}});
  } catch (const ConfigError& e) {
    send_json(res, 400, {{"error", e.what()}});
  } catch (const InvalidArgument& e) {
    send_json(res, 400, {{"error", e.what()}});
  } catch (const DatasetError& e) {
    send_json(res, 422, {{"error", e.what()}});
  } catch (const nlohmann::json::exception& e) {
    send_json(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
  } catch (const std::exception& e) {
    send_json(res, 500, {{"error", e.what()}});
  }
}

inline nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  return nlohmann::json::parse(req.body);
}

}  // namespace detail

/// Registers the wire API routes on `server`.
inline void install_routes(httplib::Server& server, SessionManager& sessions) {
  using detail::guarded;
  using detail::send_json;

  server.Get("/datasets", [&](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, sessions.datasets()); });
  });

  server.Post("/sessions", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto cfg = session_config_from_json(detail::parse_body(req));
      auto s = sessions.create(cfg);
      send_json(res, 201, s->create_response());
    });
  });

  server.Get(R"(/sessions/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, sessions.get(req.matches[1])->state()); });
  });

  server.Get(R"(/sessions/([^/]+)/metrics)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, sessions.get(req.matches[1])->metrics()); });
  });

  server.Post(R"(/sessions/([^/]+)/label)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto s = sessions.get(req.matches[1]);
      const auto body = detail::parse_body(req);
      if (!body.is_object() || !body.contains("node") || !body.contains("class") ||
          !body["node"].is_number_integer() || !body["class"].is_number_integer())
        throw SessionError(400, "body must be {\"node\": int, \"class\": int}");
      send_json(res, 200, s->submit_label(body["node"].get<NodeId>(), body["class"].get<ClassId>()));
    });
  });

  server.Delete(R"(/sessions/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      sessions.remove(id);
      send_json(res, 200, {{"id", id}, {"deleted", true}});
    });
  });
}

}  // namespace graphal
