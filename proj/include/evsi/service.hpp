#pragma once

// HTTP/JSON API over one deployment session.
//
//   GET  /api/health                -> {"status":"ok"}
//   GET  /api/session               -> full session document
//   GET  /api/rankings              -> {"rankings", "deployed", "recommended_sensor", "status"}
//   POST /api/deploy  {"sensor"}    -> {"deployed", "rankings", "recommended_sensor", "baseline_channel"}
//   POST /api/signal  {"sensor","signal"[,"timestamp"]}
//                                   -> {"sensor", "signal", "timestamp", "recommended_action"}
//   GET  /api/sweep?ratios=2,4,8,16 -> sweep table
//   POST /api/reset                 -> round-0 session document
//
// Errors are {"code", "message", "http_status"}.

#include "evsi/data.hpp"
#include "evsi/error.hpp"
#include "evsi/session.hpp"

#include "httplib.h"
#include "json.hpp"

#include <chrono>
#include <ctime>
#include <iomanip>
#include <sstream>
#include <string>

namespace evsi {

struct ApiError {
    std::string code;
    std::string message;
    int http_status = 400;

    nlohmann::json to_json() const { return {{"code", code}, {"message", message}, {"http_status", http_status}}; }
};

inline ApiError to_api_error(const Error& e) {
    switch (e.code()) {
        case ErrorCode::UnknownSensor: return {"unknown_sensor", e.what(), 404};
        case ErrorCode::AlreadyDeployed: return {"already_deployed", e.what(), 409};
        case ErrorCode::Busy: return {"busy", e.what(), 409};
        case ErrorCode::NotDeployed: return {"not_deployed", e.what(), 409};
        default: return {"bad_request", e.what(), 400};
    }
}

inline std::string utc_timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

inline nlohmann::json rankings_payload(const DeploymentSession& s) {
    const auto doc = session_to_json(s);
    return {{"rankings", doc.at("rankings")},
            {"deployed", s.deployed},
            {"recommended_sensor", doc.at("recommended_sensor")},
            {"status", to_wire(s.status)}};
}

class SessionService {
public:
    explicit SessionService(SessionStore& store) : store_(store) {}

    void mount(httplib::Server& server) {
        server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                    {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                    {"Access-Control-Allow-Headers", "Content-Type"}});
        server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        server.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
            reply(res, 200, {{"status", "ok"}});
        });
        server.Get("/api/session", [this](const httplib::Request&, httplib::Response& res) {
            reply(res, 200, session_to_json(store_.snapshot()));
        });
        server.Get("/api/rankings", [this](const httplib::Request&, httplib::Response& res) {
            reply(res, 200, rankings_payload(store_.snapshot()));
        });
        server.Post("/api/deploy", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto body = parse_body(req);
                const auto s = store_.deploy(require_string(body, "sensor"));
                auto payload = rankings_payload(s);
                payload["baseline_channel"] =
                    s.current_baseline_channel ? channel_to_json(*s.current_baseline_channel) : nlohmann::json(nullptr);
                reply(res, 200, payload);
            });
        });
        server.Post("/api/signal", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto body = parse_body(req);
                const std::string sensor = require_string(body, "sensor");
                EVSI_REQUIRE(body.contains("signal") && body.at("signal").is_boolean(), ErrorCode::InvalidArgument,
                             "'signal' must be a boolean");
                const bool signal = body.at("signal").get<bool>();
                std::string ts = utc_timestamp_now();
                if (body.contains("timestamp") && body.at("timestamp").is_string()) {
                    ts = body.at("timestamp").get<std::string>();
                }
                const auto [s, action] = store_.record_signal(sensor, signal, ts);
                reply(res, 200,
                      {{"sensor", sensor},
                       {"signal", signal},
                       {"timestamp", ts},
                       {"recommended_action", to_wire(action)},
                       {"status", to_wire(s.status)}});
            });
        });
        server.Get("/api/sweep", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                std::vector<double> ratios{2.0, 4.0, 8.0, 16.0};
                if (req.has_param("ratios")) {
                    const auto parsed = detail::parse_double_list(req.get_param_value("ratios"));
                    EVSI_REQUIRE(parsed.has_value(), ErrorCode::InvalidRatio, "ratios must be a comma-separated list");
                    ratios = *parsed;
                }
                reply(res, 200, sweep_to_json(session_sweep(store_.snapshot(), ratios)));
            });
        });
        server.Post("/api/reset", [this](const httplib::Request&, httplib::Response& res) {
            guarded(res, [&] { reply(res, 200, session_to_json(store_.reset())); });
        });
    }

private:
    static void reply(httplib::Response& res, int status, const nlohmann::json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    template <typename Fn>
    static void guarded(httplib::Response& res, Fn&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            const ApiError api = to_api_error(e);
            reply(res, api.http_status, api.to_json());
        } catch (const std::exception& e) {
            reply(res, 400, ApiError{"bad_request", e.what(), 400}.to_json());
        }
    }

    static nlohmann::json parse_body(const httplib::Request& req) {
        auto j = nlohmann::json::parse(req.body, nullptr, false);
        EVSI_REQUIRE(!j.is_discarded() && j.is_object(), ErrorCode::InvalidArgument, "body must be a JSON object");
        return j;
    }

    static std::string require_string(const nlohmann::json& body, const char* key) {
        EVSI_REQUIRE(body.contains(key) && body.at(key).is_string(), ErrorCode::InvalidArgument,
                     std::string("'") + key + "' must be a string");
        return body.at(key).get<std::string>();
    }

    SessionStore& store_;
};

/// Blocks serving the session on host:port until the server is stopped.
inline bool run_service(SessionStore& store, const std::string& host, int port) {
    httplib::Server server;
    SessionService service(store);
    service.mount(server);
    return server.listen(host, port);
}

}  // namespace evsi
