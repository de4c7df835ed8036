#pragma once

// HTTP front end for an annotation campaign. Service maps requests to campaign
// calls and JSON responses without touching the network, so it can be driven
// directly in tests; HttpServer binds it to a socket. Field names are frozen
// in docs/API.md.

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "normwatch/annotation.hpp"

namespace normwatch {

inline constexpr int kBatchSize = 30;     // main submissions per completion code
inline constexpr int kTrainingBatch = 0;  // batch index of the code issued after training

struct ServiceOptions {
    // Bearer secret for /api/admin/*. Empty disables the admin endpoints.
    std::string admin_secret;
    // Key for completion codes. Must be non-empty.
    std::string code_key;
    std::size_t max_body_bytes = 64 * 1024;
    // Requests allowed per session token.
    std::uint64_t request_cap = 20000;
    // Epoch seconds; defaults to the system clock.
    std::function<std::int64_t()> clock;
};

struct ServiceRequest {
    std::string method;
    std::string path;
    std::string authorization;  // raw Authorization header
    std::string body;
    std::map<std::string, std::string> query;
};

struct ServiceResponse {
    int status = 200;
    std::string body;  // JSON
    std::string content_type = "application/json";
};

// Deterministic keyed code for (annotator, batch), formatted XXXX-XXXX-XXXX-XXXX.
std::string completion_code(std::string_view key, std::string_view annotator_id, int batch);

// 128 random bits as 32 lowercase hex characters.
std::string new_session_token();

class Service {
public:
    // Throws std::invalid_argument when options.code_key is empty and
    // std::runtime_error when libsodium cannot initialize.
    Service(Campaign& campaign, ServiceOptions options);

    ServiceResponse handle(const ServiceRequest& request);

    // Token currently bound to an annotator, if any.
    std::string token_for(const std::string& annotator_id) const;

private:
    struct Session {
        std::string annotator_id;
        std::int64_t issued_at = 0;
        std::uint64_t requests = 0;
    };

    ServiceResponse do_register(const ServiceRequest& request);
    ServiceResponse do_next(const std::string& annotator_id);
    ServiceResponse do_submit(const std::string& annotator_id, const ServiceRequest& request);
    ServiceResponse do_export(const ServiceRequest& request);
    ServiceResponse do_progress();
    // Resolves the bearer token and charges one request against its cap.
    std::optional<std::string> authenticate(const ServiceRequest& request, ServiceResponse& error);
    bool admin_authorized(const ServiceRequest& request) const;
    std::int64_t now() const;

    Campaign& campaign_;
    ServiceOptions options_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, Session> sessions_;            // token -> session
    std::unordered_map<std::string, std::string> token_by_annotator_;
};

// Wraps a Service in an HTTP listener.
class HttpServer {
public:
    explicit HttpServer(Service& service);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    // Binds host:port (port 0 picks a free one) and returns the bound port.
    int bind(const std::string& host, int port);
    // Blocks until stop() is called.
    void listen();
    // Returns once a concurrent listen() is accepting connections.
    void wait_until_ready();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace normwatch
