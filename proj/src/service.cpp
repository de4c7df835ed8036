#include "normwatch/service.hpp"

#include <chrono>
#include <stdexcept>

#include <httplib.h>
#include <json.hpp>
#include <sodium.h>

namespace normwatch {

namespace {

using json = nlohmann::json;

constexpr std::string_view kContentWarning =
    "The comments you will read may contain offensive, vulgar or hateful language.";

ServiceResponse reply(int status, const json& body) { return {status, body.dump(), "application/json"}; }

ServiceResponse error(int status, std::string_view code, const std::string& message) {
    return reply(status, json{{"error", {{"code", code}, {"message", message}}}});
}

json categories_json(CategorySet set) {
    json out = json::array();
    for (auto c : set.members()) out.push_back(std::string(to_string(c)));
    return out;
}

CategorySet parse_categories(const json& value) {
    if (!value.is_array()) throw std::invalid_argument("categories must be an array of norm names");
    CategorySet set;
    for (const auto& v : value) {
        if (!v.is_string()) throw std::invalid_argument("categories must be an array of norm names");
        const auto c = parse_norm_category(v.get<std::string>());
        if (!c) throw std::invalid_argument("unknown norm '" + v.get<std::string>() + "'");
        set.insert(*c);
    }
    return set;
}

json profile_json(const AnnotatorProfile& p) {
    json out{{"annotator_id", p.annotator_id},
             {"state", std::string(to_string(p.state))},
             {"intro_done", p.intro_done},
             {"training_progress", p.training_progress},
             {"training_total", kTrainingItems}};
    out["alpha"] = p.alpha && std::isfinite(*p.alpha) ? json(*p.alpha) : json(nullptr);
    return out;
}

bool valid_annotator_id(std::string_view id) {
    if (id.empty() || id.size() > 128) return false;
    for (unsigned char c : id)
        if (c <= 0x20 || c >= 0x7f || c == ',') return false;
    return true;
}

int status_for(CampaignError::Kind kind) {
    switch (kind) {
        case CampaignError::Kind::not_found: return 404;
        case CampaignError::Kind::forbidden: return 403;
        case CampaignError::Kind::conflict: return 409;
        case CampaignError::Kind::invalid: return 400;
    }
    return 400;
}

std::string_view code_for(CampaignError::Kind kind) {
    switch (kind) {
        case CampaignError::Kind::not_found: return "not_found";
        case CampaignError::Kind::forbidden: return "forbidden";
        case CampaignError::Kind::conflict: return "conflict";
        case CampaignError::Kind::invalid: return "invalid";
    }
    return "invalid";
}

std::optional<std::string> bearer(const std::string& header) {
    constexpr std::string_view prefix = "Bearer ";
    if (header.size() <= prefix.size() || header.compare(0, prefix.size(), prefix) != 0) return std::nullopt;
    return header.substr(prefix.size());
}

void ensure_sodium() {
    if (sodium_init() < 0) throw std::runtime_error("libsodium failed to initialize");
}

}  // namespace

std::string completion_code(std::string_view key, std::string_view annotator_id, int batch) {
    ensure_sodium();
    unsigned char derived[crypto_generichash_KEYBYTES];
    crypto_generichash(derived, sizeof derived, reinterpret_cast<const unsigned char*>(key.data()), key.size(),
                       nullptr, 0);
    const std::string message = std::string(annotator_id) + '\n' + std::to_string(batch);
    unsigned char digest[8];
    crypto_generichash(digest, sizeof digest, reinterpret_cast<const unsigned char*>(message.data()), message.size(),
                       derived, sizeof derived);
    char hex[2 * sizeof digest + 1];
    sodium_bin2hex(hex, sizeof hex, digest, sizeof digest);
    std::string out;
    for (int i = 0; i < 16; ++i) {
        if (i > 0 && i % 4 == 0) out.push_back('-');
        out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(hex[i]))));
    }
    return out;
}

std::string new_session_token() {
    ensure_sodium();
    unsigned char bytes[16];
    randombytes_buf(bytes, sizeof bytes);
    char hex[2 * sizeof bytes + 1];
    sodium_bin2hex(hex, sizeof hex, bytes, sizeof bytes);
    return hex;
}

Service::Service(Campaign& campaign, ServiceOptions options) : campaign_(campaign), options_(std::move(options)) {
    ensure_sodium();
    if (options_.code_key.empty()) throw std::invalid_argument("a completion-code key is required");
    if (!options_.clock)
        options_.clock = [] {
            return std::chrono::duration_cast<std::chrono::seconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                .count();
        };
}

std::int64_t Service::now() const { return options_.clock(); }

std::string Service::token_for(const std::string& annotator_id) const {
    std::lock_guard lock(mutex_);
    auto it = token_by_annotator_.find(annotator_id);
    return it == token_by_annotator_.end() ? std::string() : it->second;
}

ServiceResponse Service::handle(const ServiceRequest& request) {
    if (request.body.size() > options_.max_body_bytes) return error(413, "too_large", "request body too large");
    const bool get = request.method == "GET";
    const bool post = request.method == "POST";
    try {
        if (request.path == "/api/register") {
            if (!post) return error(405, "method", "use POST");
            return do_register(request);
        }
        if (request.path == "/api/next" || request.path == "/api/submit") {
            const bool is_next = request.path == "/api/next";
            if (is_next ? !get : !post) return error(405, "method", is_next ? "use GET" : "use POST");
            ServiceResponse failure;
            const auto annotator = authenticate(request, failure);
            if (!annotator) return failure;
            return is_next ? do_next(*annotator) : do_submit(*annotator, request);
        }
        if (request.path == "/api/admin/export" || request.path == "/api/admin/progress") {
            if (!get) return error(405, "method", "use GET");
            if (options_.admin_secret.empty()) return error(403, "admin_disabled", "admin endpoints are disabled");
            if (!admin_authorized(request)) return error(401, "unauthorized", "admin secret required");
            return request.path == "/api/admin/export" ? do_export(request) : do_progress();
        }
        return error(404, "not_found", "no such endpoint");
    } catch (const CampaignError& e) {
        return error(status_for(e.kind()), code_for(e.kind()), e.what());
    } catch (const json::exception& e) {
        return error(400, "bad_request", std::string("malformed JSON: ") + e.what());
    } catch (const std::invalid_argument& e) {
        return error(400, "bad_request", e.what());
    }
}

std::optional<std::string> Service::authenticate(const ServiceRequest& request, ServiceResponse& failure) {
    const auto token = bearer(request.authorization);
    std::lock_guard lock(mutex_);
    auto it = token ? sessions_.find(*token) : sessions_.end();
    if (it == sessions_.end()) {
        failure = error(401, "unauthorized", "missing or unknown session token");
        return std::nullopt;
    }
    if (++it->second.requests > options_.request_cap) {
        failure = error(429, "request_cap", "request cap reached for this session");
        return std::nullopt;
    }
    return it->second.annotator_id;
}

bool Service::admin_authorized(const ServiceRequest& request) const {
    const auto secret = bearer(request.authorization);
    return secret && secret->size() == options_.admin_secret.size() &&
           sodium_memcmp(secret->data(), options_.admin_secret.data(), secret->size()) == 0;
}

ServiceResponse Service::do_register(const ServiceRequest& request) {
    const json body = json::parse(request.body);
    if (!body.is_object() || !body.contains("annotator_id") || !body["annotator_id"].is_string())
        throw std::invalid_argument("annotator_id is required");
    const std::string id = body["annotator_id"].get<std::string>();
    if (!valid_annotator_id(id))
        throw std::invalid_argument("annotator_id must be 1-128 printable characters without spaces or commas");
    const std::int64_t t = now();
    // Holding the session lock across registration makes concurrent
    // registrations of one id observe the same token.
    std::lock_guard lock(mutex_);
    const AnnotatorProfile profile = campaign_.register_annotator(id, t);
    auto it = token_by_annotator_.find(id);
    if (it == token_by_annotator_.end()) {
        std::string token = new_session_token();
        sessions_[token] = Session{id, t, 0};
        it = token_by_annotator_.emplace(id, token).first;
    }
    const auto& session = sessions_.at(it->second);
    return reply(200, json{{"token", it->second}, {"issued_at", session.issued_at}, {"profile", profile_json(profile)}});
}

ServiceResponse Service::do_next(const std::string& annotator_id) {
    const auto profile = *campaign_.profile(annotator_id);
    const auto& spec = campaign_.spec();
    switch (profile.state) {
        case AnnotatorState::rejected:
            return reply(200, json{{"step", "rejected"},
                                   {"training_code", completion_code(options_.code_key, annotator_id, kTrainingBatch)},
                                   {"profile", profile_json(profile)}});
        case AnnotatorState::in_training: {
            if (!profile.intro_done) {
                json norms = json::array();
                for (auto c : kNormCategories) {
                    json examples = json::array();
                    for (const auto& g : spec.intro)
                        if (g.categories == CategorySet{c})
                            examples.push_back({{"id", g.id}, {"body", g.body}, {"explanation", g.explanation}});
                    norms.push_back({{"norm", std::string(to_string(c))},
                                     {"definition", std::string(norm_definition(c))},
                                     {"examples", examples}});
                }
                return reply(200, json{{"step", "intro"},
                                       {"content_warning", kContentWarning},
                                       {"norms", norms},
                                       {"profile", profile_json(profile)}});
            }
            const auto& item = spec.training.at(static_cast<std::size_t>(profile.training_progress));
            return reply(200, json{{"step", "training"},
                                   {"index", profile.training_progress},
                                   {"total", kTrainingItems},
                                   {"item", {{"id", item.id}, {"body", item.body}}},
                                   {"profile", profile_json(profile)}});
        }
        case AnnotatorState::qualified: break;
    }
    const auto task = campaign_.assign(annotator_id, now());
    const int done = campaign_.main_submissions(annotator_id);
    if (task) {
        const auto& t = spec.tasks[*task];
        return reply(200, json{{"step", "task"},
                               {"item", {{"id", t.comment_id}, {"body", t.body}}},
                               {"main_submissions", done},
                               {"batch_progress", done % kBatchSize},
                               {"batch_size", kBatchSize}});
    }
    json codes = json::array();
    for (int b = 1; b <= done / kBatchSize; ++b) codes.push_back(completion_code(options_.code_key, annotator_id, b));
    const std::string training = completion_code(options_.code_key, annotator_id, kTrainingBatch);
    if (campaign_.has_open_work(annotator_id))
        return reply(200, json{{"step", "wait"},
                               {"retry_after", 60},
                               {"main_submissions", done},
                               {"training_code", training},
                               {"completion_codes", codes}});
    // No work will return for this annotator, so a trailing partial batch is paid out too.
    if (done % kBatchSize != 0) codes.push_back(completion_code(options_.code_key, annotator_id, done / kBatchSize + 1));
    return reply(200, json{{"step", "complete"},
                           {"main_submissions", done},
                           {"training_code", training},
                           {"completion_codes", codes}});
}

ServiceResponse Service::do_submit(const std::string& annotator_id, const ServiceRequest& request) {
    const json body = json::parse(request.body);
    if (!body.is_object() || !body.contains("kind") || !body["kind"].is_string())
        throw std::invalid_argument("kind is required");
    const std::string kind = body["kind"].get<std::string>();
    const std::int64_t t = now();
    if (kind == "intro") {
        const auto profile = campaign_.acknowledge_intro(annotator_id, t);
        return reply(200, json{{"ok", true}, {"kind", "intro"}, {"profile", profile_json(profile)}});
    }
    if (kind == "training") {
        if (!body.contains("index") || !body["index"].is_number_integer())
            throw std::invalid_argument("index is required");
        const auto fb = campaign_.submit_training(annotator_id, body["index"].get<int>(),
                                                  parse_categories(body.value("categories", json::array())), t);
        json out{{"ok", true},
                 {"kind", "training"},
                 {"index", fb.item_index},
                 {"duplicate", fb.duplicate},
                 {"gold", categories_json(fb.gold)},
                 {"explanation", fb.explanation},
                 {"profile", profile_json(fb.profile)}};
        if (fb.profile.state != AnnotatorState::in_training) {
            out["verdict"] = std::string(to_string(fb.profile.state));
            out["training_code"] = completion_code(options_.code_key, annotator_id, kTrainingBatch);
        }
        return reply(200, out);
    }
    if (kind == "task") {
        if (!body.contains("comment_id") || !body["comment_id"].is_string())
            throw std::invalid_argument("comment_id is required");
        const auto outcome = campaign_.submit(annotator_id, body["comment_id"].get<std::string>(),
                                              parse_categories(body.value("categories", json::array())), t);
        json out{{"ok", true},
                 {"kind", "task"},
                 {"duplicate", outcome.duplicate},
                 {"main_submissions", outcome.main_submissions}};
        if (!outcome.duplicate && outcome.main_submissions % kBatchSize == 0)
            out["completion_code"] = completion_code(options_.code_key, annotator_id, outcome.main_submissions / kBatchSize);
        return reply(200, out);
    }
    throw std::invalid_argument("kind must be intro, training or task");
}

ServiceResponse Service::do_export(const ServiceRequest& request) {
    const auto q = request.query.find("partial");
    const bool partial = q != request.query.end() && (q->second == "1" || q->second == "true");
    CampaignExport result;
    try {
        result = export_campaign(campaign_, partial);
    } catch (const std::invalid_argument& e) {
        return error(409, "open_comments", e.what());
    }
    json files{{"flagged.csv", format_annotations(result.flagged)},
               {"unflagged.csv", format_annotations(result.unflagged)}};
    if (result.has_moderated_pool) files["moderated.csv"] = format_annotations(result.moderated);
    return reply(200, json{{"partial", result.partial},
                           {"open_comments", result.open_tasks},
                           {"files", files},
                           {"meta", json::parse(export_meta_json(result))}});
}

ServiceResponse Service::do_progress() {
    const auto p = campaign_.progress(now());
    return reply(200, json{{"comments", p.tasks},
                           {"closed", p.closed},
                           {"records", p.records},
                           {"active_leases", p.active_leases},
                           {"annotators_by_state", p.annotators_by_state}});
}

struct HttpServer::Impl {
    Service& service;
    httplib::Server server;
    explicit Impl(Service& s) : service(s) {}
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        ServiceRequest r;
        r.method = req.method;
        r.path = req.path;
        r.authorization = req.get_header_value("Authorization");
        r.body = req.body;
        for (const auto& [k, v] : req.params) r.query[k] = v;
        const auto out = impl_->service.handle(r);
        res.status = out.status;
        res.set_content(out.body, out.content_type);
    };
    impl_->server.Get(".*", handler);
    impl_->server.Post(".*", handler);
    impl_->server.Put(".*", handler);
    impl_->server.Delete(".*", handler);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) throw std::runtime_error("cannot bind " + host);
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port))
        throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::wait_until_ready() { impl_->server.wait_until_ready(); }

void HttpServer::stop() {
    if (impl_->server.is_running()) impl_->server.stop();
}

}  // namespace normwatch
