#include "forge/review_server.hpp"

#include <httplib.h>

#include "forge/errors.hpp"

namespace forge::curate {

nlohmann::json rule_manifest(const RuleConfig& rules) {
    nlohmann::json bounds = nlohmann::json::object();
    for (const auto& [field, b] : rules.field_bounds) bounds[field] = {{"min", b.min_chars}, {"max", b.max_chars}};
    return {{"tasks",
             {{"mcq", {{"fields", {"question", "options", "answer"}}, {"option_labels", {"A", "B", "C", "D"}}}},
              {"qa", {{"fields", {"question", "answer"}}}},
              {"summarization", {{"fields", {"source", "summary"}}, {"cobol_marker_patterns", rules.cobol_marker_patterns}}}}},
            {"length_bounds", bounds},
            {"verdicts", {"accept", "fix", "delete"}}};
}

struct ReviewServer::Impl {
    EntryStore& store;
    ReviewServerOptions options;
    httplib::Server server;

    Impl(EntryStore& s, ReviewServerOptions o) : store(s), options(std::move(o)) {}
};

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& reason, const std::string& message) {
    send_json(res, status, {{"error", reason}, {"message", message}});
}

std::string actor_of(const httplib::Request& req, const nlohmann::json* body) {
    if (body && body->contains("actor") && body->at("actor").is_string()) return body->at("actor").get<std::string>();
    if (req.has_param("actor")) return req.get_param_value("actor");
    if (req.has_header("X-Forge-Actor")) return req.get_header_value("X-Forge-Actor");
    return "anonymous";
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const NotFoundError& e) {
        send_error(res, 404, "not_found", e.what());
    } catch (const ConflictError& e) {
        send_error(res, 409, "conflict", e.what());
    } catch (const ValidationError& e) {
        send_error(res, 400, "validation", e.what());
    } catch (const ParameterError& e) {
        send_error(res, 400, "bad_request", e.what());
    } catch (const nlohmann::json::exception& e) {
        send_error(res, 400, "bad_request", e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
    }
}

}  // namespace

ReviewServer::ReviewServer(EntryStore& store, ReviewServerOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options))) {
    auto& srv = impl_->server;
    Impl* self = impl_.get();

    srv.Get("/api/review/next", [self](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            std::size_t batch = 10;
            if (req.has_param("batch")) {
                const auto raw = req.get_param_value("batch");
                std::size_t used = 0;
                long long v = 0;
                try {
                    v = std::stoll(raw, &used);
                } catch (const std::exception&) {
                    used = 0;
                }
                if (used != raw.size() || v < 1) throw ParameterError("batch must be a positive integer");
                batch = static_cast<std::size_t>(v);
            }
            std::optional<Task> task;
            if (req.has_param("task") && !req.get_param_value("task").empty()) {
                task = parse_task(req.get_param_value("task"));
            }
            auto entries = self->store.review_next(batch, task, actor_of(req, nullptr));
            nlohmann::json list = nlohmann::json::array();
            for (const auto& e : entries) list.push_back(to_json(e));
            send_json(res, 200, {{"entries", list}});
        });
    });

    srv.Post("/api/review/verdict", [self](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto body = nlohmann::json::parse(req.body);
            if (!body.is_object()) throw ValidationError("verdict body must be a JSON object");
            Verdict v;
            v.kind = parse_verdict_kind(body.at("verdict").get<std::string>());
            if (v.kind == VerdictKind::fix) {
                if (!body.contains("fields")) throw ValidationError("fix verdict requires fields");
                v.fields = body.at("fields");
            }
            auto updated = self->store.review_verdict(body.at("entry_id").get<std::string>(), v, actor_of(req, &body));
            send_json(res, 200, to_json(updated));
        });
    });

    srv.Get("/api/review/stats", [self](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            auto stats = self->store.stats().to_json();
            stats["rules"] = rule_manifest(self->options.rules);
            send_json(res, 200, stats);
        });
    });

    if (impl_->options.static_dir) {
        if (!srv.set_mount_point("/", impl_->options.static_dir->string())) {
            throw IoError("cannot serve static files from " + impl_->options.static_dir->string());
        }
    }
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind(const std::string& host, int port) {
    auto& srv = impl_->server;
    if (port == 0) {
        int bound = srv.bind_to_any_port(host);
        if (bound < 0) throw IoError("cannot bind review server on " + host);
        return bound;
    }
    if (!srv.bind_to_port(host, port)) throw IoError("cannot bind review server on " + host + ":" + std::to_string(port));
    return port;
}

void ReviewServer::serve() { impl_->server.listen_after_bind(); }

void ReviewServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace forge::curate
