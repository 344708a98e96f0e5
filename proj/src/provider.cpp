#include "forge/provider.hpp"

#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "forge/errors.hpp"
#include "forge/hashing.hpp"
#include "forge/text.hpp"
#include "http_util.hpp"

namespace forge {

std::string ChatRequest::prompt_hash() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& m : messages) j.push_back({{"role", m.role}, {"content", m.content}});
    return sha256_hex(j.dump());
}

void ProviderConfig::validate() const {
    if (name.empty()) throw ValidationError("provider name must be non-empty");
    if (temperature < 0) throw ValidationError("provider '" + name + "': temperature must be >= 0");
    if (requests_per_minute < 1) throw ValidationError("provider '" + name + "': requests_per_minute must be >= 1");
    if (max_output_tokens < 1) throw ValidationError("provider '" + name + "': max_output_tokens must be >= 1");
    if (retry.attempts < 1) throw ValidationError("provider '" + name + "': retry attempts must be >= 1");
}

ProviderConfig ProviderConfig::from_json(const nlohmann::json& j) {
    ProviderConfig c;
    c.name = j.at("name").get<std::string>();
    c.base_url = j.value("base_url", "");
    c.model_id = j.value("model_id", c.name);
    c.temperature = j.value("temperature", c.temperature);
    c.max_output_tokens = j.value("max_output_tokens", c.max_output_tokens);
    c.auth_env_var = j.value("auth_env_var", c.auth_env_var);
    c.requests_per_minute = j.value("requests_per_minute", c.requests_per_minute);
    c.retry.attempts = j.value("retry_attempts", c.retry.attempts);
    c.retry.initial_backoff = std::chrono::milliseconds(
        j.value("retry_initial_backoff_ms", static_cast<long long>(c.retry.initial_backoff.count())));
    c.validate();
    return c;
}

nlohmann::json ProviderConfig::to_json() const {
    return {{"name", name},
            {"base_url", base_url},
            {"model_id", model_id},
            {"temperature", temperature},
            {"max_output_tokens", max_output_tokens},
            {"auth_env_var", auth_env_var},
            {"requests_per_minute", requests_per_minute},
            {"retry_attempts", retry.attempts},
            {"retry_initial_backoff_ms", retry.initial_backoff.count()}};
}

RateLimiter::RateLimiter(double requests_per_minute)
    : rate_per_sec_(requests_per_minute / 60.0),
      capacity_(std::max(1.0, requests_per_minute / 6.0)),
      tokens_(capacity_),
      last_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
    std::unique_lock lock(mu_);
    for (;;) {
        auto now = std::chrono::steady_clock::now();
        tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_per_sec_);
        last_ = now;
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return;
        }
        auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_per_sec_);
        lock.unlock();
        std::this_thread::sleep_for(wait);
        lock.lock();
    }
}

std::string with_retries(const RetryPolicy& policy, const std::function<std::string()>& fn) {
    auto backoff = policy.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        try {
            return fn();
        } catch (const ProviderError& e) {
            if (!e.retryable() || attempt >= policy.attempts) throw;
        }
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
    }
}

HttpChatProvider::HttpChatProvider(ProviderConfig config)
    : config_(std::move(config)), limiter_(config_.requests_per_minute) {
    config_.validate();
    if (!config_.auth_env_var.empty()) {
        if (const char* key = std::getenv(config_.auth_env_var.c_str())) api_key_ = key;
    }
}

ChatReply HttpChatProvider::complete(const ChatRequest& request) {
    nlohmann::json body{{"model", config_.model_id},
                        {"temperature", request.temperature},
                        {"max_tokens", request.max_tokens},
                        {"messages", nlohmann::json::array()}};
    for (const auto& m : request.messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    auto url = detail::split_url(config_.base_url);
    auto payload = body.dump();

    auto content = with_retries(config_.retry, [&]() -> std::string {
        limiter_.acquire();
        httplib::Client cli(url.origin);
        cli.set_connection_timeout(30);
        cli.set_read_timeout(600);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        auto res = cli.Post(url.prefix + "/chat/completions", headers, payload, "application/json");
        if (!res) throw ProviderError(config_.name + ": " + httplib::to_string(res.error()));
        if (res->status < 200 || res->status >= 300) {
            throw ProviderError(config_.name + ": HTTP " + std::to_string(res->status), res->status);
        }
        try {
            auto j = nlohmann::json::parse(res->body);
            const auto& msg = j.at("choices").at(0).at("message").at("content");
            return msg.is_null() ? std::string() : msg.get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw ProviderError(config_.name + ": malformed completion response: " + e.what(), 502);
        }
    });
    return {std::move(content), config_.model_id};
}

RoundRobinProvider::RoundRobinProvider(std::vector<std::shared_ptr<ChatProvider>> providers)
    : providers_(std::move(providers)) {
    if (providers_.empty()) throw ParameterError("round-robin needs at least one provider");
}

ChatReply RoundRobinProvider::complete(const ChatRequest& request) {
    std::shared_ptr<ChatProvider> p;
    {
        std::lock_guard lock(mu_);
        p = providers_[next_++ % providers_.size()];
    }
    return p->complete(request);
}

std::string RoundRobinProvider::name() const {
    std::vector<std::string> names;
    for (const auto& p : providers_) names.push_back(p->name());
    return text::join(names, "+");
}

CachedProvider::CachedProvider(std::shared_ptr<ChatProvider> inner, std::filesystem::path cache_file)
    : inner_(std::move(inner)), file_(std::move(cache_file)) {
    std::ifstream in(file_);
    std::string line;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            cache_[j.at("key").get<std::string>()] = {j.at("content").get<std::string>(), j.at("model").get<std::string>()};
        } catch (const nlohmann::json::exception&) {
            // A torn final line from an interrupted run; the call is simply redone.
        }
    }
}

ChatReply CachedProvider::complete(const ChatRequest& request) {
    auto key = request.prompt_hash();
    {
        std::lock_guard lock(mu_);
        if (auto it = cache_.find(key); it != cache_.end()) {
            ++hits_;
            return it->second;
        }
    }
    ChatReply reply = inner_->complete(request);
    std::lock_guard lock(mu_);
    ++misses_;
    if (!cache_.count(key)) {
        cache_[key] = reply;
        if (!file_.parent_path().empty()) std::filesystem::create_directories(file_.parent_path());
        std::ofstream out(file_, std::ios::app);
        out << nlohmann::json{{"key", key}, {"model", reply.model}, {"content", reply.content}}.dump() << '\n';
    }
    return reply;
}

std::size_t CachedProvider::hits() const {
    std::lock_guard lock(mu_);
    return hits_;
}

std::size_t CachedProvider::misses() const {
    std::lock_guard lock(mu_);
    return misses_;
}

}  // namespace forge
