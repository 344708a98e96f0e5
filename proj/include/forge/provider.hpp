#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace forge {

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 1024;

    // sha256 over the messages; the resumability key.
    std::string prompt_hash() const;
};

struct ChatReply {
    std::string content;
    std::string model;
};

// A chat-completion endpoint. Implementations must be safe to call from
// several threads at once.
class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual ChatReply complete(const ChatRequest& request) = 0;
    virtual std::string name() const = 0;
};

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{2000};
};

struct ProviderConfig {
    std::string name;
    std::string base_url;  // e.g. https://api.openai.com/v1
    std::string model_id;
    double temperature = 0.7;
    int max_output_tokens = 1024;
    std::string auth_env_var = "OPENAI_API_KEY";
    double requests_per_minute = 60;
    RetryPolicy retry;

    void validate() const;
    static ProviderConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

// Token bucket refilled continuously at the configured rate; bursts of up to
// ten seconds of requests (at least one).
class RateLimiter {
public:
    explicit RateLimiter(double requests_per_minute);
    void acquire();

private:
    std::mutex mu_;
    double rate_per_sec_;
    double capacity_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
};

// Calls fn, retrying ProviderError::retryable() failures with exponential backoff.
std::string with_retries(const RetryPolicy& policy, const std::function<std::string()>& fn);

// OpenAI-compatible chat-completion client:
// POST {base_url}/chat/completions {model, messages, temperature, max_tokens}
// -> {choices: [{message: {content}}]}.
class HttpChatProvider : public ChatProvider {
public:
    explicit HttpChatProvider(ProviderConfig config);
    ChatReply complete(const ChatRequest& request) override;
    std::string name() const override { return config_.name; }
    const ProviderConfig& config() const noexcept { return config_; }

private:
    ProviderConfig config_;
    std::string api_key_;
    RateLimiter limiter_;
};

// Wraps a callable; used for in-process mocks and language bindings.
class FunctionProvider : public ChatProvider {
public:
    using Fn = std::function<std::string(const ChatRequest&)>;
    FunctionProvider(std::string model, Fn fn) : model_(std::move(model)), fn_(std::move(fn)) {}
    ChatReply complete(const ChatRequest& request) override { return {fn_(request), model_}; }
    std::string name() const override { return model_; }

private:
    std::string model_;
    Fn fn_;
};

// Interchangeable generators; requests go to each in turn.
class RoundRobinProvider : public ChatProvider {
public:
    explicit RoundRobinProvider(std::vector<std::shared_ptr<ChatProvider>> providers);
    ChatReply complete(const ChatRequest& request) override;
    std::string name() const override;

private:
    std::vector<std::shared_ptr<ChatProvider>> providers_;
    std::mutex mu_;
    std::size_t next_ = 0;
};

// Persists replies keyed by prompt hash (JSON Lines) so a rerun with the same
// prompts issues no duplicate calls.
class CachedProvider : public ChatProvider {
public:
    CachedProvider(std::shared_ptr<ChatProvider> inner, std::filesystem::path cache_file);
    ChatReply complete(const ChatRequest& request) override;
    std::string name() const override { return inner_->name(); }
    std::size_t hits() const;
    std::size_t misses() const;

private:
    std::shared_ptr<ChatProvider> inner_;
    std::filesystem::path file_;
    mutable std::mutex mu_;
    std::map<std::string, ChatReply> cache_;
    std::size_t hits_ = 0;
    std::size_t misses_ = 0;
};

}  // namespace forge
