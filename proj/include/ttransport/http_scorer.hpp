#pragma once

#include <chrono>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#include <json.hpp>

// Before httplib: <resolv.h> defines a _res macro that collides with Eigen.
#include "density_ratio.hpp"
#include "error.hpp"

#include <httplib.h>

namespace ttransport {

inline constexpr const char* kEndpointEnv = "TTRANSPORT_LM_ENDPOINT";
inline constexpr const char* kApiKeyEnv = "TTRANSPORT_API_KEY";

struct LmProviderConfig {
    std::string endpoint;  // http://host[:port]/path
    std::string prompt_R;
    std::string prompt_T;
    std::size_t max_parallel = 4;
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{200};
    std::chrono::seconds timeout{60};
    std::optional<std::string> api_key;

    void validate() const {
        if (endpoint.empty())
            throw Error(std::string("no LM endpoint configured: pass --endpoint or set ") + kEndpointEnv);
        if (prompt_R.empty() || prompt_T.empty()) throw Error("LM prompts must be nonempty");
        if (prompt_R == prompt_T) throw Error("source and target prompts must differ");
        if (attempts < 1) throw Error("retry budget must allow at least one attempt");
        if (max_parallel == 0) throw Error("max parallel requests must be positive");
    }
};

inline std::optional<std::string> env_value(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

struct ParsedUrl {
    std::string base;  // scheme://host[:port]
    std::string path;
};

inline ParsedUrl parse_http_url(const std::string& url) {
    constexpr std::string_view scheme = "http://";
    if (url.rfind("https://", 0) == 0)
        throw Error("https endpoints are not supported; run a local http adapter: " + url);
    if (url.rfind(scheme, 0) != 0) throw Error("endpoint must start with http://: " + url);
    const auto slash = url.find('/', scheme.size());
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

// Scores sentences through an HTTP endpoint that accepts {"prompt", "text"} and
// answers {"token_logprobs": [...]} for the tokens of text given the prompt.
// Transport failures and 429/5xx responses are retried with exponential backoff.
class HttpScorer : public LanguageScorer {
public:
    HttpScorer(const LmProviderConfig& config, std::string prompt)
        : config_(config), prompt_(std::move(prompt)), url_(parse_http_url(config.endpoint)) {}

    double sentence_logprob(std::string_view sentence) const override {
        const std::string body = nlohmann::json{{"prompt", prompt_}, {"text", std::string(sentence)}}.dump();
        httplib::Headers headers;
        if (config_.api_key) headers.emplace("Authorization", "Bearer " + *config_.api_key);

        std::string last_error;
        auto backoff = config_.initial_backoff;
        for (int attempt = 1; attempt <= config_.attempts; ++attempt) {
            httplib::Client client(url_.base);
            client.set_connection_timeout(config_.timeout);
            client.set_read_timeout(config_.timeout);
            auto res = client.Post(url_.path, headers, body, "application/json");
            if (res && res->status == 200) return parse_response(res->body);
            if (res) {
                last_error = "HTTP " + std::to_string(res->status);
                if (res->status != 429 && res->status < 500) break;
            } else {
                last_error = httplib::to_string(res.error());
            }
            if (attempt < config_.attempts) {
                std::this_thread::sleep_for(backoff);
                backoff *= 2;
            }
        }
        throw ProviderError("LM provider " + config_.endpoint + " failed: " + last_error);
    }

    static double parse_response(const std::string& body) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const nlohmann::json::parse_error&) {
            throw ProviderError("LM provider returned invalid JSON");
        }
        auto it = j.find("token_logprobs");
        if (it == j.end() || !it->is_array() || it->empty())
            throw ProviderError("LM provider response lacks a nonempty token_logprobs array");
        double lp = 0.0;
        for (const auto& v : *it) {
            if (!v.is_number()) throw ProviderError("non-numeric token log-probability");
            lp += v.get<double>();
        }
        return lp;
    }

private:
    LmProviderConfig config_;
    std::string prompt_;
    ParsedUrl url_;
};

} // namespace ttransport
