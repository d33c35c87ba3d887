#include <cstdlib>
#include <memory>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ovdst/errors.hpp"
#include "ovdst/gateway.hpp"

namespace ovdst {

namespace {

struct ParsedUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;    // no trailing slash
};

ParsedUrl parse_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("backend url needs a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    ParsedUrl out;
    out.origin = url.substr(0, path_start);
    out.path = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
    return out;
}

class HttpBackend final : public Backend {
public:
    HttpBackend(HttpBackendConfig config, std::string api_key)
        : config_(std::move(config)), api_key_(std::move(api_key)), url_(parse_url(config_.base_url)) {}

    std::string name() const override { return config_.name; }

    std::string send(const PromptSpec& spec) override {
        httplib::Client client(url_.origin);
        client.set_connection_timeout(config_.timeout);
        client.set_read_timeout(config_.timeout);
        client.set_bearer_token_auth(api_key_);

        const nlohmann::json body = {
            {"model", config_.model},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", spec.text}}})},
            {"temperature", spec.params.temperature},
            {"top_p", spec.params.top_p},
            {"max_tokens", spec.params.max_tokens},
        };
        auto res = client.Post(url_.path + "/chat/completions", body.dump(), "application/json");
        if (!res) throw TransportError(config_.name + ": " + httplib::to_string(res.error()));
        if (res->status == 429) {
            std::chrono::milliseconds retry_after{0};
            if (res->has_header("Retry-After")) {
                try {
                    retry_after = std::chrono::seconds(std::stol(res->get_header_value("Retry-After")));
                } catch (const std::exception&) {
                }
            }
            throw RateLimited(config_.name + ": HTTP 429", retry_after);
        }
        if (res->status >= 500) throw TransportError(config_.name + ": HTTP " + std::to_string(res->status));
        if (res->status != 200) {
            throw BackendRefusal(config_.name + ": HTTP " + std::to_string(res->status) + ": " + res->body);
        }
        const auto reply = nlohmann::json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty()) {
            throw TransportError(config_.name + ": malformed completion payload");
        }
        const auto& choice = reply["choices"][0];
        if (choice.value("finish_reason", "") == "content_filter") {
            throw BackendRefusal(config_.name + ": completion blocked by content filter");
        }
        const auto& content = choice["message"]["content"];
        return content.is_string() ? content.get<std::string>() : std::string();
    }

private:
    HttpBackendConfig config_;
    std::string api_key_;
    ParsedUrl url_;
};

} // namespace

std::shared_ptr<Backend> make_http_backend(const HttpBackendConfig& config) {
    const char* key = std::getenv(config.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
        throw ConfigError("environment variable " + config.api_key_env + " is not set for backend " + config.name);
    }
    return std::make_shared<HttpBackend>(config, key);
}

} // namespace ovdst
