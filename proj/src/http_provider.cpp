#include "agentgraph/http_provider.hpp"

#include "agentgraph/errors.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cctype>
#include <cstdlib>
#include <thread>

namespace agentgraph {

using nlohmann::json;

std::uint64_t estimate_tokens(std::string_view text) {
    std::uint64_t count = 0;
    bool in_word = false;
    for (char c : text) {
        bool space = std::isspace(static_cast<unsigned char>(c));
        if (!space && !in_word) ++count;
        in_word = !space;
    }
    return count;
}

HttpProvider::HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) fail(Errc::config, "http provider: base_url required");
    if (config_.base_url.back() == '/') config_.base_url.pop_back();
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

ChatResponse HttpProvider::complete(const ChatRequest& request) {
    json body;
    body["model"] = request.model_name;
    json messages = json::array();
    if (!request.system_prompt.empty())
        messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
    messages.push_back({{"role", "user"}, {"content", request.user_content}});
    body["messages"] = std::move(messages);
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_tokens;
    const std::string payload = body.dump();

    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    std::string last_error;
    for (int attempt = 0;; ++attempt) {
        // A fresh client per attempt keeps complete() safe across threads.
        httplib::Client client(config_.base_url);
        client.set_connection_timeout(config_.timeout_seconds, 0);
        client.set_read_timeout(config_.timeout_seconds, 0);

        auto res = client.Post(config_.path, headers, payload, "application/json");
        if (res && res->status >= 200 && res->status < 300) {
            json reply = json::parse(res->body, nullptr, false);
            if (reply.is_discarded())
                fail(Errc::malformed_reply, "backend sent unparseable JSON");
            try {
                ChatResponse out;
                out.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
                if (reply.contains("usage") && reply["usage"].is_object()) {
                    const json& usage = reply["usage"];
                    out.prefill_tokens = usage.value("prompt_tokens", std::uint64_t(0));
                    out.decode_tokens = usage.value("completion_tokens", std::uint64_t(0));
                    if (usage.contains("prompt_tokens_details") &&
                        usage["prompt_tokens_details"].is_object())
                        out.cached_prefill_tokens =
                            usage["prompt_tokens_details"].value("cached_tokens",
                                                                 std::uint64_t(0));
                } else {
                    out.prefill_tokens =
                        estimate_tokens(request.system_prompt) + estimate_tokens(request.user_content);
                    out.decode_tokens = estimate_tokens(out.text);
                    out.estimated_usage = true;
                }
                return out;
            } catch (const json::exception& e) {
                fail(Errc::malformed_reply, std::string("backend reply missing fields: ") + e.what());
            }
        }

        if (res && res->status >= 400 && res->status < 500)
            fail(Errc::transport, "backend rejected request with status " +
                                      std::to_string(res->status) + ": " + res->body);

        last_error = res ? "status " + std::to_string(res->status)
                         : "connection error " + httplib::to_string(res.error());
        if (attempt >= config_.max_retries) break;
        std::this_thread::sleep_for(config_.retry_backoff);
    }
    fail(Errc::transport, "backend unreachable after " + std::to_string(config_.max_retries + 1) +
                              " attempts (" + last_error + ")");
}

} // namespace agentgraph
