#pragma once

#include "agentgraph/provider.hpp"

#include <chrono>
#include <string>

namespace agentgraph {

// Chat-completions client for any OpenAI-compatible endpoint. The bearer
// token is read from the environment (PROVIDER_API_KEY by default) at
// construction; requests carry {model, messages, temperature, max_tokens}
// and replies are read from choices[0].message.content plus the usage block
// {prompt_tokens, completion_tokens}. A missing usage block degrades to a
// whitespace-split token estimate with estimated_usage set; cached prefill
// is surfaced from usage.prompt_tokens_details.cached_tokens when present.
struct HttpProviderConfig {
    std::string base_url; // e.g. "http://127.0.0.1:8080"
    std::string path = "/v1/chat/completions";
    std::string api_key_env = "PROVIDER_API_KEY";
    int max_retries = 3; // transport errors and 5xx only; 4xx never retries
    std::chrono::milliseconds retry_backoff{250};
    int timeout_seconds = 120;
};

class HttpProvider : public Provider {
  public:
    explicit HttpProvider(HttpProviderConfig config); // Errc::config on bad url

    ChatResponse complete(const ChatRequest& request) override;

  private:
    HttpProviderConfig config_;
    std::string api_key_;
};

// Whitespace-split token count used when a backend omits usage.
std::uint64_t estimate_tokens(std::string_view text);

} // namespace agentgraph
