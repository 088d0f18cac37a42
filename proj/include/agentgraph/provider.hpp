#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

namespace agentgraph {

struct ChatRequest {
    std::string model_name;
    std::string system_prompt; // empty -> no system message on the wire
    std::string user_content;
    double temperature = 0.0;
    int max_tokens = 1024;
};

struct ChatResponse {
    std::string text;
    std::uint64_t prefill_tokens = 0;
    std::uint64_t decode_tokens = 0;
    std::uint64_t cached_prefill_tokens = 0; // subset of prefill served from cache
    bool estimated_usage = false;            // true when the backend sent no usage block
};

// (prefill, decode) token counts of a completed call.
inline std::pair<std::uint64_t, std::uint64_t> usage_of(const ChatResponse& response) {
    return {response.prefill_tokens, response.decode_tokens};
}

class Provider {
  public:
    virtual ~Provider() = default;
    // Must be safe to call from several threads at once.
    virtual ChatResponse complete(const ChatRequest& request) = 0;
};

// Deterministic provider driven by a script, for desk-scale runs and tests.
//
// sequential mode: entries are consumed strictly in order, one per call,
// matchers ignored; running past the end raises Errc::script_exhausted.
// matched mode: stateless; each call returns the first entry whose needle is
// a substring of the request text (system prompt + "\n" + user content);
// "any" entries match everything; no hit raises Errc::no_match. Entries are
// never consumed, so one script can serve many items and any thread count.
struct ScriptEntry {
    enum class Match { Any, Substring };
    Match match = Match::Any;
    std::string needle;
    ChatResponse response;
};

enum class ScriptMode { Sequential, Matched };

struct ProviderScript {
    ScriptMode mode = ScriptMode::Sequential;
    std::vector<ScriptEntry> entries;
};

// JSON shape:
//   {"mode": "sequential"|"matched",
//    "entries": [{"match": "any"|{"substring": "..."},
//                 "text": "...", "prefill_tokens": 12, "decode_tokens": 10}]}
// Token fields are optional (default 0); "match" is optional (default any).
ProviderScript parse_script(const std::string& json_text);
ProviderScript load_script(const std::string& path);
std::string script_to_json(const ProviderScript& script);

class ScriptedProvider : public Provider {
  public:
    explicit ScriptedProvider(ProviderScript script);

    ChatResponse complete(const ChatRequest& request) override;

    std::size_t calls_made() const;
    // Every request seen, in completion order (arbitrary across threads).
    std::vector<ChatRequest> requests() const;

  private:
    ProviderScript script_;
    std::size_t next_ = 0;
    mutable std::mutex mutex_;
    std::vector<ChatRequest> log_;
};

} // namespace agentgraph
