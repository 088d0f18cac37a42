#include "agentgraph/provider.hpp"

#include "agentgraph/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace agentgraph {

using nlohmann::json;

ProviderScript parse_script(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        fail(Errc::parse, std::string("bad script: ") + e.what());
    }
    ProviderScript script;
    try {
        std::string mode = j.value("mode", "sequential");
        if (mode == "sequential") {
            script.mode = ScriptMode::Sequential;
        } else if (mode == "matched") {
            script.mode = ScriptMode::Matched;
        } else {
            fail(Errc::parse, "unknown script mode '" + mode + "'");
        }
        for (const json& ej : j.at("entries")) {
            ScriptEntry entry;
            if (ej.contains("match") && !ej.at("match").is_null()) {
                const json& mj = ej.at("match");
                if (mj.is_string() && mj.get<std::string>() == "any") {
                    entry.match = ScriptEntry::Match::Any;
                } else if (mj.is_object() && mj.contains("substring")) {
                    entry.match = ScriptEntry::Match::Substring;
                    entry.needle = mj.at("substring").get<std::string>();
                } else {
                    fail(Errc::parse, "bad script matcher");
                }
            }
            entry.response.text = ej.at("text").get<std::string>();
            entry.response.prefill_tokens = ej.value("prefill_tokens", std::uint64_t(0));
            entry.response.decode_tokens = ej.value("decode_tokens", std::uint64_t(0));
            script.entries.push_back(std::move(entry));
        }
    } catch (const json::exception& e) {
        fail(Errc::parse, std::string("bad script: ") + e.what());
    }
    return script;
}

ProviderScript load_script(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::io, "cannot open script file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_script(buf.str());
}

std::string script_to_json(const ProviderScript& script) {
    json j;
    j["mode"] = script.mode == ScriptMode::Sequential ? "sequential" : "matched";
    json entries = json::array();
    for (const ScriptEntry& entry : script.entries) {
        json ej;
        if (entry.match == ScriptEntry::Match::Any) {
            ej["match"] = "any";
        } else {
            ej["match"] = json{{"substring", entry.needle}};
        }
        ej["text"] = entry.response.text;
        ej["prefill_tokens"] = entry.response.prefill_tokens;
        ej["decode_tokens"] = entry.response.decode_tokens;
        entries.push_back(std::move(ej));
    }
    j["entries"] = std::move(entries);
    return j.dump(2);
}

ScriptedProvider::ScriptedProvider(ProviderScript script) : script_(std::move(script)) {}

ChatResponse ScriptedProvider::complete(const ChatRequest& request) {
    std::lock_guard<std::mutex> lock(mutex_);
    log_.push_back(request);
    if (script_.mode == ScriptMode::Sequential) {
        if (next_ >= script_.entries.size())
            fail(Errc::script_exhausted,
                 "script exhausted after " + std::to_string(script_.entries.size()) + " calls");
        return script_.entries[next_++].response;
    }
    const std::string haystack = request.system_prompt + "\n" + request.user_content;
    for (const ScriptEntry& entry : script_.entries) {
        if (entry.match == ScriptEntry::Match::Any) return entry.response;
        if (haystack.find(entry.needle) != std::string::npos) return entry.response;
    }
    fail(Errc::no_match, "no script entry matches request (user content starts: '" +
                             request.user_content.substr(0, 60) + "')");
}

std::size_t ScriptedProvider::calls_made() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return log_.size();
}

std::vector<ChatRequest> ScriptedProvider::requests() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return log_;
}

} // namespace agentgraph
