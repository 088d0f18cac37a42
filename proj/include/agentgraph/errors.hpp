#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace agentgraph {

// Every failure the library raises goes through this one exception type so
// callers can switch on a stable code instead of string-matching messages.
enum class Errc {
    duplicate_node,
    unknown_node,
    no_llm_node,
    duplicate_request_id,
    missing_group,
    script_exhausted,
    no_match,
    transport,
    malformed_reply,
    length_mismatch,
    out_of_range_confidence,
    empty_ledger,
    domain,
    custom_hook_missing,
    parse,
    config,
    io,
};

class Error : public std::runtime_error {
  public:
    Error(Errc code, std::string message)
        : std::runtime_error(std::move(message)), code_(code) {}

    Errc code() const noexcept { return code_; }

  private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
    throw Error(code, message);
}

} // namespace agentgraph
