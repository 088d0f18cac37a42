#include "agentgraph/policy.hpp"

#include "agentgraph/errors.hpp"
#include "agentgraph/prompts.hpp"

#include <json.hpp>

#include <cctype>
#include <map>
#include <mutex>

namespace agentgraph {

using nlohmann::json;

namespace {

std::string trimmed(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

// Raters are asked for a bare JSON object, but models love markdown fences
// and chatter; accept the object wherever it is.
std::optional<json> parse_reply_object(const std::string& text) {
    auto try_parse = [](std::string_view candidate) -> std::optional<json> {
        json parsed = json::parse(candidate, nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object()) return std::nullopt;
        return parsed;
    };
    if (auto direct = try_parse(trimmed(text))) return direct;
    if (auto fence = text.find("```"); fence != std::string::npos) {
        std::size_t body = text.find('\n', fence);
        if (body != std::string::npos) {
            std::size_t close = text.find("```", body);
            if (close != std::string::npos)
                if (auto fenced = try_parse(trimmed(std::string_view(text).substr(
                        body + 1, close - body - 1))))
                    return fenced;
        }
    }
    std::size_t open = text.find('{');
    std::size_t close = text.rfind('}');
    if (open != std::string::npos && close != std::string::npos && close > open)
        return try_parse(std::string_view(text).substr(open, close - open + 1));
    return std::nullopt;
}

std::mutex g_hooks_mutex;
std::map<std::string, VerifyHook>& hooks() {
    static std::map<std::string, VerifyHook> registry;
    return registry;
}

} // namespace

RatingOutcome rate_difficulty(const std::string& question, const RaterConfig& config,
                              const ProviderSet& providers) {
    if (config.rater_model.empty()) fail(Errc::config, "rater: rater_model required");
    if (config.mode == RaterMode::Scaled && (config.threshold < 1 || config.threshold > 10))
        fail(Errc::config, "rater: threshold must lie in 1..10");
    const std::string& prompt =
        config.prompt.empty()
            ? (config.mode == RaterMode::Scaled ? prompts::rater_scaled() : prompts::rater_binary())
            : config.prompt;

    RatingOutcome outcome;
    NodeId rater = outcome.trace.add_node(
        Node::agent("rater", config.rater_model, "rater", providers.rates_for(config.rater_model)));

    ChatRequest request;
    request.model_name = config.rater_model;
    request.system_prompt = prompt;
    request.user_content = question;
    request.temperature = config.temperature;
    request.max_tokens = config.max_tokens;
    ChatResponse response = providers.resolve(config.rater_model).complete(request);

    std::uint64_t billed_prefill = response.prefill_tokens;
    if (config.discount_cached_prefill)
        billed_prefill -= std::min(response.cached_prefill_tokens, billed_prefill);

    Message m;
    m.src = rater;
    m.dst = rater;
    m.round = 1;
    m.prefill_tokens = billed_prefill;
    m.decode_tokens = response.decode_tokens;
    m.payload = response.text;
    outcome.trace.record_message(std::move(m));

    if (auto reply = parse_reply_object(response.text)) {
        const char* field = config.mode == RaterMode::Scaled ? "rating" : "class";
        if (reply->contains(field) && (*reply)[field].is_number_integer()) {
            int value = (*reply)[field].get<int>();
            bool valid = config.mode == RaterMode::Scaled ? (value >= 1 && value <= 10)
                                                          : (value == 0 || value == 1);
            if (valid) outcome.score = value;
        }
    }
    outcome.cost = request_cost(outcome.trace);
    return outcome;
}

SystemClass route(std::optional<int> score, const RaterConfig& config) {
    if (!score) return SystemClass::Mas; // unusable rating: fail open to the stronger system
    if (config.mode == RaterMode::Scaled)
        return *score > config.threshold ? SystemClass::Mas : SystemClass::Sas;
    return *score == 1 ? SystemClass::Mas : SystemClass::Sas;
}

namespace {

void require_unit_interval(const Rational& p) {
    if (p < 0 || p > 1) fail(Errc::domain, "probability must lie in [0, 1]");
}

void require_nonnegative(const Rational& cost, const char* name) {
    if (cost < 0) fail(Errc::domain, std::string(name) + " must be >= 0");
}

} // namespace

Rational routing_cost(const Rational& p, const Rational& c_rater, const Rational& c_sas,
                      const Rational& c_mas) {
    require_unit_interval(p);
    require_nonnegative(c_rater, "c_rater");
    require_nonnegative(c_sas, "c_sas");
    require_nonnegative(c_mas, "c_mas");
    return c_rater + p * c_mas + (Rational(1) - p) * c_sas;
}

Rational cascade_cost(const Rational& p, const Rational& c_sas, const Rational& c_mas) {
    require_unit_interval(p);
    require_nonnegative(c_sas, "c_sas");
    require_nonnegative(c_mas, "c_mas");
    return c_sas + (Rational(1) - p) * c_mas;
}

Verifier Verifier::exact(std::string reference) {
    Verifier v;
    v.kind = Kind::ExactMatch;
    v.reference = std::move(reference);
    return v;
}

Verifier Verifier::numeric(Rational reference, Rational tolerance) {
    if (tolerance < 0) fail(Errc::domain, "verifier tolerance must be >= 0");
    Verifier v;
    v.kind = Kind::NumericMatch;
    v.numeric_reference = std::move(reference);
    v.tolerance = std::move(tolerance);
    return v;
}

Verifier Verifier::custom(std::string hook_name) {
    Verifier v;
    v.kind = Kind::Custom;
    v.hook_name = std::move(hook_name);
    return v;
}

void register_verify_hook(const std::string& name, VerifyHook hook) {
    std::lock_guard<std::mutex> lock(g_hooks_mutex);
    hooks()[name] = std::move(hook);
}

bool verify(const std::optional<std::string>& answer, const Verifier& verifier) {
    if (!answer) return false;
    switch (verifier.kind) {
        case Verifier::Kind::ExactMatch:
            return trimmed(*answer) == trimmed(verifier.reference);
        case Verifier::Kind::NumericMatch: {
            Rational value;
            try {
                value = parse_rational(*answer);
            } catch (const Error&) {
                return false;
            }
            Rational diff = value - verifier.numeric_reference;
            if (diff < 0) diff = -diff;
            return diff <= verifier.tolerance;
        }
        case Verifier::Kind::Custom: {
            VerifyHook hook;
            {
                std::lock_guard<std::mutex> lock(g_hooks_mutex);
                auto it = hooks().find(verifier.hook_name);
                if (it == hooks().end())
                    fail(Errc::custom_hook_missing,
                         "no verify hook registered as '" + verifier.hook_name + "'");
                hook = it->second;
            }
            return hook(*answer);
        }
    }
    return false;
}

RunResult run_mas(const std::string& question, const MasConfig& config,
                  const ProviderSet& providers) {
    if (const auto* debate = std::get_if<DebateConfig>(&config))
        return run_debate(question, *debate, providers);
    return run_pipeline(question, std::get<PipelineConfig>(config), providers);
}

CascadeOutcome run_cascade(const std::string& question, const SasConfig& sas,
                           const MasConfig& mas, const Verifier& verifier,
                           const ProviderSet& providers) {
    CascadeOutcome outcome;
    outcome.sas_result = run_sas(question, sas, providers);
    outcome.verified = verify(outcome.sas_result.final_answer, verifier);
    outcome.escalated = !outcome.verified;
    outcome.total_cost = request_cost(outcome.sas_result.trace);
    if (outcome.escalated) {
        outcome.mas_result = run_mas(question, mas, providers);
        merge_into(outcome.total_cost, request_cost(outcome.mas_result->trace));
        outcome.final_answer = outcome.mas_result->final_answer;
    } else {
        outcome.final_answer = outcome.sas_result.final_answer;
    }
    return outcome;
}

} // namespace agentgraph
