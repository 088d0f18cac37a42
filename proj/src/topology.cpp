#include "agentgraph/topology.hpp"

#include "agentgraph/errors.hpp"
#include "agentgraph/prompts.hpp"

#include <algorithm>
#include <cctype>

namespace agentgraph {

namespace {

std::string trimmed(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

const std::string& pick(const std::string& configured, const std::string& fallback) {
    return configured.empty() ? fallback : configured;
}

void require_single_question(const std::string& tmpl, const char* which) {
    if (prompts::count_placeholder(tmpl, "question") != 1)
        fail(Errc::config, std::string(which) + " template must use {question} exactly once");
}

} // namespace

void ProviderSet::add(const std::string& model_name, std::shared_ptr<Provider> provider) {
    providers_[model_name] = std::move(provider);
}

void ProviderSet::set_default(std::shared_ptr<Provider> provider) {
    default_provider_ = std::move(provider);
}

void ProviderSet::set_rates(const std::string& model_name, CostRates rates) {
    rates_[model_name] = std::move(rates);
}

void ProviderSet::set_default_rates(CostRates rates) {
    default_rates_ = std::move(rates);
}

Provider& ProviderSet::resolve(const std::string& model_name) const {
    auto it = providers_.find(model_name);
    if (it != providers_.end()) return *it->second;
    if (default_provider_) return *default_provider_;
    fail(Errc::config, "no provider registered for model '" + model_name + "'");
}

CostRates ProviderSet::rates_for(const std::string& model_name) const {
    auto it = rates_.find(model_name);
    return it != rates_.end() ? it->second : default_rates_;
}

std::optional<std::string> extract_answer(std::string_view text) {
    static constexpr std::string_view kMarker = "\\boxed{";
    std::vector<std::size_t> starts;
    for (std::size_t pos = text.find(kMarker); pos != std::string_view::npos;
         pos = text.find(kMarker, pos + 1)) {
        starts.push_back(pos);
    }
    for (auto it = starts.rbegin(); it != starts.rend(); ++it) {
        std::size_t open = *it + kMarker.size() - 1; // the '{'
        int depth = 0;
        for (std::size_t i = open; i < text.size(); ++i) {
            if (text[i] == '{') ++depth;
            else if (text[i] == '}') {
                --depth;
                if (depth == 0)
                    return trimmed(text.substr(open + 1, i - open - 1));
            }
        }
        // never closed; try an earlier box
    }
    return std::nullopt;
}

std::optional<int> extract_confidence(std::string_view text, int scale) {
    if (scale < 1) fail(Errc::domain, "confidence scale must be >= 1");
    static constexpr std::string_view kMarker = "Confidence:";
    std::optional<long long> last;
    for (std::size_t pos = text.find(kMarker); pos != std::string_view::npos;
         pos = text.find(kMarker, pos + 1)) {
        std::size_t i = pos + kMarker.size();
        while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
        if (i >= text.size() || !std::isdigit(static_cast<unsigned char>(text[i]))) continue;
        long long value = 0;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
            value = value * 10 + (text[i] - '0');
            if (value > 1'000'000) break; // absurd self-report, cap the parse
            ++i;
        }
        last = value;
    }
    if (!last) return std::nullopt;
    if (*last < 0 || *last > scale) return std::nullopt;
    return static_cast<int>(*last);
}

std::size_t truncated_length(std::size_t full_length, const Rational& fraction) {
    if (fraction < 0 || fraction > 1)
        fail(Errc::domain, "truncation fraction must lie in [0, 1], got " + rational_str(fraction));
    Rational scaled = fraction * Rational(full_length);
    auto num = boost::multiprecision::numerator(scaled);
    auto den = boost::multiprecision::denominator(scaled);
    auto ceil_value = (num + den - 1) / den;
    return static_cast<std::size_t>(ceil_value.convert_to<std::uint64_t>());
}

std::string truncate_payload(std::string_view payload, const Rational& fraction) {
    return std::string(payload.substr(0, truncated_length(payload.size(), fraction)));
}

std::optional<std::string> majority_vote(std::span<const std::optional<std::string>> answers,
                                         std::span<const std::optional<int>> confidences) {
    if (answers.size() != confidences.size())
        fail(Errc::length_mismatch, "majority_vote: " + std::to_string(answers.size()) +
                                        " answers vs " + std::to_string(confidences.size()) +
                                        " confidences");
    struct Tally {
        std::size_t count = 0;
        int best_conf = -1;       // missing confidence sorts below every real one
        std::size_t best_idx = 0; // first voter reporting best_conf
    };
    std::vector<std::string> order;
    std::map<std::string, Tally> tallies;
    for (std::size_t i = 0; i < answers.size(); ++i) {
        if (!answers[i]) continue;
        auto [it, inserted] = tallies.try_emplace(*answers[i]);
        if (inserted) order.push_back(*answers[i]);
        Tally& t = it->second;
        int conf = confidences[i].value_or(-1);
        if (t.count == 0 || conf > t.best_conf) {
            t.best_conf = conf;
            t.best_idx = i;
        }
        t.count += 1;
    }
    if (order.empty()) return std::nullopt;
    const std::string* winner = nullptr;
    const Tally* best = nullptr;
    for (const std::string& answer : order) {
        const Tally& t = tallies.at(answer);
        if (!best || t.count > best->count ||
            (t.count == best->count && t.best_conf > best->best_conf) ||
            (t.count == best->count && t.best_conf == best->best_conf &&
             t.best_idx < best->best_idx)) {
            best = &t;
            winner = &answer;
        }
    }
    return *winner;
}

RunResult run_sas(const std::string& question, const SasConfig& config,
                  const ProviderSet& providers) {
    if (config.model_name.empty()) fail(Errc::config, "sas: model_name required");
    const std::string& tmpl = pick(config.prompt_template, prompts::solver_round_one());
    require_single_question(tmpl, "sas");

    RunResult result;
    NodeId solver = result.trace.add_node(
        Node::agent("solver", config.model_name, "solver", providers.rates_for(config.model_name)));

    ChatRequest request;
    request.model_name = config.model_name;
    request.user_content = prompts::render(tmpl, {{"question", question}});
    request.temperature = config.temperature;
    request.max_tokens = config.max_tokens;
    ChatResponse response = providers.resolve(config.model_name).complete(request);

    Message m;
    m.src = solver;
    m.dst = solver;
    m.round = 1;
    m.prefill_tokens = response.prefill_tokens;
    m.decode_tokens = response.decode_tokens;
    m.payload = response.text;
    result.trace.record_message(std::move(m));

    result.raw_outputs[{solver.value, 1}] = response.text;
    if (auto conf = extract_confidence(response.text); conf && *conf >= 1)
        result.confidences.push_back({solver, 1, *conf});

    result.final_answer = extract_answer(response.text);
    result.trace.set_final_answer(result.final_answer);
    return result;
}

RunResult run_debate(const std::string& question, const DebateConfig& config,
                     const ProviderSet& providers) {
    const std::size_t n = config.solver_models.size();
    if (n == 0) fail(Errc::config, "debate: at least one solver model required");
    if (config.n_rounds < 1) fail(Errc::config, "debate: n_rounds must be >= 1");
    if (config.confidence_scale < 1) fail(Errc::config, "debate: confidence_scale must be >= 1");
    if (config.truncation_fraction < 0 || config.truncation_fraction > 1)
        fail(Errc::config, "debate: truncation_fraction must lie in [0, 1]");

    const std::string& round_one = pick(config.round_one_template, prompts::solver_round_one());
    const std::string& later = pick(config.later_round_template, prompts::solver_later_round());
    const std::string& summ_tmpl = pick(config.summarizer_template, prompts::summarizer());
    const std::string suffix = prompts::confidence_suffix(config.confidence_scale);
    const bool summarize = config.aggregation == Aggregation::Summarize;

    RunResult result;
    std::vector<NodeId> solvers;
    solvers.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::string& model = config.solver_models[i];
        solvers.push_back(result.trace.add_node(Node::agent(
            "solver-" + std::to_string(i + 1), model, "solver", providers.rates_for(model))));
    }
    NodeId summarizer;
    std::string summarizer_model;
    if (summarize && config.n_rounds > 1) {
        summarizer_model =
            config.summarizer_model.empty() ? config.solver_models[0] : config.summarizer_model;
        summarizer = result.trace.add_node(Node::agent("summarizer", summarizer_model, "summarizer",
                                                       providers.rates_for(summarizer_model)));
    }

    // Provider failures get re-raised with the agent and round attached, so a
    // run that dies mid-debate says which call killed it.
    auto call = [&](const std::string& model, const std::string& user, const std::string& agent,
                    int round) {
        ChatRequest request;
        request.model_name = model;
        request.user_content = user;
        request.temperature = config.temperature;
        request.max_tokens = config.max_tokens;
        try {
            return providers.resolve(model).complete(request);
        } catch (const Error& e) {
            fail(e.code(), agent + " round " + std::to_string(round) + ": " + e.what());
        }
    };

    std::vector<std::string> prev_outputs;              // round r-1 solver outputs
    std::string summary;                                // of round r-1, Summarize mode
    std::vector<std::optional<std::string>> answers(n); // last round processed
    std::vector<std::optional<int>> confs(n);

    for (int round = 1; round <= config.n_rounds; ++round) {
        std::vector<std::string> outputs(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::string user;
            if (round == 1) {
                user = prompts::render(round_one, {{"question", question}});
            } else {
                std::vector<std::string> blocks;
                if (summarize) {
                    blocks.push_back(truncate_payload(summary, config.truncation_fraction));
                } else {
                    for (const std::string& text : prev_outputs)
                        blocks.push_back(truncate_payload(text, config.truncation_fraction));
                }
                user = prompts::render(later, {{"solutions", prompts::solution_blocks(blocks)},
                                               {"question", question}});
            }
            user += "\n" + suffix;

            ChatResponse response =
                call(config.solver_models[i], user, "solver-" + std::to_string(i + 1), round);
            outputs[i] = response.text;

            Message m;
            m.src = (round > 1 && summarize) ? summarizer : solvers[i];
            m.dst = solvers[i];
            m.round = static_cast<std::uint32_t>(round);
            m.prefill_tokens = response.prefill_tokens;
            m.decode_tokens = response.decode_tokens;
            m.payload = response.text;
            result.trace.record_message(std::move(m));

            result.raw_outputs[{solvers[i].value, static_cast<std::uint32_t>(round)}] =
                response.text;
            auto conf = extract_confidence(response.text, config.confidence_scale);
            if (conf && *conf >= 1) {
                result.confidences.push_back(
                    {solvers[i], static_cast<std::uint32_t>(round), *conf});
                confs[i] = *conf;
            } else {
                result.confidence_parse_misses += 1;
                confs[i] = std::nullopt;
            }
            answers[i] = extract_answer(response.text);
        }

        if (summarize && round < config.n_rounds) {
            std::vector<std::string> blocks;
            for (const std::string& text : outputs)
                blocks.push_back(truncate_payload(text, config.truncation_fraction));
            std::string user = prompts::render(
                summ_tmpl, {{"solutions", prompts::solution_blocks(blocks)},
                            {"question", config.summarizer_sees_question ? question : ""}});
            ChatResponse response = call(summarizer_model, user, "summarizer", round);
            summary = response.text;

            Message m;
            m.src = summarizer;
            m.dst = summarizer;
            m.round = static_cast<std::uint32_t>(round);
            m.prefill_tokens = response.prefill_tokens;
            m.decode_tokens = response.decode_tokens;
            m.payload = response.text;
            result.trace.record_message(std::move(m));

            result.raw_outputs[{summarizer.value, static_cast<std::uint32_t>(round)}] =
                response.text;
            if (auto conf = extract_confidence(response.text, config.confidence_scale);
                conf && *conf >= 1)
                result.confidences.push_back(
                    {summarizer, static_cast<std::uint32_t>(round), *conf});
        }

        prev_outputs = std::move(outputs);
    }

    result.final_answer = majority_vote(answers, confs);
    result.trace.set_final_answer(result.final_answer);
    return result;
}

RunResult run_pipeline(const std::string& question, const PipelineConfig& config,
                       const ProviderSet& providers) {
    if (config.analyzer_model.empty() || config.coder_model.empty())
        fail(Errc::config, "pipeline: analyzer_model and coder_model required");
    const std::string& analyzer_tmpl = pick(config.analyzer_template, prompts::pipeline_analyzer());
    const std::string& coder_tmpl = pick(config.coder_template, prompts::pipeline_coder());

    RunResult result;
    NodeId analyzer = result.trace.add_node(Node::agent(
        "analyzer", config.analyzer_model, "analyzer", providers.rates_for(config.analyzer_model)));
    NodeId coder = result.trace.add_node(
        Node::agent("coder", config.coder_model, "coder", providers.rates_for(config.coder_model)));

    auto call = [&](const std::string& model, const std::string& user, const char* stage) {
        ChatRequest request;
        request.model_name = model;
        request.user_content = user;
        request.temperature = config.temperature;
        request.max_tokens = config.max_tokens;
        try {
            return providers.resolve(model).complete(request);
        } catch (const Error& e) {
            throw Error(e.code(), std::string("stage=") + stage + ": " + e.what());
        }
    };

    ChatResponse analysis =
        call(config.analyzer_model, prompts::render(analyzer_tmpl, {{"question", question}}),
             "analyzer");
    Message m1;
    m1.src = analyzer;
    m1.dst = analyzer;
    m1.round = 1;
    m1.prefill_tokens = analysis.prefill_tokens;
    m1.decode_tokens = analysis.decode_tokens;
    m1.payload = analysis.text;
    result.trace.record_message(std::move(m1));
    result.raw_outputs[{analyzer.value, 1}] = analysis.text;

    ChatResponse coded =
        call(config.coder_model,
             prompts::render(coder_tmpl, {{"question", question}, {"analysis", analysis.text}}),
             "coder");
    Message m2;
    m2.src = analyzer;
    m2.dst = coder;
    m2.round = 1;
    m2.prefill_tokens = coded.prefill_tokens;
    m2.decode_tokens = coded.decode_tokens;
    m2.payload = coded.text;
    result.trace.record_message(std::move(m2));
    result.raw_outputs[{coder.value, 1}] = coded.text;

    result.final_answer = extract_answer(coded.text);
    if (!result.final_answer) {
        std::string t = trimmed(coded.text);
        if (!t.empty()) result.final_answer = t;
    }
    result.trace.set_final_answer(result.final_answer);
    return result;
}

} // namespace agentgraph
