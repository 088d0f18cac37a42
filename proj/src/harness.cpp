#include "agentgraph/harness.hpp"

#include "agentgraph/errors.hpp"
#include "agentgraph/prompts.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#if defined(AGENTGRAPH_HAVE_OPENMP)
#include <omp.h>
#endif

namespace agentgraph {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

Rational rational_from_json(const json& v, const char* what) {
    if (v.is_string()) return parse_rational(v.get<std::string>());
    if (v.is_number()) return parse_rational(v.dump());
    fail(Errc::parse, std::string(what) + " must be a number or a rational string");
}

json rational_to_json(const Rational& r) { return rational_str(r); }

json opt_rational_to_json(const std::optional<Rational>& r) {
    return r ? json(rational_str(*r)) : json(nullptr);
}

std::optional<Rational> opt_rational_from_json(const json& v, const char* what) {
    if (v.is_null()) return std::nullopt;
    return rational_from_json(v, what);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io, "cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

const std::vector<std::string>& known_arms() {
    static const std::vector<std::string> arms = {"sas", "mas", "route", "cascade"};
    return arms;
}

void check_arm_name(const std::string& arm) {
    const auto& known = known_arms();
    if (std::find(known.begin(), known.end(), arm) == known.end())
        fail(Errc::config, "unknown arm '" + arm + "' (expected sas, mas, route, cascade)");
}

} // namespace

std::vector<DatasetRecord> parse_dataset(const std::string& text) {
    std::vector<DatasetRecord> records;
    std::set<std::string> ids;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            fail(Errc::parse, "dataset line " + std::to_string(line_no) + ": not a JSON object");
        DatasetRecord record;
        try {
            record.id = j.at("id").get<std::string>();
            record.question = j.at("question").get<std::string>();
            record.evaluator = j.value("evaluator", std::string("exact_match"));
            if (j.contains("tolerance"))
                record.tolerance = rational_from_json(j.at("tolerance"), "tolerance");
            if (!j.contains("reference"))
                fail(Errc::parse,
                     "dataset line " + std::to_string(line_no) + ": missing reference");
            const json& ref = j.at("reference");
            record.reference = ref.is_string() ? ref.get<std::string>() : ref.dump();
        } catch (const json::exception& e) {
            fail(Errc::parse, "dataset line " + std::to_string(line_no) + ": " + e.what());
        }
        record.fields = std::move(j);
        if (!ids.insert(record.id).second)
            fail(Errc::duplicate_request_id,
                 "dataset line " + std::to_string(line_no) + ": duplicate id '" + record.id + "'");
        records.push_back(std::move(record));
    }
    return records;
}

std::vector<DatasetRecord> load_dataset(const std::string& path) {
    return parse_dataset(read_text_file(path));
}

namespace {

Verifier verifier_from_tag(const std::string& tag, const std::string& reference,
                           const std::optional<Rational>& tolerance) {
    if (tag == "exact_match") return Verifier::exact(reference);
    if (tag == "numeric_match")
        return Verifier::numeric(parse_rational(reference), tolerance.value_or(Rational(0)));
    if (tag.rfind("custom:", 0) == 0) return Verifier::custom(tag.substr(7));
    fail(Errc::config, "unknown evaluator '" + tag + "'");
}

std::string record_field(const DatasetRecord& record, const std::string& field) {
    if (!record.fields.contains(field))
        fail(Errc::config, "dataset record '" + record.id + "' has no field '" + field + "'");
    const json& v = record.fields.at(field);
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

} // namespace

Verifier verifier_for(const DatasetRecord& record,
                      const std::optional<VerifierSpec>& override_spec) {
    if (override_spec) {
        std::string reference;
        if (override_spec->kind.rfind("custom:", 0) != 0)
            reference = record_field(record, override_spec->reference_field);
        auto tolerance = override_spec->tolerance ? override_spec->tolerance : record.tolerance;
        return verifier_from_tag(override_spec->kind, reference, tolerance);
    }
    return verifier_from_tag(record.evaluator, record.reference, record.tolerance);
}

QuadrantTable quadrant(const std::vector<bool>& sas_correct,
                       const std::vector<bool>& mas_correct) {
    if (sas_correct.size() != mas_correct.size())
        fail(Errc::length_mismatch, "quadrant: " + std::to_string(sas_correct.size()) +
                                        " sas flags vs " + std::to_string(mas_correct.size()) +
                                        " mas flags");
    QuadrantTable table;
    for (std::size_t i = 0; i < sas_correct.size(); ++i) {
        if (sas_correct[i] && mas_correct[i]) table.both_pass += 1;
        else if (!sas_correct[i] && !mas_correct[i]) table.both_fail += 1;
        else if (sas_correct[i]) table.sas_win += 1;
        else table.mas_win += 1;
    }
    return table;
}

namespace {

std::string resolve_path(const fs::path& base_dir, const std::string& path) {
    if (path.empty()) return path;
    fs::path p(path);
    if (p.is_absolute()) return path;
    return (base_dir / p).string();
}

std::string read_template_field(const json& j, const std::string& key, const fs::path& base_dir) {
    if (j.contains(key)) return j.at(key).get<std::string>();
    std::string file_key = key + "_file";
    if (j.contains(file_key))
        return prompts::load_file(resolve_path(base_dir, j.at(file_key).get<std::string>()));
    return {};
}

CostRates rates_from_json(const json& j) {
    CostRates rates;
    if (j.contains("input_rate")) rates.input_rate = rational_from_json(j.at("input_rate"), "input_rate");
    if (j.contains("output_rate"))
        rates.output_rate = rational_from_json(j.at("output_rate"), "output_rate");
    return rates;
}

SasConfig sas_from_json(const json& j, const fs::path& base_dir) {
    SasConfig cfg;
    cfg.model_name = j.at("model_name").get<std::string>();
    cfg.prompt_template = read_template_field(j, "prompt_template", base_dir);
    cfg.temperature = j.value("temperature", 0.0);
    cfg.max_tokens = j.value("max_tokens", 2048);
    return cfg;
}

MasConfig mas_from_json(const json& j, const fs::path& base_dir) {
    std::string kind = j.value("kind", "debate");
    if (kind == "debate") {
        DebateConfig cfg;
        for (const json& m : j.at("solver_models")) cfg.solver_models.push_back(m.get<std::string>());
        cfg.n_rounds = j.value("n_rounds", 2);
        std::string agg = j.value("aggregation", "concatenate");
        if (agg == "concatenate") cfg.aggregation = Aggregation::Concatenate;
        else if (agg == "summarize") cfg.aggregation = Aggregation::Summarize;
        else fail(Errc::config, "unknown aggregation '" + agg + "'");
        cfg.summarizer_model = j.value("summarizer_model", std::string());
        if (j.contains("truncation_fraction"))
            cfg.truncation_fraction =
                rational_from_json(j.at("truncation_fraction"), "truncation_fraction");
        cfg.confidence_scale = j.value("confidence_scale", 10);
        cfg.summarizer_sees_question = j.value("summarizer_sees_question", true);
        cfg.temperature = j.value("temperature", 0.0);
        cfg.max_tokens = j.value("max_tokens", 2048);
        cfg.round_one_template = read_template_field(j, "round_one_template", base_dir);
        cfg.later_round_template = read_template_field(j, "later_round_template", base_dir);
        cfg.summarizer_template = read_template_field(j, "summarizer_template", base_dir);
        return cfg;
    }
    if (kind == "pipeline") {
        PipelineConfig cfg;
        cfg.analyzer_model = j.at("analyzer_model").get<std::string>();
        cfg.coder_model = j.at("coder_model").get<std::string>();
        cfg.analyzer_template = read_template_field(j, "analyzer_template", base_dir);
        cfg.coder_template = read_template_field(j, "coder_template", base_dir);
        cfg.temperature = j.value("temperature", 0.0);
        cfg.max_tokens = j.value("max_tokens", 2048);
        return cfg;
    }
    fail(Errc::config, "unknown mas kind '" + kind + "' (expected debate or pipeline)");
}

RaterConfig rater_from_json(const json& j, const fs::path& base_dir) {
    RaterConfig cfg;
    cfg.rater_model = j.at("rater_model").get<std::string>();
    std::string mode = j.value("rater_mode", "scaled");
    if (mode == "scaled") cfg.mode = RaterMode::Scaled;
    else if (mode == "binary") cfg.mode = RaterMode::Binary;
    else fail(Errc::config, "unknown rater_mode '" + mode + "'");
    cfg.threshold = j.value("threshold", 5);
    cfg.prompt = read_template_field(j, "prompt", base_dir);
    cfg.temperature = j.value("temperature", 0.0);
    cfg.max_tokens = j.value("max_tokens", 300);
    cfg.discount_cached_prefill = j.value("discount_cached_prefill", true);
    return cfg;
}

VerifierSpec verifier_spec_from_json(const json& j) {
    VerifierSpec spec;
    spec.kind = j.value("kind", "exact_match");
    spec.reference_field = j.value("reference_field", "reference");
    if (j.contains("tolerance"))
        spec.tolerance = rational_from_json(j.at("tolerance"), "tolerance");
    return spec;
}

} // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
    json j = json::parse(read_text_file(path), nullptr, false);
    if (j.is_discarded() || !j.is_object())
        fail(Errc::parse, "config '" + path + "' is not a JSON object");
    const fs::path base_dir = fs::path(path).parent_path();

    ExperimentConfig cfg;
    try {
        if (j.contains("dataset"))
            cfg.dataset_path = resolve_path(base_dir, j.at("dataset").get<std::string>());
        if (j.contains("arms"))
            for (const json& a : j.at("arms")) cfg.arms.push_back(a.get<std::string>());
        cfg.out_dir = j.value("out", std::string());
        cfg.seed = j.value("seed", std::int64_t(0));
        cfg.parallelism = j.value("parallelism", 1);

        if (j.contains("provider")) {
            const json& p = j.at("provider");
            std::string kind = p.value("kind", "scripted");
            if (kind == "scripted") {
                cfg.provider.kind = ProviderSpec::Kind::Scripted;
                cfg.provider.script_path = resolve_path(base_dir, p.at("script").get<std::string>());
            } else if (kind == "http") {
                cfg.provider.kind = ProviderSpec::Kind::Http;
                cfg.provider.http.base_url = p.at("base_url").get<std::string>();
                cfg.provider.http.path = p.value("path", std::string("/v1/chat/completions"));
                cfg.provider.http.api_key_env =
                    p.value("api_key_env", std::string("PROVIDER_API_KEY"));
                cfg.provider.http.max_retries = p.value("max_retries", 3);
                cfg.provider.http.timeout_seconds = p.value("timeout_seconds", 120);
            } else {
                fail(Errc::config, "unknown provider kind '" + kind + "'");
            }
        }

        if (j.contains("rates")) {
            const json& r = j.at("rates");
            if (r.contains("default")) cfg.default_rates = rates_from_json(r.at("default"));
            if (r.contains("models"))
                for (const auto& [model, rj] : r.at("models").items())
                    cfg.model_rates[model] = rates_from_json(rj);
        }

        if (j.contains("sas")) cfg.sas = sas_from_json(j.at("sas"), base_dir);
        if (j.contains("mas")) cfg.mas = mas_from_json(j.at("mas"), base_dir);

        if (j.contains("policy")) {
            const json& p = j.at("policy");
            if (p.contains("rater_model")) cfg.rater = rater_from_json(p, base_dir);
            if (p.contains("verifier"))
                cfg.verifier_override = verifier_spec_from_json(p.at("verifier"));
            if (cfg.arms.empty() && p.contains("mode")) {
                std::string mode = p.at("mode").get<std::string>();
                if (mode != "route" && mode != "cascade")
                    fail(Errc::config, "unknown policy mode '" + mode + "'");
                cfg.arms.push_back(mode);
            }
        }
    } catch (const json::exception& e) {
        fail(Errc::parse, "config '" + path + "': " + e.what());
    }
    if (cfg.arms.empty()) cfg.arms = {"sas"};
    return cfg;
}

namespace {

struct ItemWork {
    ItemResult result;
    std::vector<ExecutionTrace> traces;
    std::vector<DecisionRecord> decisions;
};

void fill_from_cost(ArmOutcome& outcome, const CostBreakdown& cost) {
    outcome.cost = cost.total;
    outcome.prefill_tokens = cost.prefill_total;
    outcome.decode_tokens = cost.decode_total;
    outcome.weighted_tokens = weighted_token_cost(cost.prefill_total, cost.decode_total);
}

ItemWork run_one(const DatasetRecord& record, const ExperimentConfig& cfg,
                 const ProviderSet& providers) {
    ItemWork work;
    work.result.id = record.id;
    const Verifier verifier = verifier_for(record, cfg.verifier_override);

    for (const std::string& arm : cfg.arms) {
        ArmOutcome outcome;
        outcome.ran = true;
        try {
            if (arm == "sas") {
                RunResult r = run_sas(record.question, *cfg.sas, providers);
                fill_from_cost(outcome, request_cost(r.trace));
                outcome.answer = r.final_answer;
                outcome.correct = verify(r.final_answer, verifier);
                r.trace.set_request_id(record.id + "#sas");
                work.traces.push_back(std::move(r.trace));
            } else if (arm == "mas") {
                RunResult r = run_mas(record.question, *cfg.mas, providers);
                fill_from_cost(outcome, request_cost(r.trace));
                outcome.answer = r.final_answer;
                outcome.correct = verify(r.final_answer, verifier);
                r.trace.set_request_id(record.id + "#mas");
                work.traces.push_back(std::move(r.trace));
            } else if (arm == "route") {
                RatingOutcome rating = rate_difficulty(record.question, *cfg.rater, providers);
                SystemClass target = route(rating.score, *cfg.rater);
                RunResult r = target == SystemClass::Mas
                                  ? run_mas(record.question, *cfg.mas, providers)
                                  : run_sas(record.question, *cfg.sas, providers);
                CostBreakdown exec_cost = request_cost(r.trace);
                CostBreakdown combined = rating.cost;
                merge_into(combined, exec_cost);
                fill_from_cost(outcome, combined);
                outcome.answer = r.final_answer;
                outcome.correct = verify(r.final_answer, verifier);
                work.result.route = RouteDecision{rating.score, target, rating.cost.total};

                DecisionRecord decision;
                decision.request_id = record.id + "#route";
                decision.score = rating.score;
                decision.target = system_class_name(target);
                decision.escalated = target == SystemClass::Mas;
                (target == SystemClass::Sas ? decision.sas_cost : decision.mas_cost) =
                    exec_cost.total;
                decision.rater_cost = rating.cost.total;
                work.decisions.push_back(std::move(decision));

                rating.trace.set_request_id(record.id + "#route.rater");
                r.trace.set_request_id(record.id + "#route");
                work.traces.push_back(std::move(rating.trace));
                work.traces.push_back(std::move(r.trace));
            } else if (arm == "cascade") {
                CascadeOutcome c =
                    run_cascade(record.question, *cfg.sas, *cfg.mas, verifier, providers);
                Rational sas_cost = request_cost(c.sas_result.trace).total;
                Rational mas_cost =
                    c.mas_result ? request_cost(c.mas_result->trace).total : Rational(0);
                fill_from_cost(outcome, c.total_cost);
                outcome.answer = c.final_answer;
                outcome.correct = verify(c.final_answer, verifier);
                work.result.cascade = CascadeSummary{c.verified, c.escalated, sas_cost, mas_cost};

                DecisionRecord decision;
                decision.request_id = record.id + "#cascade";
                decision.target = c.escalated ? "mas" : "sas";
                decision.escalated = c.escalated;
                decision.sas_cost = sas_cost;
                decision.mas_cost = mas_cost;
                work.decisions.push_back(std::move(decision));

                c.sas_result.trace.set_request_id(record.id + "#cascade");
                work.traces.push_back(std::move(c.sas_result.trace));
                if (c.mas_result) {
                    c.mas_result->trace.set_request_id(record.id + "#cascade.mas");
                    work.traces.push_back(std::move(c.mas_result->trace));
                }
            }
        } catch (const std::exception&) {
            outcome = ArmOutcome{};
            outcome.ran = true;
            outcome.failed = true;
        }
        work.result.arms[arm] = outcome;
    }
    return work;
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.dataset_path.empty()) fail(Errc::config, "no dataset given");
    if (cfg.arms.empty()) fail(Errc::config, "no arms requested");
    if (cfg.parallelism < 1) fail(Errc::config, "parallelism must be >= 1");
    std::set<std::string> seen;
    for (const std::string& arm : cfg.arms) {
        check_arm_name(arm);
        if (!seen.insert(arm).second) fail(Errc::config, "arm '" + arm + "' listed twice");
    }
    auto armed = [&](const char* name) { return seen.count(name) != 0; };

    const bool needs_sas = armed("sas") || armed("route") || armed("cascade");
    const bool needs_mas = armed("mas") || armed("route") || armed("cascade");
    if (needs_sas && !cfg.sas) fail(Errc::config, "arms need an sas block in the config");
    if (needs_mas && !cfg.mas) fail(Errc::config, "arms need a mas block in the config");
    if (armed("route") && !cfg.rater) fail(Errc::config, "route arm needs policy.rater_model");

    if (cfg.sas) {
        const std::string& tmpl =
            cfg.sas->prompt_template.empty() ? prompts::solver_round_one() : cfg.sas->prompt_template;
        if (prompts::count_placeholder(tmpl, "question") != 1)
            fail(Errc::config, "sas template must use {question} exactly once");
        if (cfg.sas->model_name.empty()) fail(Errc::config, "sas: model_name required");
    }
    if (cfg.mas) {
        if (const auto* debate = std::get_if<DebateConfig>(&*cfg.mas)) {
            if (debate->solver_models.empty())
                fail(Errc::config, "debate: at least one solver model required");
            if (debate->n_rounds < 1) fail(Errc::config, "debate: n_rounds must be >= 1");
            if (debate->confidence_scale < 1)
                fail(Errc::config, "debate: confidence_scale must be >= 1");
            if (debate->truncation_fraction < 0 || debate->truncation_fraction > 1)
                fail(Errc::config, "debate: truncation_fraction must lie in [0, 1]");
        } else {
            const auto& pipeline = std::get<PipelineConfig>(*cfg.mas);
            if (pipeline.analyzer_model.empty() || pipeline.coder_model.empty())
                fail(Errc::config, "pipeline: analyzer_model and coder_model required");
        }
    }
    if (cfg.rater && cfg.rater->mode == RaterMode::Scaled &&
        (cfg.rater->threshold < 1 || cfg.rater->threshold > 10))
        fail(Errc::config, "rater threshold must lie in 1..10");
}

ProviderSet build_providers(const ExperimentConfig& cfg) {
    ProviderSet providers;
    if (cfg.provider.kind == ProviderSpec::Kind::Scripted) {
        if (cfg.provider.script_path.empty())
            fail(Errc::config, "scripted provider needs a script path");
        ProviderScript script = load_script(cfg.provider.script_path);
        if (script.mode == ScriptMode::Sequential && cfg.parallelism > 1)
            fail(Errc::config,
                 "a sequential script cannot serve parallel runs; use a matched script");
        providers.set_default(std::make_shared<ScriptedProvider>(std::move(script)));
    } else {
        providers.set_default(std::make_shared<HttpProvider>(cfg.provider.http));
    }
    providers.set_default_rates(cfg.default_rates);
    for (const auto& [model, rates] : cfg.model_rates) providers.set_rates(model, rates);
    return providers;
}

} // namespace

ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    std::vector<DatasetRecord> records = load_dataset(cfg.dataset_path);
    ProviderSet providers = build_providers(cfg);

    std::vector<ItemWork> works(records.size());
    const auto count = static_cast<std::int64_t>(records.size());
#if defined(AGENTGRAPH_HAVE_OPENMP)
    if (cfg.parallelism > 1) {
#pragma omp parallel for schedule(dynamic) num_threads(cfg.parallelism)
        for (std::int64_t i = 0; i < count; ++i) works[i] = run_one(records[i], cfg, providers);
    } else
#endif
    {
        // Serial reference path: identical semantics, no thread pool.
        for (std::int64_t i = 0; i < count; ++i) works[i] = run_one(records[i], cfg, providers);
    }

    ExperimentOutput out;
    RunReport& report = out.report;
    report.dataset_size = records.size();
    report.seed = cfg.seed;
    report.parallelism = cfg.parallelism;
    report.arms = cfg.arms;

    for (ItemWork& work : works) {
        report.items.push_back(std::move(work.result));
        for (ExecutionTrace& trace : work.traces) out.traces.push_back(std::move(trace));
        for (DecisionRecord& decision : work.decisions)
            out.decisions.push_back(std::move(decision));
    }
    std::sort(report.items.begin(), report.items.end(),
              [](const ItemResult& a, const ItemResult& b) { return a.id < b.id; });
    std::sort(out.traces.begin(), out.traces.end(),
              [](const ExecutionTrace& a, const ExecutionTrace& b) {
                  return a.request_id() < b.request_id();
              });
    std::sort(out.decisions.begin(), out.decisions.end(),
              [](const DecisionRecord& a, const DecisionRecord& b) {
                  return a.request_id < b.request_id;
              });

    const auto n = static_cast<std::uint64_t>(records.size());
    for (const std::string& arm : cfg.arms) {
        std::uint64_t failures = 0, correct = 0;
        Rational cost_sum = 0, weighted_sum = 0;
        for (const ItemResult& item : report.items) {
            const ArmOutcome& outcome = item.arms.at(arm);
            failures += outcome.failed ? 1 : 0;
            correct += outcome.correct ? 1 : 0;
            cost_sum += outcome.cost;
            weighted_sum += Rational(outcome.weighted_tokens);
        }
        report.failures[arm] = failures;
        if (n > 0) {
            report.accuracy[arm] = Rational(correct) / Rational(n);
            report.mean_cost[arm] = cost_sum / Rational(n);
            report.mean_weighted_tokens[arm] = weighted_sum / Rational(n);
        }
    }

    std::uint64_t routed_mas = 0, route_decisions = 0, cascade_pass = 0, cascade_decisions = 0;
    for (const ItemResult& item : report.items) {
        if (item.route) {
            route_decisions += 1;
            if (item.route->target == SystemClass::Mas) routed_mas += 1;
        }
        if (item.cascade) {
            cascade_decisions += 1;
            if (item.cascade->verified) cascade_pass += 1;
        }
    }
    if (route_decisions > 0)
        report.p_route_mas = Rational(routed_mas) / Rational(route_decisions);
    if (cascade_decisions > 0)
        report.p_cascade_pass = Rational(cascade_pass) / Rational(cascade_decisions);

    const bool have_sas =
        std::find(cfg.arms.begin(), cfg.arms.end(), "sas") != cfg.arms.end();
    const bool have_mas =
        std::find(cfg.arms.begin(), cfg.arms.end(), "mas") != cfg.arms.end();
    if (have_sas && have_mas) {
        std::vector<bool> sas_flags, mas_flags;
        for (const ItemResult& item : report.items) {
            sas_flags.push_back(item.arms.at("sas").correct);
            mas_flags.push_back(item.arms.at("mas").correct);
        }
        report.quadrant = quadrant(sas_flags, mas_flags);

        std::vector<ExecutionTrace> paired;
        std::map<std::string, SystemClass> grouping;
        for (const ExecutionTrace& trace : out.traces) {
            const std::string& id = trace.request_id();
            if (id.size() > 4 && id.rfind("#sas") == id.size() - 4) {
                grouping[id] = SystemClass::Sas;
                paired.push_back(trace);
            } else if (id.size() > 4 && id.rfind("#mas") == id.size() - 4) {
                grouping[id] = SystemClass::Mas;
                paired.push_back(trace);
            }
        }
        report.tokens = aggregate_token_report(paired, grouping);
        report.tokens_excluding_summarizer =
            aggregate_token_report(paired, grouping, {"summarizer"});
    }
    return out;
}

namespace {

json arm_to_json(const ArmOutcome& a) {
    json j;
    j["ran"] = a.ran;
    j["failed"] = a.failed;
    j["correct"] = a.correct;
    j["answer"] = a.answer ? json(*a.answer) : json(nullptr);
    j["cost"] = rational_to_json(a.cost);
    j["prefill_tokens"] = a.prefill_tokens;
    j["decode_tokens"] = a.decode_tokens;
    j["weighted_tokens"] = a.weighted_tokens;
    return j;
}

ArmOutcome arm_from_json(const json& j) {
    ArmOutcome a;
    a.ran = j.at("ran").get<bool>();
    a.failed = j.at("failed").get<bool>();
    a.correct = j.at("correct").get<bool>();
    if (!j.at("answer").is_null()) a.answer = j.at("answer").get<std::string>();
    a.cost = rational_from_json(j.at("cost"), "cost");
    a.prefill_tokens = j.at("prefill_tokens").get<std::uint64_t>();
    a.decode_tokens = j.at("decode_tokens").get<std::uint64_t>();
    a.weighted_tokens = j.at("weighted_tokens").get<std::uint64_t>();
    return a;
}

json stats_to_json(const GroupTokenStats& s) {
    json j;
    j["traces"] = s.traces;
    j["prefill_sum"] = s.prefill_sum;
    j["decode_sum"] = s.decode_sum;
    j["mean_prefill"] = opt_rational_to_json(s.mean_prefill);
    j["mean_decode"] = opt_rational_to_json(s.mean_decode);
    return j;
}

GroupTokenStats stats_from_json(const json& j) {
    GroupTokenStats s;
    s.traces = j.at("traces").get<std::size_t>();
    s.prefill_sum = j.at("prefill_sum").get<std::uint64_t>();
    s.decode_sum = j.at("decode_sum").get<std::uint64_t>();
    s.mean_prefill = opt_rational_from_json(j.at("mean_prefill"), "mean_prefill");
    s.mean_decode = opt_rational_from_json(j.at("mean_decode"), "mean_decode");
    return s;
}

json tokens_to_json(const TokenReport& t) {
    json j;
    j["sas"] = stats_to_json(t.sas);
    j["mas"] = stats_to_json(t.mas);
    j["prefill_ratio"] = opt_rational_to_json(t.prefill_ratio);
    j["decode_ratio"] = opt_rational_to_json(t.decode_ratio);
    return j;
}

TokenReport tokens_from_json(const json& j) {
    TokenReport t;
    t.sas = stats_from_json(j.at("sas"));
    t.mas = stats_from_json(j.at("mas"));
    t.prefill_ratio = opt_rational_from_json(j.at("prefill_ratio"), "prefill_ratio");
    t.decode_ratio = opt_rational_from_json(j.at("decode_ratio"), "decode_ratio");
    return t;
}

} // namespace

json report_to_json(const RunReport& report) {
    json j;
    j["dataset_size"] = report.dataset_size;
    j["seed"] = report.seed;
    j["parallelism"] = report.parallelism;
    j["arms"] = report.arms;

    json items = json::array();
    for (const ItemResult& item : report.items) {
        json ij;
        ij["id"] = item.id;
        json arms;
        for (const auto& [arm, outcome] : item.arms) arms[arm] = arm_to_json(outcome);
        ij["arms"] = std::move(arms);
        if (item.route) {
            json rj;
            rj["score"] = item.route->score ? json(*item.route->score) : json(nullptr);
            rj["target"] = system_class_name(item.route->target);
            rj["rater_cost"] = rational_to_json(item.route->rater_cost);
            ij["route"] = std::move(rj);
        } else {
            ij["route"] = nullptr;
        }
        if (item.cascade) {
            json cj;
            cj["verified"] = item.cascade->verified;
            cj["escalated"] = item.cascade->escalated;
            cj["sas_cost"] = rational_to_json(item.cascade->sas_cost);
            cj["mas_cost"] = rational_to_json(item.cascade->mas_cost);
            ij["cascade"] = std::move(cj);
        } else {
            ij["cascade"] = nullptr;
        }
        items.push_back(std::move(ij));
    }
    j["items"] = std::move(items);

    json failures;
    for (const auto& [arm, n] : report.failures) failures[arm] = n;
    j["failures"] = std::move(failures);
    json accuracy;
    for (const auto& [arm, v] : report.accuracy) accuracy[arm] = rational_to_json(v);
    j["accuracy"] = std::move(accuracy);
    json mean_cost;
    for (const auto& [arm, v] : report.mean_cost) mean_cost[arm] = rational_to_json(v);
    j["mean_cost"] = std::move(mean_cost);
    json mean_weighted;
    for (const auto& [arm, v] : report.mean_weighted_tokens)
        mean_weighted[arm] = rational_to_json(v);
    j["mean_weighted_tokens"] = std::move(mean_weighted);

    j["p_route_mas"] = opt_rational_to_json(report.p_route_mas);
    j["p_cascade_pass"] = opt_rational_to_json(report.p_cascade_pass);

    if (report.quadrant) {
        json qj;
        qj["both_pass"] = report.quadrant->both_pass;
        qj["both_fail"] = report.quadrant->both_fail;
        qj["sas_win"] = report.quadrant->sas_win;
        qj["mas_win"] = report.quadrant->mas_win;
        j["quadrant"] = std::move(qj);
    } else {
        j["quadrant"] = nullptr;
    }
    j["tokens"] = report.tokens ? tokens_to_json(*report.tokens) : json(nullptr);
    j["tokens_excluding_summarizer"] = report.tokens_excluding_summarizer
                                           ? tokens_to_json(*report.tokens_excluding_summarizer)
                                           : json(nullptr);
    return j;
}

RunReport report_from_json(const json& j) {
    RunReport report;
    try {
        report.dataset_size = j.at("dataset_size").get<std::uint64_t>();
        report.seed = j.at("seed").get<std::int64_t>();
        report.parallelism = j.at("parallelism").get<int>();
        for (const json& a : j.at("arms")) report.arms.push_back(a.get<std::string>());
        for (const json& ij : j.at("items")) {
            ItemResult item;
            item.id = ij.at("id").get<std::string>();
            for (const auto& [arm, aj] : ij.at("arms").items())
                item.arms[arm] = arm_from_json(aj);
            if (!ij.at("route").is_null()) {
                const json& rj = ij.at("route");
                RouteDecision route;
                if (!rj.at("score").is_null()) route.score = rj.at("score").get<int>();
                route.target = system_class_from_name(rj.at("target").get<std::string>());
                route.rater_cost = rational_from_json(rj.at("rater_cost"), "rater_cost");
                item.route = std::move(route);
            }
            if (!ij.at("cascade").is_null()) {
                const json& cj = ij.at("cascade");
                CascadeSummary cascade;
                cascade.verified = cj.at("verified").get<bool>();
                cascade.escalated = cj.at("escalated").get<bool>();
                cascade.sas_cost = rational_from_json(cj.at("sas_cost"), "sas_cost");
                cascade.mas_cost = rational_from_json(cj.at("mas_cost"), "mas_cost");
                item.cascade = std::move(cascade);
            }
            report.items.push_back(std::move(item));
        }
        for (const auto& [arm, v] : j.at("failures").items())
            report.failures[arm] = v.get<std::uint64_t>();
        for (const auto& [arm, v] : j.at("accuracy").items())
            report.accuracy[arm] = rational_from_json(v, "accuracy");
        for (const auto& [arm, v] : j.at("mean_cost").items())
            report.mean_cost[arm] = rational_from_json(v, "mean_cost");
        for (const auto& [arm, v] : j.at("mean_weighted_tokens").items())
            report.mean_weighted_tokens[arm] = rational_from_json(v, "mean_weighted_tokens");
        report.p_route_mas = opt_rational_from_json(j.at("p_route_mas"), "p_route_mas");
        report.p_cascade_pass = opt_rational_from_json(j.at("p_cascade_pass"), "p_cascade_pass");
        if (!j.at("quadrant").is_null()) {
            const json& qj = j.at("quadrant");
            QuadrantTable q;
            q.both_pass = qj.at("both_pass").get<std::uint64_t>();
            q.both_fail = qj.at("both_fail").get<std::uint64_t>();
            q.sas_win = qj.at("sas_win").get<std::uint64_t>();
            q.mas_win = qj.at("mas_win").get<std::uint64_t>();
            report.quadrant = q;
        }
        if (!j.at("tokens").is_null()) report.tokens = tokens_from_json(j.at("tokens"));
        if (!j.at("tokens_excluding_summarizer").is_null())
            report.tokens_excluding_summarizer =
                tokens_from_json(j.at("tokens_excluding_summarizer"));
    } catch (const json::exception& e) {
        fail(Errc::parse, std::string("bad report: ") + e.what());
    }
    return report;
}

namespace {

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

std::string fmt2(const Rational& r) { return format_decimal(r, 2); }

std::string fmt2_opt(const std::optional<Rational>& r) { return r ? fmt2(*r) : "-"; }

} // namespace

std::string render_report_table(const RunReport& report) {
    std::ostringstream out;
    out << "items: " << report.dataset_size << "  seed: " << report.seed << "  arms:";
    for (const std::string& arm : report.arms) out << ' ' << arm;
    out << "\n\n";

    out << pad("arm", 10) << pad("accuracy", 11) << pad("mean cost", 12)
        << pad("mean wtok", 12) << "failures\n";
    for (const std::string& arm : report.arms) {
        auto acc = report.accuracy.count(arm) ? fmt2(report.accuracy.at(arm)) : "-";
        auto cost = report.mean_cost.count(arm) ? fmt2(report.mean_cost.at(arm)) : "-";
        auto wtok =
            report.mean_weighted_tokens.count(arm) ? fmt2(report.mean_weighted_tokens.at(arm)) : "-";
        auto failures =
            report.failures.count(arm) ? std::to_string(report.failures.at(arm)) : "0";
        out << pad(arm, 10) << pad(acc, 11) << pad(cost, 12) << pad(wtok, 12) << failures << "\n";
    }

    auto tokens_block = [&](const char* title, const TokenReport& tokens) {
        out << "\n" << title << "\n";
        out << pad("", 16) << pad("sas", 11) << pad("mas", 11) << "mas/sas\n";
        out << pad("prefill (mean)", 16) << pad(fmt2_opt(tokens.sas.mean_prefill), 11)
            << pad(fmt2_opt(tokens.mas.mean_prefill), 11) << fmt2_opt(tokens.prefill_ratio)
            << "\n";
        out << pad("decode (mean)", 16) << pad(fmt2_opt(tokens.sas.mean_decode), 11)
            << pad(fmt2_opt(tokens.mas.mean_decode), 11) << fmt2_opt(tokens.decode_ratio) << "\n";
    };
    if (report.tokens) tokens_block("tokens per request", *report.tokens);
    if (report.tokens_excluding_summarizer)
        tokens_block("tokens per request, summarizer excluded",
                     *report.tokens_excluding_summarizer);

    if (report.p_route_mas || report.p_cascade_pass) {
        out << "\n";
        if (report.p_route_mas) out << "p(route->mas): " << fmt2(*report.p_route_mas) << "  ";
        if (report.p_cascade_pass)
            out << "p(cascade pass): " << fmt2(*report.p_cascade_pass);
        out << "\n";
    }

    if (report.quadrant) {
        const QuadrantTable& q = *report.quadrant;
        out << "\nquadrant  both pass: " << q.both_pass << "  both fail: " << q.both_fail
            << "  sas win: " << q.sas_win << "  mas win: " << q.mas_win << "\n";
    }
    return out.str();
}

void write_outputs(const ExperimentOutput& output, const std::string& out_dir) {
    if (out_dir.empty()) fail(Errc::config, "output directory required");
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    {
        std::ofstream f(dir / "report.json", std::ios::binary);
        if (!f) fail(Errc::io, "cannot write report.json");
        f << report_to_json(output.report).dump(2) << '\n';
    }
    {
        std::ofstream f(dir / "report.txt", std::ios::binary);
        if (!f) fail(Errc::io, "cannot write report.txt");
        f << render_report_table(output.report);
    }
    {
        std::ofstream f(dir / "traces.jsonl", std::ios::binary);
        if (!f) fail(Errc::io, "cannot write traces.jsonl");
        export_traces(f, output.traces);
    }
    {
        std::ofstream f(dir / "decisions.jsonl", std::ios::binary);
        if (!f) fail(Errc::io, "cannot write decisions.jsonl");
        for (const DecisionRecord& d : output.decisions) {
            json j;
            j["request_id"] = d.request_id;
            j["score"] = d.score ? json(*d.score) : json(nullptr);
            j["target"] = d.target;
            j["escalated"] = d.escalated;
            j["sas_cost"] = rational_to_json(d.sas_cost);
            j["mas_cost"] = rational_to_json(d.mas_cost);
            j["rater_cost"] = rational_to_json(d.rater_cost);
            f << j.dump() << '\n';
        }
    }
}

ImportanceLedger build_ledger(std::span<const ExecutionTrace> traces,
                              const std::vector<DatasetRecord>& records,
                              const std::optional<VerifierSpec>& override_spec, int scale) {
    std::map<std::string, const DatasetRecord*> by_id;
    for (const DatasetRecord& record : records) by_id[record.id] = &record;

    ImportanceLedger ledger(scale);
    for (const ExecutionTrace& trace : traces) {
        const std::string& full_id = trace.request_id();
        std::string base = full_id.substr(0, full_id.find('#'));
        auto it = by_id.find(base);
        if (it == by_id.end())
            fail(Errc::missing_group, "no dataset record for request '" + full_id + "'");
        const bool correct =
            verify(trace.final_answer(), verifier_for(*it->second, override_spec));

        std::map<std::uint32_t, std::vector<ConfidenceRecord>> rounds;
        for (const Message& m : trace.messages()) {
            const Node& dst = trace.node(m.dst);
            if (dst.kind != NodeKind::LlmAgent) continue;
            auto conf = extract_confidence(m.payload, scale);
            if (conf && *conf >= 1)
                rounds[m.round].push_back(ConfidenceRecord{m.dst, m.round, *conf});
        }
        for (const auto& [round, confs] : rounds) ledger.update(round, correct, confs);
    }
    return ledger;
}

} // namespace agentgraph
