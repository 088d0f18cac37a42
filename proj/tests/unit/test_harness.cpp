#include <doctest.h>

#include "agentgraph/errors.hpp"
#include "agentgraph/harness.hpp"

#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <unistd.h>

using namespace agentgraph;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path make_temp_dir() {
    static std::atomic<int> counter{0};
    fs::path dir = fs::temp_directory_path() /
                   ("agentgraph-test-" + std::to_string(::getpid()) + "-" +
                    std::to_string(counter++));
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out << content;
}

ScriptEntry matched_entry(std::string needle, std::string text, std::uint64_t prefill,
                          std::uint64_t decode) {
    ScriptEntry e;
    e.match = ScriptEntry::Match::Substring;
    e.needle = std::move(needle);
    e.response.text = std::move(text);
    e.response.prefill_tokens = prefill;
    e.response.decode_tokens = decode;
    return e;
}

// Entries for one item served by the matched default provider. The needles
// lean on phrases unique to each caller's prompt: the single-agent prompt
// carries "math problem? \n<question>", the analyzer prompt carries
// "FUNCTION TO IMPLEMENT:\n<question>", the coder prompt carries the
// analyzer's reply, and the rater's system prompt ends in a code fence right
// before the question.
void add_sas_entry(ProviderScript& script, const std::string& question, const std::string& reply) {
    script.entries.push_back(matched_entry("math problem? \n" + question, reply, 10, 10));
}

void add_pipeline_entries(ProviderScript& script, const std::string& tag,
                          const std::string& question, const std::string& coder_reply) {
    script.entries.insert(script.entries.begin(),
                          matched_entry("ANALYSIS-" + tag, coder_reply, 60, 8));
    script.entries.push_back(
        matched_entry("FUNCTION TO IMPLEMENT:\n" + question, "analysis ANALYSIS-" + tag, 30, 5));
}

void add_rater_entry(ProviderScript& script, const std::string& question,
                     const std::string& reply) {
    script.entries.insert(script.entries.begin(),
                          matched_entry("```\n" + question, reply, 300, 10));
}

struct Fixture {
    fs::path dir;
    std::string config_path;
};

Fixture write_fixture(const std::string& dataset, const ProviderScript& script,
                      const std::string& config_body) {
    Fixture f;
    f.dir = make_temp_dir();
    write_file(f.dir / "dataset.jsonl", dataset);
    write_file(f.dir / "script.json", script_to_json(script));
    write_file(f.dir / "config.json", config_body);
    f.config_path = (f.dir / "config.json").string();
    return f;
}

const char* kPairedConfig = R"({
  "dataset": "dataset.jsonl",
  "arms": ["sas", "mas"],
  "seed": 7,
  "provider": {"kind": "scripted", "script": "script.json"},
  "sas": {"model_name": "sas-m"},
  "mas": {"kind": "pipeline", "analyzer_model": "ana-m", "coder_model": "cod-m"}
})";

// Four items covering every correctness quadrant: single-agent solves a and
// b, the pipeline solves a and c.
Fixture paired_fixture() {
    std::string dataset =
        R"({"id": "a", "question": "question-a", "reference": "1"})"
        "\n"
        R"({"id": "b", "question": "question-b", "reference": "2"})"
        "\n"
        R"({"id": "c", "question": "question-c", "reference": "3"})"
        "\n"
        R"({"id": "d", "question": "question-d", "reference": "4"})"
        "\n";
    ProviderScript script;
    script.mode = ScriptMode::Matched;
    add_sas_entry(script, "question-a", "\\boxed{1}");
    add_sas_entry(script, "question-b", "\\boxed{2}");
    add_sas_entry(script, "question-c", "\\boxed{0}");
    add_sas_entry(script, "question-d", "\\boxed{0}");
    add_pipeline_entries(script, "a", "question-a", "\\boxed{1}");
    add_pipeline_entries(script, "b", "question-b", "\\boxed{9}");
    add_pipeline_entries(script, "c", "question-c", "\\boxed{3}");
    add_pipeline_entries(script, "d", "question-d", "\\boxed{9}");
    return write_fixture(dataset, script, kPairedConfig);
}

} // namespace

TEST_CASE("parse_dataset reads one record per line") {
    std::string text =
        R"({"id": "a", "question": "qa", "reference": "1"})"
        "\n"
        R"({"id": "b", "question": "qb", "reference": "2", "evaluator": "numeric_match", "tolerance": "1/100"})"
        "\n\n"
        R"({"id": "c", "question": "qc", "reference": "3", "evaluator": "custom:my_hook"})"
        "\n";
    auto records = parse_dataset(text);
    REQUIRE(records.size() == 3);
    CHECK(records[0].id == "a");
    CHECK(records[0].question == "qa");
    CHECK(records[0].reference == "1");
    CHECK(records[0].evaluator == "exact_match");
    CHECK(!records[0].tolerance);
    CHECK(records[1].evaluator == "numeric_match");
    REQUIRE(records[1].tolerance);
    CHECK(*records[1].tolerance == Rational(1, 100));
    CHECK(records[2].evaluator == "custom:my_hook");
}

TEST_CASE("parse_dataset rejects duplicates and incomplete records") {
    std::string dup =
        R"({"id": "a", "question": "qa", "reference": "1"})"
        "\n"
        R"({"id": "a", "question": "qb", "reference": "2"})"
        "\n";
    CHECK_THROWS_AS(parse_dataset(dup), Error);

    try {
        parse_dataset(R"({"id": "a", "question": "qa"})" "\n");
        FAIL("expected parse error for missing reference");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::parse);
        CHECK(std::string(e.what()).find("reference") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_dataset(R"({"id": "a", "reference": "1"})" "\n"), Error);
    CHECK_THROWS_AS(parse_dataset(R"({"question": "qa", "reference": "1"})" "\n"), Error);
    CHECK_THROWS_AS(parse_dataset("not json\n"), Error);
    CHECK_THROWS_AS(parse_dataset("[1, 2]\n"), Error);
}

TEST_CASE("parse_dataset keeps extra fields and stringifies references") {
    auto records = parse_dataset(
        R"({"id": "a", "question": "qa", "reference": 42, "difficulty": "hard"})" "\n");
    REQUIRE(records.size() == 1);
    CHECK(records[0].reference == "42");
    CHECK(records[0].fields.at("difficulty") == "hard");
}

TEST_CASE("verifier_for uses the record's evaluator tag") {
    auto records = parse_dataset(
        R"({"id": "a", "question": "qa", "reference": "42"})"
        "\n"
        R"({"id": "b", "question": "qb", "reference": "1/2", "evaluator": "numeric_match", "tolerance": "1/100"})"
        "\n");
    Verifier exact = verifier_for(records[0], std::nullopt);
    CHECK(verify(std::optional<std::string>("42"), exact));
    CHECK(!verify(std::optional<std::string>("41"), exact));

    Verifier numeric = verifier_for(records[1], std::nullopt);
    CHECK(verify(std::optional<std::string>("0.5"), numeric));
    CHECK(verify(std::optional<std::string>("0.505"), numeric));
    CHECK(!verify(std::optional<std::string>("0.52"), numeric));

    auto unknown = parse_dataset(R"({"id": "x", "question": "q", "reference": "1", "evaluator": "fuzzy"})" "\n");
    CHECK_THROWS_AS(verifier_for(unknown[0], std::nullopt), Error);
}

TEST_CASE("a verifier override can point at another field") {
    auto records = parse_dataset(
        R"({"id": "a", "question": "qa", "reference": "prose answer", "canonical": "42"})" "\n");
    VerifierSpec spec;
    spec.kind = "numeric_match";
    spec.reference_field = "canonical";
    Verifier v = verifier_for(records[0], spec);
    CHECK(verify(std::optional<std::string>("42."), v));
    CHECK(!verify(std::optional<std::string>("41"), v));

    VerifierSpec missing;
    missing.reference_field = "nonexistent";
    CHECK_THROWS_AS(verifier_for(records[0], missing), Error);
}

TEST_CASE("quadrant buckets joint correctness") {
    QuadrantTable table = quadrant({true, true, false, false}, {true, false, true, false});
    CHECK(table.both_pass == 1);
    CHECK(table.sas_win == 1);
    CHECK(table.mas_win == 1);
    CHECK(table.both_fail == 1);
    CHECK(table.total() == 4);

    QuadrantTable all = quadrant({true, true}, {true, true});
    CHECK(all.both_pass == 2);
    CHECK(all.total() == 2);

    CHECK(quadrant({}, {}).total() == 0);
    CHECK_THROWS_AS(quadrant({true}, {true, false}), Error);
}

TEST_CASE("quadrant matches an independent tally on random vectors") {
    std::mt19937 rng(47);
    std::uniform_int_distribution<int> coin(0, 1);
    for (int iter = 0; iter < 20; ++iter) {
        std::vector<bool> sas, mas;
        std::uint64_t counts[2][2] = {{0, 0}, {0, 0}};
        for (int i = 0; i < 500; ++i) {
            bool s = coin(rng) == 1, m = coin(rng) == 1;
            sas.push_back(s);
            mas.push_back(m);
            counts[s ? 1 : 0][m ? 1 : 0] += 1;
        }
        QuadrantTable table = quadrant(sas, mas);
        CHECK(table.both_pass == counts[1][1]);
        CHECK(table.sas_win == counts[1][0]);
        CHECK(table.mas_win == counts[0][1]);
        CHECK(table.both_fail == counts[0][0]);
        CHECK(table.total() == 500);
    }
}

TEST_CASE("experiment config files load with relative paths resolved") {
    fs::path dir = make_temp_dir();
    write_file(dir / "tmpl.txt", "Solve {question} please\n");
    write_file(dir / "data.jsonl", R"({"id": "a", "question": "q", "reference": "1"})" "\n");
    write_file(dir / "script.json", R"({"mode": "matched", "entries": [{"text": "x"}]})");
    write_file(dir / "config.json", R"({
      "dataset": "data.jsonl",
      "arms": ["sas", "mas"],
      "seed": 99,
      "parallelism": 3,
      "out": "results",
      "provider": {"kind": "scripted", "script": "script.json"},
      "rates": {
        "default": {"input_rate": "1/2", "output_rate": 2},
        "models": {"big-m": {"input_rate": "3", "output_rate": "4"}}
      },
      "sas": {"model_name": "sas-m", "prompt_template_file": "tmpl.txt", "max_tokens": 64},
      "mas": {
        "kind": "debate",
        "solver_models": ["m1", "m2", "m3"],
        "n_rounds": 3,
        "aggregation": "summarize",
        "summarizer_model": "msum",
        "truncation_fraction": "1/4",
        "confidence_scale": 5
      },
      "policy": {
        "rater_model": "rater-m",
        "rater_mode": "scaled",
        "threshold": 6,
        "verifier": {"kind": "numeric_match", "tolerance": "1/10"}
      }
    })");

    ExperimentConfig cfg = load_experiment_config((dir / "config.json").string());
    CHECK(cfg.dataset_path == (dir / "data.jsonl").string());
    CHECK(cfg.arms == std::vector<std::string>{"sas", "mas"});
    CHECK(cfg.seed == 99);
    CHECK(cfg.parallelism == 3);
    CHECK(cfg.out_dir == "results");
    CHECK(cfg.provider.kind == ProviderSpec::Kind::Scripted);
    CHECK(cfg.provider.script_path == (dir / "script.json").string());
    CHECK(cfg.default_rates.input_rate == Rational(1, 2));
    CHECK(cfg.default_rates.output_rate == Rational(2));
    CHECK(cfg.model_rates.at("big-m").input_rate == Rational(3));
    REQUIRE(cfg.sas);
    CHECK(cfg.sas->model_name == "sas-m");
    CHECK(cfg.sas->prompt_template == "Solve {question} please");
    CHECK(cfg.sas->max_tokens == 64);
    REQUIRE(cfg.mas);
    const auto& debate = std::get<DebateConfig>(*cfg.mas);
    CHECK(debate.solver_models.size() == 3);
    CHECK(debate.n_rounds == 3);
    CHECK(debate.aggregation == Aggregation::Summarize);
    CHECK(debate.summarizer_model == "msum");
    CHECK(debate.truncation_fraction == Rational(1, 4));
    CHECK(debate.confidence_scale == 5);
    REQUIRE(cfg.rater);
    CHECK(cfg.rater->rater_model == "rater-m");
    CHECK(cfg.rater->threshold == 6);
    CHECK(cfg.rater->discount_cached_prefill);
    REQUIRE(cfg.verifier_override);
    CHECK(cfg.verifier_override->kind == "numeric_match");
    CHECK(*cfg.verifier_override->tolerance == Rational(1, 10));
}

TEST_CASE("policy mode picks the arm when none are listed") {
    fs::path dir = make_temp_dir();
    write_file(dir / "config.json", R"({
      "dataset": "data.jsonl",
      "policy": {"rater_model": "r", "mode": "route"}
    })");
    ExperimentConfig cfg = load_experiment_config((dir / "config.json").string());
    CHECK(cfg.arms == std::vector<std::string>{"route"});

    write_file(dir / "config2.json", R"({"dataset": "data.jsonl"})");
    CHECK(load_experiment_config((dir / "config2.json").string()).arms ==
          std::vector<std::string>{"sas"});

    write_file(dir / "config3.json", R"({"dataset": "d", "policy": {"mode": "teleport"}})");
    CHECK_THROWS_AS(load_experiment_config((dir / "config3.json").string()), Error);
}

TEST_CASE("paired arms produce the per-item quadrant and token comparison") {
    Fixture f = paired_fixture();
    ExperimentOutput out = run_experiment(load_experiment_config(f.config_path));
    const RunReport& report = out.report;

    CHECK(report.dataset_size == 4);
    CHECK(report.seed == 7);
    REQUIRE(report.items.size() == 4);
    CHECK(report.items[0].id == "a"); // sorted by id

    REQUIRE(report.quadrant);
    CHECK(report.quadrant->both_pass == 1);
    CHECK(report.quadrant->sas_win == 1);
    CHECK(report.quadrant->mas_win == 1);
    CHECK(report.quadrant->both_fail == 1);

    CHECK(report.accuracy.at("sas") == Rational(1, 2));
    CHECK(report.accuracy.at("mas") == Rational(1, 2));
    // accuracy is consistent with the quadrant by construction
    CHECK(report.accuracy.at("sas") ==
          Rational(report.quadrant->both_pass + report.quadrant->sas_win, 4));
    CHECK(report.accuracy.at("mas") ==
          Rational(report.quadrant->both_pass + report.quadrant->mas_win, 4));

    CHECK(report.failures.at("sas") == 0);
    CHECK(report.mean_cost.at("sas") == Rational(20));
    CHECK(report.mean_cost.at("mas") == Rational(103));
    CHECK(report.mean_weighted_tokens.at("sas") == Rational(30));
    CHECK(report.mean_weighted_tokens.at("mas") == Rational(116));

    REQUIRE(report.tokens);
    CHECK(report.tokens->sas.traces == 4);
    CHECK(report.tokens->mas.traces == 4);
    CHECK(*report.tokens->sas.mean_prefill == Rational(10));
    CHECK(*report.tokens->mas.mean_prefill == Rational(90));
    CHECK(*report.tokens->prefill_ratio == Rational(9));
    CHECK(*report.tokens->decode_ratio == Rational(13, 10));
    REQUIRE(report.tokens_excluding_summarizer);
    CHECK(*report.tokens_excluding_summarizer->prefill_ratio == Rational(9)); // no summarizer here

    CHECK(!report.p_route_mas);
    CHECK(!report.p_cascade_pass);
    CHECK(out.decisions.empty());

    // one trace per item per arm, ids sorted
    REQUIRE(out.traces.size() == 8);
    CHECK(out.traces[0].request_id() == "a#mas");
    CHECK(out.traces[1].request_id() == "a#sas");

    // per-item outcomes carry answers
    const ItemResult& item_a = report.items[0];
    CHECK(item_a.arms.at("sas").answer == "1");
    CHECK(item_a.arms.at("sas").correct);
    CHECK(item_a.arms.at("mas").correct);
    CHECK(item_a.arms.at("sas").cost == Rational(20));
    CHECK(item_a.arms.at("mas").cost == Rational(103));
}

TEST_CASE("experiment reports are deterministic and round-trip through json") {
    Fixture f = paired_fixture();
    ExperimentConfig cfg = load_experiment_config(f.config_path);
    ExperimentOutput first = run_experiment(cfg);
    ExperimentOutput second = run_experiment(cfg);

    std::string bytes1 = report_to_json(first.report).dump(2);
    std::string bytes2 = report_to_json(second.report).dump(2);
    CHECK(bytes1 == bytes2);
    CHECK(export_traces_string(first.traces) == export_traces_string(second.traces));

    RunReport back = report_from_json(json::parse(bytes1));
    CHECK(back == first.report);
}

TEST_CASE("parallel runs match the serial reference report") {
    Fixture f = paired_fixture();
    ExperimentConfig cfg = load_experiment_config(f.config_path);
    ExperimentOutput serial = run_experiment(cfg);
    cfg.parallelism = 4;
    ExperimentOutput parallel = run_experiment(cfg);

    RunReport a = serial.report;
    RunReport b = parallel.report;
    CHECK(b.parallelism == 4);
    b.parallelism = a.parallelism; // the knob itself is recorded; all results must match
    CHECK(a == b);
    CHECK(export_traces_string(serial.traces) == export_traces_string(parallel.traces));
}

TEST_CASE("sequential scripts refuse to run in parallel") {
    fs::path dir = make_temp_dir();
    write_file(dir / "dataset.jsonl", R"({"id": "a", "question": "q", "reference": "1"})" "\n");
    write_file(dir / "script.json", R"({"mode": "sequential", "entries": [{"text": "\\boxed{1}"}]})");
    write_file(dir / "config.json", R"({
      "dataset": "dataset.jsonl",
      "arms": ["sas"],
      "parallelism": 2,
      "provider": {"kind": "scripted", "script": "script.json"},
      "sas": {"model_name": "m"}
    })");
    try {
        run_experiment(load_experiment_config((dir / "config.json").string()));
        FAIL("expected config error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::config);
    }
}

TEST_CASE("a single-arm run leaves the comparison fields undefined") {
    fs::path dir = make_temp_dir();
    write_file(dir / "dataset.jsonl", R"({"id": "a", "question": "question-a", "reference": "1"})" "\n");
    ProviderScript script;
    script.mode = ScriptMode::Matched;
    add_sas_entry(script, "question-a", "\\boxed{1}");
    write_file(dir / "script.json", script_to_json(script));
    write_file(dir / "config.json", R"({
      "dataset": "dataset.jsonl",
      "arms": ["sas"],
      "provider": {"kind": "scripted", "script": "script.json"},
      "sas": {"model_name": "m"}
    })");
    ExperimentOutput out = run_experiment(load_experiment_config((dir / "config.json").string()));
    CHECK(out.report.accuracy.at("sas") == Rational(1));
    CHECK(!out.report.quadrant);
    CHECK(!out.report.tokens);
    CHECK(!out.report.p_route_mas);
}

TEST_CASE("an empty dataset yields a valid zero-count report") {
    fs::path dir = make_temp_dir();
    write_file(dir / "dataset.jsonl", "");
    ProviderScript script;
    script.mode = ScriptMode::Matched;
    ScriptEntry any;
    any.response.text = "x";
    script.entries.push_back(any);
    write_file(dir / "script.json", script_to_json(script));
    write_file(dir / "config.json", R"({
      "dataset": "dataset.jsonl",
      "arms": ["sas", "mas"],
      "provider": {"kind": "scripted", "script": "script.json"},
      "sas": {"model_name": "m"},
      "mas": {"kind": "pipeline", "analyzer_model": "a", "coder_model": "c"}
    })");
    ExperimentOutput out = run_experiment(load_experiment_config((dir / "config.json").string()));
    CHECK(out.report.dataset_size == 0);
    CHECK(out.report.items.empty());
    CHECK(out.report.accuracy.empty());
    CHECK(out.report.failures.at("sas") == 0);
    REQUIRE(out.report.quadrant);
    CHECK(out.report.quadrant->total() == 0);
    CHECK(!render_report_table(out.report).empty());
    CHECK(report_from_json(report_to_json(out.report)) == out.report);
}

TEST_CASE("provider misses mark the arm failed and the run continues") {
    fs::path dir = make_temp_dir();
    write_file(dir / "dataset.jsonl",
               R"({"id": "a", "question": "question-a", "reference": "1"})"
               "\n"
               R"({"id": "b", "question": "question-b", "reference": "2"})"
               "\n");
    ProviderScript script;
    script.mode = ScriptMode::Matched;
    add_sas_entry(script, "question-a", "\\boxed{1}"); // nothing matches question-b
    write_file(dir / "script.json", script_to_json(script));
    write_file(dir / "config.json", R"({
      "dataset": "dataset.jsonl",
      "arms": ["sas"],
      "provider": {"kind": "scripted", "script": "script.json"},
      "sas": {"model_name": "m"}
    })");
    ExperimentOutput out = run_experiment(load_experiment_config((dir / "config.json").string()));
    CHECK(out.report.failures.at("sas") == 1);
    CHECK(out.report.accuracy.at("sas") == Rational(1, 2));
    const ArmOutcome& failed = out.report.items[1].arms.at("sas");
    CHECK(failed.failed);
    CHECK(!failed.correct);
    CHECK(failed.cost == Rational(0));
    CHECK(out.traces.size() == 1); // only the successful item left a trace
}

TEST_CASE("misconfigured arms abort instead of failing items") {
    fs::path dir = make_temp_dir();
    write_file(dir / "dataset.jsonl", R"({"id": "a", "question": "q", "reference": "1"})" "\n");
    write_file(dir / "script.json", R"({"mode": "matched", "entries": [{"text": "x"}]})");
    write_file(dir / "config.json", R"({
      "dataset": "dataset.jsonl",
      "arms": ["mas"],
      "provider": {"kind": "scripted", "script": "script.json"},
      "sas": {"model_name": "m"}
    })");
    CHECK_THROWS_AS(run_experiment(load_experiment_config((dir / "config.json").string())), Error);

    write_file(dir / "config2.json", R"({
      "dataset": "dataset.jsonl",
      "arms": ["sas", "teleport"],
      "provider": {"kind": "scripted", "script": "script.json"},
      "sas": {"model_name": "m"}
    })");
    CHECK_THROWS_AS(run_experiment(load_experiment_config((dir / "config2.json").string())), Error);
}

TEST_CASE("the route arm rates first and pays for the rater") {
    fs::path dir = make_temp_dir();
    write_file(dir / "dataset.jsonl",
               R"({"id": "a", "question": "question-a", "reference": "1"})"
               "\n"
               R"({"id": "b", "question": "question-b", "reference": "2"})"
               "\n"
               R"({"id": "c", "question": "question-c", "reference": "3"})"
               "\n"
               R"({"id": "d", "question": "question-d", "reference": "4"})"
               "\n");
    ProviderScript script;
    script.mode = ScriptMode::Matched;
    add_sas_entry(script, "question-a", "\\boxed{1}");
    add_sas_entry(script, "question-b", "\\boxed{2}");
    add_pipeline_entries(script, "c", "question-c", "\\boxed{3}");
    add_pipeline_entries(script, "d", "question-d", "\\boxed{4}");
    add_rater_entry(script, "question-a", R"({"rating": 2})");
    add_rater_entry(script, "question-b", R"({"rating": 5})");
    add_rater_entry(script, "question-c", R"({"rating": 9})");
    add_rater_entry(script, "question-d", "totally unrateable, sorry");
    write_file(dir / "script.json", script_to_json(script));
    write_file(dir / "config.json", R"({
      "dataset": "dataset.jsonl",
      "arms": ["route"],
      "provider": {"kind": "scripted", "script": "script.json"},
      "sas": {"model_name": "sas-m"},
      "mas": {"kind": "pipeline", "analyzer_model": "ana-m", "coder_model": "cod-m"},
      "policy": {"rater_model": "rater-m", "rater_mode": "scaled", "threshold": 5}
    })");

    ExperimentOutput out = run_experiment(load_experiment_config((dir / "config.json").string()));
    const RunReport& report = out.report;

    REQUIRE(report.p_route_mas);
    CHECK(*report.p_route_mas == Rational(1, 2));
    CHECK(report.accuracy.at("route") == Rational(1));

    REQUIRE(report.items.size() == 4);
    const ItemResult& a = report.items[0];
    REQUIRE(a.route);
    CHECK(a.route->score == 2);
    CHECK(a.route->target == SystemClass::Sas);
    CHECK(a.route->rater_cost == Rational(310));
    CHECK(a.arms.at("route").cost == Rational(310 + 20));

    const ItemResult& b = report.items[1]; // a score equal to the threshold stays on sas
    CHECK(b.route->score == 5);
    CHECK(b.route->target == SystemClass::Sas);

    const ItemResult& c = report.items[2];
    CHECK(c.route->score == 9);
    CHECK(c.route->target == SystemClass::Mas);
    CHECK(c.arms.at("route").cost == Rational(310 + 103));

    const ItemResult& d = report.items[3]; // unusable rating fails open to mas
    CHECK(!d.route->score);
    CHECK(d.route->target == SystemClass::Mas);

    REQUIRE(out.decisions.size() == 4);
    const DecisionRecord& da = out.decisions[0];
    CHECK(da.request_id == "a#route");
    CHECK(da.target == "sas");
    CHECK(!da.escalated);
    CHECK(da.sas_cost == Rational(20));
    CHECK(da.mas_cost == Rational(0));
    CHECK(da.rater_cost == Rational(310));
    const DecisionRecord& dc = out.decisions[2];
    CHECK(dc.target == "mas");
    CHECK(dc.escalated);
    CHECK(dc.mas_cost == Rational(103));

    // every item leaves a rater trace and an execution trace
    CHECK(out.traces.size() == 8);
    CHECK(out.traces[0].request_id() == "a#route");
    CHECK(out.traces[1].request_id() == "a#route.rater");
}

TEST_CASE("the cascade arm escalates only unverified items") {
    fs::path dir = make_temp_dir();
    write_file(dir / "dataset.jsonl",
               R"({"id": "a", "question": "question-a", "reference": "1"})"
               "\n"
               R"({"id": "b", "question": "question-b", "reference": "2"})"
               "\n");
    ProviderScript script;
    script.mode = ScriptMode::Matched;
    add_sas_entry(script, "question-a", "\\boxed{1}"); // verifies
    add_sas_entry(script, "question-b", "\\boxed{0}"); // fails, escalates
    add_pipeline_entries(script, "b", "question-b", "\\boxed{2}");
    write_file(dir / "script.json", script_to_json(script));
    write_file(dir / "config.json", R"({
      "dataset": "dataset.jsonl",
      "arms": ["cascade"],
      "provider": {"kind": "scripted", "script": "script.json"},
      "sas": {"model_name": "sas-m"},
      "mas": {"kind": "pipeline", "analyzer_model": "ana-m", "coder_model": "cod-m"}
    })");

    ExperimentOutput out = run_experiment(load_experiment_config((dir / "config.json").string()));
    const RunReport& report = out.report;

    REQUIRE(report.p_cascade_pass);
    CHECK(*report.p_cascade_pass == Rational(1, 2));
    CHECK(report.accuracy.at("cascade") == Rational(1));

    const ItemResult& a = report.items[0];
    REQUIRE(a.cascade);
    CHECK(a.cascade->verified);
    CHECK(!a.cascade->escalated);
    CHECK(a.cascade->sas_cost == Rational(20));
    CHECK(a.cascade->mas_cost == Rational(0));
    CHECK(a.arms.at("cascade").cost == Rational(20));

    const ItemResult& b = report.items[1];
    CHECK(!b.cascade->verified);
    CHECK(b.cascade->escalated);
    CHECK(b.cascade->sas_cost == Rational(20));
    CHECK(b.cascade->mas_cost == Rational(103));
    CHECK(b.arms.at("cascade").cost == Rational(123));
    CHECK(b.arms.at("cascade").answer == "2");

    REQUIRE(out.decisions.size() == 2);
    CHECK(out.decisions[0].target == "sas");
    CHECK(out.decisions[1].target == "mas");
    CHECK(out.decisions[1].escalated);

    REQUIRE(out.traces.size() == 3);
    CHECK(out.traces[0].request_id() == "a#cascade");
    CHECK(out.traces[1].request_id() == "b#cascade");
    CHECK(out.traces[2].request_id() == "b#cascade.mas");
}

TEST_CASE("write_outputs lays down the four artifacts") {
    Fixture f = paired_fixture();
    ExperimentOutput out = run_experiment(load_experiment_config(f.config_path));
    fs::path out_dir = f.dir / "results";
    write_outputs(out, out_dir.string());

    std::ifstream report_file(out_dir / "report.json");
    REQUIRE(report_file.good());
    json parsed = json::parse(report_file);
    CHECK(report_from_json(parsed) == out.report);

    std::ifstream traces_file(out_dir / "traces.jsonl");
    REQUIRE(traces_file.good());
    std::vector<ExecutionTrace> traces = import_traces(traces_file);
    CHECK(traces.size() == out.traces.size());

    std::ifstream decisions_file(out_dir / "decisions.jsonl");
    REQUIRE(decisions_file.good());
    CHECK(decisions_file.peek() == std::ifstream::traits_type::eof()); // no policy arms ran

    std::ifstream table_file(out_dir / "report.txt");
    REQUIRE(table_file.good());
    std::string table((std::istreambuf_iterator<char>(table_file)),
                      std::istreambuf_iterator<char>());
    CHECK(table.find("items: 4") != std::string::npos);
    CHECK(table.find("sas") != std::string::npos);
    CHECK(table.find("quadrant") != std::string::npos);
}

TEST_CASE("the report table prints two-decimal ratios") {
    RunReport report;
    report.dataset_size = 2;
    report.arms = {"sas", "mas"};
    report.accuracy["sas"] = Rational(1, 3);
    report.accuracy["mas"] = Rational(2, 3);
    report.mean_cost["sas"] = Rational(10);
    report.mean_cost["mas"] = Rational(101, 2);
    report.mean_weighted_tokens["sas"] = Rational(30);
    report.mean_weighted_tokens["mas"] = Rational(100);
    report.failures["sas"] = 0;
    report.failures["mas"] = 1;
    TokenReport tokens;
    tokens.sas.traces = 2;
    tokens.mas.traces = 2;
    tokens.sas.mean_prefill = Rational(17950, 100);
    tokens.mas.mean_prefill = Rational(90656, 100);
    tokens.sas.mean_decode = Rational(9565, 100);
    tokens.mas.mean_decode = Rational(53197, 100);
    tokens.prefill_ratio = *tokens.mas.mean_prefill / *tokens.sas.mean_prefill;
    tokens.decode_ratio = *tokens.mas.mean_decode / *tokens.sas.mean_decode;
    report.tokens = tokens;

    std::string table = render_report_table(report);
    CHECK(table.find("5.05") != std::string::npos);
    CHECK(table.find("5.56") != std::string::npos);
    CHECK(table.find("0.33") != std::string::npos);
    CHECK(table.find("50.50") != std::string::npos);
}

TEST_CASE("build_ledger replays confidences against dataset verdicts") {
    auto records = parse_dataset(
        R"({"id": "a", "question": "qa", "reference": "42"})"
        "\n"
        R"({"id": "b", "question": "qb", "reference": "7"})"
        "\n");

    auto make_trace = [](const std::string& id, const char* s1_text, const char* s2_text,
                         const char* final_answer) {
        ExecutionTrace t(id);
        t.add_node(Node::agent("solver-1", "m", "solver"));
        t.add_node(Node::agent("solver-2", "m", "solver"));
        Message m1;
        m1.src = NodeId{"solver-1"};
        m1.dst = NodeId{"solver-1"};
        m1.round = 1;
        m1.payload = s1_text;
        t.record_message(m1);
        Message m2;
        m2.src = NodeId{"solver-2"};
        m2.dst = NodeId{"solver-2"};
        m2.round = 1;
        m2.payload = s2_text;
        t.record_message(m2);
        t.set_final_answer(std::string(final_answer));
        return t;
    };

    std::vector<ExecutionTrace> traces;
    traces.push_back(make_trace("a#mas", "Confidence: 10", "Confidence: 4", "42"));  // correct
    traces.push_back(make_trace("b#mas", "Confidence: 10", "Confidence: 3", "0"));   // wrong
    ImportanceLedger ledger = build_ledger(traces, records, std::nullopt, 10);

    CHECK(ledger.score(NodeId{"solver-1"}) == 10 + 0);
    CHECK(ledger.score(NodeId{"solver-2"}) == 4 + 7);
    CHECK(ledger.least_important() == NodeId{"solver-1"});

    std::vector<ExecutionTrace> orphan;
    orphan.push_back(make_trace("ghost#mas", "Confidence: 5", "Confidence: 5", "1"));
    try {
        build_ledger(orphan, records, std::nullopt, 10);
        FAIL("expected missing_group");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::missing_group);
    }
}
