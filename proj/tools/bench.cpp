// Times the experiment loop: serial reference path vs the OpenMP path, and
// checks they produce the identical report.

#include "agentgraph/harness.hpp"
#include "agentgraph/provider.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#if defined(AGENTGRAPH_HAVE_OPENMP)
#include <omp.h>
#endif

namespace fs = std::filesystem;
using namespace agentgraph;
using Clock = std::chrono::steady_clock;

int main(int argc, char** argv) {
    CLI::App app{"serial vs parallel harness benchmark"};
    int items = 200;
    int threads = 0; // 0 -> hardware default
    int solvers = 4;
    int rounds = 3;
    app.add_option("--items", items, "dataset size");
    app.add_option("--threads", threads, "parallel worker count (default: all cores)");
    app.add_option("--solvers", solvers, "debate width");
    app.add_option("--rounds", rounds, "debate rounds");
    CLI11_PARSE(app, argc, argv);

    if (threads <= 0) {
#if defined(AGENTGRAPH_HAVE_OPENMP)
        threads = omp_get_max_threads();
#else
        threads = static_cast<int>(std::thread::hardware_concurrency());
#endif
        if (threads < 2) threads = 2;
    }

    fs::path dir = fs::temp_directory_path() / "agentgraph-bench";
    fs::create_directories(dir);

    {
        std::ofstream dataset(dir / "dataset.jsonl");
        for (int i = 0; i < items; ++i)
            dataset << "{\"id\": \"item-" << i << "\", \"question\": \"benchmark question " << i
                    << "\", \"reference\": \"42\"}\n";
    }
    {
        // One catch-all reply, padded so prompt rendering and truncation have
        // real work to chew on.
        std::string filler(2000, 'x');
        ProviderScript script;
        script.mode = ScriptMode::Matched;
        ScriptEntry entry;
        entry.response.text = "Reasoning: " + filler + "\nThe answer is \\boxed{42}. Confidence: 7.";
        entry.response.prefill_tokens = 500;
        entry.response.decode_tokens = 400;
        script.entries.push_back(entry);
        std::ofstream out(dir / "script.json");
        out << script_to_json(script) << "\n";
    }

    ExperimentConfig config;
    config.dataset_path = (dir / "dataset.jsonl").string();
    config.arms = {"sas", "mas"};
    config.provider.kind = ProviderSpec::Kind::Scripted;
    config.provider.script_path = (dir / "script.json").string();
    SasConfig sas;
    sas.model_name = "bench-model";
    config.sas = sas;
    DebateConfig debate;
    debate.solver_models.assign(static_cast<std::size_t>(solvers), "bench-model");
    debate.n_rounds = rounds;
    debate.truncation_fraction = Rational(1, 2);
    config.mas = debate;

    std::cout << "items=" << items << " solvers=" << solvers << " rounds=" << rounds << "\n";

    config.parallelism = 1;
    auto t0 = Clock::now();
    ExperimentOutput serial = run_experiment(config);
    auto t1 = Clock::now();
    double serial_s = std::chrono::duration<double>(t1 - t0).count();
    std::cout << "serial:              " << serial_s << " s\n";

    config.parallelism = threads;
    auto t2 = Clock::now();
    ExperimentOutput parallel = run_experiment(config);
    auto t3 = Clock::now();
    double parallel_s = std::chrono::duration<double>(t3 - t2).count();
    std::cout << "parallel (" << threads << " threads): " << parallel_s << " s\n";
    if (parallel_s > 0) std::cout << "speedup:             " << serial_s / parallel_s << "x\n";

    // The reports must agree except for the recorded parallelism itself.
    RunReport normalized = parallel.report;
    normalized.parallelism = serial.report.parallelism;
    const bool same = normalized == serial.report;
    std::cout << "reports identical:   " << (same ? "yes" : "NO") << "\n";
    return same ? 0 : 1;
}
