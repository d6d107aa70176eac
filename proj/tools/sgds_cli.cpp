// sgds command line: run, ablate, eval, inspect-counters, gen-synthetic.
// Exit status: 0 ok, 1 configuration or input error, 2 numeric failure.

#include "sgds/checkpoint.hpp"
#include "sgds/config.hpp"
#include "sgds/errors.hpp"
#include "sgds/harness.hpp"
#include "sgds/kernels.hpp"
#include "sgds/metrics.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kNumericError = 2;

using namespace sgds;

int cmd_run(const std::string& config_path, bool quiet) {
    const ExperimentConfig cfg = load_config(config_path);
    const ExperimentResult res = run_experiment(cfg, [quiet](const std::string& m) {
        if (!quiet) std::cerr << m << '\n';
    });
    for (const RunReport& r : res.runs) {
        if (r.complete(cfg.num_tasks)) {
            const Summary s = summarize(r.matrix);
            std::printf("seed %llu: A_bar %.4f A_T %.4f (%.1f s)\n", static_cast<unsigned long long>(r.seed),
                        s.average_incremental, s.final_average, r.seconds);
        } else {
            std::printf("seed %llu: FAILED %s\n", static_cast<unsigned long long>(r.seed), r.failure.c_str());
        }
    }
    if (res.runs.size() > 1) {
        const SeedSummary s = summarize_seeds(res.runs);
        std::printf("mean: A_bar %.4f +- %.4f A_T %.4f +- %.4f\n", s.a_bar_mean, s.a_bar_std, s.a_last_mean,
                    s.a_last_std);
    }
    std::printf("outputs in %s\n", cfg.out_dir.string().c_str());
    return res.any_failed() ? kNumericError : kOk;
}

int cmd_ablate(const std::string& config_path, bool quiet) {
    const ExperimentConfig cfg = load_config(config_path);
    const AblationResult res = run_ablation(cfg, [quiet](const std::string& m) {
        if (!quiet) std::cerr << m << '\n';
    });
    std::printf("%-16s %10s %8s %10s %8s\n", "cell", "A_bar", "std", "A_T", "std");
    for (std::size_t c = 0; c < res.cells.size(); ++c) {
        const SeedSummary s = summarize_seeds(res.runs[c]);
        std::printf("%-16s %10.4f %8.4f %10.4f %8.4f\n", res.cells[c].name.c_str(), s.a_bar_mean, s.a_bar_std,
                    s.a_last_mean, s.a_last_std);
    }
    std::printf("outputs in %s\n", cfg.out_dir.string().c_str());
    return res.any_failed() ? kNumericError : kOk;
}

int cmd_eval(const std::string& checkpoint_dir, const std::string& config_path) {
    const ExperimentConfig cfg = load_config(config_path);
    const ContinualState state = load_checkpoint(checkpoint_dir);
    if (state.adapters.empty()) throw ConfigError("<checkpoint>", "checkpoint holds no trained task");
    const ExperimentData data = load_experiment_data(cfg);
    if (data.test.dim != state.backbone.width())
        throw ConfigError("dataset.kind", "data dimension " + std::to_string(data.test.dim) +
                                              " does not match checkpoint width " +
                                              std::to_string(state.backbone.width()));
    const TaskStream stream = build_stream(data.train, data.test, state.task_classes);
    const std::vector<double> row = evaluate_row(state, stream.tasks, stream.tasks.size() - 1);
    std::printf("task,accuracy\n");
    double mean = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
        std::printf("%zu,%.17g\n", j + 1, row[j]);
        mean += row[j];
    }
    std::printf("mean,%.17g\n", mean / static_cast<double>(row.size()));
    return kOk;
}

int cmd_inspect(const std::string& checkpoint_dir, bool raw) {
    const ContinualState state = load_checkpoint(checkpoint_dir);
    const ActivationCounters& ctr = state.counters;
    if (raw) {
        std::cout << counters_to_csv(ctr);
        return kOk;
    }
    std::printf("tasks %zu, classes %zu, width %zu, consistent %s\n", state.adapters.size(), ctr.classes().size(),
                ctr.width(), ctr.consistent() ? "yes" : "NO");
    for (std::size_t l : ctr.target_layers()) {
        const auto f = ctr.global(l);
        std::uint64_t total = 0, peak = 0;
        std::size_t used = 0;
        for (std::uint64_t v : f) {
            total += v;
            peak = std::max(peak, v);
            used += v > 0 ? 1 : 0;
        }
        std::printf("layer %zu: %zu/%zu units used, %llu selections, max %llu\n", l, used, f.size(),
                    static_cast<unsigned long long>(total), static_cast<unsigned long long>(peak));
        for (ClassId c : ctr.classes()) {
            const auto fc = ctr.per_class(c, l);
            std::uint64_t ct = 0;
            std::size_t cu = 0;
            for (std::uint64_t v : fc) {
                ct += v;
                cu += v > 0 ? 1 : 0;
            }
            std::printf("  class %u: %zu units, %llu selections\n", c, cu, static_cast<unsigned long long>(ct));
        }
    }
    return ctr.consistent() ? kOk : kNumericError;
}

int cmd_gen_synthetic(const std::string& config_path, const std::string& out_path) {
    const ExperimentConfig cfg = load_config(config_path);
    if (cfg.dataset != DatasetKind::Synthetic) throw ConfigError("dataset.kind", "gen-synthetic needs 'synthetic'");
    const SyntheticData data = generate_synthetic_sets(cfg.synthetic);
    const std::filesystem::path out(out_path);
    const std::filesystem::path test_out = out.parent_path() / (out.stem().string() + ".test.sgdsemb");
    if (!out.parent_path().empty()) std::filesystem::create_directories(out.parent_path());
    save_embeddings(out, data.train);
    save_embeddings(test_out, data.test);
    std::printf("wrote %zu train samples to %s and %zu test samples to %s\n", data.train.samples.size(),
                out.string().c_str(), data.test.samples.size(), test_out.string().c_str());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semantic-guided dynamic sparsification for class-incremental adapters"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Suppress progress on stderr");

    std::string config, checkpoint, out;
    bool raw = false;

    auto* run = app.add_subcommand("run", "Train and evaluate every seed of a config");
    run->add_option("config", config, "Config file")->required();
    auto* ablate = app.add_subcommand("ablate", "Run the phase ablation grid");
    ablate->add_option("config", config, "Config file")->required();
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the config's test data");
    eval->add_option("checkpoint", checkpoint, "Checkpoint directory")->required();
    eval->add_option("config", config, "Config file")->required();
    auto* inspect = app.add_subcommand("inspect-counters", "Summarize the usage counters of a checkpoint");
    inspect->add_option("checkpoint", checkpoint, "Checkpoint directory")->required();
    inspect->add_flag("--csv", raw, "Print the raw counter table");
    auto* gen = app.add_subcommand("gen-synthetic", "Write the synthetic dataset as embedding files");
    gen->add_option("config", config, "Config file")->required();
    gen->add_option("out", out, "Output .sgdsemb path (test split goes next to it)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    if (!quiet) std::fprintf(stderr, "kernels: %s\n", sgds::kernels::active().name);
    try {
        if (*run) return cmd_run(config, quiet);
        if (*ablate) return cmd_ablate(config, quiet);
        if (*eval) return cmd_eval(checkpoint, config);
        if (*inspect) return cmd_inspect(checkpoint, raw);
        if (*gen) return cmd_gen_synthetic(config, out);
    } catch (const sgds::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfigError;
    } catch (const sgds::FormatError& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return kConfigError;
    } catch (const sgds::NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return kNumericError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kConfigError;
    }
    return kOk;
}
