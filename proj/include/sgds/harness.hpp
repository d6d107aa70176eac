#pragma once

// Experiment runs: stream construction, sequential training with per-task
// evaluation, ablation grids, and the files each run leaves on disk.

#include "sgds/config.hpp"
#include "sgds/metrics.hpp"
#include "sgds/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace sgds {

// Loaded or generated train/test sets, shared by every seed of an experiment.
struct ExperimentData {
    LabeledSet train;
    LabeledSet test;
};

ExperimentData load_experiment_data(const ExperimentConfig& cfg);

// Class order follows `order_seed`.
TaskStream build_task_stream(const ExperimentConfig& cfg, const ExperimentData& data, std::uint64_t order_seed);

// Model shape for a stream: width follows the data unless model.dim pins it.
ModelConfig resolve_model(const ExperimentConfig& cfg, const TaskStream& stream);

struct StrategyCount {
    std::size_t knowledge_reuse = 0;
    std::size_t new_allocation = 0;
};

struct RunReport {
    std::uint64_t seed = 0;
    AccuracyMatrix matrix;       // rows for completed tasks
    std::vector<TaskLog> logs;
    ContinualState state;        // state after the last completed task
    double seconds = 0.0;
    bool failed = false;
    std::string failure;         // NumericError message when failed

    bool complete(std::size_t num_tasks) const { return !failed && matrix.num_tasks() == num_tasks; }
    std::vector<StrategyCount> strategy_counts() const;
};

using ProgressFn = std::function<void(const std::string&)>;

// Trains every task in order and evaluates after each. Numeric failures are
// caught and reported in the result; contract violations propagate.
RunReport execute_run(const TaskStream& stream, const ModelConfig& model, const TrainConfig& train,
                      const ProgressFn& progress = {});

// results.csv: task_index,acc_task_1..acc_task_T,avg_acc_so_far, blanks above
// the diagonal, then footer rows `A_bar` and `A_T` carrying the summary in the
// last column. Footer rows are omitted for an incomplete matrix.
std::string results_csv(const AccuracyMatrix& a, std::size_t num_tasks);
AccuracyMatrix parse_results_csv(const std::string& text);

std::string strategy_csv(const std::vector<TaskLog>& logs);
std::string report_json(const ExperimentConfig& cfg, const RunReport& report, std::size_t num_tasks);

// Writes results.csv, strategy.csv, counters.csv, report.json, optionally
// accuracy.svg and checkpoint/, and a FAILED marker for failed runs.
void write_run_outputs(const std::filesystem::path& dir, const ExperimentConfig& cfg, const RunReport& report,
                       std::size_t num_tasks);

struct SeedSummary {
    std::vector<double> a_bar;
    std::vector<double> a_last;
    double a_bar_mean = 0.0, a_bar_std = 0.0;
    double a_last_mean = 0.0, a_last_std = 0.0;
};

// Sample standard deviation (n - 1); 0 for a single run.
SeedSummary summarize_seeds(const std::vector<RunReport>& runs);

struct ExperimentResult {
    std::vector<RunReport> runs;  // one per seed
    bool any_failed() const;
};

// Runs every seed into <out>/seed_<s>/ and writes <out>/summary.csv.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const ProgressFn& progress = {});

struct AblationCell {
    std::string name;
    TrainConfig train;
};

// no_sgds, se_only, ac_only, full; then param_reg_{up,down,both} and
// layers_<i-j-k> rows when enabled in the config.
std::vector<AblationCell> ablation_cells(const ExperimentConfig& cfg);

struct AblationResult {
    std::vector<AblationCell> cells;
    std::vector<std::vector<RunReport>> runs;  // [cell][seed]
    bool any_failed() const;
};

// Same streams and seeds for every cell. Runs in parallel on cfg.threads
// workers; results do not depend on the worker count.
AblationResult run_ablation(const ExperimentConfig& cfg, const ProgressFn& progress = {});

// Runs `jobs` on up to `threads` workers (0: hardware concurrency).
void parallel_for(std::size_t jobs, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace sgds
