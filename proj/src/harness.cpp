#include "sgds/harness.hpp"

#include "sgds/binary_io.hpp"
#include "sgds/checkpoint.hpp"
#include "sgds/errors.hpp"
#include "sgds/kernels.hpp"
#include "sgds/svg_chart.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

namespace sgds {

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string join_layers(const std::vector<std::size_t>& layers, char sep) {
    std::string out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (i) out.push_back(sep);
        out += std::to_string(layers[i]);
    }
    return out;
}

double row_mean(const std::vector<double>& row) {
    double s = 0.0;
    for (double v : row) s += v;
    return s / static_cast<double>(row.size());
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
    ExperimentData d;
    if (cfg.dataset == DatasetKind::Synthetic) {
        SyntheticData s = generate_synthetic_sets(cfg.synthetic);
        d.train = std::move(s.train);
        d.test = std::move(s.test);
    } else {
        d.train = load_embeddings(cfg.train_path);
        d.test = load_embeddings(cfg.test_path);
        if (d.train.dim != d.test.dim) throw ConfigError("dataset.test_path", "train and test dimensions differ");
        if (d.train.num_classes != d.test.num_classes)
            throw ConfigError("dataset.test_path", "train and test class counts differ");
    }
    return d;
}

TaskStream build_task_stream(const ExperimentConfig& cfg, const ExperimentData& data, std::uint64_t order_seed) {
    const std::size_t classes = data.train.num_classes;
    if (cfg.num_tasks > classes || classes % cfg.num_tasks != 0)
        throw ConfigError("tasks.count", std::to_string(classes) + " classes cannot be split into " +
                                             std::to_string(cfg.num_tasks) + " equal tasks");
    TaskStream stream = build_stream(data.train, data.test, split_classes(classes, cfg.num_tasks, order_seed));
    for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
        const TaskData& task = stream.tasks[t];
        for (ClassId c : task.classes) {
            const auto has = [c](const std::vector<Sample>& v) {
                return std::any_of(v.begin(), v.end(), [c](const Sample& s) { return s.label == c; });
            };
            if (!has(task.train) || !has(task.test))
                throw ConfigError("dataset.kind", "class " + std::to_string(c) + " has no train or test samples");
        }
    }
    return stream;
}

ModelConfig resolve_model(const ExperimentConfig& cfg, const TaskStream& stream) {
    ModelConfig m = cfg.model;
    if (cfg.model_dim != 0 && cfg.model_dim != stream.input_dim)
        throw ConfigError("model.dim", "model.dim " + std::to_string(cfg.model_dim) + " does not match data dimension " +
                                           std::to_string(stream.input_dim));
    m.width = stream.input_dim;
    if (2 * m.rank > m.width) throw ConfigError("adapter.rank", "rank must not exceed half the model dimension");
    return m;
}

std::vector<StrategyCount> RunReport::strategy_counts() const {
    std::vector<StrategyCount> out;
    for (const TaskLog& log : logs) {
        StrategyCount c;
        for (const SemanticProfile& p : log.profiles)
            (p.strategy == Strategy::KnowledgeReuse ? c.knowledge_reuse : c.new_allocation) += 1;
        out.push_back(c);
    }
    return out;
}

RunReport execute_run(const TaskStream& stream, const ModelConfig& model, const TrainConfig& train,
                      const ProgressFn& progress) {
    const auto t0 = std::chrono::steady_clock::now();
    RunReport r;
    r.seed = train.seed;
    r.state = make_initial_state(model, train);
    for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
        try {
            ContinualState next = r.state;
            TaskLog log = train_task(next, stream.tasks[t], train);
            std::vector<double> row = evaluate_row(next, stream.tasks, t);
            r.state = std::move(next);
            r.logs.push_back(std::move(log));
            r.matrix.rows.push_back(std::move(row));
        } catch (const NumericError& e) {
            r.failed = true;
            r.failure = "task " + std::to_string(t + 1) + ": " + e.what();
            break;
        }
        if (progress) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "seed %llu task %zu/%zu avg acc %.2f",
                          static_cast<unsigned long long>(train.seed), t + 1, stream.tasks.size(),
                          row_mean(r.matrix.rows.back()));
            progress(buf);
        }
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

std::string results_csv(const AccuracyMatrix& a, std::size_t num_tasks) {
    std::ostringstream o;
    o << "task_index";
    for (std::size_t j = 1; j <= num_tasks; ++j) o << ",acc_task_" << j;
    o << ",avg_acc_so_far\n";
    for (std::size_t t = 0; t < a.rows.size(); ++t) {
        o << t + 1;
        for (std::size_t j = 0; j < num_tasks; ++j) {
            o << ',';
            if (j <= t) o << num(a.rows[t][j]);
        }
        o << ',' << num(row_mean(a.rows[t])) << '\n';
    }
    if (a.rows.size() == num_tasks && a.complete()) {
        const Summary s = summarize(a);
        const auto footer = [&](const char* label, double v) {
            o << label;
            for (std::size_t j = 0; j < num_tasks; ++j) o << ',';
            o << ',' << num(v) << '\n';
        };
        footer("A_bar", s.average_incremental);
        footer("A_T", s.final_average);
    }
    return o.str();
}

AccuracyMatrix parse_results_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("results.csv: missing header", 0);
    const std::size_t columns = split_csv_line(line).size();
    if (columns < 3) throw FormatError("results.csv: malformed header", 0);
    const std::size_t T = columns - 2;
    AccuracyMatrix a;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != columns) throw FormatError("results.csv: ragged row", 0);
        if (cells[0] == "A_bar" || cells[0] == "A_T") continue;
        const std::size_t t = a.rows.size();
        if (cells[0] != std::to_string(t + 1)) throw FormatError("results.csv: unexpected task index", 0);
        std::vector<double> row;
        for (std::size_t j = 0; j <= t && j < T; ++j) row.push_back(std::stod(cells[j + 1]));
        a.rows.push_back(std::move(row));
    }
    return a;
}

std::string strategy_csv(const std::vector<TaskLog>& logs) {
    std::ostringstream o;
    o << "task,class,S_old,S_new,strategy\n";
    for (const TaskLog& log : logs)
        for (const SemanticProfile& p : log.profiles)
            o << log.task_index << ',' << p.cls << ',' << num(p.s_old) << ',' << num(p.s_new) << ','
              << strategy_name(p.strategy) << '\n';
    return o.str();
}

std::string report_json(const ExperimentConfig& cfg, const RunReport& report, std::size_t num_tasks) {
    nlohmann::ordered_json j;
    j["seed"] = report.seed;
    j["status"] = report.failed ? "failed" : "ok";
    if (report.failed) j["failure"] = report.failure;
    j["kernels"] = kernels::active().name;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    for (const auto& [k, v] : cfg.entries) config[k] = v;
    j["config"] = config;
    j["accuracy_matrix"] = report.matrix.rows;
    if (report.complete(num_tasks)) {
        const Summary s = summarize(report.matrix);
        j["A_bar"] = s.average_incremental;
        j["A_T"] = s.final_average;
    }
    const auto counts = report.strategy_counts();
    nlohmann::ordered_json tasks = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < report.logs.size(); ++t) {
        const TaskLog& log = report.logs[t];
        nlohmann::ordered_json e;
        e["task"] = log.task_index;
        std::vector<ClassId> classes;
        for (const SemanticProfile& p : log.profiles) classes.push_back(p.cls);
        e["classes"] = classes;
        e["knowledge_reuse"] = counts[t].knowledge_reuse;
        e["new_subspace_allocation"] = counts[t].new_allocation;
        e["seconds"] = log.seconds;
        e["epoch_loss"] = log.epoch_loss;
        tasks.push_back(std::move(e));
    }
    j["tasks"] = tasks;
    j["seconds"] = report.seconds;
    return j.dump(2) + "\n";
}

void write_run_outputs(const std::filesystem::path& dir, const ExperimentConfig& cfg, const RunReport& report,
                       std::size_t num_tasks) {
    std::filesystem::create_directories(dir);
    io::write_text(dir / "results.csv", results_csv(report.matrix, num_tasks));
    io::write_text(dir / "strategy.csv", strategy_csv(report.logs));
    io::write_text(dir / "counters.csv", counters_to_csv(report.state.counters));
    io::write_text(dir / "report.json", report_json(cfg, report, num_tasks));
    if (cfg.write_svg && !report.matrix.rows.empty()) {
        ChartSeries s{"seed " + std::to_string(report.seed), {}};
        for (const auto& row : report.matrix.rows) s.values.push_back(row_mean(row));
        io::write_text(dir / "accuracy.svg", line_chart_svg({s}, "Average accuracy per task", "task", "accuracy (%)"));
    }
    if (cfg.write_checkpoint && !report.state.adapters.empty()) save_checkpoint(dir / "checkpoint", report.state);
    const auto marker = dir / "FAILED";
    if (report.failed) io::write_text(marker, report.failure + "\n");
    else std::filesystem::remove(marker);
}

SeedSummary summarize_seeds(const std::vector<RunReport>& runs) {
    SeedSummary s;
    for (const RunReport& r : runs) {
        if (!r.matrix.complete() || r.failed) continue;
        const Summary m = summarize(r.matrix);
        s.a_bar.push_back(m.average_incremental);
        s.a_last.push_back(m.final_average);
    }
    const auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
        mean = sd = 0.0;
        if (v.empty()) return;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        if (v.size() < 2) return;
        for (double x : v) sd += (x - mean) * (x - mean);
        sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
    };
    stats(s.a_bar, s.a_bar_mean, s.a_bar_std);
    stats(s.a_last, s.a_last_mean, s.a_last_std);
    return s;
}

bool ExperimentResult::any_failed() const {
    return std::any_of(runs.begin(), runs.end(), [](const RunReport& r) { return r.failed; });
}

bool AblationResult::any_failed() const {
    for (const auto& cell : runs)
        for (const RunReport& r : cell)
            if (r.failed) return true;
    return false;
}

void parallel_for(std::size_t jobs, std::size_t threads, const std::function<void(std::size_t)>& body) {
    if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
    threads = std::min(threads, jobs);
    if (threads <= 1) {
        for (std::size_t i = 0; i < jobs; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < jobs; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

namespace {

std::string summary_csv(const std::vector<RunReport>& runs, std::size_t num_tasks) {
    std::ostringstream o;
    o << "seed,A_bar,A_T,status\n";
    for (const RunReport& r : runs) {
        o << r.seed << ',';
        if (r.complete(num_tasks)) {
            const Summary s = summarize(r.matrix);
            o << num(s.average_incremental) << ',' << num(s.final_average) << ",ok\n";
        } else {
            o << ",,failed\n";
        }
    }
    const SeedSummary s = summarize_seeds(runs);
    o << "mean," << num(s.a_bar_mean) << ',' << num(s.a_last_mean) << ',' << s.a_bar.size() << "/" << runs.size()
      << '\n';
    o << "std," << num(s.a_bar_std) << ',' << num(s.a_last_std) << ",\n";
    return o.str();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const ProgressFn& progress) {
    const ExperimentData data = load_experiment_data(cfg);
    const std::vector<std::uint64_t> seeds = cfg.run_seeds();

    std::vector<TaskStream> streams;
    for (std::uint64_t seed : seeds) streams.push_back(build_task_stream(cfg, data, seed));
    const ModelConfig model = resolve_model(cfg, streams.front());

    ExperimentResult result;
    result.runs.resize(seeds.size());
    std::mutex progress_mutex;
    const ProgressFn locked = [&](const std::string& msg) {
        if (!progress) return;
        std::lock_guard lock(progress_mutex);
        progress(msg);
    };
    parallel_for(seeds.size(), cfg.threads, [&](std::size_t i) {
        TrainConfig train = cfg.train;
        train.seed = seeds[i];
        result.runs[i] = execute_run(streams[i], model, train, locked);
    });
    for (std::size_t i = 0; i < seeds.size(); ++i)
        write_run_outputs(cfg.out_dir / ("seed_" + std::to_string(seeds[i])), cfg, result.runs[i], cfg.num_tasks);
    io::write_text(cfg.out_dir / "summary.csv", summary_csv(result.runs, cfg.num_tasks));

    if (cfg.write_svg) {
        std::vector<ChartSeries> series;
        for (const RunReport& r : result.runs) {
            ChartSeries s{"seed " + std::to_string(r.seed), {}};
            for (const auto& row : r.matrix.rows) s.values.push_back(row_mean(row));
            series.push_back(std::move(s));
        }
        io::write_text(cfg.out_dir / "accuracy.svg",
                       line_chart_svg(series, "Average accuracy per task", "task", "accuracy (%)"));
    }
    return result;
}

std::vector<AblationCell> ablation_cells(const ExperimentConfig& cfg) {
    std::vector<AblationCell> cells;
    const auto cell = [&](std::string name, bool sgds, bool se, bool ac) {
        TrainConfig t = cfg.train;
        t.sgds_enabled = sgds;
        t.se_enabled = se;
        t.ac_enabled = ac;
        t.param_reg = ParamReg::Off;
        cells.push_back({std::move(name), t});
    };
    cell("no_sgds", false, false, false);
    cell("se_only", true, true, false);
    cell("ac_only", true, false, true);
    cell("full", true, true, true);
    if (cfg.ablate_param_reg) {
        for (ParamReg mode : {ParamReg::Up, ParamReg::Down, ParamReg::Both}) {
            TrainConfig t = cfg.train;
            t.sgds_enabled = false;
            t.param_reg = mode;
            cells.push_back({std::string("param_reg_") + param_reg_name(mode), t});
        }
    }
    for (const auto& layers : cfg.ablate_layer_sets) {
        TrainConfig t = cfg.train;
        t.sgds_enabled = t.se_enabled = t.ac_enabled = true;
        t.param_reg = ParamReg::Off;
        t.sparsifier.target_layers = layers;
        cells.push_back({"layers_" + join_layers(layers, '-'), t});
    }
    return cells;
}

AblationResult run_ablation(const ExperimentConfig& cfg, const ProgressFn& progress) {
    const ExperimentData data = load_experiment_data(cfg);
    const std::vector<std::uint64_t> seeds = cfg.run_seeds();
    std::vector<TaskStream> streams;
    for (std::uint64_t seed : seeds) streams.push_back(build_task_stream(cfg, data, seed));
    const ModelConfig model = resolve_model(cfg, streams.front());

    AblationResult result;
    result.cells = ablation_cells(cfg);
    result.runs.assign(result.cells.size(), std::vector<RunReport>(seeds.size()));

    std::mutex progress_mutex;
    parallel_for(result.cells.size() * seeds.size(), cfg.threads, [&](std::size_t job) {
        const std::size_t c = job / seeds.size(), s = job % seeds.size();
        TrainConfig train = result.cells[c].train;
        train.seed = seeds[s];
        result.runs[c][s] = execute_run(streams[s], model, train);
        if (progress) {
            std::lock_guard lock(progress_mutex);
            progress(result.cells[c].name + " seed " + std::to_string(seeds[s]) +
                     (result.runs[c][s].failed ? " FAILED" : " done"));
        }
    });

    std::ostringstream table, runs;
    table << "cell,sgds,se,ac,param_reg,target_layers,runs,A_bar_mean,A_bar_std,A_T_mean,A_T_std\n";
    runs << "cell,seed,A_bar,A_T,knowledge_reuse,new_subspace_allocation,status\n";
    for (std::size_t c = 0; c < result.cells.size(); ++c) {
        const AblationCell& cell = result.cells[c];
        const TrainConfig& t = cell.train;
        const auto& cell_runs = result.runs[c];
        const SeedSummary s = summarize_seeds(cell_runs);
        const auto targets = resolve_target_layers(t.sparsifier.target_layers, model.num_blocks);
        table << cell.name << ',' << t.sgds_enabled << ',' << (t.sgds_enabled && t.se_enabled) << ','
              << (t.sgds_enabled && t.ac_enabled) << ',' << param_reg_name(t.param_reg) << ','
              << join_layers(targets, ' ') << ',' << s.a_bar.size() << ',' << num(s.a_bar_mean) << ','
              << num(s.a_bar_std) << ',' << num(s.a_last_mean) << ',' << num(s.a_last_std) << '\n';
        for (const RunReport& r : cell_runs) {
            std::size_t reuse = 0, alloc = 0;
            for (const StrategyCount& sc : r.strategy_counts()) {
                reuse += sc.knowledge_reuse;
                alloc += sc.new_allocation;
            }
            runs << cell.name << ',' << r.seed << ',';
            if (r.complete(cfg.num_tasks)) {
                const Summary m = summarize(r.matrix);
                runs << num(m.average_incremental) << ',' << num(m.final_average);
            } else {
                runs << ',';
            }
            runs << ',' << reuse << ',' << alloc << ',' << (r.failed ? "failed" : "ok") << '\n';
        }
        ExperimentConfig cell_cfg = cfg;
        cell_cfg.train = t;
        cell_cfg.entries["sgds.enabled"] = t.sgds_enabled ? "true" : "false";
        cell_cfg.entries["sgds.se"] = t.se_enabled ? "true" : "false";
        cell_cfg.entries["sgds.ac"] = t.ac_enabled ? "true" : "false";
        cell_cfg.entries["baseline.param_reg.mode"] = param_reg_name(t.param_reg);
        if (!t.sparsifier.target_layers.empty())
            cell_cfg.entries["sgds.target_layers"] = join_layers(t.sparsifier.target_layers, ',');
        for (const RunReport& r : cell_runs)
            write_run_outputs(cfg.out_dir / "ablation" / cell.name / ("seed_" + std::to_string(r.seed)), cell_cfg, r,
                              cfg.num_tasks);
    }
    std::filesystem::create_directories(cfg.out_dir);
    io::write_text(cfg.out_dir / "ablation.csv", table.str());
    io::write_text(cfg.out_dir / "ablation_runs.csv", runs.str());
    return result;
}

}  // namespace sgds
