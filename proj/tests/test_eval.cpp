#include <doctest.h>

#include "sgds/binary_io.hpp"
#include "sgds/checkpoint.hpp"
#include "sgds/config.hpp"
#include "sgds/errors.hpp"
#include "sgds/harness.hpp"
#include "sgds/inference.hpp"
#include "sgds/metrics.hpp"
#include "support.hpp"

#include <cmath>
#include <filesystem>

using namespace sgds;

namespace {

AccuracyMatrix matrix_of(std::vector<std::vector<double>> rows) { return AccuracyMatrix{std::move(rows)}; }

ExperimentConfig tiny_config(const std::filesystem::path& out) {
    return parse_config("dataset.groups = 2\n"
                        "dataset.classes_per_group = 2\n"
                        "dataset.dim = 16\n"
                        "dataset.train_per_class = 12\n"
                        "dataset.test_per_class = 6\n"
                        "tasks.count = 2\n"
                        "model.layers = 2\n"
                        "adapter.rank = 4\n"
                        "train.epochs = 2\n"
                        "train.batch = 8\n"
                        "train.align_samples = 16\n"
                        "out.dir = " + out.string() + "\n");
}

}  // namespace

TEST_SUITE("summary metrics") {
    TEST_CASE("hand values") {
        Summary s = summarize(matrix_of({{90}}));
        CHECK(s.average_incremental == 90.0);
        CHECK(s.final_average == 90.0);
        s = summarize(matrix_of({{80}, {70, 90}}));
        CHECK(s.average_incremental == 80.0);
        CHECK(s.final_average == 80.0);
    }

    TEST_CASE("constant matrices") {
        for (double v : {0.0, 12.5, 63.0, 100.0}) {
            const Summary s = summarize(matrix_of({{v}, {v, v}, {v, v, v}}));
            CHECK(s.average_incremental == doctest::Approx(v).epsilon(1e-15));
            CHECK(s.final_average == doctest::Approx(v).epsilon(1e-15));
        }
    }

    TEST_CASE("incomplete matrix") {
        CHECK_THROWS_AS(summarize(matrix_of({{80}, {70}})), ContractViolation);
        CHECK_THROWS_AS(summarize(matrix_of({})), ContractViolation);
    }

    TEST_CASE("seed summary uses the sample deviation") {
        std::vector<RunReport> runs(2);
        runs[0].matrix = matrix_of({{60}});
        runs[1].matrix = matrix_of({{80}});
        const SeedSummary s = summarize_seeds(runs);
        CHECK(s.a_bar_mean == 70.0);
        CHECK(s.a_bar_std == doctest::Approx(std::sqrt(200.0)));
    }
}

TEST_SUITE("evaluation") {
    std::vector<Sample> balanced(std::size_t classes, std::size_t per) {
        std::vector<Sample> out;
        for (std::size_t c = 0; c < classes; ++c)
            for (std::size_t i = 0; i < per; ++i) out.push_back({{double(c)}, static_cast<ClassId>(c)});
        return out;
    }

    TEST_CASE("perfect and constant predictors") {
        const auto test = balanced(5, 4);
        const Predictor perfect = [](std::span<const double> x) { return static_cast<ClassId>(x[0]); };
        const Predictor zero = [](std::span<const double>) { return ClassId{0}; };
        CHECK(accuracy(perfect, test) == 100.0);
        CHECK(accuracy(zero, test) == 20.0);
        CHECK_THROWS_AS(accuracy(zero, std::vector<Sample>{}), ContractViolation);
    }

    TEST_CASE("lower triangular by construction") {
        std::vector<TaskData> tasks(3);
        for (std::size_t t = 0; t < 3; ++t) tasks[t].test = balanced(2, 2);
        const Predictor perfect = [](std::span<const double> x) { return static_cast<ClassId>(x[0]); };
        const std::vector<Predictor> snaps(3, perfect);
        const AccuracyMatrix a = evaluate(snaps, tasks);
        CHECK(a.complete());
        for (std::size_t t = 0; t < 3; ++t) {
            CHECK(a.rows[t].size() == t + 1);
            for (double v : a.rows[t]) CHECK(v == 100.0);
        }
    }
}

TEST_SUITE("inference") {
    TEST_CASE("single adapter is selected") {
        std::mt19937_64 g(1);
        const ContinualState s = testing::random_state(g, 1, 4);
        CHECK(select_adapter(testing::random_vector(g, 8), s).index == 0);
    }

    TEST_CASE("selection matches exhaustive entropy") {
        std::mt19937_64 g(2);
        for (int trial = 0; trial < 100; ++trial) {
            const ContinualState s = testing::random_state(g, 3, 4, 8, 3, trial % 2 == 1);
            const Vector x = testing::random_vector(g, 8);
            std::size_t best = 0;
            long double best_h = 1e300L;
            for (std::size_t i = 0; i < s.adapters.size(); ++i) {
                const long double h = testing::oracle_entropy(testing::oracle_logits(x, s, s.adapters[i]));
                if (h < best_h) {
                    best_h = h;
                    best = i;
                }
            }
            const AdapterSelection sel = select_adapter(x, s);
            CHECK(sel.index == best);
            for (double h : sel.entropies) CHECK(sel.entropies[sel.index] <= h);
        }
    }

    TEST_CASE("prediction matches a term by term recomputation") {
        std::mt19937_64 g(3);
        for (int trial = 0; trial < 100; ++trial) {
            const ContinualState s = testing::random_state(g, 1 + trial % 3, 5, 8, 3, trial % 2 == 1);
            const Vector x = testing::random_vector(g, 8);
            const std::size_t sel = select_adapter(x, s).index;
            const Vector a = testing::oracle_logits(x, s, s.adapters[sel]);
            const Vector u = testing::oracle_logits(x, s, s.universal);
            std::size_t best = 0;
            for (std::size_t c = 1; c < a.size(); ++c)
                if (a[c] + u[c] > a[best] + u[best]) best = c;
            CHECK(predict(x, s) == s.seen[best]);
        }
    }

    TEST_CASE("one adapter ensemble equals the single adapter argmax") {
        std::mt19937_64 g(4);
        const ContinualState s = testing::random_state(g, 1, 6);
        for (int i = 0; i < 20; ++i) {
            const Vector x = testing::random_vector(g, 8);
            const Vector l = adapter_logits(x, s, s.adapters[0]);
            const auto best = static_cast<std::size_t>(std::max_element(l.begin(), l.end()) - l.begin());
            CHECK(predict(x, s) == s.seen[best]);
        }
    }

    TEST_CASE("ensemble argmax is scale invariant and breaks ties low") {
        std::mt19937_64 g(5);
        std::vector<ClassId> classes{4, 1, 7, 2};
        for (int i = 0; i < 50; ++i) {
            const Vector a = testing::random_vector(g, 4), b = testing::random_vector(g, 4);
            Vector a2 = a, b2 = b;
            for (double& v : a2) v *= 3.5;
            for (double& v : b2) v *= 3.5;
            CHECK(ensemble_argmax(a, b, classes) == ensemble_argmax(a2, b2, classes));
        }
        CHECK(ensemble_argmax(Vector{1, 1, 0, 1}, Vector{0, 0, 0, 0}, classes) == 1);
        CHECK(ensemble_argmax(Vector{0, 5, 0, 0}, Vector{0, 5, 0, 0}, classes) == 1);
    }

    TEST_CASE("entropy extremes") {
        CHECK(shannon_entropy(Vector{1, 0, 0}) == 0.0);
        CHECK(shannon_entropy(Vector{0.25, 0.25, 0.25, 0.25}) == doctest::Approx(std::log(4.0)));
    }
}

TEST_SUITE("config") {
    TEST_CASE("defaults") {
        const ExperimentConfig c = parse_config("");
        CHECK(c.num_tasks == 10);
        CHECK(c.order_seed == 1993);
        CHECK(c.train.sparsifier.k == 0.6);
        CHECK(c.train.sparsifier.beta == 0.5);
        CHECK(c.train.sparsifier.gamma == 1.0);
        CHECK(c.model.rank == 16);
        CHECK(c.train.epochs == 20);
        CHECK(c.train.batch == 48);
        CHECK(c.train.lr == 0.01);
        CHECK(c.run_seeds() == std::vector<std::uint64_t>{1993});
    }

    TEST_CASE("parsing, comments and seed lists") {
        const ExperimentConfig c = parse_config("# comment\n"
                                                "sgds.k = 0.5   # trailing\n"
                                                "run.seeds = 1993,1994, 1995\n"
                                                "sgds.target_layers = 1,3\n"
                                                "sgds.se = off\n"
                                                "baseline.param_reg.mode = both\n");
        CHECK(c.train.sparsifier.k == 0.5);
        CHECK(c.seeds == std::vector<std::uint64_t>{1993, 1994, 1995});
        CHECK(c.train.sparsifier.target_layers == std::vector<std::size_t>{1, 3});
        CHECK_FALSE(c.train.se_enabled);
        CHECK(c.train.param_reg == ParamReg::Both);
        CHECK(c.entries.at("sgds.k") == "0.5");
    }

    TEST_CASE("environment overrides win") {
        CHECK(env_name_for("train.epochs") == "SGDS_CFG_TRAIN_EPOCHS");
        CHECK(env_name_for("baseline.param_reg.mode") == "SGDS_CFG_BASELINE_PARAM_REG_MODE");
        const EnvLookup env = [](const std::string& name) -> std::optional<std::string> {
            if (name == "SGDS_CFG_TRAIN_EPOCHS") return "6";
            return std::nullopt;
        };
        CHECK(parse_config("train.epochs = 4\n", env).train.epochs == 6);
    }

    TEST_CASE("errors name the key") {
        auto key_of = [](const std::string& text) {
            try {
                parse_config(text);
            } catch (const ConfigError& e) {
                return e.key();
            }
            return std::string("<none>");
        };
        CHECK(key_of("train.epoch = 3\n") == "train.epoch");
        CHECK(key_of("sgds.k = 1.5\n") == "sgds.k");
        CHECK(key_of("sgds.k = abc\n") == "sgds.k");
        CHECK(key_of("sgds.se = maybe\n") == "sgds.se");
        CHECK(key_of("train.epochs = 1\n") == "train.epochs");
        CHECK(key_of("sgds.target_layers = 4\n") == "sgds.target_layers");
        CHECK(key_of("dataset.kind = embeddings\n") == "dataset.train_path");
        CHECK(key_of("no equals sign\n") != "<none>");
    }

    TEST_CASE("every documented key parses with its default") {
        const ExperimentConfig d = parse_config("");
        std::string text;
        for (const std::string& k : config_keys()) text += k + " = " + d.entries.at(k) + "\n";
        CHECK(parse_config(text).entries == d.entries);
    }
}

TEST_SUITE("reports") {
    TEST_CASE("results csv layout and recomputation") {
        const AccuracyMatrix a = matrix_of({{80}, {70, 90}, {60, 65.5, 99}});
        const std::string csv = results_csv(a, 3);
        CHECK(csv.rfind("task_index,acc_task_1,acc_task_2,acc_task_3,avg_acc_so_far\n", 0) == 0);
        CHECK(csv.find("\n1,80,,,80\n") != std::string::npos);
        const AccuracyMatrix back = parse_results_csv(csv);
        CHECK(back.rows == a.rows);
        const Summary s = summarize(back), t = summarize(a);
        CHECK(std::fabs(s.average_incremental - t.average_incremental) < 1e-9);
        CHECK(csv.find("A_bar,,,,") != std::string::npos);
        CHECK(csv.find("A_T,,,,") != std::string::npos);
        const std::string partial = results_csv(matrix_of({{80}}), 3);
        CHECK(partial.find("A_bar") == std::string::npos);
    }

    TEST_CASE("strategy log accounting") {
        std::vector<TaskLog> logs(2);
        logs[0].task_index = 1;
        logs[1].task_index = 2;
        SemanticProfile p;
        p.cls = 3;
        p.s_old = 0.25;
        p.s_new = 0.75;
        logs[0].profiles = {p};
        p.cls = 8;
        p.s_old = 0.75;
        p.s_new = 0.25;
        p.strategy = Strategy::KnowledgeReuse;
        logs[1].profiles = {p, p};
        const std::string csv = strategy_csv(logs);
        CHECK(csv.rfind("task,class,S_old,S_new,strategy\n", 0) == 0);
        RunReport r;
        r.logs = logs;
        const auto counts = r.strategy_counts();
        CHECK(counts[0].new_allocation == 1);
        CHECK(counts[1].knowledge_reuse == 2);
    }

    TEST_CASE("ablation grid") {
        ExperimentConfig c = parse_config("");
        auto cells = ablation_cells(c);
        REQUIRE(cells.size() == 4);
        CHECK(cells[0].name == "no_sgds");
        CHECK_FALSE(cells[0].train.sgds_enabled);
        CHECK(cells[3].name == "full");
        CHECK((cells[1].train.se_enabled && !cells[1].train.ac_enabled));
        CHECK((!cells[2].train.se_enabled && cells[2].train.ac_enabled));
        c = parse_config("ablation.param_reg = true\nablation.layer_sets = 3;2,3\n");
        cells = ablation_cells(c);
        CHECK(cells.size() == 9);
        CHECK(cells[4].train.param_reg == ParamReg::Up);
        CHECK(cells[5].train.param_reg == ParamReg::Down);
        CHECK(cells[6].train.param_reg == ParamReg::Both);
        CHECK(cells[8].train.sparsifier.target_layers == std::vector<std::size_t>{2, 3});
    }
}

TEST_SUITE("end to end") {
    TEST_CASE("tiny experiment, outputs and checkpoint round trip") {
        const auto out = std::filesystem::temp_directory_path() / "sgds_eval_e2e";
        std::filesystem::remove_all(out);
        const ExperimentConfig cfg = tiny_config(out);
        const ExperimentResult res = run_experiment(cfg);
        REQUIRE(res.runs.size() == 1);
        const RunReport& r = res.runs[0];
        CHECK(r.complete(2));
        const auto dir = out / "seed_1993";
        for (const char* f : {"results.csv", "strategy.csv", "counters.csv", "report.json"})
            CHECK(std::filesystem::exists(dir / f));
        CHECK_FALSE(std::filesystem::exists(dir / "FAILED"));
        CHECK(std::filesystem::exists(out / "summary.csv"));

        const AccuracyMatrix back = parse_results_csv(io::read_text(dir / "results.csv"));
        const Summary a = summarize(back), b = summarize(r.matrix);
        CHECK(std::fabs(a.average_incremental - b.average_incremental) < 1e-9);
        CHECK(std::fabs(a.final_average - b.final_average) < 1e-9);

        const ContinualState loaded = load_checkpoint(dir / "checkpoint");
        CHECK(loaded == r.state);
        const TaskStream stream = build_task_stream(cfg, load_experiment_data(cfg), 1993);
        CHECK(evaluate_row(loaded, stream.tasks, 1) == r.matrix.rows[1]);
        for (const StrategyCount& c : r.strategy_counts()) CHECK(c.knowledge_reuse + c.new_allocation == 2);
        std::filesystem::remove_all(out);
    }

    TEST_CASE("task count must divide the classes") {
        ExperimentConfig cfg = parse_config("tasks.count = 3\n");
        CHECK_THROWS_AS(build_task_stream(cfg, load_experiment_data(cfg), 1), ConfigError);
    }

    TEST_CASE("parallel_for covers every job and rethrows") {
        std::vector<int> hit(37, 0);
        parallel_for(hit.size(), 3, [&](std::size_t i) { hit[i] += 1; });
        for (int h : hit) CHECK(h == 1);
        CHECK_THROWS_AS(parallel_for(5, 2, [](std::size_t i) {
                            if (i == 3) throw NumericError("boom", 0);
                        }),
                        NumericError);
    }
}
