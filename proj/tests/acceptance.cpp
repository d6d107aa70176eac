// Acceptance checks 1-9. One PASS/FAIL line per criterion on stdout.
// Usage: sgds_acceptance [--allow-fail N]... [--work DIR]
// Exit status is 1 when a criterion fails that was not listed with --allow-fail.

#include "sgds/binary_io.hpp"
#include "sgds/config.hpp"
#include "sgds/data.hpp"
#include "sgds/harness.hpp"
#include "sgds/inference.hpp"
#include "sgds/metrics.hpp"
#include "support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

using namespace sgds;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

ActivationCounters random_counters(std::mt19937_64& g, std::size_t n, std::size_t classes,
                                   std::vector<std::vector<std::uint64_t>>& rows) {
    std::uniform_int_distribution<std::uint64_t> cnt(0, 1000);
    std::bernoulli_distribution zero_row(0.1), zero_cell(0.3);
    ActivationCounters c(std::vector<std::size_t>{0}, n);
    rows.assign(classes, std::vector<std::uint64_t>(n, 0));
    for (std::size_t y = 0; y < classes; ++y) {
        const bool empty = zero_row(g);
        for (auto& v : rows[y]) v = empty || zero_cell(g) ? 0 : cnt(g);
        c.add_class(static_cast<ClassId>(y));
        c.set_counts(static_cast<ClassId>(y), 0, rows[y]);
    }
    return c;
}

Outcome criterion1() {
    const auto t0 = Clock::now();
    std::mt19937_64 g(101);
    std::uniform_real_distribution<double> uni(0.01, 4.0);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + g() % 64, classes = 1 + g() % 6;
        std::vector<std::vector<std::uint64_t>> rows;
        const ActivationCounters c = random_counters(g, n, classes, rows);
        std::vector<std::uint64_t> global(n, 0);
        for (const auto& r : rows)
            for (std::size_t j = 0; j < n; ++j) global[j] += r[j];
        const double beta = uni(g), gamma = uni(g);
        std::vector<OldClassWeight> w;
        std::vector<long double> wl;
        double total = 0;
        for (std::size_t y = 0; y < classes; ++y) {
            w.push_back({static_cast<ClassId>(y), uni(g)});
            total += w.back().p;
        }
        // Old classes hold a share of at most 1, as in a softmax that also covers new classes.
        const double share = std::uniform_real_distribution<double>(0.0, 1.0)(g);
        for (auto& x : w) {
            x.p *= share / total;
            wl.push_back(x.p);
        }
        const ClassId cc = static_cast<ClassId>(g() % classes);
        const auto pa = allocation_probability(c, 0, beta);
        const auto pr = reuse_probability(c, w, 0);
        const auto pc = compaction_probability(c, cc, 0, gamma);
        const auto oa = testing::oracle_allocation(global, beta);
        const auto orr = testing::oracle_reuse(rows, wl);
        const auto oc = testing::oracle_compaction(rows[cc], gamma);
        for (std::size_t j = 0; j < n; ++j) {
            worst = std::max(worst, static_cast<double>(std::fabs(pa[j] - oa[j])));
            worst = std::max(worst, static_cast<double>(std::fabs(pr[j] - orr[j])));
            worst = std::max(worst, static_cast<double>(std::fabs(pc[j] - oc[j])));
        }
    }
    // Tabulated values.
    ActivationCounters a(std::vector<std::size_t>{0}, 3);
    a.add_class(0);
    a.set_counts(0, 0, std::vector<std::uint64_t>{4, 2, 0});
    ActivationCounters r(std::vector<std::size_t>{0}, 2);
    r.add_class(0);
    r.add_class(1);
    r.set_counts(0, 0, std::vector<std::uint64_t>{5, 0});
    r.set_counts(1, 0, std::vector<std::uint64_t>{0, 5});
    ActivationCounters k(std::vector<std::size_t>{0}, 3);
    k.add_class(0);
    k.set_counts(0, 0, std::vector<std::uint64_t>{3, 0, 1});
    const std::vector<OldClassWeight> half{{0, 0.5}, {1, 0.5}};
    const bool table = std::fabs(allocation_probability(a, 0, 0.5)[0] - 0.606531) < 5e-7 &&
                       std::fabs(reuse_probability(r, half, 0)[0] - 0.393469) < 5e-7 &&
                       std::fabs(compaction_probability(k, 0, 0, 1.0)[0] - 0.632121) < 5e-7;
    const double secs = seconds_since(t0);
    return {worst < 1e-12 && table && secs < 1.0,
            fmt("max abs error %.3g over 1000 configurations, ", worst) +
                (table ? "tabulated values ok" : "tabulated values WRONG") +
                fmt(", %.3f s (limit 1 s)", secs)};
}

Outcome criterion2() {
    const auto t0 = Clock::now();
    std::mt19937_64 g(202);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::uniform_int_distribution<int> small(-3, 3);
    std::size_t bound_viol = 0, count_viol = 0, oracle_viol = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t n = 1 + g() % 96;
        Vector x(n), p(n);
        const int style = trial % 4;  // ties, zeros, saturated probabilities, generic
        for (std::size_t j = 0; j < n; ++j) {
            x[j] = style == 0 ? small(g) : testing::random_vector(g, 1)[0];
            if (style == 1 && uni(g) < 0.3) x[j] = 0.0;
            p[j] = style == 2 ? (uni(g) < 0.5 ? 0.0 : 1.0) : uni(g);
        }
        const double k = std::min(1.0, std::max(uni(g), 1.0 / n + 1e-9));
        const std::uint64_t key = g();
        CounterRng rng(key);
        const SparsifyResult res = sparsify_and_record(x, p, k, rng, nullptr, 0, 0, false);
        const testing::OracleSparse o = testing::oracle_sparsify(x, p, k, key);
        const std::size_t keep = static_cast<std::size_t>(std::floor(static_cast<long double>(k) * n + 1e-9L));
        std::size_t nz = 0;
        for (double v : res.output) nz += v != 0.0;
        if (nz > keep) ++bound_viol;
        if (nz != std::min(keep, o.nonzero_after_mask) || res.support.size() != nz) ++count_viol;
        if (res.output != o.output || res.support != o.support) ++oracle_viol;
    }
    const double secs = seconds_since(t0);
    const bool ok = bound_viol == 0 && count_viol == 0 && oracle_viol == 0 && secs < 5.0;
    return {ok, fmt("10000 instances: %.0f bound, %.0f count, %.0f oracle mismatches, ", double(bound_viol),
                    double(count_viol), double(oracle_viol)) +
                    fmt("%.3f s (limit 5 s)", secs)};
}

Outcome criterion3() {
    std::mt19937_64 g(303);
    const std::vector<std::size_t> layers{0, 2, 3};
    const std::size_t n = 24;
    ActivationCounters ctr(layers, n);
    std::size_t classes = 0;
    ActivationCounters prev = ctr;
    std::size_t decreases = 0, inconsistent = 0, snapshots = 0;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto check = [&] {
        ++snapshots;
        if (!ctr.consistent()) ++inconsistent;
        for (std::size_t l : layers) {
            for (std::size_t j = 0; j < n; ++j)
                if (ctr.global(l)[j] < prev.global(l)[j]) ++decreases;
            for (ClassId c : prev.classes())
                for (std::size_t j = 0; j < n; ++j)
                    if (ctr.per_class(c, l)[j] < prev.per_class(c, l)[j]) ++decreases;
        }
        prev = ctr;
    };
    for (int step = 0; step < 10000; ++step) {
        if (step % 1000 == 0) {  // classes arrive over time as in a task stream
            for (int i = 0; i < 2; ++i) ctr.add_class(static_cast<ClassId>(classes++));
        }
        const ClassId c = static_cast<ClassId>(g() % classes);
        Vector x = testing::random_vector(g, n);
        Vector p(n);
        for (double& v : p) v = uni(g);
        const double k = 0.1 + 0.9 * uni(g);
        CounterRng rng(g());
        sparsify_and_record(x, p, k, rng, &ctr, c, layers[g() % layers.size()], true);
        if (step % 50 == 49) check();
    }
    check();
    return {inconsistent == 0 && decreases == 0,
            fmt("10000 recorded calls, %.0f snapshots, %.0f inconsistent, %.0f decreasing entries", double(snapshots),
                double(inconsistent), double(decreases))};
}

Outcome criterion4() {
    std::mt19937_64 g(404);
    double worst = 0.0;
    std::size_t masked = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t d = 2 + g() % 15;
        const std::size_t r = 1 + g() % std::min<std::size_t>(4, d / 2);
        const bool with_mask = trial % 2 == 0;
        testing::GradGraph gg = testing::build_grad_graph(g, d, r, with_mask, trial % 3 == 0);
        masked += gg.masks > 0;
        worst = std::max(worst, testing::max_gradient_error(gg));
    }
    return {worst < 1e-4, fmt("50 graphs (%.0f with masks), max relative error %.3g (limit 1e-4)", double(masked), worst)};
}

Outcome criterion5() {
    std::mt19937_64 g(505);
    std::size_t merge_bad = 0, select_bad = 0, predict_bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t blocks = 1 + g() % 3, d = 2 + g() % 7, r = 1 + g() % (d / 2);
        std::vector<Adapter> set;
        std::vector<Vector> flats;
        const std::size_t m = 1 + g() % 5;
        for (std::size_t i = 0; i < m; ++i) {
            Adapter a = make_adapter(1, blocks, d, r, testing::all_blocks(blocks), g());
            Vector v = testing::random_vector(g, a.num_parameters());
            if (i > 0 && trial % 5 == 0)  // force exact cancellations
                for (std::size_t q = 0; q < v.size(); q += 2) v[q] = -flats[0][q];
            a.assign_flat(v);
            flats.push_back(std::move(v));
            set.push_back(std::move(a));
        }
        if (merge_universal(set).flatten() != testing::oracle_merge(flats)) ++merge_bad;

        const ContinualState s = testing::random_state(g, 3, 4, 8, 3, trial % 2 == 1);
        const Vector x = testing::random_vector(g, 8);
        std::vector<Vector> logits;
        std::size_t best = 0;
        long double best_h = 1e300L;
        for (std::size_t i = 0; i < s.adapters.size(); ++i) {
            logits.push_back(testing::oracle_logits(x, s, s.adapters[i]));
            const long double h = testing::oracle_entropy(logits.back());
            if (h < best_h) {
                best_h = h;
                best = i;
            }
        }
        if (select_adapter(x, s).index != best) ++select_bad;
        const Vector u = testing::oracle_logits(x, s, s.universal);
        std::size_t arg = 0;
        for (std::size_t c = 1; c < u.size(); ++c)
            if (logits[best][c] + u[c] > logits[best][arg] + u[arg]) arg = c;
        if (predict(x, s) != s.seen[arg]) ++predict_bad;
    }
    return {merge_bad + select_bad + predict_bad == 0,
            fmt("1000 trials: %.0f merge, %.0f selection, %.0f prediction mismatches", double(merge_bad),
                double(select_bad), double(predict_bad))};
}

Outcome criterion6(const fs::path& golden) {
    bool hand = true;
    auto s = summarize(AccuracyMatrix{{{90}}});
    hand = hand && s.average_incremental == 90.0 && s.final_average == 90.0;
    s = summarize(AccuracyMatrix{{{80}, {70, 90}}});
    hand = hand && s.average_incremental == 80.0 && s.final_average == 80.0;
    for (double v : {0.0, 37.25, 100.0}) {
        s = summarize(AccuracyMatrix{{{v}, {v, v}, {v, v, v}, {v, v, v, v}}});
        hand = hand && std::fabs(s.average_incremental - v) < 1e-12 && std::fabs(s.final_average - v) < 1e-12;
    }
    std::ifstream in(golden / "split_golden.txt");
    std::string line;
    std::size_t cases = 0, bad = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("raw", 0) == 0) continue;
        std::istringstream ss(line);
        std::size_t n, t;
        std::uint64_t seed;
        std::string colon, tok;
        ss >> n >> t >> seed >> colon;
        std::vector<std::vector<ClassId>> want(1);
        while (ss >> tok) {
            if (tok == "|") want.emplace_back();
            else want.back().push_back(static_cast<ClassId>(std::stoul(tok)));
        }
        ++cases;
        if (split_classes(n, t, seed) != want) ++bad;
    }
    return {hand && cases > 0 && bad == 0,
            std::string("summary hand values and constant invariance ") + (hand ? "ok" : "WRONG") +
                fmt(", split golden: %.0f cases, %.0f mismatches", double(cases), double(bad))};
}

struct GridOutcome {
    Outcome c7, c8;
};

GridOutcome criteria7and8(const fs::path& work) {
    const auto t0 = Clock::now();
    ExperimentConfig cfg = parse_config("run.seeds = 1993,1994,1995,1996,1997\nout.checkpoint = false\n");
    cfg.out_dir = work / "grid";
    const AblationResult res = run_ablation(cfg);
    const double secs = seconds_since(t0);
    GridOutcome g;

    std::map<std::string, double> mean;
    for (std::size_t c = 0; c < res.cells.size(); ++c) {
        if (res.any_failed()) break;
        mean[res.cells[c].name] = summarize_seeds(res.runs[c]).a_bar_mean;
    }
    if (res.any_failed()) {
        g.c7 = g.c8 = {false, "a grid run failed numerically"};
        return g;
    }

    // Strategy trend from the full-SGDS cell.
    const auto& full = res.runs[3];
    const std::size_t T = cfg.num_tasks;
    std::vector<double> ratio(T, 0.0), reuse(T, 0.0);
    bool first_all_new = true;
    for (const RunReport& r : full) {
        const auto counts = r.strategy_counts();
        first_all_new = first_all_new && counts[0].knowledge_reuse == 0;
        for (std::size_t t = 0; t < T; ++t) {
            const double n = double(counts[t].knowledge_reuse + counts[t].new_allocation);
            reuse[t] += counts[t].knowledge_reuse / double(full.size());
            ratio[t] += counts[t].knowledge_reuse / n / double(full.size());
        }
    }
    bool later_positive = true;
    for (std::size_t t = T / 2; t < T; ++t) later_positive = later_positive && reuse[t] > 0.0;
    std::size_t nondecreasing = 0;
    for (std::size_t t = T - 4; t < T; ++t) nondecreasing += ratio[t] >= ratio[t - 1];
    std::string ratios;
    for (std::size_t t = 0; t < T; ++t) ratios += (t ? " " : "") + fmt("%.2f", ratio[t]);
    g.c7 = {first_all_new && later_positive && nondecreasing >= 3,
            std::string("task 1 all new-subspace: ") + (first_all_new ? "yes" : "NO") +
                ", reuse > 0 on tasks " + std::to_string(T / 2 + 1) + "-" + std::to_string(T) + ": " +
                (later_positive ? "yes" : "NO") + fmt(", non-decreasing steps in last 4: %.0f/4", double(nondecreasing)) +
                ", mean reuse ratio per task [" + ratios + "]"};

    const double f = mean["full"];
    const double m_base = f - mean["no_sgds"], m_se = f - mean["se_only"], m_ac = f - mean["ac_only"];
    g.c8 = {m_base >= 0.0 && m_se >= 0.0 && m_ac >= 0.0 && secs < 300.0,
            fmt("mean A_bar full %.2f, margins vs no_sgds %+.2f, vs se_only %+.2f, vs ac_only %+.2f", f, m_base, m_se,
                m_ac) +
                fmt(" (need all >= 0), grid %.1f s (limit 300 s)", secs)};
    return g;
}

Outcome criterion9(const fs::path& work) {
    ExperimentConfig cfg = parse_config("out.checkpoint = false\n");
    std::string files[2][2];
    for (int rep = 0; rep < 2; ++rep) {
        cfg.out_dir = work / ("determinism_" + std::to_string(rep));
        fs::remove_all(cfg.out_dir);
        run_experiment(cfg);
        files[rep][0] = io::read_text(cfg.out_dir / "seed_1993" / "results.csv");
        files[rep][1] = io::read_text(cfg.out_dir / "seed_1993" / "strategy.csv");
    }
    const bool same_results = files[0][0] == files[1][0], same_strategy = files[0][1] == files[1][1];
    return {same_results && same_strategy && !files[0][0].empty(),
            std::string("results.csv ") + (same_results ? "identical" : "DIFFERS") + ", strategy.csv " +
                (same_strategy ? "identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> allowed;
    fs::path work = fs::temp_directory_path() / "sgds_acceptance";
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--allow-fail") == 0 && i + 1 < argc) allowed.insert(std::atoi(argv[++i]));
        else if (std::strcmp(argv[i], "--work") == 0 && i + 1 < argc) work = argv[++i];
        else {
            std::fprintf(stderr, "usage: %s [--allow-fail N]... [--work DIR]\n", argv[0]);
            return 2;
        }
    }
    fs::remove_all(work);
    fs::create_directories(work);

    int unexpected = 0;
    auto report = [&](int id, const char* title, const Outcome& o) {
        std::printf("criterion %d %s: %s | %s\n", id, title, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
        if (!o.pass && !allowed.count(id)) ++unexpected;
    };
    report(1, "formula oracles", criterion1());
    report(2, "sparsifier contract", criterion2());
    report(3, "counter invariant", criterion3());
    report(4, "gradient check", criterion4());
    report(5, "fusion and retrieval oracles", criterion5());
    report(6, "metric protocol", criterion6(SGDS_GOLDEN_DIR));
    const GridOutcome grid = criteria7and8(work);
    report(7, "strategy logic", grid.c7);
    report(8, "end-to-end trend", grid.c8);
    report(9, "determinism", criterion9(work));
    fs::remove_all(work);
    if (!allowed.empty()) {
        std::printf("allowed to fail:");
        for (int id : allowed) std::printf(" %d", id);
        std::printf("\n");
    }
    return unexpected ? 1 : 0;
}
