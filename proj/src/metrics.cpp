#include "sgds/metrics.hpp"

#include "sgds/errors.hpp"
#include "sgds/inference.hpp"

namespace sgds {

bool AccuracyMatrix::complete() const noexcept {
    for (std::size_t t = 0; t < rows.size(); ++t) {
        if (rows[t].size() != t + 1) return false;
        for (double v : rows[t])
            if (!(v >= 0.0 && v <= 100.0)) return false;
    }
    return !rows.empty();
}

Summary summarize(const AccuracyMatrix& a) {
    require(a.complete(), "summarize: accuracy matrix is incomplete");
    const std::size_t T = a.num_tasks();
    Summary s;
    for (std::size_t t = 0; t < T; ++t) {
        double row = 0.0;
        for (double v : a.rows[t]) row += v;
        s.average_incremental += row / static_cast<double>(t + 1);
    }
    s.average_incremental /= static_cast<double>(T);
    for (double v : a.rows.back()) s.final_average += v;
    s.final_average /= static_cast<double>(T);
    return s;
}

double accuracy(const Predictor& predictor, std::span<const Sample> test) {
    require(!test.empty(), "accuracy: empty test set");
    std::size_t correct = 0;
    for (const Sample& s : test)
        if (predictor(s.input) == s.label) ++correct;
    return 100.0 * static_cast<double>(correct) / static_cast<double>(test.size());
}

AccuracyMatrix evaluate(std::span<const Predictor> snapshots, std::span<const TaskData> tasks) {
    require(snapshots.size() <= tasks.size(), "evaluate: more snapshots than tasks");
    AccuracyMatrix a;
    for (std::size_t t = 0; t < snapshots.size(); ++t) {
        std::vector<double> row;
        for (std::size_t j = 0; j <= t; ++j) row.push_back(accuracy(snapshots[t], tasks[j].test));
        a.rows.push_back(std::move(row));
    }
    return a;
}

std::vector<double> evaluate_row(const ContinualState& state, std::span<const TaskData> tasks, std::size_t t) {
    require(t < tasks.size(), "evaluate_row: task index out of range");
    const Predictor p = [&state](std::span<const double> x) { return predict(x, state); };
    std::vector<double> row;
    for (std::size_t j = 0; j <= t; ++j) row.push_back(accuracy(p, tasks[j].test));
    return row;
}

AccuracyMatrix evaluate(std::span<const ContinualState> snapshots, std::span<const TaskData> tasks) {
    require(snapshots.size() <= tasks.size(), "evaluate: more snapshots than tasks");
    AccuracyMatrix a;
    for (std::size_t t = 0; t < snapshots.size(); ++t) a.rows.push_back(evaluate_row(snapshots[t], tasks, t));
    return a;
}

}  // namespace sgds
