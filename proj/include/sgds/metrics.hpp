#pragma once

#include "sgds/data.hpp"
#include "sgds/trainer.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace sgds {

// rows[t][j] = accuracy (percent) on task j's test set after training task t, j <= t (0-based here).
struct AccuracyMatrix {
    std::vector<std::vector<double>> rows;

    std::size_t num_tasks() const noexcept { return rows.size(); }
    double at(std::size_t t, std::size_t j) const { return rows.at(t).at(j); }
    // Every row t has exactly t + 1 entries in [0, 100].
    bool complete() const noexcept;
};

struct Summary {
    double average_incremental = 0.0;  // mean over t of the mean of row t
    double final_average = 0.0;        // mean of the last row
};

Summary summarize(const AccuracyMatrix& a);

using Predictor = std::function<ClassId(std::span<const double>)>;

// 100 * correct / |test| for one test set.
double accuracy(const Predictor& predictor, std::span<const Sample> test);

// One predictor per completed task (the post-task snapshot).
AccuracyMatrix evaluate(std::span<const Predictor> snapshots, std::span<const TaskData> tasks);
AccuracyMatrix evaluate(std::span<const ContinualState> snapshots, std::span<const TaskData> tasks);

// Row t of the matrix for a single post-task state: tasks 0..t.
std::vector<double> evaluate_row(const ContinualState& state, std::span<const TaskData> tasks, std::size_t t);

}  // namespace sgds
