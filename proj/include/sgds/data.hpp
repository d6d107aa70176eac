#pragma once

#include "sgds/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <vector>

namespace sgds {

using ClassId = std::uint32_t;

struct Sample {
    Vector input;
    ClassId label = 0;
};

struct LabeledSet {
    std::size_t dim = 0;
    std::size_t num_classes = 0;
    std::vector<Sample> samples;
};

struct TaskData {
    std::vector<ClassId> classes;  // C_t, in protocol order
    std::vector<Sample> train;
    std::vector<Sample> test;
};

struct TaskStream {
    std::size_t input_dim = 0;
    std::vector<TaskData> tasks;

    // Disjoint class sets, labels inside their task's set, shared input_dim.
    void validate() const;
};

// Seeded Fisher-Yates permutation of 0..num_classes-1 cut into equal chunks.
std::vector<std::vector<ClassId>> split_classes(std::size_t num_classes, std::size_t num_tasks,
                                                std::uint64_t seed);

// Group class sets into tasks; samples of classes not in the partition are dropped.
TaskStream build_stream(const LabeledSet& train, const LabeledSet& test,
                        const std::vector<std::vector<ClassId>>& partition);

struct SyntheticSpec {
    std::size_t groups = 4;
    std::size_t classes_per_group = 5;
    std::size_t dim = 64;
    double within_group_angle = 0.25;  // radians
    double noise_sigma = 0.15;
    std::size_t train_per_class = 100;
    std::size_t test_per_class = 50;
    std::uint64_t seed = 7;

    std::size_t num_classes() const { return groups * classes_per_group; }
};

struct SyntheticData {
    LabeledSet train;
    LabeledSet test;
    std::vector<Vector> class_means;
};

// Class id = group * classes_per_group + index within group.
SyntheticData generate_synthetic_sets(const SyntheticSpec& spec);

// Synthetic sets split into tasks by split_classes(num_classes, num_tasks, order_seed).
TaskStream generate_synthetic(const SyntheticSpec& spec, std::size_t num_tasks, std::uint64_t order_seed);

// SGDSEMB1 embedding files.
LabeledSet load_embeddings(const std::filesystem::path& path);
LabeledSet parse_embeddings(std::span<const std::uint8_t> bytes);
void save_embeddings(const std::filesystem::path& path, const LabeledSet& set);
std::vector<std::uint8_t> serialize_embeddings(const LabeledSet& set);

using Extractor = std::function<Vector(std::span<const double>)>;

// Mean of extractor outputs per class. When `classes` is non-empty every listed
// class must have at least one sample.
std::map<ClassId, Vector> compute_prototypes(std::span<const Sample> samples, const Extractor& extractor,
                                             std::span<const ClassId> classes = {});

}  // namespace sgds
