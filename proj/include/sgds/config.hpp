#pragma once

// Flat key=value experiment configuration. Lines are `key = value`; `#`
// starts a comment. Unknown keys are errors. Any key can be overridden from
// the environment as SGDS_CFG_<KEY>, where <KEY> is the key upper-cased with
// dots replaced by underscores (train.epochs -> SGDS_CFG_TRAIN_EPOCHS).

#include "sgds/data.hpp"
#include "sgds/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sgds {

enum class DatasetKind : std::uint8_t { Synthetic, Embeddings };

struct ExperimentConfig {
    DatasetKind dataset = DatasetKind::Synthetic;
    SyntheticSpec synthetic;
    std::filesystem::path train_path;
    std::filesystem::path test_path;

    std::size_t num_tasks = 10;
    std::uint64_t order_seed = 1993;

    ModelConfig model;
    std::size_t model_dim = 0;  // 0: follow the data
    TrainConfig train;

    std::vector<std::uint64_t> seeds;  // empty: {order_seed}
    std::size_t threads = 0;           // 0: hardware concurrency
    std::filesystem::path out_dir = "out";
    bool write_svg = false;
    bool write_checkpoint = true;

    bool ablate_param_reg = false;
    std::vector<std::vector<std::size_t>> ablate_layer_sets;

    // Effective key -> value strings, including defaults, for reports.
    std::map<std::string, std::string> entries;

    std::vector<std::uint64_t> run_seeds() const { return seeds.empty() ? std::vector{order_seed} : seeds; }
};

using EnvLookup = std::function<std::optional<std::string>(const std::string& name)>;

std::optional<std::string> process_env(const std::string& name);

// Keys in the order they are documented.
const std::vector<std::string>& config_keys();
std::string env_name_for(std::string_view key);

ExperimentConfig parse_config(std::string_view text, const EnvLookup& env = {});
ExperimentConfig load_config(const std::filesystem::path& path, const EnvLookup& env = process_env);

}  // namespace sgds
