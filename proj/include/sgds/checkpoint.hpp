#pragma once

// Checkpoint directory layout:
//   adapter_<t>.sgdsadp   one SGDSADP1 file per task, t = 1..T
//   state.bin             SGDSSTA1 blob: model shape, classifier, class statistics
//   counters.csv          usage counter dump

#include "sgds/trainer.hpp"

#include <filesystem>

namespace sgds {

inline constexpr std::uint32_t kStateFormatVersion = 1;

void save_checkpoint(const std::filesystem::path& dir, const ContinualState& state);
ContinualState load_checkpoint(const std::filesystem::path& dir);

}  // namespace sgds
