#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gatescope/transformer/model.hpp"

namespace gatescope::transformer {

/// Adam moments stored next to a checkpoint so training can resume exactly.
struct OptimizerState {
    std::vector<float> first_moment;
    std::vector<float> second_moment;

    bool empty() const { return first_moment.empty(); }
};

struct Checkpoint {
    Weights weights;
    std::size_t step = 0;
    std::uint64_t seed = 0;
    OptimizerState optimizer;
};

/// `header` is the JSON file (config, step, seed, tensor manifest); the
/// float32 payload is written beside it with extension .bin in manifest order,
/// optimizer moments (if any) in .optim.bin.
void save_checkpoint(const std::filesystem::path& header, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& header, bool with_optimizer = false);

}  // namespace gatescope::transformer
