#pragma once

// Checkpoint container:
//   "CUCICKPT" | uint64 LE header length | JSON header | float32 LE parameter data
// The header echoes the training config and registers every parameter as
// {name, shape, offset}, offset counted in bytes from the start of the data block.

#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cuci/config.hpp"
#include "cuci/model.hpp"

namespace cuci {

struct LoadedCheckpoint {
    TrainConfig config;
    CuciNet model{nullptr};
};

void save_checkpoint(CuciNet& model, const TrainConfig& config, const std::filesystem::path& path);
/// Rebuilds the model from the echoed config and verifies every parameter shape.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Deep copy of all parameter values, in registry order.
using ParameterSnapshot = std::vector<torch::Tensor>;
ParameterSnapshot snapshot_parameters(const torch::nn::Module& model);
void restore_parameters(torch::nn::Module& model, const ParameterSnapshot& snapshot);

}  // namespace cuci
