#pragma once

// Torch-free entry points shared by the command-line tool and the Python module.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cuci/analysis.hpp"
#include "cuci/config.hpp"
#include "cuci/data_model.hpp"
#include "cuci/gradcheck.hpp"
#include "cuci/metrics.hpp"

namespace cuci::api {

/// Accepts a dataset directory or a manifest path.
DatasetBundle load_data(const std::filesystem::path& path);

DatasetBundle generate(const SyntheticConfig& config, std::uint64_t seed, const std::filesystem::path& out_dir);

struct TrainSummary {
    int best_epoch = -1;
    double best_val_f1 = 0.0;
    long steps = 0;
    std::vector<double> train_loss;
    std::vector<double> val_f1;
    MetricsReport test;
};

TrainSummary train(const TrainConfig& config, const std::filesystem::path& data,
                   const std::optional<std::filesystem::path>& out_dir);

MetricsReport evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& data,
                       const std::string& scope);

struct PredictionSummary {
    std::vector<std::string> ids;
    std::vector<int> labels;
    std::vector<int> predicted;
};
/// Eval-mode predictions for every sample of the dataset.
PredictionSummary predict(const std::filesystem::path& checkpoint, const std::filesystem::path& data);

struct AblationSummary {
    std::string variant;
    MetricsReport full;
    MetricsReport ablated;
};
AblationSummary ablate(const TrainConfig& config, const std::filesystem::path& data, const std::string& variant,
                       const std::optional<std::filesystem::path>& out_dir);

std::vector<DepthRow> sweep_depth(const TrainConfig& config, const std::filesystem::path& data,
                                  const std::vector<int>& depths, const std::optional<std::filesystem::path>& out_dir);

RoutingMatrix routing(const std::filesystem::path& checkpoint, const std::filesystem::path& data, Modality modality,
                      int layer, const std::optional<std::filesystem::path>& out_file);

std::size_t embeddings(const std::filesystem::path& checkpoint, const std::filesystem::path& data,
                       const std::filesystem::path& out_file);

std::vector<GradcheckCase> gradcheck(GradcheckLevel level);

}  // namespace cuci::api
