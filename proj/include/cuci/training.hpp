#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cuci/batch.hpp"
#include "cuci/config.hpp"
#include "cuci/metrics.hpp"
#include "cuci/model.hpp"

namespace cuci {

/// CE(logits, labels) + lambda_gate * gate_loss(rho, s, lambda_bias).
torch::Tensor total_loss(const torch::Tensor& logits, const torch::Tensor& labels, const torch::Tensor& rho,
                         const torch::Tensor& s, double lambda_bias, double lambda_gate);

/// base * (1 + cos(pi * t / total)) / 2, clamped to [0, total].
double cosine_lr(double base, int64_t step, int64_t total_steps);

/// Learning-rate groups: audio/visual encoders vs everything else.
struct ParameterGroups {
    std::vector<std::string> nonverbal_names, rest_names;
    std::vector<torch::Tensor> nonverbal, rest;
};
/// Throws ConfigError naming any parameter that no group claims.
ParameterGroups group_parameters(CuciNetImpl& model);

/// Adam over the two groups with per-step cosine decay of both base rates.
class OptimizerSchedule {
public:
    OptimizerSchedule(CuciNetImpl& model, double lr_nonverbal, double lr_rest, int64_t total_steps);

    /// Sets both group rates for step `t`.
    void set_step(int64_t t);
    torch::optim::Adam& optimizer() { return *optimizer_; }
    double lr_nonverbal() const { return current_[0]; }
    double lr_rest() const { return current_[1]; }
    int64_t total_steps() const { return total_steps_; }

private:
    std::unique_ptr<torch::optim::Adam> optimizer_;
    std::array<double, 2> base_{}, current_{};
    int64_t total_steps_;
};

/// Stops after `patience` consecutive epochs without a strict improvement.
class EarlyStopping {
public:
    explicit EarlyStopping(int patience);
    /// Records one epoch; returns true when training should stop.
    bool update(double score, int epoch);
    bool improved() const { return improved_; }
    int best_epoch() const { return best_epoch_; }
    double best_score() const { return best_; }

private:
    int patience_;
    int bad_epochs_ = 0;
    int best_epoch_ = -1;
    double best_ = 0.0;
    bool improved_ = false;
};

/// Owns the model, optimizer and schedule of one run.
class Trainer {
public:
    Trainer(const TrainConfig& config, int64_t steps_per_epoch);

    /// One optimisation step; returns the total loss. Throws NumericalError on
    /// a non-finite loss, naming the step index.
    double step(const Batch& batch, int epoch);

    CuciNet& model() { return model_; }
    OptimizerSchedule& schedule() { return *schedule_; }
    int64_t steps_taken() const { return step_; }
    double lambda_bias(int epoch) const;

private:
    TrainConfig config_;
    CuciNet model_{nullptr};
    std::unique_ptr<OptimizerSchedule> schedule_;
    int64_t step_ = 0;
};

struct Predictions {
    std::vector<int> labels;
    std::vector<int> predicted;
    std::vector<std::string> ids;
    torch::Tensor fused;          // z [N, d]
    torch::Tensor rho_primary;    // [N, K]
    torch::Tensor rho_structure;  // [N, K]
};

/// Eval-mode forward over `samples` in order; the training flag is restored.
Predictions predict(CuciNetImpl& model, const std::vector<PreparedSample>& samples, int batch_size);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_f1 = 0.0;
    double lr_nonverbal = 0.0;  // at the end of the epoch
    double lr_rest = 0.0;
    double lambda_bias = 0.0;
    std::vector<double> rho_mean;  // validation mean of each structure-branch coefficient
};

struct RunArtifacts {
    TrainConfig config;
    CuciNet model{nullptr};  // best-validation parameters
    std::vector<EpochRecord> history;
    int best_epoch = -1;
    double best_val_f1 = 0.0;
    MetricsReport test_report;
    int64_t steps = 0;
};

struct TrainOptions {
    std::optional<std::filesystem::path> out_dir;  // artifacts written when set
    std::function<void(const EpochRecord&)> on_epoch;
};

/// Throws SchemaError when the dataset dims or class count disagree with `model`.
void require_compatible(const DatasetBundle& bundle, const ModelConfig& model);

/// Applies data-level ablations (pseudo-context) required by `config`.
DatasetBundle prepare_bundle(const DatasetBundle& bundle, const TrainConfig& config);

/// Seeded epoch loop with validation-F1 early stopping; the best checkpoint is
/// evaluated on the test split. Writes config.json, history.csv, metrics.csv,
/// rho_telemetry.csv and checkpoint.bin into `out_dir` when given.
RunArtifacts train(const DatasetBundle& bundle, const TrainConfig& config, const TrainOptions& options = {});

/// Metrics of `model` over `eval_bundle` (a single split).
MetricsReport evaluate(CuciNetImpl& model, const DatasetBundle& eval_bundle, std::span<const Scope> scopes,
                       const TrainConfig& config, int epoch = -1);
/// Loads a checkpoint and evaluates the test split of `bundle`; dimension
/// disagreement raises SchemaError.
MetricsReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const DatasetBundle& bundle,
                                  std::span<const Scope> scopes);

struct AblationResult {
    std::string variant;
    MetricsReport full;
    MetricsReport ablated;
};

/// Trains the full model and `variant` with the same seed and writes
/// ablation.csv (`variant,scope,precision,recall,f1`) plus both run directories.
AblationResult run_ablation(const DatasetBundle& bundle, const TrainConfig& base, const std::string& variant,
                            const std::optional<std::filesystem::path>& out_dir);

/// Configuration of `base` with the ablation flags of `variant`.
TrainConfig apply_variant(const TrainConfig& base, const std::string& variant);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace cuci
