#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <torch/torch.h>

#include "cuci/batch.hpp"
#include "cuci/config.hpp"
#include "cuci/cue_constructor.hpp"
#include "cuci/guided_interaction.hpp"
#include "cuci/structure_encoder.hpp"

namespace cuci {

struct ForwardOptions {
    /// Replaces the relation prior s (held fixed when checking gradients of the
    /// stop-gradient target).
    std::optional<torch::Tensor> score_override;
    /// Keep per-layer interaction tensors in the output.
    bool record_interaction = false;
};

struct ForwardOutput {
    torch::Tensor logits;  // [B, num_classes]
    StageOneOutput stage1;
    InterpretationCue cue;
    torch::Tensor guidance;  // G_s [B, 1, d]
    std::vector<InteractionLayerTrace> layers;
    std::array<torch::Tensor, 3> final_streams;
    AggregationResult aggregation;
    bool shared_branches = false;

    /// Every routing coefficient that enters the gate loss, [B, K]: both
    /// branches when they are independent, the single shared one otherwise.
    torch::Tensor gate_rho() const;
};

/// Three-stage network: structure encoding, interpretation-cue construction,
/// cue-guided interaction with adaptive aggregation.
class CuciNetImpl : public torch::nn::Module {
public:
    explicit CuciNetImpl(const ModelConfig& config);

    ForwardOutput forward(const Batch& batch, const ForwardOptions& options = {});

    const ModelConfig& config() const { return config_; }

    StageOne stage1{nullptr};
    CueConstructor cue{nullptr};
    GuidanceProjection guidance{nullptr};
    torch::nn::ModuleList interaction{nullptr};
    Aggregator aggregator{nullptr};
    Classifier classifier{nullptr};

private:
    ModelConfig config_;
};
TORCH_MODULE(CuciNet);

/// Seeds the global generator, then builds the network; same seed, same weights.
CuciNet make_model(const ModelConfig& config, std::uint64_t seed);

}  // namespace cuci
