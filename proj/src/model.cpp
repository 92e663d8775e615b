#include "cuci/model.hpp"

namespace cuci {

torch::Tensor ForwardOutput::gate_rho() const {
    if (shared_branches) return stage1.rho_primary;
    return torch::cat({stage1.rho_primary, stage1.rho_structure}, 1);
}

CuciNetImpl::CuciNetImpl(const ModelConfig& config) : config_(config) {
    config_.validate();
    stage1 = register_module("stage1", StageOne(config_));
    cue = register_module("cue", CueConstructor(config_));
    guidance = register_module("guidance", GuidanceProjection(config_.d));
    interaction = register_module("interaction", torch::nn::ModuleList());
    for (int l = 0; l < config_.interaction_depth; ++l) interaction->push_back(InteractionLayer(config_));
    aggregator = register_module("aggregator", Aggregator(config_.d, config_.ablation.adaptive_aggregation));
    classifier = register_module("classifier", Classifier(config_.d, config_.num_classes, config_.dropout));
}

ForwardOutput CuciNetImpl::forward(const Batch& batch, const ForwardOptions& options) {
    ForwardOutput out;
    out.shared_branches = stage1->shared_branches();

    // Stage 1
    out.stage1 = stage1(batch, options.score_override);

    // Stage 2 reads the structure-preserving streams.
    out.cue = cue(out.stage1.structure, batch);

    // Stage 3 starts from the primary streams.
    out.guidance = guidance(out.cue.cue);
    std::array<torch::Tensor, 3> streams = out.stage1.primary;
    for (const auto& layer : *interaction) {
        auto trace = layer->as<InteractionLayer>()->forward(streams, batch.mask, out.guidance);
        streams = trace.output;
        if (options.record_interaction) out.layers.push_back(std::move(trace));
    }
    out.final_streams = streams;
    out.aggregation = aggregator(streams, batch.mask);
    out.logits = classifier(out.aggregation.fused);
    return out;
}

CuciNet make_model(const ModelConfig& config, std::uint64_t seed) {
    torch::manual_seed(seed);
    return CuciNet(config);
}

}  // namespace cuci
