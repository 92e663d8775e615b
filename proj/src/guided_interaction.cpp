#include "cuci/guided_interaction.hpp"

namespace cuci {

GuidanceProjectionImpl::GuidanceProjectionImpl(int64_t dim) {
    linear = register_module("linear", torch::nn::Linear(7 * dim, dim));
}

torch::Tensor GuidanceProjectionImpl::forward(const torch::Tensor& cue) { return linear(cue).unsqueeze(1); }

GuidedUpdateImpl::GuidedUpdateImpl(int64_t dim, int64_t heads, double dropout, bool enabled) : enabled_(enabled) {
    cross = register_module("cross", MultiHeadAttention(AttentionConfig{dim, heads, dropout}));
    norm_cross = register_module("norm_cross", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    self = register_module("self", MultiHeadAttention(AttentionConfig{dim, heads, dropout}));
    norm_self = register_module("norm_self", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    dropout_ = register_module("dropout", torch::nn::Dropout(dropout));
}

torch::Tensor GuidedUpdateImpl::phi(const torch::Tensor& stream, const torch::Tensor& mask,
                                    const torch::Tensor& guidance) {
    const auto guidance_mask = torch::ones({guidance.size(0), guidance.size(1)}, mask.options());
    const auto x = norm_cross(stream + dropout_(cross(stream, guidance, guidance_mask)));
    return norm_self(x + dropout_(self(x, x, mask)));
}

torch::Tensor GuidedUpdateImpl::forward(const torch::Tensor& stream, const torch::Tensor& mask,
                                        const torch::Tensor& guidance) {
    if (!enabled_) return stream;
    return stream + phi(stream, mask, guidance);
}

GatedIntegrationImpl::GatedIntegrationImpl(int64_t dim) {
    w1 = register_module("w1", torch::nn::Linear(dim, dim));
    w2 = register_module("w2", torch::nn::Linear(torch::nn::LinearOptions(dim, dim).bias(false)));
}

GatedIntegrationImpl::Output GatedIntegrationImpl::forward(const torch::Tensor& r1, const torch::Tensor& r2) {
    Output out;
    out.gate = torch::sigmoid(w1(r1) + w2(r2));
    // lerp is exact at both gate endpoints and when r1 == r2.
    out.integrated = torch::lerp(r2, r1, out.gate);
    return out;
}

RefineImpl::RefineImpl(int64_t dim, int64_t heads, double dropout) {
    self = register_module("self", MultiHeadAttention(AttentionConfig{dim, heads, dropout}));
    norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    out_proj = register_module("out_proj", torch::nn::Linear(dim, dim));
    dropout_ = register_module("dropout", torch::nn::Dropout(dropout));
}

torch::Tensor RefineImpl::psi(const torch::Tensor& integrated, const torch::Tensor& mask) {
    return out_proj(norm(integrated + dropout_(self(integrated, integrated, mask))));
}

torch::Tensor RefineImpl::forward(const torch::Tensor& guided, const torch::Tensor& integrated,
                                  const torch::Tensor& mask) {
    return guided + dropout_(psi(integrated, mask));
}

InteractionLayerImpl::InteractionLayerImpl(const ModelConfig& config) {
    for (Modality m : kModalities) {
        const auto i = index_of(m);
        const std::string tag(modality_name(m));
        const auto [m1, m2] = supporting_modalities(m);
        guided[i] = register_module("guided_" + tag,
                                    GuidedUpdate(config.d, config.heads, config.dropout, config.ablation.guidance));
        cross[i][0] = register_module("cross_" + tag + "_from_" + std::string(modality_name(m1)),
                                      MultiHeadAttention(AttentionConfig{config.d, config.heads, config.dropout}));
        cross[i][1] = register_module("cross_" + tag + "_from_" + std::string(modality_name(m2)),
                                      MultiHeadAttention(AttentionConfig{config.d, config.heads, config.dropout}));
        integration[i] = register_module("integration_" + tag, GatedIntegration(config.d));
        refine[i] = register_module("refine_" + tag, Refine(config.d, config.heads, config.dropout));
    }
}

std::pair<torch::Tensor, torch::Tensor> InteractionLayerImpl::cross_modal_responses(
    Modality anchor, const std::array<torch::Tensor, 3>& streams, const std::array<torch::Tensor, 3>& masks) {
    const auto i = index_of(anchor);
    const auto [m1, m2] = supporting_modalities(anchor);
    auto r1 = cross[i][0](streams[i], streams[index_of(m1)], masks[index_of(m1)]);
    auto r2 = cross[i][1](streams[i], streams[index_of(m2)], masks[index_of(m2)]);
    return {std::move(r1), std::move(r2)};
}

InteractionLayerTrace InteractionLayerImpl::forward(const std::array<torch::Tensor, 3>& streams,
                                                    const std::array<torch::Tensor, 3>& masks,
                                                    const torch::Tensor& guidance) {
    InteractionLayerTrace trace;
    for (Modality m : kModalities) {
        const auto i = index_of(m);
        trace.guided[i] = guided[i](streams[i], masks[i], guidance);
    }
    for (Modality m : kModalities) {
        const auto i = index_of(m);
        auto [r1, r2] = cross_modal_responses(m, trace.guided, masks);
        auto gated = integration[i](r1, r2);
        trace.gates[i] = gated.gate;
        trace.integrated[i] = gated.integrated;
        trace.output[i] = refine[i](trace.guided[i], gated.integrated, masks[i]);
    }
    return trace;
}

AggregatorImpl::AggregatorImpl(int64_t dim, bool adaptive) : adaptive_(adaptive) {
    for (Modality m : kModalities)
        score[index_of(m)] = register_module("score_" + std::string(modality_name(m)), torch::nn::Linear(dim, 1));
}

AggregationResult AggregatorImpl::forward(const std::array<torch::Tensor, 3>& streams,
                                          const std::array<torch::Tensor, 3>& masks) {
    AggregationResult out;
    std::vector<torch::Tensor> scores;
    for (std::size_t i = 0; i < 3; ++i) {
        out.pooled[i] = masked_mean_pool(streams[i], masks[i]);
        scores.push_back(score[i](out.pooled[i]));
    }
    out.scores = torch::cat(scores, -1);
    out.weights = adaptive_ ? torch::softmax(out.scores, -1) : torch::full_like(out.scores, 1.0 / 3.0);
    const auto pooled = torch::stack({out.pooled[0], out.pooled[1], out.pooled[2]}, 1);  // [B, 3, d]
    out.fused = (out.weights.unsqueeze(-1) * pooled).sum(1);
    return out;
}

ClassifierImpl::ClassifierImpl(int64_t dim, int64_t num_classes, double dropout) {
    dropout_ = register_module("dropout", torch::nn::Dropout(dropout));
    linear = register_module("linear", torch::nn::Linear(dim, num_classes));
}

torch::Tensor ClassifierImpl::forward(const torch::Tensor& fused) { return linear(dropout_(fused)); }

}  // namespace cuci
