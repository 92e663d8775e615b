#include "cuci/structure_encoder.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "cuci/errors.hpp"

namespace cuci {

torch::Tensor add_structure_embeddings(const torch::Tensor& input, const torch::Tensor& partition,
                                       const torch::Tensor& mask, const torch::Tensor& role_embeddings) {
    const auto roles = torch::embedding(role_embeddings, partition);
    return torch::where(mask.unsqueeze(-1), input + roles, input);
}

EncoderLayerImpl::EncoderLayerImpl(int64_t dim, int64_t heads, int64_t ffn_dim, double dropout) {
    attn = register_module("attn", MultiHeadAttention(AttentionConfig{dim, heads, dropout}));
    norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    ffn = register_module("ffn", FeedForward(dim, ffn_dim, dropout));
    norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    dropout_ = register_module("dropout", torch::nn::Dropout(dropout));
}

torch::Tensor EncoderLayerImpl::forward(const torch::Tensor& x, const torch::Tensor& mask) {
    auto h = norm1(x + dropout_(attn(x, x, mask)));
    return norm2(h + dropout_(ffn(h)));
}

TextEncoderImpl::TextEncoderImpl(const ModelConfig& config) : use_roles_(config.ablation.role_embeddings) {
    const auto d_in = static_cast<int64_t>(config.input_dims.text);
    special_embeddings = register_parameter("special_embeddings", torch::randn({2, d_in}) * 0.5);
    role_embeddings = register_parameter("role_embeddings", torch::randn({2, d_in}) * 0.5);
    input_proj = register_module("input_proj", torch::nn::Linear(d_in, config.d));
    layers = register_module("layers", torch::nn::ModuleList());
    for (int i = 0; i < config.text_layers; ++i)
        layers->push_back(EncoderLayer(config.d, config.heads, config.ffn_dim, config.dropout));
}

torch::Tensor TextEncoderImpl::forward(const torch::Tensor& features, const torch::Tensor& partition,
                                       const torch::Tensor& special, const torch::Tensor& mask) {
    const auto specials = torch::embedding(special_embeddings, (special - 1).clamp_min(0));
    auto x = torch::where(special.gt(0).unsqueeze(-1), features + specials, features);
    if (use_roles_) x = add_structure_embeddings(x, partition, mask, role_embeddings);
    x = input_proj(x);
    for (const auto& layer : *layers) x = layer->as<EncoderLayer>()->forward(x, mask);
    return x;
}

torch::Tensor relation_representation(const torch::Tensor& text_states, const torch::Tensor& partition,
                                      const torch::Tensor& mask) {
    const auto ctx = mask.logical_and(partition.eq(0));
    const auto utt = mask.logical_and(partition.eq(1));
    if (ctx.logical_not().all(-1).any().item<bool>() || utt.logical_not().all(-1).any().item<bool>())
        throw PreconditionError("relation: context or utterance block is empty");
    const auto h_c = masked_mean_pool(text_states, ctx);
    const auto h_u = masked_mean_pool(text_states, utt);
    return torch::cat({h_c, h_u, h_c - h_u}, -1);
}

RelationScorerImpl::RelationScorerImpl(int64_t dim) {
    linear = register_module("linear", torch::nn::Linear(3 * dim, 1));
}

torch::Tensor RelationScorerImpl::forward(const torch::Tensor& relation) {
    return torch::sigmoid(linear(relation)).squeeze(-1);
}

DualExpertLayerImpl::DualExpertLayerImpl(int64_t dim, int64_t heads, int64_t ffn_dim, double dropout, bool dual)
    : dual_(dual) {
    attn = register_module("attn", MultiHeadAttention(AttentionConfig{dim, heads, dropout}));
    norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    expert_con = register_module("expert_con", FeedForward(dim, ffn_dim, dropout));
    if (dual_) {
        expert_dis = register_module("expert_dis", FeedForward(dim, ffn_dim, dropout));
        copy_parameters(*expert_dis, *expert_con);
        router = register_module("router", torch::nn::Linear(2 * dim, 1));
    }
    norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    dropout_ = register_module("dropout", torch::nn::Dropout(dropout));
}

torch::Tensor DualExpertLayerImpl::route(const torch::Tensor& states, const torch::Tensor& mask,
                                         const torch::Tensor& relation_guidance) {
    if (!dual_) throw PreconditionError("route: layer has a single feed-forward path");
    const auto summary = masked_mean_pool(states, mask);
    return torch::sigmoid(router(torch::cat({summary, relation_guidance}, -1))).squeeze(-1);
}

torch::Tensor DualExpertLayerImpl::mix_experts(const torch::Tensor& x, const torch::Tensor& rho) {
    if (!dual_) return expert_con(x);
    auto r = rho.dim() == 0 ? rho : rho.view({-1, 1, 1});
    return r * expert_con(x) + (1 - r) * expert_dis(x);
}

DualExpertLayerImpl::Output DualExpertLayerImpl::forward(const torch::Tensor& x, const torch::Tensor& mask,
                                                         const torch::Tensor& relation_guidance,
                                                         const std::optional<torch::Tensor>& rho_override) {
    auto h = norm1(x + dropout_(attn(x, x, mask)));
    Output out;
    if (dual_) out.rho = rho_override ? *rho_override : route(h, mask, relation_guidance);
    out.states = norm2(h + dropout_(mix_experts(h, out.rho)));
    return out;
}

NonverbalEncoderImpl::NonverbalEncoderImpl(const ModelConfig& config, Modality modality)
    : modality_(modality), use_roles_(config.ablation.role_embeddings) {
    if (modality == Modality::Text) throw PreconditionError("nonverbal encoder needs the audio or visual modality");
    const auto d_in = static_cast<int64_t>(config.input_dims[modality]);
    role_embeddings = register_parameter("role_embeddings", torch::randn({2, d_in}) * 0.5);
    input_proj = register_module("input_proj", torch::nn::Linear(d_in, config.d));
    relation_proj = register_module("relation_proj", torch::nn::Linear(3 * config.d, config.d));
    layers = register_module("layers", torch::nn::ModuleList());
    for (int i = 0; i < config.nonverbal_layers(modality); ++i)
        layers->push_back(
            DualExpertLayer(config.d, config.heads, config.ffn_dim, config.dropout, config.ablation.dual_expert));
}

NonverbalEncoderImpl::Output NonverbalEncoderImpl::forward(const torch::Tensor& features,
                                                           const torch::Tensor& partition,
                                                           const torch::Tensor& mask,
                                                           const torch::Tensor& relation) {
    auto x = use_roles_ ? add_structure_embeddings(features, partition, mask, role_embeddings) : features;
    x = input_proj(x);
    Output out;
    out.relation_guidance = project_relation(relation);
    std::vector<torch::Tensor> rhos;
    for (const auto& layer : *layers) {
        auto step = layer->as<DualExpertLayer>()->forward(x, mask, out.relation_guidance);
        x = step.states;
        if (step.rho.defined()) rhos.push_back(step.rho);
    }
    out.states = x;
    out.rho = rhos.empty() ? torch::zeros({features.size(0), 0}, features.options()) : torch::stack(rhos, 1);
    return out;
}

double BiasSchedule::operator()(int epoch) const {
    if (tau_end <= 0) return 0.0;
    return lambda0 * std::max(0.0, 1.0 - static_cast<double>(epoch) / static_cast<double>(tau_end));
}

torch::Tensor gate_loss(const torch::Tensor& rho, const torch::Tensor& s, double lambda_bias) {
    if (rho.size(1) == 0) return torch::zeros({}, rho.options());
    const auto target = s.detach().unsqueeze(1).expand_as(rho);
    const auto bce = torch::binary_cross_entropy(rho, target, {}, at::Reduction::None).sum(1);
    const auto balance = (rho - 0.5).pow(2).sum(1);
    return (bce + lambda_bias * balance).mean();
}

StageOneImpl::StageOneImpl(const ModelConfig& config) : independent_(config.ablation.independent_branches) {
    text = register_module("text", TextEncoder(config));
    scorer = register_module("scorer", RelationScorer(config.d));
    audio_primary = register_module("audio_primary", NonverbalEncoder(config, Modality::Audio));
    visual_primary = register_module("visual_primary", NonverbalEncoder(config, Modality::Visual));
    if (independent_) {
        audio_structure = register_module("audio_structure", NonverbalEncoder(config, Modality::Audio));
        visual_structure = register_module("visual_structure", NonverbalEncoder(config, Modality::Visual));
        if (config.tie_branch_init) {
            copy_parameters(*audio_structure, *audio_primary);
            copy_parameters(*visual_structure, *visual_primary);
        }
    } else {
        audio_structure = audio_primary;
        visual_structure = visual_primary;
    }
}

StageOneOutput StageOneImpl::forward(const Batch& batch, const std::optional<torch::Tensor>& score_override) {
    constexpr auto t = index_of(Modality::Text);
    constexpr auto a = index_of(Modality::Audio);
    constexpr auto v = index_of(Modality::Visual);

    StageOneOutput out;
    const auto h_t = text(batch.features[t], batch.partition[t], batch.special[t], batch.mask[t]);
    out.primary[t] = h_t;
    out.structure[t] = h_t;

    out.relation.relation = relation_representation(h_t, batch.partition[t], batch.mask[t]);
    out.relation.score = score_override ? *score_override : scorer(out.relation.relation);

    const auto& r = out.relation.relation;
    auto audio_p = audio_primary(batch.features[a], batch.partition[a], batch.mask[a], r);
    auto visual_p = visual_primary(batch.features[v], batch.partition[v], batch.mask[v], r);
    out.primary[a] = audio_p.states;
    out.primary[v] = visual_p.states;
    out.relation.guidance_audio = audio_p.relation_guidance;
    out.relation.guidance_visual = visual_p.relation_guidance;
    out.rho_primary = torch::cat({audio_p.rho, visual_p.rho}, 1);

    if (independent_) {
        auto audio_s = audio_structure(batch.features[a], batch.partition[a], batch.mask[a], r);
        auto visual_s = visual_structure(batch.features[v], batch.partition[v], batch.mask[v], r);
        out.structure[a] = audio_s.states;
        out.structure[v] = visual_s.states;
        out.rho_structure = torch::cat({audio_s.rho, visual_s.rho}, 1);
    } else {
        out.structure[a] = out.primary[a];
        out.structure[v] = out.primary[v];
        out.rho_structure = out.rho_primary;
    }
    return out;
}

}  // namespace cuci
