#pragma once

// Stage 1: role-embedded encoding of the joint sequences, the text-anchored
// relation representation and prior score, and relation-guided dual-expert
// encoders for the acoustic and visual streams.

#include <array>
#include <optional>
#include <vector>

#include <torch/torch.h>

#include "cuci/batch.hpp"
#include "cuci/config.hpp"
#include "cuci/primitives.hpp"

namespace cuci {

/// output[i] = input[i] + role[partition[i]] on valid rows; padding rows untouched.
torch::Tensor add_structure_embeddings(const torch::Tensor& input, const torch::Tensor& partition,
                                       const torch::Tensor& mask, const torch::Tensor& role_embeddings);

/// Post-norm transformer layer: x = LN(x + SA(x)); x = LN(x + FFN(x)).
class EncoderLayerImpl : public torch::nn::Module {
public:
    EncoderLayerImpl(int64_t dim, int64_t heads, int64_t ffn_dim, double dropout);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask);

    MultiHeadAttention attn{nullptr};
    torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
    FeedForward ffn{nullptr};

private:
    torch::nn::Dropout dropout_{nullptr};
};
TORCH_MODULE(EncoderLayer);

/// Trainable stand-in for the pretrained text encoder: special-token and role
/// embeddings in input space, input projection to d, N post-norm layers.
class TextEncoderImpl : public torch::nn::Module {
public:
    TextEncoderImpl(const ModelConfig& config);

    /// features [B, T, d_t], partition/special int64 [B, T], mask bool [B, T] -> [B, T, d].
    torch::Tensor forward(const torch::Tensor& features, const torch::Tensor& partition,
                          const torch::Tensor& special, const torch::Tensor& mask);

    torch::Tensor special_embeddings;  // [2, d_t]: [CLS], [SEP]
    torch::Tensor role_embeddings;     // [2, d_t]
    torch::nn::Linear input_proj{nullptr};
    torch::nn::ModuleList layers{nullptr};

private:
    bool use_roles_;
};
TORCH_MODULE(TextEncoder);

/// r = [h_c; h_u; h_c - h_u] from masked means of the context and utterance blocks.
torch::Tensor relation_representation(const torch::Tensor& text_states, const torch::Tensor& partition,
                                      const torch::Tensor& mask);

/// s = sigmoid(w . r + b).
class RelationScorerImpl : public torch::nn::Module {
public:
    explicit RelationScorerImpl(int64_t dim);
    torch::Tensor forward(const torch::Tensor& relation);  // [B, 3d] -> [B]
    torch::nn::Linear linear{nullptr};
};
TORCH_MODULE(RelationScorer);

/// Encoder layer whose feed-forward sublayer is rho * E_con + (1 - rho) * E_dis,
/// rho = sigmoid(router([masked_mean(x); r_m])) computed from the post-attention
/// states. E_dis starts as an exact copy of E_con.
class DualExpertLayerImpl : public torch::nn::Module {
public:
    DualExpertLayerImpl(int64_t dim, int64_t heads, int64_t ffn_dim, double dropout, bool dual);

    struct Output {
        torch::Tensor states;  // [B, T, d]
        torch::Tensor rho;     // [B], undefined without dual experts
    };

    /// `rho_override` ([B] or scalar) replaces the router output when given.
    Output forward(const torch::Tensor& x, const torch::Tensor& mask, const torch::Tensor& relation_guidance,
                   const std::optional<torch::Tensor>& rho_override = std::nullopt);

    /// Router coefficient for the given states: [B].
    torch::Tensor route(const torch::Tensor& states, const torch::Tensor& mask, const torch::Tensor& relation_guidance);
    /// Convex expert mixture; rho is [B] (or scalar) and broadcasts over positions.
    torch::Tensor mix_experts(const torch::Tensor& x, const torch::Tensor& rho);

    bool dual() const { return dual_; }

    MultiHeadAttention attn{nullptr};
    torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
    torch::nn::Linear router{nullptr};
    FeedForward expert_con{nullptr}, expert_dis{nullptr};

private:
    bool dual_;
    torch::nn::Dropout dropout_{nullptr};
};
TORCH_MODULE(DualExpertLayer);

/// Relation-guided encoder for one nonverbal modality.
class NonverbalEncoderImpl : public torch::nn::Module {
public:
    NonverbalEncoderImpl(const ModelConfig& config, Modality modality);

    struct Output {
        torch::Tensor states;  // [B, T, d]
        torch::Tensor rho;     // [B, layers] (empty second dim without dual experts)
        torch::Tensor relation_guidance;  // [B, d]
    };

    Output forward(const torch::Tensor& features, const torch::Tensor& partition, const torch::Tensor& mask,
                   const torch::Tensor& relation);

    /// r_m = W_rel r, reused by every layer.
    torch::Tensor project_relation(const torch::Tensor& relation) { return relation_proj(relation); }

    Modality modality() const { return modality_; }

    torch::Tensor role_embeddings;  // [2, d_m]
    torch::nn::Linear input_proj{nullptr};
    torch::nn::Linear relation_proj{nullptr};
    torch::nn::ModuleList layers{nullptr};

private:
    Modality modality_;
    bool use_roles_;
};
TORCH_MODULE(NonverbalEncoder);

/// Linear decay of the balancing weight: lambda0 * max(0, 1 - epoch / tau_end).
struct BiasSchedule {
    double lambda0 = 1.0;
    int tau_end = 1;
    double operator()(int epoch) const;
};

/// Routing regulariser, batch mean of
///   sum_k BCE(rho_k, sg(s)) + lambda_bias * sum_k (rho_k - 1/2)^2.
/// rho is [B, K], s is [B]; s is detached here.
torch::Tensor gate_loss(const torch::Tensor& rho, const torch::Tensor& s, double lambda_bias);

struct RelationState {
    torch::Tensor relation;  // r [B, 3d]
    torch::Tensor score;     // s [B]
    torch::Tensor guidance_audio, guidance_visual;  // r_a, r_v [B, d] from the primary branch
};

struct StageOneOutput {
    std::array<torch::Tensor, 3> primary;    // H^p per modality
    std::array<torch::Tensor, 3> structure;  // H^s per modality
    RelationState relation;
    torch::Tensor rho_primary;    // [B, N_a + N_v], audio layers first
    torch::Tensor rho_structure;  // [B, N_a + N_v]; equals rho_primary with shared branches
};

/// Text encoded once and shared by both branches; acoustic and visual encoded by a
/// primary and a structure-preserving encoder instance (one shared instance when
/// branches are not independent).
class StageOneImpl : public torch::nn::Module {
public:
    explicit StageOneImpl(const ModelConfig& config);

    /// `score_override` ([B]) replaces s everywhere downstream (gradient checking
    /// holds the stop-gradient target fixed this way).
    StageOneOutput forward(const Batch& batch, const std::optional<torch::Tensor>& score_override = std::nullopt);

    bool shared_branches() const { return !independent_; }

    TextEncoder text{nullptr};
    RelationScorer scorer{nullptr};
    NonverbalEncoder audio_primary{nullptr}, visual_primary{nullptr};
    NonverbalEncoder audio_structure{nullptr}, visual_structure{nullptr};

private:
    bool independent_;
};
TORCH_MODULE(StageOne);

}  // namespace cuci
