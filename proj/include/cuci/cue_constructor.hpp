#pragma once

// Stage 2: local pairwise cues from gated recurrent summaries, global readout
// queried by the textual context, and the concatenated interpretation cue.

#include <array>

#include <torch/torch.h>

#include "cuci/batch.hpp"
#include "cuci/config.hpp"
#include "cuci/primitives.hpp"

namespace cuci {

/// BiGRU (d/2 per direction) over the valid prefix, then sigmoid(conv1d_k3(h)) * h.
/// Padded positions of the output are exactly zero.
class GateEncoderImpl : public torch::nn::Module {
public:
    explicit GateEncoderImpl(int64_t dim);
    /// states [B, T, d], lengths int64 [B] -> [B, T, d].
    torch::Tensor forward(const torch::Tensor& states, const torch::Tensor& lengths);
    /// BiGRU output alone, zero on padding.
    torch::Tensor recurrent(const torch::Tensor& states, const torch::Tensor& lengths);

    torch::nn::GRU gru{nullptr};
    torch::nn::Conv1d gate_conv{nullptr};
};
TORCH_MODULE(GateEncoder);

/// g = sigmoid(W_g [H; H_bar]); z = maxpool_t(W_p(g * H_bar + (1 - g) * H)).
class FusePoolImpl : public torch::nn::Module {
public:
    explicit FusePoolImpl(int64_t dim);
    torch::Tensor fuse(const torch::Tensor& original, const torch::Tensor& gated);
    torch::Tensor forward(const torch::Tensor& original, const torch::Tensor& gated, const torch::Tensor& mask);

    torch::nn::Linear gate{nullptr};
    torch::nn::Linear proj{nullptr};
};
TORCH_MODULE(FusePool);

/// Stack two projected summaries into a 2 x d pair, layer-normalise each slot,
/// flatten row-major to 2d.
torch::Tensor pairwise_cue(const torch::Tensor& zi, const torch::Tensor& zj, torch::nn::LayerNorm& norm);

/// q = W_q * masked_mean(context block of the structure text states).
torch::Tensor global_query(const torch::Tensor& text_states, const torch::Tensor& context_mask,
                           torch::nn::Linear& query_proj);

/// g_m = Attn(q, H_m^u, H_m^u) with the query as a single row.
torch::Tensor global_readout(MultiHeadAttention& attn, const torch::Tensor& query, const torch::Tensor& states,
                             const torch::Tensor& utterance_mask);

inline constexpr std::array<std::pair<Modality, Modality>, 3> kCuePairs{
    std::pair{Modality::Text, Modality::Audio}, std::pair{Modality::Text, Modality::Visual},
    std::pair{Modality::Audio, Modality::Visual}};

struct InterpretationCue {
    std::array<torch::Tensor, 3> pair_cues;  // p_ta, p_tv, p_av: [B, 2d]
    std::array<torch::Tensor, 3> readouts;   // g_t, g_a, g_v: [B, d]
    std::array<torch::Tensor, 3> summaries;  // z_m: [B, d]
    torch::Tensor global_projected;          // g_f: [B, d]
    torch::Tensor query;                     // q: [B, d]
    torch::Tensor cue;                       // u_f = [p_ta; p_tv; p_av; g_f]: [B, 7d]
};

/// Concatenates the cue in fixed order; ablated parts arrive as zeros.
torch::Tensor assemble_cue(const std::array<torch::Tensor, 3>& pair_cues, const torch::Tensor& global_projected);

class CueConstructorImpl : public torch::nn::Module {
public:
    explicit CueConstructorImpl(const ModelConfig& config);

    /// Consumes the structure-preserving streams H^s.
    InterpretationCue forward(const std::array<torch::Tensor, 3>& structure, const Batch& batch);

    std::array<GateEncoder, 3> gate_encoders{nullptr, nullptr, nullptr};
    std::array<FusePool, 3> fuse_pools{nullptr, nullptr, nullptr};
    std::array<torch::nn::Linear, 3> summary_proj{nullptr, nullptr, nullptr};  // W_m
    std::array<torch::nn::LayerNorm, 3> pair_norms{nullptr, nullptr, nullptr};
    torch::nn::Linear query_proj{nullptr};   // W_q
    MultiHeadAttention readout{nullptr};
    torch::nn::Linear global_proj{nullptr};  // W_o

private:
    AblationFlags flags_;
    int64_t dim_;
};
TORCH_MODULE(CueConstructor);

}  // namespace cuci
