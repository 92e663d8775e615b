#pragma once

// Stage 3: the guidance vector, guidance-conditioned interaction layers with
// gated cross-modal integration, adaptive aggregation and the classifier.

#include <array>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "cuci/config.hpp"
#include "cuci/primitives.hpp"

namespace cuci {

/// Supporting modalities of an anchor, fixed order: t -> (a, v), a -> (t, v), v -> (t, a).
constexpr std::pair<Modality, Modality> supporting_modalities(Modality anchor) {
    switch (anchor) {
        case Modality::Text: return {Modality::Audio, Modality::Visual};
        case Modality::Audio: return {Modality::Text, Modality::Visual};
        case Modality::Visual: return {Modality::Text, Modality::Audio};
    }
    return {Modality::Audio, Modality::Visual};
}

/// G_s = Gamma(u_f) as a one-row sequence [B, 1, d].
class GuidanceProjectionImpl : public torch::nn::Module {
public:
    explicit GuidanceProjectionImpl(int64_t dim);
    torch::Tensor forward(const torch::Tensor& cue);
    torch::nn::Linear linear{nullptr};
};
TORCH_MODULE(GuidanceProjection);

/// H~ = H + Phi(H, G): cross-attention to the guidance token then masked
/// self-attention, each with residual and LayerNorm. Disabled -> H~ = H.
class GuidedUpdateImpl : public torch::nn::Module {
public:
    GuidedUpdateImpl(int64_t dim, int64_t heads, double dropout, bool enabled);
    torch::Tensor forward(const torch::Tensor& stream, const torch::Tensor& mask, const torch::Tensor& guidance);
    torch::Tensor phi(const torch::Tensor& stream, const torch::Tensor& mask, const torch::Tensor& guidance);

    MultiHeadAttention cross{nullptr}, self{nullptr};
    torch::nn::LayerNorm norm_cross{nullptr}, norm_self{nullptr};

private:
    bool enabled_;
    torch::nn::Dropout dropout_{nullptr};
};
TORCH_MODULE(GuidedUpdate);

/// beta = sigmoid(W1 R1 + W2 R2 + b); C = beta * R1 + (1 - beta) * R2.
class GatedIntegrationImpl : public torch::nn::Module {
public:
    explicit GatedIntegrationImpl(int64_t dim);
    struct Output {
        torch::Tensor integrated;  // C
        torch::Tensor gate;        // beta
    };
    Output forward(const torch::Tensor& r1, const torch::Tensor& r2);

    torch::nn::Linear w1{nullptr}, w2{nullptr};
};
TORCH_MODULE(GatedIntegration);

/// H = H~ + Psi(C), Psi = out_proj(LN(C + SA(C))).
class RefineImpl : public torch::nn::Module {
public:
    RefineImpl(int64_t dim, int64_t heads, double dropout);
    torch::Tensor forward(const torch::Tensor& guided, const torch::Tensor& integrated, const torch::Tensor& mask);
    torch::Tensor psi(const torch::Tensor& integrated, const torch::Tensor& mask);

    MultiHeadAttention self{nullptr};
    torch::nn::LayerNorm norm{nullptr};
    torch::nn::Linear out_proj{nullptr};

private:
    torch::nn::Dropout dropout_{nullptr};
};
TORCH_MODULE(Refine);

struct InteractionLayerTrace {
    std::array<torch::Tensor, 3> guided;      // H~_m^l
    std::array<torch::Tensor, 3> gates;       // beta_m^l
    std::array<torch::Tensor, 3> integrated;  // C_m^l
    std::array<torch::Tensor, 3> output;      // H_m^l
};

/// One interaction layer over all three streams.
class InteractionLayerImpl : public torch::nn::Module {
public:
    InteractionLayerImpl(const ModelConfig& config);

    /// Cross-modal responses (R_{m<-m1}, R_{m<-m2}) for anchor m.
    std::pair<torch::Tensor, torch::Tensor> cross_modal_responses(Modality anchor,
                                                                  const std::array<torch::Tensor, 3>& guided,
                                                                  const std::array<torch::Tensor, 3>& masks);

    InteractionLayerTrace forward(const std::array<torch::Tensor, 3>& streams, const std::array<torch::Tensor, 3>& masks,
                                  const torch::Tensor& guidance);

    std::array<GuidedUpdate, 3> guided{nullptr, nullptr, nullptr};
    std::array<std::array<MultiHeadAttention, 2>, 3> cross{{{nullptr, nullptr}, {nullptr, nullptr}, {nullptr, nullptr}}};
    std::array<GatedIntegration, 3> integration{nullptr, nullptr, nullptr};
    std::array<Refine, 3> refine{nullptr, nullptr, nullptr};
};
TORCH_MODULE(InteractionLayer);

struct AggregationResult {
    std::array<torch::Tensor, 3> pooled;  // h_bar_m [B, d]
    torch::Tensor scores;                 // o [B, 3]
    torch::Tensor weights;                // alpha [B, 3]
    torch::Tensor fused;                  // z [B, d]
};

/// alpha = softmax(o_t, o_a, o_v), z = sum_m alpha_m * masked_mean(H_m).
class AggregatorImpl : public torch::nn::Module {
public:
    AggregatorImpl(int64_t dim, bool adaptive);
    AggregationResult forward(const std::array<torch::Tensor, 3>& streams, const std::array<torch::Tensor, 3>& masks);

    std::array<torch::nn::Linear, 3> score{nullptr, nullptr, nullptr};

private:
    bool adaptive_;
};
TORCH_MODULE(Aggregator);

/// Dropout then affine d -> num_classes.
class ClassifierImpl : public torch::nn::Module {
public:
    ClassifierImpl(int64_t dim, int64_t num_classes, double dropout);
    torch::Tensor forward(const torch::Tensor& fused);
    torch::nn::Linear linear{nullptr};

private:
    torch::nn::Dropout dropout_{nullptr};
};
TORCH_MODULE(Classifier);

}  // namespace cuci
