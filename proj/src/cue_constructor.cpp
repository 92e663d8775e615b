#include "cuci/cue_constructor.hpp"

#include "cuci/errors.hpp"

namespace cuci {

GateEncoderImpl::GateEncoderImpl(int64_t dim) {
    if (dim % 2 != 0) throw ConfigError("gate encoder needs an even dimension");
    gru = register_module("gru", torch::nn::GRU(torch::nn::GRUOptions(dim, dim / 2).bidirectional(true).batch_first(true)));
    gate_conv = register_module("gate_conv", torch::nn::Conv1d(torch::nn::Conv1dOptions(dim, dim, 3).padding(1)));
}

torch::Tensor GateEncoderImpl::recurrent(const torch::Tensor& states, const torch::Tensor& lengths) {
    namespace rnn = torch::nn::utils::rnn;
    const auto packed = rnn::pack_padded_sequence(states, lengths.to(torch::kCPU), /*batch_first=*/true,
                                                  /*enforce_sorted=*/false);
    const auto out = std::get<0>(gru->forward_with_packed_input(packed));
    return std::get<0>(rnn::pad_packed_sequence(out, /*batch_first=*/true, 0.0, states.size(1)));
}

torch::Tensor GateEncoderImpl::forward(const torch::Tensor& states, const torch::Tensor& lengths) {
    const auto h = recurrent(states, lengths);
    const auto gate = torch::sigmoid(gate_conv(h.transpose(1, 2)).transpose(1, 2));
    const auto positions = torch::arange(states.size(1), lengths.options()).unsqueeze(0);
    const auto valid = positions.lt(lengths.unsqueeze(1)).unsqueeze(-1);
    return torch::where(valid, gate * h, torch::zeros({}, h.options()));
}

FusePoolImpl::FusePoolImpl(int64_t dim) {
    gate = register_module("gate", torch::nn::Linear(2 * dim, dim));
    proj = register_module("proj", torch::nn::Linear(dim, dim));
}

torch::Tensor FusePoolImpl::fuse(const torch::Tensor& original, const torch::Tensor& gated) {
    const auto g = torch::sigmoid(gate(torch::cat({original, gated}, -1)));
    return proj(g * gated + (1 - g) * original);
}

torch::Tensor FusePoolImpl::forward(const torch::Tensor& original, const torch::Tensor& gated,
                                    const torch::Tensor& mask) {
    return seq_max_pool(fuse(original, gated), mask);
}

torch::Tensor pairwise_cue(const torch::Tensor& zi, const torch::Tensor& zj, torch::nn::LayerNorm& norm) {
    const auto stacked = torch::stack({zi, zj}, -2);  // [B, 2, d]
    return norm(stacked).flatten(-2);
}

torch::Tensor global_query(const torch::Tensor& text_states, const torch::Tensor& context_mask,
                           torch::nn::Linear& query_proj) {
    if (context_mask.logical_not().all(-1).any().item<bool>())
        throw PreconditionError("global query: empty context block (substitute a pseudo-context)");
    return query_proj(masked_mean_pool(text_states, context_mask));
}

torch::Tensor global_readout(MultiHeadAttention& attn, const torch::Tensor& query, const torch::Tensor& states,
                             const torch::Tensor& utterance_mask) {
    if (utterance_mask.logical_not().all(-1).any().item<bool>())
        throw PreconditionError("global readout: empty utterance block");
    return attn(query.unsqueeze(1), states, utterance_mask).squeeze(1);
}

torch::Tensor assemble_cue(const std::array<torch::Tensor, 3>& pair_cues, const torch::Tensor& global_projected) {
    return torch::cat({pair_cues[0], pair_cues[1], pair_cues[2], global_projected}, -1);
}

CueConstructorImpl::CueConstructorImpl(const ModelConfig& config) : flags_(config.ablation), dim_(config.d) {
    for (Modality m : kModalities) {
        const auto i = index_of(m);
        const std::string tag(modality_name(m));
        gate_encoders[i] = register_module("gate_enc_" + tag, GateEncoder(config.d));
        fuse_pools[i] = register_module("fuse_" + tag, FusePool(config.d));
        summary_proj[i] = register_module("summary_proj_" + tag, torch::nn::Linear(config.d, config.d));
    }
    const std::array<std::string, 3> pair_names{"ta", "tv", "av"};
    for (std::size_t k = 0; k < 3; ++k)
        pair_norms[k] = register_module("pair_norm_" + pair_names[k],
                                        torch::nn::LayerNorm(torch::nn::LayerNormOptions({config.d})));
    query_proj = register_module("query_proj", torch::nn::Linear(config.d, config.d));
    readout = register_module("readout", MultiHeadAttention(AttentionConfig{config.d, config.heads, config.dropout}));
    global_proj = register_module("global_proj", torch::nn::Linear(3 * config.d, config.d));
}

InterpretationCue CueConstructorImpl::forward(const std::array<torch::Tensor, 3>& structure, const Batch& batch) {
    InterpretationCue cue;
    const int64_t batch_size = structure[0].size(0);
    const auto opts = structure[0].options();

    if (flags_.local_cue) {
        std::array<torch::Tensor, 3> projected;
        for (Modality m : kModalities) {
            const auto i = index_of(m);
            const auto gated = gate_encoders[i](structure[i], batch.lengths[i]);
            cue.summaries[i] = fuse_pools[i](structure[i], gated, batch.mask[i]);
            projected[i] = summary_proj[i](cue.summaries[i]);
        }
        for (std::size_t k = 0; k < kCuePairs.size(); ++k) {
            const auto [mi, mj] = kCuePairs[k];
            cue.pair_cues[k] = flags_.pairs[k]
                                   ? pairwise_cue(projected[index_of(mi)], projected[index_of(mj)], pair_norms[k])
                                   : torch::zeros({batch_size, 2 * dim_}, opts);
        }
    } else {
        for (auto& p : cue.pair_cues) p = torch::zeros({batch_size, 2 * dim_}, opts);
    }

    if (flags_.global_cue) {
        constexpr auto t = index_of(Modality::Text);
        cue.query = global_query(structure[t], batch.context_mask(Modality::Text), query_proj);
        for (Modality m : kModalities) {
            const auto i = index_of(m);
            cue.readouts[i] = global_readout(readout, cue.query, structure[i], batch.utterance_mask(m));
        }
        cue.global_projected = global_proj(torch::cat({cue.readouts[0], cue.readouts[1], cue.readouts[2]}, -1));
    } else {
        cue.global_projected = torch::zeros({batch_size, dim_}, opts);
    }

    cue.cue = assemble_cue(cue.pair_cues, cue.global_projected);
    return cue;
}

}  // namespace cuci
