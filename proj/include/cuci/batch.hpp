#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cuci/data_model.hpp"

namespace cuci {

/// Padded mini-batch of joint sequences. Padding is appended after the final
/// separator, so every validity mask is a prefix of ones.
struct Batch {
    std::array<torch::Tensor, 3> features;   // [B, T, d_m]
    std::array<torch::Tensor, 3> mask;       // bool [B, T]
    std::array<torch::Tensor, 3> partition;  // int64 [B, T], 0 context block, 1 utterance block
    std::array<torch::Tensor, 3> special;    // int64 [B, T], 0 none, 1 [CLS], 2 [SEP]
    std::array<torch::Tensor, 3> lengths;    // int64 [B], valid prefix length
    torch::Tensor labels;                    // int64 [B]
    std::vector<std::string> ids;
    std::vector<std::optional<int>> sarcasm;

    int64_t size() const { return labels.size(0); }
    const torch::Tensor& features_of(Modality m) const { return features[index_of(m)]; }
    const torch::Tensor& mask_of(Modality m) const { return mask[index_of(m)]; }
    const torch::Tensor& partition_of(Modality m) const { return partition[index_of(m)]; }
    torch::Tensor context_mask(Modality m) const;
    torch::Tensor utterance_mask(Modality m) const;

    /// Copy with floating tensors cast to `dtype`.
    Batch to(torch::ScalarType dtype) const;
};

/// Joint sequences prepared once per dataset so training epochs only collate.
struct PreparedSample {
    JointSample joint;
    int label = 0;
    std::string id;
    std::optional<int> sarcasm;
};

std::vector<PreparedSample> prepare_samples(const DatasetBundle& bundle, std::size_t max_len);

/// Stacks samples, padded to the longest valid length (or `pad_to` when larger).
Batch collate(std::span<const PreparedSample* const> samples, torch::ScalarType dtype = torch::kFloat,
              int64_t pad_to = 0);
Batch collate(const std::vector<PreparedSample>& samples, std::span<const std::size_t> indices,
              torch::ScalarType dtype = torch::kFloat, int64_t pad_to = 0);

}  // namespace cuci
