#include "cuci/batch.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "cuci/errors.hpp"

namespace cuci {

torch::Tensor Batch::context_mask(Modality m) const {
    return mask[index_of(m)].logical_and(partition[index_of(m)].eq(0));
}

torch::Tensor Batch::utterance_mask(Modality m) const {
    return mask[index_of(m)].logical_and(partition[index_of(m)].eq(1));
}

Batch Batch::to(torch::ScalarType dtype) const {
    Batch out = *this;
    for (auto& f : out.features) f = f.to(dtype);
    return out;
}

std::vector<PreparedSample> prepare_samples(const DatasetBundle& bundle, std::size_t max_len) {
    std::vector<PreparedSample> out;
    out.reserve(bundle.samples.size());
    for (const auto& s : bundle.samples) {
        const std::size_t needed = s[Modality::Text].context.rows() + s[Modality::Text].utterance.rows() + kSpecialSlots;
        // Build at the sample's own length; collate pads per batch.
        if (needed > max_len)
            throw PreconditionError(fmt::format("sample '{}': joint length {} exceeds max_len {}", s.id, needed, max_len));
        PreparedSample p;
        p.joint = build_joint_sequence(s, needed);
        p.label = s.label;
        p.id = s.id;
        p.sarcasm = s.sarcasm;
        out.push_back(std::move(p));
    }
    return out;
}

Batch collate(std::span<const PreparedSample* const> samples, torch::ScalarType dtype, int64_t pad_to) {
    if (samples.empty()) throw PreconditionError("collate: empty batch");
    const auto batch = static_cast<int64_t>(samples.size());

    Batch out;
    for (Modality m : kModalities) {
        const auto mi = index_of(m);
        int64_t t_max = pad_to;
        for (const auto* s : samples) t_max = std::max<int64_t>(t_max, static_cast<int64_t>(s->joint[mi].valid_length()));
        const auto dim = static_cast<int64_t>(samples.front()->joint[mi].features.cols());

        auto feats = torch::zeros({batch, t_max, dim}, torch::kFloat);
        auto mask = torch::zeros({batch, t_max}, torch::kBool);
        auto part = torch::ones({batch, t_max}, torch::kLong);
        auto special = torch::zeros({batch, t_max}, torch::kLong);
        auto lengths = torch::zeros({batch}, torch::kLong);
        auto l_acc = lengths.accessor<int64_t, 1>();
        auto f_acc = feats.accessor<float, 3>();
        auto m_acc = mask.accessor<bool, 2>();
        auto p_acc = part.accessor<int64_t, 2>();
        auto s_acc = special.accessor<int64_t, 2>();
        for (int64_t b = 0; b < batch; ++b) {
            const auto& seq = samples[static_cast<std::size_t>(b)]->joint[mi];
            if (static_cast<int64_t>(seq.features.cols()) != dim)
                throw SchemaError(fmt::format("collate: modality {} dimension differs within batch", modality_name(m)));
            const auto len = static_cast<int64_t>(seq.valid_length());
            l_acc[b] = len;
            for (int64_t t = 0; t < len; ++t) {
                const auto row = seq.features.row(static_cast<std::size_t>(t));
                for (int64_t c = 0; c < dim; ++c) f_acc[b][t][c] = row[static_cast<std::size_t>(c)];
                m_acc[b][t] = true;
                p_acc[b][t] = seq.partition[static_cast<std::size_t>(t)];
                if (seq.special[static_cast<std::size_t>(t)] != 0) s_acc[b][t] = t == 0 ? 1 : 2;
            }
        }
        out.features[mi] = dtype == torch::kFloat ? feats : feats.to(dtype);
        out.mask[mi] = mask;
        out.partition[mi] = part;
        out.special[mi] = special;
        out.lengths[mi] = lengths;
    }
    out.labels = torch::empty({batch}, torch::kLong);
    auto label_acc = out.labels.accessor<int64_t, 1>();
    for (int64_t b = 0; b < batch; ++b) {
        const auto* s = samples[static_cast<std::size_t>(b)];
        label_acc[b] = s->label;
        out.ids.push_back(s->id);
        out.sarcasm.push_back(s->sarcasm);
    }
    return out;
}

Batch collate(const std::vector<PreparedSample>& samples, std::span<const std::size_t> indices,
              torch::ScalarType dtype, int64_t pad_to) {
    std::vector<const PreparedSample*> ptrs;
    ptrs.reserve(indices.size());
    for (auto i : indices) ptrs.push_back(&samples.at(i));
    return collate(std::span<const PreparedSample* const>(ptrs), dtype, pad_to);
}

}  // namespace cuci
