#include "cuci/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include <fmt/format.h>

#include "cuci/errors.hpp"

namespace cuci {

std::string_view modality_name(Modality m) {
    switch (m) {
        case Modality::Text: return "t";
        case Modality::Audio: return "a";
        case Modality::Visual: return "v";
    }
    return "?";
}

Modality parse_modality(std::string_view name) {
    if (name == "t" || name == "text") return Modality::Text;
    if (name == "a" || name == "audio") return Modality::Audio;
    if (name == "v" || name == "visual") return Modality::Visual;
    throw ConfigError(fmt::format("unknown modality '{}' (expected t, a or v)", name));
}

std::string_view split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_)
        throw PreconditionError(fmt::format("matrix storage {} does not match {}x{}",
                                            values_.size(), rows_, cols_));
}

bool Matrix::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](float x) { return std::isfinite(x); });
}

void validate_sample(const ConversationalSample& sample, const ModalityDims& dims, int num_classes) {
    if (sample.label < 0 || sample.label >= num_classes)
        throw SchemaError(fmt::format("sample '{}': label {} outside [0, {})", sample.id,
                                      sample.label, num_classes));
    if (sample.sarcasm && *sample.sarcasm != 0 && *sample.sarcasm != 1)
        throw SchemaError(fmt::format("sample '{}': sar flag must be 0 or 1", sample.id));
    for (Modality m : kModalities) {
        const auto& f = sample[m];
        const std::size_t d = dims[m];
        if ((!f.context.empty() && f.context.cols() != d) || f.utterance.cols() != d)
            throw SchemaError(fmt::format("sample '{}': modality {} has dimension {} but manifest declares {}",
                                          sample.id, modality_name(m),
                                          f.utterance.cols() != d ? f.utterance.cols() : f.context.cols(), d));
        if (f.utterance.rows() == 0)
            throw SchemaError(fmt::format("sample '{}': modality {} has an empty utterance", sample.id,
                                          modality_name(m)));
        if (!f.context.all_finite() || !f.utterance.all_finite())
            throw DataError(fmt::format("sample '{}': non-finite value in modality {}", sample.id,
                                        modality_name(m)));
    }
    // Modalities share one token timeline.
    const auto& t = sample[Modality::Text];
    for (Modality m : {Modality::Audio, Modality::Visual}) {
        const auto& f = sample[m];
        if (f.context.rows() != t.context.rows() || f.utterance.rows() != t.utterance.rows())
            throw SchemaError(fmt::format(
                "sample '{}': modality {} lengths ({}, {}) differ from text ({}, {}); align upstream",
                sample.id, modality_name(m), f.context.rows(), f.utterance.rows(), t.context.rows(),
                t.utterance.rows()));
    }
}

DatasetBundle DatasetBundle::subset(Split split) const {
    DatasetBundle out;
    out.manifest = manifest;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (splits[i] != split) continue;
        out.samples.push_back(samples[i]);
        out.splits.push_back(split);
    }
    return out;
}

void DatasetBundle::validate(bool require_train_val) const {
    if (samples.empty()) throw LoadError("no samples");
    if (splits.size() != samples.size())
        throw PreconditionError("split assignment does not cover every sample");
    std::set<std::string> seen;
    std::array<std::size_t, 3> per_split{};
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (!seen.insert(s.id).second) throw SchemaError(fmt::format("duplicate sample id '{}'", s.id));
        validate_sample(s, manifest.dims, manifest.num_classes);
        ++per_split[static_cast<std::size_t>(splits[i])];
    }
    if (require_train_val && (per_split[0] == 0 || per_split[1] == 0))
        throw SchemaError("train and val splits must be non-empty");
}

// ---------------------------------------------------------------------------

JointSequence build_joint_sequence(const ModalityFeatures& features, std::size_t max_len, Modality modality) {
    const std::size_t tc = features.context.rows();
    const std::size_t tu = features.utterance.rows();
    if (tu == 0)
        throw PreconditionError(fmt::format("modality {}: utterance must have at least one row",
                                            modality_name(modality)));
    const std::size_t valid = tc + tu + kSpecialSlots;
    if (valid > max_len)
        throw PreconditionError(fmt::format("modality {}: joint length {} exceeds max_len {}",
                                            modality_name(modality), valid, max_len));
    const std::size_t d = features.utterance.cols();

    JointSequence seq;
    seq.features = Matrix(max_len, d);
    seq.partition.assign(max_len, 1);
    seq.validity.assign(max_len, 0);
    seq.special.assign(max_len, 0);
    seq.context_length = tc;
    seq.utterance_length = tu;

    for (std::size_t i = 0; i < tc; ++i) std::ranges::copy(features.context.row(i), seq.features.row(1 + i).begin());
    for (std::size_t i = 0; i < tu; ++i)
        std::ranges::copy(features.utterance.row(i), seq.features.row(2 + tc + i).begin());

    for (std::size_t i = 0; i < valid; ++i) seq.validity[i] = 1;
    for (std::size_t i = 0; i <= tc + 1; ++i) seq.partition[i] = 0;
    seq.special[0] = 1;
    seq.special[1 + tc] = 1;
    seq.special[2 + tc + tu] = 1;
    return seq;
}

JointSample build_joint_sequence(const ConversationalSample& sample, std::size_t max_len) {
    JointSample out;
    for (Modality m : kModalities) out[index_of(m)] = build_joint_sequence(sample[m], max_len, m);
    return out;
}

Matrix align_word_features(const Matrix& word_features, std::span<const int> counts) {
    if (counts.size() != word_features.rows())
        throw PreconditionError(fmt::format("{} subword counts for {} words", counts.size(),
                                            word_features.rows()));
    std::size_t total = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] < 1)
            throw PreconditionError(fmt::format("word {} has subword count {} (must be >= 1)", i, counts[i]));
        total += static_cast<std::size_t>(counts[i]);
    }
    Matrix out(total, word_features.cols());
    std::size_t r = 0;
    for (std::size_t i = 0; i < counts.size(); ++i)
        for (int k = 0; k < counts[i]; ++k) std::ranges::copy(word_features.row(i), out.row(r++).begin());
    return out;
}

ConversationalSample make_pseudo_context(const ConversationalSample& sample) {
    ConversationalSample out = sample;
    for (auto& f : out.features) {
        if (f.utterance.empty()) throw PreconditionError(fmt::format("sample '{}' has no utterance", sample.id));
        f.context = f.utterance;
    }
    return out;
}

DatasetBundle make_pseudo_context(const DatasetBundle& bundle) {
    DatasetBundle out;
    out.manifest = bundle.manifest;
    out.splits = bundle.splits;
    out.samples.reserve(bundle.samples.size());
    for (const auto& s : bundle.samples) out.samples.push_back(make_pseudo_context(s));
    return out;
}

std::pair<DatasetBundle, DatasetBundle> split_by_sarcasm(const DatasetBundle& bundle) {
    DatasetBundle sarcastic;
    DatasetBundle literal;
    sarcastic.manifest = literal.manifest = bundle.manifest;
    for (std::size_t i = 0; i < bundle.samples.size(); ++i) {
        const auto& s = bundle.samples[i];
        if (!s.sarcasm) throw PreconditionError(fmt::format("sample '{}' has no sar flag", s.id));
        auto& target = *s.sarcasm == 1 ? sarcastic : literal;
        target.samples.push_back(s);
        target.splits.push_back(bundle.splits[i]);
    }
    return {std::move(sarcastic), std::move(literal)};
}

}  // namespace cuci
