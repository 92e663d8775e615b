#pragma once

// Conversational sample types, dataset files, joint-sequence layout and the
// synthetic context-dependent task. Nothing here depends on libtorch so the
// Python bindings and the tests can use it directly.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cuci {

enum class Modality : std::uint8_t { Text = 0, Audio = 1, Visual = 2 };

inline constexpr std::array<Modality, 3> kModalities{Modality::Text, Modality::Audio,
                                                     Modality::Visual};

constexpr std::size_t index_of(Modality m) { return static_cast<std::size_t>(m); }
std::string_view modality_name(Modality m);  // "t", "a", "v"
Modality parse_modality(std::string_view name);

/// Dense row-major float matrix. Rows are time steps, columns features.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), values_(rows * cols, 0.0f) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<float> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return rows_ == 0; }

    float& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    float operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

    std::span<float> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
    std::span<const float> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

    std::span<const float> values() const { return values_; }
    std::span<float> values() { return values_; }

    bool all_finite() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> values_;
};

struct ModalityFeatures {
    Matrix context;    // T_c x d_m, may have zero rows
    Matrix utterance;  // T_u x d_m, at least one row

    friend bool operator==(const ModalityFeatures&, const ModalityFeatures&) = default;
};

struct ConversationalSample {
    std::string id;
    int label = 0;
    std::optional<int> sarcasm;
    std::array<ModalityFeatures, 3> features;

    ModalityFeatures& operator[](Modality m) { return features[index_of(m)]; }
    const ModalityFeatures& operator[](Modality m) const { return features[index_of(m)]; }

    friend bool operator==(const ConversationalSample&, const ConversationalSample&) = default;
};

struct ModalityDims {
    std::size_t text = 0;
    std::size_t audio = 0;
    std::size_t visual = 0;

    std::size_t operator[](Modality m) const {
        switch (m) {
            case Modality::Text: return text;
            case Modality::Audio: return audio;
            case Modality::Visual: return visual;
        }
        return 0;
    }

    friend bool operator==(const ModalityDims&, const ModalityDims&) = default;
};

enum class Split : std::uint8_t { Train, Val, Test };
std::string_view split_name(Split s);

struct Manifest {
    ModalityDims dims;
    int num_classes = 2;
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
    std::string records = "records.jsonl";

    friend bool operator==(const Manifest&, const Manifest&) = default;
};

/// An ordered, immutable-after-construction collection of samples.
struct DatasetBundle {
    Manifest manifest;
    std::vector<ConversationalSample> samples;
    std::vector<Split> splits;  // parallel to samples

    std::size_t size() const { return samples.size(); }
    /// Samples assigned to `split`, in bundle order.
    DatasetBundle subset(Split split) const;
    /// Checks every type invariant; throws SchemaError / DataError / PreconditionError.
    void validate(bool require_train_val = true) const;
};

/// Throws if `sample` violates a ConversationalSample invariant against `dims`.
void validate_sample(const ConversationalSample& sample, const ModalityDims& dims, int num_classes);

// ---------------------------------------------------------------------------
// Dataset files: manifest.json + records.jsonl.

/// Reads `manifest_path` and the records file it references.
DatasetBundle load_dataset(const std::filesystem::path& manifest_path);
/// Accepts either a manifest path or a directory containing manifest.json.
DatasetBundle load_dataset_dir(const std::filesystem::path& path);
/// Writes manifest.json and the records file into `dir` (created if needed).
void save_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Joint context+utterance sequences.

/// Number of special slots: [CLS], separator after the context, final separator.
inline constexpr std::size_t kSpecialSlots = 3;

struct JointSequence {
    Matrix features;                         // max_len x d_m; special and padding rows are zero
    std::vector<std::uint8_t> partition;     // 0 = [CLS]+context+[SEP], 1 = utterance+[SEP]
    std::vector<std::uint8_t> validity;      // 1 = real position (incl. special slots)
    std::vector<std::uint8_t> special;       // 1 at the three special slots
    std::size_t context_length = 0;          // T_c
    std::size_t utterance_length = 0;        // T_u

    std::size_t valid_length() const { return context_length + utterance_length + kSpecialSlots; }
};

using JointSample = std::array<JointSequence, 3>;

/// Lays out [0; C; 0; U; 0] per modality and pads to `max_len`.
JointSample build_joint_sequence(const ConversationalSample& sample, std::size_t max_len);
JointSequence build_joint_sequence(const ModalityFeatures& features, std::size_t max_len,
                                   Modality modality = Modality::Text);

/// Repeats row i of `word_features` counts[i] times.
Matrix align_word_features(const Matrix& word_features, std::span<const int> counts);

/// Context := deep copy of the utterance, for corpora without dialogue history.
ConversationalSample make_pseudo_context(const ConversationalSample& sample);
DatasetBundle make_pseudo_context(const DatasetBundle& bundle);

/// (sar = 1, sar = 0), order preserved. Every sample must carry a flag.
std::pair<DatasetBundle, DatasetBundle> split_by_sarcasm(const DatasetBundle& bundle);

// ---------------------------------------------------------------------------
// Synthetic incongruity task.

struct SyntheticConfig {
    std::size_t num_samples = 1000;
    ModalityDims dims{16, 8, 8};
    std::size_t len_ctx = 4;   // maximum context length; actual drawn in [ceil(len/2), len]
    std::size_t len_utt = 4;   // maximum utterance length
    int num_classes = 2;
    int num_cues = 2;  // cue categories; label = context cue differs from utterance cue
    double snr = 4.0;
    double val_fraction = 0.1;
    double test_fraction = 0.1;
};

/// Deterministic in `seed`. Text context rows carry the prototype of cue c,
/// audio and visual utterance rows the prototype of cue u; label = (c != u),
/// balanced. Two cues are the polarities +p / -p of one direction per
/// modality, more cues use independent directions. Other rows are unit noise.
DatasetBundle generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

}  // namespace cuci
