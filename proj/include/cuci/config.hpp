#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cuci/data_model.hpp"

namespace cuci {

/// Component switches for the ablation variants. Every switch defaults to the
/// full model; turning one off keeps tensor shapes fixed (zero substitution)
/// so checkpoints stay compatible across variants.
struct AblationFlags {
    bool role_embeddings = true;
    bool dual_expert = true;           // false: single feed-forward path, no routing
    bool independent_branches = true;  // false: primary and structure branches share A/V encoders
    bool local_cue = true;
    bool global_cue = true;
    std::array<bool, 3> pairs{true, true, true};  // (t,a), (t,v), (a,v)
    bool guidance = true;
    bool adaptive_aggregation = true;
    bool pseudo_context = false;  // data-level: context replaced by a copy of the utterance

    friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

/// Registered variant ids, "full" first.
const std::vector<std::string>& variant_ids();
/// Throws ConfigError listing the valid ids when `id` is unknown.
AblationFlags flags_for_variant(std::string_view id);

struct ModelConfig {
    ModalityDims input_dims{16, 8, 8};
    int num_classes = 2;
    int d = 16;
    int heads = 2;
    int ffn_dim = 64;
    int text_layers = 2;
    int audio_layers = 1;
    int visual_layers = 2;
    int interaction_depth = 2;
    double dropout = 0.1;
    /// Initialise the structure branch as an exact copy of the primary branch.
    bool tie_branch_init = false;
    AblationFlags ablation;

    int nonverbal_layers(Modality m) const { return m == Modality::Audio ? audio_layers : visual_layers; }
    /// Routing coefficients per branch per sample (0 without dual experts).
    int rho_per_branch() const { return ablation.dual_expert ? audio_layers + visual_layers : 0; }
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
    std::string preset = "desk";
    std::string variant = "full";
    ModelConfig model;
    double lr_nonverbal = 3e-3;
    double lr_rest = 1e-3;
    double lambda_gate = 0.05;
    double lambda_bias0 = 1.0;
    int tau_end = 20;  // epoch at which the balancing weight reaches zero
    int patience = 10;
    int max_epochs = 20;
    int batch_size = 16;
    int max_len = 64;
    std::uint64_t seed = 0;

    void validate() const;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Published hyper-parameters: d = 192, 12/8/1 encoder layers, 768/81/91 inputs,
/// dropout 0.4, learning rates 3e-3 / 2e-6, lambda_gate 0.05, patience 10.
TrainConfig paper_preset();
/// Laptop-scale defaults used for the synthetic task.
TrainConfig desk_preset();
TrainConfig preset_by_name(std::string_view name);

void to_json(nlohmann::json& j, const AblationFlags& f);
void from_json(const nlohmann::json& j, AblationFlags& f);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
/// Missing keys fall back to the preset named by "preset" (desk when absent);
/// a "variant" key applies that variant's ablation flags.
void from_json(const nlohmann::json& j, TrainConfig& c);

std::string dump_config(const TrainConfig& c);
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);

}  // namespace cuci
