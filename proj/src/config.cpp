#include "cuci/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "cuci/errors.hpp"

namespace cuci {

using nlohmann::json;

const std::vector<std::string>& variant_ids() {
    static const std::vector<std::string> ids{
        "full",        "no-role-emb", "no-dual-expert", "shared-branches",     "no-local-cue",
        "no-global-cue", "pair-ta-tv", "pair-ta-av",     "pair-tv-av",          "no-guidance",
        "uniform-aggregation", "pseudo-context"};
    return ids;
}

AblationFlags flags_for_variant(std::string_view id) {
    AblationFlags f;
    if (id == "full") return f;
    if (id == "no-role-emb") f.role_embeddings = false;
    else if (id == "no-dual-expert") f.dual_expert = false;
    else if (id == "shared-branches") f.independent_branches = false;
    else if (id == "no-local-cue") f.local_cue = false;
    else if (id == "no-global-cue") f.global_cue = false;
    else if (id == "pair-ta-tv") f.pairs = {true, true, false};
    else if (id == "pair-ta-av") f.pairs = {true, false, true};
    else if (id == "pair-tv-av") f.pairs = {false, true, true};
    else if (id == "no-guidance") f.guidance = false;
    else if (id == "uniform-aggregation") f.adaptive_aggregation = false;
    else if (id == "pseudo-context") f.pseudo_context = true;
    else
        throw ConfigError(fmt::format("unknown variant '{}'; valid ids: {}", id, fmt::join(variant_ids(), ", ")));
    return f;
}

void ModelConfig::validate() const {
    if (d <= 0 || heads <= 0 || d % heads != 0)
        throw ConfigError(fmt::format("model dim {} must be a positive multiple of heads {}", d, heads));
    if (d % 2 != 0) throw ConfigError("model dim must be even (bidirectional GRU halves)");
    if (ffn_dim <= 0) throw ConfigError("ffn_dim must be positive");
    if (text_layers < 0 || audio_layers < 0 || visual_layers < 0 || interaction_depth < 0)
        throw ConfigError("layer counts must be non-negative");
    if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (input_dims.text == 0 || input_dims.audio == 0 || input_dims.visual == 0)
        throw ConfigError("input dims must be positive");
}

void TrainConfig::validate() const {
    model.validate();
    if (!(lr_nonverbal > 0.0) || !(lr_rest > 0.0)) throw ConfigError("learning rates must be positive");
    if (lambda_gate < 0.0 || lambda_bias0 < 0.0) throw ConfigError("loss weights must be non-negative");
    if (patience < 1) throw ConfigError("patience must be at least 1");
    if (max_epochs < 1 || batch_size < 1) throw ConfigError("max_epochs and batch_size must be positive");
    if (tau_end < 1) throw ConfigError("tau_end must be positive");
    if (max_len < 4) throw ConfigError("max_len must leave room for the special slots");
}

TrainConfig paper_preset() {
    TrainConfig c;
    c.preset = "paper";
    c.model.input_dims = {768, 81, 91};
    c.model.d = 192;
    c.model.heads = 4;
    c.model.ffn_dim = 4 * 192;
    c.model.text_layers = 12;
    c.model.visual_layers = 8;
    c.model.audio_layers = 1;
    c.model.interaction_depth = 2;
    c.model.dropout = 0.4;
    c.lr_nonverbal = 3e-3;
    c.lr_rest = 2e-6;
    c.lambda_gate = 0.05;
    c.lambda_bias0 = 1.0;
    c.patience = 10;
    c.max_epochs = 100;
    c.tau_end = 100;
    c.batch_size = 16;
    c.max_len = 512;
    return c;
}

TrainConfig desk_preset() {
    TrainConfig c;
    c.preset = "desk";
    return c;
}

TrainConfig preset_by_name(std::string_view name) {
    if (name == "paper") return paper_preset();
    if (name == "desk") return desk_preset();
    throw ConfigError(fmt::format("unknown preset '{}' (expected paper or desk)", name));
}

void to_json(json& j, const AblationFlags& f) {
    j = json{{"role_embeddings", f.role_embeddings},
             {"dual_expert", f.dual_expert},
             {"independent_branches", f.independent_branches},
             {"local_cue", f.local_cue},
             {"global_cue", f.global_cue},
             {"pair_ta", f.pairs[0]},
             {"pair_tv", f.pairs[1]},
             {"pair_av", f.pairs[2]},
             {"guidance", f.guidance},
             {"adaptive_aggregation", f.adaptive_aggregation},
             {"pseudo_context", f.pseudo_context}};
}

static void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
    if (!j.is_object()) throw ConfigError(fmt::format("config section '{}' must be an object", where));
    for (const auto& item : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
            throw ConfigError(fmt::format("unknown config key '{}' in section '{}'", item.key(), where));
    }
}

void from_json(const json& j, AblationFlags& f) {
    reject_unknown_keys(j,
                        {"role_embeddings", "dual_expert", "independent_branches", "local_cue", "global_cue", "pair_ta",
                         "pair_tv", "pair_av", "guidance", "adaptive_aggregation", "pseudo_context"},
                        "model.ablation");
    f.role_embeddings = j.value("role_embeddings", f.role_embeddings);
    f.dual_expert = j.value("dual_expert", f.dual_expert);
    f.independent_branches = j.value("independent_branches", f.independent_branches);
    f.local_cue = j.value("local_cue", f.local_cue);
    f.global_cue = j.value("global_cue", f.global_cue);
    f.pairs[0] = j.value("pair_ta", f.pairs[0]);
    f.pairs[1] = j.value("pair_tv", f.pairs[1]);
    f.pairs[2] = j.value("pair_av", f.pairs[2]);
    f.guidance = j.value("guidance", f.guidance);
    f.adaptive_aggregation = j.value("adaptive_aggregation", f.adaptive_aggregation);
    f.pseudo_context = j.value("pseudo_context", f.pseudo_context);
}

void to_json(json& j, const ModelConfig& c) {
    j = json{{"input_dims", {{"t", c.input_dims.text}, {"a", c.input_dims.audio}, {"v", c.input_dims.visual}}},
             {"num_classes", c.num_classes},
             {"d", c.d},
             {"heads", c.heads},
             {"ffn_dim", c.ffn_dim},
             {"text_layers", c.text_layers},
             {"audio_layers", c.audio_layers},
             {"visual_layers", c.visual_layers},
             {"interaction_depth", c.interaction_depth},
             {"dropout", c.dropout},
             {"tie_branch_init", c.tie_branch_init},
             {"ablation", c.ablation}};
}

void from_json(const json& j, ModelConfig& c) {
    reject_unknown_keys(j,
                        {"input_dims", "num_classes", "d", "heads", "ffn_dim", "text_layers", "audio_layers",
                         "visual_layers", "interaction_depth", "dropout", "tie_branch_init", "ablation"},
                        "model");
    if (j.contains("input_dims")) {
        const auto& dims = j["input_dims"];
        reject_unknown_keys(dims, {"t", "a", "v"}, "model.input_dims");
        c.input_dims.text = dims.value("t", c.input_dims.text);
        c.input_dims.audio = dims.value("a", c.input_dims.audio);
        c.input_dims.visual = dims.value("v", c.input_dims.visual);
    }
    c.num_classes = j.value("num_classes", c.num_classes);
    c.d = j.value("d", c.d);
    c.heads = j.value("heads", c.heads);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.text_layers = j.value("text_layers", c.text_layers);
    c.audio_layers = j.value("audio_layers", c.audio_layers);
    c.visual_layers = j.value("visual_layers", c.visual_layers);
    c.interaction_depth = j.value("interaction_depth", c.interaction_depth);
    c.dropout = j.value("dropout", c.dropout);
    c.tie_branch_init = j.value("tie_branch_init", c.tie_branch_init);
    if (j.contains("ablation")) from_json(j["ablation"], c.ablation);
}

void to_json(json& j, const TrainConfig& c) {
    j = json{{"preset", c.preset},
             {"variant", c.variant},
             {"model", c.model},
             {"train",
              {{"lr_nonverbal", c.lr_nonverbal},
               {"lr_rest", c.lr_rest},
               {"lambda_gate", c.lambda_gate},
               {"lambda_bias0", c.lambda_bias0},
               {"tau_end", c.tau_end},
               {"patience", c.patience},
               {"max_epochs", c.max_epochs},
               {"batch_size", c.batch_size},
               {"max_len", c.max_len},
               {"seed", c.seed}}}};
}

void from_json(const json& j, TrainConfig& c) {
    reject_unknown_keys(j, {"preset", "variant", "model", "train"}, "<root>");
    c = preset_by_name(j.value("preset", std::string("desk")));
    if (j.contains("variant")) {
        c.variant = j["variant"].get<std::string>();
        c.model.ablation = flags_for_variant(c.variant);
    }
    if (j.contains("model")) from_json(j["model"], c.model);
    if (j.contains("train")) {
        const auto& t = j["train"];
        reject_unknown_keys(t,
                            {"lr_nonverbal", "lr_rest", "lambda_gate", "lambda_bias0", "tau_end", "patience",
                             "max_epochs", "batch_size", "max_len", "seed"},
                            "train");
        c.lr_nonverbal = t.value("lr_nonverbal", c.lr_nonverbal);
        c.lr_rest = t.value("lr_rest", c.lr_rest);
        c.lambda_gate = t.value("lambda_gate", c.lambda_gate);
        c.lambda_bias0 = t.value("lambda_bias0", c.lambda_bias0);
        c.tau_end = t.value("tau_end", c.tau_end);
        c.patience = t.value("patience", c.patience);
        c.max_epochs = t.value("max_epochs", c.max_epochs);
        c.batch_size = t.value("batch_size", c.batch_size);
        c.max_len = t.value("max_len", c.max_len);
        c.seed = t.value("seed", c.seed);
    }
}

std::string dump_config(const TrainConfig& c) { return json(c).dump(2); }

TrainConfig parse_config(std::string_view text) {
    TrainConfig c;
    try {
        from_json(json::parse(text), c);
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("malformed config: {}", e.what()));
    }
    c.validate();
    return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open config {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace cuci
