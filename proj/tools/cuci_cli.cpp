#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cuci/api.hpp"
#include "cuci/errors.hpp"

namespace {

using cuci::ExitCode;

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw cuci::ConfigError(fmt::format("expected a comma-separated integer list, got '{}'", text));
        }
    }
    return out;
}

void print_report(const cuci::MetricsReport& report) {
    std::cout << cuci::metrics_csv_header() << cuci::metrics_csv_rows(report);
}

cuci::TrainConfig load_config_with_seed(const std::string& path, const std::optional<std::uint64_t>& seed) {
    auto config = cuci::load_config(path);
    if (seed) config.seed = *seed;
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Context-dependent multimodal classification toolkit"};
    app.require_subcommand(1);

    // gen-synth
    auto* gen = app.add_subcommand("gen-synth", "Write a synthetic incongruity dataset");
    std::string gen_out, gen_dims;
    std::size_t gen_n = 0;
    std::uint64_t gen_seed = 0;
    double gen_snr = 4.0;
    std::size_t gen_len_ctx = 4, gen_len_utt = 4;
    int gen_cues = 2;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--n", gen_n, "Number of samples")->required();
    gen->add_option("--seed", gen_seed, "Random seed")->required();
    gen->add_option("--snr", gen_snr, "Signal-to-noise ratio")->required();
    gen->add_option("--dims", gen_dims, "Feature dims dt,da,dv");
    gen->add_option("--len-ctx", gen_len_ctx, "Maximum context length");
    gen->add_option("--len-utt", gen_len_utt, "Maximum utterance length");
    gen->add_option("--num-cues", gen_cues, "Number of cue categories");

    // train
    auto* train = app.add_subcommand("train", "Train one model");
    std::string train_config, train_data, train_out;
    std::optional<std::uint64_t> train_seed;
    train->add_option("--config", train_config, "Config JSON")->required();
    train->add_option("--data", train_data, "Dataset directory")->required();
    train->add_option("--out", train_out, "Run directory")->required();
    train->add_option("--seed", train_seed, "Override the config seed");

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
    std::string eval_ckpt, eval_data, eval_scope = "all";
    eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
    eval->add_option("--data", eval_data, "Dataset directory")->required();
    eval->add_option("--scope", eval_scope, "entire|subset1|subset2|all")
        ->check(CLI::IsMember({"entire", "subset1", "subset2", "all"}));

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Train the full model and one ablation variant");
    std::string ab_config, ab_data, ab_variant, ab_out;
    ablate->add_option("--config", ab_config, "Config JSON")->required();
    ablate->add_option("--data", ab_data, "Dataset directory")->required();
    ablate->add_option("--variant", ab_variant, "Variant id")->required();
    ablate->add_option("--out", ab_out, "Output directory")->required();

    // sweep-depth
    auto* sweep = app.add_subcommand("sweep-depth", "Train one model per interaction depth");
    std::string sw_config, sw_data, sw_depths, sw_out;
    sweep->add_option("--config", sw_config, "Config JSON")->required();
    sweep->add_option("--data", sw_data, "Dataset directory")->required();
    sweep->add_option("--depths", sw_depths, "Comma-separated depths")->required();
    sweep->add_option("--out", sw_out, "Output directory")->required();

    // export-routing
    auto* routing = app.add_subcommand("export-routing", "Write the subset-by-expert routing matrix");
    std::string rt_ckpt, rt_data, rt_modality, rt_out;
    int rt_layer = 0;
    routing->add_option("--checkpoint", rt_ckpt, "Checkpoint file")->required();
    routing->add_option("--data", rt_data, "Dataset directory")->required();
    routing->add_option("--modality", rt_modality, "a|v")->required()->check(CLI::IsMember({"a", "v"}));
    routing->add_option("--layer", rt_layer, "Layer index")->required();
    routing->add_option("--out", rt_out, "Output CSV")->required();

    // export-embeddings
    auto* emb = app.add_subcommand("export-embeddings", "Write the fused representation of every sample");
    std::string em_ckpt, em_data, em_out;
    emb->add_option("--checkpoint", em_ckpt, "Checkpoint file")->required();
    emb->add_option("--data", em_data, "Dataset directory")->required();
    emb->add_option("--out", em_out, "Output CSV")->required();

    // gradcheck
    auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
    std::string gc_level = "unit";
    grad->add_option("--level", gc_level, "unit|full")->check(CLI::IsMember({"unit", "full"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ExitCode::Usage);
    }

    try {
        if (*gen) {
            cuci::SyntheticConfig config;
            config.num_samples = gen_n;
            config.snr = gen_snr;
            config.len_ctx = gen_len_ctx;
            config.len_utt = gen_len_utt;
            config.num_cues = gen_cues;
            if (!gen_dims.empty()) {
                const auto dims = parse_int_list(gen_dims);
                if (dims.size() != 3 || dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
                    throw cuci::ConfigError("--dims expects three positive integers dt,da,dv");
                config.dims = {static_cast<std::size_t>(dims[0]), static_cast<std::size_t>(dims[1]),
                               static_cast<std::size_t>(dims[2])};
            }
            const auto bundle = cuci::api::generate(config, gen_seed, gen_out);
            fmt::print("wrote {} samples to {}\n", bundle.size(), gen_out);
        } else if (*train) {
            const auto config = load_config_with_seed(train_config, train_seed);
            const auto summary = cuci::api::train(config, train_data, train_out);
            fmt::print(stderr, "best epoch {} (val f1 {:.2f}), {} steps\n", summary.best_epoch, summary.best_val_f1,
                       summary.steps);
            print_report(summary.test);
        } else if (*eval) {
            print_report(cuci::api::evaluate(eval_ckpt, eval_data, eval_scope));
        } else if (*ablate) {
            const auto config = cuci::load_config(ab_config);
            const auto result = cuci::api::ablate(config, ab_data, ab_variant, ab_out);
            fmt::print("full\n");
            print_report(result.full);
            fmt::print("{}\n", result.variant);
            print_report(result.ablated);
        } else if (*sweep) {
            const auto config = cuci::load_config(sw_config);
            const auto rows = cuci::api::sweep_depth(config, sw_data, parse_int_list(sw_depths), sw_out);
            std::cout << cuci::depth_sweep_csv(rows);
        } else if (*routing) {
            const auto matrix =
                cuci::api::routing(rt_ckpt, rt_data, cuci::parse_modality(rt_modality), rt_layer, rt_out);
            std::cout << cuci::routing_csv(matrix);
        } else if (*emb) {
            const auto n = cuci::api::embeddings(em_ckpt, em_data, em_out);
            fmt::print("wrote {} embeddings to {}\n", n, em_out);
        } else if (*grad) {
            const auto cases = cuci::api::gradcheck(cuci::parse_gradcheck_level(gc_level));
            bool ok = true;
            for (const auto& c : cases) {
                fmt::print("{:<20} max_rel_err={:.3e} tol={:.0e} entries={} {}\n", c.block, c.max_relative_error,
                           c.tolerance, c.entries, c.passed ? "PASS" : "FAIL");
                if (!c.passed) fmt::print("  worst entry: {}\n", c.worst_entry);
                ok = ok && c.passed;
            }
            if (!ok) return static_cast<int>(ExitCode::Numerical);
        }
    } catch (const cuci::Error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return static_cast<int>(cuci::exit_code_for(e));
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return static_cast<int>(ExitCode::Numerical);
    }
    return 0;
}
