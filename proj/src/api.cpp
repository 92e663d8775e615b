#include "cuci/api.hpp"

#include <torch/torch.h>

#include "cuci/checkpoint.hpp"
#include "cuci/training.hpp"

namespace cuci::api {
namespace {

void single_threaded() {
    static const bool once = [] {
        torch::set_num_threads(1);
        return true;
    }();
    (void)once;
}

}  // namespace

DatasetBundle load_data(const std::filesystem::path& path) {
    return std::filesystem::is_directory(path) ? load_dataset_dir(path) : load_dataset(path);
}

DatasetBundle generate(const SyntheticConfig& config, std::uint64_t seed, const std::filesystem::path& out_dir) {
    auto bundle = generate_synthetic(config, seed);
    save_dataset(bundle, out_dir);
    return bundle;
}

TrainSummary train(const TrainConfig& config, const std::filesystem::path& data,
                   const std::optional<std::filesystem::path>& out_dir) {
    single_threaded();
    const auto bundle = load_data(data);
    TrainOptions options;
    options.out_dir = out_dir;
    const auto run = cuci::train(bundle, config, options);
    TrainSummary out;
    out.best_epoch = run.best_epoch;
    out.best_val_f1 = run.best_val_f1;
    out.steps = static_cast<long>(run.steps);
    for (const auto& r : run.history) {
        out.train_loss.push_back(r.train_loss);
        out.val_f1.push_back(r.val_f1);
    }
    out.test = run.test_report;
    return out;
}

MetricsReport evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& data,
                       const std::string& scope) {
    single_threaded();
    const auto scopes = parse_scopes(scope);
    return evaluate_checkpoint(checkpoint, load_data(data), scopes);
}

PredictionSummary predict(const std::filesystem::path& checkpoint, const std::filesystem::path& data) {
    single_threaded();
    auto loaded = load_checkpoint(checkpoint);
    const auto bundle = load_data(data);
    require_compatible(bundle, loaded.config.model);
    const auto samples = prepare_samples(prepare_bundle(bundle, loaded.config),
                                         static_cast<std::size_t>(loaded.config.max_len));
    auto preds = cuci::predict(*loaded.model, samples, loaded.config.batch_size);
    return {std::move(preds.ids), std::move(preds.labels), std::move(preds.predicted)};
}

AblationSummary ablate(const TrainConfig& config, const std::filesystem::path& data, const std::string& variant,
                       const std::optional<std::filesystem::path>& out_dir) {
    single_threaded();
    auto result = run_ablation(load_data(data), config, variant, out_dir);
    return {result.variant, std::move(result.full), std::move(result.ablated)};
}

std::vector<DepthRow> sweep_depth(const TrainConfig& config, const std::filesystem::path& data,
                                  const std::vector<int>& depths, const std::optional<std::filesystem::path>& out_dir) {
    single_threaded();
    return depth_sweep(load_data(data), config, depths, out_dir);
}

RoutingMatrix routing(const std::filesystem::path& checkpoint, const std::filesystem::path& data, Modality modality,
                      int layer, const std::optional<std::filesystem::path>& out_file) {
    single_threaded();
    return export_routing(checkpoint, load_data(data), modality, layer, out_file);
}

std::size_t embeddings(const std::filesystem::path& checkpoint, const std::filesystem::path& data,
                       const std::filesystem::path& out_file) {
    single_threaded();
    return export_embeddings(checkpoint, load_data(data), out_file);
}

std::vector<GradcheckCase> gradcheck(GradcheckLevel level) {
    single_threaded();
    return run_gradcheck_suite(level);
}

}  // namespace cuci::api
