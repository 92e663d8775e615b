#include "cuci/analysis.hpp"

#include <fmt/format.h>

#include "cuci/checkpoint.hpp"
#include "cuci/errors.hpp"
#include "cuci/training.hpp"

namespace cuci {

void RoutingAccumulator::add(bool sarcastic, double rho) {
    const int row = sarcastic ? 0 : 1;
    sum_[row] += rho;
    ++count_[row];
}

RoutingMatrix RoutingAccumulator::matrix() const {
    RoutingMatrix out;
    for (int row = 0; row < 2; ++row) {
        if (count_[row] == 0)
            throw DataError(fmt::format("routing matrix: no samples in subset {}", row == 0 ? "S" : "NS"));
        const double con = sum_[row] / static_cast<double>(count_[row]);
        out.m[row] = {con, 1.0 - con};
    }
    return out;
}

double consistency_score(const RoutingMatrix& matrix) { return (matrix.m[0][0] + matrix.m[1][1]) / 2.0; }

RoutingMatrix routing_matrix(CuciNetImpl& model, const DatasetBundle& bundle, Modality modality, int layer,
                             int batch_size, int max_len) {
    const auto& config = model.config();
    if (modality == Modality::Text) throw ConfigError("routing is defined for audio and visual only");
    if (!config.ablation.dual_expert) throw ConfigError("model has no dual-expert routing");
    const int layers = config.nonverbal_layers(modality);
    if (layer < 0 || layer >= layers)
        throw ConfigError(fmt::format("layer {} out of range for {} layers of modality {}", layer, layers,
                                      modality_name(modality)));
    const auto subsets = assign_subsets(bundle);
    const auto samples = prepare_samples(bundle, static_cast<std::size_t>(max_len));
    const auto preds = predict(model, samples, batch_size);
    const int column = (modality == Modality::Audio ? 0 : config.audio_layers) + layer;
    const auto rho = preds.rho_structure.select(1, column).to(torch::kDouble).contiguous();
    RoutingAccumulator acc;
    for (std::size_t i = 0; i < samples.size(); ++i) acc.add(subsets.subset1[i], rho[static_cast<int64_t>(i)].item<double>());
    auto out = acc.matrix();
    out.label_proxy = subsets.label_proxy;
    return out;
}

std::string routing_csv(const RoutingMatrix& matrix) {
    std::string out = fmt::format("{},con,dis,consistency\n", matrix.label_proxy ? "subset(label_proxy)" : "subset");
    const double score = consistency_score(matrix);
    out += fmt::format("S,{:.9g},{:.9g},{:.9g}\n", matrix.m[0][0], matrix.m[0][1], score);
    out += fmt::format("NS,{:.9g},{:.9g},{:.9g}\n", matrix.m[1][0], matrix.m[1][1], score);
    return out;
}

RoutingMatrix export_routing(const std::filesystem::path& checkpoint, const DatasetBundle& bundle, Modality modality,
                             int layer, const std::optional<std::filesystem::path>& out_file) {
    auto loaded = load_checkpoint(checkpoint);
    require_compatible(bundle, loaded.config.model);
    const auto data = prepare_bundle(bundle, loaded.config);
    const auto matrix =
        routing_matrix(*loaded.model, data, modality, layer, loaded.config.batch_size, loaded.config.max_len);
    if (out_file) write_text_file(*out_file, routing_csv(matrix));
    return matrix;
}

std::string depth_sweep_csv(std::span<const DepthRow> rows) {
    std::string out = "depth,scope,f1\n";
    for (const auto& r : rows) {
        if (r.f1) out += fmt::format("{},{},{:.2f}\n", r.depth, scope_name(r.scope), *r.f1);
        else out += fmt::format("{},{},NA\n", r.depth, scope_name(r.scope));
    }
    return out;
}

std::vector<DepthRow> depth_sweep(const DatasetBundle& bundle, const TrainConfig& base, std::span<const int> depths,
                                  const std::optional<std::filesystem::path>& out_dir) {
    if (depths.empty()) throw ConfigError("depth sweep needs at least one depth");
    for (int d : depths)
        if (d < 0) throw ConfigError(fmt::format("negative interaction depth {}", d));
    std::vector<DepthRow> rows;
    for (int depth : depths) {
        TrainConfig config = base;
        config.model.interaction_depth = depth;
        TrainOptions options;
        if (out_dir) options.out_dir = *out_dir / fmt::format("depth_{}", depth);
        RunArtifacts run;
        try {
            run = train(bundle, config, options);
        } catch (const NumericalError& e) {
            throw NumericalError(fmt::format("depth {}: {}", depth, e.what()));
        } catch (const DataError& e) {
            throw DataError(fmt::format("depth {}: {}", depth, e.what()));
        } catch (const ConfigError& e) {
            throw ConfigError(fmt::format("depth {}: {}", depth, e.what()));
        }
        for (Scope scope : kScopes) {
            DepthRow row{depth, scope, std::nullopt};
            if (const auto* r = run.test_report.find(scope); r != nullptr && r->metrics) row.f1 = r->metrics->f1;
            rows.push_back(row);
        }
    }
    if (out_dir) write_text_file(*out_dir / "depth_sweep.csv", depth_sweep_csv(rows));
    return rows;
}

std::string embeddings_csv(CuciNetImpl& model, const DatasetBundle& bundle, int batch_size, int max_len) {
    const auto samples = prepare_samples(bundle, static_cast<std::size_t>(max_len));
    const auto preds = predict(model, samples, batch_size);
    const int64_t dim = model.config().d;
    std::string out = "id,label";
    for (int64_t k = 0; k < dim; ++k) out += fmt::format(",z{}", k);
    out += '\n';
    const auto z = preds.fused.to(torch::kFloat).contiguous();
    const float* data = z.data_ptr<float>();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        out += fmt::format("{},{}", preds.ids[i], preds.labels[i]);
        for (int64_t k = 0; k < dim; ++k) out += fmt::format(",{:.9g}", data[static_cast<int64_t>(i) * dim + k]);
        out += '\n';
    }
    return out;
}

std::size_t export_embeddings(const std::filesystem::path& checkpoint, const DatasetBundle& bundle,
                              const std::filesystem::path& out_file) {
    auto loaded = load_checkpoint(checkpoint);
    require_compatible(bundle, loaded.config.model);
    const auto data = prepare_bundle(bundle, loaded.config);
    write_text_file(out_file, embeddings_csv(*loaded.model, data, loaded.config.batch_size, loaded.config.max_len));
    return data.size();
}

}  // namespace cuci
