#include "cuci/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "cuci/checkpoint.hpp"
#include "cuci/errors.hpp"

namespace cuci {

torch::Tensor total_loss(const torch::Tensor& logits, const torch::Tensor& labels, const torch::Tensor& rho,
                         const torch::Tensor& s, double lambda_bias, double lambda_gate) {
    const auto classes = logits.size(1);
    if (labels.numel() > 0 && (labels.min().item<int64_t>() < 0 || labels.max().item<int64_t>() >= classes))
        throw DataError(fmt::format("label out of range for {} classes", classes));
    auto loss = torch::nn::functional::cross_entropy(logits, labels);
    if (lambda_gate != 0.0) loss = loss + lambda_gate * gate_loss(rho, s, lambda_bias);
    return loss;
}

double cosine_lr(double base, int64_t step, int64_t total_steps) {
    if (total_steps <= 0) return base;
    const auto t = std::clamp<int64_t>(step, 0, total_steps);
    return base * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(total_steps)));
}

ParameterGroups group_parameters(CuciNetImpl& model) {
    static const std::vector<std::string> nonverbal_prefixes{"stage1.audio_", "stage1.visual_"};
    static const std::vector<std::string> rest_prefixes{"stage1.text.", "stage1.scorer.", "cue.",       "guidance.",
                                                        "interaction.", "aggregator.",    "classifier."};
    auto starts = [](const std::string& name, const std::vector<std::string>& prefixes) {
        return std::any_of(prefixes.begin(), prefixes.end(), [&](const auto& p) { return name.rfind(p, 0) == 0; });
    };
    ParameterGroups groups;
    for (const auto& item : model.named_parameters(true)) {
        if (starts(item.key(), nonverbal_prefixes)) {
            groups.nonverbal_names.push_back(item.key());
            groups.nonverbal.push_back(item.value());
        } else if (starts(item.key(), rest_prefixes)) {
            groups.rest_names.push_back(item.key());
            groups.rest.push_back(item.value());
        } else {
            throw ConfigError(fmt::format("parameter '{}' is not assigned to a learning-rate group", item.key()));
        }
    }
    return groups;
}

OptimizerSchedule::OptimizerSchedule(CuciNetImpl& model, double lr_nonverbal, double lr_rest, int64_t total_steps)
    : base_{lr_nonverbal, lr_rest}, current_{lr_nonverbal, lr_rest}, total_steps_(total_steps) {
    auto groups = group_parameters(model);
    auto options = [](double lr) {
        return std::make_unique<torch::optim::AdamOptions>(
            torch::optim::AdamOptions(lr).betas({0.9, 0.999}).eps(1e-8).weight_decay(0.0));
    };
    std::vector<torch::optim::OptimizerParamGroup> param_groups;
    param_groups.emplace_back(groups.nonverbal, options(lr_nonverbal));
    param_groups.emplace_back(groups.rest, options(lr_rest));
    optimizer_ = std::make_unique<torch::optim::Adam>(std::move(param_groups), torch::optim::AdamOptions(lr_rest));
}

void OptimizerSchedule::set_step(int64_t t) {
    auto& groups = optimizer_->param_groups();
    for (std::size_t g = 0; g < 2; ++g) {
        current_[g] = cosine_lr(base_[g], t, total_steps_);
        static_cast<torch::optim::AdamOptions&>(groups[g].options()).lr(current_[g]);
    }
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
    if (patience < 1) throw ConfigError("patience must be >= 1");
}

bool EarlyStopping::update(double score, int epoch) {
    improved_ = best_epoch_ < 0 || score > best_;
    if (improved_) {
        best_ = score;
        best_epoch_ = epoch;
        bad_epochs_ = 0;
        return false;
    }
    return ++bad_epochs_ >= patience_;
}

Trainer::Trainer(const TrainConfig& config, int64_t steps_per_epoch) : config_(config) {
    config_.validate();
    model_ = make_model(config_.model, config_.seed);
    schedule_ = std::make_unique<OptimizerSchedule>(*model_, config_.lr_nonverbal, config_.lr_rest,
                                                    static_cast<int64_t>(config_.max_epochs) * steps_per_epoch);
}

double Trainer::lambda_bias(int epoch) const { return BiasSchedule{config_.lambda_bias0, config_.tau_end}(epoch); }

double Trainer::step(const Batch& batch, int epoch) {
    model_->train();
    schedule_->set_step(step_);
    auto& optimizer = schedule_->optimizer();
    optimizer.zero_grad();
    const auto out = model_->forward(batch);
    const auto rho = out.gate_rho();
    if (!torch::isfinite(out.logits).all().item<bool>() || (rho.numel() > 0 && !torch::isfinite(rho).all().item<bool>()))
        throw NumericalError(fmt::format("non-finite forward pass at step {}", step_));
    const auto loss = total_loss(out.logits, batch.labels, out.gate_rho(), out.stage1.relation.score,
                                 lambda_bias(epoch), config_.lambda_gate);
    const double value = loss.item<double>();
    if (!std::isfinite(value)) throw NumericalError(fmt::format("non-finite training loss at step {}", step_));
    loss.backward();
    optimizer.step();
    ++step_;
    return value;
}

Predictions predict(CuciNetImpl& model, const std::vector<PreparedSample>& samples, int batch_size) {
    const bool was_training = model.is_training();
    model.eval();
    torch::NoGradGuard guard;
    Predictions out;
    std::vector<torch::Tensor> fused, rho_p, rho_s;
    for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
        const auto stop = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<std::size_t> idx(stop - start);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
        const auto batch = collate(samples, idx);
        const auto fwd = model.forward(batch);
        const auto pred = fwd.logits.argmax(1);
        for (int64_t i = 0; i < batch.size(); ++i) {
            out.predicted.push_back(static_cast<int>(pred[i].item<int64_t>()));
            out.labels.push_back(static_cast<int>(batch.labels[i].item<int64_t>()));
        }
        out.ids.insert(out.ids.end(), batch.ids.begin(), batch.ids.end());
        fused.push_back(fwd.aggregation.fused);
        rho_p.push_back(fwd.stage1.rho_primary);
        rho_s.push_back(fwd.stage1.rho_structure);
    }
    if (!fused.empty()) {
        out.fused = torch::cat(fused, 0);
        out.rho_primary = torch::cat(rho_p, 0);
        out.rho_structure = torch::cat(rho_s, 0);
    }
    if (was_training) model.train();
    return out;
}

DatasetBundle prepare_bundle(const DatasetBundle& bundle, const TrainConfig& config) {
    return config.model.ablation.pseudo_context ? make_pseudo_context(bundle) : bundle;
}

void require_compatible(const DatasetBundle& bundle, const ModelConfig& model) {
    const auto& dims = bundle.manifest.dims;
    if (dims.text != model.input_dims.text || dims.audio != model.input_dims.audio ||
        dims.visual != model.input_dims.visual)
        throw SchemaError(fmt::format("data dims ({},{},{}) do not match model input dims ({},{},{})", dims.text,
                                      dims.audio, dims.visual, model.input_dims.text, model.input_dims.audio,
                                      model.input_dims.visual));
    if (bundle.manifest.num_classes != model.num_classes)
        throw SchemaError(fmt::format("data has {} classes, model expects {}", bundle.manifest.num_classes,
                                      model.num_classes));
}

namespace {

std::string history_csv(const std::vector<EpochRecord>& history) {
    std::string out = "epoch,train_loss,val_f1,lr_nonverbal,lr_rest,lambda_bias\n";
    for (const auto& r : history)
        out += fmt::format("{},{:.9g},{:.2f},{:.9g},{:.9g},{:.9g}\n", r.epoch, r.train_loss, r.val_f1, r.lr_nonverbal,
                           r.lr_rest, r.lambda_bias);
    return out;
}

std::string rho_csv(const std::vector<EpochRecord>& history, const ModelConfig& model) {
    std::string out = "epoch,modality,layer,rho_mean\n";
    for (const auto& r : history) {
        for (std::size_t k = 0; k < r.rho_mean.size(); ++k) {
            const bool audio = static_cast<int>(k) < model.audio_layers;
            const auto layer = audio ? k : k - static_cast<std::size_t>(model.audio_layers);
            out += fmt::format("{},{},{},{:.9g}\n", r.epoch, audio ? "a" : "v", layer, r.rho_mean[k]);
        }
    }
    return out;
}

std::vector<double> column_means(const torch::Tensor& rho) {
    std::vector<double> out;
    if (!rho.defined() || rho.size(0) == 0) return out;
    const auto means = rho.to(torch::kDouble).mean(0).contiguous();
    for (int64_t k = 0; k < means.size(0); ++k) out.push_back(means[k].item<double>());
    return out;
}

}  // namespace

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError(fmt::format("cannot write {}", path.string()));
    out << text;
}

MetricsReport evaluate(CuciNetImpl& model, const DatasetBundle& eval_bundle, std::span<const Scope> scopes,
                       const TrainConfig& config, int epoch) {
    const auto samples = prepare_samples(eval_bundle, static_cast<std::size_t>(config.max_len));
    const auto preds = predict(model, samples, config.batch_size);
    const bool needs_subsets = std::any_of(scopes.begin(), scopes.end(), [](Scope s) { return s != Scope::Entire; });
    SubsetAssignment subsets;
    if (needs_subsets) subsets = assign_subsets(eval_bundle);
    else subsets.subset1.assign(eval_bundle.size(), false);
    return scope_report(preds.labels, preds.predicted, subsets, model.config().num_classes, scopes, epoch);
}

RunArtifacts train(const DatasetBundle& bundle_in, const TrainConfig& config, const TrainOptions& options) {
    config.validate();
    require_compatible(bundle_in, config.model);
    const auto bundle = prepare_bundle(bundle_in, config);
    const auto train_bundle = bundle.subset(Split::Train);
    const auto val_bundle = bundle.subset(Split::Val);
    if (train_bundle.size() == 0 || val_bundle.size() == 0)
        throw DataError("training needs non-empty train and val splits");
    const auto max_len = static_cast<std::size_t>(config.max_len);
    const auto train_samples = prepare_samples(train_bundle, max_len);
    const auto val_samples = prepare_samples(val_bundle, max_len);

    const auto batch = static_cast<std::size_t>(config.batch_size);
    const auto steps_per_epoch = static_cast<int64_t>((train_samples.size() + batch - 1) / batch);
    Trainer trainer(config, steps_per_epoch);
    auto& model = trainer.model();

    RunArtifacts run;
    run.config = config;
    EarlyStopping stopping(config.patience);
    ParameterSnapshot best = snapshot_parameters(*model);
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(train_samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const auto stop = std::min(order.size(), start + batch);
            const auto mb = collate(train_samples, std::span<const std::size_t>(order.data() + start, stop - start));
            loss_sum += trainer.step(mb, epoch) * static_cast<double>(stop - start);
        }
        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = loss_sum / static_cast<double>(order.size());
        const auto preds = predict(*model, val_samples, config.batch_size);
        record.val_f1 = compute_metrics(preds.labels, preds.predicted, config.model.num_classes).f1;
        record.rho_mean = column_means(preds.rho_structure);
        record.lr_nonverbal = trainer.schedule().lr_nonverbal();
        record.lr_rest = trainer.schedule().lr_rest();
        record.lambda_bias = trainer.lambda_bias(epoch);
        run.history.push_back(record);
        if (options.on_epoch) options.on_epoch(record);

        const bool stop = stopping.update(record.val_f1, epoch);
        if (stopping.improved()) best = snapshot_parameters(*model);
        if (stop) break;
    }
    restore_parameters(*model, best);
    model->eval();
    run.model = model;
    run.best_epoch = stopping.best_epoch();
    run.best_val_f1 = stopping.best_score();
    run.steps = trainer.steps_taken();

    const auto test_bundle = bundle.subset(Split::Test);
    if (test_bundle.size() > 0)
        run.test_report = evaluate(*model, test_bundle, kScopes, config, run.best_epoch);

    if (options.out_dir) {
        const auto& dir = *options.out_dir;
        std::filesystem::create_directories(dir);
        write_text_file(dir / "config.json", dump_config(config) + "\n");
        write_text_file(dir / "history.csv", history_csv(run.history));
        write_text_file(dir / "metrics.csv", metrics_csv_header() + metrics_csv_rows(run.test_report));
        write_text_file(dir / "rho_telemetry.csv", rho_csv(run.history, config.model));
        save_checkpoint(model, config, dir / "checkpoint.bin");
    }
    return run;
}

MetricsReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const DatasetBundle& bundle,
                                  std::span<const Scope> scopes) {
    auto loaded = load_checkpoint(checkpoint);
    require_compatible(bundle, loaded.config.model);
    const auto test_bundle = prepare_bundle(bundle, loaded.config).subset(Split::Test);
    if (test_bundle.size() == 0) throw DataError("dataset has no test samples");
    return evaluate(*loaded.model, test_bundle, scopes, loaded.config);
}

TrainConfig apply_variant(const TrainConfig& base, const std::string& variant) {
    TrainConfig c = base;
    c.variant = variant;
    c.model.ablation = flags_for_variant(variant);
    return c;
}

AblationResult run_ablation(const DatasetBundle& bundle, const TrainConfig& base, const std::string& variant,
                            const std::optional<std::filesystem::path>& out_dir) {
    const auto variant_config = apply_variant(base, variant);
    const auto full_config = apply_variant(base, "full");
    auto sub = [&](const std::string& name) -> std::optional<std::filesystem::path> {
        if (!out_dir) return std::nullopt;
        return *out_dir / name;
    };
    AblationResult result;
    result.variant = variant;
    result.full = train(bundle, full_config, {sub("full"), {}}).test_report;
    result.ablated =
        variant == "full" ? result.full : train(bundle, variant_config, {sub(variant), {}}).test_report;
    if (out_dir) {
        std::string csv = "variant,scope,precision,recall,f1\n";
        for (const auto* entry : {&result.full, &result.ablated}) {
            const auto& name = entry == &result.full ? std::string("full") : variant;
            for (const auto& r : entry->scopes) {
                if (r.metrics)
                    csv += fmt::format("{},{},{:.2f},{:.2f},{:.2f}\n", name, scope_name(r.scope), r.metrics->precision,
                                       r.metrics->recall, r.metrics->f1);
                else
                    csv += fmt::format("{},{},NA,NA,NA\n", name, scope_name(r.scope));
            }
        }
        write_text_file(*out_dir / "ablation.csv", csv);
    }
    return result;
}

}  // namespace cuci
