#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "cuci/errors.hpp"
#include "cuci/metrics.hpp"
#include "cuci/training.hpp"
#include "test_util.hpp"

using namespace cuci;
using namespace cuci::testing;

namespace {

TrainConfig micro_train(int epochs = 2) {
    auto c = desk_preset();
    c.model = micro_config(1);
    c.max_epochs = epochs;
    c.tau_end = epochs;
    c.batch_size = 8;
    c.seed = 11;
    return c;
}

double lr_of(torch::optim::Adam& opt, std::size_t g) {
    return static_cast<torch::optim::AdamOptions&>(opt.param_groups()[g].options()).lr();
}

}  // namespace

TEST(Loss, CrossEntropyAndGateTerm) {
    const auto logits = torch::zeros({4, 2}, torch::kDouble);
    const auto labels = torch::tensor({0, 1, 1, 0}, torch::kLong);
    const auto rho = torch::full({4, 3}, 0.3, torch::kDouble);
    const auto s = torch::full({4}, 0.8, torch::kDouble);
    EXPECT_NEAR(total_loss(logits, labels, rho, s, 0.5, 0.0).item<double>(), std::log(2.0), 1e-12);

    torch::manual_seed(0);
    const auto l2 = torch::randn({4, 2}, torch::kDouble);
    const double ce = torch::nn::functional::cross_entropy(l2, labels).item<double>();
    EXPECT_EQ(total_loss(l2, labels, rho, s, 0.5, 0.0).item<double>(), ce);
    const double g = gate_loss(rho, s, 0.5).item<double>();
    for (double lam : {0.0, 0.05, 0.1})
        EXPECT_NEAR(total_loss(l2, labels, rho, s, 0.5, lam).item<double>(), ce + lam * g, 1e-12);

    EXPECT_THROW(total_loss(l2, torch::tensor({0, 1, 2, 0}, torch::kLong), rho, s, 0.5, 0.05), DataError);
    EXPECT_THROW(total_loss(l2, torch::tensor({0, -1, 1, 0}, torch::kLong), rho, s, 0.5, 0.05), DataError);
}

TEST(Schedule, CosineEndpointsAndMidpoint) {
    EXPECT_EQ(cosine_lr(3e-3, 0, 100), 3e-3);
    EXPECT_NEAR(cosine_lr(3e-3, 100, 100), 0.0, 1e-18);
    EXPECT_NEAR(cosine_lr(3e-3, 50, 100), 1.5e-3, 1e-12);
    EXPECT_NEAR(cosine_lr(2e-6, 50, 100), 1e-6, 1e-12);
    EXPECT_EQ(cosine_lr(1.0, -5, 10), 1.0);
    EXPECT_NEAR(cosine_lr(1.0, 25, 10), 0.0, 1e-15);
    for (int t = 1; t <= 10; ++t) EXPECT_LE(cosine_lr(1.0, t, 10), cosine_lr(1.0, t - 1, 10));
}

TEST(Schedule, GroupsPartitionParametersAndReceiveTheirRates) {
    auto model = make_model(micro_config(2), 1);
    const auto groups = group_parameters(*model);
    std::set<std::string> nonverbal(groups.nonverbal_names.begin(), groups.nonverbal_names.end());
    std::set<std::string> rest(groups.rest_names.begin(), groups.rest_names.end());
    EXPECT_EQ(nonverbal.size(), groups.nonverbal_names.size());
    EXPECT_EQ(rest.size(), groups.rest_names.size());
    for (const auto& n : nonverbal) {
        EXPECT_EQ(rest.count(n), 0u) << n;
        EXPECT_TRUE(n.rfind("stage1.audio_", 0) == 0 || n.rfind("stage1.visual_", 0) == 0) << n;
    }
    EXPECT_EQ(nonverbal.size() + rest.size(), model->named_parameters().size());
    EXPECT_FALSE(nonverbal.empty());
    EXPECT_TRUE(rest.count("classifier.linear.weight"));

    OptimizerSchedule schedule(*model, 3e-3, 2e-6, 40);
    auto& opt = schedule.optimizer();
    ASSERT_EQ(opt.param_groups().size(), 2u);
    EXPECT_EQ(opt.param_groups()[0].params().size(), groups.nonverbal.size());
    EXPECT_EQ(opt.param_groups()[1].params().size(), groups.rest.size());
    for (int64_t t : {0, 10, 20, 40}) {
        schedule.set_step(t);
        EXPECT_NEAR(lr_of(opt, 0), cosine_lr(3e-3, t, 40), 1e-18);
        EXPECT_NEAR(lr_of(opt, 1), cosine_lr(2e-6, t, 40), 1e-18);
        EXPECT_EQ(schedule.lr_nonverbal(), lr_of(opt, 0));
        EXPECT_EQ(schedule.lr_rest(), lr_of(opt, 1));
    }
    schedule.set_step(20);
    EXPECT_NEAR(lr_of(opt, 0), 1.5e-3, 1e-12);
    EXPECT_NEAR(lr_of(opt, 1), 1e-6, 1e-12);
}

TEST(EarlyStop, MatchesLoopOracle) {
    std::mt19937 rng(3);
    std::uniform_int_distribution<int> score(0, 6);
    for (int trial = 0; trial < 200; ++trial) {
        const int patience = 1 + trial % 4;
        EarlyStopping stop(patience);
        double best = -1;
        int best_epoch = -1, bad = 0;
        for (int epoch = 0; epoch < 30; ++epoch) {
            const double s = score(rng);
            bool expect_stop = false;
            if (best_epoch < 0 || s > best) {
                best = s;
                best_epoch = epoch;
                bad = 0;
            } else {
                expect_stop = ++bad >= patience;
            }
            ASSERT_EQ(stop.update(s, epoch), expect_stop);
            ASSERT_EQ(stop.best_epoch(), best_epoch);
            if (expect_stop) break;
        }
    }
    EXPECT_THROW(EarlyStopping(0), ConfigError);
}

TEST(EarlyStop, StrictImprovementRunsToTheEnd) {
    EarlyStopping stop(10);
    for (int epoch = 0; epoch < 50; ++epoch) {
        EXPECT_FALSE(stop.update(epoch * 0.5, epoch));
        EXPECT_TRUE(stop.improved());
    }
    EarlyStopping flat(10);
    int epochs = 0;
    while (!flat.update(1.0, epochs)) ++epochs;
    EXPECT_EQ(epochs, 10);
    EXPECT_EQ(flat.best_epoch(), 0);
}

TEST(Metrics, MatchBruteForceOracle) {
    std::mt19937 rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const int k = 2 + trial % 4;
        std::uniform_int_distribution<int> cls(0, k - 1);
        std::vector<int> t(1 + trial % 37), p(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) {
            t[i] = cls(rng);
            p[i] = rng() % 3 == 0 ? t[i] : cls(rng);
        }
        double sp = 0, sr = 0, sf = 0;
        int present = 0;
        for (int c = 0; c < k; ++c) {
            int tp = 0, pp = 0, ap = 0;
            for (std::size_t i = 0; i < t.size(); ++i) {
                tp += t[i] == c && p[i] == c;
                pp += p[i] == c;
                ap += t[i] == c;
            }
            if (pp == 0 && ap == 0) continue;
            ++present;
            const double prec = pp ? double(tp) / pp : 0, rec = ap ? double(tp) / ap : 0;
            sp += prec;
            sr += rec;
            sf += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0;
        }
        const auto m = compute_metrics(t, p, k);
        EXPECT_NEAR(m.precision, 100 * sp / present, 1e-9);
        EXPECT_NEAR(m.recall, 100 * sr / present, 1e-9);
        EXPECT_NEAR(m.f1, 100 * sf / present, 1e-9);
        EXPECT_GE(m.f1, 0.0);
        EXPECT_LE(m.f1, 100.0);
    }
}

TEST(Metrics, WorkedExamples) {
    const std::vector<int> t{1, 1, 1, 1, 0, 0}, p{1, 1, 0, 0, 1, 0};
    const auto m = compute_metrics(t, p, 2);
    EXPECT_NEAR(m.positive_f1, 100.0 * 4.0 / 7.0, 1e-9);
    EXPECT_NEAR(m.positive_f1, 57.14, 5e-3);
    const auto perfect = compute_metrics(t, t, 2);
    EXPECT_EQ(perfect.f1, 100.0);
    EXPECT_EQ(perfect.precision, 100.0);
    EXPECT_EQ(perfect.recall, 100.0);
    EXPECT_EQ(perfect.accuracy, 100.0);

    SubsetAssignment none;
    none.subset1.assign(t.size(), false);
    const auto report = scope_report(t, p, none, 2, kScopes, 3);
    ASSERT_NE(report.find(Scope::Subset1), nullptr);
    EXPECT_FALSE(report.find(Scope::Subset1)->metrics.has_value());
    EXPECT_TRUE(report.find(Scope::Subset2)->metrics.has_value());
    EXPECT_NE(metrics_csv_rows(report).find("subset1,NA,NA,NA,3\n"), std::string::npos);
    EXPECT_THROW(parse_scopes("both"), ConfigError);
    EXPECT_EQ(parse_scopes("all").size(), 3u);
}

TEST(Trainer, NonFiniteLossNamesTheStep) {
    const auto config = micro_train();
    Trainer trainer(config, 1);
    auto batch = full_batch(micro_bundle(config.model, 6), torch::kFloat);
    batch.features[0] = batch.features[0].clone();
    batch.features[0][0][0][0] = std::numeric_limits<float>::quiet_NaN();
    try {
        trainer.step(batch, 0);
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos) << e.what();
    }
}

TEST(Trainer, PredictRestoresTrainingFlag) {
    auto model = make_model(micro_config(1), 2);
    const auto samples = prepare_samples(micro_bundle(micro_config(1), 7), 64);
    model->train();
    const auto preds = predict(*model, samples, 3);
    EXPECT_TRUE(model->is_training());
    EXPECT_EQ(preds.predicted.size(), 7u);
    EXPECT_EQ(preds.fused.size(0), 7);
    model->eval();
    predict(*model, samples, 4);
    EXPECT_FALSE(model->is_training());
}

TEST(Training, DeterministicAndWritesArtifacts) {
    const auto config = micro_train(3);
    const auto bundle = micro_bundle(config.model, 40);
    const auto dir = scratch_dir("train");
    const auto a = train(bundle, config, {dir, {}});
    const auto b = train(bundle, config);
    ASSERT_EQ(a.history.size(), 3u);
    ASSERT_EQ(b.history.size(), 3u);
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        EXPECT_NEAR(a.history[e].train_loss, b.history[e].train_loss, 1e-6);
        EXPECT_EQ(a.history[e].val_f1, b.history[e].val_f1);
        EXPECT_TRUE(std::isfinite(a.history[e].train_loss));
    }
    EXPECT_EQ(a.best_epoch, b.best_epoch);
    EXPECT_EQ(a.steps, 3 * 3);  // 24 training samples, batch 8
    // Rates are set before each step, so the last recorded rate is that of step total - 1.
    EXPECT_NEAR(a.history.back().lr_rest, cosine_lr(config.lr_rest, 8, 9), 1e-15);
    EXPECT_NEAR(a.history.front().lr_nonverbal, cosine_lr(config.lr_nonverbal, 2, 9), 1e-15);
    EXPECT_EQ(a.history.back().lambda_bias, (BiasSchedule{config.lambda_bias0, 3}(2)));
    EXPECT_EQ(a.history.front().lambda_bias, config.lambda_bias0);

    for (const char* f : {"config.json", "history.csv", "metrics.csv", "rho_telemetry.csv", "checkpoint.bin"})
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    EXPECT_EQ(parse_config(slurp(dir / "config.json")), config);
    EXPECT_EQ(slurp(dir / "history.csv").rfind("epoch,train_loss,val_f1,lr_nonverbal,lr_rest,lambda_bias\n", 0), 0u);
    EXPECT_EQ(slurp(dir / "metrics.csv").rfind("scope,precision,recall,f1,epoch\n", 0), 0u);

    const auto reloaded = evaluate_checkpoint(dir / "checkpoint.bin", bundle, kScopes);
    ASSERT_TRUE(reloaded.find(Scope::Entire)->metrics);
    EXPECT_EQ(reloaded.find(Scope::Entire)->metrics->f1, a.test_report.find(Scope::Entire)->metrics->f1);
}

TEST(Training, AblationFullRowEqualsPlainTraining) {
    const auto config = micro_train(2);
    const auto bundle = micro_bundle(config.model, 30);
    const auto plain = train(bundle, config);
    const auto dir = scratch_dir("ablate");
    const auto result = run_ablation(bundle, config, "no-global-cue", dir);
    for (Scope s : kScopes) {
        const auto* x = plain.test_report.find(s);
        const auto* y = result.full.find(s);
        ASSERT_EQ(x->metrics.has_value(), y->metrics.has_value());
        if (x->metrics) EXPECT_EQ(x->metrics->f1, y->metrics->f1);
    }
    EXPECT_TRUE(std::filesystem::exists(dir / "ablation.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir / "full" / "checkpoint.bin"));
    EXPECT_TRUE(std::filesystem::exists(dir / "no-global-cue" / "config.json"));
    EXPECT_EQ(slurp(dir / "ablation.csv").rfind("variant,scope,precision,recall,f1\n", 0), 0u);
    EXPECT_THROW(run_ablation(bundle, config, "no-such-variant", std::nullopt), ConfigError);
}

TEST(Training, IncompatibleDataIsRejected) {
    auto config = micro_train(1);
    auto bundle = micro_bundle(config.model, 20);
    config.model.input_dims.audio = 9;
    EXPECT_THROW(train(bundle, config), SchemaError);
}
