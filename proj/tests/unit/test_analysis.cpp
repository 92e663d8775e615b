#include <random>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "cuci/analysis.hpp"
#include "cuci/checkpoint.hpp"
#include "cuci/errors.hpp"
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
    c.seed = 13;
    return c;
}

}  // namespace

TEST(Routing, WorkedExamples) {
    RoutingAccumulator half;
    for (int i = 0; i < 4; ++i) half.add(i % 2 == 0, 0.5);
    const auto m = half.matrix();
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) EXPECT_EQ(m(r, c), 0.5);
    EXPECT_EQ(consistency_score(m), 0.5);

    RoutingAccumulator split;
    split.add(true, 0.9);
    split.add(false, 0.1);
    const auto s = split.matrix();
    EXPECT_NEAR(s(0, 0), 0.9, 1e-15);
    EXPECT_NEAR(s(0, 1), 0.1, 1e-15);
    EXPECT_NEAR(s(1, 0), 0.1, 1e-15);
    EXPECT_NEAR(s(1, 1), 0.9, 1e-15);
    EXPECT_NEAR(consistency_score(s), 0.9, 1e-15);

    RoutingAccumulator ideal;
    ideal.add(true, 1.0);
    ideal.add(false, 0.0);
    EXPECT_EQ(consistency_score(ideal.matrix()), 1.0);
}

TEST(Routing, AccumulationOracleAndRowSums) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    RoutingAccumulator acc;
    double sum[2] = {0, 0};
    int count[2] = {0, 0};
    for (int i = 0; i < 500; ++i) {
        const bool sar = u(rng) < 0.3;
        const double rho = u(rng);
        acc.add(sar, rho);
        sum[sar ? 0 : 1] += rho;
        ++count[sar ? 0 : 1];
    }
    const auto m = acc.matrix();
    for (int r = 0; r < 2; ++r) {
        EXPECT_NEAR(m(r, 0), sum[r] / count[r], 1e-9);
        EXPECT_NEAR(m(r, 1), 1.0 - sum[r] / count[r], 1e-9);
        EXPECT_NEAR(m(r, 0) + m(r, 1), 1.0, 1e-12);
    }
}

TEST(Routing, EmptySubsetIsADataError) {
    RoutingAccumulator acc;
    acc.add(true, 0.4);
    EXPECT_THROW(acc.matrix(), DataError);
}

TEST(Routing, ModelMatrixMatchesPerSampleOracle) {
    const auto config = micro_config(1);
    auto model = make_model(config, 6);
    model->eval();
    const auto bundle = micro_bundle(config, 12);
    const auto samples = prepare_samples(bundle, 64);
    for (int layer = 0; layer < config.visual_layers; ++layer) {
        const auto m = routing_matrix(*model, bundle, Modality::Visual, layer, 5, 64);
        EXPECT_TRUE(m.label_proxy);
        double sum[2] = {0, 0};
        int count[2] = {0, 0};
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const std::vector<std::size_t> idx{i};
            torch::NoGradGuard ng;
            const auto out = model(collate(samples, idx));
            const double rho = out.stage1.rho_structure[0][config.audio_layers + layer].item<double>();
            const int row = bundle.samples[i].label == 1 ? 0 : 1;
            sum[row] += rho;
            ++count[row];
        }
        for (int r = 0; r < 2; ++r) EXPECT_NEAR(m(r, 0), sum[r] / count[r], 1e-6);
        const auto csv = routing_csv(m);
        EXPECT_EQ(csv.rfind("subset(label_proxy),con,dis,consistency\n", 0), 0u);
    }
    EXPECT_THROW(routing_matrix(*model, bundle, Modality::Audio, config.audio_layers, 5, 64), ConfigError);
    EXPECT_THROW(routing_matrix(*model, bundle, Modality::Text, 0, 5, 64), ConfigError);
}

TEST(DepthSweep, RowsPerDepthAndSingleDepthMatchesTraining) {
    const auto config = micro_train(2);
    const auto bundle = micro_bundle(config.model, 30);
    const std::vector<int> depths{0, 1, 2};
    const auto dir = scratch_dir("sweep");
    const auto rows = depth_sweep(bundle, config, depths, dir);
    ASSERT_EQ(rows.size(), depths.size() * 3);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i].depth, depths[i / 3]);
        EXPECT_EQ(rows[i].scope, kScopes[i % 3]);
    }
    EXPECT_EQ(slurp(dir / "depth_sweep.csv").rfind("depth,scope,f1\n", 0), 0u);
    EXPECT_TRUE(std::filesystem::exists(dir / "depth_2" / "checkpoint.bin"));

    const std::vector<int> two{2};
    const auto single = depth_sweep(bundle, config, two, std::nullopt);
    auto c2 = config;
    c2.model.interaction_depth = 2;
    const auto run = train(bundle, c2);
    for (std::size_t k = 0; k < 3; ++k) {
        const auto* r = run.test_report.find(kScopes[k]);
        ASSERT_EQ(single[k].f1.has_value(), r->metrics.has_value());
        if (r->metrics) EXPECT_EQ(*single[k].f1, r->metrics->f1);
        if (rows[6 + k].f1) EXPECT_EQ(*rows[6 + k].f1, *single[k].f1);
    }
    EXPECT_THROW(depth_sweep(bundle, config, std::vector<int>{}, std::nullopt), ConfigError);
    EXPECT_THROW(depth_sweep(bundle, config, std::vector<int>{-1}, std::nullopt), ConfigError);
}

TEST(Embeddings, RowsRepeatabilityAndSingleSampleOracle) {
    const auto config = micro_train(1);
    const auto bundle = micro_bundle(config.model, 14);
    auto model = make_model(config.model, 8);
    const auto dir = scratch_dir("embed");
    save_checkpoint(model, config, dir / "model.bin");

    EXPECT_EQ(export_embeddings(dir / "model.bin", bundle, dir / "a.csv"), bundle.size());
    export_embeddings(dir / "model.bin", bundle, dir / "b.csv");
    const auto text = slurp(dir / "a.csv");
    EXPECT_EQ(text, slurp(dir / "b.csv"));
    EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), bundle.size() + 1);
    EXPECT_EQ(text.rfind("id,label,z0,", 0), 0u);

    model->eval();
    const auto samples = prepare_samples(bundle, 64);
    std::istringstream lines(text);
    std::string line;
    std::getline(lines, line);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        ASSERT_TRUE(std::getline(lines, line));
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        ASSERT_EQ(cells.size(), static_cast<std::size_t>(2 + config.model.d));
        EXPECT_EQ(cells[0], bundle.samples[i].id);
        EXPECT_EQ(std::stoi(cells[1]), bundle.samples[i].label);
        const std::vector<std::size_t> idx{i};
        torch::NoGradGuard ng;
        const auto z = model(collate(samples, idx)).aggregation.fused;
        for (int64_t k = 0; k < config.model.d; ++k)
            EXPECT_NEAR(std::stod(cells[2 + k]), z[0][k].item<double>(), 1e-6) << "sample " << i << " dim " << k;
    }
}

TEST(Embeddings, DimensionMismatchIsSchemaError) {
    const auto config = micro_train(1);
    auto model = make_model(config.model, 8);
    const auto dir = scratch_dir("embed_bad");
    save_checkpoint(model, config, dir / "model.bin");
    auto other = config.model;
    other.input_dims.text = 7;
    EXPECT_THROW(export_embeddings(dir / "model.bin", micro_bundle(other, 6), dir / "x.csv"), SchemaError);
}
