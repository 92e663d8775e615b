#include <map>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "cuci/checkpoint.hpp"
#include "cuci/errors.hpp"
#include "cuci/model.hpp"
#include "cuci/training.hpp"
#include "test_util.hpp"

using namespace cuci;
using namespace cuci::testing;

namespace {

constexpr auto kDouble = torch::kDouble;

CuciNet double_model(const ModelConfig& config, std::uint64_t seed = 3) {
    auto model = make_model(config, seed);
    model->to(kDouble);
    model->eval();
    return model;
}

}  // namespace

TEST(Model, EvalForwardIsBitwiseDeterministic) {
    const auto config = micro_config(2);
    auto model = double_model(config);
    const auto batch = full_batch(micro_bundle(config, 5));
    const auto a = model(batch).logits;
    const auto b = model(batch).logits;
    EXPECT_TRUE(torch::equal(a, b));
    EXPECT_EQ(a.sizes(), (std::vector<int64_t>{5, 2}));
    auto other = double_model(config);
    EXPECT_TRUE(torch::equal(other(batch).logits, a));
}

TEST(Model, ZeroDepthAggregatesPrimaryStreams) {
    const auto config = micro_config(0);
    auto model = double_model(config);
    const auto batch = full_batch(micro_bundle(config, 4));
    ForwardOptions opts;
    opts.record_interaction = true;
    const auto out = model(batch, opts);
    EXPECT_TRUE(out.layers.empty());
    for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(torch::equal(out.final_streams[i], out.stage1.primary[i]));
    const auto direct = model->aggregator(out.stage1.primary, batch.mask);
    EXPECT_TRUE(torch::equal(out.aggregation.fused, direct.fused));
}

TEST(Model, StreamsKeepShapeAtEveryLayer) {
    const auto config = micro_config(3);
    auto model = double_model(config);
    const auto batch = full_batch(micro_bundle(config, 4));
    ForwardOptions opts;
    opts.record_interaction = true;
    const auto out = model(batch, opts);
    ASSERT_EQ(out.layers.size(), 3u);
    for (const auto& layer : out.layers)
        for (std::size_t i = 0; i < 3; ++i)
            EXPECT_EQ(layer.output[i].sizes(), (std::vector<int64_t>{4, batch.features[i].size(1), config.d}));
    EXPECT_EQ(out.guidance.sizes(), (std::vector<int64_t>{4, 1, config.d}));
    EXPECT_EQ(out.cue.cue.size(1), 7 * config.d);
}

TEST(Model, PaddedPositionsDoNotChangeLogits) {
    const auto config = micro_config(2);
    auto model = double_model(config);
    const auto bundle = micro_bundle(config, 6);
    const auto batch = full_batch(bundle, kDouble, 12);
    const auto before = model(batch).logits;
    auto perturbed = batch;
    for (std::size_t i = 0; i < 3; ++i) {
        const auto pad = batch.mask[i].logical_not().unsqueeze(-1);
        ASSERT_TRUE(pad.any().item<bool>());
        perturbed.features[i] =
            torch::where(pad, batch.features[i] + 25.0 * torch::randn_like(batch.features[i]), batch.features[i]);
    }
    EXPECT_TRUE(torch::equal(model(perturbed).logits, before));
}

TEST(Model, AggregationWeightsOnSimplex) {
    const auto config = micro_config(1);
    auto model = double_model(config);
    const auto out = model(full_batch(micro_bundle(config, 5)));
    EXPECT_TRUE(torch::allclose(out.aggregation.weights.sum(-1), torch::ones({5}, kDouble), 0, 1e-6));
    EXPECT_GT(out.aggregation.weights.min().item<double>(), 0.0);
}

TEST(ModelAblation, NoGuidanceKeepsPreviousStreams) {
    auto config = micro_config(2);
    config.ablation = flags_for_variant("no-guidance");
    auto model = double_model(config);
    ForwardOptions opts;
    opts.record_interaction = true;
    const auto out = model(full_batch(micro_bundle(config, 4)), opts);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_TRUE(torch::equal(out.layers[0].guided[i], out.stage1.primary[i]));
        EXPECT_TRUE(torch::equal(out.layers[1].guided[i], out.layers[0].output[i]));
    }
}

TEST(ModelAblation, SharedBranchesAndUniformAggregation) {
    auto config = micro_config(1);
    config.ablation = flags_for_variant("shared-branches");
    auto shared = double_model(config);
    const auto batch = full_batch(micro_bundle(config, 4));
    const auto out = shared(batch);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(torch::equal(out.stage1.primary[i], out.stage1.structure[i]));
    EXPECT_EQ(out.gate_rho().size(1), config.audio_layers + config.visual_layers);

    config.ablation = flags_for_variant("uniform-aggregation");
    auto uniform = double_model(config);
    EXPECT_TRUE(torch::equal(uniform(batch).aggregation.weights, torch::full({4, 3}, 1.0 / 3.0, kDouble)));
}

TEST(ModelAblation, PairVariantsZeroTheExcludedSlot) {
    const std::map<std::string, int> excluded{{"pair-ta-tv", 2}, {"pair-ta-av", 1}, {"pair-tv-av", 0}};
    for (const auto& [variant, slot] : excluded) {
        auto config = micro_config(1);
        config.ablation = flags_for_variant(variant);
        auto model = double_model(config);
        const auto u = model(full_batch(micro_bundle(config, 3))).cue.cue;
        const int64_t d = config.d;
        for (int k = 0; k < 3; ++k) {
            const double mx = u.slice(1, 2 * d * k, 2 * d * (k + 1)).abs().max().item<double>();
            if (k == slot)
                EXPECT_EQ(mx, 0.0) << variant;
            else
                EXPECT_GT(mx, 0.0) << variant;
        }
    }
}

TEST(ModelAblation, NoDualExpertHasNoRouting) {
    auto config = micro_config(1);
    config.ablation = flags_for_variant("no-dual-expert");
    auto model = double_model(config);
    const auto out = model(full_batch(micro_bundle(config, 3)));
    EXPECT_EQ(out.gate_rho().size(1), 0);
    for (const auto& item : model->named_parameters())
        EXPECT_EQ(item.key().find("router"), std::string::npos) << item.key();
}

TEST(Model, GradientReachesEveryTrainedGroup) {
    const auto config = micro_config(1);
    auto model = make_model(config, 4);
    model->to(kDouble);
    const auto batch = full_batch(micro_bundle(config, 6));
    const auto out = model(batch);
    total_loss(out.logits, batch.labels, out.gate_rho(), out.stage1.relation.score, 0.5, 0.05).backward();

    const std::vector<std::pair<std::string, std::vector<std::string>>> groups{
        {"role embeddings", {"role_embeddings"}},
        {"experts", {"expert_con", "expert_dis"}},
        {"routers", {"router"}},
        {"gate encoders", {"gate_enc_"}},
        {"pair projections", {"summary_proj_", "pair_norm_"}},
        {"query and readout projections", {"query_proj", "global_proj"}},
        {"guidance projection", {"guidance.linear"}},
        {"guided update", {"guided_"}},
        {"refinement", {"refine_"}},
        {"integration gates", {"integration_"}},
        {"aggregation scores", {"aggregator.score_"}},
        {"classifier", {"classifier."}},
        {"text encoder", {"stage1.text."}},
        {"cross-modal attention", {"cross_"}},
    };
    for (const auto& [group, keys] : groups) {
        double norm = 0.0;
        int matched = 0;
        for (const auto& item : model->named_parameters()) {
            const bool in_group = std::any_of(keys.begin(), keys.end(),
                                              [&](const auto& k) { return item.key().find(k) != std::string::npos; });
            if (!in_group) continue;
            ++matched;
            if (item.value().grad().defined()) norm += item.value().grad().norm().item<double>();
        }
        EXPECT_GT(matched, 0) << group;
        EXPECT_GT(norm, 1e-12) << group;
    }
    // The relation scorer only feeds the stop-gradient target of the gate loss.
    for (const auto& p : model->stage1->scorer->parameters())
        if (p.grad().defined()) EXPECT_EQ(p.grad().abs().max().item<double>(), 0.0);
}

TEST(Checkpoint, RoundTripAndShapeVerification) {
    auto config = desk_preset();
    config.model = micro_config(1);
    auto model = make_model(config.model, 9);
    const auto dir = scratch_dir("ckpt");
    save_checkpoint(model, config, dir / "model.bin");
    auto loaded = load_checkpoint(dir / "model.bin");
    EXPECT_EQ(loaded.config, config);
    const auto a = model->named_parameters(), b = loaded.model->named_parameters();
    ASSERT_EQ(a.size(), b.size());
    for (const auto& item : a) EXPECT_TRUE(torch::equal(item.value(), b[item.key()])) << item.key();

    // Header claims a config whose shapes disagree with the stored parameters.
    auto text = slurp(dir / "model.bin");
    const auto pos = text.find("\"d\":8");
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, 5, "\"d\":4");
    std::ofstream(dir / "bad.bin", std::ios::binary) << text;
    EXPECT_THROW(load_checkpoint(dir / "bad.bin"), SchemaError);

    std::ofstream(dir / "junk.bin", std::ios::binary) << "not a checkpoint at all";
    EXPECT_THROW(load_checkpoint(dir / "junk.bin"), SchemaError);
    EXPECT_THROW(load_checkpoint(dir / "missing.bin"), LoadError);
}
