#include <cmath>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "cuci/guided_interaction.hpp"
#include "test_util.hpp"

using namespace cuci;
using namespace cuci::testing;

namespace {

constexpr auto kDouble = torch::kDouble;

std::array<torch::Tensor, 3> random_streams(int64_t batch, std::array<int64_t, 3> lengths, int64_t d) {
    std::array<torch::Tensor, 3> out;
    for (std::size_t i = 0; i < 3; ++i) out[i] = torch::randn({batch, lengths[i], d}, kDouble);
    return out;
}

std::array<torch::Tensor, 3> prefix_masks(int64_t batch, std::array<int64_t, 3> lengths) {
    std::array<torch::Tensor, 3> out;
    for (std::size_t i = 0; i < 3; ++i) {
        out[i] = torch::ones({batch, lengths[i]}, torch::kBool);
        if (batch > 1 && lengths[i] > 1) out[i][1][lengths[i] - 1] = false;
    }
    return out;
}

}  // namespace

TEST(Guidance, ShapeZeroAndAffineOracle) {
    torch::manual_seed(0);
    const int64_t d = 4;
    GuidanceProjection gamma(d);
    gamma->to(kDouble);
    const auto u = torch::randn({2, 7 * d}, kDouble);
    const auto g = gamma(u);
    ASSERT_EQ(g.sizes(), (std::vector<int64_t>{2, 1, d}));
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t i = 0; i < d; ++i) {
            double o = gamma->linear->bias[i].item<double>();
            for (int64_t j = 0; j < 7 * d; ++j) o += gamma->linear->weight[i][j].item<double>() * u[b][j].item<double>();
            EXPECT_NEAR(g[b][0][i].item<double>(), o, 1e-7);
        }
    {
        torch::NoGradGuard ng;
        gamma->linear->bias.zero_();
    }
    EXPECT_TRUE(torch::equal(gamma(torch::zeros({1, 7 * d}, kDouble)), torch::zeros({1, 1, d}, kDouble)));
}

TEST(GuidedUpdate, DisabledIsIdentityAndShapePreserved) {
    torch::manual_seed(1);
    const auto h = torch::randn({2, 3, 8}, kDouble);
    const auto mask = torch::ones({2, 3}, torch::kBool);
    const auto g = torch::randn({2, 1, 8}, kDouble);
    GuidedUpdate off(8, 2, 0.0, false);
    off->to(kDouble);
    EXPECT_TRUE(torch::equal(off(h, mask, g), h));
    GuidedUpdate on(8, 2, 0.0, true);
    on->to(kDouble);
    const auto out = on(h, mask, g);
    EXPECT_EQ(out.sizes(), h.sizes());
    EXPECT_TRUE(torch::allclose(out, h + on->phi(h, mask, g), 0, 0));
}

TEST(CrossModal, CanonicalOrderAndConvexity) {
    EXPECT_EQ(supporting_modalities(Modality::Text), std::pair(Modality::Audio, Modality::Visual));
    EXPECT_EQ(supporting_modalities(Modality::Audio), std::pair(Modality::Text, Modality::Visual));
    EXPECT_EQ(supporting_modalities(Modality::Visual), std::pair(Modality::Text, Modality::Audio));

    torch::manual_seed(2);
    auto config = micro_config();
    config.heads = 1;
    InteractionLayer layer(config);
    layer->to(kDouble);
    for (auto& pair : layer->cross)
        for (auto& attn : pair) attn->set_identity_projections();
    const int64_t d = config.d;
    auto streams = random_streams(1, {3, 4, 2}, d);
    const auto masks = prefix_masks(1, {3, 4, 2});
    const auto row = torch::randn({d}, kDouble);
    streams[1] = row.expand({1, 4, d}).contiguous();  // audio supports the text anchor
    const auto [r1, r2] = layer->cross_modal_responses(Modality::Text, streams, masks);
    EXPECT_EQ(r1.sizes(), (std::vector<int64_t>{1, 3, d}));
    EXPECT_EQ(r2.sizes(), (std::vector<int64_t>{1, 3, d}));
    for (int64_t t = 0; t < 3; ++t) EXPECT_TRUE(torch::allclose(r1[0][t], row, 0, 1e-12));

    // Loop oracle for the visual response with identity projections.
    for (int64_t t = 0; t < 3; ++t) {
        double s[2], z = 0;
        for (int j = 0; j < 2; ++j) {
            s[j] = 0;
            for (int64_t c = 0; c < d; ++c) s[j] += streams[0][0][t][c].item<double>() * streams[2][0][j][c].item<double>();
            z += (s[j] = std::exp(s[j] / std::sqrt(static_cast<double>(d))));
        }
        for (int64_t c = 0; c < d; ++c) {
            const double o = (s[0] * streams[2][0][0][c].item<double>() + s[1] * streams[2][0][1][c].item<double>()) / z;
            EXPECT_NEAR(r2[0][t][c].item<double>(), o, 1e-6);
        }
    }
}

TEST(GatedIntegration, EqualInputsSaturationBoundsOracle) {
    torch::manual_seed(3);
    GatedIntegration gi(4);
    gi->to(kDouble);
    const auto r1 = torch::randn({2, 3, 4}, kDouble), r2 = torch::randn({2, 3, 4}, kDouble);
    EXPECT_TRUE(torch::equal(gi(r1, r1).integrated, r1));

    const auto out = gi(r1, r2);
    const auto lo = torch::minimum(r1, r2), hi = torch::maximum(r1, r2);
    EXPECT_TRUE(out.integrated.ge(lo).logical_and(out.integrated.le(hi)).all().item<bool>());
    auto a1 = r1.accessor<double, 3>(), a2 = r2.accessor<double, 3>();
    auto oc = out.integrated.accessor<double, 3>();
    const auto w1 = gi->w1->weight, b1 = gi->w1->bias, w2 = gi->w2->weight;
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t t = 0; t < 3; ++t)
            for (int64_t i = 0; i < 4; ++i) {
                double pre = b1[i].item<double>();
                for (int64_t j = 0; j < 4; ++j)
                    pre += w1[i][j].item<double>() * a1[b][t][j] + w2[i][j].item<double>() * a2[b][t][j];
                const double beta = 1.0 / (1.0 + std::exp(-pre));
                EXPECT_NEAR(oc[b][t][i], beta * a1[b][t][i] + (1 - beta) * a2[b][t][i], 1e-6);
            }

    {
        torch::NoGradGuard ng;
        gi->w1->weight.zero_();
        gi->w2->weight.zero_();
        gi->w1->bias.fill_(1e3);
    }
    EXPECT_TRUE(torch::equal(gi(r1, r2).integrated, r1));
}

TEST(Refine, ZeroProjectionIsResidualIdentity) {
    torch::manual_seed(4);
    Refine rf(8, 2, 0.0);
    rf->to(kDouble);
    const auto h = torch::randn({2, 3, 8}, kDouble), c = torch::randn({2, 3, 8}, kDouble);
    const auto mask = torch::ones({2, 3}, torch::kBool);
    EXPECT_EQ(rf(h, c, mask).sizes(), h.sizes());
    {
        torch::NoGradGuard ng;
        rf->out_proj->weight.zero_();
        rf->out_proj->bias.zero_();
    }
    EXPECT_TRUE(torch::equal(rf(h, c, mask), h));
}

TEST(InteractionLayer, StreamShapesPreserved) {
    torch::manual_seed(5);
    const auto config = micro_config();
    InteractionLayer layer(config);
    layer->to(kDouble);
    const std::array<int64_t, 3> lengths{5, 4, 6};
    const auto streams = random_streams(2, lengths, config.d);
    const auto trace = layer(streams, prefix_masks(2, lengths), torch::randn({2, 1, config.d}, kDouble));
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(trace.output[i].sizes(), streams[i].sizes());
        EXPECT_EQ(trace.gates[i].sizes(), streams[i].sizes());
        EXPECT_GT(trace.gates[i].min().item<double>(), 0.0);
        EXPECT_LT(trace.gates[i].max().item<double>(), 1.0);
    }
}

TEST(Aggregation, SimplexOracleShiftInvariance) {
    torch::manual_seed(6);
    const int64_t d = 4;
    Aggregator agg(d, true);
    agg->to(kDouble);
    const std::array<int64_t, 3> lengths{3, 4, 2};
    const auto streams = random_streams(2, lengths, d);
    const auto masks = prefix_masks(2, lengths);
    const auto res = agg(streams, masks);
    EXPECT_TRUE(torch::allclose(res.weights.sum(-1), torch::ones({2}, kDouble), 0, 1e-6));
    EXPECT_GT(res.weights.min().item<double>(), 0.0);
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t c = 0; c < d; ++c) {
            double z = 0;
            for (std::size_t m = 0; m < 3; ++m) z += res.weights[b][m].item<double>() * res.pooled[m][b][c].item<double>();
            EXPECT_NEAR(res.fused[b][c].item<double>(), z, 1e-12);
        }

    {
        torch::NoGradGuard ng;
        for (auto& s : agg->score) s->bias.add_(3.7);
    }
    const auto shifted = agg(streams, masks);
    EXPECT_TRUE(torch::allclose(shifted.weights, res.weights, 0, 1e-6));
    EXPECT_TRUE(torch::equal(shifted.weights.argmax(-1), res.weights.argmax(-1)));

    {
        torch::NoGradGuard ng;
        for (auto& s : agg->score) {
            s->weight.zero_();
            s->bias.fill_(0.25);
        }
    }
    const auto equal = agg(streams, masks);
    EXPECT_TRUE(torch::allclose(equal.weights, torch::full({2, 3}, 1.0 / 3.0, kDouble), 0, 1e-15));
}

TEST(Aggregation, UniformVariantIsExactlyOneThird) {
    torch::manual_seed(7);
    Aggregator agg(4, false);
    agg->to(kDouble);
    const std::array<int64_t, 3> lengths{3, 4, 2};
    const auto res = agg(random_streams(2, lengths, 4), prefix_masks(2, lengths));
    EXPECT_TRUE(torch::equal(res.weights, torch::full({2, 3}, 1.0 / 3.0, kDouble)));
}

TEST(Classifier, LogitLengthAndZeroWeights) {
    Classifier clf(4, 5, 0.0);
    clf->to(kDouble);
    const auto z = torch::randn({3, 4}, kDouble);
    EXPECT_EQ(clf(z).sizes(), (std::vector<int64_t>{3, 5}));
    {
        torch::NoGradGuard ng;
        clf->linear->weight.zero_();
        clf->linear->bias.zero_();
    }
    EXPECT_TRUE(torch::equal(clf(z), torch::zeros({3, 5}, kDouble)));
    EXPECT_TRUE(torch::equal(torch::softmax(clf(z), -1), torch::full({3, 5}, 0.2, kDouble)));
}
