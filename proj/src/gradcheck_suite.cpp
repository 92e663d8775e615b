#include "cuci/gradcheck.hpp"

#include <fmt/format.h>

#include "cuci/errors.hpp"
#include "cuci/model.hpp"
#include "cuci/primitives.hpp"
#include "cuci/training.hpp"

namespace cuci {
namespace {

constexpr int64_t kB = 2;
constexpr int64_t kT = 4;
constexpr int64_t kD = 8;
constexpr int64_t kHeads = 2;
constexpr double kUnitTolerance = 1e-4;
constexpr double kFullTolerance = 1e-3;
constexpr double kClassifierTolerance = 1e-6;

// Composed blocks have gradient entries near 1e-6 where central differences
// lose digits to roundoff; the five-point stencil keeps them resolvable.
GradcheckOptions composed_stencil() {
    GradcheckOptions fd;
    fd.fourth_order = true;
    fd.eps = 1e-3;
    return fd;
}

const auto kDouble = torch::TensorOptions().dtype(torch::kDouble);

torch::Tensor leaf(std::vector<int64_t> shape) { return torch::randn(shape, kDouble).requires_grad_(true); }

/// Valid prefixes of length 4 and 2.
torch::Tensor prefix_mask() {
    auto m = torch::ones({kB, kT}, torch::kBool);
    m.index_put_({1, torch::indexing::Slice(2)}, false);
    return m;
}

torch::Tensor prefix_lengths() { return torch::tensor({kT, int64_t{2}}, torch::kLong); }

/// Random projection of the output onto a scalar, zero on padded rows.
torch::Tensor readout_weights(const torch::Tensor& like, const torch::Tensor& row_mask = {}) {
    auto w = torch::randn(like.sizes(), kDouble);
    if (row_mask.defined()) w = w * row_mask.unsqueeze(-1).to(torch::kDouble);
    return w;
}

std::vector<GradcheckTarget> with_inputs(std::vector<GradcheckTarget> inputs, const torch::nn::Module& module,
                                         const std::string& prefix) {
    auto params = parameter_targets(module, prefix);
    inputs.insert(inputs.end(), params.begin(), params.end());
    return inputs;
}

GradcheckCase finish(std::string block, const GradcheckResult& r, double tolerance) {
    return {std::move(block), r.max_relative_error, tolerance, static_cast<long>(r.entries_checked), r.worst_entry,
            r.max_relative_error <= tolerance};
}

ModelConfig micro_model() {
    ModelConfig c;
    c.input_dims = {5, 3, 4};
    c.d = kD;
    c.heads = kHeads;
    c.ffn_dim = 2 * kD;
    c.text_layers = 1;
    c.audio_layers = 1;
    c.visual_layers = 1;
    c.interaction_depth = 1;
    c.dropout = 0.0;
    return c;
}

/// Two synthetic samples with joint lengths of at most 6.
Batch micro_batch(const ModelConfig& config) {
    SyntheticConfig sc;
    sc.num_samples = 2;
    sc.dims = config.input_dims;
    sc.len_ctx = 2;
    sc.len_utt = 1;
    sc.val_fraction = 0.0;
    sc.test_fraction = 0.0;
    const auto samples = prepare_samples(generate_synthetic(sc, 7), 16);
    const std::vector<std::size_t> idx{0, 1};
    return collate(samples, idx, torch::kDouble);
}

GradcheckCase check_text_encoder() {
    const auto config = micro_model();
    const auto batch = micro_batch(config);
    TextEncoder enc(config);
    enc->to(torch::kDouble);
    const auto x = batch.features[0].clone().requires_grad_(true);
    const auto w = readout_weights(torch::empty({batch.size(), x.size(1), kD}), batch.mask[0]);
    auto fn = [&] { return (enc(x, batch.partition[0], batch.special[0], batch.mask[0]) * w).sum(); };
    return finish("text_encoder", finite_diff_gradcheck(fn, with_inputs({{"features", x}}, *enc, "text"), composed_stencil()),
                  kUnitTolerance);
}

GradcheckCase check_nonverbal_encoder() {
    const auto config = micro_model();
    const auto batch = micro_batch(config);
    NonverbalEncoder enc(config, Modality::Visual);
    enc->to(torch::kDouble);
    {
        torch::NoGradGuard guard;
        for (auto& item : enc->named_parameters(true))
            if (item.key().find("expert_dis") != std::string::npos) item.value().add_(0.3 * torch::randn_like(item.value()));
    }
    constexpr auto v = 2;
    const auto x = batch.features[v].clone().requires_grad_(true);
    const auto r = leaf({batch.size(), 3 * kD});
    const auto w = readout_weights(torch::empty({batch.size(), x.size(1), kD}), batch.mask[v]);
    const auto wr = torch::randn({batch.size(), 1}, kDouble);
    auto fn = [&] {
        const auto out = enc(x, batch.partition[v], batch.mask[v], r);
        return (out.states * w).sum() + (out.rho * wr).sum();
    };
    return finish("nonverbal_encoder",
                  finite_diff_gradcheck(fn, with_inputs({{"features", x}, {"relation", r}}, *enc, "visual"),
                                        composed_stencil()),
                  kUnitTolerance);
}

GradcheckCase check_attention() {
    MultiHeadAttention attn(AttentionConfig{kD, 1, 0.0});
    attn->to(torch::kDouble);
    const auto q = leaf({kB, 3, kD});
    const auto kv = leaf({kB, kT, kD});
    const auto mask = prefix_mask();
    const auto w = readout_weights(torch::empty({kB, 3, kD}));
    auto fn = [&] { return (attn(q, kv, mask) * w).sum(); };
    return finish("attention", finite_diff_gradcheck(fn, with_inputs({{"query", q}, {"key_value", kv}}, *attn, "attn")),
                  kUnitTolerance);
}

GradcheckCase check_gate_encoder() {
    GateEncoder enc(kD);
    enc->to(torch::kDouble);
    const auto x = leaf({kB, kT, kD});
    const auto lengths = prefix_lengths();
    const auto w = readout_weights(x, prefix_mask());
    auto fn = [&] { return (enc(x, lengths) * w).sum(); };
    return finish("gate_encoder", finite_diff_gradcheck(fn, with_inputs({{"states", x}}, *enc, "gate_enc")),
                  kUnitTolerance);
}

GradcheckCase check_fuse_pool() {
    FusePool fp(kD);
    fp->to(torch::kDouble);
    const auto h = leaf({kB, kT, kD});
    const auto hbar = leaf({kB, kT, kD});
    const auto mask = prefix_mask();
    const auto w = torch::randn({kB, kD}, kDouble);
    auto fn = [&] { return (fp(h, hbar, mask) * w).sum(); };
    return finish("fuse_pool", finite_diff_gradcheck(fn, with_inputs({{"original", h}, {"gated", hbar}}, *fp, "fuse")),
                  kUnitTolerance);
}

DualExpertLayer make_dual_layer() {
    DualExpertLayer layer(kD, kHeads, 2 * kD, 0.0, true);
    layer->to(torch::kDouble);
    torch::NoGradGuard guard;
    for (auto& p : layer->expert_dis->parameters()) p.add_(0.3 * torch::randn_like(p));
    return layer;
}

GradcheckCase check_dual_expert() {
    auto layer = make_dual_layer();
    const auto x = leaf({kB, kT, kD});
    const auto rho = torch::rand({kB}, kDouble).requires_grad_(true);
    const auto w = readout_weights(x);
    auto fn = [&] { return (layer->mix_experts(x, rho) * w).sum(); };
    auto targets = with_inputs({{"x", x}, {"rho", rho}}, *layer->expert_con, "expert_con");
    auto dis = parameter_targets(*layer->expert_dis, "expert_dis");
    targets.insert(targets.end(), dis.begin(), dis.end());
    return finish("dual_expert_ffn", finite_diff_gradcheck(fn, targets), kUnitTolerance);
}

GradcheckCase check_router() {
    auto layer = make_dual_layer();
    const auto x = leaf({kB, kT, kD});
    const auto r = leaf({kB, kD});
    const auto mask = prefix_mask();
    const auto w = torch::randn({kB}, kDouble);
    auto fn = [&] { return (layer->route(x, mask, r) * w).sum(); };
    return finish("router",
                  finite_diff_gradcheck(fn, with_inputs({{"states", x}, {"relation", r}}, *layer->router, "router")),
                  kUnitTolerance);
}

GradcheckCase check_phi() {
    GuidedUpdate block(kD, kHeads, 0.0, true);
    block->to(torch::kDouble);
    const auto h = leaf({kB, kT, kD});
    const auto g = leaf({kB, 1, kD});
    const auto mask = prefix_mask();
    const auto w = readout_weights(h, mask);
    auto fn = [&] { return (block->phi(h, mask, g) * w).sum(); };
    return finish("phi", finite_diff_gradcheck(fn, with_inputs({{"stream", h}, {"guidance", g}}, *block, "phi")),
                  kUnitTolerance);
}

GradcheckCase check_psi() {
    Refine block(kD, kHeads, 0.0);
    block->to(torch::kDouble);
    const auto c = leaf({kB, kT, kD});
    const auto mask = prefix_mask();
    const auto w = readout_weights(c, mask);
    auto fn = [&] { return (block->psi(c, mask) * w).sum(); };
    return finish("psi", finite_diff_gradcheck(fn, with_inputs({{"integrated", c}}, *block, "psi")), kUnitTolerance);
}

GradcheckCase check_gated_integration() {
    GatedIntegration block(kD);
    block->to(torch::kDouble);
    const auto r1 = leaf({kB, kT, kD});
    const auto r2 = leaf({kB, kT, kD});
    const auto w = readout_weights(r1);
    auto fn = [&] { return (block(r1, r2).integrated * w).sum(); };
    return finish("gated_integration",
                  finite_diff_gradcheck(fn, with_inputs({{"r1", r1}, {"r2", r2}}, *block, "integration")),
                  kUnitTolerance);
}

GradcheckCase check_aggregation() {
    Aggregator block(kD, true);
    block->to(torch::kDouble);
    const std::array<torch::Tensor, 3> streams{leaf({kB, kT, kD}), leaf({kB, 3, kD}), leaf({kB, kT, kD})};
    auto m1 = torch::ones({kB, 3}, torch::kBool);
    m1.index_put_({0, 2}, false);
    const std::array<torch::Tensor, 3> masks{prefix_mask(), m1, prefix_mask()};
    const auto w = torch::randn({kB, kD}, kDouble);
    auto fn = [&] { return (block(streams, masks).fused * w).sum(); };
    return finish("aggregation",
                  finite_diff_gradcheck(
                      fn, with_inputs({{"H_t", streams[0]}, {"H_a", streams[1]}, {"H_v", streams[2]}}, *block, "agg")),
                  kUnitTolerance);
}

GradcheckCase check_classifier() {
    Classifier block(kD, 3, 0.0);
    block->to(torch::kDouble);
    const auto z = leaf({kB, kD});
    const auto labels = torch::tensor({int64_t{2}, int64_t{0}}, torch::kLong);
    auto fn = [&] { return torch::nn::functional::cross_entropy(block(z), labels); };
    return finish("classifier", finite_diff_gradcheck(fn, with_inputs({{"z", z}}, *block, "classifier")),
                  kClassifierTolerance);
}

GradcheckCase check_gate_loss() {
    const auto rho = (0.1 + 0.8 * torch::rand({kB, 3}, kDouble)).requires_grad_(true);
    const auto s = torch::rand({kB}, kDouble);
    auto fn = [&] { return gate_loss(rho, s, 0.7); };
    return finish("gate_loss", finite_diff_gradcheck(fn, {{"rho", rho}}), kUnitTolerance);
}

GradcheckCase check_full() {
    const auto config = micro_model();
    const auto batch = micro_batch(config);

    auto model = make_model(config, 11);
    model->to(torch::kDouble);
    model->eval();
    {
        // Move the duplicated experts apart so routing gradients are generic.
        torch::NoGradGuard guard;
        for (auto& item : model->named_parameters(true))
            if (item.key().find("expert_dis") != std::string::npos) item.value().add_(0.2 * torch::randn_like(item.value()));
    }
    torch::Tensor score;
    {
        torch::NoGradGuard guard;
        score = model->forward(batch).stage1.relation.score.clone();
    }
    ForwardOptions options;
    options.score_override = score;
    auto fn = [&] {
        const auto out = model->forward(batch, options);
        return total_loss(out.logits, batch.labels, out.gate_rho(), out.stage1.relation.score, 0.5, 0.05);
    };
    std::vector<GradcheckTarget> targets;
    for (auto& t : parameter_targets(*model))
        if (t.name.rfind("stage1.scorer.", 0) != 0) targets.push_back(t);
    return finish("full_model", finite_diff_gradcheck(fn, targets, composed_stencil()), kFullTolerance);
}

}  // namespace

GradcheckLevel parse_gradcheck_level(std::string_view text) {
    if (text == "unit") return GradcheckLevel::Unit;
    if (text == "full") return GradcheckLevel::Full;
    throw ConfigError(fmt::format("unknown gradcheck level '{}' (expected unit|full)", text));
}

std::vector<GradcheckCase> run_gradcheck_suite(GradcheckLevel level) {
    torch::manual_seed(1234);
    if (level == GradcheckLevel::Full) return {check_full()};
    return {check_attention(),        check_text_encoder(), check_nonverbal_encoder(), check_gate_encoder(),
            check_fuse_pool(),        check_dual_expert(),  check_router(),            check_phi(),
            check_psi(),              check_gated_integration(), check_aggregation(),  check_classifier(),
            check_gate_loss()};
}

}  // namespace cuci
