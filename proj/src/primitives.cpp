#include "cuci/primitives.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "cuci/errors.hpp"

namespace cuci {

void require_nonempty(const torch::Tensor& mask, const char* what) {
    if (mask.numel() == 0 || mask.logical_not().all(-1).any().item<bool>())
        throw PreconditionError(fmt::format("{}: mask selects no position", what));
}

torch::Tensor masked_mean_pool(const torch::Tensor& seq, const torch::Tensor& mask) {
    require_nonempty(mask, "masked_mean_pool");
    const auto m = mask.unsqueeze(-1);
    const auto kept = torch::where(m, seq, torch::zeros({}, seq.options()));
    return kept.sum(-2) / m.sum(-2).to(seq.scalar_type());
}

torch::Tensor seq_max_pool(const torch::Tensor& seq, const torch::Tensor& mask) {
    require_nonempty(mask, "seq_max_pool");
    const auto neg_inf = torch::full({}, -std::numeric_limits<double>::infinity(), seq.options());
    return torch::where(mask.unsqueeze(-1), seq, neg_inf).amax(-2);
}

MultiHeadAttentionImpl::MultiHeadAttentionImpl(const AttentionConfig& config) : config_(config) {
    if (config.dim <= 0 || config.heads <= 0 || config.dim % config.heads != 0)
        throw ConfigError(fmt::format("attention dim {} must be a positive multiple of heads {}", config.dim,
                                      config.heads));
    q_proj = register_module("q_proj", torch::nn::Linear(config.dim, config.dim));
    k_proj = register_module("k_proj", torch::nn::Linear(torch::nn::LinearOptions(config.dim, config.dim).bias(false)));
    v_proj = register_module("v_proj", torch::nn::Linear(config.dim, config.dim));
    out_proj = register_module("out_proj", torch::nn::Linear(config.dim, config.dim));
    weight_dropout_ = register_module("weight_dropout", torch::nn::Dropout(config.dropout));
}

torch::Tensor MultiHeadAttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& key_value,
                                              const torch::Tensor& kv_mask) {
    require_nonempty(kv_mask, "attention");
    const int64_t batch = query.size(0);
    const int64_t lq = query.size(1);
    const int64_t lk = key_value.size(1);
    const int64_t heads = config_.heads;
    const int64_t head_dim = config_.dim / heads;

    auto split = [&](const torch::Tensor& x, int64_t len) {
        return x.view({batch, len, heads, head_dim}).transpose(1, 2);
    };
    const auto q = split(q_proj(query), lq);
    const auto k = split(k_proj(key_value), lk);
    const auto v = split(v_proj(key_value), lk);

    auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim));
    scores = scores.masked_fill(kv_mask.logical_not().view({batch, 1, 1, lk}),
                                -std::numeric_limits<double>::infinity());
    auto weights = torch::softmax(scores, -1);
    if (record_) last_weights_ = weights.detach();
    weights = weight_dropout_(weights);

    const auto context = torch::matmul(weights, v).transpose(1, 2).reshape({batch, lq, config_.dim});
    return out_proj(context);
}

void MultiHeadAttentionImpl::set_identity_projections() {
    torch::NoGradGuard guard;
    for (auto* lin : {&q_proj, &k_proj, &v_proj, &out_proj}) {
        (*lin)->weight.copy_(torch::eye(config_.dim, (*lin)->weight.options()));
        if ((*lin)->bias.defined()) (*lin)->bias.zero_();
    }
}

FeedForwardImpl::FeedForwardImpl(int64_t dim, int64_t hidden, double dropout) {
    fc1 = register_module("fc1", torch::nn::Linear(dim, hidden));
    fc2 = register_module("fc2", torch::nn::Linear(hidden, dim));
    dropout_ = register_module("dropout", torch::nn::Dropout(dropout));
}

torch::Tensor FeedForwardImpl::forward(const torch::Tensor& x) {
    return fc2(dropout_(torch::gelu(fc1(x))));
}

void copy_parameters(torch::nn::Module& dst, const torch::nn::Module& src) {
    torch::NoGradGuard guard;
    auto dst_params = dst.named_parameters(true);
    const auto src_params = src.named_parameters(true);
    if (dst_params.size() != src_params.size())
        throw PreconditionError("copy_parameters: modules have different parameter counts");
    for (const auto& item : src_params) {
        auto* target = dst_params.find(item.key());
        if (target == nullptr || !target->sizes().equals(item.value().sizes()))
            throw PreconditionError(fmt::format("copy_parameters: no matching parameter for '{}'", item.key()));
        target->copy_(item.value());
    }
}

std::vector<GradcheckTarget> parameter_targets(const torch::nn::Module& module, const std::string& prefix) {
    std::vector<GradcheckTarget> out;
    for (const auto& item : module.named_parameters(true)) out.push_back({prefix + item.key(), item.value()});
    return out;
}

GradcheckResult finite_diff_gradcheck(const std::function<torch::Tensor()>& loss_fn,
                                      const std::vector<GradcheckTarget>& targets,
                                      const GradcheckOptions& options) {
    for (const auto& t : targets) {
        if (t.tensor.scalar_type() != torch::kDouble)
            throw PreconditionError(fmt::format("gradcheck: '{}' must be double precision", t.name));
        if (!t.tensor.is_contiguous())
            throw PreconditionError(fmt::format("gradcheck: '{}' must be contiguous", t.name));
        if (t.tensor.grad().defined()) t.tensor.mutable_grad().zero_();
    }

    loss_fn().backward();
    std::vector<torch::Tensor> analytic;
    analytic.reserve(targets.size());
    for (const auto& t : targets) {
        auto g = t.tensor.grad().defined() ? t.tensor.grad().clone() : torch::zeros_like(t.tensor);
        if (!torch::isfinite(g).all().item<bool>())
            throw NumericalError(fmt::format("gradcheck: non-finite gradient for '{}'", t.name));
        analytic.push_back(std::move(g));
    }

    torch::NoGradGuard guard;
    GradcheckResult result;
    const double eps = options.eps;
    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
        const auto& target = targets[ti];
        const int64_t n = target.tensor.numel();
        if (n == 0) continue;
        const int64_t stride =
            options.max_entries_per_tensor > 0 && n > options.max_entries_per_tensor
                ? (n + options.max_entries_per_tensor - 1) / options.max_entries_per_tensor
                : 1;
        double* data = target.tensor.data_ptr<double>();
        const double* grad = analytic[ti].data_ptr<double>();
        for (int64_t i = 0; i < n; i += stride) {
            const double original = data[i];
            auto at = [&](double offset) {
                data[i] = original + offset;
                return loss_fn().item<double>();
            };
            double fd = 0.0;
            if (options.fourth_order)
                fd = (-at(2.0 * eps) + 8.0 * at(eps) - 8.0 * at(-eps) + at(-2.0 * eps)) / (12.0 * eps);
            else
                fd = (at(eps) - at(-eps)) / (2.0 * eps);
            data[i] = original;
            if (!std::isfinite(fd))
                throw NumericalError(fmt::format("gradcheck: non-finite difference for '{}'[{}]", target.name, i));
            const double denom = std::max({std::abs(grad[i]), std::abs(fd), 1e-8});
            const double err = std::abs(grad[i] - fd) / denom;
            ++result.entries_checked;
            if (err > result.max_relative_error) {
                result.max_relative_error = err;
                result.worst_entry = fmt::format("{}[{}] analytic={:.6e} fd={:.6e}", target.name, i, grad[i], fd);
            }
        }
    }
    return result;
}

}  // namespace cuci
