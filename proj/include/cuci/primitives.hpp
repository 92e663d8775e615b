#pragma once

// Differentiable building blocks shared by all three stages, plus the
// central-difference gradient checker.
//
// Shape conventions: sequences are [B, L, d], masks are bool [B, L] with
// true marking a real position. Unbatched [L, d] / [L] inputs are accepted by
// the pooling helpers.

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace cuci {

/// Mean over rows where mask is true. Throws PreconditionError on an empty mask.
torch::Tensor masked_mean_pool(const torch::Tensor& seq, const torch::Tensor& mask);

/// Per-dimension maximum over rows where mask is true.
torch::Tensor seq_max_pool(const torch::Tensor& seq, const torch::Tensor& mask);

/// Throws `what` as PreconditionError when any batch row of `mask` is all false.
void require_nonempty(const torch::Tensor& mask, const char* what);

struct AttentionConfig {
    int64_t dim = 16;
    int64_t heads = 2;
    double dropout = 0.0;
};

/// Multi-head scaled dot-product attention with key padding mask. Masked
/// keys get -inf scores, so they carry exactly zero weight. The key
/// projection has no bias: a key bias shifts every score of a query equally
/// and would be an unidentifiable parameter.
class MultiHeadAttentionImpl : public torch::nn::Module {
public:
    explicit MultiHeadAttentionImpl(const AttentionConfig& config);

    /// query [B, Lq, d], key_value [B, Lk, d], kv_mask [B, Lk] -> [B, Lq, d].
    torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& key_value,
                          const torch::Tensor& kv_mask);

    /// Weights [B, heads, Lq, Lk] of the most recent forward when recording is on.
    const torch::Tensor& last_weights() const { return last_weights_; }
    void record_weights(bool on) { record_ = on; }

    /// Identity query/key/value/output projections with zero biases (testing aid).
    void set_identity_projections();

    const AttentionConfig& config() const { return config_; }

    torch::nn::Linear q_proj{nullptr}, k_proj{nullptr}, v_proj{nullptr}, out_proj{nullptr};

private:
    AttentionConfig config_;
    torch::nn::Dropout weight_dropout_{nullptr};
    bool record_ = false;
    torch::Tensor last_weights_;
};
TORCH_MODULE(MultiHeadAttention);

/// Two-layer position-wise feed-forward block, GELU in between.
class FeedForwardImpl : public torch::nn::Module {
public:
    FeedForwardImpl(int64_t dim, int64_t hidden, double dropout);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Linear fc1{nullptr}, fc2{nullptr};

private:
    torch::nn::Dropout dropout_{nullptr};
};
TORCH_MODULE(FeedForward);

/// Copies every parameter of `src` into `dst` (same architecture required).
void copy_parameters(torch::nn::Module& dst, const torch::nn::Module& src);

// ---------------------------------------------------------------------------
// Gradient checking

struct GradcheckTarget {
    std::string name;
    torch::Tensor tensor;  // double, leaf, requires_grad
};

struct GradcheckOptions {
    double eps = 1e-5;
    /// Five-point stencil (error O(eps^4)) instead of central differences (O(eps^2)).
    bool fourth_order = false;
    /// 0 checks every entry; otherwise a deterministic stride subset of at most this many per tensor.
    int64_t max_entries_per_tensor = 0;
};

struct GradcheckResult {
    double max_relative_error = 0.0;
    std::string worst_entry;
    int64_t entries_checked = 0;
};

/// Compares autograd gradients of `loss_fn` (a scalar) against central
/// differences, entry by entry:
///     |analytic - fd| / max(|analytic|, |fd|, 1e-8).
/// `loss_fn` must be pure and deterministic (dropout off). Throws
/// NumericalError when an analytic gradient is non-finite.
GradcheckResult finite_diff_gradcheck(const std::function<torch::Tensor()>& loss_fn,
                                      const std::vector<GradcheckTarget>& targets,
                                      const GradcheckOptions& options = {});

/// Every parameter of `module` as a gradcheck target, named by its registry path.
std::vector<GradcheckTarget> parameter_targets(const torch::nn::Module& module, const std::string& prefix = "");

}  // namespace cuci
