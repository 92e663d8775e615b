#include <array>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "cuci/data_model.hpp"
#include "cuci/errors.hpp"

namespace cuci {
namespace {

// Random direction with unit root-mean-square entries.
std::vector<float> prototype(std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> g(dim);
    double norm = 0.0;
    for (auto& x : g) {
        x = normal(rng);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    std::vector<float> p(dim);
    const double scale = std::sqrt(static_cast<double>(dim)) / norm;
    for (std::size_t i = 0; i < dim; ++i) p[i] = static_cast<float>(g[i] * scale);
    return p;
}

// Rows = proto + noise_std * N(0, 1); without a prototype, distractor rows of unit noise.
Matrix block(std::size_t rows, std::size_t dim, const std::vector<float>* proto, double noise_std,
             std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, dim);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < dim; ++c) {
            const double n = normal(rng);
            m(r, c) = proto == nullptr ? static_cast<float>(n) : static_cast<float>((*proto)[c] + noise_std * n);
        }
    return m;
}

}  // namespace

DatasetBundle generate_synthetic(const SyntheticConfig& config, std::uint64_t seed) {
    if (config.num_samples == 0 || config.dims.text == 0 || config.dims.audio == 0 || config.dims.visual == 0 ||
        config.len_ctx == 0 || config.len_utt == 0)
        throw ConfigError("synthetic config: sizes must be positive");
    if (!(config.snr > 0.0)) throw ConfigError("synthetic config: snr must be positive");
    if (config.num_classes != 2) throw ConfigError("synthetic config: the incongruity task is binary");
    if (config.val_fraction < 0 || config.test_fraction < 0 || config.val_fraction + config.test_fraction >= 1.0)
        throw ConfigError("synthetic config: split fractions must leave a non-empty train split");
    if (config.num_cues < 2) throw ConfigError("synthetic config: num_cues must be >= 2");

    std::mt19937_64 rng(seed);
    const auto k = static_cast<std::size_t>(config.num_cues);
    std::array<std::vector<std::vector<float>>, 3> protos;
    for (Modality m : kModalities) {
        auto& set = protos[index_of(m)];
        if (k == 2) {
            // Two cues are the polarities +p and -p of one direction.
            set.push_back(prototype(config.dims[m], rng));
            set.push_back(set.front());
            for (auto& x : set.back()) x = -x;
        } else {
            for (std::size_t c = 0; c < k; ++c) set.push_back(prototype(config.dims[m], rng));
        }
    }
    const double noise_std = std::isinf(config.snr) ? 0.0 : 1.0 / config.snr;

    const auto n = config.num_samples;
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * config.test_fraction));
    const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * config.val_fraction));
    if (n_test + n_val >= n) throw ConfigError("synthetic config: too few samples for the requested splits");
    const std::size_t n_train = n - n_test - n_val;

    DatasetBundle bundle;
    bundle.manifest.dims = config.dims;
    bundle.manifest.num_classes = 2;
    bundle.samples.reserve(n);

    std::bernoulli_distribution coin(0.5);
    std::uniform_int_distribution<std::size_t> cue(0, k - 1);
    std::uniform_int_distribution<std::size_t> other(0, k - 2);
    std::uniform_int_distribution<std::size_t> ctx_len((config.len_ctx + 1) / 2, config.len_ctx);
    std::uniform_int_distribution<std::size_t> utt_len((config.len_utt + 1) / 2, config.len_utt);

    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = cue(rng);
        std::size_t u = c;
        if (coin(rng)) u = (c + 1 + other(rng)) % k;
        const std::size_t tc = ctx_len(rng);
        const std::size_t tu = utt_len(rng);

        ConversationalSample s;
        s.id = fmt::format("syn-{:06d}", i);
        s.label = c != u ? 1 : 0;
        const auto dt = config.dims.text;
        s[Modality::Text].context = block(tc, dt, &protos[0][c], noise_std, rng);
        s[Modality::Text].utterance = block(tu, dt, nullptr, noise_std, rng);
        for (Modality m : {Modality::Audio, Modality::Visual}) {
            const auto& set = protos[index_of(m)];
            s[m].context = block(tc, config.dims[m], nullptr, noise_std, rng);
            s[m].utterance = block(tu, config.dims[m], &set[u], noise_std, rng);
        }

        const Split split = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
        auto& ids = split == Split::Train ? bundle.manifest.train
                                          : (split == Split::Val ? bundle.manifest.val : bundle.manifest.test);
        ids.push_back(s.id);
        bundle.samples.push_back(std::move(s));
        bundle.splits.push_back(split);
    }
    return bundle;
}

}  // namespace cuci
