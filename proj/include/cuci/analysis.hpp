#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cuci/config.hpp"
#include "cuci/data_model.hpp"
#include "cuci/metrics.hpp"

namespace cuci {

class CuciNetImpl;

/// Rows: subset (S, NS); columns: expert (Con, Dis). Con = mean(rho), Dis = mean(1 - rho).
struct RoutingMatrix {
    std::array<std::array<double, 2>, 2> m{};
    bool label_proxy = false;  // subsets taken from binary labels

    double operator()(int row, int col) const { return m[row][col]; }
};

/// Streaming per-subset mean of routing coefficients.
class RoutingAccumulator {
public:
    void add(bool sarcastic, double rho);
    /// Throws DataError when either subset received no values.
    RoutingMatrix matrix() const;

private:
    std::array<double, 2> sum_{};
    std::array<std::size_t, 2> count_{};
};

/// Mean of the diagonal.
double consistency_score(const RoutingMatrix& matrix);

/// Eval-mode routing statistics of the structure branch over every sample of
/// `bundle` for nonverbal `modality`, layer index `layer`.
RoutingMatrix routing_matrix(CuciNetImpl& model, const DatasetBundle& bundle, Modality modality, int layer,
                             int batch_size, int max_len);
/// `subset,con,dis,consistency`; the subset column reads `subset(label_proxy)`
/// when labels stand in for sarcasm flags.
std::string routing_csv(const RoutingMatrix& matrix);
RoutingMatrix export_routing(const std::filesystem::path& checkpoint, const DatasetBundle& bundle, Modality modality,
                             int layer, const std::optional<std::filesystem::path>& out_file);

struct DepthRow {
    int depth = 0;
    Scope scope = Scope::Entire;
    std::optional<double> f1;
};

/// One training run per depth (same seed and config otherwise); writes
/// `depth_sweep.csv` (`depth,scope,f1`) and per-depth run directories.
std::vector<DepthRow> depth_sweep(const DatasetBundle& bundle, const TrainConfig& base, std::span<const int> depths,
                                  const std::optional<std::filesystem::path>& out_dir);
std::string depth_sweep_csv(std::span<const DepthRow> rows);

/// `id,label,z0,...` for every sample of `bundle` in order.
std::string embeddings_csv(CuciNetImpl& model, const DatasetBundle& bundle, int batch_size, int max_len);
std::size_t export_embeddings(const std::filesystem::path& checkpoint, const DatasetBundle& bundle,
                              const std::filesystem::path& out_file);

}  // namespace cuci
