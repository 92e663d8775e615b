#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cuci/data_model.hpp"

namespace cuci {

enum class Scope { Entire, Subset1, Subset2 };
inline constexpr std::array<Scope, 3> kScopes{Scope::Entire, Scope::Subset1, Scope::Subset2};

std::string_view scope_name(Scope s);
/// "entire" | "subset1" | "subset2" | "all"; "all" yields every scope.
std::vector<Scope> parse_scopes(std::string_view text);

/// Percentages in [0, 100].
struct ClassificationMetrics {
    double precision = 0.0;  // macro over classes
    double recall = 0.0;
    double f1 = 0.0;
    double positive_f1 = 0.0;  // class 1, binary tasks only
    double accuracy = 0.0;
    std::size_t count = 0;
};

/// Macro-averaged precision/recall/F1 over the classes occurring in either
/// vector. Per-class F1 is 0 when precision + recall = 0.
ClassificationMetrics compute_metrics(std::span<const int> y_true, std::span<const int> y_pred, int num_classes);

struct ScopeReport {
    Scope scope = Scope::Entire;
    std::optional<ClassificationMetrics> metrics;  // empty: scope has no samples
};

struct MetricsReport {
    std::vector<ScopeReport> scopes;
    int epoch = -1;  // epoch of the evaluated checkpoint

    const ScopeReport* find(Scope s) const;
};

/// Subset membership per sample: the sarcasm flag when every sample carries
/// one, the binary label as a stand-in when none does.
struct SubsetAssignment {
    std::vector<bool> subset1;
    bool label_proxy = false;
};
SubsetAssignment assign_subsets(const DatasetBundle& bundle);

MetricsReport scope_report(std::span<const int> y_true, std::span<const int> y_pred, const SubsetAssignment& subsets,
                           int num_classes, std::span<const Scope> scopes, int epoch);

/// `scope,precision,recall,f1,epoch` header.
std::string metrics_csv_header();
/// One row per scope; absent scopes print NA.
std::string metrics_csv_rows(const MetricsReport& report);

}  // namespace cuci
