#include "cuci/metrics.hpp"

#include <set>

#include <fmt/format.h>

#include "cuci/errors.hpp"

namespace cuci {

std::string_view scope_name(Scope s) {
    switch (s) {
        case Scope::Entire: return "entire";
        case Scope::Subset1: return "subset1";
        case Scope::Subset2: return "subset2";
    }
    return "?";
}

std::vector<Scope> parse_scopes(std::string_view text) {
    if (text == "all") return {kScopes.begin(), kScopes.end()};
    for (Scope s : kScopes)
        if (scope_name(s) == text) return {s};
    throw ConfigError(fmt::format("unknown scope '{}' (expected entire|subset1|subset2|all)", text));
}

ClassificationMetrics compute_metrics(std::span<const int> y_true, std::span<const int> y_pred, int num_classes) {
    if (y_true.size() != y_pred.size()) throw PreconditionError("compute_metrics: label/prediction size mismatch");
    ClassificationMetrics out;
    out.count = y_true.size();
    if (y_true.empty()) return out;

    std::vector<std::size_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
    std::set<int> present;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i];
        const int p = y_pred[i];
        if (t < 0 || t >= num_classes || p < 0 || p >= num_classes)
            throw PreconditionError(fmt::format("compute_metrics: class index out of range at {}", i));
        present.insert(t);
        present.insert(p);
        if (t == p) {
            ++tp[t];
            ++correct;
        } else {
            ++fp[p];
            ++fn[t];
        }
    }
    auto f1_of = [](double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; };
    auto ratio = [](std::size_t a, std::size_t b) { return b > 0 ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };

    double sp = 0.0, sr = 0.0, sf = 0.0;
    for (int c : present) {
        const double p = ratio(tp[c], tp[c] + fp[c]);
        const double r = ratio(tp[c], tp[c] + fn[c]);
        sp += p;
        sr += r;
        sf += f1_of(p, r);
    }
    const auto k = static_cast<double>(present.size());
    out.precision = 100.0 * sp / k;
    out.recall = 100.0 * sr / k;
    out.f1 = 100.0 * sf / k;
    out.accuracy = 100.0 * ratio(correct, y_true.size());
    if (num_classes == 2)
        out.positive_f1 = 100.0 * f1_of(ratio(tp[1], tp[1] + fp[1]), ratio(tp[1], tp[1] + fn[1]));
    return out;
}

const ScopeReport* MetricsReport::find(Scope s) const {
    for (const auto& r : scopes)
        if (r.scope == s) return &r;
    return nullptr;
}

SubsetAssignment assign_subsets(const DatasetBundle& bundle) {
    SubsetAssignment out;
    std::size_t flagged = 0;
    for (const auto& s : bundle.samples) flagged += s.sarcasm.has_value() ? 1 : 0;
    if (flagged == bundle.samples.size()) {
        for (const auto& s : bundle.samples) out.subset1.push_back(*s.sarcasm == 1);
        return out;
    }
    if (flagged == 0 && bundle.manifest.num_classes == 2) {
        out.label_proxy = true;
        for (const auto& s : bundle.samples) out.subset1.push_back(s.label == 1);
        return out;
    }
    throw DataError(fmt::format("subset scopes need a sarcasm flag on every sample ({} of {} flagged)", flagged,
                                bundle.samples.size()));
}

MetricsReport scope_report(std::span<const int> y_true, std::span<const int> y_pred, const SubsetAssignment& subsets,
                           int num_classes, std::span<const Scope> scopes, int epoch) {
    MetricsReport report;
    report.epoch = epoch;
    for (Scope scope : scopes) {
        std::vector<int> t, p;
        for (std::size_t i = 0; i < y_true.size(); ++i) {
            const bool keep = scope == Scope::Entire || (scope == Scope::Subset1) == subsets.subset1.at(i);
            if (!keep) continue;
            t.push_back(y_true[i]);
            p.push_back(y_pred[i]);
        }
        ScopeReport r{scope, std::nullopt};
        if (!t.empty()) r.metrics = compute_metrics(t, p, num_classes);
        report.scopes.push_back(r);
    }
    return report;
}

std::string metrics_csv_header() { return "scope,precision,recall,f1,epoch\n"; }

std::string metrics_csv_rows(const MetricsReport& report) {
    std::string out;
    for (const auto& r : report.scopes) {
        if (r.metrics)
            out += fmt::format("{},{:.2f},{:.2f},{:.2f},{}\n", scope_name(r.scope), r.metrics->precision,
                               r.metrics->recall, r.metrics->f1, report.epoch);
        else
            out += fmt::format("{},NA,NA,NA,{}\n", scope_name(r.scope), report.epoch);
    }
    return out;
}

}  // namespace cuci
