#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mlta/errors.hpp"

namespace mlta {

// Square count grid; rows are true classes, columns predicted classes.
struct ConfusionMatrix {
    int classes = 0;
    std::vector<std::int64_t> counts;

    explicit ConfusionMatrix(int n = 0) : classes(n), counts(static_cast<std::size_t>(n) * n, 0) {}

    std::int64_t& at(int truth, int predicted) {
        return counts[static_cast<std::size_t>(truth) * classes + predicted];
    }
    std::int64_t at(int truth, int predicted) const {
        return counts[static_cast<std::size_t>(truth) * classes + predicted];
    }

    void add(int truth, int predicted) { ++at(truth, predicted); }

    std::int64_t total() const {
        std::int64_t t = 0;
        for (std::int64_t c : counts) t += c;
        return t;
    }

    static ConfusionMatrix from_predictions(const std::vector<int>& truth,
                                            const std::vector<int>& predicted, int classes) {
        if (truth.size() != predicted.size())
            throw LengthMismatch(std::to_string(truth.size()) + " labels vs " +
                                 std::to_string(predicted.size()) + " predictions");
        ConfusionMatrix cm(classes);
        for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
        return cm;
    }
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MetricsReport {
    std::vector<ClassMetrics> per_class;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    std::int64_t samples = 0;
    double seconds_per_epoch = 0.0;
    bool zero_division = false;  // some class hit the 0/0 -> 0 convention
};

// One-vs-rest precision/recall/F1 per class plus unweighted macro averages.
// Zero denominators yield 0 and set the zero_division flag.
inline MetricsReport metrics(const ConfusionMatrix& cm) {
    if (cm.classes == 0 || cm.total() == 0) throw EmptyMatrix("no samples counted");
    MetricsReport report;
    report.samples = cm.total();
    for (int k = 0; k < cm.classes; ++k) {
        std::int64_t tp = cm.at(k, k), fp = 0, fn = 0;
        for (int j = 0; j < cm.classes; ++j) {
            if (j == k) continue;
            fp += cm.at(j, k);
            fn += cm.at(k, j);
        }
        ClassMetrics m;
        if (tp + fp > 0)
            m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        else
            report.zero_division = true;
        if (tp + fn > 0)
            m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
        else
            report.zero_division = true;
        if (m.precision + m.recall > 0.0)
            m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
        else
            report.zero_division = true;
        report.macro_precision += m.precision;
        report.macro_recall += m.recall;
        report.macro_f1 += m.f1;
        report.per_class.push_back(m);
    }
    report.macro_precision /= cm.classes;
    report.macro_recall /= cm.classes;
    report.macro_f1 /= cm.classes;
    return report;
}

inline double macro_f1(const std::vector<int>& truth, const std::vector<int>& predicted,
                       int classes) {
    return metrics(ConfusionMatrix::from_predictions(truth, predicted, classes)).macro_f1;
}

inline nlohmann::json to_json(const ConfusionMatrix& cm) {
    nlohmann::json rows = nlohmann::json::array();
    for (int t = 0; t < cm.classes; ++t) {
        nlohmann::json row = nlohmann::json::array();
        for (int p = 0; p < cm.classes; ++p) row.push_back(cm.at(t, p));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json per_class = nlohmann::json::array();
    for (const ClassMetrics& m : r.per_class)
        per_class.push_back({{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}});
    return {{"per_class", std::move(per_class)},
            {"macro_precision", r.macro_precision},
            {"macro_recall", r.macro_recall},
            {"macro_f1", r.macro_f1},
            {"samples", r.samples},
            {"seconds_per_epoch", r.seconds_per_epoch},
            {"zero_division", r.zero_division}};
}

}  // namespace mlta
