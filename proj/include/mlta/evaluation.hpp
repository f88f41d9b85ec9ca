#pragma once

#include <iomanip>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mlta/gnn.hpp"
#include "mlta/labels.hpp"
#include "mlta/metrics.hpp"
#include "mlta/training.hpp"

namespace mlta {

// Eval-mode class predictions for a list of featurized MLNs.
inline std::vector<int> predict(ModelParams& params, const std::vector<FeaturizedMln>& mlns,
                                int batch_size = 32) {
    std::vector<int> out;
    out.reserve(mlns.size());
    for (const GraphBatch& batch : eval_batches(mlns, batch_size)) {
        const std::vector<int> preds = predict(params, batch);
        out.insert(out.end(), preds.begin(), preds.end());
    }
    return out;
}

// Emotion prediction translated back to its binary polarity.
inline Sentiment sentiment_collapse(EmotionLabel label) { return label_sentiment(label); }

inline MetricsReport evaluate(ModelParams& params, const std::vector<FeaturizedMln>& mlns,
                              int batch_size = 32) {
    const std::vector<int> preds = predict(params, mlns, batch_size);
    std::vector<int> truth;
    truth.reserve(mlns.size());
    for (const FeaturizedMln& m : mlns) truth.push_back(m.label);
    return metrics(ConfusionMatrix::from_predictions(truth, preds, params.dims.classes));
}

// ---- pair-graph baseline: 2-tweet MLNs scored as binary sentiment ----

struct PairBaselineRow {
    std::string name;
    ConfusionMatrix confusion{2};  // classes: 0 = positive, 1 = negative
    MetricsReport report;
};

namespace detail {

inline int polarity_index(Sentiment s) { return s == Sentiment::Positive ? 0 : 1; }

}  // namespace detail

// Scores the model's collapsed predictions on 2-tweet MLNs, side by side
// with any number of external per-pair prediction lists.
inline std::vector<PairBaselineRow> pair_baseline(
    const std::vector<FeaturizedMln>& pairs, ModelParams& params,
    const std::vector<std::pair<std::string, std::vector<Sentiment>>>& external = {},
    int batch_size = 32) {
    for (const FeaturizedMln& m : pairs)
        if (m.group_size != 2)
            throw BadGroupSize("pair baseline needs 2-tweet MLNs, got group size " +
                               std::to_string(m.group_size));
    std::vector<int> truth;
    truth.reserve(pairs.size());
    for (const FeaturizedMln& m : pairs)
        truth.push_back(detail::polarity_index(label_sentiment(static_cast<EmotionLabel>(m.label))));

    std::vector<PairBaselineRow> rows;
    {
        PairBaselineRow row;
        row.name = std::string("mlta-") + to_string(params.conv);
        const std::vector<int> preds = predict(params, pairs, batch_size);
        for (std::size_t i = 0; i < pairs.size(); ++i)
            row.confusion.add(truth[i],
                              detail::polarity_index(sentiment_collapse(static_cast<EmotionLabel>(preds[i]))));
        row.report = metrics(row.confusion);
        rows.push_back(std::move(row));
    }
    for (const auto& [name, preds] : external) {
        if (preds.size() != pairs.size())
            throw LengthMismatch(name + ": " + std::to_string(preds.size()) +
                                 " predictions for " + std::to_string(pairs.size()) + " pairs");
        PairBaselineRow row;
        row.name = name;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            if (preds[i] == Sentiment::Neutral)
                throw ParseError(name + ": neutral prediction is not a pair-baseline polarity");
            row.confusion.add(truth[i], detail::polarity_index(preds[i]));
        }
        row.report = metrics(row.confusion);
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---- ablation harness: all three convolutions, identical data and seeds ----

struct AblationRow {
    ConvType conv = ConvType::Gcn;
    double test_f1 = 0.0;
    double seconds_per_epoch = 0.0;
    int best_epoch = 0;
};

inline std::vector<AblationRow> ablation(const std::vector<FeaturizedMln>& train_set,
                                         const std::vector<FeaturizedMln>& test_set,
                                         const TrainConfig& base_config) {
    std::vector<AblationRow> rows;
    for (ConvType conv : {ConvType::Gcn, ConvType::GatV2, ConvType::GraphConv}) {
        TrainConfig config = base_config;
        config.conv = conv;
        const TrainResult result = train(train_set, test_set, config);
        rows.push_back(AblationRow{conv, result.best_test_f1, result.mean_seconds_per_epoch,
                                   result.best_epoch});
    }
    return rows;
}

// ---- report rendering ----

inline void print_metrics(std::ostream& out, const MetricsReport& r,
                          const std::vector<std::string>& class_names) {
    out << std::fixed << std::setprecision(4);
    out << std::left << std::setw(12) << "class" << std::right << std::setw(10) << "precision"
        << std::setw(10) << "recall" << std::setw(10) << "f1" << '\n';
    for (std::size_t k = 0; k < r.per_class.size(); ++k) {
        const std::string name = k < class_names.size() ? class_names[k] : std::to_string(k);
        out << std::left << std::setw(12) << name << std::right << std::setw(10)
            << r.per_class[k].precision << std::setw(10) << r.per_class[k].recall << std::setw(10)
            << r.per_class[k].f1 << '\n';
    }
    out << std::left << std::setw(12) << "macro" << std::right << std::setw(10)
        << r.macro_precision << std::setw(10) << r.macro_recall << std::setw(10) << r.macro_f1
        << '\n';
    out << "samples: " << r.samples;
    if (r.zero_division) out << "  (zero-division classes scored 0)";
    out << '\n';
    out.unsetf(std::ios::fixed);
}

inline void print_ablation(std::ostream& out, const std::vector<AblationRow>& rows) {
    out << std::left << std::setw(12) << "conv" << std::right << std::setw(10) << "test_f1"
        << std::setw(16) << "sec/epoch" << std::setw(12) << "best_epoch" << '\n';
    out << std::fixed;
    for (const AblationRow& r : rows)
        out << std::left << std::setw(12) << to_string(r.conv) << std::right << std::setw(10)
            << std::setprecision(4) << r.test_f1 << std::setw(16) << std::setprecision(3)
            << r.seconds_per_epoch << std::setw(12) << r.best_epoch << '\n';
    out.unsetf(std::ios::fixed);
}

inline void print_pair_baseline(std::ostream& out, const std::vector<PairBaselineRow>& rows) {
    out << std::left << std::setw(24) << "model" << std::right << std::setw(10) << "f1"
        << std::setw(12) << "precision" << std::setw(10) << "recall" << '\n';
    out << std::fixed << std::setprecision(4);
    for (const PairBaselineRow& r : rows)
        out << std::left << std::setw(24) << r.name << std::right << std::setw(10)
            << r.report.macro_f1 << std::setw(12) << r.report.macro_precision << std::setw(10)
            << r.report.macro_recall << '\n';
    out.unsetf(std::ios::fixed);
}

inline nlohmann::json to_json(const std::vector<AblationRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const AblationRow& r : rows)
        out.push_back({{"conv", to_string(r.conv)},
                       {"test_f1", r.test_f1},
                       {"seconds_per_epoch", r.seconds_per_epoch},
                       {"best_epoch", r.best_epoch}});
    return out;
}

inline nlohmann::json to_json(const std::vector<PairBaselineRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const PairBaselineRow& r : rows)
        out.push_back({{"model", r.name},
                       {"confusion", to_json(r.confusion)},
                       {"metrics", to_json(r.report)}});
    return out;
}

}  // namespace mlta
