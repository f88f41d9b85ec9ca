#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "mlta/embedding.hpp"
#include "mlta/gnn.hpp"
#include "mlta/metrics.hpp"
#include "mlta/mln.hpp"
#include "mlta/rng.hpp"

namespace mlta {

struct TrainConfig {
    double learning_rate = 0.001;
    int epochs = 100;
    int batch_size = 32;
    double dropout = 0.5;
    std::uint64_t seed = 0;
    ConvType conv = ConvType::GraphConv;
    int heads = 5;
    double split_fraction = 0.8;
    ModelDims dims;
    PoolKind pool = PoolKind::Mean;
    ReadoutKind readout = ReadoutKind::Concat;
    std::vector<double> class_weights;  // empty = uniform
    double stop_at_test_f1 = -1.0;      // early exit once reached; <0 disables

    void validate() const {
        if (learning_rate <= 0.0) throw Error("learning rate must be positive");
        if (split_fraction <= 0.0 || split_fraction >= 1.0)
            throw Error("split fraction must be in (0, 1)");
        if (epochs < 0) throw Error("epochs must be non-negative");
        if (batch_size < 1) throw Error("batch size must be at least 1");
        if (dropout < 0.0 || dropout >= 1.0) throw Error("dropout must be in [0, 1)");
    }
};

// A featurized Tweet-MLN: topology plus node features, ready for batching.
struct FeaturizedMln {
    std::array<LayerTopology, 3> topo;
    std::array<Matrix, 3> features;
    int label = 0;
    int group_size = 0;
};

inline FeaturizedMln featurize_mln(const TweetMln& mln, const EmbeddingTable& primary,
                                   const EmbeddingTable& fallback) {
    FeaturizedMln out;
    out.features = featurize(mln, primary, fallback);
    for (int layer = 0; layer < 3; ++layer) out.topo[layer] = LayerTopology::of(mln.layer(layer));
    out.label = static_cast<int>(mln.label);
    out.group_size = mln.group_size;
    return out;
}

inline std::vector<FeaturizedMln> featurize_all(const std::vector<TweetMln>& mlns,
                                                const EmbeddingTable& primary,
                                                const EmbeddingTable& fallback) {
    std::vector<FeaturizedMln> out;
    out.reserve(mlns.size());
    for (const TweetMln& m : mlns) out.push_back(featurize_mln(m, primary, fallback));
    return out;
}

namespace detail {

template <typename T>
int label_index(const T& item) {
    if constexpr (requires { item.label; }) {
        if constexpr (std::is_same_v<std::decay_t<decltype(item.label)>, EmotionLabel>)
            return static_cast<int>(item.label);
        else
            return static_cast<int>(item.label);
    }
}

}  // namespace detail

// Stratified split: a seeded shuffle within each class, then a prefix split
// that keeps both sides non-empty per class.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split(const std::vector<T>& items, double fraction,
                                                std::uint64_t seed) {
    if (items.empty()) throw TooFewSamples("cannot split an empty set");
    if (fraction <= 0.0 || fraction >= 1.0) throw Error("split fraction must be in (0, 1)");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < items.size(); ++i)
        by_class[detail::label_index(items[i])].push_back(i);
    for (const auto& [cls, idx] : by_class)
        if (idx.size() < 2)
            throw TooFewSamples("class " + std::to_string(cls) + " has " +
                                std::to_string(idx.size()) + " sample(s), need at least 2");
    std::pair<std::vector<T>, std::vector<T>> out;
    for (auto& [cls, idx] : by_class) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(cls)));
        rng.shuffle(idx);
        const auto n = idx.size();
        std::size_t n_train = static_cast<std::size_t>(fraction * static_cast<double>(n));
        n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
        for (std::size_t k = 0; k < n; ++k)
            (k < n_train ? out.first : out.second).push_back(items[idx[k]]);
    }
    return out;
}

// Block-diagonal batch assembly: per layer, node features are stacked, edges
// are offset into the stacked index space, and segment ids map nodes back to
// their graph so pooling stays per-graph.
inline GraphBatch make_batch(const std::vector<FeaturizedMln>& set,
                             const std::vector<std::size_t>& members) {
    GraphBatch batch;
    batch.num_graphs = static_cast<int>(members.size());
    for (int layer = 0; layer < 3; ++layer) {
        int total_nodes = 0, total_cols = 0;
        std::size_t total_edges = 0;
        for (std::size_t m : members) {
            total_nodes += set[m].topo[layer].num_nodes;
            total_edges += set[m].topo[layer].edges.size();
            total_cols = set[m].features[layer].cols();
        }
        Matrix features(total_nodes, total_cols);
        LayerTopology topo;
        topo.num_nodes = total_nodes;
        topo.edges.reserve(total_edges);
        std::vector<int>& segments = batch.segments[layer];
        segments.reserve(total_nodes);
        int offset = 0, graph = 0;
        for (std::size_t m : members) {
            const FeaturizedMln& g = set[m];
            topo.directed = g.topo[layer].directed;
            const Matrix& f = g.features[layer];
            for (int r = 0; r < f.rows(); ++r) {
                for (int c = 0; c < f.cols(); ++c) features(offset + r, c) = f(r, c);
                segments.push_back(graph);
            }
            for (const auto& [s, d] : g.topo[layer].edges)
                topo.edges.emplace_back(s + offset, d + offset);
            offset += g.topo[layer].num_nodes;
            ++graph;
        }
        batch.features[layer] = std::move(features);
        batch.topo[layer] = std::move(topo);
    }
    for (std::size_t m : members) batch.labels.push_back(set[m].label);
    return batch;
}

// Seeded per-epoch reshuffle, then consecutive blocks of batch_size.
inline std::vector<GraphBatch> make_batches(const std::vector<FeaturizedMln>& set, int batch_size,
                                            std::uint64_t seed, int epoch) {
    if (batch_size < 1) throw Error("batch size must be at least 1");
    std::vector<std::size_t> order(set.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(seed, 0x65706f63 /* epoch stream */, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    std::vector<GraphBatch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        batches.push_back(make_batch(set, {order.begin() + start, order.begin() + end}));
    }
    return batches;
}

// Standard Adam with bias correction.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t step = 0;
    std::vector<Matrix> m;
    std::vector<Matrix> v;

    explicit AdamState(const std::vector<Parameter*>& params) {
        for (const Parameter* p : params) {
            m.push_back(Matrix::zeros_like(p->value));
            v.push_back(Matrix::zeros_like(p->value));
        }
    }
};

// One optimizer step over populated gradients; gradients are zeroed after.
inline void adam_step(const std::vector<Parameter*>& params, AdamState& state, double lr) {
    if (params.size() != state.m.size())
        throw ShapeMismatch("adam state tracks " + std::to_string(state.m.size()) +
                            " parameters, got " + std::to_string(params.size()));
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = *params[i];
        if (!p.grad.all_finite()) throw NonFiniteGradient(p.name);
        double* m = state.m[i].data();
        double* v = state.v[i].data();
        double* g = p.grad.data();
        double* w = p.value.data();
        for (std::size_t k = 0; k < p.value.size(); ++k) {
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            w[k] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
        p.zero_grad();
    }
}

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double train_f1 = 0.0;
    double test_f1 = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    ModelParams params;  // best test-F1 checkpoint
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_test_f1 = 0.0;
    double mean_seconds_per_epoch = 0.0;
};

// Sequential (unshuffled) batches used for evaluation passes.
inline std::vector<GraphBatch> eval_batches(const std::vector<FeaturizedMln>& set, int batch_size) {
    std::vector<GraphBatch> batches;
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < set.size(); i += batch_size) {
        members.clear();
        for (std::size_t k = i; k < std::min(set.size(), i + static_cast<std::size_t>(batch_size)); ++k)
            members.push_back(k);
        batches.push_back(make_batch(set, members));
    }
    return batches;
}

inline double evaluate_macro_f1(ModelParams& params, const std::vector<FeaturizedMln>& set,
                                int batch_size) {
    std::vector<int> truth, predicted;
    for (const GraphBatch& batch : eval_batches(set, batch_size)) {
        const std::vector<int> preds = predict(params, batch);
        predicted.insert(predicted.end(), preds.begin(), preds.end());
        truth.insert(truth.end(), batch.labels.begin(), batch.labels.end());
    }
    return macro_f1(truth, predicted, params.dims.classes);
}

// Mini-batch training: per-epoch reshuffle, forward / cross-entropy /
// backward / Adam, per-epoch train and test macro-F1, best checkpoint kept.
inline TrainResult train(const std::vector<FeaturizedMln>& train_set,
                         const std::vector<FeaturizedMln>& test_set, const TrainConfig& config) {
    config.validate();
    if (train_set.empty() || test_set.empty()) throw TooFewSamples("train and test must be non-empty");

    ModelDims dims = config.dims;
    dims.f_in = train_set.front().features[0].cols();

    TrainResult result{ModelParams::init(config.conv, dims, config.seed, config.heads, config.pool,
                                         config.readout),
                       {}, 0, -1.0, 0.0};
    ModelParams current = result.params;
    AdamState adam(current.parameters());

    double total_seconds = 0.0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        double loss_sum = 0.0;
        std::int64_t loss_count = 0;
        int step = 0;
        for (GraphBatch& batch : make_batches(train_set, config.batch_size, config.seed, epoch)) {
            Tape tape;
            Value logits = forward(tape, batch, current, /*training=*/true, config.dropout,
                                   mix_seed(config.seed, epoch, step));
            Value loss = cross_entropy(tape, logits, batch.labels, config.class_weights);
            const double loss_value = tape.val(loss).scalar();
            if (!std::isfinite(loss_value))
                throw NonFiniteValue("training loss diverged at epoch " + std::to_string(epoch));
            tape.backward(loss);
            adam_step(current.parameters(), adam, config.learning_rate);
            loss_sum += loss_value * batch.num_graphs;
            loss_count += batch.num_graphs;
            ++step;
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        total_seconds += seconds;

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(loss_count);
        stats.train_f1 = evaluate_macro_f1(current, train_set, config.batch_size);
        stats.test_f1 = evaluate_macro_f1(current, test_set, config.batch_size);
        stats.seconds = seconds;
        result.history.push_back(stats);

        if (stats.test_f1 > result.best_test_f1) {
            result.best_test_f1 = stats.test_f1;
            result.best_epoch = epoch;
            result.params = current;
        }
        if (config.stop_at_test_f1 >= 0.0 && stats.test_f1 >= config.stop_at_test_f1) break;
    }
    if (!result.history.empty())
        result.mean_seconds_per_epoch = total_seconds / static_cast<double>(result.history.size());
    if (result.best_epoch == 0) result.params = current;  // 0 epochs: initialized params
    return result;
}

// ---- history file: CSV with epoch, train_loss, train_f1, test_f1, seconds ----

namespace detail {

inline std::string format_csv_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, p);
}

}  // namespace detail

inline void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write history " + path);
    out << "epoch,train_loss,train_f1,test_f1,seconds\n";
    for (const EpochStats& e : history)
        out << e.epoch << ',' << detail::format_csv_double(e.train_loss) << ','
            << detail::format_csv_double(e.train_f1) << ',' << detail::format_csv_double(e.test_f1)
            << ',' << detail::format_csv_double(e.seconds) << '\n';
}

}  // namespace mlta
