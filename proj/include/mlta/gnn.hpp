#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mlta/autodiff.hpp"
#include "mlta/labels.hpp"
#include "mlta/matrix.hpp"
#include "mlta/mln.hpp"
#include "mlta/rng.hpp"

namespace mlta {

enum class ConvType { Gcn, GatV2, GraphConv };
enum class PoolKind { Mean, MaxAbs };
enum class ReadoutKind { Concat, Sum };

inline const char* to_string(ConvType t) {
    switch (t) {
        case ConvType::Gcn: return "gcn";
        case ConvType::GatV2: return "gatv2";
        default: return "graphconv";
    }
}

inline ConvType parse_conv_type(std::string_view s) {
    const std::string low = lowercase_ascii(s);
    if (low == "gcn" || low == "gcnconv") return ConvType::Gcn;
    if (low == "gatv2" || low == "gatv2conv" || low == "gat") return ConvType::GatV2;
    if (low == "graphconv" || low == "graph") return ConvType::GraphConv;
    throw ParseError("unknown convolution type '" + std::string(s) + "'");
}

inline const char* to_string(PoolKind p) { return p == PoolKind::Mean ? "mean" : "maxabs"; }

inline PoolKind parse_pool_kind(std::string_view s) {
    const std::string low = lowercase_ascii(s);
    if (low == "mean") return PoolKind::Mean;
    if (low == "maxabs" || low == "max_abs") return PoolKind::MaxAbs;
    throw ParseError("unknown pooling kind '" + std::string(s) + "'");
}

inline const char* to_string(ReadoutKind r) { return r == ReadoutKind::Concat ? "concat" : "sum"; }

inline ReadoutKind parse_readout_kind(std::string_view s) {
    const std::string low = lowercase_ascii(s);
    if (low == "concat") return ReadoutKind::Concat;
    if (low == "sum") return ReadoutKind::Sum;
    throw ParseError("unknown readout kind '" + std::string(s) + "'");
}

// Graph structure handed to the convolution operators. Undirected graphs
// keep each edge once; the operators expand them symmetrically.
struct LayerTopology {
    int num_nodes = 0;
    bool directed = false;
    std::vector<std::pair<int, int>> edges;

    static LayerTopology of(const LayerGraph& g) {
        return LayerTopology{g.num_nodes(), g.directed, g.edges};
    }
};

// A block-diagonal composition of B graphs per layer: node features stacked,
// edge indices offset per graph, segment ids mapping node -> graph.
struct GraphBatch {
    std::array<LayerTopology, 3> topo;
    std::array<Matrix, 3> features;
    std::array<std::vector<int>, 3> segments;
    std::vector<int> labels;
    int num_graphs = 0;
};

struct GcnWeights {
    Parameter theta;
};

struct GatV2Weights {
    std::vector<Parameter> theta;  // per head, (2*F_in) x F_out
    std::vector<Parameter> attn;   // per head, F_out x 1
};

struct GraphConvWeights {
    Parameter w1;
    Parameter w2;
};

using ConvWeights = std::variant<GcnWeights, GatV2Weights, GraphConvWeights>;

inline constexpr double kAttentionLeakySlope = 0.2;

namespace detail {

// Messages flow sender -> receiver. For directed graphs neighbors are
// in-neighbors (edge src feeds edge dst); undirected edges feed both ways.
inline void neighbor_messages(const LayerTopology& t, std::vector<int>& senders,
                              std::vector<int>& receivers) {
    for (const auto& [s, d] : t.edges) {
        senders.push_back(s);
        receivers.push_back(d);
        if (!t.directed) {
            senders.push_back(d);
            receivers.push_back(s);
        }
    }
}

}  // namespace detail

// Symmetric-normalized aggregation with self-loops: X' = D^-1/2 (A+I) D^-1/2 X Theta,
// with A kept as given (row-sum degrees) on directed layers.
inline Value gcn_forward(Tape& tape, const LayerTopology& topo, Value x, Parameter& theta) {
    if (tape.val(x).rows() != topo.num_nodes)
        throw ShapeMismatch("gcn_forward: " + std::to_string(topo.num_nodes) + " nodes vs " +
                            tape.val(x).shape_str());
    std::vector<double> degree(topo.num_nodes, 1.0);  // self-loop
    for (const auto& [s, d] : topo.edges) {
        degree[s] += 1.0;
        if (!topo.directed) degree[d] += 1.0;
    }
    std::vector<int> senders, receivers;
    std::vector<double> coeffs;
    // Row i of (A+I)X sums X over j with A[i][j] = 1, i.e. stored edge (i, j).
    for (const auto& [s, d] : topo.edges) {
        receivers.push_back(s);
        senders.push_back(d);
        coeffs.push_back(1.0 / std::sqrt(degree[s] * degree[d]));
        if (!topo.directed) {
            receivers.push_back(d);
            senders.push_back(s);
            coeffs.push_back(1.0 / std::sqrt(degree[d] * degree[s]));
        }
    }
    for (int i = 0; i < topo.num_nodes; ++i) {
        receivers.push_back(i);
        senders.push_back(i);
        coeffs.push_back(1.0 / degree[i]);
    }
    Value h = tape.edge_weighted_sum(x, std::move(senders), std::move(receivers),
                                     std::move(coeffs), topo.num_nodes);
    return tape.matmul(h, tape.param(theta));
}

// x'_i = W1 x_i + W2 sum_{j in N(i)} x_j (unit edge weights).
inline Value graphconv_forward(Tape& tape, const LayerTopology& topo, Value x,
                               GraphConvWeights& w) {
    if (tape.val(x).rows() != topo.num_nodes)
        throw ShapeMismatch("graphconv_forward: " + std::to_string(topo.num_nodes) + " nodes vs " +
                            tape.val(x).shape_str());
    std::vector<int> senders, receivers;
    detail::neighbor_messages(topo, senders, receivers);
    std::vector<double> coeffs(senders.size(), 1.0);
    Value agg = tape.edge_weighted_sum(x, std::move(senders), std::move(receivers),
                                       std::move(coeffs), topo.num_nodes);
    return tape.add(tape.matmul(x, tape.param(w.w1)), tape.matmul(agg, tape.param(w.w2)));
}

// Attention coefficients of a GATv2 forward pass, kept for inspection.
struct GatAttention {
    std::vector<int> senders;            // incl. self-loops
    std::vector<int> receivers;
    std::vector<Value> alpha_per_head;   // one Ex1 column per head
};

// Per head: score(i,j) = a^T LeakyReLU(Theta [x_i || x_j]) over j in N(i) u {i},
// alpha = softmax per receiver, message = alpha * (Theta_bottom x_j), heads
// concatenated. Theta is applied in factored form (top half on x_i, bottom
// half on x_j), which is algebraically the concatenated product.
inline Value gatv2_forward(Tape& tape, const LayerTopology& topo, Value x, GatV2Weights& w,
                           GatAttention* attention_out = nullptr) {
    if (tape.val(x).rows() != topo.num_nodes)
        throw ShapeMismatch("gatv2_forward: " + std::to_string(topo.num_nodes) + " nodes vs " +
                            tape.val(x).shape_str());
    const int f_in = tape.val(x).cols();
    std::vector<int> senders, receivers;
    detail::neighbor_messages(topo, senders, receivers);
    for (int i = 0; i < topo.num_nodes; ++i) {
        senders.push_back(i);
        receivers.push_back(i);
    }
    if (attention_out) {
        attention_out->senders = senders;
        attention_out->receivers = receivers;
        attention_out->alpha_per_head.clear();
    }

    std::vector<Value> heads;
    for (std::size_t h = 0; h < w.theta.size(); ++h) {
        Value theta = tape.param(w.theta[h]);
        if (tape.val(theta).rows() != 2 * f_in)
            throw ShapeMismatch("gatv2_forward: head " + std::to_string(h) + " theta " +
                                tape.val(theta).shape_str() + " for input width " +
                                std::to_string(f_in));
        Value self_proj = tape.matmul(x, tape.slice_rows(theta, 0, f_in));
        Value nbr_proj = tape.matmul(x, tape.slice_rows(theta, f_in, 2 * f_in));
        Value gathered_self = tape.gather_rows(self_proj, receivers);
        Value gathered_nbr = tape.gather_rows(nbr_proj, senders);
        Value pre = tape.leaky_relu(tape.add(gathered_self, gathered_nbr), kAttentionLeakySlope);
        Value score = tape.matmul(pre, tape.param(w.attn[h]));
        Value alpha = tape.segment_softmax(score, receivers, topo.num_nodes);
        if (attention_out) attention_out->alpha_per_head.push_back(alpha);
        Value messages = tape.mul_col_broadcast(gathered_nbr, alpha);
        heads.push_back(tape.scatter_sum_rows(messages, receivers, topo.num_nodes));
    }
    return heads.size() == 1 ? heads[0]
                             : tape.col_concat(std::span<const Value>(heads.data(), heads.size()));
}

inline Value conv_forward(Tape& tape, const LayerTopology& topo, Value x, ConvWeights& w) {
    if (auto* gcn = std::get_if<GcnWeights>(&w)) return gcn_forward(tape, topo, x, gcn->theta);
    if (auto* gat = std::get_if<GatV2Weights>(&w)) return gatv2_forward(tape, topo, x, *gat);
    return graphconv_forward(tape, topo, x, std::get<GraphConvWeights>(w));
}

// Model dimensions. f_in mirrors the embedding width; hidden is the per-head
// convolution output width.
struct ModelDims {
    int f_in = 300;
    int hidden = 128;
    int fc1 = 128;
    int fc2 = 64;
    int classes = kNumClasses;
};

struct ModelParams {
    ConvType conv = ConvType::GraphConv;
    int heads = 5;
    PoolKind pool = PoolKind::Mean;
    ReadoutKind readout = ReadoutKind::Concat;
    ModelDims dims;
    std::uint64_t seed = 0;

    struct Branch {
        ConvWeights conv1;
        ConvWeights conv2;
    };
    std::array<Branch, 3> branch;

    Parameter fc1_w, fc1_b, fc2_w, fc2_b, out_w, out_b;

    int branch_width() const {
        return conv == ConvType::GatV2 ? heads * dims.hidden : dims.hidden;
    }
    int readout_width() const {
        return readout == ReadoutKind::Concat ? 3 * branch_width() : branch_width();
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out;
        for (Branch& b : branch)
            for (ConvWeights* cw : {&b.conv1, &b.conv2}) {
                if (auto* g = std::get_if<GcnWeights>(cw)) {
                    out.push_back(&g->theta);
                } else if (auto* g = std::get_if<GatV2Weights>(cw)) {
                    for (std::size_t h = 0; h < g->theta.size(); ++h) {
                        out.push_back(&g->theta[h]);
                        out.push_back(&g->attn[h]);
                    }
                } else {
                    auto& g2 = std::get<GraphConvWeights>(*cw);
                    out.push_back(&g2.w1);
                    out.push_back(&g2.w2);
                }
            }
        for (Parameter* p : {&fc1_w, &fc1_b, &fc2_w, &fc2_b, &out_w, &out_b}) out.push_back(p);
        return out;
    }

    void zero_grad() {
        for (Parameter* p : parameters()) p->zero_grad();
    }

    static ModelParams init(ConvType conv, const ModelDims& dims, std::uint64_t seed,
                            int heads = 5, PoolKind pool = PoolKind::Mean,
                            ReadoutKind readout = ReadoutKind::Concat) {
        ModelParams p;
        p.conv = conv;
        p.heads = conv == ConvType::GatV2 ? heads : 1;
        if (conv == ConvType::GatV2 && heads < 1) throw Error("gatv2 needs at least one head");
        p.pool = pool;
        p.readout = readout;
        p.dims = dims;
        p.seed = seed;
        Rng rng(mix_seed(seed, 0x6d6c7461 /* "mlta" */));

        const auto make_conv = [&](int layer, int stage, int in_w, int out_w) -> ConvWeights {
            const std::string base =
                "layer" + std::to_string(layer + 1) + ".conv" + std::to_string(stage + 1);
            switch (conv) {
                case ConvType::Gcn:
                    return GcnWeights{Parameter(base + ".theta", Matrix::glorot(in_w, out_w, rng))};
                case ConvType::GatV2: {
                    GatV2Weights w;
                    for (int h = 0; h < p.heads; ++h) {
                        const std::string hb = base + ".head" + std::to_string(h);
                        w.theta.emplace_back(hb + ".theta", Matrix::glorot(2 * in_w, out_w, rng));
                        w.attn.emplace_back(hb + ".attn", Matrix::glorot(out_w, 1, rng));
                    }
                    return w;
                }
                default:
                    return GraphConvWeights{
                        Parameter(base + ".w1", Matrix::glorot(in_w, out_w, rng)),
                        Parameter(base + ".w2", Matrix::glorot(in_w, out_w, rng))};
            }
        };

        const int conv1_out = p.branch_width();
        for (int layer = 0; layer < 3; ++layer) {
            p.branch[layer].conv1 = make_conv(layer, 0, dims.f_in, dims.hidden);
            p.branch[layer].conv2 = make_conv(layer, 1, conv1_out, dims.hidden);
        }
        p.fc1_w = Parameter("fc1.weight", Matrix::glorot(p.readout_width(), dims.fc1, rng));
        p.fc1_b = Parameter("fc1.bias", Matrix(1, dims.fc1));
        p.fc2_w = Parameter("fc2.weight", Matrix::glorot(dims.fc1, dims.fc2, rng));
        p.fc2_b = Parameter("fc2.bias", Matrix(1, dims.fc2));
        p.out_w = Parameter("out.weight", Matrix::glorot(dims.fc2, dims.classes, rng));
        p.out_b = Parameter("out.bias", Matrix(1, dims.classes));
        return p;
    }
};

// conv -> ReLU -> conv -> ReLU -> dropout -> per-graph pooling.
inline Value layer_branch(Tape& tape, const LayerTopology& topo, Value x,
                          ModelParams::Branch& weights, const std::vector<int>& segments,
                          int num_graphs, const ModelParams& params, double dropout_rate,
                          bool training, std::uint64_t dropout_seed) {
    Value h = tape.relu(conv_forward(tape, topo, x, weights.conv1));
    h = tape.relu(conv_forward(tape, topo, h, weights.conv2));
    h = tape.dropout(h, dropout_rate, training, dropout_seed);
    return params.pool == PoolKind::Mean ? tape.segment_mean(h, segments, num_graphs)
                                         : tape.segment_max_abs(h, segments, num_graphs);
}

// Full forward pass over a batch: three branch readouts combined, then the
// fully-connected head down to one logit row of 6 per graph.
inline Value forward(Tape& tape, const GraphBatch& batch, ModelParams& params, bool training,
                     double dropout_rate = 0.5, std::uint64_t dropout_seed = 0) {
    std::array<Value, 3> pooled;
    for (int layer = 0; layer < 3; ++layer) {
        Value x = tape.constant(batch.features[layer]);
        pooled[layer] = layer_branch(tape, batch.topo[layer], x, params.branch[layer],
                                     batch.segments[layer], batch.num_graphs, params, dropout_rate,
                                     training, mix_seed(dropout_seed, layer));
    }
    Value combined = params.readout == ReadoutKind::Concat
                         ? tape.col_concat({pooled[0], pooled[1], pooled[2]})
                         : tape.add(tape.add(pooled[0], pooled[1]), pooled[2]);
    Value z = tape.relu(tape.add_bias(tape.matmul(combined, tape.param(params.fc1_w)),
                                      tape.param(params.fc1_b)));
    z = tape.relu(tape.add_bias(tape.matmul(z, tape.param(params.fc2_w)), tape.param(params.fc2_b)));
    return tape.add_bias(tape.matmul(z, tape.param(params.out_w)), tape.param(params.out_b));
}

// Batch-weighted cross entropy, re-exported at the model level.
inline Value cross_entropy(Tape& tape, Value logits, std::vector<int> labels,
                           std::vector<double> class_weights = {}) {
    return tape.cross_entropy(logits, std::move(labels), std::move(class_weights));
}

// Eval-mode argmax predictions; ties break toward the lowest class index.
inline std::vector<int> predict(ModelParams& params, const GraphBatch& batch) {
    Tape tape;
    Value logits = forward(tape, batch, params, /*training=*/false);
    const Matrix& m = tape.val(logits);
    std::vector<int> out(m.rows());
    for (int r = 0; r < m.rows(); ++r) {
        int best = 0;
        for (int c = 1; c < m.cols(); ++c)
            if (m(r, c) > m(r, best)) best = c;
        out[r] = best;
    }
    return out;
}

// ---- checkpoint format ----

namespace detail {

// 17 significant decimal digits: enough for an exact double round-trip.
inline std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, p);
}

inline void write_matrix_json(std::ostream& out, const Matrix& m) {
    out << '[';
    for (int r = 0; r < m.rows(); ++r) {
        if (r) out << ',';
        out << '[';
        for (int c = 0; c < m.cols(); ++c) {
            if (c) out << ',';
            out << format_double(m(r, c));
        }
        out << ']';
    }
    out << ']';
}

}  // namespace detail

// Writes the checkpoint with a deterministic field order and decimal doubles
// so identical models produce byte-identical files.
inline void save_checkpoint(const std::string& path, ModelParams& params) {
    for (Parameter* p : params.parameters())
        if (!p->value.all_finite())
            throw NonFiniteValue("refusing to checkpoint non-finite parameter " + p->name);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out << "{\"format\":\"mlta-checkpoint-v1\"";
    out << ",\"conv\":\"" << to_string(params.conv) << "\"";
    out << ",\"heads\":" << params.heads;
    out << ",\"pool\":\"" << to_string(params.pool) << "\"";
    out << ",\"readout\":\"" << to_string(params.readout) << "\"";
    out << ",\"seed\":" << params.seed;
    out << ",\"dims\":{\"f_in\":" << params.dims.f_in << ",\"hidden\":" << params.dims.hidden
        << ",\"fc1\":" << params.dims.fc1 << ",\"fc2\":" << params.dims.fc2
        << ",\"classes\":" << params.dims.classes << "}";
    out << ",\"params\":{";
    bool first = true;
    for (Parameter* p : params.parameters()) {
        if (!first) out << ',';
        first = false;
        out << '"' << p->name << "\":";
        detail::write_matrix_json(out, p->value);
    }
    out << "}}\n";
    if (!out) throw IoError("failed writing checkpoint " + path);
}

inline ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (j.value("format", "") != "mlta-checkpoint-v1")
        throw ParseError(path + ": not an mlta checkpoint");
    ModelDims dims;
    const auto& jd = j.at("dims");
    dims.f_in = jd.at("f_in").get<int>();
    dims.hidden = jd.at("hidden").get<int>();
    dims.fc1 = jd.at("fc1").get<int>();
    dims.fc2 = jd.at("fc2").get<int>();
    dims.classes = jd.at("classes").get<int>();
    ModelParams params = ModelParams::init(parse_conv_type(j.at("conv").get<std::string>()), dims,
                                           j.at("seed").get<std::uint64_t>(),
                                           j.at("heads").get<int>(),
                                           parse_pool_kind(j.at("pool").get<std::string>()),
                                           parse_readout_kind(j.at("readout").get<std::string>()));
    const auto& jp = j.at("params");
    for (Parameter* p : params.parameters()) {
        if (!jp.contains(p->name)) throw ParseError(path + ": missing parameter " + p->name);
        const auto& rows = jp.at(p->name);
        if (static_cast<int>(rows.size()) != p->value.rows())
            throw ParseError(path + ": parameter " + p->name + " row count mismatch");
        for (int r = 0; r < p->value.rows(); ++r) {
            const auto& row = rows.at(r);
            if (static_cast<int>(row.size()) != p->value.cols())
                throw ParseError(path + ": parameter " + p->name + " column count mismatch");
            for (int c = 0; c < p->value.cols(); ++c) p->value(r, c) = row.at(c).get<double>();
        }
    }
    return params;
}

}  // namespace mlta
