#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <set>
#include <vector>

#include "dense_oracle.hpp"
#include "mlta/gnn.hpp"
#include "mlta/training.hpp"

using namespace mlta;

namespace {

oracle::Mat to_dense(const Matrix& m) {
    oracle::Mat out(m.rows(), std::vector<double>(m.cols()));
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
    return out;
}

double max_abs_diff(const Matrix& got, const oracle::Mat& want) {
    REQUIRE(got.rows() == static_cast<int>(want.size()));
    double err = 0.0;
    for (int r = 0; r < got.rows(); ++r) {
        REQUIRE(got.cols() == static_cast<int>(want[r].size()));
        for (int c = 0; c < got.cols(); ++c)
            err = std::max(err, std::fabs(got(r, c) - want[r][c]));
    }
    return err;
}

LayerTopology random_topology(Rng& rng, int max_nodes, bool directed) {
    LayerTopology t;
    t.num_nodes = 1 + static_cast<int>(rng.below(max_nodes));
    t.directed = directed;
    std::set<std::pair<int, int>> edges;
    const int attempts = static_cast<int>(rng.below(3 * max_nodes));
    for (int k = 0; k < attempts; ++k) {
        int a = static_cast<int>(rng.below(t.num_nodes));
        int b = static_cast<int>(rng.below(t.num_nodes));
        if (a == b) continue;
        if (!directed && a > b) std::swap(a, b);
        edges.emplace(a, b);
    }
    t.edges.assign(edges.begin(), edges.end());
    return t;
}

// A one-graph batch around a single layer topology, for branch-level tests.
GraphBatch single_layer_batch(const LayerTopology& topo, const Matrix& x, int label = 0) {
    GraphBatch batch;
    batch.num_graphs = 1;
    for (int layer = 0; layer < 3; ++layer) {
        batch.topo[layer] = topo;
        batch.features[layer] = x;
        batch.segments[layer].assign(x.rows(), 0);
    }
    batch.labels = {label};
    return batch;
}

FeaturizedMln random_featurized(Rng& rng, int f_in, int label) {
    FeaturizedMln m;
    for (int layer = 0; layer < 3; ++layer) {
        const bool directed = layer == 1;
        m.topo[layer] = random_topology(rng, 6, directed);
        m.features[layer] = Matrix::uniform(m.topo[layer].num_nodes, f_in, -1.0, 1.0, rng);
    }
    m.label = label;
    m.group_size = m.topo[2].num_nodes;
    return m;
}

}  // namespace

TEST_CASE("gcn: one node without edges is a plain linear map") {
    Rng rng(1);
    Parameter theta("theta", Matrix::uniform(3, 2, -1, 1, rng));
    Matrix x = Matrix::uniform(1, 3, -1, 1, rng);
    LayerTopology topo{1, false, {}};
    Tape tape;
    Value out = gcn_forward(tape, topo, tape.constant(x), theta);
    const Matrix want = matmul(x, theta.value);
    CHECK(max_abs_diff(tape.val(out), to_dense(want)) < 1e-14);
}

TEST_CASE("gcn: two connected nodes average their features") {
    Rng rng(2);
    Parameter theta("theta", Matrix::uniform(3, 3, -1, 1, rng));
    Matrix x = Matrix::uniform(2, 3, -1, 1, rng);
    LayerTopology topo{2, false, {{0, 1}}};
    Tape tape;
    Value out = gcn_forward(tape, topo, tape.constant(x), theta);
    // Normalized A+I is [[1/2,1/2],[1/2,1/2]]: both rows become the mean.
    Matrix mean_row(1, 3);
    for (int c = 0; c < 3; ++c) mean_row(0, c) = 0.5 * (x(0, c) + x(1, c));
    const Matrix want = matmul(mean_row, theta.value);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 3; ++c)
            CHECK(tape.val(out)(r, c) == Catch::Approx(want(0, c)).margin(1e-12));
}

TEST_CASE("gcn: identity weights and empty edges reproduce the input") {
    Matrix eye{{1, 0}, {0, 1}};
    Parameter theta("theta", eye);
    Rng rng(3);
    Matrix x = Matrix::uniform(4, 2, -1, 1, rng);
    LayerTopology topo{4, false, {}};
    Tape tape;
    Value out = gcn_forward(tape, topo, tape.constant(x), theta);
    CHECK(max_abs_diff(tape.val(out), to_dense(x)) < 1e-14);
}

TEST_CASE("graphconv: isolated node uses only W1; W1=0 passes the neighbor") {
    Rng rng(4);
    GraphConvWeights w{Parameter("w1", Matrix::uniform(3, 2, -1, 1, rng)),
                       Parameter("w2", Matrix::uniform(3, 2, -1, 1, rng))};
    Matrix x = Matrix::uniform(1, 3, -1, 1, rng);
    {
        Tape tape;
        Value out = graphconv_forward(tape, LayerTopology{1, false, {}}, tape.constant(x), w);
        CHECK(max_abs_diff(tape.val(out), to_dense(matmul(x, w.w1.value))) < 1e-14);
    }
    {
        GraphConvWeights zero_w1{Parameter("w1", Matrix(3, 2)),
                                 Parameter("w2", w.w2.value)};
        Matrix x2 = Matrix::uniform(2, 3, -1, 1, rng);
        Tape tape;
        // Directed edge 0 -> 1: node 1's only in-neighbor is node 0.
        Value out = graphconv_forward(tape, LayerTopology{2, true, {{0, 1}}}, tape.constant(x2),
                                      zero_w1);
        Matrix x0(1, 3);
        for (int c = 0; c < 3; ++c) x0(0, c) = x2(0, c);
        const Matrix want = matmul(x0, w.w2.value);
        for (int c = 0; c < 2; ++c) {
            CHECK(tape.val(out)(1, c) == Catch::Approx(want(0, c)).margin(1e-12));
            CHECK(tape.val(out)(0, c) == 0.0);
        }
    }
}

TEST_CASE("operator oracles: 100 random graphs per convolution") {
    Rng rng(20240);
    double worst_gcn = 0.0, worst_graph = 0.0, worst_gat = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const bool directed = rng.uniform() < 0.5;
        const LayerTopology topo = random_topology(rng, 12, directed);
        const int f_in = 2 + static_cast<int>(rng.below(4));
        const int f_out = 2 + static_cast<int>(rng.below(3));
        const Matrix x = Matrix::uniform(topo.num_nodes, f_in, -1.0, 1.0, rng);

        {
            Parameter theta("theta", Matrix::uniform(f_in, f_out, -1, 1, rng));
            Tape tape;
            Value out = gcn_forward(tape, topo, tape.constant(x), theta);
            worst_gcn = std::max(worst_gcn,
                                 max_abs_diff(tape.val(out),
                                              oracle::gcn(topo.num_nodes, topo.edges, directed,
                                                          to_dense(x), to_dense(theta.value))));
        }
        {
            GraphConvWeights w{Parameter("w1", Matrix::uniform(f_in, f_out, -1, 1, rng)),
                               Parameter("w2", Matrix::uniform(f_in, f_out, -1, 1, rng))};
            Tape tape;
            Value out = graphconv_forward(tape, topo, tape.constant(x), w);
            worst_graph = std::max(
                worst_graph, max_abs_diff(tape.val(out),
                                          oracle::graphconv(topo.num_nodes, topo.edges, directed,
                                                            to_dense(x), to_dense(w.w1.value),
                                                            to_dense(w.w2.value))));
        }
        {
            const int heads = 1 + static_cast<int>(rng.below(3));
            GatV2Weights w;
            for (int h = 0; h < heads; ++h) {
                w.theta.emplace_back("theta", Matrix::uniform(2 * f_in, f_out, -1, 1, rng));
                w.attn.emplace_back("attn", Matrix::uniform(f_out, 1, -1, 1, rng));
            }
            Tape tape;
            Value out = gatv2_forward(tape, topo, tape.constant(x), w);
            for (int h = 0; h < heads; ++h) {
                std::vector<double> attn(f_out);
                for (int k = 0; k < f_out; ++k) attn[k] = w.attn[h].value(k, 0);
                const oracle::Mat head = oracle::gat_head(topo.num_nodes, topo.edges, directed,
                                                          to_dense(x), to_dense(w.theta[h].value),
                                                          attn, kAttentionLeakySlope);
                for (int r = 0; r < topo.num_nodes; ++r)
                    for (int c = 0; c < f_out; ++c)
                        worst_gat = std::max(worst_gat, std::fabs(tape.val(out)(r, h * f_out + c) -
                                                                  head[r][c]));
            }
        }
    }
    CHECK(worst_gcn < 1e-10);
    CHECK(worst_graph < 1e-10);
    CHECK(worst_gat < 1e-10);
}

TEST_CASE("gatv2: isolated node attends only to itself") {
    Rng rng(31);
    GatV2Weights w;
    w.theta.emplace_back("theta", Matrix::uniform(6, 3, -1, 1, rng));
    w.attn.emplace_back("attn", Matrix::uniform(3, 1, -1, 1, rng));
    const Matrix x = Matrix::uniform(3, 3, -1, 1, rng);
    // Node 2 is isolated.
    const LayerTopology topo{3, false, {{0, 1}}};
    Tape tape;
    GatAttention attention;
    gatv2_forward(tape, topo, tape.constant(x), w, &attention);
    REQUIRE(attention.alpha_per_head.size() == 1);
    const Matrix& alpha = tape.val(attention.alpha_per_head[0]);
    for (std::size_t e = 0; e < attention.receivers.size(); ++e)
        if (attention.receivers[e] == 2) {
            CHECK(attention.senders[e] == 2);
            CHECK(alpha(static_cast<int>(e), 0) == 1.0);
        }
}

TEST_CASE("gatv2: attention sums to one per node and head") {
    Rng rng(32);
    for (int trial = 0; trial < 20; ++trial) {
        const LayerTopology topo = random_topology(rng, 9, rng.uniform() < 0.5);
        const Matrix x = Matrix::uniform(topo.num_nodes, 4, -2.0, 2.0, rng);
        GatV2Weights w;
        for (int h = 0; h < 2; ++h) {
            w.theta.emplace_back("theta", Matrix::uniform(8, 3, -1, 1, rng));
            w.attn.emplace_back("attn", Matrix::uniform(3, 1, -1, 1, rng));
        }
        Tape tape;
        GatAttention attention;
        gatv2_forward(tape, topo, tape.constant(x), w, &attention);
        for (const Value alpha : attention.alpha_per_head) {
            std::vector<double> sums(topo.num_nodes, 0.0);
            for (std::size_t e = 0; e < attention.receivers.size(); ++e) {
                const double a = tape.val(alpha)(static_cast<int>(e), 0);
                CHECK(a >= 0.0);
                sums[attention.receivers[e]] += a;
            }
            for (double s : sums) CHECK(std::fabs(s - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("gatv2: 3-node path matches the dense attention formula") {
    Rng rng(33);
    const LayerTopology topo{3, false, {{0, 1}, {1, 2}}};
    const Matrix x = Matrix::uniform(3, 4, -1.0, 1.0, rng);
    GatV2Weights w;
    w.theta.emplace_back("theta", Matrix::uniform(8, 3, -1, 1, rng));
    w.attn.emplace_back("attn", Matrix::uniform(3, 1, -1, 1, rng));
    std::vector<double> attn_vec(3);
    for (int k = 0; k < 3; ++k) attn_vec[k] = w.attn[0].value(k, 0);

    Tape tape;
    GatAttention attention;
    gatv2_forward(tape, topo, tape.constant(x), w, &attention);
    const oracle::Mat want = oracle::gat_alpha(3, topo.edges, false, to_dense(x),
                                               to_dense(w.theta[0].value), attn_vec,
                                               kAttentionLeakySlope);
    const Matrix& alpha = tape.val(attention.alpha_per_head[0]);
    for (std::size_t e = 0; e < attention.receivers.size(); ++e)
        CHECK(alpha(static_cast<int>(e), 0) ==
              Catch::Approx(want[attention.receivers[e]][attention.senders[e]]).margin(1e-12));
}

TEST_CASE("layer branch: single-node layer pools to its own features") {
    Rng rng(41);
    ModelDims dims;
    dims.f_in = 4;
    dims.hidden = 3;
    dims.fc1 = 5;
    dims.fc2 = 4;
    ModelParams params = ModelParams::init(ConvType::GraphConv, dims, 7);
    const LayerTopology topo{1, false, {}};
    const Matrix x = Matrix::uniform(1, 4, -1, 1, rng);
    Tape tape;
    std::vector<int> segments{0};
    Value pooled = layer_branch(tape, topo, tape.constant(x), params.branch[0], segments, 1,
                                params, 0.5, /*training=*/false, 0);
    Value direct = tape.relu(conv_forward(
        tape, topo, tape.relu(conv_forward(tape, topo, tape.constant(x), params.branch[0].conv1)),
        params.branch[0].conv2));
    REQUIRE(tape.val(pooled).rows() == 1);
    for (int c = 0; c < 3; ++c)
        CHECK(tape.val(pooled)(0, c) == Catch::Approx(tape.val(direct)(0, c)).margin(1e-12));
}

TEST_CASE("layer branch: identical node features pool to that row") {
    Rng rng(42);
    ModelDims dims;
    dims.f_in = 3;
    dims.hidden = 4;
    ModelParams params = ModelParams::init(ConvType::Gcn, dims, 9);
    // Fully connected graph with equal rows keeps rows equal through the stack.
    LayerTopology topo{3, false, {{0, 1}, {0, 2}, {1, 2}}};
    Matrix x(3, 3);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) x(r, c) = 0.3 * (c + 1);
    Tape tape;
    std::vector<int> segments{0, 0, 0};
    Value pooled = layer_branch(tape, topo, tape.constant(x), params.branch[0], segments, 1,
                                params, 0.5, false, 0);
    Value stacked = tape.relu(conv_forward(
        tape, topo, tape.relu(conv_forward(tape, topo, tape.constant(x), params.branch[0].conv1)),
        params.branch[0].conv2));
    for (int c = 0; c < 4; ++c)
        CHECK(tape.val(pooled)(0, c) == Catch::Approx(tape.val(stacked)(0, c)).margin(1e-12));
}

TEST_CASE("forward with zero weights yields the output bias everywhere") {
    ModelDims dims;
    dims.f_in = 4;
    dims.hidden = 3;
    dims.fc1 = 5;
    dims.fc2 = 4;
    ModelParams params = ModelParams::init(ConvType::GraphConv, dims, 3);
    for (Parameter* p : params.parameters()) p->value.fill(0.0);
    params.out_b.value = Matrix{{0.1, -0.2, 0.3, -0.4, 0.5, -0.6}};

    Rng rng(43);
    std::vector<FeaturizedMln> mlns{random_featurized(rng, 4, 0), random_featurized(rng, 4, 1)};
    const GraphBatch batch = make_batch(mlns, {0, 1});
    Tape tape;
    Value logits = forward(tape, batch, params, false);
    REQUIRE(tape.val(logits).rows() == 2);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 6; ++c)
            CHECK(tape.val(logits)(r, c) == Catch::Approx(params.out_b.value(0, c)).margin(1e-12));
}

TEST_CASE("batch of one equals the unbatched forward; swapping swaps rows") {
    Rng rng(44);
    ModelDims dims;
    dims.f_in = 5;
    dims.hidden = 4;
    dims.fc1 = 6;
    dims.fc2 = 5;
    for (ConvType conv : {ConvType::Gcn, ConvType::GatV2, ConvType::GraphConv}) {
        ModelParams params = ModelParams::init(conv, dims, 17, /*heads=*/2);
        std::vector<FeaturizedMln> mlns{random_featurized(rng, 5, 0),
                                        random_featurized(rng, 5, 3)};
        Tape t_pair, t_a, t_b, t_swapped;
        const Matrix& pair_logits = t_pair.val(forward(t_pair, make_batch(mlns, {0, 1}), params, false));
        const Matrix& a_logits = t_a.val(forward(t_a, make_batch(mlns, {0}), params, false));
        const Matrix& b_logits = t_b.val(forward(t_b, make_batch(mlns, {1}), params, false));
        const Matrix& swapped = t_swapped.val(forward(t_swapped, make_batch(mlns, {1, 0}), params, false));
        // Swapping is bitwise up to dgemm's position-dependent accumulation,
        // which can move the last bit; 1e-12 is far below any model signal.
        for (int c = 0; c < 6; ++c) {
            CHECK(pair_logits(0, c) == Catch::Approx(a_logits(0, c)).margin(1e-10));
            CHECK(pair_logits(1, c) == Catch::Approx(b_logits(0, c)).margin(1e-10));
            CHECK(swapped(0, c) == Catch::Approx(pair_logits(1, c)).margin(1e-12));
            CHECK(swapped(1, c) == Catch::Approx(pair_logits(0, c)).margin(1e-12));
        }
    }
}

TEST_CASE("eval-mode logits are invariant to node relabeling") {
    Rng rng(45);
    ModelDims dims;
    dims.f_in = 4;
    dims.hidden = 3;
    dims.fc1 = 5;
    dims.fc2 = 4;
    for (ConvType conv : {ConvType::Gcn, ConvType::GatV2, ConvType::GraphConv}) {
        ModelParams params = ModelParams::init(conv, dims, 23, 2);
        FeaturizedMln base = random_featurized(rng, 4, 2);
        Tape t0;
        const Matrix logits0 = t0.val(forward(t0, make_batch({base}, {0}), params, false));
        for (int trial = 0; trial < 10; ++trial) {
            FeaturizedMln permuted = base;
            for (int layer = 0; layer < 3; ++layer) {
                const int n = base.topo[layer].num_nodes;
                std::vector<int> perm(n);
                std::iota(perm.begin(), perm.end(), 0);
                rng.shuffle(perm);  // perm[old] = new index
                Matrix moved(n, 4);
                for (int r = 0; r < n; ++r)
                    for (int c = 0; c < 4; ++c) moved(perm[r], c) = base.features[layer](r, c);
                permuted.features[layer] = std::move(moved);
                permuted.topo[layer].edges.clear();
                for (const auto& [s, d] : base.topo[layer].edges)
                    permuted.topo[layer].edges.emplace_back(perm[s], perm[d]);
            }
            Tape t1;
            const Matrix& logits1 = t1.val(forward(t1, make_batch({permuted}, {0}), params, false));
            for (int c = 0; c < 6; ++c)
                CHECK(logits1(0, c) == Catch::Approx(logits0(0, c)).margin(1e-9));
        }
    }
}

TEST_CASE("cross entropy matches the direct formula on random logits") {
    Rng rng(46);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix logits = Matrix::uniform(4, 6, -3.0, 3.0, rng);
        std::vector<int> labels;
        for (int n = 0; n < 4; ++n) labels.push_back(static_cast<int>(rng.below(6)));
        std::vector<double> weights;
        for (int c = 0; c < 6; ++c) weights.push_back(rng.uniform(0.5, 2.0));
        Tape tape;
        const double got = tape.val(tape.cross_entropy(tape.constant(logits), labels, weights)).scalar();
        const double want = oracle::cross_entropy(to_dense(logits), labels, weights);
        CHECK(got == Catch::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("full-model gradients pass the finite-difference check for all convolutions") {
    Rng rng(47);
    ModelDims dims;
    dims.f_in = 4;
    dims.hidden = 3;
    dims.fc1 = 4;
    dims.fc2 = 3;
    std::vector<FeaturizedMln> mlns{random_featurized(rng, 4, 0), random_featurized(rng, 4, 4)};
    const GraphBatch batch = make_batch(mlns, {0, 1});
    for (ConvType conv : {ConvType::Gcn, ConvType::GatV2, ConvType::GraphConv}) {
        ModelParams params = ModelParams::init(conv, dims, 31, 2);
        auto build = [&](Tape& tape) {
            Value logits = forward(tape, batch, params, true, 0.5, 0xfeed);
            return cross_entropy(tape, logits, batch.labels);
        };
        const auto report = grad_check(build, params.parameters(), 1e-5);
        INFO(to_string(conv));
        CHECK(report.max_rel_error < 1e-4);
    }
}

TEST_CASE("maxabs pooling and sum readout variants stay differentiable") {
    Rng rng(48);
    ModelDims dims;
    dims.f_in = 3;
    dims.hidden = 3;
    dims.fc1 = 4;
    dims.fc2 = 3;
    std::vector<FeaturizedMln> mlns{random_featurized(rng, 3, 1)};
    const GraphBatch batch = make_batch(mlns, {0});
    ModelParams params = ModelParams::init(ConvType::GraphConv, dims, 37, 1, PoolKind::MaxAbs,
                                           ReadoutKind::Sum);
    auto build = [&](Tape& tape) {
        Value logits = forward(tape, batch, params, false);
        return cross_entropy(tape, logits, batch.labels);
    };
    const auto report = grad_check(build, params.parameters(), 1e-5);
    CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("checkpoints round-trip bit-exactly and deterministically") {
    ModelDims dims;
    dims.f_in = 5;
    dims.hidden = 4;
    dims.fc1 = 6;
    dims.fc2 = 5;
    ModelParams params = ModelParams::init(ConvType::GatV2, dims, 1234, 3, PoolKind::MaxAbs,
                                           ReadoutKind::Concat);
    // Perturb with awkward values that need all 17 digits.
    Rng rng(49);
    for (Parameter* p : params.parameters())
        for (std::size_t i = 0; i < p->value.size(); ++i)
            p->value.data()[i] = rng.uniform(-1, 1) / 3.0;

    const std::string path1 = "mlta_test_ckpt1.json";
    const std::string path2 = "mlta_test_ckpt2.json";
    save_checkpoint(path1, params);
    ModelParams loaded = load_checkpoint(path1);
    CHECK(loaded.conv == params.conv);
    CHECK(loaded.heads == params.heads);
    CHECK(loaded.pool == params.pool);
    CHECK(loaded.readout == params.readout);

    auto orig = params.parameters();
    auto back = loaded.parameters();
    REQUIRE(orig.size() == back.size());
    for (std::size_t i = 0; i < orig.size(); ++i) {
        CHECK(orig[i]->name == back[i]->name);
        for (std::size_t k = 0; k < orig[i]->value.size(); ++k)
            CHECK(orig[i]->value.data()[k] == back[i]->value.data()[k]);
    }

    save_checkpoint(path2, loaded);
    std::ifstream f1(path1), f2(path2);
    const std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(c1 == c2);
    CHECK(!c1.empty());
    std::remove(path1.c_str());
    std::remove(path2.c_str());
}
