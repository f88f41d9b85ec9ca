#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mlta/matrix.hpp"
#include "mlta/rng.hpp"

namespace mlta {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid for the tape's lifetime.
struct Value {
    int idx = -1;
};

// A trainable matrix with a persistent gradient accumulator.
struct Parameter {
    Matrix value;
    Matrix grad;
    std::string name;

    Parameter() = default;
    Parameter(std::string n, Matrix v)
        : value(std::move(v)), grad(Matrix::zeros_like(value)), name(std::move(n)) {}

    void zero_grad() { grad.fill(0.0); }
};

// Records every forward primitive so that backward() can replay local
// gradient rules in reverse creation order (creation order is a valid
// topological order since inputs always precede outputs).
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    const Matrix& val(Value v) const { return nodes_[v.idx].value; }
    const Matrix& grad(Value v) const { return nodes_[v.idx].grad; }
    std::size_t size() const { return nodes_.size(); }

    Value constant(Matrix m) { return emplace(std::move(m), nullptr); }

    Value param(Parameter& p) {
        Value v = emplace(p.value, nullptr);
        leaves_.emplace_back(v.idx, &p);
        return v;
    }

    Value matmul(Value a, Value b) {
        Matrix out = mlta::matmul(val(a), val(b));
        return emplace(std::move(out), [this, a, b](int self) {
            add_matmul_a_bt(nodes_[a.idx].grad, nodes_[self].grad, nodes_[b.idx].value);
            add_matmul_at_b(nodes_[b.idx].grad, nodes_[a.idx].value, nodes_[self].grad);
        });
    }

    Value add(Value a, Value b) {
        const Matrix& x = val(a);
        const Matrix& y = val(b);
        if (!x.same_shape(y)) throw ShapeMismatch("add: " + x.shape_str() + " + " + y.shape_str());
        Matrix out = x;
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += y.data()[i];
        return emplace(std::move(out), [this, a, b](int self) {
            accumulate(a, nodes_[self].grad);
            accumulate(b, nodes_[self].grad);
        });
    }

    Value sub(Value a, Value b) {
        const Matrix& x = val(a);
        const Matrix& y = val(b);
        if (!x.same_shape(y)) throw ShapeMismatch("sub: " + x.shape_str() + " - " + y.shape_str());
        Matrix out = x;
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= y.data()[i];
        return emplace(std::move(out), [this, a, b](int self) {
            accumulate(a, nodes_[self].grad);
            Matrix& gb = nodes_[b.idx].grad;
            const Matrix& g = nodes_[self].grad;
            for (std::size_t i = 0; i < gb.size(); ++i) gb.data()[i] -= g.data()[i];
        });
    }

    // Elementwise product.
    Value mul(Value a, Value b) {
        const Matrix& x = val(a);
        const Matrix& y = val(b);
        if (!x.same_shape(y)) throw ShapeMismatch("mul: " + x.shape_str() + " * " + y.shape_str());
        Matrix out = x;
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= y.data()[i];
        return emplace(std::move(out), [this, a, b](int self) {
            const Matrix& g = nodes_[self].grad;
            Matrix& ga = nodes_[a.idx].grad;
            Matrix& gb = nodes_[b.idx].grad;
            const Matrix& x2 = nodes_[a.idx].value;
            const Matrix& y2 = nodes_[b.idx].value;
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga.data()[i] += g.data()[i] * y2.data()[i];
                gb.data()[i] += g.data()[i] * x2.data()[i];
            }
        });
    }

    Value scalar_mul(double c, Value a) {
        Matrix out = val(a);
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= c;
        return emplace(std::move(out), [this, a, c](int self) {
            const Matrix& g = nodes_[self].grad;
            Matrix& ga = nodes_[a.idx].grad;
            for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += c * g.data()[i];
        });
    }

    // M (R x C) plus a 1 x C row vector broadcast over rows.
    Value add_bias(Value m, Value bias) {
        const Matrix& x = val(m);
        const Matrix& b = val(bias);
        if (b.rows() != 1 || b.cols() != x.cols())
            throw ShapeMismatch("add_bias: " + x.shape_str() + " + " + b.shape_str());
        Matrix out = x;
        for (int r = 0; r < out.rows(); ++r)
            for (int c = 0; c < out.cols(); ++c) out(r, c) += b(0, c);
        return emplace(std::move(out), [this, m, bias](int self) {
            const Matrix& g = nodes_[self].grad;
            accumulate(m, g);
            Matrix& gb = nodes_[bias.idx].grad;
            for (int r = 0; r < g.rows(); ++r)
                for (int c = 0; c < g.cols(); ++c) gb(0, c) += g(r, c);
        });
    }

    Value row_concat(std::span<const Value> parts) {
        if (parts.empty()) throw ShapeMismatch("row_concat: no inputs");
        const int cols = val(parts[0]).cols();
        int rows = 0;
        for (Value p : parts) {
            if (val(p).cols() != cols)
                throw ShapeMismatch("row_concat: column mismatch " + val(p).shape_str());
            rows += val(p).rows();
        }
        Matrix out(rows, cols);
        int r0 = 0;
        for (Value p : parts) {
            const Matrix& x = val(p);
            std::copy(x.data(), x.data() + x.size(), out.data() + static_cast<std::size_t>(r0) * cols);
            r0 += x.rows();
        }
        std::vector<Value> owned(parts.begin(), parts.end());
        return emplace(std::move(out), [this, owned](int self) {
            const Matrix& g = nodes_[self].grad;
            int r0 = 0;
            for (Value p : owned) {
                Matrix& gp = nodes_[p.idx].grad;
                for (int r = 0; r < gp.rows(); ++r)
                    for (int c = 0; c < gp.cols(); ++c) gp(r, c) += g(r0 + r, c);
                r0 += gp.rows();
            }
        });
    }

    Value col_concat(std::span<const Value> parts) {
        if (parts.empty()) throw ShapeMismatch("col_concat: no inputs");
        const int rows = val(parts[0]).rows();
        int cols = 0;
        for (Value p : parts) {
            if (val(p).rows() != rows)
                throw ShapeMismatch("col_concat: row mismatch " + val(p).shape_str());
            cols += val(p).cols();
        }
        Matrix out(rows, cols);
        int c0 = 0;
        for (Value p : parts) {
            const Matrix& x = val(p);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < x.cols(); ++c) out(r, c0 + c) = x(r, c);
            c0 += x.cols();
        }
        std::vector<Value> owned(parts.begin(), parts.end());
        return emplace(std::move(out), [this, owned](int self) {
            const Matrix& g = nodes_[self].grad;
            int c0 = 0;
            for (Value p : owned) {
                Matrix& gp = nodes_[p.idx].grad;
                for (int r = 0; r < gp.rows(); ++r)
                    for (int c = 0; c < gp.cols(); ++c) gp(r, c) += g(r, c0 + c);
                c0 += gp.cols();
            }
        });
    }

    Value col_concat(std::initializer_list<Value> parts) {
        return col_concat(std::span<const Value>(parts.begin(), parts.size()));
    }

    Value row_concat(std::initializer_list<Value> parts) {
        return row_concat(std::span<const Value>(parts.begin(), parts.size()));
    }

    // Rows [r0, r1) of x as a new node.
    Value slice_rows(Value a, int r0, int r1) {
        const Matrix& x = val(a);
        if (r0 < 0 || r1 > x.rows() || r0 > r1)
            throw ShapeMismatch("slice_rows: [" + std::to_string(r0) + "," + std::to_string(r1) +
                                ") of " + x.shape_str());
        Matrix out(r1 - r0, x.cols());
        std::copy(x.data() + static_cast<std::size_t>(r0) * x.cols(),
                  x.data() + static_cast<std::size_t>(r1) * x.cols(), out.data());
        return emplace(std::move(out), [this, a, r0](int self) {
            const Matrix& g = nodes_[self].grad;
            Matrix& ga = nodes_[a.idx].grad;
            for (int r = 0; r < g.rows(); ++r)
                for (int c = 0; c < g.cols(); ++c) ga(r0 + r, c) += g(r, c);
        });
    }

    Value relu(Value a) { return leaky_relu(a, 0.0); }

    Value leaky_relu(Value a, double slope) {
        Matrix out = val(a);
        for (std::size_t i = 0; i < out.size(); ++i)
            if (out.data()[i] < 0.0) out.data()[i] *= slope;
        return emplace(std::move(out), [this, a, slope](int self) {
            const Matrix& g = nodes_[self].grad;
            const Matrix& x = nodes_[a.idx].value;
            Matrix& ga = nodes_[a.idx].grad;
            for (std::size_t i = 0; i < g.size(); ++i)
                ga.data()[i] += g.data()[i] * (x.data()[i] > 0.0 ? 1.0 : slope);
        });
    }

    Value exp(Value a) {
        Matrix out = val(a);
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::exp(out.data()[i]);
        return emplace(std::move(out), [this, a](int self) {
            const Matrix& g = nodes_[self].grad;
            const Matrix& y = nodes_[self].value;
            Matrix& ga = nodes_[a.idx].grad;
            for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * y.data()[i];
        });
    }

    Value log(Value a) {
        Matrix out = val(a);
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::log(out.data()[i]);
        return emplace(std::move(out), [this, a](int self) {
            const Matrix& g = nodes_[self].grad;
            const Matrix& x = nodes_[a.idx].value;
            Matrix& ga = nodes_[a.idx].grad;
            for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] / x.data()[i];
        });
    }

    Value transpose(Value a) {
        Matrix out = transposed(val(a));
        return emplace(std::move(out), [this, a](int self) {
            const Matrix& g = nodes_[self].grad;
            Matrix& ga = nodes_[a.idx].grad;
            for (int r = 0; r < g.rows(); ++r)
                for (int c = 0; c < g.cols(); ++c) ga(c, r) += g(r, c);
        });
    }

    Value sum(Value a) {
        double s = 0.0;
        const Matrix& x = val(a);
        for (std::size_t i = 0; i < x.size(); ++i) s += x.data()[i];
        return emplace(Matrix{{s}}, [this, a](int self) {
            const double g = nodes_[self].grad(0, 0);
            Matrix& ga = nodes_[a.idx].grad;
            for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g;
        });
    }

    Value mean(Value a) {
        const Matrix& x = val(a);
        if (x.size() == 0) throw ShapeMismatch("mean of empty matrix");
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += x.data()[i];
        const double inv = 1.0 / static_cast<double>(x.size());
        return emplace(Matrix{{s * inv}}, [this, a, inv](int self) {
            const double g = nodes_[self].grad(0, 0) * inv;
            Matrix& ga = nodes_[a.idx].grad;
            for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g;
        });
    }

    Value softmax_rows(Value a) {
        Matrix out = val(a);
        for (int r = 0; r < out.rows(); ++r) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < out.cols(); ++c) mx = std::max(mx, out(r, c));
            double denom = 0.0;
            for (int c = 0; c < out.cols(); ++c) {
                out(r, c) = std::exp(out(r, c) - mx);
                denom += out(r, c);
            }
            for (int c = 0; c < out.cols(); ++c) out(r, c) /= denom;
        }
        return emplace(std::move(out), [this, a](int self) {
            const Matrix& y = nodes_[self].value;
            const Matrix& g = nodes_[self].grad;
            Matrix& ga = nodes_[a.idx].grad;
            for (int r = 0; r < y.rows(); ++r) {
                double dot = 0.0;
                for (int c = 0; c < y.cols(); ++c) dot += y(r, c) * g(r, c);
                for (int c = 0; c < y.cols(); ++c) ga(r, c) += y(r, c) * (g(r, c) - dot);
            }
        });
    }

    // Row-wise softmax restricted to entries where mask != 0; excluded entries
    // produce 0. Rows whose mask is entirely zero produce an all-zero row.
    Value masked_softmax(Value a, const Matrix& mask) {
        const Matrix& x = val(a);
        if (!x.same_shape(mask))
            throw ShapeMismatch("masked_softmax: " + x.shape_str() + " vs mask " + mask.shape_str());
        Matrix out(x.rows(), x.cols());
        for (int r = 0; r < x.rows(); ++r) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < x.cols(); ++c)
                if (mask(r, c) != 0.0) mx = std::max(mx, x(r, c));
            if (!std::isfinite(mx)) continue;
            double denom = 0.0;
            for (int c = 0; c < x.cols(); ++c) {
                if (mask(r, c) == 0.0) continue;
                out(r, c) = std::exp(x(r, c) - mx);
                denom += out(r, c);
            }
            for (int c = 0; c < x.cols(); ++c)
                if (mask(r, c) != 0.0) out(r, c) /= denom;
        }
        return emplace(std::move(out), [this, a, mask](int self) {
            const Matrix& y = nodes_[self].value;
            const Matrix& g = nodes_[self].grad;
            Matrix& ga = nodes_[a.idx].grad;
            for (int r = 0; r < y.rows(); ++r) {
                double dot = 0.0;
                for (int c = 0; c < y.cols(); ++c)
                    if (mask(r, c) != 0.0) dot += y(r, c) * g(r, c);
                for (int c = 0; c < y.cols(); ++c)
                    if (mask(r, c) != 0.0) ga(r, c) += y(r, c) * (g(r, c) - dot);
            }
        });
    }

    // Softmax of an E x 1 column within segments (rows sharing segments[e]).
    Value segment_softmax(Value a, std::vector<int> segments, int num_segments) {
        const Matrix& x = val(a);
        if (x.cols() != 1 || static_cast<int>(segments.size()) != x.rows())
            throw ShapeMismatch("segment_softmax: want Ex1 with E segment ids, got " + x.shape_str());
        std::vector<double> mx(num_segments, -std::numeric_limits<double>::infinity());
        for (int e = 0; e < x.rows(); ++e) mx[segments[e]] = std::max(mx[segments[e]], x(e, 0));
        std::vector<double> denom(num_segments, 0.0);
        Matrix out(x.rows(), 1);
        for (int e = 0; e < x.rows(); ++e) {
            out(e, 0) = std::exp(x(e, 0) - mx[segments[e]]);
            denom[segments[e]] += out(e, 0);
        }
        for (int e = 0; e < x.rows(); ++e) out(e, 0) /= denom[segments[e]];
        return emplace(std::move(out),
                       [this, a, segments = std::move(segments), num_segments](int self) {
                           const Matrix& y = nodes_[self].value;
                           const Matrix& g = nodes_[self].grad;
                           Matrix& ga = nodes_[a.idx].grad;
                           std::vector<double> dot(num_segments, 0.0);
                           for (int e = 0; e < y.rows(); ++e) dot[segments[e]] += y(e, 0) * g(e, 0);
                           for (int e = 0; e < y.rows(); ++e)
                               ga(e, 0) += y(e, 0) * (g(e, 0) - dot[segments[e]]);
                       });
    }

    // Per-segment mean of rows. Segments with no rows yield a zero row.
    Value segment_mean(Value a, std::vector<int> segments, int num_segments) {
        const Matrix& x = val(a);
        if (static_cast<int>(segments.size()) != x.rows())
            throw ShapeMismatch("segment_mean: " + std::to_string(segments.size()) +
                                " segment ids for " + x.shape_str());
        std::vector<int> count(num_segments, 0);
        for (int s : segments) ++count[s];
        Matrix out(num_segments, x.cols());
        for (int r = 0; r < x.rows(); ++r)
            for (int c = 0; c < x.cols(); ++c) out(segments[r], c) += x(r, c);
        for (int s = 0; s < num_segments; ++s)
            if (count[s] > 0)
                for (int c = 0; c < x.cols(); ++c) out(s, c) /= count[s];
        return emplace(std::move(out),
                       [this, a, segments = std::move(segments), count = std::move(count)](int self) {
                           const Matrix& g = nodes_[self].grad;
                           Matrix& ga = nodes_[a.idx].grad;
                           for (int r = 0; r < ga.rows(); ++r) {
                               const int s = segments[r];
                               for (int c = 0; c < ga.cols(); ++c)
                                   ga(r, c) += g(s, c) / count[s];
                           }
                       });
    }

    // Per-segment componentwise max of |x|; ties resolved to the earliest row.
    Value segment_max_abs(Value a, std::vector<int> segments, int num_segments) {
        const Matrix& x = val(a);
        if (static_cast<int>(segments.size()) != x.rows())
            throw ShapeMismatch("segment_max_abs: " + std::to_string(segments.size()) +
                                " segment ids for " + x.shape_str());
        Matrix out(num_segments, x.cols());
        std::vector<int> argmax(static_cast<std::size_t>(num_segments) * x.cols(), -1);
        for (int r = 0; r < x.rows(); ++r) {
            const int s = segments[r];
            for (int c = 0; c < x.cols(); ++c) {
                const double av = std::fabs(x(r, c));
                int& am = argmax[static_cast<std::size_t>(s) * x.cols() + c];
                if (am < 0 || av > std::fabs(out(s, c))) {
                    out(s, c) = av;
                    am = r;
                }
            }
        }
        return emplace(std::move(out),
                       [this, a, argmax = std::move(argmax)](int self) {
                           const Matrix& g = nodes_[self].grad;
                           const Matrix& x2 = nodes_[a.idx].value;
                           Matrix& ga = nodes_[a.idx].grad;
                           for (int s = 0; s < g.rows(); ++s)
                               for (int c = 0; c < g.cols(); ++c) {
                                   const int r = argmax[static_cast<std::size_t>(s) * g.cols() + c];
                                   if (r < 0) continue;
                                   ga(r, c) += g(s, c) * (x2(r, c) < 0.0 ? -1.0 : 1.0);
                               }
                       });
    }

    // out[i] = x[index[i]].
    Value gather_rows(Value a, std::vector<int> index) {
        const Matrix& x = val(a);
        Matrix out(static_cast<int>(index.size()), x.cols());
        for (std::size_t i = 0; i < index.size(); ++i)
            for (int c = 0; c < x.cols(); ++c) out(static_cast<int>(i), c) = x(index[i], c);
        return emplace(std::move(out), [this, a, index = std::move(index)](int self) {
            const Matrix& g = nodes_[self].grad;
            Matrix& ga = nodes_[a.idx].grad;
            for (std::size_t i = 0; i < index.size(); ++i)
                for (int c = 0; c < g.cols(); ++c) ga(index[i], c) += g(static_cast<int>(i), c);
        });
    }

    // out[dst[i]] += x[i], out has num_rows rows.
    Value scatter_sum_rows(Value a, std::vector<int> dst, int num_rows) {
        const Matrix& x = val(a);
        if (static_cast<int>(dst.size()) != x.rows())
            throw ShapeMismatch("scatter_sum_rows: " + std::to_string(dst.size()) +
                                " targets for " + x.shape_str());
        Matrix out(num_rows, x.cols());
        for (int r = 0; r < x.rows(); ++r)
            for (int c = 0; c < x.cols(); ++c) out(dst[r], c) += x(r, c);
        return emplace(std::move(out), [this, a, dst = std::move(dst)](int self) {
            const Matrix& g = nodes_[self].grad;
            Matrix& ga = nodes_[a.idx].grad;
            for (int r = 0; r < ga.rows(); ++r)
                for (int c = 0; c < ga.cols(); ++c) ga(r, c) += g(dst[r], c);
        });
    }

    // out[receivers[k]] += coeffs[k] * x[senders[k]]. Coefficients are fixed
    // (graph structure), so the op is linear in x.
    Value edge_weighted_sum(Value a, std::vector<int> senders, std::vector<int> receivers,
                            std::vector<double> coeffs, int num_out_rows) {
        const Matrix& x = val(a);
        if (senders.size() != receivers.size() || senders.size() != coeffs.size())
            throw ShapeMismatch("edge_weighted_sum: mismatched edge arrays");
        Matrix out(num_out_rows, x.cols());
        for (std::size_t k = 0; k < senders.size(); ++k) {
            const double w = coeffs[k];
            const int s = senders[k], r = receivers[k];
            for (int c = 0; c < x.cols(); ++c) out(r, c) += w * x(s, c);
        }
        return emplace(std::move(out),
                       [this, a, senders = std::move(senders), receivers = std::move(receivers),
                        coeffs = std::move(coeffs)](int self) {
                           const Matrix& g = nodes_[self].grad;
                           Matrix& ga = nodes_[a.idx].grad;
                           for (std::size_t k = 0; k < senders.size(); ++k) {
                               const double w = coeffs[k];
                               const int s = senders[k], r = receivers[k];
                               for (int c = 0; c < g.cols(); ++c) ga(s, c) += w * g(r, c);
                           }
                       });
    }

    // Each row of m (E x C) scaled by the matching entry of col (E x 1).
    Value mul_col_broadcast(Value m, Value col) {
        const Matrix& x = val(m);
        const Matrix& w = val(col);
        if (w.cols() != 1 || w.rows() != x.rows())
            throw ShapeMismatch("mul_col_broadcast: " + x.shape_str() + " * " + w.shape_str());
        Matrix out = x;
        for (int r = 0; r < out.rows(); ++r)
            for (int c = 0; c < out.cols(); ++c) out(r, c) *= w(r, 0);
        return emplace(std::move(out), [this, m, col](int self) {
            const Matrix& g = nodes_[self].grad;
            const Matrix& x2 = nodes_[m.idx].value;
            const Matrix& w2 = nodes_[col.idx].value;
            Matrix& gm = nodes_[m.idx].grad;
            Matrix& gc = nodes_[col.idx].grad;
            for (int r = 0; r < g.rows(); ++r) {
                double dot = 0.0;
                for (int c = 0; c < g.cols(); ++c) {
                    gm(r, c) += g(r, c) * w2(r, 0);
                    dot += g(r, c) * x2(r, c);
                }
                gc(r, 0) += dot;
            }
        });
    }

    // Inverted dropout: zero with probability `rate`, scale survivors by
    // 1/(1-rate). Identity when not training or rate == 0.
    Value dropout(Value a, double rate, bool training, std::uint64_t seed) {
        if (rate < 0.0 || rate >= 1.0) throw ShapeMismatch("dropout rate must be in [0,1)");
        if (!training || rate == 0.0) return a;
        const Matrix& x = val(a);
        Matrix mask(x.rows(), x.cols());
        Rng rng(seed);
        const double keep_scale = 1.0 / (1.0 - rate);
        for (std::size_t i = 0; i < mask.size(); ++i)
            mask.data()[i] = rng.uniform() < rate ? 0.0 : keep_scale;
        Matrix out = x;
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= mask.data()[i];
        return emplace(std::move(out), [this, a, mask = std::move(mask)](int self) {
            const Matrix& g = nodes_[self].grad;
            Matrix& ga = nodes_[a.idx].grad;
            for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * mask.data()[i];
        });
    }

    // Class-weighted negative log softmax likelihood, averaged over the batch.
    Value cross_entropy(Value logits, std::vector<int> labels,
                        std::vector<double> class_weights = {}) {
        const Matrix& x = val(logits);
        const int batch = x.rows(), classes = x.cols();
        if (static_cast<int>(labels.size()) != batch)
            throw ShapeMismatch("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for " + x.shape_str());
        if (class_weights.empty()) class_weights.assign(classes, 1.0);
        if (static_cast<int>(class_weights.size()) != classes)
            throw ShapeMismatch("cross_entropy: weight vector size " +
                                std::to_string(class_weights.size()));
        for (int y : labels)
            if (y < 0 || y >= classes)
                throw ShapeMismatch("cross_entropy: label " + std::to_string(y) + " out of range");

        Matrix probs(batch, classes);
        double loss = 0.0;
        for (int n = 0; n < batch; ++n) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < classes; ++c) mx = std::max(mx, x(n, c));
            double denom = 0.0;
            for (int c = 0; c < classes; ++c) {
                probs(n, c) = std::exp(x(n, c) - mx);
                denom += probs(n, c);
            }
            for (int c = 0; c < classes; ++c) probs(n, c) /= denom;
            loss += class_weights[labels[n]] * (std::log(denom) + mx - x(n, labels[n]));
        }
        loss /= batch;
        return emplace(Matrix{{loss}},
                       [this, logits, labels = std::move(labels),
                        class_weights = std::move(class_weights), probs = std::move(probs)](int self) {
                           const double g = nodes_[self].grad(0, 0);
                           Matrix& gl = nodes_[logits.idx].grad;
                           const int batch = gl.rows(), classes = gl.cols();
                           for (int n = 0; n < batch; ++n) {
                               const double w = class_weights[labels[n]] * g / batch;
                               for (int c = 0; c < classes; ++c) {
                                   double p = probs(n, c) - (c == labels[n] ? 1.0 : 0.0);
                                   gl(n, c) += w * p;
                               }
                           }
                       });
    }

    // Reverse pass from a scalar loss node. Gradients of reachable Parameters
    // are accumulated into Parameter::grad; untouched parameters keep their
    // current (zeroed-between-steps) gradient.
    void backward(Value loss) {
        if (!val(loss).is_scalar())
            throw NonScalarLoss("backward from " + val(loss).shape_str());
        for (Node& n : nodes_) {
            n.grad = Matrix(n.value.rows(), n.value.cols());
        }
        nodes_[loss.idx].grad(0, 0) = 1.0;
        for (int i = loss.idx; i >= 0; --i)
            if (nodes_[i].back) nodes_[i].back(i);
        for (auto& [idx, p] : leaves_) {
            const Matrix& g = nodes_[idx].grad;
            for (std::size_t i = 0; i < g.size(); ++i) p->grad.data()[i] += g.data()[i];
        }
    }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        std::function<void(int)> back;
    };

    Value emplace(Matrix value, std::function<void(int)> back) {
        nodes_.push_back(Node{std::move(value), Matrix(), std::move(back)});
        return Value{static_cast<int>(nodes_.size()) - 1};
    }

    void accumulate(Value v, const Matrix& g) {
        Matrix& dst = nodes_[v.idx].grad;
        for (std::size_t i = 0; i < g.size(); ++i) dst.data()[i] += g.data()[i];
    }

    std::vector<Node> nodes_;
    std::vector<std::pair<int, Parameter*>> leaves_;
};

struct GradCheckEntry {
    std::string param;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::vector<GradCheckEntry> per_param;

    bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

// Central finite differences against the tape's analytic gradients.
// `build` must construct the full forward computation on the given tape and
// return the scalar loss node; it is re-invoked for every probe.
inline GradCheckReport grad_check(const std::function<Value(Tape&)>& build,
                                  std::span<Parameter* const> params, double epsilon,
                                  double /*tolerance*/ = 1e-4) {
    for (Parameter* p : params) p->zero_grad();
    std::vector<Matrix> analytic;
    {
        Tape tape;
        Value loss = build(tape);
        tape.backward(loss);
    }
    for (Parameter* p : params) analytic.push_back(p->grad);

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        GradCheckEntry entry{p.name, 0.0};
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double saved = p.value.data()[i];
            p.value.data()[i] = saved + epsilon;
            Tape tp;
            const double f_plus = tp.val(build(tp)).scalar();
            p.value.data()[i] = saved - epsilon;
            Tape tm;
            const double f_minus = tm.val(build(tm)).scalar();
            p.value.data()[i] = saved;
            const double fd = (f_plus - f_minus) / (2.0 * epsilon);
            const double a = analytic[pi].data()[i];
            const double rel = std::fabs(a - fd) / std::max({1.0, std::fabs(a), std::fabs(fd)});
            entry.max_rel_error = std::max(entry.max_rel_error, rel);
        }
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.per_param.push_back(std::move(entry));
    }
    return report;
}

}  // namespace mlta
