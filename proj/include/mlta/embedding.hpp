#pragma once

#include <array>
#include <cmath>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mlta/errors.hpp"
#include "mlta/matrix.hpp"
#include "mlta/mln.hpp"
#include "mlta/preprocess.hpp"
#include "mlta/rng.hpp"

namespace mlta {

// Pretrained word vectors in the common text layout: one token per line
// followed by whitespace-separated decimals. An optional "N d" header line
// is detected and skipped. Tokens are lowercased; first entry wins.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    EmbeddingTable(std::string name, int dimension) : name_(std::move(name)), dimension_(dimension) {}

    const std::string& name() const { return name_; }
    int dimension() const { return dimension_; }
    std::size_t size() const { return vectors_.size(); }
    bool empty() const { return vectors_.empty(); }

    bool contains(std::string_view token) const { return vectors_.count(std::string(token)) > 0; }

    const std::vector<double>* find(std::string_view token) const {
        auto it = vectors_.find(std::string(token));
        return it == vectors_.end() ? nullptr : &it->second;
    }

    void insert(std::string token, std::vector<double> vec) {
        if (dimension_ == 0) dimension_ = static_cast<int>(vec.size());
        if (static_cast<int>(vec.size()) != dimension_)
            throw DimensionMismatch("vector for '" + token + "' has " +
                                    std::to_string(vec.size()) + " entries, table dimension is " +
                                    std::to_string(dimension_));
        vectors_.try_emplace(lowercase_ascii(token), std::move(vec));
    }

    static EmbeddingTable load(const std::string& path, std::string name = "") {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open embeddings " + path);
        EmbeddingTable table(name.empty() ? path : std::move(name), 0);
        std::string line;
        int line_no = 0;
        bool first_data_line = true;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            std::istringstream fields(line);
            std::string token;
            fields >> token;
            std::vector<double> vec;
            std::string f;
            while (fields >> f) {
                double v = 0.0;
                const auto* begin = f.data();
                const auto* end = f.data() + f.size();
                auto [ptr, ec] = std::from_chars(begin, end, v);
                if (ec != std::errc() || ptr != end)
                    throw ParseError(path + ":" + std::to_string(line_no) +
                                     ": non-numeric field '" + f + "'");
                vec.push_back(v);
            }
            // fastText-style header: two integer fields on the first line.
            if (first_data_line && vec.size() == 1 && vec[0] == std::floor(vec[0])) {
                bool token_is_int = !token.empty();
                for (char c : token) token_is_int = token_is_int && c >= '0' && c <= '9';
                if (token_is_int) {
                    first_data_line = false;
                    continue;
                }
            }
            if (vec.empty())
                throw ParseError(path + ":" + std::to_string(line_no) + ": no vector entries");
            try {
                table.insert(std::move(token), std::move(vec));
            } catch (const DimensionMismatch& e) {
                throw DimensionMismatch(path + ":" + std::to_string(line_no) + ": " + e.what());
            }
            first_data_line = false;
        }
        if (table.empty()) throw ParseError(path + ": no embedding vectors found");
        return table;
    }

private:
    std::string name_;
    int dimension_ = 0;
    std::unordered_map<std::string, std::vector<double>> vectors_;
};

// Deterministic stand-in for subword OOV inference: a unit-norm vector whose
// components are drawn from a generator seeded by a stable hash of the token.
inline std::vector<double> oov_vector(std::string_view token, int dimension) {
    Rng rng(fnv1a64(token));
    std::vector<double> v(dimension);
    double norm_sq = 0.0;
    for (double& x : v) {
        x = rng.uniform(-1.0, 1.0);
        norm_sq += x * x;
    }
    if (norm_sq == 0.0) {
        v[0] = 1.0;
        return v;
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (double& x : v) x *= inv;
    return v;
}

// Primary table first, then the fallback table, then the hash-seeded vector.
// Total and deterministic.
inline std::vector<double> lookup(std::string_view token, const EmbeddingTable& primary,
                                  const EmbeddingTable& fallback) {
    if (fallback.dimension() != 0 && fallback.dimension() != primary.dimension())
        throw DimensionMismatch("primary dimension " + std::to_string(primary.dimension()) +
                                " vs fallback " + std::to_string(fallback.dimension()));
    if (const auto* v = primary.find(token)) return *v;
    if (const auto* v = fallback.find(token)) return *v;
    return oov_vector(token, primary.dimension());
}

namespace detail {

// Tokens of a layer-3 payload (cleaned full tweet): '#'-marked tokens are
// segmented against the combined table vocabulary, the rest are keywords.
inline std::vector<std::string> payload_tokens(const std::string& payload,
                                               const EmbeddingTable& primary,
                                               const EmbeddingTable& fallback) {
    const auto in_vocab = [&](std::string_view w) {
        return primary.contains(w) || fallback.contains(w);
    };
    std::vector<std::string> out;
    for (const std::string& tok : tokenize(payload, /*keep_hash_prefix=*/true)) {
        if (!tok.empty() && tok.front() == '#') {
            for (std::string& part : split_hashtag_with(tok, in_vocab)) out.push_back(std::move(part));
        } else {
            out.push_back(tok);
        }
    }
    return out;
}

}  // namespace detail

// Node feature matrices for all three layers. Token layers look tokens up
// directly; whole-tweet nodes average the lookups of their keyword and
// hashtag tokens. Sentinel nodes get the zero vector.
inline std::array<Matrix, 3> featurize(const TweetMln& mln, const EmbeddingTable& primary,
                                       const EmbeddingTable& fallback) {
    const int dim = primary.dimension();
    std::array<Matrix, 3> features;
    for (int layer = 0; layer < 2; ++layer) {
        const LayerGraph& g = mln.layer(layer);
        Matrix m(g.num_nodes(), dim);
        for (int r = 0; r < g.num_nodes(); ++r) {
            const std::string& payload = g.node_payloads[r];
            if (payload == kSentinelPayload) continue;
            const std::vector<double> v = lookup(payload, primary, fallback);
            for (int c = 0; c < dim; ++c) m(r, c) = v[c];
        }
        features[layer] = std::move(m);
    }

    const LayerGraph& g3 = mln.layer3;
    Matrix m3(g3.num_nodes(), dim);
    for (int r = 0; r < g3.num_nodes(); ++r) {
        const std::vector<std::string> tokens =
            detail::payload_tokens(g3.node_payloads[r], primary, fallback);
        if (tokens.empty()) continue;
        for (const std::string& tok : tokens) {
            const std::vector<double> v = lookup(tok, primary, fallback);
            for (int c = 0; c < dim; ++c) m3(r, c) += v[c];
        }
        const double inv = 1.0 / static_cast<double>(tokens.size());
        for (int c = 0; c < dim; ++c) m3(r, c) *= inv;
    }
    features[2] = std::move(m3);
    return features;
}

}  // namespace mlta
