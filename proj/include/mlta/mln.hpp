#pragma once

#include <fstream>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mlta/errors.hpp"
#include "mlta/labels.hpp"
#include "mlta/preprocess.hpp"

namespace mlta {

// One layer of a Tweet-MLN. Undirected layers store each edge once with
// src <= dst and are treated symmetrically downstream. Graphs are simple:
// no duplicate edges, no self-edges (operators add self-loops themselves).
struct LayerGraph {
    std::vector<std::string> node_ids;
    std::vector<std::string> node_payloads;
    std::vector<std::pair<int, int>> edges;
    bool directed = false;

    int num_nodes() const { return static_cast<int>(node_payloads.size()); }
    int num_edges() const { return static_cast<int>(edges.size()); }
};

// Three-layer graph built from one group of same-label tweets:
// hashtag tokens (undirected), keyword chains (directed), whole tweets
// (undirected). Layers share no node identifiers.
struct TweetMln {
    LayerGraph layer1;
    LayerGraph layer2;
    LayerGraph layer3;
    EmotionLabel label = EmotionLabel::Angry;
    int group_size = 0;

    const LayerGraph& layer(int i) const { return i == 0 ? layer1 : (i == 1 ? layer2 : layer3); }
    LayerGraph& layer(int i) { return i == 0 ? layer1 : (i == 1 ? layer2 : layer3); }
};

inline constexpr const char* kSentinelPayload = "";

namespace detail {

inline const char* layer_prefix(int layer) { return layer == 0 ? "l1/" : (layer == 1 ? "l2/" : "l3/"); }

class NodeRegistry {
public:
    explicit NodeRegistry(int layer) : layer_(layer) {}

    int intern(const std::string& payload) {
        auto [it, inserted] = index_.try_emplace(payload, static_cast<int>(payloads_.size()));
        if (inserted) payloads_.push_back(payload);
        return it->second;
    }

    int find(const std::string& payload) const {
        auto it = index_.find(payload);
        return it == index_.end() ? -1 : it->second;
    }

    void fill(LayerGraph& g) const {
        g.node_payloads = payloads_;
        g.node_ids.clear();
        g.node_ids.reserve(payloads_.size());
        for (const std::string& p : payloads_) g.node_ids.push_back(layer_prefix(layer_) + p);
    }

private:
    int layer_;
    std::vector<std::string> payloads_;
    std::unordered_map<std::string, int> index_;
};

inline std::vector<std::pair<int, int>> sorted_edges(const std::set<std::pair<int, int>>& s) {
    return {s.begin(), s.end()};
}

inline void add_undirected(std::set<std::pair<int, int>>& edges, int a, int b) {
    if (a == b) return;
    edges.emplace(std::min(a, b), std::max(a, b));
}

}  // namespace detail

// Layer 1: one node per unique hashtag token. Tokens are connected when they
// occur in the same tweet, and all-pairs across two tweets that share at
// least one hashtag token. Tweets without hashtags contribute nothing.
inline LayerGraph build_layer1(std::span<const CleanTweet> tweets) {
    if (tweets.empty()) throw Error("build_layer1: empty tweet set");
    detail::NodeRegistry nodes(0);
    std::vector<std::vector<int>> per_tweet;
    per_tweet.reserve(tweets.size());
    for (const CleanTweet& t : tweets) {
        std::vector<int> ids;
        for (const std::string& tok : t.hashtag_tokens) ids.push_back(nodes.intern(tok));
        per_tweet.push_back(std::move(ids));
    }

    std::set<std::pair<int, int>> edges;
    for (const std::vector<int>& ids : per_tweet)
        for (std::size_t a = 0; a < ids.size(); ++a)
            for (std::size_t b = a + 1; b < ids.size(); ++b)
                detail::add_undirected(edges, ids[a], ids[b]);

    for (std::size_t i = 0; i < per_tweet.size(); ++i) {
        const std::unordered_set<int> set_i(per_tweet[i].begin(), per_tweet[i].end());
        for (std::size_t j = i + 1; j < per_tweet.size(); ++j) {
            bool shares = false;
            for (int id : per_tweet[j])
                if (set_i.count(id)) {
                    shares = true;
                    break;
                }
            if (!shares) continue;
            for (int a : per_tweet[i])
                for (int b : per_tweet[j]) detail::add_undirected(edges, a, b);
        }
    }

    LayerGraph g;
    g.directed = false;
    nodes.fill(g);
    g.edges = detail::sorted_edges(edges);
    return g;
}

// Layer 2: one node per unique keyword token; directed edges follow each
// tweet's word order, with hashtags already absent from the keyword stream.
inline LayerGraph build_layer2(std::span<const CleanTweet> tweets) {
    if (tweets.empty()) throw Error("build_layer2: empty tweet set");
    detail::NodeRegistry nodes(1);
    std::set<std::pair<int, int>> edges;
    for (const CleanTweet& t : tweets) {
        int prev = -1;
        for (const std::string& tok : t.keyword_tokens) {
            const int cur = nodes.intern(tok);
            if (prev >= 0 && prev != cur) edges.emplace(prev, cur);
            prev = cur;
        }
    }
    LayerGraph g;
    g.directed = true;
    nodes.fill(g);
    g.edges = detail::sorted_edges(edges);
    return g;
}

// Layer 3: one node per tweet (payload = cleaned full text); tweets are
// connected when their hashtag-token sets intersect.
inline LayerGraph build_layer3(std::span<const CleanTweet> tweets) {
    if (tweets.empty()) throw Error("build_layer3: empty tweet set");
    LayerGraph g;
    g.directed = false;
    std::vector<std::unordered_set<std::string>> tag_sets;
    tag_sets.reserve(tweets.size());
    for (std::size_t i = 0; i < tweets.size(); ++i) {
        g.node_ids.push_back(detail::layer_prefix(2) + std::to_string(i));
        g.node_payloads.push_back(tweets[i].raw_text);
        tag_sets.emplace_back(tweets[i].hashtag_tokens.begin(), tweets[i].hashtag_tokens.end());
    }
    std::set<std::pair<int, int>> edges;
    for (std::size_t i = 0; i < tweets.size(); ++i)
        for (std::size_t j = i + 1; j < tweets.size(); ++j) {
            for (const std::string& tag : tag_sets[i])
                if (tag_sets[j].count(tag)) {
                    detail::add_undirected(edges, static_cast<int>(i), static_cast<int>(j));
                    break;
                }
        }
    g.edges = detail::sorted_edges(edges);
    return g;
}

namespace detail {

// Keeps the architecture total on hashtag-free groups: an empty layer gets a
// single sentinel node whose feature vector is zero.
inline void ensure_non_empty(LayerGraph& g, int layer) {
    if (g.num_nodes() > 0) return;
    g.node_ids.push_back(std::string(layer_prefix(layer)) + "~sentinel");
    g.node_payloads.push_back(kSentinelPayload);
}

}  // namespace detail

inline TweetMln build_mln(std::span<const CleanTweet> tweets) {
    if (tweets.empty()) throw Error("build_mln: empty tweet set");
    for (const CleanTweet& t : tweets)
        if (t.label != tweets.front().label)
            throw MixedLabels(std::string(to_string(tweets.front().label)) + " vs " +
                              to_string(t.label));
    TweetMln mln;
    mln.layer1 = build_layer1(tweets);
    mln.layer2 = build_layer2(tweets);
    mln.layer3 = build_layer3(tweets);
    detail::ensure_non_empty(mln.layer1, 0);
    detail::ensure_non_empty(mln.layer2, 1);
    mln.label = tweets.front().label;
    mln.group_size = static_cast<int>(tweets.size());
    return mln;
}

// ---- serialization: one JSON document per MLN, newline-delimited ----

inline nlohmann::json to_json(const LayerGraph& g) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [s, d] : g.edges) edges.push_back({s, d});
    return {{"directed", g.directed}, {"nodes", g.node_payloads}, {"edges", std::move(edges)}};
}

inline nlohmann::json to_json(const TweetMln& mln) {
    return {{"label", to_string(mln.label)},
            {"layers", {to_json(mln.layer1), to_json(mln.layer2), to_json(mln.layer3)}}};
}

inline LayerGraph layer_from_json(const nlohmann::json& j, int layer) {
    LayerGraph g;
    g.directed = j.at("directed").get<bool>();
    g.node_payloads = j.at("nodes").get<std::vector<std::string>>();
    g.node_ids.reserve(g.node_payloads.size());
    for (std::size_t i = 0; i < g.node_payloads.size(); ++i) {
        const std::string& p = g.node_payloads[i];
        if (layer == 2)
            g.node_ids.push_back(detail::layer_prefix(layer) + std::to_string(i));
        else if (p == kSentinelPayload)
            g.node_ids.push_back(std::string(detail::layer_prefix(layer)) + "~sentinel");
        else
            g.node_ids.push_back(detail::layer_prefix(layer) + p);
    }
    const int n = g.num_nodes();
    for (const auto& e : j.at("edges")) {
        const int s = e.at(0).get<int>(), d = e.at(1).get<int>();
        if (s < 0 || s >= n || d < 0 || d >= n)
            throw ParseError("edge index out of range in serialized layer");
        g.edges.emplace_back(s, d);
    }
    return g;
}

inline TweetMln mln_from_json(const nlohmann::json& j) {
    const auto& layers = j.at("layers");
    if (!layers.is_array() || layers.size() != 3)
        throw ParseError("serialized MLN must have exactly 3 layers");
    TweetMln mln;
    mln.label = parse_label(j.at("label").get<std::string>());
    mln.layer1 = layer_from_json(layers[0], 0);
    mln.layer2 = layer_from_json(layers[1], 1);
    mln.layer3 = layer_from_json(layers[2], 2);
    mln.group_size = mln.layer3.num_nodes();
    return mln;
}

inline void write_mlns(const std::string& path, std::span<const TweetMln> mlns) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write graphs " + path);
    for (const TweetMln& mln : mlns) out << to_json(mln).dump() << '\n';
}

inline std::vector<TweetMln> read_mlns(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open graphs " + path);
    std::vector<TweetMln> mlns;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            mlns.push_back(mln_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return mlns;
}

}  // namespace mlta
