#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "mlta/embedding.hpp"
#include "mlta/errors.hpp"
#include "mlta/labels.hpp"
#include "mlta/preprocess.hpp"
#include "mlta/rng.hpp"

namespace mlta {

// Controls for the synthetic labeled corpus. noise_rate is the probability a
// token is drawn from another class's vocabulary instead of its own, so 0 is
// fully separable and 1 fully mixes the class vocabularies.
struct GenConfig {
    int classes = kNumClasses;
    int tweets_per_class = 600;
    int vocab_per_class = 40;
    int shared_vocab = 30;
    double hashtag_rate = 0.3;
    double noise_rate = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        if (classes != kNumClasses) throw Error("synthetic corpus uses exactly 6 classes");
        if (tweets_per_class < 1 || vocab_per_class < 1 || shared_vocab < 0)
            throw Error("synthetic counts must be positive");
        if (hashtag_rate < 0.0 || hashtag_rate > 1.0 || noise_rate < 0.0 || noise_rate > 1.0)
            throw Error("synthetic rates must be in [0, 1]");
    }
};

namespace detail {

inline std::string class_token(int cls, int idx) {
    return "c" + std::to_string(cls) + "t" + std::to_string(idx);
}

inline std::string shared_token(int idx) { return "sh" + std::to_string(idx); }

// Class whose vocabulary a token is drawn from. With probability noise_rate
// the class is redrawn uniformly over all classes, so rate 1 mixes the
// vocabularies completely (zero class signal) instead of anti-correlating.
inline int noisy_class(int cls, int classes, double noise_rate, Rng& rng) {
    if (noise_rate <= 0.0 || rng.uniform() >= noise_rate) return cls;
    return static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
}

}  // namespace detail

// Every vocabulary token the generator can emit, in deterministic order.
inline std::vector<std::string> synthetic_vocabulary(const GenConfig& config) {
    std::vector<std::string> vocab;
    for (int c = 0; c < config.classes; ++c)
        for (int k = 0; k < config.vocab_per_class; ++k) vocab.push_back(detail::class_token(c, k));
    for (int k = 0; k < config.shared_vocab; ++k) vocab.push_back(detail::shared_token(k));
    return vocab;
}

// Tweets of 5-20 tokens from class plus shared vocabulary, with
// class-correlated hashtags (one or two concatenated class tokens) inserted
// at hashtag_rate. Exactly balanced labels; deterministic under seed.
inline std::vector<RawTweet> generate(const GenConfig& config) {
    config.validate();
    Rng rng(mix_seed(config.seed, 0x73796e /* corpus stream */));
    std::vector<RawTweet> tweets;
    tweets.reserve(static_cast<std::size_t>(config.classes) * config.tweets_per_class);
    for (int cls = 0; cls < config.classes; ++cls) {
        for (int t = 0; t < config.tweets_per_class; ++t) {
            const int length = 5 + static_cast<int>(rng.below(16));  // 5..20
            std::string text;
            for (int k = 0; k < length; ++k) {
                if (!text.empty()) text += ' ';
                if (config.shared_vocab > 0 && rng.uniform() < 0.25) {
                    text += detail::shared_token(
                        static_cast<int>(rng.below(static_cast<std::uint64_t>(config.shared_vocab))));
                } else {
                    const int src = detail::noisy_class(cls, config.classes, config.noise_rate, rng);
                    text += detail::class_token(
                        src, static_cast<int>(rng.below(static_cast<std::uint64_t>(config.vocab_per_class))));
                }
            }
            if (rng.uniform() < config.hashtag_rate) {
                const int src = detail::noisy_class(cls, config.classes, config.noise_rate, rng);
                std::string tag =
                    detail::class_token(src, static_cast<int>(rng.below(
                                                 static_cast<std::uint64_t>(config.vocab_per_class))));
                if (rng.uniform() < 0.5)
                    tag += detail::class_token(
                        src, static_cast<int>(rng.below(static_cast<std::uint64_t>(config.vocab_per_class))));
                text += " #" + tag;
            }
            tweets.push_back(RawTweet{std::move(text), static_cast<EmotionLabel>(cls)});
        }
    }
    return tweets;
}

// Companion embedding table: one seeded vector per vocabulary token, so the
// whole pipeline runs hermetically without pretrained files.
inline void write_synthetic_embeddings(const std::string& path, const GenConfig& config,
                                       int dimension) {
    if (dimension < 1) throw Error("embedding dimension must be positive");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write embeddings " + path);
    for (const std::string& token : synthetic_vocabulary(config)) {
        Rng rng(mix_seed(config.seed, fnv1a64(token)));
        out << token;
        for (int d = 0; d < dimension; ++d) {
            char buf[32];
            const int n = std::snprintf(buf, sizeof(buf), " %.6f", rng.uniform(-1.0, 1.0));
            out.write(buf, n);
        }
        out << '\n';
    }
}

}  // namespace mlta
