#pragma once

#include <array>
#include <string>
#include <string_view>

#include "mlta/errors.hpp"

namespace mlta {

// The six group-level emotion classes, in canonical (index) order.
enum class EmotionLabel : int { Angry = 0, Bad, Fearful, Happy, Sad, Surprised };

inline constexpr int kNumClasses = 6;

inline constexpr std::array<std::string_view, kNumClasses> kLabelNames = {
    "Angry", "Bad", "Fearful", "Happy", "Sad", "Surprised",
};

enum class Sentiment : int { Positive = 0, Negative, Neutral };

inline const char* to_string(EmotionLabel label) {
    return kLabelNames[static_cast<int>(label)].data();
}

inline const char* to_string(Sentiment s) {
    switch (s) {
        case Sentiment::Positive: return "positive";
        case Sentiment::Negative: return "negative";
        default: return "neutral";
    }
}

inline std::string lowercase_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

inline EmotionLabel parse_label(std::string_view s) {
    const std::string low = lowercase_ascii(s);
    for (int i = 0; i < kNumClasses; ++i)
        if (low == lowercase_ascii(kLabelNames[i])) return static_cast<EmotionLabel>(i);
    throw ParseError("unknown emotion label '" + std::string(s) + "'");
}

inline Sentiment parse_sentiment(std::string_view s) {
    const std::string low = lowercase_ascii(s);
    if (low == "positive") return Sentiment::Positive;
    if (low == "negative") return Sentiment::Negative;
    if (low == "neutral") return Sentiment::Neutral;
    throw ParseError("unknown sentiment '" + std::string(s) + "'");
}

// Emotion -> binary polarity. Happy and Surprised are positive, the rest negative.
inline Sentiment label_sentiment(EmotionLabel label) {
    switch (label) {
        case EmotionLabel::Happy:
        case EmotionLabel::Surprised:
            return Sentiment::Positive;
        default:
            return Sentiment::Negative;
    }
}

}  // namespace mlta
