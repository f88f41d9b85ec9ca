#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mlta/errors.hpp"
#include "mlta/labels.hpp"

namespace mlta {

struct RawTweet {
    std::string text;
    EmotionLabel label = EmotionLabel::Angry;
};

struct CleanTweet {
    std::string body;                          // keyword stream, hashtags removed
    std::vector<std::string> hashtag_tokens;   // lowercase, no '#'
    std::vector<std::string> keyword_tokens;   // lowercase, no '#'
    std::string raw_text;                      // cleaned full tweet, hashtags kept
    EmotionLabel label = EmotionLabel::Angry;
};

struct SentimentPrediction {
    Sentiment sentiment = Sentiment::Neutral;
};

namespace detail {

inline bool is_ascii_punct(char c) {
    return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
           (c >= '{' && c <= '~');
}

inline bool is_word_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

// Decodes the UTF-8 codepoint at s[i]; advances i past it. Invalid bytes are
// consumed one at a time and returned verbatim.
inline std::uint32_t decode_utf8(std::string_view s, std::size_t& i) {
    const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
    const unsigned char b0 = byte(i);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    int len = 0;
    std::uint32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++i;
        return b0;
    }
    if (i + len > s.size()) {
        ++i;
        return b0;
    }
    for (int k = 1; k < len; ++k) {
        const unsigned char bk = byte(i + k);
        if ((bk & 0xC0) != 0x80) {
            ++i;
            return b0;
        }
        cp = (cp << 6) | (bk & 0x3F);
    }
    i += len;
    return cp;
}

inline bool is_unicode_space(std::uint32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

}  // namespace detail

// Splits on Unicode whitespace and strips leading/trailing ASCII punctuation.
// With keep_hash_prefix, a leading '#' survives so hashtag markers stay intact.
inline std::vector<std::string> tokenize(std::string_view text, bool keep_hash_prefix = false) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t start = i;
        std::uint32_t cp = detail::decode_utf8(text, i);
        if (detail::is_unicode_space(cp)) continue;
        std::size_t end = i;
        while (end < text.size()) {
            std::size_t probe = end;
            cp = detail::decode_utf8(text, probe);
            if (detail::is_unicode_space(cp)) break;
            end = probe;
        }
        i = end;
        std::string_view tok = text.substr(start, end - start);
        const bool hash_marked = keep_hash_prefix && !tok.empty() && tok.front() == '#';
        if (hash_marked) tok.remove_prefix(1);
        while (!tok.empty() && detail::is_ascii_punct(tok.front())) tok.remove_prefix(1);
        while (!tok.empty() && detail::is_ascii_punct(tok.back())) tok.remove_suffix(1);
        if (tok.empty()) continue;
        out.push_back(hash_marked ? "#" + std::string(tok) : std::string(tok));
    }
    return out;
}

class ContractionTable {
public:
    void insert(std::string form, std::string expansion) {
        form = lowercase_ascii(form);
        if (!map_.emplace(std::move(form), std::move(expansion)).second)
            throw ParseError("duplicate contraction key");
    }

    const std::string* find(std::string_view form) const {
        const auto it = map_.find(lowercase_ascii(form));
        return it == map_.end() ? nullptr : &it->second;
    }

    std::size_t size() const { return map_.size(); }

    static ContractionTable load(const std::string& path);

private:
    std::unordered_map<std::string, std::string> map_;
};

class EmojiAliasTable {
public:
    void insert(std::string emoji, std::string alias) {
        for (char c : alias)
            if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_'))
                throw ParseError("emoji alias '" + alias + "' is not a lowercase ascii word");
        entries_.emplace_back(std::move(emoji), std::move(alias));
        // Longest key first so multi-codepoint sequences win over their prefixes.
        std::stable_sort(entries_.begin(), entries_.end(),
                         [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
    }

    std::size_t size() const { return entries_.size(); }

    // Replaces every known emoji sequence with " alias " so aliases become
    // freestanding tokens. Unknown emoji are left in place.
    std::string apply(std::string_view text) const {
        std::string out;
        out.reserve(text.size());
        std::size_t i = 0;
        while (i < text.size()) {
            bool matched = false;
            for (const auto& [emoji, alias] : entries_) {
                if (text.compare(i, emoji.size(), emoji) == 0) {
                    out += ' ';
                    out += alias;
                    out += ' ';
                    i += emoji.size();
                    matched = true;
                    break;
                }
            }
            if (!matched) out += text[i++];
        }
        return out;
    }

    static EmojiAliasTable load(const std::string& path);

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

namespace detail {

inline void load_tsv(const std::string& path,
                     const std::function<void(std::string, std::string)>& sink) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open table file " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected form<TAB>expansion");
        sink(line.substr(0, tab), line.substr(tab + 1));
    }
}

}  // namespace detail

inline ContractionTable ContractionTable::load(const std::string& path) {
    ContractionTable t;
    detail::load_tsv(path, [&t](std::string k, std::string v) { t.insert(std::move(k), std::move(v)); });
    return t;
}

inline EmojiAliasTable EmojiAliasTable::load(const std::string& path) {
    EmojiAliasTable t;
    detail::load_tsv(path, [&t](std::string k, std::string v) { t.insert(std::move(k), std::move(v)); });
    return t;
}

ContractionTable default_contractions();
EmojiAliasTable default_emoji_aliases();

namespace detail {

// Expands whitespace-delimited chunks through the contraction table,
// preserving leading/trailing punctuation. Hashtag chunks pass through.
inline std::string expand_contractions(std::string_view text, const ContractionTable& table) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (static_cast<unsigned char>(text[i]) < 0x80 && std::isspace(static_cast<unsigned char>(text[i]))) {
            out += text[i++];
            continue;
        }
        std::size_t start = i;
        while (i < text.size() &&
               !(static_cast<unsigned char>(text[i]) < 0x80 && std::isspace(static_cast<unsigned char>(text[i]))))
            ++i;
        std::string_view chunk = text.substr(start, i - start);
        if (chunk.front() == '#') {
            out += chunk;
            continue;
        }
        std::size_t lead = 0, trail = 0;
        while (lead < chunk.size() && is_ascii_punct(chunk[lead])) ++lead;
        while (trail < chunk.size() - lead && is_ascii_punct(chunk[chunk.size() - 1 - trail])) ++trail;
        std::string_view core = chunk.substr(lead, chunk.size() - lead - trail);
        if (const std::string* exp = core.empty() ? nullptr : table.find(core)) {
            out += chunk.substr(0, lead);
            out += *exp;
            out += chunk.substr(chunk.size() - trail);
        } else {
            out += chunk;
        }
    }
    return out;
}

inline std::string collapse_whitespace(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool in_space = true;  // trims leading space too
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t start = i;
        const std::uint32_t cp = decode_utf8(text, i);
        if (is_unicode_space(cp)) {
            if (!in_space) out += ' ';
            in_space = true;
        } else {
            out.append(text.substr(start, i - start));
            in_space = false;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

// Drops leading standalone uppercase "RT" tokens; returns how many were dropped.
inline int drop_leading_retweet(std::string& text) {
    int dropped = 0;
    for (;;) {
        std::size_t i = 0;
        while (i < text.size() && text[i] == ' ') ++i;
        if (text.compare(i, 2, "RT") != 0) break;
        const std::size_t after = i + 2;
        if (after < text.size() && text[after] != ' ') break;
        text.erase(0, std::min(after + 1, text.size()));
        ++dropped;
    }
    return dropped;
}

}  // namespace detail

// Full cleaning pass: emoji aliasing, hashtag extraction, contraction
// expansion, whitespace normalization, leading-RT removal, '@' removal,
// lowercasing. Hashtags are removed from the keyword stream but kept in
// raw_text; hashtag_tokens holds the raw (unsegmented) hashtag bodies.
inline CleanTweet clean(const RawTweet& raw, const ContractionTable& contractions,
                        const EmojiAliasTable& emoji) {
    const std::string aliased = emoji.apply(raw.text);

    // Hashtag extraction: '#' followed by word characters.
    std::vector<std::string> hashtags;
    std::string with_tags, without_tags;
    with_tags.reserve(aliased.size());
    without_tags.reserve(aliased.size());
    std::size_t i = 0;
    while (i < aliased.size()) {
        if (aliased[i] == '#' && i + 1 < aliased.size() && detail::is_word_char(aliased[i + 1])) {
            std::size_t end = i + 1;
            while (end < aliased.size() && detail::is_word_char(aliased[end])) ++end;
            hashtags.push_back(lowercase_ascii(aliased.substr(i + 1, end - i - 1)));
            with_tags.append(aliased, i, end - i);
            without_tags += ' ';
            i = end;
        } else {
            with_tags += aliased[i];
            without_tags += aliased[i];
            ++i;
        }
    }

    with_tags = detail::expand_contractions(with_tags, contractions);
    without_tags = detail::expand_contractions(without_tags, contractions);

    with_tags = detail::collapse_whitespace(with_tags);
    without_tags = detail::collapse_whitespace(without_tags);

    // The retweet marker only counts at the start of the original tweet, so
    // the raw stream decides and the keyword stream follows suit.
    const int dropped = detail::drop_leading_retweet(with_tags);
    for (int k = 0; k < dropped; ++k) {
        std::size_t j = 0;
        while (j < without_tags.size() && without_tags[j] == ' ') ++j;
        if (without_tags.compare(j, 2, "RT") == 0 &&
            (j + 2 == without_tags.size() || without_tags[j + 2] == ' '))
            without_tags.erase(0, j + 3 > without_tags.size() ? without_tags.size() : j + 3);
    }

    std::erase(with_tags, '@');
    std::erase(without_tags, '@');

    CleanTweet out;
    out.raw_text = detail::collapse_whitespace(lowercase_ascii(with_tags));
    out.body = detail::collapse_whitespace(lowercase_ascii(without_tags));
    out.hashtag_tokens = std::move(hashtags);
    out.keyword_tokens = tokenize(out.body);
    out.label = raw.label;
    if (out.keyword_tokens.empty() && out.hashtag_tokens.empty())
        throw EmptyAfterCleaning("'" + raw.text + "'");
    return out;
}

// Greedy longest-match segmentation of a hashtag body against a vocabulary
// predicate. Falls back to the whole body when segmentation gets stuck.
template <typename ContainsFn>
std::vector<std::string> split_hashtag_with(std::string_view tag, ContainsFn&& contains) {
    std::string_view body = tag;
    if (!body.empty() && body.front() == '#') body.remove_prefix(1);
    const std::string whole = lowercase_ascii(body);
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (pos < whole.size()) {
        std::size_t len = whole.size() - pos;
        while (len > 0 && !contains(std::string_view(whole).substr(pos, len))) --len;
        if (len == 0) return {whole};
        parts.push_back(whole.substr(pos, len));
        pos += len;
    }
    if (parts.empty()) return {whole};
    return parts;
}

inline std::vector<std::string> split_hashtag(std::string_view tag,
                                              const std::unordered_set<std::string>& vocabulary) {
    return split_hashtag_with(tag, [&vocabulary](std::string_view w) {
        return vocabulary.count(std::string(w)) > 0;
    });
}

// Re-segments every hashtag token of a cleaned tweet against a vocabulary.
template <typename ContainsFn>
void segment_hashtags(CleanTweet& tweet, ContainsFn&& contains) {
    std::vector<std::string> out;
    for (const std::string& tag : tweet.hashtag_tokens) {
        auto parts = split_hashtag_with(tag, contains);
        out.insert(out.end(), parts.begin(), parts.end());
    }
    tweet.hashtag_tokens = std::move(out);
}

// Keeps tweets whose external sentiment prediction agrees with the polarity
// of their emotion label; neutral predictions always drop the tweet.
inline std::vector<RawTweet> filter_by_sentiment(const std::vector<RawTweet>& tweets,
                                                 const std::vector<Sentiment>& predictions) {
    if (tweets.size() != predictions.size())
        throw LengthMismatch(std::to_string(tweets.size()) + " tweets vs " +
                             std::to_string(predictions.size()) + " predictions");
    std::vector<RawTweet> kept;
    for (std::size_t i = 0; i < tweets.size(); ++i) {
        if (predictions[i] == Sentiment::Neutral) continue;
        if (predictions[i] == label_sentiment(tweets[i].label)) kept.push_back(tweets[i]);
    }
    return kept;
}

// ---- file formats ----

inline std::vector<RawTweet> read_corpus_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus " + path);
    std::vector<RawTweet> tweets;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!j.contains("text") || !j["text"].is_string() || !j.contains("label") ||
            !j["label"].is_string())
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": record needs string fields 'text' and 'label'");
        tweets.push_back(RawTweet{j["text"].get<std::string>(),
                                  parse_label(j["label"].get<std::string>())});
    }
    return tweets;
}

inline void write_corpus_jsonl(const std::string& path, const std::vector<RawTweet>& tweets) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write corpus " + path);
    for (const RawTweet& t : tweets) {
        nlohmann::json j{{"text", t.text}, {"label", to_string(t.label)}};
        out << j.dump() << '\n';
    }
}

// One of positive/negative/neutral per line, aligned with corpus order.
inline std::vector<Sentiment> read_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open predictions " + path);
    std::vector<Sentiment> preds;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string trimmed = detail::collapse_whitespace(line);
        if (trimmed.empty()) continue;
        try {
            preds.push_back(parse_sentiment(trimmed));
        } catch (const ParseError&) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected positive/negative/neutral");
        }
    }
    return preds;
}

inline ContractionTable default_contractions() {
    static const std::pair<const char*, const char*> kEntries[] = {
        {"i'm", "i am"},         {"i've", "i have"},       {"i'll", "i will"},
        {"i'd", "i would"},      {"you're", "you are"},    {"you've", "you have"},
        {"you'll", "you will"},  {"you'd", "you would"},   {"he's", "he is"},
        {"he'll", "he will"},    {"he'd", "he would"},     {"she's", "she is"},
        {"she'll", "she will"},  {"she'd", "she would"},   {"it's", "it is"},
        {"it'll", "it will"},    {"we're", "we are"},      {"we've", "we have"},
        {"we'll", "we will"},    {"we'd", "we would"},     {"they're", "they are"},
        {"they've", "they have"},{"they'll", "they will"}, {"they'd", "they would"},
        {"that's", "that is"},   {"that'll", "that will"}, {"who's", "who is"},
        {"what's", "what is"},   {"what're", "what are"},  {"where's", "where is"},
        {"when's", "when is"},   {"why's", "why is"},      {"how's", "how is"},
        {"isn't", "is not"},     {"aren't", "are not"},    {"wasn't", "was not"},
        {"weren't", "were not"}, {"hasn't", "has not"},    {"haven't", "have not"},
        {"hadn't", "had not"},   {"doesn't", "does not"},  {"don't", "do not"},
        {"didn't", "did not"},   {"won't", "will not"},    {"wouldn't", "would not"},
        {"can't", "cannot"},     {"couldn't", "could not"},{"shouldn't", "should not"},
        {"mustn't", "must not"}, {"let's", "let us"},      {"y'all", "you all"},
        {"ain't", "is not"},     {"could've", "could have"},{"would've", "would have"},
        {"should've", "should have"}, {"there's", "there is"}, {"here's", "here is"},
    };
    ContractionTable t;
    for (const auto& [k, v] : kEntries) t.insert(k, v);
    return t;
}

inline EmojiAliasTable default_emoji_aliases() {
    static const std::pair<const char*, const char*> kEntries[] = {
        {"\U0001F600", "grinning_face"},
        {"\U0001F601", "beaming_face_with_smiling_eyes"},
        {"\U0001F602", "face_with_tears_of_joy"},
        {"\U0001F923", "rolling_on_the_floor_laughing"},
        {"\U0001F60A", "smiling_face_with_smiling_eyes"},
        {"\U0001F60D", "smiling_face_with_heart_eyes"},
        {"\U0001F618", "face_blowing_a_kiss"},
        {"\U0001F609", "winking_face"},
        {"\U0001F642", "slightly_smiling_face"},
        {"\U0001F973", "partying_face"},
        {"\U0001F60E", "smiling_face_with_sunglasses"},
        {"\U0001F914", "thinking_face"},
        {"\U0001F644", "face_with_rolling_eyes"},
        {"\U0001F634", "sleeping_face"},
        {"\U0001F622", "crying_face"},
        {"\U0001F62D", "loudly_crying_face"},
        {"\U0001F61E", "disappointed_face"},
        {"\U0001F614", "pensive_face"},
        {"\U0001F621", "enraged_face"},
        {"\U0001F620", "angry_face"},
        {"\U0001F92C", "face_with_symbols_on_mouth"},
        {"\U0001F631", "face_screaming_in_fear"},
        {"\U0001F628", "fearful_face"},
        {"\U0001F630", "anxious_face_with_sweat"},
        {"\U0001F62E", "face_with_open_mouth"},
        {"\U0001F632", "astonished_face"},
        {"❤️", "red_heart"},
        {"❤", "red_heart"},
        {"\U0001F494", "broken_heart"},
        {"\U0001F44D", "thumbs_up"},
        {"\U0001F44E", "thumbs_down"},
        {"\U0001F64F", "folded_hands"},
        {"\U0001F389", "party_popper"},
        {"\U0001F525", "fire"},
        {"✨", "sparkles"},
        {"\U0001F4AF", "hundred_points"},
    };
    EmojiAliasTable t;
    for (const auto& [k, v] : kEntries) t.insert(k, v);
    return t;
}

}  // namespace mlta
