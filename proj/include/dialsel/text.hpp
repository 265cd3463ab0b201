#pragma once

#include <array>
#include <cctype>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace dialsel {

// Word tokenizer shared by the rules entity extractor and the heuristic
// baseline. A word is a maximal run of ASCII alphanumerics or non-ASCII
// bytes; ASCII letters are lowercased, everything else passes through
// unchanged. Punctuation and whitespace split.
inline bool is_word_byte(unsigned char c) {
    return std::isalnum(c) || c >= 0x80;
}

inline std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

inline std::vector<std::string> word_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        if (is_word_byte(c)) {
            cur.push_back(static_cast<char>(
                (c >= 'A' && c <= 'Z') ? c - 'A' + 'a' : c));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

// Codepoint count for UTF-8 (continuation bytes don't count).
inline std::size_t codepoint_length(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s) {
        if ((c & 0xC0) != 0x80) ++n;
    }
    return n;
}

inline bool is_numeric_token(std::string_view tok) {
    if (tok.empty()) return false;
    for (unsigned char c : tok) {
        if (!std::isdigit(c)) return false;
    }
    return true;
}

// Sentence segmentation: a sentence ends at a run of . ! ? followed by
// whitespace or end of text. Sentences are trimmed; empties dropped.
inline std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> sentences;
    std::string cur;
    auto flush = [&]() {
        std::size_t b = cur.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) {
            cur.clear();
            return;
        }
        std::size_t e = cur.find_last_not_of(" \t\r\n");
        sentences.push_back(cur.substr(b, e - b + 1));
        cur.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        cur.push_back(c);
        if (c == '.' || c == '!' || c == '?') {
            std::size_t j = i + 1;
            while (j < text.size() &&
                   (text[j] == '.' || text[j] == '!' || text[j] == '?')) {
                cur.push_back(text[j]);
                ++j;
            }
            if (j >= text.size() || std::isspace(static_cast<unsigned char>(text[j]))) {
                flush();
            }
            i = j - 1;
        }
    }
    flush();
    return sentences;
}

// 200 common English function words. Tokens on this list never become
// entities under the rules backend.
inline const std::unordered_set<std::string>& stopwords() {
    static const std::array<const char*, 200> kWords = {
        "a",          "about",      "above",      "across",     "after",
        "again",      "against",    "all",        "also",       "always",
        "am",         "an",         "and",        "any",        "anyone",
        "anything",   "are",        "aren",       "around",     "as",
        "at",         "be",         "because",    "been",       "before",
        "being",      "below",      "between",    "beyond",     "both",
        "but",        "by",         "can",        "cannot",     "could",
        "couldn",     "did",        "didn",       "do",         "does",
        "doesn",      "doing",      "don",        "down",       "during",
        "each",       "either",     "else",       "enough",     "even",
        "ever",       "every",      "everyone",   "everything", "few",
        "for",        "from",       "had",        "hadn",       "has",
        "hasn",       "have",       "haven",      "having",     "he",
        "her",        "here",       "hers",       "herself",    "him",
        "himself",    "his",        "how",        "however",    "i",
        "if",         "in",         "into",       "is",         "isn",
        "it",         "its",        "itself",     "just",       "less",
        "let",        "like",       "may",        "maybe",      "me",
        "might",      "more",       "most",       "much",       "must",
        "my",         "myself",     "need",       "neither",    "never",
        "no",         "none",       "nor",        "not",        "nothing",
        "now",        "of",         "off",        "often",      "on",
        "once",       "only",       "onto",       "or",         "other",
        "otherwise",  "our",        "ours",       "ourselves",  "out",
        "over",       "own",        "perhaps",    "please",     "quite",
        "rather",     "really",     "same",       "several",    "shall",
        "she",        "should",     "shouldn",    "since",      "so",
        "some",       "someone",    "something",  "sometimes",  "soon",
        "still",      "such",       "sure",       "than",       "thanks",
        "that",       "the",        "their",      "theirs",     "them",
        "themselves", "then",       "there",      "therefore",  "these",
        "they",       "this",       "those",      "through",    "thus",
        "to",         "too",        "toward",     "towards",    "under",
        "unless",     "until",      "up",         "upon",       "us",
        "very",       "was",        "wasn",       "we",         "well",
        "were",       "weren",      "what",       "when",       "where",
        "whether",    "which",      "while",      "who",        "whom",
        "why",        "will",       "with",       "within",     "without",
        "won",        "would",      "wouldn",     "yes",        "yet",
        "you",        "your",       "yours",      "yourself",   "yourselves",
    };
    static const std::unordered_set<std::string> set(kWords.begin(), kWords.end());
    return set;
}

// Rules entity extractor: lowercase, split on non-alphanumerics, keep
// tokens of length >= 3 codepoints that are not stopwords, plus all
// purely numeric tokens of any length. Deduplicated.
inline std::set<std::string> extract_entities(std::string_view text) {
    std::set<std::string> entities;
    for (const std::string& tok : word_tokens(text)) {
        if (is_numeric_token(tok)) {
            entities.insert(tok);
        } else if (codepoint_length(tok) >= 3 && !stopwords().contains(tok)) {
            entities.insert(tok);
        }
    }
    return entities;
}

// Entity normalization applied to every backend's output before set math.
inline std::string normalize_entity(std::string_view raw) {
    std::size_t b = raw.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    std::size_t e = raw.find_last_not_of(" \t\r\n");
    return ascii_lower(raw.substr(b, e - b + 1));
}

} // namespace dialsel
