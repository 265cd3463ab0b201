#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dialsel/corpus.hpp"
#include "dialsel/errors.hpp"
#include "dialsel/rng.hpp"
#include "dialsel/text.hpp"

namespace dialsel {

// Hard-constraint thresholds for the rule-based selector. The defaults are
// declared, overridable choices, not calibrated values.
struct HeuristicConfig {
    std::size_t min_asst_turns = 2;
    std::size_t short_tok_th = 5;       // assistant turn is short below this many tokens
    std::size_t short_char_th = 20;     // ... or below this many characters
    double max_short_ratio = 0.5;
    std::size_t rep_n = 3;              // n-gram order for the repetition ratio
    double max_rep_score = 0.5;
    double min_lex_div = 0.3;
    std::size_t min_asst_total_toks = 50;
};

struct HeuristicScore {
    std::string dialogue_id;
    double r_short = 0.0;   // fraction of short assistant turns
    double r_ng = 0.0;      // 1 - unique/all n-grams over the assistant token stream
    double r_sent = 0.0;    // fraction of assistant sentences that repeat
    double r_rep = 0.0;     // 0.5 * r_ng + 0.5 * r_sent
    double r_lex = 0.0;     // unique / total assistant tokens
    double s = 0.0;         // 0.45 (1 - r_short) + 0.35 (1 - r_rep) + 0.20 r_lex, clipped
    bool passed = false;
    std::vector<std::string> fail_reasons;
};

inline double heuristic_composite(double r_short, double r_rep, double r_lex) {
    return std::clamp(0.45 * (1.0 - r_short) + 0.35 * (1.0 - r_rep) + 0.20 * r_lex,
                      0.0, 1.0);
}

// Surface statistics over the assistant side only.
inline HeuristicScore heuristic_stats(const Dialogue& d, const HeuristicConfig& cfg) {
    HeuristicScore score;
    score.dialogue_id = d.id;

    std::vector<std::vector<std::string>> turn_tokens;
    std::vector<std::string> all_tokens;
    std::vector<std::string> sentences;
    std::size_t short_turns = 0;
    for (const Turn& t : d.turns) {
        std::vector<std::string> toks = word_tokens(t.answer);
        if (toks.size() < cfg.short_tok_th ||
            codepoint_length(t.answer) < cfg.short_char_th) {
            ++short_turns;
        }
        all_tokens.insert(all_tokens.end(), toks.begin(), toks.end());
        turn_tokens.push_back(std::move(toks));
        for (std::string& s : split_sentences(t.answer)) {
            sentences.push_back(std::move(s));
        }
    }
    const std::size_t turns = d.turns.size();
    score.r_short = turns == 0 ? 0.0
                               : static_cast<double>(short_turns) /
                                     static_cast<double>(turns);

    // n-gram repetition over the concatenated assistant token stream
    if (all_tokens.size() >= cfg.rep_n) {
        std::unordered_set<std::uint64_t> unique_grams;
        std::size_t total_grams = all_tokens.size() - cfg.rep_n + 1;
        for (std::size_t i = 0; i < total_grams; ++i) {
            std::uint64_t h = 0xcbf29ce484222325ull;
            for (std::size_t j = 0; j < cfg.rep_n; ++j) {
                h = (h ^ fnv1a64(all_tokens[i + j])) * 0x100000001b3ull;
            }
            unique_grams.insert(h);
        }
        score.r_ng = 1.0 - static_cast<double>(unique_grams.size()) /
                               static_cast<double>(total_grams);
    }

    if (!sentences.empty()) {
        std::unordered_set<std::string> unique_sents(sentences.begin(), sentences.end());
        score.r_sent = 1.0 - static_cast<double>(unique_sents.size()) /
                                 static_cast<double>(sentences.size());
    }
    score.r_rep = 0.5 * score.r_ng + 0.5 * score.r_sent;

    if (!all_tokens.empty()) {
        std::unordered_set<std::string> vocab(all_tokens.begin(), all_tokens.end());
        score.r_lex = static_cast<double>(vocab.size()) /
                      static_cast<double>(all_tokens.size());
    }

    score.s = heuristic_composite(score.r_short, score.r_rep, score.r_lex);

    if (turns < cfg.min_asst_turns) {
        score.fail_reasons.push_back("fewer assistant turns than min_asst_turns");
    }
    if (score.r_short > cfg.max_short_ratio) {
        score.fail_reasons.push_back("short-response ratio above max_short_ratio");
    }
    if (score.r_rep > cfg.max_rep_score) {
        score.fail_reasons.push_back("repetition score above max_rep_score");
    }
    if (score.r_lex < cfg.min_lex_div) {
        score.fail_reasons.push_back("lexical diversity below min_lex_div");
    }
    if (all_tokens.size() < cfg.min_asst_total_toks) {
        score.fail_reasons.push_back("total assistant tokens below min_asst_total_toks");
    }
    score.passed = score.fail_reasons.empty();
    return score;
}

// Passing dialogues ranked by the composite score, descending; ties by id.
// Returns fewer than budget ids when too few pass.
inline std::vector<std::string> heuristic_select(const Corpus& corpus,
                                                 const HeuristicConfig& cfg,
                                                 std::size_t budget) {
    std::vector<std::pair<double, std::string>> passing;
    for (const Dialogue& d : corpus.dialogues) {
        HeuristicScore s = heuristic_stats(d, cfg);
        if (s.passed) passing.emplace_back(s.s, d.id);
    }
    std::sort(passing.begin(), passing.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    if (passing.size() > budget) passing.resize(budget);
    std::vector<std::string> ids;
    ids.reserve(passing.size());
    for (auto& [s, id] : passing) ids.push_back(std::move(id));
    return ids;
}

// Uniform sample without replacement, in draw order.
inline std::vector<std::string> random_select(const Corpus& corpus, std::size_t budget,
                                              std::uint64_t seed) {
    if (budget > corpus.dialogues.size()) {
        throw DataError("random_select: budget exceeds corpus size");
    }
    std::vector<std::string> ids;
    ids.reserve(corpus.dialogues.size());
    for (const Dialogue& d : corpus.dialogues) ids.push_back(d.id);
    SeededRng rng(seed);
    for (std::size_t i = 0; i < budget; ++i) {
        std::size_t j = i + rng.next_index(ids.size() - i);
        std::swap(ids[i], ids[j]);
    }
    ids.resize(budget);
    return ids;
}

} // namespace dialsel
