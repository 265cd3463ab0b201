#pragma once

// Deterministic synthetic corpora for tests. Entity tokens are alphanumeric
// and at least three characters so the rules extractor keeps them; filler
// words are drawn from the built-in stopword list so they never become
// entities.

#include <string>
#include <vector>

#include "dialsel/corpus.hpp"
#include "dialsel/rng.hpp"

namespace synthetic {

// High history-dependency corpus. Answer t introduces chain token c_t and
// repeats the previous `window` chain tokens, so each chain token is carried
// by several consecutive answers: most answer entities repeat earlier ones,
// anchoring survives local turn swaps, and novelty is untouched by query
// reordering (answer tokens never appear in queries). Queries are
// entity-rich and run-structured (consecutive turns share one topic token
// set), which keeps the unperturbed history sets small; shuffling queries
// scatters the topics and inflates the early history sets, deflating the
// anchoring overlap.
inline dialsel::Corpus history_chain_corpus(std::size_t dialogues,
                                            std::size_t turns = 12) {
    const std::size_t run_len = 4;       // consecutive turns per query topic
    const std::size_t run_tokens = 16;   // entity tokens per query topic
    const std::size_t window = 6;        // chain tokens repeated per answer
    dialsel::Corpus corpus;
    corpus.source = "synthetic:history_chain";
    for (std::size_t d = 0; d < dialogues; ++d) {
        dialsel::Dialogue dlg;
        dlg.id = "hc" + std::to_string(d);
        for (std::size_t t = 0; t < turns; ++t) {
            std::size_t run = t / run_len;
            std::string query = "what about";
            for (std::size_t w = 0; w < run_tokens; ++w) {
                query += " top" + std::to_string(d) + "r" + std::to_string(run) + "w" +
                         std::to_string(w);
            }
            std::string answer = "here is";
            for (std::size_t back = window; back >= 1; --back) {
                if (t >= back) {
                    answer += " ch" + std::to_string(d) + "x" + std::to_string(t - back);
                }
            }
            answer += " ch" + std::to_string(d) + "x" + std::to_string(t);
            dlg.turns.push_back({query, answer});
        }
        corpus.dialogues.push_back(std::move(dlg));
    }
    return corpus;
}

// Varied corpus for end-to-end runs: topic pools, mixed lengths, a spread of
// answer quality (some answers echo a query entity, some are unrelated, some
// empty) so every stage has real work to do.
inline dialsel::Corpus varied_corpus(std::size_t dialogues, std::uint64_t seed) {
    const std::size_t topics = 40;
    const std::size_t topic_tokens = 12;
    dialsel::Corpus corpus;
    corpus.source = "synthetic:varied";
    dialsel::SeededRng rng(seed);
    for (std::size_t d = 0; d < dialogues; ++d) {
        dialsel::Dialogue dlg;
        dlg.id = "dlg" + std::to_string(d);
        std::size_t topic = rng.next_index(topics);
        std::size_t n_turns = 2 + rng.next_index(5);
        for (std::size_t t = 0; t < n_turns; ++t) {
            auto tok = [&](std::size_t w) {
                return "topic" + std::to_string(topic) + "word" + std::to_string(w);
            };
            std::string query = "how do i use " + tok(rng.next_index(topic_tokens)) +
                                " with " + tok(rng.next_index(topic_tokens));
            std::string answer;
            switch (rng.next_index(10)) {
                case 0:
                    answer = "";   // empty answer: lowest form score
                    break;
                case 1:
                case 2:
                    answer = "it should just work without more setup";  // no shared entity
                    break;
                default:
                    answer = "start with " + tok(rng.next_index(topic_tokens)) +
                             " then try detail" + std::to_string(d) + "x" +
                             std::to_string(t) + " and also " +
                             tok(rng.next_index(topic_tokens));
                    break;
            }
            dlg.turns.push_back({query, answer});
        }
        corpus.dialogues.push_back(std::move(dlg));
    }
    return corpus;
}

} // namespace synthetic
