#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dialsel/corpus.hpp"
#include "dialsel/errors.hpp"
#include "dialsel/parallel.hpp"
#include "dialsel/text.hpp"

namespace dialsel {

using EntitySet = std::set<std::string>;

// Joint per-turn output: entities on both sides plus a 0/1/2 rating of how
// well the answer's form matches what the query asks for.
struct TurnAnnotation {
    EntitySet q_entities;
    EntitySet a_entities;
    int style_match_score = 0;
    std::string style_comment;

    bool operator==(const TurnAnnotation&) const = default;
};

struct DialogueAnnotation {
    std::string dialogue_id;
    std::vector<TurnAnnotation> turns;
    std::string backend;
    std::vector<std::pair<std::size_t, std::string>> failures;  // (1-based turn, reason)

    bool operator==(const DialogueAnnotation&) const = default;
};

enum class ScorerKind { rules, remote };

struct ScorerSpec {
    ScorerKind kind = ScorerKind::rules;
    // remote
    std::string endpoint;
    std::string model;
    std::string api_key_env;
    unsigned max_retries = 3;
    unsigned backoff_ms = 250;
    unsigned context_turns = 0;   // previous turns shown to the remote scorer
    bool strict = false;          // abort on a failed turn instead of defaulting
};

// Previous turns optionally passed along for context; the rules backend
// ignores them.
struct TurnContext {
    std::vector<const Turn*> previous;
};

class TurnScorer {
public:
    virtual ~TurnScorer() = default;
    virtual TurnAnnotation annotate_turn(const std::string& query,
                                         const std::string& answer,
                                         const TurnContext& context) = 0;
    virtual std::string fingerprint() const = 0;
};

// Deterministic rules backend. Entities come from the shared extractor;
// the style score is 0 for an empty answer, 1 when the answer shares no
// entity with the query, 2 otherwise.
class RulesScorer : public TurnScorer {
public:
    TurnAnnotation annotate_turn(const std::string& query, const std::string& answer,
                                 const TurnContext&) override {
        TurnAnnotation ann;
        ann.q_entities = extract_entities(query);
        ann.a_entities = extract_entities(answer);
        if (answer.empty()) {
            ann.style_match_score = 0;
        } else {
            bool shared = false;
            for (const std::string& e : ann.a_entities) {
                if (ann.q_entities.contains(e)) {
                    shared = true;
                    break;
                }
            }
            ann.style_match_score = shared ? 2 : 1;
        }
        return ann;
    }

    std::string fingerprint() const override { return "rules:v1"; }
};

inline TurnAnnotation default_annotation() { return TurnAnnotation{}; }

// Annotates every turn, optionally in parallel. Results are keyed by turn
// index, so completion order never changes the outcome. Failed turns get
// the default annotation and an entry in failures, unless strict.
inline DialogueAnnotation annotate_dialogue(const Dialogue& d, TurnScorer& scorer,
                                            unsigned parallelism = 1,
                                            bool strict = false,
                                            unsigned context_turns = 0) {
    DialogueAnnotation ann;
    ann.dialogue_id = d.id;
    ann.backend = scorer.fingerprint();
    ann.turns.resize(d.turns.size());
    std::vector<std::string> errors(d.turns.size());
    parallel_for(d.turns.size(), parallelism, [&](std::size_t t) {
        TurnContext ctx;
        std::size_t from = (context_turns >= t) ? 0 : t - context_turns;
        for (std::size_t j = from; j < t; ++j) ctx.previous.push_back(&d.turns[j]);
        try {
            ann.turns[t] = scorer.annotate_turn(d.turns[t].query, d.turns[t].answer, ctx);
        } catch (const std::exception& e) {
            errors[t] = e.what();
            ann.turns[t] = default_annotation();
        }
    });
    for (std::size_t t = 0; t < errors.size(); ++t) {
        if (errors[t].empty()) continue;
        if (strict) {
            throw BackendError("dialogue " + d.id + ", turn " + std::to_string(t + 1) +
                               ": " + errors[t]);
        }
        ann.failures.emplace_back(t + 1, errors[t]);
    }
    return ann;
}

// Running unions per turn t: queries up to and including t, answers
// strictly before t.
struct PrefixEntitySets {
    std::vector<EntitySet> queries_upto;    // E^Q over turns 1..t
    std::vector<EntitySet> answers_before;  // E^A over turns 1..t-1
};

inline PrefixEntitySets prefix_entity_sets(const DialogueAnnotation& ann) {
    PrefixEntitySets out;
    const std::size_t n = ann.turns.size();
    out.queries_upto.resize(n);
    out.answers_before.resize(n);
    EntitySet q_acc;
    EntitySet a_acc;
    for (std::size_t t = 0; t < n; ++t) {
        out.answers_before[t] = a_acc;
        q_acc.insert(ann.turns[t].q_entities.begin(), ann.turns[t].q_entities.end());
        out.queries_upto[t] = q_acc;
        a_acc.insert(ann.turns[t].a_entities.begin(), ann.turns[t].a_entities.end());
    }
    return out;
}

// --- cache serialization ---------------------------------------------------

inline json annotation_to_json(const DialogueAnnotation& ann) {
    json turns = json::array();
    for (const TurnAnnotation& t : ann.turns) {
        turns.push_back({{"q_entities", t.q_entities},
                         {"a_entities", t.a_entities},
                         {"style_match_score", t.style_match_score},
                         {"style_comment", t.style_comment}});
    }
    json failures = json::array();
    for (const auto& [turn, reason] : ann.failures) {
        failures.push_back({{"turn", turn}, {"reason", reason}});
    }
    return json{{"dialogue_id", ann.dialogue_id},
                {"backend", ann.backend},
                {"turns", std::move(turns)},
                {"failures", std::move(failures)}};
}

inline DialogueAnnotation annotation_from_json(const json& rec) {
    DialogueAnnotation ann;
    ann.dialogue_id = rec.at("dialogue_id").get<std::string>();
    ann.backend = rec.value("backend", std::string{});
    for (const json& t : rec.at("turns")) {
        TurnAnnotation turn;
        for (const json& e : t.at("q_entities")) turn.q_entities.insert(e.get<std::string>());
        for (const json& e : t.at("a_entities")) turn.a_entities.insert(e.get<std::string>());
        turn.style_match_score = t.at("style_match_score").get<int>();
        if (turn.style_match_score < 0 || turn.style_match_score > 2) {
            throw DataError("annotation for " + ann.dialogue_id +
                            ": style_match_score out of {0,1,2}");
        }
        turn.style_comment = t.value("style_comment", std::string{});
        ann.turns.push_back(std::move(turn));
    }
    if (rec.contains("failures")) {
        for (const json& f : rec["failures"]) {
            ann.failures.emplace_back(f.at("turn").get<std::size_t>(),
                                      f.at("reason").get<std::string>());
        }
    }
    return ann;
}

} // namespace dialsel
