#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "dialsel/corpus.hpp"
#include "dialsel/errors.hpp"
#include "dialsel/rng.hpp"
#include "dialsel/scorer.hpp"

namespace dialsel {

// Order-sensitive structural metrics. All four dialogue-level values derive
// from the turn-wise overlap between answer entities and the history set
// C_t (everything introduced strictly before turn t).
struct HistoryMetrics {
    std::string dialogue_id;
    std::vector<double> har_per_turn;
    std::vector<double> enr_per_turn;
    double har = 0.0;   // history anchoring rate, mean over turns
    double enr = 0.0;   // entity novelty rate, mean over turns
    double esc = 0.0;   // (har + enr) / 2
    double h = 0.0;     // history dependency, (har + (1 - enr)) / 2
    std::size_t turn_count = 0;
};

// Entities introduced before turn t (1-based): union of query and answer
// entities over turns 1..t-1. Empty at t = 1.
inline EntitySet history_set(const DialogueAnnotation& ann, std::size_t t) {
    if (t < 1 || t > ann.turns.size()) {
        throw DataError("history_set: turn index out of range");
    }
    EntitySet c;
    for (std::size_t j = 0; j + 1 < t; ++j) {
        c.insert(ann.turns[j].q_entities.begin(), ann.turns[j].q_entities.end());
        c.insert(ann.turns[j].a_entities.begin(), ann.turns[j].a_entities.end());
    }
    return c;
}

inline std::size_t intersection_size(const EntitySet& a, const EntitySet& b) {
    const EntitySet& small = a.size() <= b.size() ? a : b;
    const EntitySet& large = a.size() <= b.size() ? b : a;
    std::size_t n = 0;
    for (const std::string& e : small) {
        if (large.contains(e)) ++n;
    }
    return n;
}

// F1-style overlap between the answer entities and the history; 0 when both
// sides are empty.
inline double har_turn(const EntitySet& answer, const EntitySet& history) {
    const std::size_t denom = answer.size() + history.size();
    if (denom == 0) return 0.0;
    return 2.0 * static_cast<double>(intersection_size(answer, history)) /
           static_cast<double>(denom);
}

// Fraction of answer entities not seen in the history; 0 when the answer
// has no entities.
inline double enr_turn(const EntitySet& answer, const EntitySet& history) {
    if (answer.empty()) return 0.0;
    std::size_t novel = answer.size() - intersection_size(answer, history);
    return static_cast<double>(novel) / static_cast<double>(answer.size());
}

inline double esc_of(double har, double enr) { return (har + enr) / 2.0; }

// High when anchoring is strong and novelty low: later turns lean on
// earlier ones.
inline double history_dependency_of(double har, double enr) {
    return (har + (1.0 - enr)) / 2.0;
}

inline HistoryMetrics history_metrics(const DialogueAnnotation& ann) {
    if (ann.turns.empty()) throw DataError("history_metrics: empty annotation");
    HistoryMetrics m;
    m.dialogue_id = ann.dialogue_id;
    m.turn_count = ann.turns.size();
    EntitySet history;
    for (std::size_t t = 0; t < ann.turns.size(); ++t) {
        m.har_per_turn.push_back(har_turn(ann.turns[t].a_entities, history));
        m.enr_per_turn.push_back(enr_turn(ann.turns[t].a_entities, history));
        history.insert(ann.turns[t].q_entities.begin(), ann.turns[t].q_entities.end());
        history.insert(ann.turns[t].a_entities.begin(), ann.turns[t].a_entities.end());
    }
    const double n = static_cast<double>(m.turn_count);
    m.har = std::accumulate(m.har_per_turn.begin(), m.har_per_turn.end(), 0.0) / n;
    m.enr = std::accumulate(m.enr_per_turn.begin(), m.enr_per_turn.end(), 0.0) / n;
    m.esc = esc_of(m.har, m.enr);
    m.h = history_dependency_of(m.har, m.enr);
    return m;
}

struct TurnWeighted {
    double har = 0.0;
    double enr = 0.0;
    double esc = 0.0;
};

// Aggregation where every turn counts equally: per-turn sums divided by the
// total number of turns across the set.
inline TurnWeighted turn_weighted(const std::vector<HistoryMetrics>& metrics) {
    if (metrics.empty()) throw DataError("turn_weighted: empty metric list");
    double har_sum = 0.0;
    double enr_sum = 0.0;
    std::size_t turns = 0;
    for (const HistoryMetrics& m : metrics) {
        har_sum += std::accumulate(m.har_per_turn.begin(), m.har_per_turn.end(), 0.0);
        enr_sum += std::accumulate(m.enr_per_turn.begin(), m.enr_per_turn.end(), 0.0);
        turns += m.turn_count;
    }
    TurnWeighted tw;
    tw.har = har_sum / static_cast<double>(turns);
    tw.enr = enr_sum / static_cast<double>(turns);
    tw.esc = esc_of(tw.har, tw.enr);
    return tw;
}

// Ids of the dialogues whose history-dependency score reaches the
// fraction-quantile cutoff. Everything tied with the cutoff is included, so
// the subset can exceed ceil(fraction * N).
inline std::set<std::string> top_dependency_subset(const std::vector<HistoryMetrics>& metrics,
                                                   double fraction) {
    if (metrics.empty()) throw DataError("top_dependency_subset: empty metric list");
    if (fraction <= 0.0 || fraction > 1.0) {
        throw UsageError("top_dependency_subset: fraction not in (0,1]");
    }
    std::vector<double> hs;
    hs.reserve(metrics.size());
    for (const HistoryMetrics& m : metrics) hs.push_back(m.h);
    std::sort(hs.begin(), hs.end(), std::greater<>());
    auto want = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(metrics.size()) - 1e-12));
    want = std::clamp<std::size_t>(want, 1, metrics.size());
    const double cutoff = hs[want - 1];
    std::set<std::string> ids;
    for (const HistoryMetrics& m : metrics) {
        if (m.h >= cutoff) ids.insert(m.dialogue_id);
    }
    return ids;
}

// --- order perturbations ----------------------------------------------------

enum class PerturbationKind { identity, pair, block, query_only };

struct Perturbation {
    PerturbationKind kind = PerturbationKind::identity;
    std::size_t block_size = 2;      // block kind only, >= 2
    std::uint64_t seed = 0;
    double pair_swap_prob = 0.5;     // pair kind: per-pair swap probability
};

inline std::string perturbation_name(const Perturbation& p) {
    switch (p.kind) {
        case PerturbationKind::identity: return "identity";
        case PerturbationKind::pair: return "pair";
        case PerturbationKind::block: return "block(k=" + std::to_string(p.block_size) + ")";
        case PerturbationKind::query_only: return "query_only";
    }
    return "?";
}

namespace detail {

// Each dialogue draws from its own stream so corpus-level perturbation does
// not apply one permutation to every dialogue of the same length.
inline SeededRng perturbation_rng(const Perturbation& p, const std::string& dialogue_id) {
    return SeededRng(sub_seed(p.seed ^ fnv1a64(dialogue_id), perturbation_name(p)));
}

// New turn order for pair/block kinds; identity for query_only (which moves
// queries, not turns).
inline std::vector<std::size_t> turn_permutation(std::size_t n, const Perturbation& p,
                                                 const std::string& dialogue_id) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    if (n <= 1) return perm;
    SeededRng rng = perturbation_rng(p, dialogue_id);
    switch (p.kind) {
        case PerturbationKind::identity:
        case PerturbationKind::query_only:
            break;
        case PerturbationKind::pair:
            // Disjoint adjacent pairs (1,2)(3,4)...; each swaps independently.
            for (std::size_t i = 0; i + 1 < n; i += 2) {
                if (rng.next_bool(p.pair_swap_prob)) std::swap(perm[i], perm[i + 1]);
            }
            break;
        case PerturbationKind::block: {
            if (p.block_size < 2) throw UsageError("block perturbation: k must be >= 2");
            std::size_t nblocks = (n + p.block_size - 1) / p.block_size;
            std::vector<std::size_t> block_order(nblocks);
            std::iota(block_order.begin(), block_order.end(), 0);
            rng.shuffle(block_order);
            perm.clear();
            for (std::size_t b : block_order) {
                std::size_t lo = b * p.block_size;
                std::size_t hi = std::min(n, lo + p.block_size);
                for (std::size_t i = lo; i < hi; ++i) perm.push_back(i);
            }
            break;
        }
    }
    return perm;
}

inline std::vector<std::size_t> query_permutation(std::size_t n, const Perturbation& p,
                                                  const std::string& dialogue_id) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    if (p.kind == PerturbationKind::query_only && n > 1) {
        SeededRng rng = perturbation_rng(p, dialogue_id);
        rng.shuffle(perm);
    }
    return perm;
}

} // namespace detail

// Seeded rearrangement of a dialogue. pair/block permute whole turns and
// preserve the turn multiset; query_only permutes the queries across turns
// while the answer sequence stays fixed.
inline Dialogue perturb(const Dialogue& d, const Perturbation& p) {
    Dialogue out;
    out.id = d.id;
    out.meta = d.meta;
    const std::size_t n = d.turns.size();
    if (p.kind == PerturbationKind::query_only) {
        std::vector<std::size_t> qperm = detail::query_permutation(n, p, d.id);
        out.turns.reserve(n);
        for (std::size_t t = 0; t < n; ++t) {
            out.turns.push_back({d.turns[qperm[t]].query, d.turns[t].answer});
        }
    } else {
        std::vector<std::size_t> perm = detail::turn_permutation(n, p, d.id);
        out.turns.reserve(n);
        for (std::size_t t : perm) out.turns.push_back(d.turns[t]);
    }
    return out;
}

// Applies the same rearrangement to cached per-turn annotations instead of
// re-running a scorer. Exact for the entity-based metrics; the style score
// of query_only output keeps the original pairing's value, so don't use it
// for form scoring of query_only perturbations.
inline DialogueAnnotation permute_annotation(const DialogueAnnotation& ann,
                                             const Perturbation& p) {
    DialogueAnnotation out;
    out.dialogue_id = ann.dialogue_id;
    out.backend = ann.backend;
    const std::size_t n = ann.turns.size();
    if (p.kind == PerturbationKind::query_only) {
        std::vector<std::size_t> qperm = detail::query_permutation(n, p, ann.dialogue_id);
        out.turns.resize(n);
        for (std::size_t t = 0; t < n; ++t) {
            out.turns[t].q_entities = ann.turns[qperm[t]].q_entities;
            out.turns[t].a_entities = ann.turns[t].a_entities;
            out.turns[t].style_match_score = ann.turns[t].style_match_score;
            out.turns[t].style_comment = ann.turns[t].style_comment;
        }
    } else {
        std::vector<std::size_t> perm = detail::turn_permutation(n, p, ann.dialogue_id);
        out.turns.reserve(n);
        for (std::size_t t : perm) out.turns.push_back(ann.turns[t]);
    }
    return out;
}

// Harmonic mean of entity precision and recall. Two empty sets count as
// perfect agreement by default; flip vacuous_value to 0.0 to penalize.
inline double entity_f1(const EntitySet& predicted, const EntitySet& gold,
                        double vacuous_value = 1.0) {
    if (predicted.empty() && gold.empty()) return vacuous_value;
    if (predicted.empty() || gold.empty()) return 0.0;
    const double overlap = static_cast<double>(intersection_size(predicted, gold));
    if (overlap == 0.0) return 0.0;
    const double precision = overlap / static_cast<double>(predicted.size());
    const double recall = overlap / static_cast<double>(gold.size());
    return 2.0 * precision * recall / (precision + recall);
}

} // namespace dialsel
