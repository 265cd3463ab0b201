#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "dialsel/errors.hpp"
#include "dialsel/global_stage.hpp"
#include "dialsel/scorer.hpp"

namespace dialsel {

// Per-dialogue structural scores. Both dialogue-level values are plain
// means of the per-turn values.
struct DialogueScores {
    std::string dialogue_id;
    std::vector<double> ent_per_turn;   // each in [0,2]
    double entity = 0.0;                // mean of ent_per_turn
    std::vector<int> c_per_turn;        // each in {0,1,2}
    double form = 0.0;                  // mean of c_per_turn
};

// Per-turn entity score: anchoring (answer entities grounded in the queries
// seen so far) plus novelty (answer entities not seen in earlier answers).
// Zero when the answer has no entities.
inline std::pair<std::vector<double>, double> entity_score(const DialogueAnnotation& ann) {
    if (ann.turns.empty()) throw DataError("entity_score: empty annotation");
    PrefixEntitySets prefix = prefix_entity_sets(ann);
    std::vector<double> per_turn(ann.turns.size(), 0.0);
    for (std::size_t t = 0; t < ann.turns.size(); ++t) {
        const EntitySet& answer = ann.turns[t].a_entities;
        if (answer.empty()) continue;
        std::size_t anchored = 0;
        std::size_t novel = 0;
        for (const std::string& e : answer) {
            if (prefix.queries_upto[t].contains(e)) ++anchored;
            if (!prefix.answers_before[t].contains(e)) ++novel;
        }
        per_turn[t] = (static_cast<double>(anchored) + static_cast<double>(novel)) /
                      static_cast<double>(answer.size());
    }
    double mean = std::accumulate(per_turn.begin(), per_turn.end(), 0.0) /
                  static_cast<double>(per_turn.size());
    return {std::move(per_turn), mean};
}

inline std::pair<std::vector<int>, double> form_score(const DialogueAnnotation& ann) {
    if (ann.turns.empty()) throw DataError("form_score: empty annotation");
    std::vector<int> per_turn;
    per_turn.reserve(ann.turns.size());
    for (const TurnAnnotation& t : ann.turns) per_turn.push_back(t.style_match_score);
    double mean = std::accumulate(per_turn.begin(), per_turn.end(), 0.0) /
                  static_cast<double>(per_turn.size());
    return {std::move(per_turn), mean};
}

inline DialogueScores score_dialogue(const DialogueAnnotation& ann) {
    DialogueScores s;
    s.dialogue_id = ann.dialogue_id;
    std::tie(s.ent_per_turn, s.entity) = entity_score(ann);
    std::tie(s.c_per_turn, s.form) = form_score(ann);
    return s;
}

// Necessary-condition filter: keeps ids whose form score clears the
// threshold, preserving input order.
inline std::vector<std::string> form_filter(
    const std::vector<std::pair<std::string, double>>& candidates, double tau_form) {
    std::vector<std::string> kept;
    for (const auto& [id, form] : candidates) {
        if (form >= tau_form) kept.push_back(id);
    }
    return kept;
}

// Largest-remainder apportionment of M proportional to bin sizes, with each
// quota capped at its bin size and freed units redistributed by the same
// rule among the uncapped bins. Sums to M whenever total capacity allows;
// otherwise every bin is filled to capacity and the caller reports the gap.
inline std::vector<std::size_t> allocate_quotas(const std::vector<std::size_t>& bin_sizes,
                                                std::size_t budget) {
    std::vector<std::size_t> quotas(bin_sizes.size(), 0);
    if (budget == 0) return quotas;
    std::size_t capacity = std::accumulate(bin_sizes.begin(), bin_sizes.end(),
                                           std::size_t{0});
    if (capacity == 0) throw DataError("allocate_quotas: all bins empty with nonzero budget");

    std::vector<std::size_t> active;
    for (std::size_t k = 0; k < bin_sizes.size(); ++k) {
        if (bin_sizes[k] > 0) active.push_back(k);
    }
    const std::size_t target = std::min(budget, capacity);
    std::size_t assigned = 0;
    while (assigned < target && !active.empty()) {
        const std::size_t remaining = target - assigned;
        double total = 0.0;
        for (std::size_t k : active) total += static_cast<double>(bin_sizes[k]);
        std::vector<std::size_t> give(bin_sizes.size(), 0);
        std::vector<std::pair<double, std::size_t>> by_fraction;  // (-frac, index)
        std::size_t given = 0;
        for (std::size_t k : active) {
            double raw = static_cast<double>(remaining) *
                         static_cast<double>(bin_sizes[k]) / total;
            give[k] = static_cast<std::size_t>(std::floor(raw));
            given += give[k];
            by_fraction.emplace_back(-(raw - std::floor(raw)), k);
        }
        std::sort(by_fraction.begin(), by_fraction.end());
        // Hand out the remainder to the largest fractional parts (ties by
        // ascending bin index); trim from the smallest if float rounding
        // ever overshoots the floors.
        while (given < remaining) {
            bool moved = false;
            for (const auto& [neg_frac, k] : by_fraction) {
                if (given == remaining) break;
                ++give[k];
                ++given;
                moved = true;
            }
            if (!moved) break;
        }
        for (auto it = by_fraction.rbegin(); given > remaining && it != by_fraction.rend();
             ++it) {
            if (give[it->second] > 0) {
                --give[it->second];
                --given;
            }
        }
        std::vector<std::size_t> still_active;
        for (std::size_t k : active) {
            std::size_t room = bin_sizes[k] - quotas[k];
            std::size_t grant = std::min(give[k], room);
            quotas[k] += grant;
            assigned += grant;
            if (quotas[k] < bin_sizes[k]) still_active.push_back(k);
        }
        active = std::move(still_active);
    }
    return quotas;
}

struct SelectionResult {
    std::vector<std::string> selected_ids;                    // bin order, rank order
    std::map<std::size_t, std::size_t> quotas;                // bin -> m_k
    std::map<std::size_t, std::vector<std::string>> per_bin_selected;
    std::map<std::size_t, std::size_t> shortfall;             // bins with unfilled quota
    std::size_t tie_breaks = 0;                               // rank ties resolved
    bool backfilled = false;
};

namespace detail {

struct RankedCandidate {
    std::string id;
    double entity = 0.0;
    std::size_t pool_position = 0;
};

// Sort by entity score descending; ties by pool position, then id.
inline std::size_t rank_candidates(std::vector<RankedCandidate>& v) {
    std::size_t ties = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i].entity == v[i - 1].entity) ++ties;
    }
    std::stable_sort(v.begin(), v.end(), [](const RankedCandidate& a,
                                            const RankedCandidate& b) {
        if (a.entity != b.entity) return a.entity > b.entity;
        if (a.pool_position != b.pool_position) return a.pool_position < b.pool_position;
        return a.id < b.id;
    });
    return ties;
}

} // namespace detail

// Final budgeted selection: per bin, filter the candidate prefix by the form
// threshold, rank survivors by entity score, and take up to the bin's quota.
// Quotas are proportional to the ORIGINAL bin sizes. Shortfall is recorded,
// not backfilled, unless backfill is requested (which redistributes the
// missing units to other bins by the same apportionment rule and is flagged
// as a deviation from the default selection rule).
inline SelectionResult final_select(const CandidatePool& pool,
                                    const std::map<std::string, DialogueScores>& scores,
                                    const std::vector<std::size_t>& bin_sizes,
                                    std::size_t budget, double tau_form,
                                    bool backfill = false) {
    if (bin_sizes.size() != pool.bins.size()) {
        throw DataError("final_select: bin_sizes/pool size mismatch");
    }
    SelectionResult result;
    std::vector<std::size_t> quotas = allocate_quotas(bin_sizes, budget);

    std::vector<std::vector<detail::RankedCandidate>> survivors(pool.bins.size());
    for (std::size_t k = 0; k < pool.bins.size(); ++k) {
        const auto& bin = pool.bins[k];
        for (std::size_t pos = 0; pos < bin.kept.size(); ++pos) {
            const std::string& id = bin.kept[pos];
            auto it = scores.find(id);
            if (it == scores.end()) {
                throw DataError("final_select: missing scores for pooled id " + id);
            }
            if (it->second.form >= tau_form) {
                survivors[k].push_back({id, it->second.entity, pos});
            }
        }
        result.tie_breaks += detail::rank_candidates(survivors[k]);
    }

    auto take = [&](std::size_t k, std::size_t want) {
        auto& chosen = result.per_bin_selected[pool.bins[k].bin];
        std::size_t have = chosen.size();
        std::size_t avail = survivors[k].size() - have;
        std::size_t n = std::min(want, avail);
        for (std::size_t i = have; i < have + n; ++i) {
            chosen.push_back(survivors[k][i].id);
        }
        return n;
    };

    std::size_t total_shortfall = 0;
    for (std::size_t k = 0; k < pool.bins.size(); ++k) {
        result.quotas[pool.bins[k].bin] = quotas[k];
        std::size_t got = take(k, quotas[k]);
        if (got < quotas[k]) {
            result.shortfall[pool.bins[k].bin] = quotas[k] - got;
            total_shortfall += quotas[k] - got;
        }
    }

    if (backfill && total_shortfall > 0) {
        result.backfilled = true;
        // Redistribute by the same rule, bounded by each bin's remaining
        // survivors. Loop because a receiving bin can run dry too.
        while (total_shortfall > 0) {
            std::vector<std::size_t> spare(pool.bins.size(), 0);
            std::size_t spare_total = 0;
            for (std::size_t k = 0; k < pool.bins.size(); ++k) {
                spare[k] = survivors[k].size() -
                           result.per_bin_selected[pool.bins[k].bin].size();
                spare_total += spare[k];
            }
            if (spare_total == 0) break;
            std::vector<std::size_t> extra =
                allocate_quotas(spare, std::min(total_shortfall, spare_total));
            std::size_t granted = 0;
            for (std::size_t k = 0; k < pool.bins.size(); ++k) {
                granted += take(k, extra[k]);
            }
            if (granted == 0) break;
            total_shortfall -= granted;
        }
    }

    for (const auto& bin : pool.bins) {
        const auto& chosen = result.per_bin_selected[bin.bin];
        result.selected_ids.insert(result.selected_ids.end(), chosen.begin(), chosen.end());
    }
    return result;
}

} // namespace dialsel
