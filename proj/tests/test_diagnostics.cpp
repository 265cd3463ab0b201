#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>

#include "dialsel/diagnostics.hpp"
#include "synthetic.hpp"

using namespace dialsel;
using Catch::Approx;

namespace {

DialogueAnnotation make_ann(const std::string& id,
                            std::vector<std::pair<EntitySet, EntitySet>> turns) {
    DialogueAnnotation ann;
    ann.dialogue_id = id;
    for (auto& [q, a] : turns) {
        TurnAnnotation t;
        t.q_entities = std::move(q);
        t.a_entities = std::move(a);
        t.style_match_score = 2;
        ann.turns.push_back(std::move(t));
    }
    return ann;
}

HistoryMetrics metrics_with(const std::string& id, double h_value) {
    HistoryMetrics m;
    m.dialogue_id = id;
    m.h = h_value;
    m.har_per_turn = {0.0};
    m.enr_per_turn = {0.0};
    m.turn_count = 1;
    return m;
}

} // namespace

TEST_CASE("history set") {
    auto ann = make_ann("d", {{{"a"}, {"x"}}, {{"b"}, {"y"}}});
    CHECK(history_set(ann, 1).empty());
    CHECK(history_set(ann, 2) == EntitySet{"a", "x"});
    CHECK_THROWS_AS(history_set(ann, 0), DataError);
    CHECK_THROWS_AS(history_set(ann, 3), DataError);

    auto empty = make_ann("d", {{{}, {}}, {{}, {}}, {{}, {}}});
    for (std::size_t t = 1; t <= 3; ++t) CHECK(history_set(empty, t).empty());
}

TEST_CASE("per-turn anchoring overlap") {
    CHECK(har_turn({"x"}, {"x"}) == Approx(1.0).epsilon(0).margin(1e-12));
    CHECK(har_turn({}, {}) == 0.0);
    CHECK(har_turn({"x", "y"}, {"y", "z", "w"}) == Approx(0.4).epsilon(0).margin(1e-12));
}

TEST_CASE("per-turn novelty fraction") {
    CHECK(enr_turn({}, {"anything"}) == 0.0);
    CHECK(enr_turn({"x", "y"}, {}) == Approx(1.0).epsilon(0).margin(1e-12));
    CHECK(enr_turn({"x", "y"}, {"y"}) == Approx(0.5).epsilon(0).margin(1e-12));
}

TEST_CASE("dialogue-level history metrics") {
    SECTION("all-empty annotations") {
        HistoryMetrics m = history_metrics(make_ann("d", {{{}, {}}, {{}, {}}}));
        CHECK(m.har == 0.0);
        CHECK(m.enr == 0.0);
        CHECK(m.esc == 0.0);
        CHECK(m.h == Approx(0.5).epsilon(0).margin(1e-12));
    }

    SECTION("combination formulas reproduce the documented values") {
        CHECK(esc_of(0.514, 0.714) == Approx(0.614).epsilon(0).margin(1e-12));
        CHECK(history_dependency_of(0.514, 0.714) ==
              Approx(0.400).epsilon(0).margin(1e-12));
        CHECK(history_dependency_of(1.0, 0.0) == Approx(1.0).epsilon(0).margin(1e-12));
    }

    SECTION("identities hold on fuzzed annotations") {
        SeededRng rng(404);
        for (int trial = 0; trial < 500; ++trial) {
            std::vector<std::pair<EntitySet, EntitySet>> turns;
            std::size_t n = 1 + rng.next_index(6);
            for (std::size_t t = 0; t < n; ++t) {
                EntitySet q, a;
                for (std::size_t j = 0; j < rng.next_index(5); ++j) {
                    q.insert("e" + std::to_string(rng.next_index(12)));
                }
                for (std::size_t j = 0; j < rng.next_index(5); ++j) {
                    a.insert("e" + std::to_string(rng.next_index(12)));
                }
                turns.emplace_back(std::move(q), std::move(a));
            }
            HistoryMetrics m = history_metrics(make_ann("f", std::move(turns)));
            CHECK(m.esc == Approx((m.har + m.enr) / 2).epsilon(0).margin(1e-12));
            CHECK(m.h == Approx((m.har + 1 - m.enr) / 2).epsilon(0).margin(1e-12));
            CHECK((m.har >= 0 && m.har <= 1));
            CHECK((m.enr >= 0 && m.enr <= 1));
            CHECK((m.esc >= 0 && m.esc <= 1));
            CHECK((m.h >= 0 && m.h <= 1));
        }
    }
}

TEST_CASE("turn-weighted aggregation") {
    SECTION("single dialogue equals its own values") {
        HistoryMetrics m = history_metrics(
            make_ann("d", {{{"a"}, {"x"}}, {{"b"}, {"x", "y"}}}));
        TurnWeighted tw = turn_weighted({m});
        CHECK(tw.har == Approx(m.har));
        CHECK(tw.enr == Approx(m.enr));
        CHECK(tw.esc == Approx(m.esc));
    }

    SECTION("equal turn counts reduce to the plain mean") {
        auto m1 = history_metrics(make_ann("a", {{{"q"}, {"x"}}, {{"q"}, {"x"}}}));
        auto m2 = history_metrics(make_ann("b", {{{"q"}, {"y"}}, {{"q"}, {"z"}}}));
        TurnWeighted tw = turn_weighted({m1, m2});
        CHECK(tw.har == Approx((m1.har + m2.har) / 2));
        CHECK(tw.enr == Approx((m1.enr + m2.enr) / 2));
    }

    SECTION("unequal turn counts weight by turns") {
        HistoryMetrics m1;
        m1.dialogue_id = "a";
        m1.har_per_turn = {1.0};
        m1.enr_per_turn = {0.0};
        m1.turn_count = 1;
        HistoryMetrics m2;
        m2.dialogue_id = "b";
        m2.har_per_turn = {0.0, 0.0, 0.0};
        m2.enr_per_turn = {0.0, 0.0, 0.0};
        m2.turn_count = 3;
        TurnWeighted tw = turn_weighted({m1, m2});
        CHECK(tw.har == Approx(0.25).epsilon(0).margin(1e-12));
    }

    SECTION("empty list is an error") {
        CHECK_THROWS_AS(turn_weighted({}), DataError);
    }
}

TEST_CASE("top dependency subset") {
    SECTION("fraction 1 keeps everything") {
        auto ids = top_dependency_subset(
            {metrics_with("a", 0.9), metrics_with("b", 0.5)}, 1.0);
        CHECK(ids == std::set<std::string>{"a", "b"});
    }
    SECTION("cutoff keeps the top third") {
        auto ids = top_dependency_subset(
            {metrics_with("a", 0.9), metrics_with("b", 0.5), metrics_with("c", 0.1)},
            1.0 / 3.0);
        CHECK(ids == std::set<std::string>{"a"});
    }
    SECTION("ties at the cutoff are all included") {
        auto ids = top_dependency_subset(
            {metrics_with("a", 0.7), metrics_with("b", 0.7), metrics_with("c", 0.1)},
            1.0 / 3.0);
        CHECK(ids == std::set<std::string>{"a", "b"});
    }
    SECTION("empty input is an error") {
        CHECK_THROWS_AS(top_dependency_subset({}, 0.5), DataError);
    }
}

namespace {

Dialogue numbered_dialogue(std::size_t turns) {
    Dialogue d;
    d.id = "pd";
    for (std::size_t t = 0; t < turns; ++t) {
        d.turns.push_back({"question " + std::to_string(t), "answer " + std::to_string(t)});
    }
    return d;
}

} // namespace

TEST_CASE("perturbations") {
    SECTION("single turn is a fixed point of every kind") {
        Dialogue d = numbered_dialogue(1);
        for (auto kind : {PerturbationKind::identity, PerturbationKind::pair,
                          PerturbationKind::block, PerturbationKind::query_only}) {
            Perturbation p{kind, 2, 123};
            CHECK(perturb(d, p) == d);
        }
    }

    SECTION("block size >= T leaves the dialogue unchanged") {
        Dialogue d = numbered_dialogue(4);
        Perturbation p{PerturbationKind::block, 4, 9};
        CHECK(perturb(d, p) == d);
        p.block_size = 7;
        CHECK(perturb(d, p) == d);
    }

    SECTION("identity is a fixed point") {
        Dialogue d = numbered_dialogue(5);
        CHECK(perturb(d, {PerturbationKind::identity, 2, 1}) == d);
    }

    SECTION("pair shuffle lands in one of the four outcomes and is reproducible") {
        Dialogue d = numbered_dialogue(4);
        Perturbation p{PerturbationKind::pair, 2, 77};
        Dialogue once = perturb(d, p);
        CHECK(once == perturb(d, p));   // deterministic given the seed
        std::vector<std::vector<std::size_t>> allowed{
            {0, 1, 2, 3}, {1, 0, 2, 3}, {0, 1, 3, 2}, {1, 0, 3, 2}};
        bool matched = false;
        for (const auto& perm : allowed) {
            Dialogue expect;
            expect.id = d.id;
            for (std::size_t i : perm) expect.turns.push_back(d.turns[i]);
            if (once == expect) matched = true;
        }
        CHECK(matched);
    }

    SECTION("different seeds eventually give different pair outcomes") {
        Dialogue d = numbered_dialogue(8);
        Dialogue a = perturb(d, {PerturbationKind::pair, 2, 1});
        bool any_different = false;
        for (std::uint64_t s = 2; s < 12; ++s) {
            if (perturb(d, {PerturbationKind::pair, 2, s}) != a) any_different = true;
        }
        CHECK(any_different);
    }

    SECTION("pair and block preserve the turn multiset") {
        Dialogue d = numbered_dialogue(7);
        for (Perturbation p : {Perturbation{PerturbationKind::pair, 2, 5},
                               Perturbation{PerturbationKind::block, 2, 5},
                               Perturbation{PerturbationKind::block, 3, 6}}) {
            Dialogue shuffled = perturb(d, p);
            REQUIRE(shuffled.turns.size() == d.turns.size());
            auto sorted_queries = [](const Dialogue& x) {
                std::vector<std::string> qs;
                for (const Turn& t : x.turns) qs.push_back(t.query + "|" + t.answer);
                std::sort(qs.begin(), qs.end());
                return qs;
            };
            CHECK(sorted_queries(shuffled) == sorted_queries(d));
        }
    }

    SECTION("query-only keeps the answer sequence fixed and permutes queries") {
        Dialogue d = numbered_dialogue(6);
        Perturbation p{PerturbationKind::query_only, 2, 3};
        Dialogue shuffled = perturb(d, p);
        REQUIRE(shuffled.turns.size() == d.turns.size());
        std::multiset<std::string> orig_q, new_q;
        for (std::size_t t = 0; t < d.turns.size(); ++t) {
            CHECK(shuffled.turns[t].answer == d.turns[t].answer);
            orig_q.insert(d.turns[t].query);
            new_q.insert(shuffled.turns[t].query);
        }
        CHECK(orig_q == new_q);
    }

    SECTION("block perturbation validates k") {
        Dialogue d = numbered_dialogue(4);
        CHECK_THROWS_AS(perturb(d, {PerturbationKind::block, 1, 3}), UsageError);
    }
}

TEST_CASE("permuting cached annotations matches re-annotating the perturbed text") {
    RulesScorer scorer;
    Corpus corpus = synthetic::history_chain_corpus(10, 7);
    for (Perturbation p : {Perturbation{PerturbationKind::pair, 2, 42},
                           Perturbation{PerturbationKind::block, 2, 42},
                           Perturbation{PerturbationKind::block, 4, 42},
                           Perturbation{PerturbationKind::query_only, 2, 42}}) {
        for (const Dialogue& d : corpus.dialogues) {
            DialogueAnnotation cached = annotate_dialogue(d, scorer);
            DialogueAnnotation permuted = permute_annotation(cached, p);
            DialogueAnnotation reannotated = annotate_dialogue(perturb(d, p), scorer);
            // entity sets agree turn by turn (style may differ for query_only)
            REQUIRE(permuted.turns.size() == reannotated.turns.size());
            for (std::size_t t = 0; t < permuted.turns.size(); ++t) {
                CHECK(permuted.turns[t].q_entities == reannotated.turns[t].q_entities);
                CHECK(permuted.turns[t].a_entities == reannotated.turns[t].a_entities);
            }
            HistoryMetrics a = history_metrics(permuted);
            HistoryMetrics b = history_metrics(reannotated);
            CHECK(a.har == Approx(b.har).epsilon(0).margin(1e-12));
            CHECK(a.enr == Approx(b.enr).epsilon(0).margin(1e-12));
        }
    }
}

TEST_CASE("entity F1") {
    CHECK(entity_f1({"a", "b"}, {"a", "b"}) == Approx(1.0));
    CHECK(entity_f1({"a"}, {"b"}) == 0.0);
    CHECK(entity_f1({"a", "b"}, {"a", "c"}) == Approx(0.5).epsilon(0).margin(1e-12));
    CHECK(entity_f1({}, {}) == 1.0);
    CHECK(entity_f1({}, {}, 0.0) == 0.0);   // configurable vacuous value
    CHECK(entity_f1({}, {"a"}) == 0.0);
    CHECK(entity_f1({"a"}, {}) == 0.0);
}
