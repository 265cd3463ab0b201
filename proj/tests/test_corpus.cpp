#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dialsel/corpus.hpp"

using namespace dialsel;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "dialsel_tests";
    fs::create_directories(dir);
    return dir / name;
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
    std::ofstream out(p, std::ios::trunc | std::ios::binary);
    for (const auto& l : lines) out << l << '\n';
}

Dialogue make_dialogue(const std::string& id, std::size_t turns) {
    Dialogue d;
    d.id = id;
    for (std::size_t t = 0; t < turns; ++t) {
        d.turns.push_back({"q" + std::to_string(t), "a" + std::to_string(t)});
    }
    return d;
}

} // namespace

TEST_CASE("empty file reads as empty corpus") {
    auto p = temp_file("empty.jsonl");
    write_lines(p, {});
    ReadResult r = read_corpus(p.string(), ReadMode::strict);
    CHECK(r.corpus.dialogues.empty());
    CHECK(r.skipped == 0);
}

TEST_CASE("two valid records read in file order") {
    auto p = temp_file("two.jsonl");
    write_lines(p, {R"({"id":"b","turns":[{"query":"q","answer":"a"}]})",
                    R"({"id":"a","turns":[{"query":"q","answer":"a"}]})"});
    ReadResult r = read_corpus(p.string(), ReadMode::strict);
    REQUIRE(r.corpus.dialogues.size() == 2);
    CHECK(r.corpus.dialogues[0].id == "b");
    CHECK(r.corpus.dialogues[1].id == "a");
}

TEST_CASE("lenient read skips malformed line and tallies it") {
    auto p = temp_file("bad_line.jsonl");
    write_lines(p, {R"({"id":"d1","turns":[{"query":"q","answer":"a"}]})",
                    R"(not json at all)",
                    R"({"id":"d3","turns":[{"query":"q","answer":"a"}]})"});
    ReadResult r = read_corpus(p.string(), ReadMode::lenient);
    REQUIRE(r.corpus.dialogues.size() == 2);
    CHECK(r.corpus.dialogues[0].id == "d1");
    CHECK(r.corpus.dialogues[1].id == "d3");
    CHECK(r.skipped == 1);

    SECTION("strict read fails on the first bad line") {
        CHECK_THROWS_AS(read_corpus(p.string(), ReadMode::strict), DataError);
        try {
            read_corpus(p.string(), ReadMode::strict);
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
}

TEST_CASE("duplicate id is an error in both modes") {
    auto p = temp_file("dup.jsonl");
    write_lines(p, {R"({"id":"d1","turns":[{"query":"q","answer":"a"}]})",
                    R"({"id":"d1","turns":[{"query":"q","answer":"a"}]})"});
    CHECK_THROWS_AS(read_corpus(p.string(), ReadMode::strict), DataError);
    CHECK_THROWS_AS(read_corpus(p.string(), ReadMode::lenient), DataError);

    SECTION("a malformed record mentioning 'duplicate id' is still just a skip") {
        auto p2 = temp_file("dup_text.jsonl");
        write_lines(p2, {R"({"id":"x duplicate id y","turns":[]})",
                         R"({"id":"ok","turns":[{"query":"q","answer":"a"}]})"});
        ReadResult r = read_corpus(p2.string(), ReadMode::lenient);
        CHECK(r.corpus.dialogues.size() == 1);
        CHECK(r.skipped == 1);
    }
}

TEST_CASE("strict read rejects empty query, lenient allows it") {
    auto p = temp_file("empty_query.jsonl");
    write_lines(p, {R"({"id":"d1","turns":[{"query":"","answer":"a"}]})"});
    CHECK_THROWS_AS(read_corpus(p.string(), ReadMode::strict), DataError);
    ReadResult r = read_corpus(p.string(), ReadMode::lenient);
    CHECK(r.corpus.dialogues.size() == 1);
}

TEST_CASE("role-shaped records pair into turns") {
    auto p = temp_file("roles.jsonl");
    write_lines(p,
                {R"({"id":"d1","turns":[{"role":"user","content":"hi"},)"
                 R"({"role":"assistant","content":"hello"},)"
                 R"({"role":"user","content":"bye"},{"role":"assistant","content":"later"}]})"});
    ReadResult r = read_corpus(p.string(), ReadMode::strict);
    REQUIRE(r.corpus.dialogues.size() == 1);
    REQUIRE(r.corpus.dialogues[0].turns.size() == 2);
    CHECK(r.corpus.dialogues[0].turns[0].query == "hi");
    CHECK(r.corpus.dialogues[0].turns[0].answer == "hello");
    CHECK(r.corpus.dialogues[0].turns[1].query == "bye");

    SECTION("unpaired trailing user turn is dropped with a warning") {
        auto p2 = temp_file("roles_trailing.jsonl");
        write_lines(p2, {R"({"id":"d1","turns":[{"role":"user","content":"hi"},)"
                         R"({"role":"assistant","content":"hello"},)"
                         R"({"role":"user","content":"anyone?"}]})"});
        ReadResult r2 = read_corpus(p2.string(), ReadMode::strict);
        REQUIRE(r2.corpus.dialogues.size() == 1);
        CHECK(r2.corpus.dialogues[0].turns.size() == 1);
        REQUIRE(r2.warnings.size() == 1);
        CHECK(r2.warnings[0].find("unpaired") != std::string::npos);
    }
}

TEST_CASE("round-trip identity, including multilingual text") {
    Corpus c;
    c.dialogues.push_back(make_dialogue("ascii", 2));
    Dialogue multi;
    multi.id = "multi";
    multi.turns.push_back({"こんにちは、パリのルーブル美術館について教えて",
                           "Le Louvre est à Paris — ἀλήθεια 🗼"});
    multi.turns.push_back({"مرحبا  كيف  الحال", "всё хорошо\tтабуляция\nи перевод строки"});
    multi.meta["lang"] = "mixed 語";
    c.dialogues.push_back(multi);

    auto p = temp_file("roundtrip.jsonl");
    write_corpus(c, p.string());
    ReadResult r = read_corpus(p.string(), ReadMode::strict);
    REQUIRE(r.corpus.dialogues.size() == c.dialogues.size());
    CHECK(r.corpus.dialogues == c.dialogues);

    SECTION("second write is byte-identical") {
        auto p2 = temp_file("roundtrip2.jsonl");
        write_corpus(r.corpus, p2.string());
        std::ifstream f1(p, std::ios::binary), f2(p2, std::ios::binary);
        std::string s1((std::istreambuf_iterator<char>(f1)), {});
        std::string s2((std::istreambuf_iterator<char>(f2)), {});
        CHECK(s1 == s2);
    }
}

TEST_CASE("round-trip property on generated corpora") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Corpus c;
        for (std::size_t i = 0; i < 20; ++i) {
            Dialogue d = make_dialogue("d" + std::to_string(seed) + "_" + std::to_string(i),
                                       1 + (i * seed) % 6);
            if (i % 3 == 0) d.meta["k" + std::to_string(i)] = "v\"quoted\" \\ slash";
            if (i % 4 == 0) d.turns[0].answer = "";   // empty answers survive round-trip
            c.dialogues.push_back(std::move(d));
        }
        auto p = temp_file("prop.jsonl");
        write_corpus(c, p.string());
        ReadResult r = read_corpus(p.string(), ReadMode::lenient);
        CHECK(r.corpus.dialogues == c.dialogues);
    }
}

TEST_CASE("write to an unwritable path fails") {
    Corpus c;
    c.dialogues.push_back(make_dialogue("d", 1));
    CHECK_THROWS_AS(write_corpus(c, "/nonexistent_dir_zzz/out.jsonl"), DataError);
}

TEST_CASE("validate") {
    SECTION("valid three-turn dialogue, min_turns 1") {
        CHECK(validate(make_dialogue("d", 3), 1).empty());
    }
    SECTION("one turn with min_turns 2") {
        auto v = validate(make_dialogue("d", 1), 2);
        REQUIRE(v.size() == 1);
        CHECK(v[0] == "too few turns");
    }
    SECTION("empty query flagged at the right turn in strict mode") {
        Dialogue d = make_dialogue("d", 3);
        d.turns[1].query = "";
        auto v = validate(d, 1, ReadMode::strict);
        REQUIRE(v.size() == 1);
        CHECK(v[0] == "empty query at turn 2");
        CHECK(validate(d, 1, ReadMode::lenient).empty());
    }
    SECTION("empty answers surfaced in strict mode only") {
        Dialogue d = make_dialogue("d", 2);
        d.turns[1].answer = "";
        auto v = validate(d, 1, ReadMode::strict);
        REQUIRE(v.size() == 1);
        CHECK(v[0] == "empty answer at turn 2");
        CHECK(validate(d, 1, ReadMode::lenient).empty());
    }
    SECTION("empty id") {
        Dialogue d = make_dialogue("", 1);
        auto v = validate(d, 1);
        REQUIRE(v.size() == 1);
        CHECK(v[0] == "empty id");
    }
}
