#pragma once

#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "dialsel/errors.hpp"

namespace dialsel {

using json = nlohmann::json;

struct Turn {
    std::string query;
    std::string answer;

    bool operator==(const Turn&) const = default;
};

struct Dialogue {
    std::string id;
    std::vector<Turn> turns;
    std::map<std::string, std::string> meta;

    bool operator==(const Dialogue&) const = default;
};

struct Corpus {
    std::vector<Dialogue> dialogues;
    std::string source;

    const Dialogue* find(const std::string& id) const {
        for (const auto& d : dialogues) {
            if (d.id == id) return &d;
        }
        return nullptr;
    }
};

enum class ReadMode { strict, lenient };

struct ReadResult {
    Corpus corpus;
    std::size_t skipped = 0;              // malformed lines dropped (lenient)
    std::vector<std::string> warnings;    // one message per skip/drop
};

inline json dialogue_to_json(const Dialogue& d) {
    json turns = json::array();
    for (const Turn& t : d.turns) {
        turns.push_back({{"query", t.query}, {"answer", t.answer}});
    }
    json rec{{"id", d.id}, {"turns", std::move(turns)}};
    if (!d.meta.empty()) rec["meta"] = d.meta;
    return rec;
}

namespace detail {

inline std::string line_label(std::size_t line_no) {
    return "line " + std::to_string(line_no);
}

// Accepts two record shapes:
//   {"id", "turns": [{"query","answer"}, ...], "meta"?}
//   {"id", "turns": [{"role": "user"|"assistant", "content"}, ...], "meta"?}
// Role-shaped turns are paired (user, assistant); an unpaired trailing user
// turn is dropped with a warning appended to *warnings.
inline Dialogue dialogue_from_json(const json& rec, std::size_t line_no,
                                   std::vector<std::string>* warnings) {
    if (!rec.is_object()) {
        throw DataError(line_label(line_no) + ": record is not a JSON object");
    }
    Dialogue d;
    if (!rec.contains("id") || !rec["id"].is_string()) {
        throw DataError(line_label(line_no) + ": missing string field \"id\"");
    }
    d.id = rec["id"].get<std::string>();
    if (d.id.empty()) {
        throw DataError(line_label(line_no) + ": empty id");
    }
    if (!rec.contains("turns") || !rec["turns"].is_array() || rec["turns"].empty()) {
        throw DataError(line_label(line_no) + ": missing or empty \"turns\" array");
    }
    const json& turns = rec["turns"];
    const bool role_shape = turns[0].is_object() && turns[0].contains("role");
    if (role_shape) {
        std::size_t i = 0;
        while (i < turns.size()) {
            const json& u = turns[i];
            if (!u.is_object() || !u.contains("role") || !u.contains("content") ||
                !u["content"].is_string()) {
                throw DataError(line_label(line_no) + ": malformed role turn at index " +
                                std::to_string(i));
            }
            const std::string role = u["role"].get<std::string>();
            if (role != "user") {
                throw DataError(line_label(line_no) + ": expected role \"user\" at index " +
                                std::to_string(i) + ", got \"" + role + "\"");
            }
            if (i + 1 >= turns.size()) {
                if (warnings) {
                    warnings->push_back("dialogue " + d.id +
                                        ": dropped unpaired trailing user turn");
                }
                break;
            }
            const json& a = turns[i + 1];
            if (!a.is_object() || !a.contains("role") || !a.contains("content") ||
                !a["content"].is_string() || a["role"].get<std::string>() != "assistant") {
                throw DataError(line_label(line_no) +
                                ": expected role \"assistant\" at index " +
                                std::to_string(i + 1));
            }
            d.turns.push_back({u["content"].get<std::string>(),
                               a["content"].get<std::string>()});
            i += 2;
        }
    } else {
        for (std::size_t i = 0; i < turns.size(); ++i) {
            const json& t = turns[i];
            if (!t.is_object() || !t.contains("query") || !t.contains("answer") ||
                !t["query"].is_string() || !t["answer"].is_string()) {
                throw DataError(line_label(line_no) + ": malformed turn at index " +
                                std::to_string(i));
            }
            d.turns.push_back({t["query"].get<std::string>(),
                               t["answer"].get<std::string>()});
        }
    }
    if (d.turns.empty()) {
        throw DataError(line_label(line_no) + ": dialogue " + d.id + " has no turns");
    }
    if (rec.contains("meta")) {
        if (!rec["meta"].is_object()) {
            throw DataError(line_label(line_no) + ": \"meta\" is not an object");
        }
        for (auto it = rec["meta"].begin(); it != rec["meta"].end(); ++it) {
            if (!it.value().is_string()) {
                throw DataError(line_label(line_no) + ": meta value for \"" + it.key() +
                                "\" is not a string");
            }
            d.meta[it.key()] = it.value().get<std::string>();
        }
    }
    return d;
}

} // namespace detail

// Per-dialogue validation. Violations are data, not errors. Strict mode
// additionally flags empty queries and empty answers; lenient mode allows
// both (empty answers are surfaced here so the caller can set policy).
inline std::vector<std::string> validate(const Dialogue& d, std::size_t min_turns,
                                         ReadMode mode = ReadMode::strict) {
    std::vector<std::string> violations;
    if (d.id.empty()) violations.push_back("empty id");
    if (d.turns.empty()) violations.push_back("no turns");
    if (d.turns.size() < min_turns) violations.push_back("too few turns");
    if (mode == ReadMode::strict) {
        for (std::size_t i = 0; i < d.turns.size(); ++i) {
            if (d.turns[i].query.empty()) {
                violations.push_back("empty query at turn " + std::to_string(i + 1));
            }
            if (d.turns[i].answer.empty()) {
                violations.push_back("empty answer at turn " + std::to_string(i + 1));
            }
        }
    }
    return violations;
}

// Streaming JSONL reader. Strict mode throws on the first bad line; lenient
// mode skips bad lines and tallies them. Duplicate ids and empty queries in
// strict mode are errors; empty answers are allowed in both modes (validate
// surfaces them, the CLI decides the policy).
inline ReadResult read_corpus(const std::string& path, ReadMode mode) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open corpus file: " + path);

    ReadResult result;
    result.corpus.source = path;
    std::unordered_set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        Dialogue d;
        try {
            json rec = json::parse(line, nullptr, true);
            d = detail::dialogue_from_json(rec, line_no, &result.warnings);
        } catch (const json::exception& e) {
            if (mode == ReadMode::strict) {
                throw DataError(detail::line_label(line_no) + ": " + e.what());
            }
            ++result.skipped;
            result.warnings.push_back(detail::line_label(line_no) +
                                      " skipped: parse error");
            continue;
        } catch (const DataError& e) {
            if (mode == ReadMode::strict) throw;
            ++result.skipped;
            result.warnings.push_back(std::string(e.what()) + " (skipped)");
            continue;
        }
        // Duplicate ids are an error in both modes.
        if (!seen_ids.insert(d.id).second) {
            throw DataError(detail::line_label(line_no) + ": duplicate id \"" + d.id +
                            "\"");
        }
        if (mode == ReadMode::strict) {
            for (std::size_t i = 0; i < d.turns.size(); ++i) {
                if (d.turns[i].query.empty()) {
                    throw DataError(detail::line_label(line_no) + ": dialogue " + d.id +
                                    ": empty query at turn " + std::to_string(i + 1));
                }
            }
        }
        result.corpus.dialogues.push_back(std::move(d));
    }
    return result;
}

// Writes one JSON record per line. read_corpus(write_corpus(c)) reproduces
// c field for field; text is emitted as raw UTF-8, so non-ASCII content
// round-trips byte-exactly.
inline void write_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    for (const Dialogue& d : corpus.dialogues) {
        out << dialogue_to_json(d).dump() << '\n';
    }
    if (!out) throw DataError("write failed: " + path);
}

} // namespace dialsel
