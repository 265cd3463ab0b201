#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "dialsel/embedding.hpp"
#include "dialsel/errors.hpp"
#include "dialsel/scorer.hpp"

namespace dialsel {

namespace detail {

struct EndpointParts {
    std::string host;   // scheme://host[:port]
    std::string path;
};

inline EndpointParts split_endpoint(const std::string& endpoint) {
    auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw UsageError("endpoint must include a scheme: " + endpoint);
    }
    auto path_start = endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {endpoint, "/"};
    return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

} // namespace detail

// POSTs a JSON body and returns the parsed JSON reply, retrying on transport
// errors, non-200 statuses and unparseable bodies with exponential backoff.
class JsonHttpClient {
public:
    JsonHttpClient(std::string endpoint, std::string api_key_env, unsigned max_retries,
                   unsigned backoff_ms)
        : endpoint_(detail::split_endpoint(endpoint)),
          max_retries_(max_retries),
          backoff_ms_(backoff_ms) {
        if (!api_key_env.empty()) {
            if (const char* key = std::getenv(api_key_env.c_str())) {
                auth_header_ = std::string("Bearer ") + key;
            }
        }
    }

    json post(const json& body) const {
        std::string payload = body.dump();
        std::string last_error;
        for (unsigned attempt = 0; attempt <= max_retries_; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(
                    backoff_ms_ << std::min(attempt - 1, 10u)));
            }
            // A client per request keeps this safe under concurrent callers.
            httplib::Client cli(endpoint_.host);
            cli.set_connection_timeout(10, 0);
            cli.set_read_timeout(120, 0);
            httplib::Headers headers;
            if (!auth_header_.empty()) headers.emplace("Authorization", auth_header_);
            auto res = cli.Post(endpoint_.path, headers, payload, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status != 200) {
                last_error = "status " + std::to_string(res->status);
                continue;
            }
            json reply = json::parse(res->body, nullptr, false);
            if (reply.is_discarded()) {
                last_error = "unparseable JSON body";
                continue;
            }
            return reply;
        }
        throw BackendError("POST " + endpoint_.host + endpoint_.path + " failed after " +
                           std::to_string(max_retries_ + 1) + " attempts: " + last_error);
    }

private:
    detail::EndpointParts endpoint_;
    std::string auth_header_;
    unsigned max_retries_;
    unsigned backoff_ms_;
};

// Encoder backed by an embeddings endpoint speaking the common shape
//   request  {"model": ..., "input": [strings]}
//   response {"data": [{"index": i, "embedding": [floats]}, ...]}
class RemoteQueryEncoder : public QueryEncoder {
public:
    explicit RemoteQueryEncoder(const EncoderSpec& spec)
        : spec_(spec), client_(spec.endpoint, spec.api_key_env, spec.max_retries,
                               spec.backoff_ms) {
        if (spec.batch_size == 0) throw UsageError("remote encoder: batch_size must be >= 1");
    }

    std::vector<Vec> encode_batch(const std::vector<std::string>& inputs) {
        std::vector<Vec> out(inputs.size());
        for (std::size_t off = 0; off < inputs.size(); off += spec_.batch_size) {
            std::size_t end = std::min(inputs.size(), off + spec_.batch_size);
            json req{{"model", spec_.model},
                     {"input", std::vector<std::string>(inputs.begin() + off,
                                                        inputs.begin() + end)}};
            json reply = client_.post(req);
            if (!reply.contains("data") || !reply["data"].is_array() ||
                reply["data"].size() != end - off) {
                throw BackendError("embeddings endpoint: malformed response");
            }
            for (const json& item : reply["data"]) {
                std::size_t idx = item.at("index").get<std::size_t>();
                if (idx >= end - off) {
                    throw BackendError("embeddings endpoint: index out of range");
                }
                out[off + idx] = item.at("embedding").get<Vec>();
            }
        }
        std::size_t dim = 0;
        for (const Vec& v : out) {
            check_finite(v, "remote embedding");
            if (dim == 0) dim = v.size();
            if (v.size() != dim || v.empty()) {
                throw BackendError("embeddings endpoint: dimension mismatch");
            }
        }
        return out;
    }

    std::vector<Vec> encode_queries(const Dialogue& d) override {
        std::vector<std::string> inputs;
        inputs.reserve(d.turns.size());
        for (const Turn& t : d.turns) inputs.push_back(t.query);
        return encode_batch(inputs);
    }

    std::string fingerprint() const override {
        return "remote:" + spec_.endpoint + "|" + spec_.model;
    }

    bool deterministic() const override { return false; }

private:
    EncoderSpec spec_;
    JsonHttpClient client_;
};

// Extracts the first balanced JSON object from a model reply, tolerating
// code fences and prose around it.
inline json first_json_object(const std::string& text) {
    std::size_t start = text.find('{');
    while (start != std::string::npos) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            char c = text[i];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}') {
                if (--depth == 0) {
                    json obj = json::parse(text.substr(start, i - start + 1), nullptr, false);
                    if (!obj.is_discarded()) return obj;
                    break;
                }
            }
        }
        start = text.find('{', start + 1);
    }
    return json(json::value_t::discarded);
}

// Scorer backed by a chat-completions endpoint. One call per turn asks for a
// single JSON object carrying both entity sets and the style match score;
// malformed replies are retried, then surfaced as a turn failure.
class RemoteScorer : public TurnScorer {
public:
    explicit RemoteScorer(const ScorerSpec& spec)
        : spec_(spec), client_(spec.endpoint, spec.api_key_env, spec.max_retries,
                               spec.backoff_ms) {}

    static std::string build_prompt(const std::string& query, const std::string& answer,
                                    const TurnContext& context) {
        std::string p;
        p += "You label one question-answer exchange from a conversation.\n";
        p += "Return exactly one JSON object, nothing else, with these fields:\n";
        p += "  \"q_entities\": entities mentioned in the question,\n";
        p += "  \"a_entities\": entities mentioned in the answer,\n";
        p += "  \"style_match_score\": 0, 1 or 2 - does the answer's format match what "
             "the question asks for (list vs paragraph, translation only, yes/no only)?\n";
        p += "  \"style_comment\": one short sentence of justification.\n";
        if (!context.previous.empty()) {
            p += "Earlier context:\n";
            for (const Turn* t : context.previous) {
                p += "Q: " + t->query + "\nA: " + t->answer + "\n";
            }
        }
        p += "Question: " + query + "\n";
        p += "Answer: " + answer + "\n";
        return p;
    }

    TurnAnnotation annotate_turn(const std::string& query, const std::string& answer,
                                 const TurnContext& context) override {
        json req{{"model", spec_.model},
                 {"temperature", 0},
                 {"messages",
                  json::array({{{"role", "user"},
                                {"content", build_prompt(query, answer, context)}}})}};
        std::string last_error = "no attempts";
        for (unsigned attempt = 0; attempt <= spec_.max_retries; ++attempt) {
            json reply = client_.post(req);   // transport retries live in the client
            std::string content;
            try {
                content = reply.at("choices").at(0).at("message").at("content")
                              .get<std::string>();
            } catch (const json::exception&) {
                last_error = "reply missing choices[0].message.content";
                continue;
            }
            json obj = first_json_object(content);
            if (obj.is_discarded() || !obj.is_object()) {
                last_error = "no JSON object in model reply";
                continue;
            }
            TurnAnnotation ann;
            if (!parse_annotation(obj, ann, last_error)) continue;
            return ann;
        }
        throw BackendError("remote scorer: " + last_error);
    }

    std::string fingerprint() const override {
        return "remote:" + spec_.endpoint + "|" + spec_.model + "|ctx" +
               std::to_string(spec_.context_turns) + ":v1";
    }

private:
    static bool parse_annotation(const json& obj, TurnAnnotation& out,
                                 std::string& error) {
        if (!obj.contains("q_entities") || !obj["q_entities"].is_array() ||
            !obj.contains("a_entities") || !obj["a_entities"].is_array() ||
            !obj.contains("style_match_score") ||
            !obj["style_match_score"].is_number_integer()) {
            error = "reply object missing required fields";
            return false;
        }
        int score = obj["style_match_score"].get<int>();
        if (score < 0 || score > 2) {
            error = "style_match_score out of {0,1,2}";
            return false;
        }
        out.style_match_score = score;
        out.style_comment = obj.value("style_comment", std::string{});
        for (const json& e : obj["q_entities"]) {
            if (!e.is_string()) continue;
            std::string norm = normalize_entity(e.get<std::string>());
            if (!norm.empty()) out.q_entities.insert(std::move(norm));
        }
        for (const json& e : obj["a_entities"]) {
            if (!e.is_string()) continue;
            std::string norm = normalize_entity(e.get<std::string>());
            if (!norm.empty()) out.a_entities.insert(std::move(norm));
        }
        return true;
    }

    ScorerSpec spec_;
    JsonHttpClient client_;
};

inline std::unique_ptr<QueryEncoder> make_encoder(const EncoderSpec& spec) {
    switch (spec.kind) {
        case EncoderKind::hash:
            return std::make_unique<HashQueryEncoder>(spec.dim, spec.seed);
        case EncoderKind::precomputed:
            return std::make_unique<PrecomputedQueryEncoder>(spec.file);
        case EncoderKind::remote:
            return std::make_unique<RemoteQueryEncoder>(spec);
    }
    throw UsageError("unknown encoder kind");
}

inline std::unique_ptr<TurnScorer> make_scorer(const ScorerSpec& spec) {
    switch (spec.kind) {
        case ScorerKind::rules:
            return std::make_unique<RulesScorer>();
        case ScorerKind::remote:
            return std::make_unique<RemoteScorer>(spec);
    }
    throw UsageError("unknown scorer kind");
}

} // namespace dialsel
