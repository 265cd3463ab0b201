#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "httplib.h"

#include "dialsel/remote.hpp"

using namespace dialsel;
using Catch::Approx;

namespace {

// Local mock endpoint; handlers are swapped per test case.
class MockServer {
public:
    MockServer() {
        server_.Post(".*", [this](const httplib::Request& req, httplib::Response& res) {
            handler_(req, res);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this]() { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~MockServer() {
        server_.stop();
        thread_.join();
    }

    std::string endpoint(const std::string& path) const {
        return "http://127.0.0.1:" + std::to_string(port_) + path;
    }

    void set_handler(std::function<void(const httplib::Request&, httplib::Response&)> h) {
        handler_ = std::move(h);
    }

private:
    httplib::Server server_;
    std::function<void(const httplib::Request&, httplib::Response&)> handler_ =
        [](const httplib::Request&, httplib::Response& res) { res.status = 500; };
    int port_ = 0;
    std::thread thread_;
};

EncoderSpec remote_encoder_spec(const MockServer& server) {
    EncoderSpec spec;
    spec.kind = EncoderKind::remote;
    spec.endpoint = server.endpoint("/v1/embeddings");
    spec.model = "test-embed";
    spec.batch_size = 2;
    spec.max_retries = 2;
    spec.backoff_ms = 1;
    return spec;
}

ScorerSpec remote_scorer_spec(const MockServer& server) {
    ScorerSpec spec;
    spec.kind = ScorerKind::remote;
    spec.endpoint = server.endpoint("/v1/chat/completions");
    spec.model = "test-chat";
    spec.max_retries = 2;
    spec.backoff_ms = 1;
    return spec;
}

json chat_reply(const std::string& content) {
    return json{{"choices", json::array({{{"message", {{"role", "assistant"},
                                                        {"content", content}}}}})}};
}

} // namespace

TEST_CASE("remote encoder") {
    MockServer server;

    SECTION("sends the documented request shape and maps replies by index") {
        std::atomic<int> calls{0};
        server.set_handler([&](const httplib::Request& req, httplib::Response& res) {
            ++calls;
            json body = json::parse(req.body);
            REQUIRE(body.contains("model"));
            REQUIRE(body.contains("input"));
            json data = json::array();
            // answer out of order on purpose; the client must key by index
            for (std::size_t i = body["input"].size(); i-- > 0;) {
                double x = static_cast<double>(body["input"][i].get<std::string>().size());
                data.push_back({{"index", i}, {"embedding", {x, 1.0}}});
            }
            res.set_content(json{{"data", data}}.dump(), "application/json");
        });
        RemoteQueryEncoder enc(remote_encoder_spec(server));
        Dialogue d;
        d.id = "d";
        d.turns = {{"ab", "x"}, {"abcd", "x"}, {"a", "x"}};
        auto vs = enc.encode_queries(d);
        REQUIRE(vs.size() == 3);
        CHECK(vs[0] == Vec{2, 1});
        CHECK(vs[1] == Vec{4, 1});
        CHECK(vs[2] == Vec{1, 1});
        CHECK(calls == 2);   // batch size 2 -> two requests
    }

    SECTION("retries transient failures, then succeeds") {
        std::atomic<int> calls{0};
        server.set_handler([&](const httplib::Request& req, httplib::Response& res) {
            if (++calls == 1) {
                res.status = 500;
                return;
            }
            json body = json::parse(req.body);
            json data = json::array();
            for (std::size_t i = 0; i < body["input"].size(); ++i) {
                data.push_back({{"index", i}, {"embedding", {1.0, 0.0}}});
            }
            res.set_content(json{{"data", data}}.dump(), "application/json");
        });
        RemoteQueryEncoder enc(remote_encoder_spec(server));
        Dialogue d;
        d.id = "d";
        d.turns = {{"q", "a"}};
        CHECK(enc.encode_queries(d) == std::vector<Vec>{{1.0, 0.0}});
        CHECK(calls == 2);
    }

    SECTION("permanent failure is a backend error after bounded retries") {
        std::atomic<int> calls{0};
        server.set_handler([&](const httplib::Request&, httplib::Response& res) {
            ++calls;
            res.status = 503;
        });
        RemoteQueryEncoder enc(remote_encoder_spec(server));
        Dialogue d;
        d.id = "d";
        d.turns = {{"q", "a"}};
        CHECK_THROWS_AS(enc.encode_queries(d), BackendError);
        CHECK(calls == 3);   // 1 + max_retries
    }

    SECTION("dimension mismatch across the batch is an error") {
        server.set_handler([&](const httplib::Request& req, httplib::Response& res) {
            json body = json::parse(req.body);
            json data = json::array();
            for (std::size_t i = 0; i < body["input"].size(); ++i) {
                json emb = (i % 2 == 0) ? json{1.0, 0.0} : json{1.0, 0.0, 0.0};
                data.push_back({{"index", i}, {"embedding", emb}});
            }
            res.set_content(json{{"data", data}}.dump(), "application/json");
        });
        RemoteQueryEncoder enc(remote_encoder_spec(server));
        Dialogue d;
        d.id = "d";
        d.turns = {{"q1", "a"}, {"q2", "a"}};
        CHECK_THROWS_AS(enc.encode_queries(d), BackendError);
    }

    SECTION("api key env var becomes a bearer header") {
        setenv("DIALSEL_TEST_KEY", "sk-test-123", 1);
        std::string seen_auth;
        server.set_handler([&](const httplib::Request& req, httplib::Response& res) {
            seen_auth = req.get_header_value("Authorization");
            json body = json::parse(req.body);
            json data = json::array();
            for (std::size_t i = 0; i < body["input"].size(); ++i) {
                data.push_back({{"index", i}, {"embedding", {1.0}}});
            }
            res.set_content(json{{"data", data}}.dump(), "application/json");
        });
        EncoderSpec spec = remote_encoder_spec(server);
        spec.api_key_env = "DIALSEL_TEST_KEY";
        RemoteQueryEncoder enc(spec);
        Dialogue d;
        d.id = "d";
        d.turns = {{"q", "a"}};
        enc.encode_queries(d);
        CHECK(seen_auth == "Bearer sk-test-123");
    }
}

TEST_CASE("remote scorer") {
    MockServer server;
    TurnContext ctx;

    SECTION("parses a clean JSON reply verbatim") {
        server.set_handler([&](const httplib::Request&, httplib::Response& res) {
            res.set_content(
                chat_reply(R"({"q_entities":["x"],"a_entities":["y"],)"
                           R"("style_match_score":1,"style_comment":"fits"})")
                    .dump(),
                "application/json");
        });
        RemoteScorer scorer(remote_scorer_spec(server));
        TurnAnnotation ann = scorer.annotate_turn("q", "a", ctx);
        CHECK(ann.q_entities == EntitySet{"x"});
        CHECK(ann.a_entities == EntitySet{"y"});
        CHECK(ann.style_match_score == 1);
        CHECK(ann.style_comment == "fits");
        // a fixed endpoint reply reproduces the exact same annotation
        CHECK(scorer.annotate_turn("q", "a", ctx) == ann);
    }

    SECTION("strips code fences and surrounding prose") {
        server.set_handler([&](const httplib::Request&, httplib::Response& res) {
            res.set_content(
                chat_reply("Sure! Here you go:\n```json\n"
                           R"({"q_entities":["Paris"],"a_entities":[" Louvre "],)"
                           R"("style_match_score":2,"style_comment":"ok"})"
                           "\n```\nanything else?")
                    .dump(),
                "application/json");
        });
        RemoteScorer scorer(remote_scorer_spec(server));
        TurnAnnotation ann = scorer.annotate_turn("q", "a", ctx);
        CHECK(ann.q_entities == EntitySet{"paris"});     // normalized
        CHECK(ann.a_entities == EntitySet{"louvre"});    // trimmed + lowercased
        CHECK(ann.style_match_score == 2);
    }

    SECTION("retries malformed content, then succeeds") {
        std::atomic<int> calls{0};
        server.set_handler([&](const httplib::Request&, httplib::Response& res) {
            if (++calls == 1) {
                res.set_content(chat_reply("no json here at all").dump(),
                                "application/json");
                return;
            }
            res.set_content(chat_reply(R"({"q_entities":[],"a_entities":[],)"
                                       R"("style_match_score":0,"style_comment":""})")
                                .dump(),
                            "application/json");
        });
        RemoteScorer scorer(remote_scorer_spec(server));
        TurnAnnotation ann = scorer.annotate_turn("q", "a", ctx);
        CHECK(ann.style_match_score == 0);
        CHECK(calls == 2);
    }

    SECTION("out-of-range style score is rejected as malformed") {
        server.set_handler([&](const httplib::Request&, httplib::Response& res) {
            res.set_content(chat_reply(R"({"q_entities":[],"a_entities":[],)"
                                       R"("style_match_score":7,"style_comment":""})")
                                .dump(),
                            "application/json");
        });
        RemoteScorer scorer(remote_scorer_spec(server));
        CHECK_THROWS_AS(scorer.annotate_turn("q", "a", ctx), BackendError);
    }

    SECTION("lenient dialogue annotation records per-turn failures with defaults") {
        std::atomic<int> calls{0};
        server.set_handler([&](const httplib::Request& req, httplib::Response& res) {
            ++calls;
            json body = json::parse(req.body);
            std::string prompt = body["messages"][0]["content"].get<std::string>();
            if (prompt.find("Question: q2") != std::string::npos) {
                res.status = 500;   // turn 2 permanently broken
                return;
            }
            res.set_content(chat_reply(R"({"q_entities":["ok"],"a_entities":["ok"],)"
                                       R"("style_match_score":2,"style_comment":""})")
                                .dump(),
                            "application/json");
        });
        ScorerSpec spec = remote_scorer_spec(server);
        RemoteScorer scorer(spec);
        Dialogue d;
        d.id = "d";
        d.turns = {{"q1", "a1"}, {"q2", "a2"}, {"q3", "a3"}};
        DialogueAnnotation ann = annotate_dialogue(d, scorer, 1, false);
        REQUIRE(ann.turns.size() == 3);
        REQUIRE(ann.failures.size() == 1);
        CHECK(ann.failures[0].first == 2);
        CHECK(ann.turns[1].a_entities.empty());
        CHECK(ann.turns[1].style_match_score == 0);
        CHECK(ann.turns[0].style_match_score == 2);

        SECTION("strict mode aborts instead") {
            CHECK_THROWS_AS(annotate_dialogue(d, scorer, 1, true), BackendError);
        }
    }

    SECTION("context turns are included in the prompt when configured") {
        std::string seen_prompt;
        server.set_handler([&](const httplib::Request& req, httplib::Response& res) {
            json body = json::parse(req.body);
            seen_prompt = body["messages"][0]["content"].get<std::string>();
            res.set_content(chat_reply(R"({"q_entities":[],"a_entities":[],)"
                                       R"("style_match_score":1,"style_comment":""})")
                                .dump(),
                            "application/json");
        });
        ScorerSpec spec = remote_scorer_spec(server);
        spec.context_turns = 1;
        RemoteScorer scorer(spec);
        Dialogue d;
        d.id = "d";
        d.turns = {{"first question", "first answer"}, {"second question", "second answer"}};
        annotate_dialogue(d, scorer, 1, false, spec.context_turns);
        CHECK(seen_prompt.find("first question") != std::string::npos);
        CHECK(seen_prompt.find("Question: second question") != std::string::npos);
    }
}

TEST_CASE("first_json_object extraction") {
    CHECK(first_json_object(R"(prefix {"a":1} suffix)") == json{{"a", 1}});
    CHECK(first_json_object(R"({"nested":{"b":"}"}} tail)")["nested"]["b"] == "}");
    CHECK(first_json_object("no braces").is_discarded());
    CHECK(first_json_object(R"(broken { not json } then {"ok":true})")["ok"] == true);
}
