#include <doctest.h>

#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "support/corpus.hpp"
#include "tablekb/app.hpp"
#include "tablekb/serialize.hpp"

using namespace tablekb;
using namespace tablekb::testing;
using nlohmann::json;

namespace {

// Returns the first candidate answer found as a substring of the prompt.
class EchoClient : public GenerationClient {
public:
    explicit EchoClient(std::vector<std::string> answers)
        : answers_(std::move(answers)) {}
    std::string generate(const std::string& prompt, int, double) const override {
        for (const auto& a : answers_)
            if (prompt.find(a) != std::string::npos) return a;
        return "";
    }

private:
    std::vector<std::string> answers_;
};

std::shared_ptr<RetrievalState> make_state(const testing::Fixture& f) {
    auto provider = std::make_shared<HashingEmbedder>(128);
    auto state = std::make_shared<RetrievalState>();
    state->tables["albums"] = f.table;
    state->indexes["albums"] = build_index(f.subgraph, f.table, *provider);
    state->labels = f.subgraph.labels;
    state->provider = provider;
    state->scorer = std::make_shared<HashScorer>();
    return state;
}

}  // namespace

TEST_CASE("select_fewshot_examples: count 0 and self-similarity") {
    auto f = load_fixture();
    HashingEmbedder e(128);
    CHECK(select_fewshot_examples("anything", f.questions, e, 0).empty());

    auto picked = select_fewshot_examples(f.questions[2].question, f.questions,
                                          e, 3);
    REQUIRE(picked.size() == 3);
    // Most similar comes last: the query is itself a training question.
    CHECK(picked.back().question == f.questions[2].question);
}

TEST_CASE("select_fewshot_examples equals a brute-force similarity scan") {
    auto f = load_fixture();
    HashingEmbedder e(256);
    std::vector<Question> train(f.questions.begin(), f.questions.begin() + 8);
    std::string q = "when was the album published";
    auto picked = select_fewshot_examples(q, train, e, 5);
    REQUIRE(picked.size() == 5);

    Vector qv = e.embed_query(q);
    std::vector<std::pair<double, std::string>> scored;
    for (const auto& tq : train)
        scored.emplace_back(dot(qv, e.embed_query(tq.question)), tq.id);
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    // picked is most-similar-last; compare against the top 5 reversed.
    std::map<std::string, std::string> text_by_id;
    for (const auto& tq : train) text_by_id[tq.id] = tq.question;
    for (size_t i = 0; i < 5; ++i)
        CHECK(picked[4 - i].question == text_by_id[scored[i].second]);
}

TEST_CASE("select_fewshot_examples: count beyond train size returns all") {
    auto f = load_fixture();
    HashingEmbedder e(64);
    auto picked = select_fewshot_examples("q", f.questions, e, 100);
    CHECK(picked.size() == f.questions.size());
}

TEST_CASE("answer_question: k=0 prompt is question plus table only") {
    auto f = load_fixture();
    HashingEmbedder e(128);
    HashScorer scorer;
    auto idx = build_index(f.subgraph, f.table, e);
    EchoClient gen({"The College Dropout"});
    AnswerOptions opts;
    opts.top_k = 0;
    auto trace = answer_question(f.questions[5].question, f.table, idx, e,
                                 scorer, f.subgraph.labels, gen, opts);
    CHECK(trace.prompt == f.questions[5].question + " " + serialize_table(f.table));
    CHECK(trace.retrieved.empty());
    CHECK(trace.answer == "The College Dropout");
}

TEST_CASE("answer_question: gold evidence in top-k yields the gold answer") {
    auto f = load_fixture();
    HashingEmbedder e(128);
    const auto& q = f.questions[1];  // answer is a KB literal only
    std::set<std::string> gold_texts;
    for (const auto& ev : q.gold_evidence)
        gold_texts.insert(serialize_triple(ev.triple, f.subgraph.labels));
    OracleLeaningScorer scorer(gold_texts);
    auto idx = build_index(f.subgraph, f.table, e);
    EchoClient gen({q.answer});
    AnswerOptions opts;
    opts.top_k = 5;
    auto trace = answer_question(q.question, f.table, idx, e, scorer,
                                 f.subgraph.labels, gen, opts);
    CHECK(trace.answer == q.answer);
    CHECK(!trace.retrieved.empty());
    // Prompt places triples in descending score order.
    for (size_t i = 1; i < trace.retrieved.size(); ++i)
        CHECK(trace.retrieved[i - 1].score >= trace.retrieved[i].score);
}

TEST_CASE("answer_question: rerun is byte-identical") {
    auto f = load_fixture();
    HashingEmbedder e(128);
    HashScorer scorer;
    auto idx = build_index(f.subgraph, f.table, e);
    EchoClient gen({"Chicago"});
    AnswerOptions opts;
    opts.top_k = 5;
    auto a = answer_question(f.questions[3].question, f.table, idx, e, scorer,
                             f.subgraph.labels, gen, opts);
    auto b = answer_question(f.questions[3].question, f.table, idx, e, scorer,
                             f.subgraph.labels, gen, opts);
    CHECK(a.prompt == b.prompt);
    CHECK(a.answer == b.answer);
}

TEST_CASE("answer_question: prompt budget drops lowest-scored triples") {
    auto f = load_fixture();
    HashingEmbedder e(128);
    HashScorer scorer;
    auto idx = build_index(f.subgraph, f.table, e);
    EchoClient gen({});
    AnswerOptions wide, tight;
    wide.top_k = tight.top_k = 8;
    tight.prompt_char_budget = 400;
    auto full = answer_question("q", f.table, idx, e, scorer, f.subgraph.labels,
                                gen, wide);
    auto cut = answer_question("q", f.table, idx, e, scorer, f.subgraph.labels,
                               gen, tight);
    CHECK(cut.prompt.size() <= 400);
    CHECK(cut.prompt.size() < full.prompt.size());
    CHECK(full.prompt.substr(0, cut.prompt.size()) == cut.prompt);
}

TEST_CASE("retrieval service matches library results and 404s unknown tables") {
    auto f = load_fixture();
    auto state = make_state(f);
    RetrievalServer server(state);
    int port = server.start_async("127.0.0.1");

    httplib::Client cli("127.0.0.1", port);
    json body = {{"question", f.questions[0].question},
                 {"table_id", "albums"},
                 {"k", 4}};
    auto res = cli.Post("/retrieve", body.dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    auto parsed = json::parse(res->body);
    REQUIRE(parsed["triples"].size() == 4);

    RetrieverConfig cfg = state->cfg;
    cfg.top_k = 4;
    auto lib = multistage_retrieve(f.questions[0].question, f.table,
                                   state->indexes.at("albums"), *state->provider,
                                   *state->scorer, state->labels, cfg);
    for (size_t i = 0; i < 4; ++i) {
        CHECK(parsed["triples"][i]["key"] == triple_key(lib[i].triple));
        CHECK(parsed["triples"][i]["score"].get<double>() == lib[i].score);
        CHECK(parsed["triples"][i]["stage"] == "cross_encoder");
    }
    CHECK(res->has_header("X-First-Stage-Ms"));
    CHECK(res->has_header("X-Rerank-Ms"));

    json bad = {{"question", "x"}, {"table_id", "nope"}, {"k", 1}};
    auto res404 = cli.Post("/retrieve", bad.dump(), "application/json");
    REQUIRE(res404);
    CHECK(res404->status == 404);
    CHECK(json::parse(res404->body)["error"]["code"] == "unknown_table");

    server.stop();
}

TEST_CASE("service: k beyond sub-graph size returns all triples") {
    auto f = load_fixture();
    auto state = make_state(f);
    RetrievalServer server(state);
    int port = server.start_async("127.0.0.1");
    httplib::Client cli("127.0.0.1", port);
    json body = {{"question", "q"}, {"table_id", "albums"}, {"k", 500}};
    auto res = cli.Post("/retrieve", body.dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    CHECK(json::parse(res->body)["triples"].size() == f.subgraph.size());
    server.stop();
}

TEST_CASE("http embedding provider and pair scorer speak the wire contract") {
    HashingEmbedder backend(16);
    httplib::Server mock;
    mock.Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
        auto body = json::parse(req.body);
        CHECK((body["mode"] == "query" || body["mode"] == "context"));
        json vectors = json::array();
        for (const auto& text : body["texts"])
            vectors.push_back(backend.embed_query(text.get<std::string>()));
        res.set_content(json{{"vectors", vectors}}.dump(), "application/json");
    });
    mock.Post("/score", [&](const httplib::Request& req, httplib::Response& res) {
        auto body = json::parse(req.body);
        json scores = json::array();
        for (const auto& pair : body["pairs"]) {
            CHECK(pair.contains("question"));
            CHECK(pair.contains("table"));
            CHECK(pair.contains("triple"));
            scores.push_back(0.25);
        }
        res.set_content(json{{"scores", scores}}.dump(), "application/json");
    });
    mock.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
        auto body = json::parse(req.body);
        CHECK(body["temperature"].get<double>() == 0.0);
        res.set_content(json{{"text", "echo:" + body["prompt"].get<std::string>()
                                                    .substr(0, 4)}}
                            .dump(),
                        "application/json");
    });
    int port = mock.bind_to_any_port("127.0.0.1");
    std::thread t([&] { mock.listen_after_bind(); });
    mock.wait_until_ready();

    HttpEmbeddingProvider provider("127.0.0.1", port, 16);
    auto v = provider.embed_query("hello world");
    CHECK(v == backend.embed_query("hello world"));
    CHECK(provider.embed_context("hello world") == v);

    HttpPairScorer scorer("127.0.0.1", port);
    CHECK(scorer.score("q", "t", "tr") == 0.25);

    HttpGenerationClient gen("127.0.0.1", port);
    CHECK(gen.generate("abcdef", 8, 0.0) == "echo:abcd");

    mock.stop();
    t.join();
}
