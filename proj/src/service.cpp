#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "tablekb/app.hpp"
#include "tablekb/serialize.hpp"

namespace tablekb {

using nlohmann::json;

namespace {

json error_body(const std::string& code, const std::string& message) {
    return {{"error", {{"code", code}, {"message", message}}}};
}

}  // namespace

// ---------------------------------------------------------------------------
// HTTP clients

HttpGenerationClient::HttpGenerationClient(std::string host, int port)
    : host_(std::move(host)), port_(port) {}

std::string HttpGenerationClient::generate(const std::string& prompt,
                                           int max_tokens,
                                           double temperature) const {
    httplib::Client cli(host_, port_);
    json body = {{"prompt", prompt},
                 {"max_tokens", max_tokens},
                 {"temperature", temperature}};
    auto res = cli.Post("/generate", body.dump(), "application/json");
    if (!res || res->status != 200)
        throw std::runtime_error("generation request failed" +
                                 (res ? " (status " + std::to_string(res->status) + ")"
                                      : std::string(" (no response)")));
    return json::parse(res->body).at("text").get<std::string>();
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string host, int port,
                                             size_t dim)
    : host_(std::move(host)), port_(port), dim_(dim) {}

Vector HttpEmbeddingProvider::embed(const std::string& text,
                                    const std::string& mode) const {
    httplib::Client cli(host_, port_);
    json body = {{"texts", {text}}, {"mode", mode}};
    auto res = cli.Post("/embed", body.dump(), "application/json");
    if (!res || res->status != 200)
        throw std::runtime_error("embedding request failed");
    auto vectors = json::parse(res->body).at("vectors");
    Vector v = vectors.at(0).get<Vector>();
    if (v.size() != dim_)
        throw std::runtime_error("embedding service returned wrong dimension");
    return v;
}

Vector HttpEmbeddingProvider::embed_query(const std::string& text) const {
    return embed(text, "query");
}

Vector HttpEmbeddingProvider::embed_context(const std::string& text) const {
    return embed(text, "context");
}

std::string HttpEmbeddingProvider::fingerprint() const {
    return "http-v1:" + host_ + ":" + std::to_string(port_) +
           ":d=" + std::to_string(dim_);
}

HttpPairScorer::HttpPairScorer(std::string host, int port)
    : host_(std::move(host)), port_(port) {}

double HttpPairScorer::score(const std::string& question,
                             const std::string& table_text,
                             const std::string& triple_text) const {
    httplib::Client cli(host_, port_);
    json body = {{"pairs",
                  {{{"question", question},
                    {"table", table_text},
                    {"triple", triple_text}}}}};
    auto res = cli.Post("/score", body.dump(), "application/json");
    if (!res || res->status != 200)
        throw std::runtime_error("pair scorer request failed");
    return json::parse(res->body).at("scores").at(0).get<double>();
}

// ---------------------------------------------------------------------------
// Retrieval service

struct RetrievalServer::Impl {
    std::shared_ptr<const RetrievalState> state;
    httplib::Server server;
    std::thread thread;

    explicit Impl(std::shared_ptr<const RetrievalState> s) : state(std::move(s)) {
        server.Post("/retrieve", [this](const httplib::Request& req,
                                        httplib::Response& res) {
            handle_retrieve(req, res);
        });
    }

    void handle_retrieve(const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::parse_error& e) {
            res.status = 400;
            res.set_content(error_body("bad_request", e.what()).dump(),
                            "application/json");
            return;
        }
        try {
            std::string question = body.at("question").get<std::string>();
            std::string table_id = body.at("table_id").get<std::string>();
            int k = body.value("k", state->cfg.top_k);

            auto idx_it = state->indexes.find(table_id);
            auto table_it = state->tables.find(table_id);
            if (idx_it == state->indexes.end() || table_it == state->tables.end()) {
                res.status = 404;
                res.set_content(
                    error_body("unknown_table", "no index for table '" + table_id + "'")
                        .dump(),
                    "application/json");
                return;
            }

            RetrieverConfig cfg = state->cfg;
            cfg.top_k = std::max(1, k);
            cfg.first_stage_n = std::max(cfg.first_stage_n, cfg.top_k);
            StageLatency latency;
            auto ranked = multistage_retrieve(
                question, table_it->second, idx_it->second, *state->provider,
                *state->scorer, state->labels, cfg, &latency);

            json triples = json::array();
            for (const auto& s : ranked) {
                triples.push_back(
                    {{"key", triple_key(s.triple)},
                     {"text", serialize_triple(s.triple, state->labels)},
                     {"score", s.score},
                     {"stage", s.stage}});
            }
            // Latency travels in headers so identical queries produce
            // byte-identical bodies.
            res.set_header("X-First-Stage-Ms",
                           std::to_string(latency.first_stage_ms));
            res.set_header("X-Rerank-Ms", std::to_string(latency.rerank_ms));
            res.set_content(json{{"triples", triples}}.dump(),
                            "application/json");
        } catch (const std::exception& e) {
            res.status = 400;
            res.set_content(error_body("bad_request", e.what()).dump(),
                            "application/json");
        }
    }
};

RetrievalServer::RetrievalServer(std::shared_ptr<const RetrievalState> state)
    : impl_(std::make_unique<Impl>(std::move(state))) {}

RetrievalServer::~RetrievalServer() { stop(); }

bool RetrievalServer::listen(const std::string& host, int port) {
    return impl_->server.listen(host, port);
}

int RetrievalServer::start_async(const std::string& host) {
    int port = impl_->server.bind_to_any_port(host);
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

void RetrievalServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
    if (impl_ && impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace tablekb
