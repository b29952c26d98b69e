#pragma once
// End-to-end assembly: few-shot example selection, reasoner prompting,
// generation clients, and the retrieval service.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tablekb/dataset.hpp"
#include "tablekb/eval.hpp"
#include "tablekb/retrieve.hpp"

namespace tablekb {

class GenerationClient {
public:
    virtual ~GenerationClient() = default;
    // temperature 0 requests deterministic (greedy) decoding.
    virtual std::string generate(const std::string& prompt, int max_tokens,
                                 double temperature) const = 0;
};

// POST /generate {"prompt":..,"max_tokens":..,"temperature":..} → {"text":..}
class HttpGenerationClient : public GenerationClient {
public:
    HttpGenerationClient(std::string host, int port);
    std::string generate(const std::string& prompt, int max_tokens,
                         double temperature) const override;

private:
    std::string host_;
    int port_;
};

// POST /embed {"texts":[..],"mode":"query"|"context"} → {"vectors":[[..]]}
class HttpEmbeddingProvider : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(std::string host, int port, size_t dim);
    Vector embed_query(const std::string& text) const override;
    Vector embed_context(const std::string& text) const override;
    size_t dim() const override { return dim_; }
    std::string fingerprint() const override;

private:
    Vector embed(const std::string& text, const std::string& mode) const;
    std::string host_;
    int port_;
    size_t dim_;
};

// POST /score {"pairs":[{"question":..,"table":..,"triple":..}]} → {"scores":[..]}
class HttpPairScorer : public PairScorer {
public:
    HttpPairScorer(std::string host, int port);
    double score(const std::string& question, const std::string& table_text,
                 const std::string& triple_text) const override;

private:
    std::string host_;
    int port_;
};

struct FewshotExample {
    std::string question;
    std::string answer;
};

// The `count` training questions nearest to q by query-embedding dot
// product, most similar last. Ties by question id.
std::vector<FewshotExample> select_fewshot_examples(
    const std::string& q, const std::vector<Question>& train_questions,
    const EmbeddingProvider& provider, size_t count = 5);

std::string format_fewshot_prefix(const std::vector<FewshotExample>& examples);

struct AnswerTrace {
    std::string answer;
    std::vector<ScoredTriple> retrieved;
    std::string prompt;
    StageLatency latency;
};

struct AnswerOptions {
    int top_k = 20;  // 0 → table-only prompt
    std::vector<FewshotExample> fewshot;
    // Triples are dropped lowest-score-first once the prompt exceeds this.
    size_t prompt_char_budget = 100000;
    int max_tokens = 64;
};

AnswerTrace answer_question(const std::string& q, const Table& table,
                            const TripleIndex& idx,
                            const EmbeddingProvider& provider,
                            const PairScorer& scorer, const LabelMap& labels,
                            const GenerationClient& gen,
                            const AnswerOptions& opts = {});

// Shared immutable state behind the retrieval service and the CLI.
struct RetrievalState {
    std::map<std::string, Table> tables;
    std::map<std::string, TripleIndex> indexes;
    LabelMap labels;
    std::shared_ptr<const EmbeddingProvider> provider;
    std::shared_ptr<const PairScorer> scorer;
    RetrieverConfig cfg;
};

class RetrievalServer {
public:
    explicit RetrievalServer(std::shared_ptr<const RetrievalState> state);
    ~RetrievalServer();

    // Blocks; serves POST /retrieve until stop().
    bool listen(const std::string& host, int port);
    // Binds an ephemeral port and serves on a background thread.
    int start_async(const std::string& host);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace tablekb
