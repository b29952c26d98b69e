#pragma once
// Triple retrieval: per-table vector index, bi-encoder first stage,
// cross-encoder re-ranking, multistage composition, and baselines.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tablekb/embed.hpp"
#include "tablekb/kb.hpp"
#include "tablekb/serialize.hpp"
#include "tablekb/table.hpp"

namespace tablekb {

class PairScorer {
public:
    virtual ~PairScorer() = default;
    // Relevance of (question, table_text, triple_text), bounded [0, 1].
    virtual double score(const std::string& question,
                         const std::string& table_text,
                         const std::string& triple_text) const = 0;
};

// Built-in stand-in for a learned cross-encoder: fraction of question
// tokens covered by the table/triple text, in [0, 1].
class TokenOverlapScorer : public PairScorer {
public:
    double score(const std::string& question, const std::string& table_text,
                 const std::string& triple_text) const override;
};

struct ScoredTriple {
    Triple triple;
    double score = 0.0;
    std::string stage;  // "bi_encoder", "cross_encoder", "string_match", ...
};

struct RetrieverConfig {
    int first_stage_n = 200;
    int top_k = 20;
    int hash_dim = 256;
};

struct IndexEntry {
    Triple triple;
    Vector context_vector;
};

// Per-table index of context embeddings. Immutable after build.
struct TripleIndex {
    std::string table_id;
    std::string fingerprint;
    size_t dim = 0;
    std::vector<IndexEntry> entries;  // sorted by triple_key

    void save(const std::string& path) const;
    static TripleIndex load(const std::string& path);
    // Throws if the file's fingerprint differs from `expected`.
    static TripleIndex load(const std::string& path,
                            const std::string& expected);
};

// Context vector per triple: embed_context(sub-table ⊕ triple).
TripleIndex build_index(const SubGraph& g, const Table& t,
                        const EmbeddingProvider& provider);

struct StageLatency {
    double first_stage_ms = 0.0;
    double rerank_ms = 0.0;
};

// Top-k by dot(embed_query(q), context_vector); ties broken by triple key.
std::vector<ScoredTriple> bi_encoder_retrieve(const std::string& q,
                                              const TripleIndex& idx,
                                              const EmbeddingProvider& provider,
                                              int k);

// Rescores every candidate with the pair scorer over its sub-table context.
std::vector<ScoredTriple> cross_encoder_rank(const std::string& q,
                                             const Table& t,
                                             const std::vector<Triple>& cands,
                                             const PairScorer& scorer,
                                             const LabelMap& labels);

// Bi-encoder top-N then cross-encoder re-rank, truncated to top_k.
std::vector<ScoredTriple> multistage_retrieve(
    const std::string& q, const Table& t, const TripleIndex& idx,
    const EmbeddingProvider& provider, const PairScorer& scorer,
    const LabelMap& labels, const RetrieverConfig& cfg,
    StageLatency* latency = nullptr);

// Baseline: shared lowercase-token count between the question and the
// triple's property label + tail label/value.
std::vector<ScoredTriple> string_match_retrieve(const std::string& q,
                                                const SubGraph& g,
                                                const LabelMap& labels, int k);

// Baseline: uniform sample without replacement, reproducible per seed.
std::vector<ScoredTriple> random_retrieve(const SubGraph& g, int k,
                                          uint64_t seed);

}  // namespace tablekb
