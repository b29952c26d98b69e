#include "tablekb/retrieve.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include "tablekb/rng.hpp"

namespace tablekb {

namespace {

constexpr char kIndexMagic[4] = {'T', 'K', 'I', 'X'};
constexpr uint32_t kIndexVersion = 1;

void sort_scored(std::vector<ScoredTriple>& v) {
    std::sort(v.begin(), v.end(), [](const ScoredTriple& a, const ScoredTriple& b) {
        if (a.score != b.score) return a.score > b.score;
        return triple_key(a.triple) < triple_key(b.triple);
    });
}

double ms_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - start)
        .count();
}

void write_string(std::ostream& out, const std::string& s) {
    uint64_t len = s.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(s.data(), static_cast<std::streamsize>(len));
}

std::string read_string(std::istream& in) {
    uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (!in) throw std::runtime_error("index file: truncated string");
    return s;
}

Triple triple_from_key(const std::string& key) {
    // Inverse of triple_key; fields are '\x1f'-separated.
    size_t a = key.find('\x1f');
    size_t b = key.find('\x1f', a + 1);
    if (a == std::string::npos || b == std::string::npos)
        throw std::runtime_error("index file: malformed triple key");
    Triple t;
    t.head = key.substr(0, a);
    t.property = key.substr(a + 1, b - a - 1);
    char tag = key[b + 1];
    std::string rest = key.substr(b + 2);
    if (tag == 'E') {
        t.tail = rest;
    } else if (tag == 'V') {
        size_t c = rest.find('\x1f');
        if (c == std::string::npos)
            throw std::runtime_error("index file: malformed literal key");
        t.tail = LiteralValue{rest.substr(0, c), rest.substr(c + 1)};
    } else {
        throw std::runtime_error("index file: unknown tail tag");
    }
    return t;
}

}  // namespace

double TokenOverlapScorer::score(const std::string& question,
                                 const std::string& table_text,
                                 const std::string& triple_text) const {
    auto q = tokenize_lower(question);
    if (q.empty()) return 0.0;
    std::unordered_set<std::string> q_tokens(q.begin(), q.end());
    std::unordered_set<std::string> context;
    for (const auto& t : tokenize_lower(table_text)) context.insert(t);
    for (const auto& t : tokenize_lower(triple_text)) context.insert(t);
    size_t covered = 0;
    for (const auto& t : q_tokens)
        if (context.count(t)) ++covered;
    return static_cast<double>(covered) / static_cast<double>(q_tokens.size());
}

void TripleIndex::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write index file: " + path);
    out.write(kIndexMagic, 4);
    out.write(reinterpret_cast<const char*>(&kIndexVersion), sizeof(kIndexVersion));
    write_string(out, fingerprint);
    write_string(out, table_id);
    uint64_t d = dim, n = entries.size();
    out.write(reinterpret_cast<const char*>(&d), sizeof(d));
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    for (const auto& e : entries) {
        write_string(out, triple_key(e.triple));
        out.write(reinterpret_cast<const char*>(e.context_vector.data()),
                  static_cast<std::streamsize>(dim * sizeof(double)));
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

TripleIndex TripleIndex::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open index file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kIndexMagic, 4) != 0)
        throw std::runtime_error("not an index file: " + path);
    uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != kIndexVersion)
        throw std::runtime_error("unsupported index version in " + path);
    TripleIndex idx;
    idx.fingerprint = read_string(in);
    idx.table_id = read_string(in);
    uint64_t d = 0, n = 0;
    in.read(reinterpret_cast<char*>(&d), sizeof(d));
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    idx.dim = d;
    idx.entries.reserve(n);
    for (uint64_t i = 0; i < n; ++i) {
        IndexEntry e;
        e.triple = triple_from_key(read_string(in));
        e.context_vector.resize(d);
        in.read(reinterpret_cast<char*>(e.context_vector.data()),
                static_cast<std::streamsize>(d * sizeof(double)));
        if (!in) throw std::runtime_error("index file: truncated vectors");
        idx.entries.push_back(std::move(e));
    }
    return idx;
}

TripleIndex TripleIndex::load(const std::string& path,
                              const std::string& expected) {
    TripleIndex idx = load(path);
    if (idx.fingerprint != expected)
        throw std::runtime_error("index fingerprint mismatch: file has '" +
                                 idx.fingerprint + "', provider is '" +
                                 expected + "'");
    return idx;
}

TripleIndex build_index(const SubGraph& g, const Table& t,
                        const EmbeddingProvider& provider) {
    if (g.empty()) throw std::runtime_error("build_index: empty sub-graph");
    TripleIndex idx;
    idx.table_id = t.id;
    idx.fingerprint = provider.fingerprint();
    idx.dim = provider.dim();
    idx.entries.reserve(g.size());
    for (const auto& tr : g.triples) {
        Table sub = triple_related_subtable(t, tr);
        std::string ctx;
        try {
            ctx = build_retrieval_context(sub, tr, g.labels);
        } catch (const std::exception& e) {
            throw std::runtime_error("build_index: triple '" + triple_key(tr) +
                                     "': " + e.what());
        }
        idx.entries.push_back({tr, provider.embed_context(ctx)});
    }
    return idx;
}

std::vector<ScoredTriple> bi_encoder_retrieve(const std::string& q,
                                              const TripleIndex& idx,
                                              const EmbeddingProvider& provider,
                                              int k) {
    if (k < 1) throw std::invalid_argument("bi_encoder_retrieve: k must be >= 1");
    Vector qv = provider.embed_query(q);
    std::vector<ScoredTriple> scored;
    scored.reserve(idx.entries.size());
    for (const auto& e : idx.entries)
        scored.push_back({e.triple, dot(qv, e.context_vector), "bi_encoder"});
    sort_scored(scored);
    if (scored.size() > static_cast<size_t>(k)) scored.resize(k);
    return scored;
}

std::vector<ScoredTriple> cross_encoder_rank(const std::string& q,
                                             const Table& t,
                                             const std::vector<Triple>& cands,
                                             const PairScorer& scorer,
                                             const LabelMap& labels) {
    if (cands.empty())
        throw std::invalid_argument("cross_encoder_rank: empty candidate list");
    std::vector<ScoredTriple> scored;
    scored.reserve(cands.size());
    for (const auto& tr : cands) {
        Table sub = triple_related_subtable(t, tr);
        double s = scorer.score(q, serialize_table(sub),
                                serialize_triple(tr, labels));
        if (!std::isfinite(s))
            throw std::runtime_error("pair scorer returned a non-finite score");
        scored.push_back({tr, s, "cross_encoder"});
    }
    sort_scored(scored);
    return scored;
}

std::vector<ScoredTriple> multistage_retrieve(
    const std::string& q, const Table& t, const TripleIndex& idx,
    const EmbeddingProvider& provider, const PairScorer& scorer,
    const LabelMap& labels, const RetrieverConfig& cfg, StageLatency* latency) {
    if (cfg.top_k < 1 || cfg.top_k > cfg.first_stage_n)
        throw std::invalid_argument("multistage_retrieve: need 1 <= top_k <= first_stage_n");
    auto t0 = std::chrono::steady_clock::now();
    auto first = bi_encoder_retrieve(q, idx, provider, cfg.first_stage_n);
    double first_ms = ms_since(t0);

    std::vector<Triple> cands;
    cands.reserve(first.size());
    for (const auto& s : first) cands.push_back(s.triple);

    auto t1 = std::chrono::steady_clock::now();
    auto ranked = cross_encoder_rank(q, t, cands, scorer, labels);
    double rerank_ms = ms_since(t1);
    if (latency) *latency = {first_ms, rerank_ms};
    if (ranked.size() > static_cast<size_t>(cfg.top_k)) ranked.resize(cfg.top_k);
    return ranked;
}

std::vector<ScoredTriple> string_match_retrieve(const std::string& q,
                                                const SubGraph& g,
                                                const LabelMap& labels, int k) {
    if (k < 1) throw std::invalid_argument("string_match_retrieve: k must be >= 1");
    auto q_tokens_vec = tokenize_lower(q);
    std::unordered_set<std::string> q_tokens(q_tokens_vec.begin(),
                                             q_tokens_vec.end());
    auto label_of = [&](const std::string& id) {
        auto it = labels.find(id);
        return it == labels.end() ? std::string{} : it->second;
    };
    std::vector<ScoredTriple> scored;
    scored.reserve(g.size());
    for (const auto& tr : g.triples) {
        std::string text = label_of(tr.property);
        text += ' ';
        if (const auto* e = std::get_if<EntityId>(&tr.tail))
            text += label_of(*e);
        else
            text += std::get<LiteralValue>(tr.tail).text;
        std::unordered_set<std::string> seen;
        double score = 0.0;
        for (const auto& tok : tokenize_lower(text))
            if (q_tokens.count(tok) && seen.insert(tok).second) score += 1.0;
        scored.push_back({tr, score, "string_match"});
    }
    sort_scored(scored);
    if (scored.size() > static_cast<size_t>(k)) scored.resize(k);
    return scored;
}

std::vector<ScoredTriple> random_retrieve(const SubGraph& g, int k,
                                          uint64_t seed) {
    if (k < 1) throw std::invalid_argument("random_retrieve: k must be >= 1");
    auto picked = sample_without_replacement(g.triples, k, seed);
    std::vector<ScoredTriple> out;
    out.reserve(picked.size());
    // Descending pseudo-scores keep the sampled order under the sort contract.
    double score = static_cast<double>(picked.size());
    for (auto& tr : picked) out.push_back({std::move(tr), score--, "random"});
    return out;
}

}  // namespace tablekb
