#include "tablekb/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include <json.hpp>

#include "tablekb/eval.hpp"
#include "tablekb/rng.hpp"
#include "tablekb/serialize.hpp"

namespace tablekb {

std::string to_string(ValidationRule r) {
    switch (r) {
        case ValidationRule::InvalidAnswerSource: return "invalid_answer_source";
        case ValidationRule::MissingGoldEvidence: return "missing_gold_evidence";
        case ValidationRule::InvalidEvidence: return "invalid_evidence";
    }
    return "invalid_evidence";
}

namespace {

std::vector<Triple> non_positive_triples(const SubGraph& g,
                                         const std::vector<Triple>& positives) {
    std::set<Triple> pos(positives.begin(), positives.end());
    std::vector<Triple> out;
    for (const auto& t : g.triples)
        if (!pos.count(t)) out.push_back(t);
    return out;
}

}  // namespace

std::vector<Triple> knn_negative_sample(const std::string& q, const SubGraph& g,
                                        const std::vector<Triple>& positives,
                                        size_t n,
                                        const EmbeddingProvider& provider,
                                        const LabelMap& labels) {
    if (g.empty())
        throw std::runtime_error("knn_negative_sample: empty sub-graph");
    auto pool = non_positive_triples(g, positives);
    Vector qv = provider.embed_query(q);
    std::vector<std::pair<double, Triple>> scored;
    scored.reserve(pool.size());
    for (auto& t : pool) {
        double s = dot(qv, provider.embed_context(serialize_triple(t, labels)));
        scored.emplace_back(s, std::move(t));
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return triple_key(a.second) < triple_key(b.second);
    });
    if (scored.size() > n) scored.resize(n);
    std::vector<Triple> out;
    out.reserve(scored.size());
    for (auto& [s, t] : scored) out.push_back(std::move(t));
    return out;
}

std::vector<Triple> random_negative_sample(const SubGraph& g,
                                           const std::vector<Triple>& positives,
                                           size_t n, uint64_t seed) {
    return sample_without_replacement(non_positive_triples(g, positives), n, seed);
}

DatasetBuildResult build_retrieval_dataset(
    const std::vector<Question>& questions,
    const std::map<std::string, Table>& tables,
    const std::map<std::string, SubGraph>& subgraphs, NegativeStrategy strategy,
    size_t n, const EmbeddingProvider* provider, uint64_t seed) {
    if (strategy == NegativeStrategy::Knn && !provider)
        throw std::invalid_argument("knn strategy requires an embedding provider");
    DatasetBuildResult result;
    for (const auto& q : questions) {
        auto sg_it = subgraphs.find(q.table_id);
        if (sg_it == subgraphs.end()) {
            result.skipped.push_back({q.id, ValidationRule::InvalidEvidence,
                                      "no sub-graph for table " + q.table_id});
            continue;
        }
        const SubGraph& g = sg_it->second;
        std::set<Triple> triple_set(g.triples.begin(), g.triples.end());

        std::set<Triple> positive_set;
        bool bad = false;
        for (const auto& ev : q.gold_evidence) {
            if (!triple_set.count(ev.triple)) {
                result.skipped.push_back(
                    {q.id, ValidationRule::InvalidEvidence,
                     "gold triple not in sub-graph: " + triple_key(ev.triple)});
                bad = true;
                break;
            }
            positive_set.insert(ev.triple);
        }
        if (bad) continue;
        if (positive_set.empty()) {
            result.skipped.push_back(
                {q.id, ValidationRule::MissingGoldEvidence, "no gold evidence"});
            continue;
        }

        RetrievalInstance inst;
        inst.question_id = q.id;
        inst.question = q.question;
        inst.table_id = q.table_id;
        inst.positives.assign(positive_set.begin(), positive_set.end());
        if (strategy == NegativeStrategy::Knn) {
            inst.negatives =
                knn_negative_sample(q.question, g, inst.positives, n, *provider,
                                    g.labels);
        } else {
            // Per-question seed keeps instances independent of list order.
            uint64_t inst_seed = seed ^ fnv1a64(q.id);
            inst.negatives =
                random_negative_sample(g, inst.positives, n, inst_seed);
        }
        result.instances.push_back(std::move(inst));
    }
    return result;
}

double lcs_similarity(const std::string& question, const std::string& passage) {
    auto qt = tokenize_lower(question);
    auto pt = tokenize_lower(passage);
    if (qt.empty())
        throw std::invalid_argument("lcs_similarity: empty question");
    // Word-level LCS, two-row DP.
    std::vector<size_t> prev(pt.size() + 1, 0), cur(pt.size() + 1, 0);
    for (size_t i = 1; i <= qt.size(); ++i) {
        for (size_t j = 1; j <= pt.size(); ++j) {
            if (qt[i - 1] == pt[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return static_cast<double>(prev[pt.size()]) / static_cast<double>(qt.size());
}

FilterResult filter_questions(const std::vector<Question>& questions,
                              const std::map<std::string, std::string>& passages,
                              double threshold) {
    if (threshold < 0.0 || threshold > 1.0)
        throw std::invalid_argument("filter_questions: threshold must be in [0,1]");
    FilterResult res;
    for (const auto& q : questions) {
        auto it = passages.find(q.id);
        if (it == passages.end()) {
            ++res.missing_passage;
            res.kept.push_back(q);
            continue;
        }
        if (lcs_similarity(q.question, it->second) >= threshold)
            res.dropped.push_back(q);
        else
            res.kept.push_back(q);
    }
    return res;
}

std::vector<ValidationIssue> validate_annotations(
    const std::vector<Question>& questions,
    const std::map<std::string, Table>& tables,
    const std::map<std::string, SubGraph>& subgraphs) {
    std::vector<ValidationIssue> issues;
    for (const auto& q : questions) {
        auto table_it = tables.find(q.table_id);
        auto sg_it = subgraphs.find(q.table_id);
        const Table* table = table_it == tables.end() ? nullptr : &table_it->second;
        const SubGraph* g = sg_it == subgraphs.end() ? nullptr : &sg_it->second;

        if (q.gold_evidence.empty())
            issues.push_back({q.id, ValidationRule::MissingGoldEvidence,
                              "gold evidence list is empty"});

        std::set<Triple> triple_set;
        if (g) triple_set.insert(g->triples.begin(), g->triples.end());
        for (const auto& ev : q.gold_evidence) {
            if (table &&
                (ev.row < 0 || ev.col < 0 ||
                 ev.row >= static_cast<int>(table->n_rows()) ||
                 ev.col >= static_cast<int>(table->n_cols()))) {
                issues.push_back({q.id, ValidationRule::InvalidEvidence,
                                  "cell (" + std::to_string(ev.row) + "," +
                                      std::to_string(ev.col) +
                                      ") outside table bounds"});
            }
            if (g && !triple_set.count(ev.triple)) {
                issues.push_back({q.id, ValidationRule::InvalidEvidence,
                                  "triple not in sub-graph: " +
                                      triple_key(ev.triple)});
            }
        }

        // Answer-source trace-back; calculated answers are exempt.
        if (q.answer_source == AnswerSource::InTable && table) {
            std::string norm = normalize_answer(q.answer);
            bool found = false;
            for (const auto& row : table->rows)
                for (const auto& cell : row)
                    if (normalize_answer(cell.text) == norm) found = true;
            if (!found)
                issues.push_back({q.id, ValidationRule::InvalidAnswerSource,
                                  "answer matches no table cell"});
        } else if (q.answer_source == AnswerSource::InKb && g) {
            std::string norm = normalize_answer(q.answer);
            bool found = false;
            for (const auto& [id, label] : g->labels)
                if (normalize_answer(label) == norm) found = true;
            for (const auto& t : g->triples)
                if (const auto* lit = std::get_if<LiteralValue>(&t.tail))
                    if (normalize_answer(lit->text) == norm) found = true;
            if (!found)
                issues.push_back({q.id, ValidationRule::InvalidAnswerSource,
                                  "answer matches no entity label or literal"});
        }
    }
    return issues;
}

Split split_dataset(const std::vector<Question>& questions,
                    std::array<double, 3> ratios, uint64_t seed) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("split_dataset: ratios must sum to 1");
    std::vector<Question> shuffled = questions;
    Rng rng(seed);
    rng.shuffle(shuffled);
    size_t n = shuffled.size();
    size_t n_dev = static_cast<size_t>(std::floor(n * ratios[1]));
    size_t n_test = static_cast<size_t>(std::floor(n * ratios[2]));
    size_t n_train = n - n_dev - n_test;  // remainder goes to train
    Split s;
    s.train.assign(shuffled.begin(), shuffled.begin() + n_train);
    s.dev.assign(shuffled.begin() + n_train, shuffled.begin() + n_train + n_dev);
    s.test.assign(shuffled.begin() + n_train + n_dev, shuffled.end());
    return s;
}

void write_retrieval_dataset_jsonl(const std::vector<RetrievalInstance>& data,
                                   NegativeStrategy strategy, size_t n,
                                   std::optional<uint64_t> seed,
                                   std::ostream& out) {
    using nlohmann::json;
    for (const auto& inst : data) {
        json pos = json::array(), neg = json::array();
        for (const auto& t : inst.positives) pos.push_back(triple_key(t));
        for (const auto& t : inst.negatives) neg.push_back(triple_key(t));
        json rec = {{"question_id", inst.question_id},
                    {"question", inst.question},
                    {"table_id", inst.table_id},
                    {"positives", pos},
                    {"negatives", neg},
                    {"strategy",
                     strategy == NegativeStrategy::Knn ? "knn" : "random"},
                    {"n", n}};
        if (seed)
            rec["seed"] = *seed;
        else
            rec["seed"] = nullptr;
        out << rec.dump() << '\n';
    }
}

}  // namespace tablekb
