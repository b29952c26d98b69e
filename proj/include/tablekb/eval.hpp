#pragma once
// Retrieval and answer evaluation: Recall@k, EM/F1, answer-source
// classification and report aggregation.

#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tablekb/kb.hpp"
#include "tablekb/table.hpp"

namespace tablekb {

struct RetrievalEvalResult {
    std::map<int, double> per_k;  // k → R@k
    size_t instance_count = 0;
};

// Mean over instances of |gold ∩ top-k| / |gold|. Gold is a set; every
// instance must have at least one gold item.
double recall_at_k(const std::vector<std::vector<Triple>>& retrieved,
                   const std::vector<std::set<Triple>>& gold, int k);

RetrievalEvalResult evaluate_retrieval(
    const std::vector<std::vector<Triple>>& retrieved,
    const std::vector<std::set<Triple>>& gold,
    const std::vector<int>& ks = {1, 5, 20, 100});

// Lowercase, strip punctuation and the articles a/an/the, collapse spaces.
std::string normalize_answer(const std::string& s);

int exact_match(const std::string& pred, const std::string& gold);

// Token-multiset F1 over normalized tokens. Both empty → 1, one empty → 0.
double f1(const std::string& pred, const std::string& gold);

AnswerSource classify_answer_source(const std::string& answer, const Table& t,
                                    const SubGraph& g, const LabelMap& labels);

struct QAEvalResult {
    double em = 0.0;  // percent
    double f1 = 0.0;  // percent
    std::map<std::string, std::pair<double, double>> per_source;
    size_t n = 0;
};

// Missing predictions (empty strings) score EM 0 / F1 0.
QAEvalResult evaluate_qa(const std::vector<std::string>& predictions,
                         const std::vector<std::string>& references,
                         const std::vector<AnswerSource>& sources);

void write_report_json(const RetrievalEvalResult& retrieval,
                       const QAEvalResult* qa, std::ostream& out);

}  // namespace tablekb
