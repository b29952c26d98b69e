#pragma once
// Retrieval training data construction, question filtering, annotation
// validation, and dataset splitting.

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tablekb/embed.hpp"
#include "tablekb/kb.hpp"
#include "tablekb/table.hpp"

namespace tablekb {

struct RetrievalInstance {
    std::string question_id;
    std::string question;
    std::string table_id;
    std::vector<Triple> positives;  // distinct gold-evidence triples
    std::vector<Triple> negatives;  // disjoint from positives
};

enum class ValidationRule {
    InvalidAnswerSource,
    MissingGoldEvidence,
    InvalidEvidence,
};

std::string to_string(ValidationRule r);

struct ValidationIssue {
    std::string question_id;
    ValidationRule rule;
    std::string detail;
};

enum class NegativeStrategy { Knn, Random };

// The n non-positive triples whose serialized form embeds nearest to the
// question (dot product), ties by triple key. Throws on empty sub-graph.
std::vector<Triple> knn_negative_sample(const std::string& q, const SubGraph& g,
                                        const std::vector<Triple>& positives,
                                        size_t n,
                                        const EmbeddingProvider& provider,
                                        const LabelMap& labels);

// Uniform without replacement from non-positives, reproducible per seed.
std::vector<Triple> random_negative_sample(const SubGraph& g,
                                           const std::vector<Triple>& positives,
                                           size_t n, uint64_t seed);

struct DatasetBuildResult {
    std::vector<RetrievalInstance> instances;
    std::vector<ValidationIssue> skipped;
};

// One instance per question; questions whose gold evidence is missing from
// the sub-graph are reported and skipped.
DatasetBuildResult build_retrieval_dataset(
    const std::vector<Question>& questions,
    const std::map<std::string, Table>& tables,
    const std::map<std::string, SubGraph>& subgraphs, NegativeStrategy strategy,
    size_t n, const EmbeddingProvider* provider, uint64_t seed);

// Word-level LCS length divided by question length in words.
double lcs_similarity(const std::string& question, const std::string& passage);

struct FilterResult {
    std::vector<Question> kept;
    std::vector<Question> dropped;
    size_t missing_passage = 0;
};

// Drops questions with lcs_similarity ≥ threshold against their passage.
FilterResult filter_questions(const std::vector<Question>& questions,
                              const std::map<std::string, std::string>& passages,
                              double threshold = 0.7);

std::vector<ValidationIssue> validate_annotations(
    const std::vector<Question>& questions,
    const std::map<std::string, Table>& tables,
    const std::map<std::string, SubGraph>& subgraphs);

struct Split {
    std::vector<Question> train;
    std::vector<Question> dev;
    std::vector<Question> test;
};

// Seeded shuffle then 80/10/10 by default; rounding remainder goes to train.
Split split_dataset(const std::vector<Question>& questions,
                    std::array<double, 3> ratios, uint64_t seed);

void write_retrieval_dataset_jsonl(const std::vector<RetrievalInstance>& data,
                                   NegativeStrategy strategy, size_t n,
                                   std::optional<uint64_t> seed,
                                   std::ostream& out);

}  // namespace tablekb
