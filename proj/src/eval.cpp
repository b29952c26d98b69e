#include "tablekb/eval.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include <json.hpp>

#include "tablekb/embed.hpp"

namespace tablekb {

double recall_at_k(const std::vector<std::vector<Triple>>& retrieved,
                   const std::vector<std::set<Triple>>& gold, int k) {
    if (retrieved.size() != gold.size())
        throw std::invalid_argument("recall_at_k: instance count mismatch");
    if (retrieved.empty())
        throw std::invalid_argument("recall_at_k: no instances");
    if (k < 1) throw std::invalid_argument("recall_at_k: k must be >= 1");
    double total = 0.0;
    for (size_t i = 0; i < retrieved.size(); ++i) {
        if (gold[i].empty())
            throw std::invalid_argument("recall_at_k: instance with empty gold");
        size_t hits = 0;
        size_t limit = std::min<size_t>(k, retrieved[i].size());
        for (size_t j = 0; j < limit; ++j)
            if (gold[i].count(retrieved[i][j])) ++hits;
        total += static_cast<double>(hits) / static_cast<double>(gold[i].size());
    }
    return total / static_cast<double>(retrieved.size());
}

RetrievalEvalResult evaluate_retrieval(
    const std::vector<std::vector<Triple>>& retrieved,
    const std::vector<std::set<Triple>>& gold, const std::vector<int>& ks) {
    RetrievalEvalResult res;
    res.instance_count = retrieved.size();
    for (int k : ks) res.per_k[k] = recall_at_k(retrieved, gold, k);
    return res;
}

std::string normalize_answer(const std::string& s) {
    std::string lowered;
    lowered.reserve(s.size());
    for (unsigned char c : s) {
        if (std::ispunct(c)) continue;
        lowered += static_cast<char>(std::tolower(c));
    }
    std::istringstream iss(lowered);
    std::string tok, out;
    while (iss >> tok) {
        if (tok == "a" || tok == "an" || tok == "the") continue;
        if (!out.empty()) out += ' ';
        out += tok;
    }
    return out;
}

int exact_match(const std::string& pred, const std::string& gold) {
    return normalize_answer(pred) == normalize_answer(gold) ? 1 : 0;
}

double f1(const std::string& pred, const std::string& gold) {
    auto split = [](const std::string& s) {
        std::istringstream iss(s);
        std::vector<std::string> toks;
        std::string t;
        while (iss >> t) toks.push_back(t);
        return toks;
    };
    auto p = split(normalize_answer(pred));
    auto g = split(normalize_answer(gold));
    if (p.empty() && g.empty()) return 1.0;
    if (p.empty() || g.empty()) return 0.0;
    std::map<std::string, int> gold_counts;
    for (const auto& t : g) ++gold_counts[t];
    int overlap = 0;
    for (const auto& t : p) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            ++overlap;
            --it->second;
        }
    }
    if (overlap == 0) return 0.0;
    double precision = static_cast<double>(overlap) / p.size();
    double recall = static_cast<double>(overlap) / g.size();
    return 2.0 * precision * recall / (precision + recall);
}

AnswerSource classify_answer_source(const std::string& answer, const Table& t,
                                    const SubGraph& g, const LabelMap& labels) {
    std::string norm = normalize_answer(answer);
    for (const auto& row : t.rows)
        for (const auto& cell : row)
            if (normalize_answer(cell.text) == norm) return AnswerSource::InTable;
    for (const auto& [id, label] : labels)
        if (normalize_answer(label) == norm) return AnswerSource::InKb;
    for (const auto& tr : g.triples)
        if (const auto* lit = std::get_if<LiteralValue>(&tr.tail))
            if (normalize_answer(lit->text) == norm) return AnswerSource::InKb;
    return AnswerSource::Calculated;
}

QAEvalResult evaluate_qa(const std::vector<std::string>& predictions,
                         const std::vector<std::string>& references,
                         const std::vector<AnswerSource>& sources) {
    if (references.size() != sources.size())
        throw std::invalid_argument("evaluate_qa: references/sources mismatch");
    QAEvalResult res;
    res.n = references.size();
    if (res.n == 0) return res;
    struct Acc {
        double em = 0, f1 = 0;
        size_t n = 0;
    };
    std::map<std::string, Acc> by_source;
    double em_sum = 0, f1_sum = 0;
    for (size_t i = 0; i < references.size(); ++i) {
        std::string pred = i < predictions.size() ? predictions[i] : "";
        double em = exact_match(pred, references[i]);
        double f = f1(pred, references[i]);
        em_sum += em;
        f1_sum += f;
        auto& acc = by_source[to_string(sources[i])];
        acc.em += em;
        acc.f1 += f;
        ++acc.n;
    }
    res.em = 100.0 * em_sum / res.n;
    res.f1 = 100.0 * f1_sum / res.n;
    for (const auto& [src, acc] : by_source)
        res.per_source[src] = {100.0 * acc.em / acc.n, 100.0 * acc.f1 / acc.n};
    return res;
}

void write_report_json(const RetrievalEvalResult& retrieval,
                       const QAEvalResult* qa, std::ostream& out) {
    using nlohmann::json;
    json rec;
    json recall = json::object();
    for (const auto& [k, v] : retrieval.per_k) recall[std::to_string(k)] = v;
    rec["recall"] = recall;
    rec["n"] = retrieval.instance_count;
    if (qa) {
        rec["em"] = qa->em;
        rec["f1"] = qa->f1;
        json per_source = json::object();
        for (const auto& [src, ef] : qa->per_source)
            per_source[src] = {{"em", ef.first}, {"f1", ef.second}};
        rec["per_source"] = per_source;
    }
    out << rec.dump(2) << '\n';
}

}  // namespace tablekb
