#include "tablekb/app.hpp"

#include <algorithm>

#include "tablekb/serialize.hpp"

namespace tablekb {

std::vector<FewshotExample> select_fewshot_examples(
    const std::string& q, const std::vector<Question>& train_questions,
    const EmbeddingProvider& provider, size_t count) {
    if (train_questions.empty())
        throw std::invalid_argument("select_fewshot_examples: empty train set");
    Vector qv = provider.embed_query(q);
    struct Scored {
        double score;
        const Question* q;
    };
    std::vector<Scored> scored;
    scored.reserve(train_questions.size());
    for (const auto& tq : train_questions)
        scored.push_back({dot(qv, provider.embed_query(tq.question)), &tq});
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.q->id < b.q->id;
    });
    if (scored.size() > count) scored.resize(count);
    // Most similar goes last, next to the query end of the prompt.
    std::reverse(scored.begin(), scored.end());
    std::vector<FewshotExample> out;
    out.reserve(scored.size());
    for (const auto& s : scored)
        out.push_back({s.q->question, s.q->answer});
    return out;
}

std::string format_fewshot_prefix(const std::vector<FewshotExample>& examples) {
    std::string out;
    for (const auto& ex : examples) {
        out += "Q: ";
        out += ex.question;
        out += "\nA: ";
        out += ex.answer;
        out += "\n\n";
    }
    return out;
}

AnswerTrace answer_question(const std::string& q, const Table& table,
                            const TripleIndex& idx,
                            const EmbeddingProvider& provider,
                            const PairScorer& scorer, const LabelMap& labels,
                            const GenerationClient& gen,
                            const AnswerOptions& opts) {
    AnswerTrace trace;
    std::vector<Triple> top;
    if (opts.top_k > 0) {
        RetrieverConfig cfg;
        cfg.top_k = opts.top_k;
        cfg.first_stage_n =
            std::max(cfg.first_stage_n, opts.top_k);
        trace.retrieved = multistage_retrieve(q, table, idx, provider, scorer,
                                              labels, cfg, &trace.latency);
        for (const auto& s : trace.retrieved) top.push_back(s.triple);
    }

    std::string prefix = format_fewshot_prefix(opts.fewshot);
    trace.prompt = prefix + build_reasoner_input(q, table, top, labels);
    // Over budget: drop triples from the lowest-scored end.
    while (trace.prompt.size() > opts.prompt_char_budget && !top.empty()) {
        top.pop_back();
        trace.prompt = prefix + build_reasoner_input(q, table, top, labels);
    }

    trace.answer = gen.generate(trace.prompt, opts.max_tokens, 0.0);
    return trace;
}

}  // namespace tablekb
