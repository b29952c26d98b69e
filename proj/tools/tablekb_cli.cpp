// Command-line driver: ingest, index, retrieve, train, evaluate, answer,
// validate, serve.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tablekb/app.hpp"
#include "tablekb/dataset.hpp"
#include "tablekb/eval.hpp"
#include "tablekb/kb.hpp"
#include "tablekb/retrieve.hpp"
#include "tablekb/rng.hpp"
#include "tablekb/serialize.hpp"
#include "tablekb/table.hpp"
#include "tablekb/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tablekb;

namespace {

struct GlobalOptions {
    std::string config_path;
    uint64_t seed = 0;
    std::string output;
    std::map<std::string, std::string> config;
};

// Config file format: one "key = value" per line, '#' comments.
std::map<std::string, std::string> load_config(const std::string& path) {
    std::map<std::string, std::string> out;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t");
            size_t b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (!key.empty()) out[key] = value;
    }
    return out;
}

// Command-line value wins; config supplies the fallback.
void resolve(std::string& value, const GlobalOptions& g, const std::string& key) {
    if (value.empty()) {
        auto it = g.config.find(key);
        if (it != g.config.end()) value = it->second;
    }
}

struct Corpus {
    SubGraphStore store;
    std::map<std::string, Table> tables;
    std::map<std::string, SubGraph> subgraphs;
    std::vector<Question> questions;
};

Corpus load_corpus(const std::string& kb_path, const std::string& tables_path,
                   const std::string& questions_path,
                   const std::set<std::string>& excluded_datatypes) {
    Corpus c;
    c.store = SubGraphStore::from_file(kb_path);
    for (auto& t : load_tables_file(tables_path)) {
        auto g = filter_attributes(c.store.one_hop(linked_entities(t)),
                                   excluded_datatypes);
        c.subgraphs[t.id] = std::move(g);
        c.tables[t.id] = std::move(t);
    }
    if (!questions_path.empty())
        c.questions = load_questions_file(questions_path);
    return c;
}

LabelMap merged_labels(const Corpus& c) {
    LabelMap labels;
    for (const auto& [id, g] : c.subgraphs)
        labels.insert(g.labels.begin(), g.labels.end());
    return labels;
}

std::shared_ptr<EmbeddingProvider> make_provider(const std::string& model_path,
                                                 int dim) {
    if (!model_path.empty())
        return std::make_shared<LinearEmbedder>(LinearEmbedder::load(model_path));
    return std::make_shared<HashingEmbedder>(dim);
}

std::map<std::string, TripleIndex> build_or_load_indexes(
    const Corpus& c, const EmbeddingProvider& provider,
    const std::string& index_dir) {
    std::map<std::string, TripleIndex> out;
    for (const auto& [id, g] : c.subgraphs) {
        if (g.empty()) continue;
        if (!index_dir.empty()) {
            fs::path p = fs::path(index_dir) / (id + ".idx");
            if (fs::exists(p)) {
                out[id] = TripleIndex::load(p.string(), provider.fingerprint());
                continue;
            }
        }
        out[id] = build_index(g, c.tables.at(id), provider);
    }
    return out;
}

std::vector<ScoredTriple> run_retriever(
    const std::string& retriever, const std::string& question, const Corpus& c,
    const std::string& table_id, const std::map<std::string, TripleIndex>& idxs,
    const EmbeddingProvider& provider, const PairScorer& scorer,
    const RetrieverConfig& cfg, uint64_t seed) {
    const SubGraph& g = c.subgraphs.at(table_id);
    if (retriever == "string") {
        return string_match_retrieve(question, g, g.labels, cfg.top_k);
    } else if (retriever == "random") {
        return random_retrieve(g, cfg.top_k, seed ^ fnv1a64(question));
    } else if (retriever == "bi") {
        return bi_encoder_retrieve(question, idxs.at(table_id), provider,
                                   cfg.top_k);
    } else if (retriever == "multistage") {
        RetrieverConfig eff = cfg;
        eff.first_stage_n = std::max(eff.first_stage_n, eff.top_k);
        return multistage_retrieve(question, c.tables.at(table_id),
                                   idxs.at(table_id), provider, scorer,
                                   g.labels, eff);
    }
    throw std::runtime_error("unknown retriever: " + retriever);
}

std::ostream& open_output(std::ofstream& file, const std::string& path) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path);
    if (!file) throw std::runtime_error("cannot open output file: " + path);
    return file;
}

std::pair<std::string, int> split_endpoint(const std::string& endpoint) {
    auto colon = endpoint.rfind(':');
    if (colon == std::string::npos)
        throw std::runtime_error("endpoint must be host:port, got " + endpoint);
    return {endpoint.substr(0, colon), std::stoi(endpoint.substr(colon + 1))};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"KB-augmented table QA retrieval toolkit"};
    app.require_subcommand(1);

    GlobalOptions g;
    app.add_option("--config", g.config_path, "key = value config file");
    app.add_option("--seed", g.seed, "global random seed");
    app.add_option("--output", g.output, "output file or directory");

    std::string kb_path, tables_path, questions_path, index_dir, model_path;
    std::string table_id, question_text, retriever = "multistage";
    std::string predictions_path, train_data_path, dev_data_path, passages_path;
    std::string gen_endpoint, strategy = "knn", host = "0.0.0.0";
    int dim = 256, k = 20, first_stage_n = 200, n_negatives = -1, port = 8080;
    int epochs = 20, batch_size = 16;
    double learning_rate = 1e-5, lcs_threshold = 0.7;

    auto add_corpus_options = [&](CLI::App* cmd, bool with_questions = true) {
        cmd->add_option("--kb", kb_path, "kb.jsonl path");
        cmd->add_option("--tables", tables_path, "tables.jsonl path");
        if (with_questions)
            cmd->add_option("--questions", questions_path, "questions.jsonl path");
    };

    auto* ingest = app.add_subcommand("ingest", "validate and summarize a corpus");
    add_corpus_options(ingest);

    auto* index_cmd = app.add_subcommand("index", "build per-table triple indexes");
    add_corpus_options(index_cmd, false);
    index_cmd->add_option("--dim", dim, "hashing embedder dimension");
    index_cmd->add_option("--model", model_path, "trained embedder model file");

    auto* retrieve_cmd = app.add_subcommand("retrieve", "rank triples for one question");
    add_corpus_options(retrieve_cmd, false);
    retrieve_cmd->add_option("--table-id", table_id)->required();
    retrieve_cmd->add_option("--question", question_text)->required();
    retrieve_cmd->add_option("--k", k);
    retrieve_cmd->add_option("--first-stage-n", first_stage_n);
    retrieve_cmd->add_option("--retriever", retriever,
                             "multistage|bi|string|random");
    retrieve_cmd->add_option("--dim", dim);
    retrieve_cmd->add_option("--model", model_path);
    retrieve_cmd->add_option("--index-dir", index_dir);

    auto* eval_ret = app.add_subcommand("eval-retrieval", "R@k report");
    add_corpus_options(eval_ret);
    eval_ret->add_option("--retriever", retriever);
    eval_ret->add_option("--dim", dim);
    eval_ret->add_option("--model", model_path);
    eval_ret->add_option("--index-dir", index_dir);
    eval_ret->add_option("--first-stage-n", first_stage_n);

    auto* build_data = app.add_subcommand("build-train-data",
                                          "emit retrieval training instances");
    add_corpus_options(build_data);
    build_data->add_option("--strategy", strategy, "knn|random");
    build_data->add_option("--n", n_negatives, "negatives per instance");
    build_data->add_option("--dim", dim);

    auto* train_cmd = app.add_subcommand("train", "train the linear bi-encoder");
    add_corpus_options(train_cmd, false);
    train_cmd->add_option("--train-data", train_data_path)->required();
    train_cmd->add_option("--dev-data", dev_data_path);
    train_cmd->add_option("--epochs", epochs);
    train_cmd->add_option("--batch-size", batch_size);
    train_cmd->add_option("--lr", learning_rate);
    train_cmd->add_option("--dim", dim);

    auto* eval_qa_cmd = app.add_subcommand("eval-qa", "EM/F1 report");
    eval_qa_cmd->add_option("--questions", questions_path);
    eval_qa_cmd->add_option("--predictions", predictions_path)->required();

    auto* answer_cmd = app.add_subcommand("answer",
                                          "end-to-end retrieval + generation");
    add_corpus_options(answer_cmd);
    answer_cmd->add_option("--gen-endpoint", gen_endpoint, "host:port")
        ->envname("TABLEKB_GEN_ENDPOINT")
        ->required();
    answer_cmd->add_option("--k", k);
    answer_cmd->add_option("--dim", dim);
    answer_cmd->add_option("--model", model_path);
    answer_cmd->add_option("--index-dir", index_dir);

    auto* validate_cmd = app.add_subcommand("validate", "annotation issue report");
    add_corpus_options(validate_cmd);
    validate_cmd->add_option("--passages", passages_path,
                             "passages.jsonl for LCS filtering report");
    validate_cmd->add_option("--lcs-threshold", lcs_threshold);

    auto* serve_cmd = app.add_subcommand("serve", "run the retrieval service");
    add_corpus_options(serve_cmd, false);
    serve_cmd->add_option("--host", host)->envname("TABLEKB_HOST");
    serve_cmd->add_option("--port", port)->envname("TABLEKB_PORT");
    serve_cmd->add_option("--dim", dim);
    serve_cmd->add_option("--model", model_path);
    serve_cmd->add_option("--index-dir", index_dir);
    serve_cmd->add_option("--k", k);

    // Global flags remain usable after the subcommand name.
    for (auto* sub : app.get_subcommands(nullptr)) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << json{{"error",
                           {{"code", "usage"}, {"message", e.what()}}}}
                         .dump()
                  << "\n";
        std::cerr << app.help() << "\n";
        return 2;
    }

    try {
        if (!g.config_path.empty()) g.config = load_config(g.config_path);
        resolve(kb_path, g, "kb");
        resolve(tables_path, g, "tables");
        resolve(questions_path, g, "questions");
        resolve(index_dir, g, "index_dir");
        resolve(model_path, g, "model");

        RetrieverConfig cfg;
        cfg.top_k = k;
        cfg.first_stage_n = first_stage_n;
        cfg.hash_dim = dim;

        std::ofstream out_file;

        if (*ingest) {
            auto c = load_corpus(kb_path, tables_path, questions_path,
                                 default_excluded_datatypes());
            size_t triples = 0;
            for (const auto& [id, sub] : c.subgraphs) triples += sub.size();
            json summary = {{"triples", c.store.triple_count()},
                            {"tables", c.tables.size()},
                            {"questions", c.questions.size()},
                            {"subgraph_triples", triples}};
            open_output(out_file, g.output) << summary.dump(2) << "\n";
        } else if (*index_cmd) {
            auto c = load_corpus(kb_path, tables_path, "",
                                 default_excluded_datatypes());
            auto provider = make_provider(model_path, dim);
            if (g.output.empty())
                throw std::runtime_error("index requires --output directory");
            fs::create_directories(g.output);
            for (const auto& [id, sub] : c.subgraphs) {
                if (sub.empty()) continue;
                auto idx = build_index(sub, c.tables.at(id), *provider);
                idx.save((fs::path(g.output) / (id + ".idx")).string());
            }
            std::cout << json{{"indexed_tables", c.subgraphs.size()},
                              {"fingerprint", provider->fingerprint()}}
                             .dump()
                      << "\n";
        } else if (*retrieve_cmd) {
            auto c = load_corpus(kb_path, tables_path, "",
                                 default_excluded_datatypes());
            auto provider = make_provider(model_path, dim);
            auto idxs = build_or_load_indexes(c, *provider, index_dir);
            TokenOverlapScorer scorer;
            auto ranked = run_retriever(retriever, question_text, c, table_id,
                                        idxs, *provider, scorer, cfg, g.seed);
            auto& out = open_output(out_file, g.output);
            for (const auto& s : ranked) {
                out << json{{"key", triple_key(s.triple)},
                            {"text",
                             serialize_triple(s.triple,
                                              c.subgraphs.at(table_id).labels)},
                            {"score", s.score},
                            {"stage", s.stage}}
                           .dump()
                    << "\n";
            }
        } else if (*eval_ret) {
            auto c = load_corpus(kb_path, tables_path, questions_path,
                                 default_excluded_datatypes());
            auto provider = make_provider(model_path, dim);
            auto idxs = build_or_load_indexes(c, *provider, index_dir);
            TokenOverlapScorer scorer;
            std::vector<std::vector<Triple>> retrieved;
            std::vector<std::set<Triple>> gold;
            RetrieverConfig eval_cfg = cfg;
            eval_cfg.top_k = 100;  // largest reported k
            eval_cfg.first_stage_n = std::max(eval_cfg.first_stage_n, 100);
            for (const auto& q : c.questions) {
                if (q.gold_evidence.empty()) continue;
                auto ranked = run_retriever(retriever, q.question, c, q.table_id,
                                            idxs, *provider, scorer, eval_cfg,
                                            g.seed);
                std::vector<Triple> triples;
                for (const auto& s : ranked) triples.push_back(s.triple);
                retrieved.push_back(std::move(triples));
                std::set<Triple> gs;
                for (const auto& ev : q.gold_evidence) gs.insert(ev.triple);
                gold.push_back(std::move(gs));
            }
            auto result = evaluate_retrieval(retrieved, gold);
            write_report_json(result, nullptr, open_output(out_file, g.output));
        } else if (*build_data) {
            auto c = load_corpus(kb_path, tables_path, questions_path,
                                 default_excluded_datatypes());
            NegativeStrategy strat = strategy == "random"
                                         ? NegativeStrategy::Random
                                         : NegativeStrategy::Knn;
            if (strategy != "knn" && strategy != "random")
                throw std::runtime_error("strategy must be knn or random");
            size_t n = n_negatives >= 0
                           ? static_cast<size_t>(n_negatives)
                           : (strat == NegativeStrategy::Knn ? 25 : 50);
            HashingEmbedder provider(dim);
            auto result = build_retrieval_dataset(c.questions, c.tables,
                                                  c.subgraphs, strat, n,
                                                  &provider, g.seed);
            auto& out = open_output(out_file, g.output);
            write_retrieval_dataset_jsonl(result.instances, strat, n, g.seed, out);
            for (const auto& issue : result.skipped)
                std::cerr << json{{"skipped", issue.question_id},
                                  {"rule", to_string(issue.rule)},
                                  {"detail", issue.detail}}
                                 .dump()
                          << "\n";
        } else if (*train_cmd) {
            auto c = load_corpus(kb_path, tables_path, "",
                                 default_excluded_datatypes());
            LabelMap labels = merged_labels(c);
            auto load_instances = [&](const std::string& path) {
                // Instances reference triples by key; resolve via sub-graphs.
                std::map<std::string, Triple> by_key;
                for (const auto& [id, sub] : c.subgraphs)
                    for (const auto& t : sub.triples) by_key[triple_key(t)] = t;
                std::vector<RetrievalInstance> out;
                std::ifstream in(path);
                if (!in) throw std::runtime_error("cannot open " + path);
                std::string line;
                while (std::getline(in, line)) {
                    if (line.empty()) continue;
                    auto rec = json::parse(line);
                    RetrievalInstance inst;
                    inst.question_id = rec.at("question_id");
                    inst.question = rec.at("question");
                    inst.table_id = rec.at("table_id");
                    for (const auto& key : rec.at("positives"))
                        inst.positives.push_back(by_key.at(key.get<std::string>()));
                    for (const auto& key : rec.at("negatives"))
                        inst.negatives.push_back(by_key.at(key.get<std::string>()));
                    out.push_back(std::move(inst));
                }
                return out;
            };
            auto train_set = load_instances(train_data_path);
            std::vector<RetrievalInstance> dev_set;
            if (!dev_data_path.empty()) dev_set = load_instances(dev_data_path);
            TrainConfig tcfg;
            tcfg.epochs = epochs;
            tcfg.batch_size = batch_size;
            tcfg.learning_rate = learning_rate;
            tcfg.seed = g.seed;
            tcfg.dim = static_cast<size_t>(dim);
            auto result = train_bi_encoder(train_set, c.tables, labels, tcfg,
                                           dev_set.empty() ? nullptr : &dev_set);
            if (g.output.empty())
                throw std::runtime_error("train requires --output model path");
            result.model.save(g.output);
            for (const auto& log : result.log) {
                json rec = {{"epoch", log.epoch}, {"train_loss", log.train_loss}};
                if (log.dev_recall_at_5) rec["dev_r5"] = *log.dev_recall_at_5;
                std::cout << rec.dump() << "\n";
            }
        } else if (*eval_qa_cmd) {
            auto questions = load_questions_file(questions_path);
            std::map<std::string, std::string> preds;
            std::ifstream in(predictions_path);
            if (!in) throw std::runtime_error("cannot open " + predictions_path);
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                auto rec = json::parse(line);
                preds[rec.at("id")] = rec.at("answer");
            }
            std::vector<std::string> p, r;
            std::vector<AnswerSource> sources;
            for (const auto& q : questions) {
                auto it = preds.find(q.id);
                p.push_back(it == preds.end() ? "" : it->second);
                r.push_back(q.answer);
                sources.push_back(q.answer_source);
            }
            auto qa = evaluate_qa(p, r, sources);
            json rec = {{"em", qa.em}, {"f1", qa.f1}, {"n", qa.n}};
            json per_source = json::object();
            for (const auto& [src, ef] : qa.per_source)
                per_source[src] = {{"em", ef.first}, {"f1", ef.second}};
            rec["per_source"] = per_source;
            open_output(out_file, g.output) << rec.dump(2) << "\n";
        } else if (*answer_cmd) {
            auto c = load_corpus(kb_path, tables_path, questions_path,
                                 default_excluded_datatypes());
            auto provider = make_provider(model_path, dim);
            auto idxs = build_or_load_indexes(c, *provider, index_dir);
            TokenOverlapScorer scorer;
            auto [gen_host, gen_port] = split_endpoint(gen_endpoint);
            HttpGenerationClient gen(gen_host, gen_port);
            auto& out = open_output(out_file, g.output);
            for (const auto& q : c.questions) {
                AnswerOptions opts;
                opts.top_k = k;
                const auto& labels = c.subgraphs.at(q.table_id).labels;
                AnswerTrace trace;
                if (k > 0) {
                    trace = answer_question(q.question, c.tables.at(q.table_id),
                                            idxs.at(q.table_id), *provider,
                                            scorer, labels, gen, opts);
                } else {
                    trace.prompt = build_reasoner_input(
                        q.question, c.tables.at(q.table_id), {}, labels);
                    trace.answer = gen.generate(trace.prompt, opts.max_tokens, 0.0);
                }
                json retrieved = json::array();
                for (const auto& s : trace.retrieved)
                    retrieved.push_back(
                        {{"key", triple_key(s.triple)}, {"score", s.score}});
                out << json{{"id", q.id},
                            {"answer", trace.answer},
                            {"retrieved", retrieved},
                            {"prompt", trace.prompt}}
                           .dump()
                    << "\n";
            }
        } else if (*validate_cmd) {
            auto c = load_corpus(kb_path, tables_path, questions_path,
                                 default_excluded_datatypes());
            auto issues = validate_annotations(c.questions, c.tables, c.subgraphs);
            json out_issues = json::array();
            for (const auto& i : issues)
                out_issues.push_back({{"question_id", i.question_id},
                                      {"rule", to_string(i.rule)},
                                      {"detail", i.detail}});
            json rec = {{"issues", out_issues}};
            if (!passages_path.empty()) {
                std::map<std::string, std::string> passages;
                std::ifstream in(passages_path);
                if (!in) throw std::runtime_error("cannot open " + passages_path);
                std::string line;
                while (std::getline(in, line)) {
                    if (line.empty()) continue;
                    auto p = json::parse(line);
                    passages[p.at("id")] = p.at("passage");
                }
                auto filtered = filter_questions(c.questions, passages,
                                                 lcs_threshold);
                json dropped = json::array();
                for (const auto& q : filtered.dropped) dropped.push_back(q.id);
                rec["lcs_dropped"] = dropped;
                rec["missing_passages"] = filtered.missing_passage;
            }
            open_output(out_file, g.output) << rec.dump(2) << "\n";
        } else if (*serve_cmd) {
            auto c = load_corpus(kb_path, tables_path, "",
                                 default_excluded_datatypes());
            auto provider = make_provider(model_path, dim);
            auto state = std::make_shared<RetrievalState>();
            state->tables = c.tables;
            state->indexes = build_or_load_indexes(c, *provider, index_dir);
            state->labels = merged_labels(c);
            state->provider = provider;
            state->scorer = std::make_shared<TokenOverlapScorer>();
            state->cfg = cfg;
            RetrievalServer server(std::move(state));
            std::cerr << "listening on " << host << ":" << port << "\n";
            if (!server.listen(host, port))
                throw std::runtime_error("failed to bind " + host + ":" +
                                         std::to_string(port));
        }
    } catch (const std::exception& e) {
        std::cerr << json{{"error",
                           {{"code", "runtime"}, {"message", e.what()}}}}
                         .dump()
                  << "\n";
        return 1;
    }
    return 0;
}
