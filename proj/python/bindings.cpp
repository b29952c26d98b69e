// Python bindings for the core operations: ingest, serialization,
// retrieval, dataset construction, training, and evaluation.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "tablekb/app.hpp"
#include "tablekb/dataset.hpp"
#include "tablekb/eval.hpp"
#include "tablekb/kb.hpp"
#include "tablekb/retrieve.hpp"
#include "tablekb/serialize.hpp"
#include "tablekb/table.hpp"
#include "tablekb/train.hpp"

namespace py = pybind11;
using namespace tablekb;

namespace {

TripleTail tail_from_py(const py::object& obj) {
    if (py::isinstance<py::str>(obj)) return obj.cast<EntityId>();
    auto t = obj.cast<py::tuple>();
    return LiteralValue{t[0].cast<std::string>(), t[1].cast<std::string>()};
}

py::object tail_to_py(const TripleTail& tail) {
    if (const auto* e = std::get_if<EntityId>(&tail)) return py::cast(*e);
    const auto& v = std::get<LiteralValue>(tail);
    return py::make_tuple(v.datatype, v.text);
}

}  // namespace

PYBIND11_MODULE(_tablekb, m) {
    m.doc() = "KB-augmented table QA retrieval core";

    py::class_<LiteralValue>(m, "LiteralValue")
        .def(py::init<std::string, std::string>(), py::arg("datatype"),
             py::arg("text"))
        .def_readwrite("datatype", &LiteralValue::datatype)
        .def_readwrite("text", &LiteralValue::text);

    py::class_<Triple>(m, "Triple")
        .def(py::init([](const std::string& head, const std::string& property,
                         const py::object& tail) {
                 return Triple{head, property, tail_from_py(tail)};
             }),
             py::arg("head"), py::arg("property"), py::arg("tail"))
        .def_readwrite("head", &Triple::head)
        .def_readwrite("property", &Triple::property)
        .def_property(
            "tail", [](const Triple& t) { return tail_to_py(t.tail); },
            [](Triple& t, const py::object& o) { t.tail = tail_from_py(o); })
        .def("is_attribute", &Triple::is_attribute)
        .def("key", [](const Triple& t) { return triple_key(t); })
        .def("__eq__", [](const Triple& a, const Triple& b) { return a == b; })
        .def("__hash__",
             [](const Triple& t) { return py::hash(py::str(triple_key(t))); })
        .def("__repr__", [](const Triple& t) {
            return "Triple(key=" + triple_key(t) + ")";
        });

    py::class_<Cell>(m, "Cell")
        .def(py::init<std::string, std::vector<EntityId>>(), py::arg("text"),
             py::arg("links") = std::vector<EntityId>{})
        .def_readwrite("text", &Cell::text)
        .def_readwrite("links", &Cell::links);

    py::class_<Table>(m, "Table")
        .def(py::init<>())
        .def_readwrite("id", &Table::id)
        .def_readwrite("headers", &Table::headers)
        .def_readwrite("rows", &Table::rows)
        .def("n_rows", &Table::n_rows)
        .def("n_cols", &Table::n_cols);

    py::class_<GoldEvidence>(m, "GoldEvidence")
        .def(py::init<>())
        .def_readwrite("row", &GoldEvidence::row)
        .def_readwrite("col", &GoldEvidence::col)
        .def_readwrite("triple", &GoldEvidence::triple);

    py::class_<Question>(m, "Question")
        .def(py::init<>())
        .def_readwrite("id", &Question::id)
        .def_readwrite("table_id", &Question::table_id)
        .def_readwrite("question", &Question::question)
        .def_readwrite("answer", &Question::answer)
        .def_property(
            "answer_source",
            [](const Question& q) { return to_string(q.answer_source); },
            [](Question& q, const std::string& s) {
                q.answer_source = answer_source_from_string(s);
            })
        .def_readwrite("gold_evidence", &Question::gold_evidence);

    py::class_<SubGraph>(m, "SubGraph")
        .def(py::init<>())
        .def_readwrite("triples", &SubGraph::triples)
        .def_readwrite("labels", &SubGraph::labels)
        .def("__len__", &SubGraph::size);

    py::class_<SubGraphStore>(m, "SubGraphStore")
        .def_static("from_file", &SubGraphStore::from_file, py::arg("path"))
        .def_static("from_jsonl",
                    [](const std::string& text) {
                        std::istringstream in(text);
                        return SubGraphStore::from_jsonl(in);
                    })
        .def("triple_count", &SubGraphStore::triple_count)
        .def("label", &SubGraphStore::label)
        .def("one_hop", [](const SubGraphStore& s,
                           const std::set<EntityId>& entities) {
            return s.one_hop(entities);
        });

    m.def("filter_attributes", &filter_attributes, py::arg("subgraph"),
          py::arg("excluded_datatypes"));
    m.def("default_excluded_datatypes",
          [] { return default_excluded_datatypes(); });
    m.def("load_tables_file", &load_tables_file, py::arg("path"));
    m.def("load_questions_file", &load_questions_file, py::arg("path"));
    m.def("linked_entities", &linked_entities, py::arg("table"));
    m.def("triple_related_subtable", &triple_related_subtable, py::arg("table"),
          py::arg("triple"));

    m.def("serialize_triple", &serialize_triple, py::arg("triple"),
          py::arg("labels"));
    m.def("serialize_table", &serialize_table, py::arg("table"));
    m.def("build_retrieval_context", &build_retrieval_context,
          py::arg("subtable"), py::arg("triple"), py::arg("labels"));
    m.def("build_reasoner_input", &build_reasoner_input, py::arg("question"),
          py::arg("table"), py::arg("triples"), py::arg("labels"));

    py::class_<EmbeddingProvider, std::shared_ptr<EmbeddingProvider>>(
        m, "EmbeddingProvider")
        .def("embed_query", &EmbeddingProvider::embed_query)
        .def("embed_context", &EmbeddingProvider::embed_context)
        .def("dim", &EmbeddingProvider::dim)
        .def("fingerprint", &EmbeddingProvider::fingerprint);

    py::class_<HashingEmbedder, EmbeddingProvider,
               std::shared_ptr<HashingEmbedder>>(m, "HashingEmbedder")
        .def(py::init<size_t>(), py::arg("dim") = 256);

    py::class_<LinearEmbedder, EmbeddingProvider,
               std::shared_ptr<LinearEmbedder>>(m, "LinearEmbedder")
        .def(py::init<size_t>(), py::arg("dim") = 256)
        .def("save", &LinearEmbedder::save, py::arg("path"))
        .def_static("load", &LinearEmbedder::load, py::arg("path"));

    py::class_<PairScorer, std::shared_ptr<PairScorer>>(m, "PairScorer")
        .def("score", &PairScorer::score);
    py::class_<TokenOverlapScorer, PairScorer,
               std::shared_ptr<TokenOverlapScorer>>(m, "TokenOverlapScorer")
        .def(py::init<>());

    py::class_<ScoredTriple>(m, "ScoredTriple")
        .def_readonly("triple", &ScoredTriple::triple)
        .def_readonly("score", &ScoredTriple::score)
        .def_readonly("stage", &ScoredTriple::stage);

    py::class_<RetrieverConfig>(m, "RetrieverConfig")
        .def(py::init<>())
        .def_readwrite("first_stage_n", &RetrieverConfig::first_stage_n)
        .def_readwrite("top_k", &RetrieverConfig::top_k)
        .def_readwrite("hash_dim", &RetrieverConfig::hash_dim);

    py::class_<TripleIndex>(m, "TripleIndex")
        .def_readonly("table_id", &TripleIndex::table_id)
        .def_readonly("fingerprint", &TripleIndex::fingerprint)
        .def("__len__", [](const TripleIndex& i) { return i.entries.size(); })
        .def("save", &TripleIndex::save, py::arg("path"))
        .def_static("load",
                    py::overload_cast<const std::string&>(&TripleIndex::load),
                    py::arg("path"))
        .def_static(
            "load_checked",
            py::overload_cast<const std::string&, const std::string&>(
                &TripleIndex::load),
            py::arg("path"), py::arg("expected_fingerprint"));

    m.def("build_index", &build_index, py::arg("subgraph"), py::arg("table"),
          py::arg("provider"));
    m.def("bi_encoder_retrieve", &bi_encoder_retrieve, py::arg("question"),
          py::arg("index"), py::arg("provider"), py::arg("k"));
    m.def(
        "multistage_retrieve",
        [](const std::string& q, const Table& t, const TripleIndex& idx,
           const EmbeddingProvider& provider, const PairScorer& scorer,
           const LabelMap& labels, const RetrieverConfig& cfg) {
            return multistage_retrieve(q, t, idx, provider, scorer, labels, cfg);
        },
        py::arg("question"), py::arg("table"), py::arg("index"),
        py::arg("provider"), py::arg("scorer"), py::arg("labels"),
        py::arg("config") = RetrieverConfig{});
    m.def("string_match_retrieve", &string_match_retrieve, py::arg("question"),
          py::arg("subgraph"), py::arg("labels"), py::arg("k"));
    m.def("random_retrieve", &random_retrieve, py::arg("subgraph"),
          py::arg("k"), py::arg("seed"));

    py::class_<RetrievalInstance>(m, "RetrievalInstance")
        .def(py::init<>())
        .def_readwrite("question_id", &RetrievalInstance::question_id)
        .def_readwrite("question", &RetrievalInstance::question)
        .def_readwrite("table_id", &RetrievalInstance::table_id)
        .def_readwrite("positives", &RetrievalInstance::positives)
        .def_readwrite("negatives", &RetrievalInstance::negatives);

    m.def(
        "build_retrieval_dataset",
        [](const std::vector<Question>& questions,
           const std::map<std::string, Table>& tables,
           const std::map<std::string, SubGraph>& subgraphs,
           const std::string& strategy, size_t n,
           const EmbeddingProvider* provider, uint64_t seed) {
            NegativeStrategy s = strategy == "random" ? NegativeStrategy::Random
                                                      : NegativeStrategy::Knn;
            auto result = build_retrieval_dataset(questions, tables, subgraphs,
                                                  s, n, provider, seed);
            py::list skipped;
            for (const auto& issue : result.skipped)
                skipped.append(py::make_tuple(issue.question_id,
                                              to_string(issue.rule),
                                              issue.detail));
            return py::make_tuple(result.instances, skipped);
        },
        py::arg("questions"), py::arg("tables"), py::arg("subgraphs"),
        py::arg("strategy"), py::arg("n"), py::arg("provider"),
        py::arg("seed") = 0);

    m.def("lcs_similarity", &lcs_similarity, py::arg("question"),
          py::arg("passage"));
    m.def(
        "filter_questions",
        [](const std::vector<Question>& questions,
           const std::map<std::string, std::string>& passages,
           double threshold) {
            auto r = filter_questions(questions, passages, threshold);
            return py::make_tuple(r.kept, r.dropped, r.missing_passage);
        },
        py::arg("questions"), py::arg("passages"), py::arg("threshold") = 0.7);
    m.def(
        "validate_annotations",
        [](const std::vector<Question>& questions,
           const std::map<std::string, Table>& tables,
           const std::map<std::string, SubGraph>& subgraphs) {
            py::list out;
            for (const auto& issue :
                 validate_annotations(questions, tables, subgraphs))
                out.append(py::make_tuple(issue.question_id,
                                          to_string(issue.rule), issue.detail));
            return out;
        },
        py::arg("questions"), py::arg("tables"), py::arg("subgraphs"));
    m.def(
        "split_dataset",
        [](const std::vector<Question>& questions, double train, double dev,
           double test, uint64_t seed) {
            auto s = split_dataset(questions, {train, dev, test}, seed);
            return py::make_tuple(s.train, s.dev, s.test);
        },
        py::arg("questions"), py::arg("train") = 0.8, py::arg("dev") = 0.1,
        py::arg("test") = 0.1, py::arg("seed") = 0);

    m.def("contrastive_loss", &contrastive_loss, py::arg("pos_scores"),
          py::arg("neg_scores"));
    m.def(
        "train_bi_encoder",
        [](const std::vector<RetrievalInstance>& dataset,
           const std::map<std::string, Table>& tables, const LabelMap& labels,
           int epochs, int batch_size, double learning_rate, uint64_t seed,
           size_t dim, const std::vector<RetrievalInstance>& dev_set) {
            TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.batch_size = batch_size;
            cfg.learning_rate = learning_rate;
            cfg.seed = seed;
            cfg.dim = dim;
            auto result = train_bi_encoder(
                dataset, tables, labels, cfg,
                dev_set.empty() ? nullptr : &dev_set);
            py::list log;
            for (const auto& e : result.log) {
                py::dict rec;
                rec["epoch"] = e.epoch;
                rec["train_loss"] = e.train_loss;
                if (e.dev_recall_at_5) rec["dev_r5"] = *e.dev_recall_at_5;
                log.append(rec);
            }
            return py::make_tuple(
                std::make_shared<LinearEmbedder>(std::move(result.model)), log);
        },
        py::arg("dataset"), py::arg("tables"), py::arg("labels"),
        py::arg("epochs") = 20, py::arg("batch_size") = 16,
        py::arg("learning_rate") = 1e-5, py::arg("seed") = 0,
        py::arg("dim") = 256,
        py::arg("dev_set") = std::vector<RetrievalInstance>{});
    m.def("instance_recall_at_k", &instance_recall_at_k, py::arg("provider"),
          py::arg("instances"), py::arg("tables"), py::arg("labels"),
          py::arg("k"));

    m.def("recall_at_k", &recall_at_k, py::arg("retrieved"), py::arg("gold"),
          py::arg("k"));
    m.def(
        "evaluate_retrieval",
        [](const std::vector<std::vector<Triple>>& retrieved,
           const std::vector<std::set<Triple>>& gold,
           const std::vector<int>& ks) {
            auto r = evaluate_retrieval(retrieved, gold, ks);
            return py::make_tuple(r.per_k, r.instance_count);
        },
        py::arg("retrieved"), py::arg("gold"),
        py::arg("ks") = std::vector<int>{1, 5, 20, 100});
    m.def("normalize_answer", &normalize_answer, py::arg("text"));
    m.def("exact_match", &exact_match, py::arg("pred"), py::arg("gold"));
    m.def("f1", &f1, py::arg("pred"), py::arg("gold"));
    m.def(
        "evaluate_qa",
        [](const std::vector<std::string>& predictions,
           const std::vector<std::string>& references,
           const std::vector<std::string>& sources) {
            std::vector<AnswerSource> srcs;
            for (const auto& s : sources)
                srcs.push_back(answer_source_from_string(s));
            auto r = evaluate_qa(predictions, references, srcs);
            py::dict per_source;
            for (const auto& [src, ef] : r.per_source)
                per_source[py::str(src)] = py::make_tuple(ef.first, ef.second);
            return py::make_tuple(r.em, r.f1, per_source, r.n);
        },
        py::arg("predictions"), py::arg("references"), py::arg("sources"));

    m.def("select_fewshot_examples",
          [](const std::string& q, const std::vector<Question>& train,
             const EmbeddingProvider& provider, size_t count) {
              py::list out;
              for (const auto& ex :
                   select_fewshot_examples(q, train, provider, count))
                  out.append(py::make_tuple(ex.question, ex.answer));
              return out;
          },
          py::arg("question"), py::arg("train_questions"), py::arg("provider"),
          py::arg("count") = 5);
}
