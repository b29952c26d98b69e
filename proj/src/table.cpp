#include "tablekb/table.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace tablekb {

using nlohmann::json;

std::string to_string(AnswerSource s) {
    switch (s) {
        case AnswerSource::InKb: return "in_kb";
        case AnswerSource::InTable: return "in_table";
        case AnswerSource::Calculated: return "calculated";
    }
    return "calculated";
}

AnswerSource answer_source_from_string(const std::string& s) {
    if (s == "in_kb") return AnswerSource::InKb;
    if (s == "in_table") return AnswerSource::InTable;
    if (s == "calculated") return AnswerSource::Calculated;
    throw std::runtime_error("unknown answer_source: " + s);
}

std::set<EntityId> linked_entities(const Table& t) {
    std::set<EntityId> out;
    for (const auto& row : t.rows)
        for (const auto& cell : row)
            out.insert(cell.links.begin(), cell.links.end());
    return out;
}

Table triple_related_subtable(const Table& t, const Triple& triple) {
    Table sub;
    sub.id = t.id;
    sub.headers = t.headers;
    for (const auto& row : t.rows) {
        bool match = std::any_of(row.begin(), row.end(), [&](const Cell& c) {
            return std::find(c.links.begin(), c.links.end(), triple.head) !=
                   c.links.end();
        });
        if (match) sub.rows.push_back(row);
    }
    return sub;
}

namespace {

Triple triple_from_json(const json& rec) {
    Triple t;
    t.head = rec.at("head").get<std::string>();
    t.property = rec.at("property").get<std::string>();
    const json& tail = rec.at("tail");
    if (tail.at("kind") == "entity") {
        t.tail = tail.at("id").get<std::string>();
    } else {
        t.tail = LiteralValue{tail.at("datatype").get<std::string>(),
                              tail.at("text").get<std::string>()};
    }
    return t;
}

json triple_to_json(const Triple& t) {
    json rec;
    rec["head"] = t.head;
    rec["head_label"] = t.head;
    rec["property"] = t.property;
    rec["property_label"] = t.property;
    if (const auto* e = std::get_if<EntityId>(&t.tail)) {
        rec["tail"] = {{"kind", "entity"}, {"id", *e}, {"label", *e}};
    } else {
        const auto& lit = std::get<LiteralValue>(t.tail);
        rec["tail"] = {{"kind", "value"},
                       {"datatype", lit.datatype},
                       {"text", lit.text}};
    }
    return rec;
}

Table table_from_json(const json& rec, size_t lineno) {
    Table t;
    t.id = rec.at("id").get<std::string>();
    t.headers = rec.at("headers").get<std::vector<std::string>>();
    for (const auto& row_json : rec.at("rows")) {
        std::vector<Cell> row;
        for (const auto& cell_json : row_json) {
            Cell c;
            c.text = cell_json.at("text").get<std::string>();
            if (cell_json.contains("links"))
                c.links = cell_json["links"].get<std::vector<std::string>>();
            row.push_back(std::move(c));
        }
        if (row.size() != t.headers.size())
            throw IngestError(lineno, "table '" + t.id +
                                          "': row width != header count");
        t.rows.push_back(std::move(row));
    }
    if (t.rows.empty())
        throw IngestError(lineno, "table '" + t.id + "' has no rows");
    return t;
}

}  // namespace

std::vector<Table> load_tables_jsonl(std::istream& in) {
    std::vector<Table> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw IngestError(lineno, std::string("invalid JSON: ") + e.what());
        }
        try {
            out.push_back(table_from_json(rec, lineno));
        } catch (const json::exception& e) {
            throw IngestError(lineno, std::string("bad table record: ") + e.what());
        }
    }
    return out;
}

std::vector<Table> load_tables_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open tables file: " + path);
    return load_tables_jsonl(in);
}

std::vector<Question> load_questions_jsonl(std::istream& in) {
    std::vector<Question> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw IngestError(lineno, std::string("invalid JSON: ") + e.what());
        }
        try {
            Question q;
            q.id = rec.at("id").get<std::string>();
            q.table_id = rec.at("table_id").get<std::string>();
            q.question = rec.at("question").get<std::string>();
            q.answer = rec.at("answer").get<std::string>();
            q.answer_source =
                answer_source_from_string(rec.at("answer_source").get<std::string>());
            for (const auto& ev : rec.at("gold_evidence")) {
                GoldEvidence g;
                g.row = ev.at("row").get<int>();
                g.col = ev.at("col").get<int>();
                g.triple = triple_from_json(ev.at("triple"));
                q.gold_evidence.push_back(std::move(g));
            }
            out.push_back(std::move(q));
        } catch (const json::exception& e) {
            throw IngestError(lineno, std::string("bad question record: ") + e.what());
        }
    }
    return out;
}

std::vector<Question> load_questions_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open questions file: " + path);
    return load_questions_jsonl(in);
}

void write_tables_jsonl(const std::vector<Table>& tables, std::ostream& out) {
    for (const auto& t : tables) {
        json rows = json::array();
        for (const auto& row : t.rows) {
            json row_json = json::array();
            for (const auto& cell : row)
                row_json.push_back({{"text", cell.text}, {"links", cell.links}});
            rows.push_back(std::move(row_json));
        }
        json rec = {{"id", t.id}, {"headers", t.headers}, {"rows", rows}};
        out << rec.dump() << '\n';
    }
}

void write_questions_jsonl(const std::vector<Question>& qs, std::ostream& out) {
    for (const auto& q : qs) {
        json evidence = json::array();
        for (const auto& g : q.gold_evidence)
            evidence.push_back(
                {{"row", g.row}, {"col", g.col}, {"triple", triple_to_json(g.triple)}});
        json rec = {{"id", q.id},
                    {"table_id", q.table_id},
                    {"question", q.question},
                    {"answer", q.answer},
                    {"answer_source", to_string(q.answer_source)},
                    {"gold_evidence", evidence}};
        out << rec.dump() << '\n';
    }
}

}  // namespace tablekb
