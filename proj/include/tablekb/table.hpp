#pragma once
// Entity-linked tables, gold evidence, and triple-related sub-table
// extraction.

#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "tablekb/kb.hpp"

namespace tablekb {

struct Cell {
    std::string text;
    std::vector<EntityId> links;  // no duplicates

    bool operator==(const Cell&) const = default;
};

struct Table {
    std::string id;
    std::vector<std::string> headers;
    std::vector<std::vector<Cell>> rows;  // every row has headers.size() cells

    size_t n_rows() const { return rows.size(); }
    size_t n_cols() const { return headers.size(); }
};

struct GoldEvidence {
    int row = 0;  // 0-based
    int col = 0;
    Triple triple;
};

enum class AnswerSource { InKb, InTable, Calculated };

std::string to_string(AnswerSource s);
AnswerSource answer_source_from_string(const std::string& s);

struct Question {
    std::string id;
    std::string table_id;
    std::string question;
    std::string answer;
    AnswerSource answer_source = AnswerSource::InTable;
    std::vector<GoldEvidence> gold_evidence;
};

// Union of entity links over all cells (the mapping f applied cell-wise).
std::set<EntityId> linked_entities(const Table& t);

// Rows whose cells link the triple's head entity, original order kept.
// No match yields the headers with an empty body.
Table triple_related_subtable(const Table& t, const Triple& triple);

std::vector<Table> load_tables_jsonl(std::istream& in);
std::vector<Table> load_tables_file(const std::string& path);
std::vector<Question> load_questions_jsonl(std::istream& in);
std::vector<Question> load_questions_file(const std::string& path);

void write_tables_jsonl(const std::vector<Table>& tables, std::ostream& out);
void write_questions_jsonl(const std::vector<Question>& qs, std::ostream& out);

}  // namespace tablekb
