#include "tablekb/serialize.hpp"

namespace tablekb {

namespace {

const std::string& resolve_label(const std::string& id, const LabelMap& labels) {
    auto it = labels.find(id);
    if (it == labels.end())
        throw std::runtime_error("unresolvable label for id '" + id + "'");
    return it->second;
}

}  // namespace

std::string serialize_triple(const Triple& tr, const LabelMap& labels) {
    std::string out = "[HEAD] ";
    out += resolve_label(tr.head, labels);
    out += " [REL] ";
    out += resolve_label(tr.property, labels);
    out += " [TAIL] ";
    if (const auto* e = std::get_if<EntityId>(&tr.tail)) {
        out += resolve_label(*e, labels);
    } else {
        out += std::get<LiteralValue>(tr.tail).text;
    }
    return out;
}

std::string serialize_table(const Table& t) {
    std::string out = "col :";
    for (size_t j = 0; j < t.headers.size(); ++j) {
        if (j) out += " |";
        out += ' ';
        out += t.headers[j];
    }
    for (size_t i = 0; i < t.rows.size(); ++i) {
        out += " row ";
        out += std::to_string(i + 1);
        out += " :";
        for (size_t j = 0; j < t.rows[i].size(); ++j) {
            if (j) out += " |";
            out += ' ';
            out += t.rows[i][j].text;
        }
    }
    return out;
}

std::string build_retrieval_context(const Table& sub, const Triple& tr,
                                    const LabelMap& labels) {
    return serialize_table(sub) + " " + serialize_triple(tr, labels);
}

std::string build_reasoner_input(const std::string& question, const Table& t,
                                 const std::vector<Triple>& triples,
                                 const LabelMap& labels) {
    std::string out = question + " " + serialize_table(t);
    for (const auto& tr : triples) {
        out += ' ';
        out += serialize_triple(tr, labels);
    }
    return out;
}

}  // namespace tablekb
