#include "tablekb/kb.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace tablekb {

using nlohmann::json;

std::string triple_key(const Triple& t) {
    std::string key = t.head;
    key += '\x1f';
    key += t.property;
    key += '\x1f';
    if (const auto* e = std::get_if<EntityId>(&t.tail)) {
        key += 'E';
        key += *e;
    } else {
        const auto& lit = std::get<LiteralValue>(t.tail);
        key += 'V';
        key += lit.datatype;
        key += '\x1f';
        key += lit.text;
    }
    return key;
}

namespace {

Triple parse_triple_record(const json& rec, LabelMap& labels, size_t line) {
    auto require_string = [&](const json& obj, const char* field) {
        if (!obj.contains(field) || !obj[field].is_string() ||
            obj[field].get<std::string>().empty()) {
            throw IngestError(line, std::string("missing or empty field '") +
                                        field + "'");
        }
        return obj[field].get<std::string>();
    };

    Triple t;
    t.head = require_string(rec, "head");
    t.property = require_string(rec, "property");
    std::string head_label = require_string(rec, "head_label");
    std::string prop_label = require_string(rec, "property_label");

    if (!rec.contains("tail") || !rec["tail"].is_object())
        throw IngestError(line, "missing 'tail' object");
    const json& tail = rec["tail"];
    std::string kind = require_string(tail, "kind");
    if (kind == "entity") {
        EntityId id = require_string(tail, "id");
        std::string label = require_string(tail, "label");
        t.tail = id;
        auto [it, inserted] = labels.try_emplace(id, label);
        if (!inserted && it->second != label)
            throw IngestError(line, "conflicting label for id '" + id + "'");
    } else if (kind == "value") {
        LiteralValue v;
        v.datatype = require_string(tail, "datatype");
        v.text = require_string(tail, "text");
        t.tail = v;
    } else {
        throw IngestError(line, "tail kind must be 'entity' or 'value'");
    }

    for (auto& [id, label] :
         {std::pair{t.head, head_label}, std::pair{t.property, prop_label}}) {
        auto [it, inserted] = labels.try_emplace(id, label);
        if (!inserted && it->second != label)
            throw IngestError(line, "conflicting label for id '" + id + "'");
    }
    return t;
}

}  // namespace

SubGraphStore SubGraphStore::from_jsonl(std::istream& in) {
    SubGraphStore store;
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
        Triple t = parse_triple_record(rec, store.labels_, lineno);
        auto& bucket = store.by_head_[t.head];
        if (std::find(bucket.begin(), bucket.end(), t) == bucket.end()) {
            bucket.push_back(std::move(t));
            ++store.total_;
        }
    }
    for (auto& [head, triples] : store.by_head_) {
        std::sort(triples.begin(), triples.end(),
                  [](const Triple& a, const Triple& b) {
                      return triple_key(a) < triple_key(b);
                  });
    }
    return store;
}

SubGraphStore SubGraphStore::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open kb file: " + path);
    return from_jsonl(in);
}

std::optional<std::string> SubGraphStore::label(const std::string& id) const {
    auto it = labels_.find(id);
    if (it == labels_.end()) return std::nullopt;
    return it->second;
}

const std::vector<Triple>* SubGraphStore::triples_of(const EntityId& head) const {
    auto it = by_head_.find(head);
    return it == by_head_.end() ? nullptr : &it->second;
}

SubGraph SubGraphStore::one_hop(const std::set<EntityId>& entities,
                                size_t* missing) const {
    SubGraph g;
    size_t skipped = 0;
    for (const auto& e : entities) {
        auto it = by_head_.find(e);
        if (it == by_head_.end()) {
            ++skipped;
            continue;
        }
        g.triples.insert(g.triples.end(), it->second.begin(), it->second.end());
    }
    std::sort(g.triples.begin(), g.triples.end(),
              [](const Triple& a, const Triple& b) {
                  return triple_key(a) < triple_key(b);
              });
    for (const auto& t : g.triples) {
        auto copy_label = [&](const std::string& id) {
            auto it = labels_.find(id);
            if (it != labels_.end()) g.labels[id] = it->second;
        };
        copy_label(t.head);
        copy_label(t.property);
        if (const auto* e = std::get_if<EntityId>(&t.tail)) copy_label(*e);
    }
    if (missing) *missing = skipped;
    return g;
}

SubGraph filter_attributes(const SubGraph& g,
                           const std::set<std::string>& excluded_datatypes) {
    SubGraph out;
    out.labels = g.labels;
    for (const auto& t : g.triples) {
        if (t.is_attribute()) {
            const auto& lit = std::get<LiteralValue>(t.tail);
            if (excluded_datatypes.count(lit.datatype)) continue;
        }
        out.triples.push_back(t);
    }
    return out;
}

const std::set<std::string>& default_excluded_datatypes() {
    static const std::set<std::string> kDefault = {"globe-coordinate", "url"};
    return kDefault;
}

void write_kb_jsonl(const SubGraph& g, std::ostream& out) {
    for (const auto& t : g.triples) {
        auto label_of = [&](const std::string& id) {
            auto it = g.labels.find(id);
            return it == g.labels.end() ? id : it->second;
        };
        json rec;
        rec["head"] = t.head;
        rec["head_label"] = label_of(t.head);
        rec["property"] = t.property;
        rec["property_label"] = label_of(t.property);
        if (const auto* e = std::get_if<EntityId>(&t.tail)) {
            rec["tail"] = {{"kind", "entity"}, {"id", *e}, {"label", label_of(*e)}};
        } else {
            const auto& lit = std::get<LiteralValue>(t.tail);
            rec["tail"] = {{"kind", "value"},
                           {"datatype", lit.datatype},
                           {"text", lit.text}};
        }
        out << rec.dump() << '\n';
    }
}

}  // namespace tablekb
