#pragma once
// Knowledge-base triple store: ingest, label lookup, one-hop sub-graph
// extraction and attribute filtering.

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace tablekb {

using EntityId = std::string;
using PropertyId = std::string;

struct LiteralValue {
    std::string datatype;
    std::string text;

    auto operator<=>(const LiteralValue&) const = default;
};

// Tail of a triple: either a KB entity or a typed literal value.
using TripleTail = std::variant<EntityId, LiteralValue>;

enum class TripleKind { Relational, Attribute };

struct Triple {
    EntityId head;
    PropertyId property;
    TripleTail tail;

    auto operator<=>(const Triple&) const = default;

    TripleKind kind() const {
        return std::holds_alternative<EntityId>(tail) ? TripleKind::Relational
                                                      : TripleKind::Attribute;
    }
    bool is_attribute() const { return kind() == TripleKind::Attribute; }
};

// Stable sort/persistence key. Total order, unique per distinct triple.
std::string triple_key(const Triple& t);

// Label function ℓ: id → display string. Shared by entities and properties
// (Wikidata-style ids do not collide across the two namespaces).
using LabelMap = std::unordered_map<std::string, std::string>;

struct SubGraph {
    std::vector<Triple> triples;  // sorted by triple_key, no duplicates
    LabelMap labels;

    size_t size() const { return triples.size(); }
    bool empty() const { return triples.empty(); }
};

class IngestError : public std::runtime_error {
public:
    IngestError(size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what),
          line_(line) {}
    size_t line() const { return line_; }

private:
    size_t line_;
};

// Immutable after ingest; concurrent readers are safe.
class SubGraphStore {
public:
    static SubGraphStore from_jsonl(std::istream& in);
    static SubGraphStore from_file(const std::string& path);

    size_t triple_count() const { return total_; }
    const LabelMap& labels() const { return labels_; }

    std::optional<std::string> label(const std::string& id) const;

    // All stored triples whose head is in `entities`. Unknown heads are
    // skipped; the skip count is reported through `missing` when non-null.
    SubGraph one_hop(const std::set<EntityId>& entities,
                     size_t* missing = nullptr) const;

    const std::vector<Triple>* triples_of(const EntityId& head) const;

private:
    std::unordered_map<EntityId, std::vector<Triple>> by_head_;
    LabelMap labels_;
    size_t total_ = 0;
};

// Removes attribute triples whose literal datatype is excluded. Relational
// triples pass through.
SubGraph filter_attributes(const SubGraph& g,
                           const std::set<std::string>& excluded_datatypes);

// Default exclusion set for noisy datatypes; callers can pass their own.
const std::set<std::string>& default_excluded_datatypes();

// Writes the store back as kb.jsonl records (one per distinct triple).
void write_kb_jsonl(const SubGraph& g, std::ostream& out);

}  // namespace tablekb
