#pragma once
// Deterministic flattening of triples and tables into the text sequences
// consumed by scorers and the reasoner.

#include <string>
#include <vector>

#include "tablekb/kb.hpp"
#include "tablekb/table.hpp"

namespace tablekb {

// "[HEAD] {label} [REL] {label} [TAIL] {label or literal text}".
// Throws std::runtime_error naming the id if a label is unresolvable.
std::string serialize_triple(const Triple& tr, const LabelMap& labels);

// "col : h1 | h2 row 1 : c11 | c12 row 2 : ..." with 1-based row indices.
// Cell text only; links are dropped.
std::string serialize_table(const Table& t);

// serialize_table(sub) ⊕ serialize_triple(tr), single-space join.
std::string build_retrieval_context(const Table& sub, const Triple& tr,
                                    const LabelMap& labels);

// q ⊕ T* ⊕ t*_1 ⊕ ... ⊕ t*_k, triples in the given (descending-score) order.
std::string build_reasoner_input(const std::string& question, const Table& t,
                                 const std::vector<Triple>& triples,
                                 const LabelMap& labels);

}  // namespace tablekb
