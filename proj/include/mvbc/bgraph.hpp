// Copyright (c) mvbc contributors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MVBC_BGRAPH_HPP
#define MVBC_BGRAPH_HPP

#include "mvbc/ir.hpp"

#include <map>
#include <set>
#include <variant>

namespace mvbc {

/// An abstract position: a local variable in a call frame, an operand
/// stack slot, or the pseudo-location abstracting every global cell
/// keyed by one record type. Frames and stack slots count up from the
/// bottom of their stacks.
struct Position {
    enum class Kind : uint8_t { Local, Stack, Global } kind = Kind::Stack;
    uint32_t frame = 0; // Local only
    uint32_t index = 0; // Local and Stack
    QualifiedName global; // Global only

    static Position local(uint32_t frame, uint32_t index) {
        return Position{Kind::Local, frame, index, {}};
    }
    static Position stack(uint32_t index) { return Position{Kind::Stack, 0, index, {}}; }
    static Position global_node(QualifiedName record) {
        return Position{Kind::Global, 0, 0, std::move(record)};
    }

    auto operator<=>(const Position&) const = default;
    std::string str() const;
};

/// Borrow(src, label, dst): the value reachable from src along `label`
/// (or along some extension of it, when the label is extensible) is
/// borrowed by the reference at dst.
struct BorrowEdge {
    Position src;
    Path label;
    Position dst;

    auto operator<=>(const BorrowEdge&) const = default;
    std::string str() const;
};

/// Does `general` subsume `specific`? Requires matching endpoints and
/// either equal labels, or a general label r* whose r prefixes the
/// specific label.
bool edge_subsumes(const BorrowEdge& specific, const BorrowEdge& general);

struct CycleError {
    std::vector<Position> cycle;
};

/// A deduplicated, deterministically ordered set of borrow edges. All
/// operations are pure; graphs are cheap value types at the scale the
/// checker works with.
class BorrowGraph {
public:
    BorrowGraph() = default;
    explicit BorrowGraph(std::set<BorrowEdge> edges) : edges_(std::move(edges)) {}

    const std::set<BorrowEdge>& edges() const { return edges_; }
    bool empty() const { return edges_.empty(); }
    size_t size() const { return edges_.size(); }
    bool contains(const BorrowEdge& e) const { return edges_.count(e) > 0; }

    bool operator==(const BorrowGraph&) const = default;

    /// Adds one edge (no-op when already present).
    BorrowGraph add(Position src, Path label, Position dst) const;

    /// Replaces every edge endpoint found in `mapping`. The mapping must
    /// be injective.
    BorrowGraph rename(const std::map<Position, Position>& mapping) const;

    /// Redirects the out-edges of u to leave v instead and records the
    /// transfer with a new Borrow(u, eps, v). v must have no incident
    /// edges.
    BorrowGraph factor(const Position& u, const Position& v) const;

    /// Field-indexed variant of factor: moves the f-prefixed out-edges of
    /// u to v (with f stripped) and adds Borrow(u, f, v). Fails when u
    /// has an out-edge labeled eps or bare *. v must have no incident
    /// edges.
    std::optional<BorrowGraph> factor_field(const std::string& f, const Position& u,
                                            const Position& v) const;

    /// Adds Borrow(u, *, v) for the full cross product. No edges may be
    /// incident on any v beforehand.
    BorrowGraph extend_star(const std::set<Position>& us, const std::set<Position>& vs) const;

    /// Removes u, splicing every in/out edge pair through concatenated
    /// labels so transitive borrow relationships survive.
    BorrowGraph elim(const Position& u) const;

    /// Eliminates a set of positions one at a time in ascending order.
    BorrowGraph elim_all(const std::set<Position>& us) const;

    /// True when u has no outgoing borrow edges.
    bool unborrowed(const Position& u) const;

    /// All destinations of out-edges of u, regardless of label.
    std::set<Position> borrowed_targets(const Position& u) const;

    /// True when the graph has any position incident to an edge equal to p.
    bool touches(const Position& p) const;

    /// Replaces every label longer than max_len fixed segments by its
    /// truncated extensible generalization; the result subsumes the input.
    BorrowGraph widen_paths(size_t max_len) const;

    bool has_cycle() const;

    /// One edge per line, `src -[label]-> dst`.
    std::string dump() const;

private:
    std::set<BorrowEdge> edges_;
};

/// Pointwise subsumption order: every edge of g is subsumed by some edge
/// of h.
bool graph_leq(const BorrowGraph& g, const BorrowGraph& h);

/// Union followed by subsumption pruning; fails when the pruned union
/// contains a directed cycle.
std::variant<BorrowGraph, CycleError> graph_join(const BorrowGraph& g, const BorrowGraph& h);

} // namespace mvbc

#endif
