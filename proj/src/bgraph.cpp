// Copyright (c) mvbc contributors.
// SPDX-License-Identifier: Apache-2.0

#include "mvbc/bgraph.hpp"

#include <cassert>
#include <sstream>
#include <stdexcept>

namespace mvbc {

std::string Position::str() const {
    std::ostringstream os;
    switch (kind) {
    case Kind::Local: os << "Pi(" << frame << "," << index << ")"; break;
    case Kind::Stack: os << "Omega(" << index << ")"; break;
    case Kind::Global: os << "l_" << global.str(); break;
    }
    return os.str();
}

std::string BorrowEdge::str() const {
    std::string lbl;
    for (size_t i = 0; i < label.segments.size(); ++i) {
        if (i) lbl += '.';
        lbl += label.segments[i];
    }
    if (label.extensible)
        lbl += '*';
    return src.str() + " -[" + lbl + "]-> " + dst.str();
}

bool edge_subsumes(const BorrowEdge& specific, const BorrowEdge& general) {
    if (specific.src != general.src || specific.dst != general.dst)
        return false;
    if (specific.label == general.label)
        return true;
    if (!general.label.extensible)
        return false;
    // general = r*, specific = p with r a prefix of p's segments.
    const auto& r = general.label.segments;
    const auto& p = specific.label.segments;
    if (r.size() > p.size())
        return false;
    return std::equal(r.begin(), r.end(), p.begin());
}

BorrowGraph BorrowGraph::add(Position src, Path label, Position dst) const {
    std::set<BorrowEdge> out = edges_;
    out.insert(BorrowEdge{std::move(src), std::move(label), std::move(dst)});
    return BorrowGraph(std::move(out));
}

BorrowGraph BorrowGraph::rename(const std::map<Position, Position>& mapping) const {
    // Injectivity keeps distinct positions distinct after the rename.
    std::set<Position> images;
    for (const auto& [from, to] : mapping) {
        (void)from;
        if (!images.insert(to).second)
            throw std::invalid_argument("rename mapping is not injective");
    }
    auto map_pos = [&](const Position& p) {
        auto it = mapping.find(p);
        return it == mapping.end() ? p : it->second;
    };
    std::set<BorrowEdge> out;
    for (const auto& e : edges_)
        out.insert(BorrowEdge{map_pos(e.src), e.label, map_pos(e.dst)});
    return BorrowGraph(std::move(out));
}

bool BorrowGraph::touches(const Position& p) const {
    for (const auto& e : edges_)
        if (e.src == p || e.dst == p)
            return true;
    return false;
}

BorrowGraph BorrowGraph::factor(const Position& u, const Position& v) const {
    if (touches(v))
        throw std::invalid_argument("factor target has incident edges");
    std::set<BorrowEdge> out;
    for (const auto& e : edges_) {
        if (e.src == u)
            out.insert(BorrowEdge{v, e.label, e.dst});
        else
            out.insert(e);
    }
    out.insert(BorrowEdge{u, Path::eps(), v});
    return BorrowGraph(std::move(out));
}

std::optional<BorrowGraph> BorrowGraph::factor_field(const std::string& f, const Position& u,
                                                     const Position& v) const {
    if (touches(v))
        throw std::invalid_argument("factor_field target has incident edges");
    std::set<BorrowEdge> out;
    for (const auto& e : edges_) {
        if (e.src != u) {
            out.insert(e);
            continue;
        }
        if (e.label.segments.empty())
            return std::nullopt; // out-edge labeled eps or bare *
        if (e.label.segments.front() == f) {
            Path stripped{{e.label.segments.begin() + 1, e.label.segments.end()},
                          e.label.extensible};
            out.insert(BorrowEdge{v, std::move(stripped), e.dst});
        } else {
            out.insert(e);
        }
    }
    out.insert(BorrowEdge{u, Path::field(f), v});
    return BorrowGraph(std::move(out));
}

BorrowGraph BorrowGraph::extend_star(const std::set<Position>& us,
                                     const std::set<Position>& vs) const {
    for (const auto& v : vs)
        if (touches(v))
            throw std::invalid_argument("extend_star target has incident edges");
    std::set<BorrowEdge> out = edges_;
    for (const auto& u : us)
        for (const auto& v : vs)
            out.insert(BorrowEdge{u, Path::star(), v});
    return BorrowGraph(std::move(out));
}

BorrowGraph BorrowGraph::elim(const Position& u) const {
    std::set<BorrowEdge> out;
    std::vector<const BorrowEdge*> in_edges, out_edges;
    for (const auto& e : edges_) {
        if (e.dst == u && e.src != u)
            in_edges.push_back(&e);
        else if (e.src == u && e.dst != u)
            out_edges.push_back(&e);
        else if (e.src != u && e.dst != u)
            out.insert(e);
        // Self-loops on u (only possible in malformed graphs) just vanish.
    }
    for (const auto* in : in_edges)
        for (const auto* oe : out_edges)
            out.insert(BorrowEdge{in->src, path_concat(in->label, oe->label), oe->dst});
    return BorrowGraph(std::move(out));
}

BorrowGraph BorrowGraph::elim_all(const std::set<Position>& us) const {
    BorrowGraph g = *this;
    for (const auto& u : us)
        g = g.elim(u);
    return g;
}

bool BorrowGraph::unborrowed(const Position& u) const {
    for (const auto& e : edges_)
        if (e.src == u)
            return false;
    return true;
}

std::set<Position> BorrowGraph::borrowed_targets(const Position& u) const {
    std::set<Position> out;
    for (const auto& e : edges_)
        if (e.src == u)
            out.insert(e.dst);
    return out;
}

BorrowGraph BorrowGraph::widen_paths(size_t max_len) const {
    assert(max_len >= 1);
    std::set<BorrowEdge> out;
    for (const auto& e : edges_) {
        if (e.label.segments.size() <= max_len) {
            out.insert(e);
            continue;
        }
        Path widened{{e.label.segments.begin(),
                      e.label.segments.begin() + static_cast<ptrdiff_t>(max_len)},
                     true};
        out.insert(BorrowEdge{e.src, std::move(widened), e.dst});
    }
    return BorrowGraph(std::move(out));
}

bool BorrowGraph::has_cycle() const {
    std::map<Position, std::vector<Position>> succ;
    std::set<Position> nodes;
    for (const auto& e : edges_) {
        succ[e.src].push_back(e.dst);
        nodes.insert(e.src);
        nodes.insert(e.dst);
    }
    std::map<Position, int> state; // 0 fresh, 1 on stack, 2 done
    auto visit = [&](auto&& self, const Position& n) -> bool {
        int& st = state[n];
        if (st == 2) return false;
        if (st == 1) return true;
        st = 1;
        auto it = succ.find(n);
        if (it != succ.end())
            for (const auto& m : it->second)
                if (self(self, m))
                    return true;
        st = 2;
        return false;
    };
    for (const auto& n : nodes)
        if (visit(visit, n))
            return true;
    return false;
}

std::string BorrowGraph::dump() const {
    std::string out;
    for (const auto& e : edges_) {
        out += e.str();
        out += '\n';
    }
    return out;
}

bool graph_leq(const BorrowGraph& g, const BorrowGraph& h) {
    for (const auto& e : g.edges()) {
        bool covered = false;
        for (const auto& cand : h.edges()) {
            if (edge_subsumes(e, cand)) {
                covered = true;
                break;
            }
        }
        if (!covered)
            return false;
    }
    return true;
}

std::variant<BorrowGraph, CycleError> graph_join(const BorrowGraph& g, const BorrowGraph& h) {
    std::set<BorrowEdge> all = g.edges();
    all.insert(h.edges().begin(), h.edges().end());
    std::set<BorrowEdge> kept;
    for (const auto& e : all) {
        bool subsumed = false;
        for (const auto& other : all) {
            if (other != e && edge_subsumes(e, other)) {
                subsumed = true;
                break;
            }
        }
        if (!subsumed)
            kept.insert(e);
    }
    BorrowGraph joined(std::move(kept));
    if (joined.has_cycle())
        return CycleError{};
    return joined;
}

} // namespace mvbc
