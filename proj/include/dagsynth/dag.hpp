#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dagsynth/tensor.hpp"

namespace dagsynth {

// Directed acyclic graph over variable names. Disconnected sub-graphs and
// isolated nodes are legal; isolated nodes act as sources.
struct Dag {
    std::vector<std::string> nodes;                          // insertion order kept for output
    std::vector<std::pair<std::string, std::string>> edges;  // (from, to)

    bool has_node(const std::string& n) const {
        return std::find(nodes.begin(), nodes.end(), n) != nodes.end();
    }
    bool has_edge(const std::string& u, const std::string& v) const {
        return std::find(edges.begin(), edges.end(), std::make_pair(u, v)) != edges.end();
    }
    void add_node(const std::string& n) {
        if (!has_node(n)) nodes.push_back(n);
    }
    void add_edge(const std::string& u, const std::string& v) {
        add_node(u);
        add_node(v);
        if (!has_edge(u, v)) edges.emplace_back(u, v);
    }
};

struct DagViolation {
    std::string kind;  // cycle | self_loop | missing_node | unknown_node | dangling_edge
    std::string detail;
};

struct DerivedSets {
    // keyed by node name
    std::map<std::string, std::set<std::string>> ancestors;          // A(V_t)
    std::map<std::string, std::set<std::string>> direct_ancestors;   // D(V_t)
    std::map<std::string, std::set<std::string>> sources;            // S(V_t)
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> in_edges;  // E(V_t)
};

namespace detail {

inline std::map<std::string, std::vector<std::string>> children_of(const Dag& d) {
    std::map<std::string, std::vector<std::string>> ch;
    for (const auto& n : d.nodes) ch[n];
    for (const auto& [u, v] : d.edges) ch[u].push_back(v);
    return ch;
}

inline std::map<std::string, std::vector<std::string>> parents_of(const Dag& d) {
    std::map<std::string, std::vector<std::string>> pa;
    for (const auto& n : d.nodes) pa[n];
    for (const auto& [u, v] : d.edges) pa[v].push_back(u);
    return pa;
}

// Kahn count of emittable nodes; anything left over sits on a cycle.
inline bool is_acyclic(const Dag& d) {
    auto pa = parents_of(d);
    std::map<std::string, int> indeg;
    for (const auto& [n, ps] : pa) indeg[n] = static_cast<int>(ps.size());
    auto ch = children_of(d);
    std::vector<std::string> ready;
    for (const auto& [n, k] : indeg)
        if (k == 0) ready.push_back(n);
    std::size_t emitted = 0;
    while (!ready.empty()) {
        std::string n = ready.back();
        ready.pop_back();
        ++emitted;
        for (const auto& c : ch[n])
            if (--indeg[c] == 0) ready.push_back(c);
    }
    return emitted == d.nodes.size();
}

// DFS back-edge search; returns one directed cycle as a closed node path
// (first == last), or empty when the graph is acyclic. Diagnostics want the
// offending nodes named, not just a yes/no.
inline std::vector<std::string> find_cycle(const Dag& d) {
    auto ch = children_of(d);
    std::map<std::string, int> state;  // 0 unseen, 1 on stack, 2 finished
    std::vector<std::string> stack, cycle;
    std::function<bool(const std::string&)> dfs = [&](const std::string& n) -> bool {
        state[n] = 1;
        stack.push_back(n);
        for (const auto& c : ch[n]) {
            if (state[c] == 1) {
                cycle.assign(std::find(stack.begin(), stack.end(), c), stack.end());
                cycle.push_back(c);
                return true;
            }
            if (state[c] == 0 && dfs(c)) return true;
        }
        stack.pop_back();
        state[n] = 2;
        return false;
    };
    for (const auto& n : d.nodes)
        if (state[n] == 0 && dfs(n)) return cycle;
    return {};
}

}  // namespace detail

// Structural checks plus the table/graph name correspondence. Returns the
// violation list instead of raising so callers can report all problems.
inline std::vector<DagViolation> validate(const Dag& d, const std::vector<std::string>& columns) {
    std::vector<DagViolation> out;
    std::set<std::string> node_set(d.nodes.begin(), d.nodes.end());
    if (node_set.size() != d.nodes.size())
        out.push_back({"duplicate_node", "node list contains duplicates"});
    for (const auto& [u, v] : d.edges) {
        if (u == v) out.push_back({"self_loop", u + " -> " + u});
        if (!node_set.count(u)) out.push_back({"dangling_edge", u + " -> " + v + " (unknown " + u + ")"});
        if (!node_set.count(v)) out.push_back({"dangling_edge", u + " -> " + v + " (unknown " + v + ")"});
    }
    std::set<std::string> col_set(columns.begin(), columns.end());
    for (const auto& c : columns)
        if (!node_set.count(c)) out.push_back({"missing_node", "column " + c + " absent from graph"});
    for (const auto& n : d.nodes)
        if (!col_set.count(n)) out.push_back({"unknown_node", "node " + n + " absent from table"});
    bool structurally_sound = true;
    for (const auto& v : out)
        if (v.kind == "self_loop" || v.kind == "dangling_edge") structurally_sound = false;
    if (structurally_sound) {
        std::vector<std::string> cyc = detail::find_cycle(d);
        if (!cyc.empty()) {
            std::string path = cyc[0];
            for (std::size_t i = 1; i < cyc.size(); ++i) path += " -> " + cyc[i];
            out.push_back({"cycle", path});
        }
    }
    return out;
}

inline void validate_or_throw(const Dag& d, const std::vector<std::string>& columns) {
    auto v = validate(d, columns);
    if (v.empty()) return;
    std::string msg = "invalid DAG:";
    for (const auto& x : v) msg += " [" + x.kind + "] " + x.detail + ";";
    throw ValidationError(msg);
}

inline DerivedSets derive_sets(const Dag& d) {
    DerivedSets s;
    auto pa = detail::parents_of(d);
    for (const auto& n : d.nodes) {
        s.direct_ancestors[n] = std::set<std::string>(pa[n].begin(), pa[n].end());
        s.in_edges[n] = {};
        s.ancestors[n] = {};
        s.sources[n] = {};
    }
    for (const auto& e : d.edges) s.in_edges[e.second].push_back(e);
    // ancestors: reverse DFS from each node
    for (const auto& n : d.nodes) {
        std::vector<std::string> stack(pa[n].begin(), pa[n].end());
        auto& anc = s.ancestors[n];
        while (!stack.empty()) {
            std::string cur = stack.back();
            stack.pop_back();
            if (anc.insert(cur).second)
                for (const auto& p : pa[cur]) stack.push_back(p);
        }
    }
    for (const auto& n : d.nodes)
        for (const auto& a : s.ancestors[n])
            if (pa[a].empty()) s.sources[n].insert(a);
    return s;
}

// Construction order. Nodes become ready once every direct ancestor has been
// emitted; ready nodes are emitted wave by wave, each wave sorted by the
// dataset column order so the result is deterministic.
inline std::vector<std::string> topo_order(const Dag& d, const std::vector<std::string>& column_order) {
    std::map<std::string, std::size_t> rank;
    for (std::size_t i = 0; i < column_order.size(); ++i) rank[column_order[i]] = i;
    for (const auto& n : d.nodes)
        if (!rank.count(n)) rank[n] = column_order.size() + rank.size();

    auto pa = detail::parents_of(d);
    std::set<std::string> treated;
    std::vector<std::string> order;
    while (order.size() < d.nodes.size()) {
        std::vector<std::string> wave;
        for (const auto& n : d.nodes) {
            if (treated.count(n)) continue;
            bool ready = true;
            for (const auto& p : pa[n])
                if (!treated.count(p)) { ready = false; break; }
            if (ready) wave.push_back(n);
        }
        if (wave.empty()) throw ValidationError("topo_order: graph contains a directed cycle");
        std::sort(wave.begin(), wave.end(),
                  [&rank](const std::string& a, const std::string& b) { return rank[a] < rank[b]; });
        for (const auto& n : wave) {
            treated.insert(n);
            order.push_back(n);
        }
    }
    return order;
}

// Remove every edge (u,v) for which another u -> ... -> v path exists. The
// reachability relation is unchanged; on DAGs the result is unique.
inline Dag transitive_reduction(const Dag& d) {
    auto ch = detail::children_of(d);
    auto reachable_from = [&](const std::string& start, const std::string& skip_edge_to) {
        // nodes reachable from start, never using the direct edge start->skip_edge_to
        std::set<std::string> seen;
        std::vector<std::string> stack;
        for (const auto& c : ch[start])
            if (!(c == skip_edge_to)) stack.push_back(c);
        while (!stack.empty()) {
            std::string cur = stack.back();
            stack.pop_back();
            if (!seen.insert(cur).second) continue;
            for (const auto& c : ch[cur]) stack.push_back(c);
        }
        return seen;
    };
    Dag out;
    out.nodes = d.nodes;
    for (const auto& [u, v] : d.edges) {
        auto seen = reachable_from(u, v);
        if (!seen.count(v)) out.edges.emplace_back(u, v);
    }
    return out;
}

enum class DagVariant { full, trans_red, linear, prediction, no_links };

inline DagVariant parse_variant(const std::string& s) {
    if (s == "full") return DagVariant::full;
    if (s == "trans_red") return DagVariant::trans_red;
    if (s == "linear") return DagVariant::linear;
    if (s == "prediction") return DagVariant::prediction;
    if (s == "no_links") return DagVariant::no_links;
    throw ValidationError("unknown DAG variant: " + s);
}

inline Dag make_variant(const Dag& d, DagVariant kind, const std::vector<std::string>& column_order,
                        const std::string& sink = "") {
    Dag out;
    switch (kind) {
        case DagVariant::full:
            return d;
        case DagVariant::trans_red:
            return transitive_reduction(d);
        case DagVariant::linear:
            out.nodes = column_order;
            for (std::size_t i = 0; i + 1 < column_order.size(); ++i)
                out.edges.emplace_back(column_order[i], column_order[i + 1]);
            return out;
        case DagVariant::prediction: {
            if (std::find(column_order.begin(), column_order.end(), sink) == column_order.end())
                throw ValidationError("prediction variant: unknown sink " + sink);
            out.nodes = column_order;
            for (const auto& c : column_order)
                if (c != sink) out.edges.emplace_back(c, sink);
            return out;
        }
        case DagVariant::no_links:
            out.nodes = column_order;
            return out;
    }
    throw ValidationError("unreachable variant kind");
}

}  // namespace dagsynth
