#pragma once

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dagsynth/dag.hpp"

namespace dagsynth {

inline Dag dag_from_json(const nlohmann::json& j) {
    Dag d;
    if (!j.is_object() || !j.contains("nodes") || !j["nodes"].is_array())
        throw ValidationError("DAG JSON must be an object with a \"nodes\" array");
    for (const auto& n : j["nodes"]) {
        if (!n.is_string()) throw ValidationError("DAG JSON: node names must be strings");
        d.add_node(n.get<std::string>());
    }
    if (j.contains("edges")) {
        for (const auto& e : j["edges"]) {
            if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string())
                throw ValidationError("DAG JSON: edges must be [from, to] string pairs");
            // endpoints must already be declared; add_edge would silently create them
            std::string u = e[0].get<std::string>(), v = e[1].get<std::string>();
            if (!d.has_node(u) || !d.has_node(v))
                throw ValidationError("DAG JSON: edge " + u + " -> " + v + " references undeclared node");
            if (!d.has_edge(u, v)) d.edges.emplace_back(u, v);
        }
    }
    return d;
}

inline nlohmann::json dag_to_json(const Dag& d) {
    nlohmann::json j;
    j["nodes"] = d.nodes;
    auto edges = nlohmann::json::array();
    for (const auto& [u, v] : d.edges) edges.push_back({u, v});
    j["edges"] = edges;
    return j;
}

// DOT subset: `digraph name? { a -> b; c; }` with bare or double-quoted
// identifiers, `//` comments, optional semicolons and chained `a -> b -> c`.
inline Dag dag_from_dot(const std::string& text) {
    std::vector<std::string> tokens;
    std::size_t i = 0, n = text.size();
    while (i < n) {
        char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) { ++i; continue; }
        if (c == '/' && i + 1 < n && text[i + 1] == '/') {
            while (i < n && text[i] != '\n') ++i;
            continue;
        }
        if (c == '{' || c == '}' || c == ';') { tokens.emplace_back(1, c); ++i; continue; }
        if (c == '-' && i + 1 < n && text[i + 1] == '>') { tokens.emplace_back("->"); i += 2; continue; }
        if (c == '"') {
            std::size_t j = text.find('"', i + 1);
            if (j == std::string::npos) throw ValidationError("DOT: unterminated quoted name");
            tokens.push_back(text.substr(i + 1, j - i - 1));
            i = j + 1;
            continue;
        }
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
            std::size_t j = i;
            while (j < n && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_' || text[j] == '.'))
                ++j;
            tokens.push_back(text.substr(i, j - i));
            i = j;
            continue;
        }
        throw ValidationError(std::string("DOT: unexpected character '") + c + "'");
    }

    std::size_t t = 0;
    auto expect = [&](const std::string& s) {
        if (t >= tokens.size() || tokens[t] != s) throw ValidationError("DOT: expected '" + s + "'");
        ++t;
    };
    if (t < tokens.size() && (tokens[t] == "digraph")) ++t;
    else throw ValidationError("DOT: expected 'digraph'");
    if (t < tokens.size() && tokens[t] != "{") ++t;  // optional graph name
    expect("{");

    Dag d;
    while (t < tokens.size() && tokens[t] != "}") {
        if (tokens[t] == ";") { ++t; continue; }
        std::string cur = tokens[t++];
        if (cur == "->" || cur == "{") throw ValidationError("DOT: expected node name");
        d.add_node(cur);
        while (t < tokens.size() && tokens[t] == "->") {
            ++t;
            if (t >= tokens.size() || tokens[t] == ";" || tokens[t] == "}")
                throw ValidationError("DOT: dangling '->'");
            std::string nxt = tokens[t++];
            d.add_edge(cur, nxt);
            cur = nxt;
        }
    }
    expect("}");
    return d;
}

inline std::string dag_to_dot(const Dag& d) {
    std::ostringstream os;
    os << "digraph g {\n";
    std::set<std::string> with_edges;
    for (const auto& [u, v] : d.edges) {
        os << "  \"" << u << "\" -> \"" << v << "\";\n";
        with_edges.insert(u);
        with_edges.insert(v);
    }
    for (const auto& n : d.nodes)
        if (!with_edges.count(n)) os << "  \"" << n << "\";\n";
    os << "}\n";
    return os.str();
}

// Dispatch on content: JSON starts with '{', everything else goes to DOT.
inline Dag load_dag_text(const std::string& text) {
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) continue;
        if (c == '{') return dag_from_json(nlohmann::json::parse(text));
        break;
    }
    return dag_from_dot(text);
}

inline Dag load_dag_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open DAG file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_dag_text(ss.str());
}

inline void save_dag_file(const Dag& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write DAG file: " + path);
    if (path.size() > 4 && path.substr(path.size() - 4) == ".dot") out << dag_to_dot(d);
    else out << dag_to_json(d).dump(2) << "\n";
}

}  // namespace dagsynth
