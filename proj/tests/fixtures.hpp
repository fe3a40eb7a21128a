#pragma once

#include <filesystem>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "cadsi/common.hpp"
#include "cadsi/hin.hpp"

namespace cadsi::testing {

inline Schema movie_schema() {
    return Schema::parse(
        "nodetype U\n"
        "nodetype M\n"
        "nodetype A\n"
        "edgekind watch U M\n"
        "edgekind acted M A\n");
}

/// Builds a graph from "<type> <id>" node specs and "<id> <id> <kind>" edges.
inline Hin make_hin(const Schema& schema, const std::vector<std::pair<std::string, std::string>>& nodes,
                    const std::vector<std::tuple<std::string, std::string, std::string>>& edges) {
    std::vector<Hin::NodeRecord> records;
    for (const auto& [type, id] : nodes) records.push_back({schema.type(type), id});
    auto index = [&](const std::string& id) {
        for (NodeId v = 0; v < records.size(); ++v)
            if (records[v].id == id) return v;
        throw Error(ErrorCode::unknown_node, id);
    };
    std::vector<Hin::RawEdge> raw;
    for (const auto& [a, b, kind] : edges) raw.push_back({index(a), index(b), *schema.find_kind(kind)});
    return Hin(schema, std::move(records), std::move(raw));
}

/// Complete bipartite user-movie graph with `actors` actors each attached to every movie.
inline Hin complete_graph(std::size_t users, std::size_t movies, std::size_t actors) {
    const Schema schema = movie_schema();
    std::vector<std::pair<std::string, std::string>> nodes;
    std::vector<std::tuple<std::string, std::string, std::string>> edges;
    for (std::size_t u = 0; u < users; ++u) nodes.emplace_back("U", "u" + std::to_string(u));
    for (std::size_t m = 0; m < movies; ++m) nodes.emplace_back("M", "m" + std::to_string(m));
    for (std::size_t a = 0; a < actors; ++a) nodes.emplace_back("A", "a" + std::to_string(a));
    for (std::size_t u = 0; u < users; ++u)
        for (std::size_t m = 0; m < movies; ++m)
            edges.emplace_back("u" + std::to_string(u), "m" + std::to_string(m), "watch");
    for (std::size_t m = 0; m < movies; ++m)
        for (std::size_t a = 0; a < actors; ++a)
            edges.emplace_back("m" + std::to_string(m), "a" + std::to_string(a), "acted");
    return make_hin(schema, nodes, edges);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("cadsi_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace cadsi::testing
