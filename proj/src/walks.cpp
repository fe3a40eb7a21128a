#include "cadsi/walks.hpp"

#include <algorithm>

#include "cadsi/common.hpp"

namespace cadsi {

std::size_t WalkCorpus::walk_count() const {
    std::size_t n = 0;
    for (const auto& [type, walks] : by_start_type) n += walks.size();
    return n;
}

StepDistribution next_step_distribution(const Hin& hin, NodeId current, TypeId required) {
    StepDistribution d;
    d.support = hin.neighbors(current, required);
    if (!d.support.empty()) d.probability = 1.0 / static_cast<double>(d.support.size());
    return d;
}

bool sample_next_step(const Hin& hin, NodeId current, TypeId required, Rng& rng, NodeId& next) {
    const auto nb = hin.neighbors(current, required);
    if (nb.empty()) return false;
    next = nb[rng.index(nb.size())];
    return true;
}

TypeId metapath_type_at(const MetaPath& path, std::size_t position) {
    if (position < path.types.size()) return path.types[position];
    if (!path.symmetric()) throw Error(ErrorCode::invalid_argument, "position past the end of " + path.name);
    return path.types[position % (path.types.size() - 1)];
}

std::size_t max_walk_nodes(const MetaPath& path, const WalkConfig& cfg) {
    return path.symmetric() ? cfg.walk_length : std::min(cfg.walk_length, path.types.size());
}

Walk generate_walk(const Hin& hin, NodeId start, const MetaPath& path, std::size_t path_index,
                   const WalkConfig& cfg, Rng& rng) {
    if (path.types.empty() || hin.type_of(start) != path.types.front())
        throw Error(ErrorCode::invalid_argument,
                    "walk start " + hin.id_of(start) + " does not match the first type of " + path.name);
    Walk walk{path_index, {start}};
    const std::size_t limit = max_walk_nodes(path, cfg);
    walk.nodes.reserve(limit);
    NodeId current = start;
    for (std::size_t pos = 1; pos < limit; ++pos) {
        NodeId next = 0;
        if (!sample_next_step(hin, current, metapath_type_at(path, pos), rng, next)) break;
        walk.nodes.push_back(next);
        current = next;
    }
    return walk;
}

WalkCorpus generate_corpus(const Hin& hin, std::span<const MetaPath> paths, const WalkConfig& cfg,
                           unsigned threads) {
    if (cfg.walks_per_node == 0) throw Error(ErrorCode::invalid_argument, "walks_per_node must be >= 1");
    WalkCorpus corpus;
    corpus.paths.assign(paths.begin(), paths.end());
    for (std::size_t p = 0; p < paths.size(); ++p) {
        const auto& path = paths[p];
        if (path.types.size() < 2) throw Error(ErrorCode::invalid_argument, "meta path too short: " + path.name);
        if (cfg.walk_length < path.types.size())
            throw Error(ErrorCode::invalid_argument, "walk_length shorter than meta path " + path.name);
        const auto starts = hin.nodes_of_type(path.types.front());
        std::vector<std::vector<Walk>> per_start(starts.size());
        parallel_for(starts.size(), threads, [&](std::size_t s) {
            auto& out = per_start[s];
            out.reserve(cfg.walks_per_node);
            for (std::size_t w = 0; w < cfg.walks_per_node; ++w) {
                Rng rng = Rng::keyed({cfg.seed, starts[s], p, w});
                out.push_back(generate_walk(hin, starts[s], path, p, cfg, rng));
            }
        });
        auto& bucket = corpus.by_start_type[path.types.front()];
        for (auto& group : per_start)
            for (auto& walk : group) bucket.push_back(std::move(walk));
    }
    return corpus;
}

std::vector<MetaPath> with_aspect_rotations(const Schema& schema, std::span<const MetaPath> paths, TypeId user,
                                           TypeId item) {
    std::vector<MetaPath> out(paths.begin(), paths.end());
    for (const auto& p : paths) {
        if (p.types.size() != 3 || !p.symmetric() || p.types[0] != item) continue;
        const TypeId aspect = p.types[1];
        if (aspect == user || aspect == item) continue;
        const std::vector<TypeId> rotated{aspect, item, aspect};
        const bool present = std::any_of(out.begin(), out.end(), [&](const MetaPath& q) { return q.types == rotated; });
        if (present) continue;
        const std::string item_name = schema.type_name(item);
        const std::string aspect_name = schema.type_name(aspect);
        out.push_back({aspect_name + item_name + aspect_name, rotated});
    }
    return out;
}

std::string serialize_corpus(const WalkCorpus& corpus, const Hin& hin) {
    std::string out;
    for (const auto& [type, walks] : corpus.by_start_type) {
        for (const auto& w : walks) {
            out += corpus.paths[w.path].name;
            for (NodeId v : w.nodes) {
                out += ' ';
                out += hin.id_of(v);
            }
            out += '\n';
        }
    }
    return out;
}

}  // namespace cadsi
