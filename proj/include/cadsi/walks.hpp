#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cadsi/hin.hpp"
#include "cadsi/rng.hpp"

namespace cadsi {

struct WalkConfig {
    std::size_t walks_per_node = 10;
    /// Nodes per walk, spanning repeated traversals of a symmetric path.
    std::size_t walk_length = 21;
    std::uint64_t seed = 0;
};

struct Walk {
    std::size_t path;  // index into WalkCorpus::paths
    std::vector<NodeId> nodes;
};

struct WalkCorpus {
    std::vector<MetaPath> paths;
    /// Walks filed under the type of their start node: n(U), n(I), n(A).
    std::map<TypeId, std::vector<Walk>> by_start_type;

    std::size_t walk_count() const;
};

/// Uniform next-step law over the neighbours of `current` with the required
/// type. An empty support means the walk is at a dead end.
struct StepDistribution {
    std::span<const NodeId> support;
    double probability = 0.0;  // mass on each support node
};

StepDistribution next_step_distribution(const Hin& hin, NodeId current, TypeId required);

/// Draws one step from next_step_distribution. Returns false at a dead end.
bool sample_next_step(const Hin& hin, NodeId current, TypeId required, Rng& rng, NodeId& next);

/// Node type expected at `position` of a walk following `path`.
TypeId metapath_type_at(const MetaPath& path, std::size_t position);
/// Maximum number of nodes a walk on `path` may have under `cfg`.
std::size_t max_walk_nodes(const MetaPath& path, const WalkConfig& cfg);

Walk generate_walk(const Hin& hin, NodeId start, const MetaPath& path, std::size_t path_index,
                   const WalkConfig& cfg, Rng& rng);

/// walks_per_node walks for every (start node, path); the stream for each
/// walk is keyed by (seed, node, path, walk index).
WalkCorpus generate_corpus(const Hin& hin, std::span<const MetaPath> paths, const WalkConfig& cfg,
                           unsigned threads = 1);

/// Adds aspect-start paths by rotating item-start three-type palindromes
/// (I A I -> A I A) when not already present.
std::vector<MetaPath> with_aspect_rotations(const Schema& schema, std::span<const MetaPath> paths, TypeId user,
                                           TypeId item);

/// One walk per line: "<path name> <id> <id> ...".
std::string serialize_corpus(const WalkCorpus& corpus, const Hin& hin);

}  // namespace cadsi
