#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cadsi {

using NodeId = std::uint32_t;

/// Index of a node type within a Schema.
struct TypeId {
    std::uint16_t value = 0;
    auto operator<=>(const TypeId&) const = default;
};

struct EdgeKind {
    std::string name;
    TypeId source;
    TypeId target;
};

/// Node types plus the undirected relation kinds allowed between them.
class Schema {
public:
    TypeId add_node_type(std::string name);
    void add_edge_kind(std::string name, std::string_view source, std::string_view target);

    std::optional<TypeId> find_type(std::string_view name) const;
    TypeId type(std::string_view name) const;
    const std::string& type_name(TypeId t) const { return types_.at(t.value); }
    std::size_t type_count() const { return types_.size(); }

    std::span<const EdgeKind> edge_kinds() const { return kinds_; }
    std::optional<std::size_t> find_kind(std::string_view name) const;
    /// Kind connecting the two types in either orientation.
    std::optional<std::size_t> kind_between(TypeId a, TypeId b) const;

    /// Throws unless there are at least two node types and |A| + |R| > 2.
    void validate() const;

    static Schema parse(std::string_view text);
    std::string serialize() const;

private:
    std::vector<std::string> types_;
    std::vector<EdgeKind> kinds_;
};

Schema load_schema(const std::filesystem::path& path);

struct MetaPath {
    std::string name;
    std::vector<TypeId> types;

    /// Palindromic paths (UMU, UMAMU) can be repeated to extend a walk.
    bool symmetric() const;
};

struct MetaPathCheck {
    std::string name;
    bool valid = false;
    bool symmetric = false;
    /// 1-based index of the first bad consecutive pair (0 when valid).
    std::size_t offending_step = 0;
    std::string reason;
};

struct Edge {
    NodeId a;
    NodeId b;
    std::uint32_t kind;
};

/// Typed heterogeneous graph. Immutable after construction.
class Hin {
public:
    struct NodeRecord {
        TypeId type;
        std::string id;
    };
    struct RawEdge {
        NodeId a;
        NodeId b;
        std::size_t kind;
    };

    Hin() = default;
    /// Validates endpoints and kinds, orients every edge so `a` has the
    /// kind's source type, drops duplicate edges.
    Hin(Schema schema, std::vector<NodeRecord> nodes, std::vector<RawEdge> edges);

    const Schema& schema() const { return schema_; }
    std::size_t node_count() const { return nodes_.size(); }
    std::size_t edge_count() const { return edges_.size(); }
    TypeId type_of(NodeId v) const { return nodes_[v].type; }
    const std::string& id_of(NodeId v) const { return nodes_[v].id; }
    std::optional<NodeId> find(std::string_view id) const;
    NodeId node(std::string_view id) const;

    /// Neighbors of v whose type is t, sorted by node index.
    std::span<const NodeId> neighbors(NodeId v, TypeId t) const;
    std::vector<NodeId> nodes_of_type(TypeId t) const;
    std::span<const Edge> edges() const { return edges_; }

    /// Subgraph keeping the selected nodes and edges; node indices are
    /// compacted in their original order.
    Hin filtered(const std::function<bool(NodeId)>& keep_node,
                 const std::function<bool(const Edge&)>& keep_edge) const;

private:
    Schema schema_;
    std::vector<NodeRecord> nodes_;
    std::vector<NodeId> lookup_;  // node indices sorted by external id
    std::vector<Edge> edges_;
    std::vector<std::size_t> offsets_;  // node * (types + 1) + type
    std::vector<NodeId> adjacency_;
};

struct HinLoadOptions {
    bool kcore = false;
    std::size_t core = 5;
    std::string user_type = "U";
    std::string item_type = "I";
};

Hin load_hin(const std::filesystem::path& node_file,
             std::span<const std::filesystem::path> edge_files,
             const Schema& schema,
             const HinLoadOptions& options = {});

/// Iteratively drops users and items with fewer than `core` interactions
/// (and users with fewer than `core` friends when a user-user kind exists).
Hin kcore_filter(const Hin& hin, TypeId user, TypeId item, std::size_t core);

/// Writes nodes.tsv, edges.tsv and schema.txt.
void write_hin(const Hin& hin, const std::filesystem::path& dir);
std::string serialize_nodes(const Hin& hin);
std::string serialize_edges(const Hin& hin);

/// `neighbors_of_type` by external id.
std::vector<NodeId> neighbors_of_type(const Hin& hin, std::string_view node_id, std::string_view type);

std::vector<MetaPathCheck> validate_metapaths(const Schema& schema,
                                              std::span<const std::vector<std::string>> paths);
/// Parses "U M A M U"-style lines; blank lines and '#' comments skipped.
std::vector<std::vector<std::string>> parse_metapath_lines(std::string_view text);
/// Validates and resolves; throws Error(schema) naming the first invalid path.
std::vector<MetaPath> resolve_metapaths(const Schema& schema,
                                        std::span<const std::vector<std::string>> paths);

/// Binary user-item matrix derived from the user-item relation kind.
struct InteractionMatrix {
    std::vector<NodeId> users;
    std::vector<NodeId> items;
    /// Local (user index, item index) pairs, sorted.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> entries;

    std::size_t user_count() const { return users.size(); }
    std::size_t item_count() const { return items.size(); }
};

InteractionMatrix interaction_matrix(const Hin& hin, TypeId user, TypeId item);

}  // namespace cadsi
