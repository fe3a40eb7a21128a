#include "cadsi/hin.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include "cadsi/common.hpp"

namespace cadsi {

TypeId Schema::add_node_type(std::string name) {
    if (name.empty() || name.find_first_of(" \t") != std::string::npos)
        throw Error(ErrorCode::schema, "invalid node type name '" + name + "'");
    if (find_type(name)) throw Error(ErrorCode::schema, "duplicate node type " + name);
    types_.push_back(std::move(name));
    return TypeId{static_cast<std::uint16_t>(types_.size() - 1)};
}

void Schema::add_edge_kind(std::string name, std::string_view source, std::string_view target) {
    if (find_kind(name)) throw Error(ErrorCode::schema, "duplicate edge kind " + name);
    const TypeId s = type(source);
    const TypeId t = type(target);
    if (kind_between(s, t))
        throw Error(ErrorCode::schema, "relation " + std::string(source) + "-" + std::string(target) +
                                           " declared twice");
    kinds_.push_back({std::move(name), s, t});
}

std::optional<TypeId> Schema::find_type(std::string_view name) const {
    for (std::size_t i = 0; i < types_.size(); ++i)
        if (types_[i] == name) return TypeId{static_cast<std::uint16_t>(i)};
    return std::nullopt;
}

TypeId Schema::type(std::string_view name) const {
    if (auto t = find_type(name)) return *t;
    throw Error(ErrorCode::schema, "unknown node type '" + std::string(name) + "'");
}

std::optional<std::size_t> Schema::find_kind(std::string_view name) const {
    for (std::size_t i = 0; i < kinds_.size(); ++i)
        if (kinds_[i].name == name) return i;
    return std::nullopt;
}

std::optional<std::size_t> Schema::kind_between(TypeId a, TypeId b) const {
    for (std::size_t i = 0; i < kinds_.size(); ++i) {
        const auto& k = kinds_[i];
        if ((k.source == a && k.target == b) || (k.source == b && k.target == a)) return i;
    }
    return std::nullopt;
}

void Schema::validate() const {
    if (types_.size() < 2) throw Error(ErrorCode::schema, "schema needs at least two node types");
    if (types_.size() + kinds_.size() <= 2)
        throw Error(ErrorCode::schema, "schema needs |types| + |relations| > 2");
}

Schema Schema::parse(std::string_view text) {
    Schema schema;
    std::vector<std::vector<std::string>> kinds;
    std::size_t line_no = 0;
    for (auto raw : split(text, '\n')) {
        ++line_no;
        auto line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        std::istringstream in{std::string(line)};
        std::string word;
        in >> word;
        if (word == "nodetype") {
            std::string name;
            in >> name;
            schema.add_node_type(name);
        } else if (word == "edgekind") {
            std::string name, src, dst;
            in >> name >> src >> dst;
            if (dst.empty())
                throw Error(ErrorCode::schema, "schema line " + std::to_string(line_no) + ": edgekind needs 3 fields");
            kinds.push_back({name, src, dst});
        } else {
            throw Error(ErrorCode::schema, "schema line " + std::to_string(line_no) + ": unknown directive '" +
                                               word + "'");
        }
    }
    for (auto& k : kinds) schema.add_edge_kind(k[0], k[1], k[2]);
    schema.validate();
    return schema;
}

std::string Schema::serialize() const {
    std::string out;
    for (const auto& t : types_) out += "nodetype " + t + "\n";
    for (const auto& k : kinds_)
        out += "edgekind " + k.name + " " + type_name(k.source) + " " + type_name(k.target) + "\n";
    return out;
}

Schema load_schema(const std::filesystem::path& path) { return Schema::parse(read_file(path)); }

bool MetaPath::symmetric() const {
    return types.size() >= 3 && std::equal(types.begin(), types.end(), types.rbegin());
}

Hin::Hin(Schema schema, std::vector<NodeRecord> nodes, std::vector<RawEdge> edges)
    : schema_(std::move(schema)), nodes_(std::move(nodes)) {
    schema_.validate();
    lookup_.reserve(nodes_.size());
    for (NodeId v = 0; v < nodes_.size(); ++v) {
        if (nodes_[v].type.value >= schema_.type_count())
            throw Error(ErrorCode::schema, "node " + nodes_[v].id + " has an undeclared type");
        lookup_.push_back(v);
    }
    std::sort(lookup_.begin(), lookup_.end(),
              [&](NodeId x, NodeId y) { return nodes_[x].id < nodes_[y].id; });
    for (std::size_t i = 1; i < lookup_.size(); ++i)
        if (nodes_[lookup_[i]].id == nodes_[lookup_[i - 1]].id)
            throw Error(ErrorCode::schema, "duplicate node id " + nodes_[lookup_[i]].id);

    edges_.reserve(edges.size());
    for (const auto& e : edges) {
        if (e.a >= nodes_.size() || e.b >= nodes_.size())
            throw Error(ErrorCode::unknown_node, "edge endpoint out of range");
        if (e.kind >= schema_.edge_kinds().size()) throw Error(ErrorCode::schema, "edge with undeclared kind");
        const auto& kind = schema_.edge_kinds()[e.kind];
        const TypeId ta = nodes_[e.a].type;
        const TypeId tb = nodes_[e.b].type;
        if (ta == kind.source && tb == kind.target) {
            edges_.push_back({e.a, e.b, static_cast<std::uint32_t>(e.kind)});
        } else if (ta == kind.target && tb == kind.source) {
            edges_.push_back({e.b, e.a, static_cast<std::uint32_t>(e.kind)});
        } else {
            throw Error(ErrorCode::schema, "edge " + nodes_[e.a].id + " - " + nodes_[e.b].id +
                                               " violates kind " + kind.name);
        }
    }
    auto key = [](const Edge& e) { return std::tuple(e.kind, e.a, e.b); };
    std::sort(edges_.begin(), edges_.end(), [&](const Edge& x, const Edge& y) { return key(x) < key(y); });
    edges_.erase(std::unique(edges_.begin(), edges_.end(),
                             [&](const Edge& x, const Edge& y) { return key(x) == key(y); }),
                 edges_.end());

    // CSR adjacency grouped by neighbour type.
    const std::size_t stride = schema_.type_count() + 1;
    std::vector<std::pair<NodeId, NodeId>> half;
    half.reserve(edges_.size() * 2);
    for (const auto& e : edges_) {
        half.emplace_back(e.a, e.b);
        if (e.a != e.b) half.emplace_back(e.b, e.a);
    }
    std::sort(half.begin(), half.end(), [&](const auto& x, const auto& y) {
        return std::tuple(x.first, nodes_[x.second].type, x.second) <
               std::tuple(y.first, nodes_[y.second].type, y.second);
    });
    half.erase(std::unique(half.begin(), half.end()), half.end());
    adjacency_.resize(half.size());
    offsets_.assign(nodes_.size() * stride, 0);
    std::vector<std::size_t> counts(nodes_.size() * schema_.type_count(), 0);
    for (const auto& [v, w] : half) ++counts[v * schema_.type_count() + nodes_[w].type.value];
    std::size_t pos = 0;
    for (std::size_t v = 0; v < nodes_.size(); ++v) {
        for (std::size_t t = 0; t < schema_.type_count(); ++t) {
            offsets_[v * stride + t] = pos;
            pos += counts[v * schema_.type_count() + t];
        }
        offsets_[v * stride + schema_.type_count()] = pos;
    }
    for (std::size_t i = 0; i < half.size(); ++i) adjacency_[i] = half[i].second;
}

std::optional<NodeId> Hin::find(std::string_view id) const {
    auto it = std::lower_bound(lookup_.begin(), lookup_.end(), id,
                               [&](NodeId v, std::string_view key) { return nodes_[v].id < key; });
    if (it != lookup_.end() && nodes_[*it].id == id) return *it;
    return std::nullopt;
}

NodeId Hin::node(std::string_view id) const {
    if (auto v = find(id)) return *v;
    throw Error(ErrorCode::unknown_node, "unknown node '" + std::string(id) + "'");
}

std::span<const NodeId> Hin::neighbors(NodeId v, TypeId t) const {
    if (v >= nodes_.size()) throw Error(ErrorCode::unknown_node, "node index out of range");
    const std::size_t stride = schema_.type_count() + 1;
    const std::size_t begin = offsets_[v * stride + t.value];
    const std::size_t end = offsets_[v * stride + t.value + 1];
    return {adjacency_.data() + begin, end - begin};
}

std::vector<NodeId> Hin::nodes_of_type(TypeId t) const {
    std::vector<NodeId> out;
    for (NodeId v = 0; v < nodes_.size(); ++v)
        if (nodes_[v].type == t) out.push_back(v);
    return out;
}

Hin Hin::filtered(const std::function<bool(NodeId)>& keep_node,
                  const std::function<bool(const Edge&)>& keep_edge) const {
    std::vector<NodeRecord> nodes;
    std::vector<NodeId> remap(nodes_.size(), static_cast<NodeId>(-1));
    for (NodeId v = 0; v < nodes_.size(); ++v) {
        if (!keep_node(v)) continue;
        remap[v] = static_cast<NodeId>(nodes.size());
        nodes.push_back(nodes_[v]);
    }
    std::vector<RawEdge> edges;
    for (const auto& e : edges_) {
        if (remap[e.a] == static_cast<NodeId>(-1) || remap[e.b] == static_cast<NodeId>(-1)) continue;
        if (!keep_edge(e)) continue;
        edges.push_back({remap[e.a], remap[e.b], e.kind});
    }
    return Hin(schema_, std::move(nodes), std::move(edges));
}

namespace {

std::vector<std::string_view> tsv_fields(std::string_view line) { return split(line, '\t'); }

}  // namespace

Hin load_hin(const std::filesystem::path& node_file,
             std::span<const std::filesystem::path> edge_files,
             const Schema& schema,
             const HinLoadOptions& options) {
    std::vector<Hin::NodeRecord> nodes;
    const std::string node_text = read_file(node_file);
    std::size_t line_no = 0;
    for (auto raw : split(node_text, '\n')) {
        ++line_no;
        auto line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        auto f = tsv_fields(line);
        if (f.size() != 2)
            throw Error(ErrorCode::io, node_file.string() + ":" + std::to_string(line_no) +
                                           ": expected <type>\\t<id>");
        auto t = schema.find_type(trim(f[0]));
        if (!t)
            throw Error(ErrorCode::schema, node_file.string() + ":" + std::to_string(line_no) +
                                               ": unknown node type '" + std::string(f[0]) + "'");
        nodes.push_back({*t, std::string(trim(f[1]))});
    }

    // Index lookup before the Hin exists.
    std::vector<std::pair<std::string_view, NodeId>> lookup;
    for (NodeId v = 0; v < nodes.size(); ++v) lookup.emplace_back(nodes[v].id, v);
    std::sort(lookup.begin(), lookup.end());
    auto find = [&](std::string_view id) -> std::optional<NodeId> {
        auto it = std::lower_bound(lookup.begin(), lookup.end(), id,
                                   [](const auto& entry, std::string_view key) { return entry.first < key; });
        if (it != lookup.end() && it->first == id) return it->second;
        return std::nullopt;
    };

    std::vector<Hin::RawEdge> edges;
    for (const auto& path : edge_files) {
        const std::string text = read_file(path);
        line_no = 0;
        for (auto raw : split(text, '\n')) {
            ++line_no;
            auto line = trim(raw);
            if (line.empty() || line.front() == '#') continue;
            auto f = tsv_fields(line);
            const auto where = path.string() + ":" + std::to_string(line_no);
            if (f.size() != 3) throw Error(ErrorCode::io, where + ": expected <src>\\t<dst>\\t<kind>");
            auto a = find(trim(f[0]));
            auto b = find(trim(f[1]));
            if (!a || !b)
                throw Error(ErrorCode::unknown_node,
                            where + ": edge references missing node '" + std::string(!a ? f[0] : f[1]) + "'");
            auto kind = schema.find_kind(trim(f[2]));
            if (!kind) throw Error(ErrorCode::schema, where + ": unknown edge kind '" + std::string(f[2]) + "'");
            const auto& k = schema.edge_kinds()[*kind];
            const TypeId ta = nodes[*a].type, tb = nodes[*b].type;
            if (!((ta == k.source && tb == k.target) || (ta == k.target && tb == k.source)))
                throw Error(ErrorCode::schema, where + ": edge violates kind " + k.name);
            edges.push_back({*a, *b, *kind});
        }
    }

    Hin hin(schema, std::move(nodes), std::move(edges));
    if (options.kcore) {
        hin = kcore_filter(hin, schema.type(options.user_type), schema.type(options.item_type), options.core);
    }
    if (hin.node_count() == 0) throw Error(ErrorCode::empty_input, "graph is empty");
    return hin;
}

Hin kcore_filter(const Hin& hin, TypeId user, TypeId item, std::size_t core) {
    const auto& schema = hin.schema();
    const auto ui_kind = schema.kind_between(user, item);
    if (!ui_kind) throw Error(ErrorCode::schema, "no user-item relation kind declared");
    const auto uu_kind = schema.kind_between(user, user);

    std::vector<bool> alive(hin.node_count(), true);
    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<std::size_t> interactions(hin.node_count(), 0), friends(hin.node_count(), 0);
        for (const auto& e : hin.edges()) {
            if (!alive[e.a] || !alive[e.b]) continue;
            if (e.kind == *ui_kind) {
                ++interactions[e.a];
                ++interactions[e.b];
            } else if (uu_kind && e.kind == *uu_kind && e.a != e.b) {
                ++friends[e.a];
                ++friends[e.b];
            }
        }
        for (NodeId v = 0; v < hin.node_count(); ++v) {
            if (!alive[v]) continue;
            const TypeId t = hin.type_of(v);
            bool drop = false;
            if (t == user) drop = interactions[v] < core || (uu_kind && friends[v] < core);
            if (t == item) drop = interactions[v] < core;
            if (drop) {
                alive[v] = false;
                changed = true;
            }
        }
    }
    Hin out = hin.filtered([&](NodeId v) { return alive[v]; }, [](const Edge&) { return true; });
    if (out.nodes_of_type(user).empty() || out.nodes_of_type(item).empty())
        throw Error(ErrorCode::empty_input, "graph is empty after " + std::to_string(core) + "-core filtering");
    return out;
}

std::string serialize_nodes(const Hin& hin) {
    std::string out;
    for (NodeId v = 0; v < hin.node_count(); ++v)
        out += hin.schema().type_name(hin.type_of(v)) + "\t" + hin.id_of(v) + "\n";
    return out;
}

std::string serialize_edges(const Hin& hin) {
    std::string out;
    for (const auto& e : hin.edges())
        out += hin.id_of(e.a) + "\t" + hin.id_of(e.b) + "\t" + hin.schema().edge_kinds()[e.kind].name + "\n";
    return out;
}

void write_hin(const Hin& hin, const std::filesystem::path& dir) {
    write_file(dir / "nodes.tsv", serialize_nodes(hin));
    write_file(dir / "edges.tsv", serialize_edges(hin));
    write_file(dir / "schema.txt", hin.schema().serialize());
}

std::vector<NodeId> neighbors_of_type(const Hin& hin, std::string_view node_id, std::string_view type) {
    const NodeId v = hin.node(node_id);
    const auto t = hin.schema().find_type(type);
    if (!t) return {};
    auto nb = hin.neighbors(v, *t);
    return {nb.begin(), nb.end()};
}

std::vector<MetaPathCheck> validate_metapaths(const Schema& schema,
                                              std::span<const std::vector<std::string>> paths) {
    std::vector<MetaPathCheck> report;
    for (const auto& names : paths) {
        MetaPathCheck check;
        for (const auto& n : names) check.name += n;
        check.symmetric = names.size() >= 3 && std::equal(names.begin(), names.end(), names.rbegin());
        if (names.size() < 2) {
            check.reason = "meta path needs at least two node types";
            report.push_back(std::move(check));
            continue;
        }
        check.valid = true;
        for (std::size_t s = 0; s < names.size(); ++s) {
            if (!schema.find_type(names[s])) {
                check.valid = false;
                check.offending_step = std::max<std::size_t>(s, 1);
                check.reason = "unknown node type " + names[s];
                break;
            }
            if (s == 0) continue;
            if (!schema.kind_between(schema.type(names[s - 1]), schema.type(names[s]))) {
                check.valid = false;
                check.offending_step = s;
                check.reason = "no relation " + names[s - 1] + "-" + names[s];
                break;
            }
        }
        report.push_back(std::move(check));
    }
    return report;
}

std::vector<std::vector<std::string>> parse_metapath_lines(std::string_view text) {
    std::vector<std::vector<std::string>> out;
    for (auto raw : split(text, '\n')) {
        auto line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        std::istringstream in{std::string(line)};
        std::vector<std::string> names;
        for (std::string w; in >> w;) names.push_back(w);
        out.push_back(std::move(names));
    }
    return out;
}

std::vector<MetaPath> resolve_metapaths(const Schema& schema,
                                        std::span<const std::vector<std::string>> paths) {
    const auto report = validate_metapaths(schema, paths);
    std::vector<MetaPath> out;
    for (std::size_t p = 0; p < paths.size(); ++p) {
        if (!report[p].valid)
            throw Error(ErrorCode::schema, "meta path " + report[p].name + " invalid at step " +
                                               std::to_string(report[p].offending_step) + ": " + report[p].reason);
        MetaPath mp{report[p].name, {}};
        for (const auto& n : paths[p]) mp.types.push_back(schema.type(n));
        out.push_back(std::move(mp));
    }
    return out;
}

InteractionMatrix interaction_matrix(const Hin& hin, TypeId user, TypeId item) {
    const auto kind = hin.schema().kind_between(user, item);
    if (!kind) throw Error(ErrorCode::schema, "no user-item relation kind declared");
    InteractionMatrix m;
    m.users = hin.nodes_of_type(user);
    m.items = hin.nodes_of_type(item);
    std::vector<std::uint32_t> local(hin.node_count(), 0);
    for (std::uint32_t u = 0; u < m.users.size(); ++u) local[m.users[u]] = u;
    for (std::uint32_t i = 0; i < m.items.size(); ++i) local[m.items[i]] = i;
    for (const auto& e : hin.edges()) {
        if (e.kind != *kind) continue;
        const NodeId u = hin.type_of(e.a) == user ? e.a : e.b;
        const NodeId i = u == e.a ? e.b : e.a;
        m.entries.emplace_back(local[u], local[i]);
    }
    std::sort(m.entries.begin(), m.entries.end());
    return m;
}

}  // namespace cadsi
