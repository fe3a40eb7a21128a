#include "cadsi/checkpoint.hpp"

#include <openssl/evp.h>

#include <algorithm>

namespace cadsi {

std::string git_blob_sha1(std::string_view content) {
    const std::string header = "blob " + std::to_string(content.size()) + '\0';
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    const bool ok = ctx && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) &&
                    EVP_DigestUpdate(ctx, header.data(), header.size()) &&
                    EVP_DigestUpdate(ctx, content.data(), content.size()) &&
                    EVP_DigestFinal_ex(ctx, digest, &length);
    EVP_MD_CTX_free(ctx);
    if (!ok) throw Error(ErrorCode::io, "SHA-1 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned char b : std::span(digest, length)) {
        out += hex[b >> 4];
        out += hex[b & 15];
    }
    return out;
}

const std::string& Manifest::get(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw Error(ErrorCode::missing_checkpoint, "manifest has no entry '" + key + "'");
    return it->second;
}

void Manifest::add_inputs(const std::string& label, const std::filesystem::path& dir,
                          std::span<const std::string> files) {
    for (const auto& f : files) {
        const auto path = dir / f;
        if (!std::filesystem::exists(path))
            throw Error(ErrorCode::missing_checkpoint, "missing input " + path.string());
        set("input." + label + "/" + f, git_blob_sha1(read_file(path)));
    }
}

void Manifest::add_outputs(const std::filesystem::path& dir, std::span<const std::string> files) {
    for (const auto& f : files) set("output." + f, git_blob_sha1(read_file(dir / f)));
}

void Manifest::seal() {
    std::string all;
    for (const auto& [k, v] : entries_)
        if (k.rfind("input.", 0) == 0) all += k + "=" + v + "\n";
    set("content_hash", git_blob_sha1(all));
}

std::string Manifest::config_text() const {
    std::string out;
    for (const auto& [k, v] : entries_)
        if (k.rfind("config.", 0) == 0) out += k.substr(7) + "=" + v + "\n";
    return out;
}

std::string Manifest::to_text() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
    return out;
}

Manifest Manifest::parse(std::string_view text) {
    Manifest m;
    for (const auto& line : split(text, '\n')) {
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw Error(ErrorCode::io, "malformed manifest line '" + std::string(line) + "'");
        m.set(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
    }
    return m;
}

Manifest read_manifest(const std::filesystem::path& dir, const std::string& expected_producer) {
    const auto path = dir / kManifestFile;
    if (!std::filesystem::exists(path))
        throw Error(ErrorCode::missing_checkpoint,
                    "no checkpoint at " + dir.string() + "; run `cadsi " + expected_producer + "` first");
    return Manifest::parse(read_file(path));
}

namespace {

void append_values(std::string& out, std::span<const double> values) {
    for (double x : values) {
        out += '\t';
        out += format_double(x);
    }
    out += '\n';
}

std::vector<double> parse_values(std::span<const std::string_view> fields, std::size_t first, std::size_t dim,
                                 const std::string& where) {
    if (fields.size() != first + dim)
        throw Error(ErrorCode::io, where + ": expected " + std::to_string(dim) + " values, found " +
                                       std::to_string(fields.size() - std::min(first, fields.size())));
    std::vector<double> v(dim);
    for (std::size_t q = 0; q < dim; ++q) v[q] = parse_double(fields[first + q]);
    return v;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0;
    for (const auto& line : split(text, '\n')) {
        ++line_no;
        if (line.empty()) continue;
        fn(line_no, split(line, '\t'));
    }
}

}  // namespace

std::string node_table_tsv(const Hin& hin, std::span<const NodeId> nodes, const Matrix& rows) {
    std::string out;
    for (std::size_t r = 0; r < nodes.size(); ++r) {
        out += hin.schema().type_name(hin.type_of(nodes[r])) + "\t" + hin.id_of(nodes[r]);
        append_values(out, rows.row(r));
    }
    return out;
}

std::vector<std::pair<NodeId, std::vector<double>>> parse_node_table(std::string_view text, const Hin& hin,
                                                                     std::size_t dim, const std::string& origin) {
    std::vector<std::pair<NodeId, std::vector<double>>> out;
    for_each_line(text, [&](std::size_t line_no, const std::vector<std::string_view>& f) {
        const std::string where = origin + ":" + std::to_string(line_no);
        if (f.size() < 2) throw Error(ErrorCode::io, where + ": expected <type>\\t<id>\\t<values>");
        const auto v = hin.find(f[1]);
        if (!v) throw Error(ErrorCode::unknown_node, where + ": unknown node '" + std::string(f[1]) + "'");
        if (hin.schema().type_name(hin.type_of(*v)) != f[0])
            throw Error(ErrorCode::io, where + ": node '" + std::string(f[1]) + "' is not of type " + std::string(f[0]));
        out.emplace_back(*v, parse_values(f, 2, dim, where));
    });
    return out;
}

std::string labeled_rows_tsv(std::span<const std::string> labels, const Matrix& rows) {
    std::string out;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        out += labels[r] + "\t" + std::to_string(r);
        append_values(out, rows.row(r));
    }
    return out;
}

Matrix parse_labeled_rows(std::string_view text, std::span<const std::string> labels, std::size_t dim,
                          const std::string& origin) {
    Matrix m(labels.size(), dim);
    std::vector<char> seen(labels.size(), 0);
    for_each_line(text, [&](std::size_t line_no, const std::vector<std::string_view>& f) {
        const std::string where = origin + ":" + std::to_string(line_no);
        if (f.size() < 2) throw Error(ErrorCode::io, where + ": expected <label>\\t<row>\\t<values>");
        const auto r = parse_uint(f[1]);
        if (r >= labels.size() || labels[r] != f[0]) throw Error(ErrorCode::io, where + ": unexpected row " + std::string(f[0]));
        const auto v = parse_values(f, 2, dim, where);
        std::copy(v.begin(), v.end(), m.row(r).begin());
        seen[r] = 1;
    });
    if (std::count(seen.begin(), seen.end(), 0))
        throw Error(ErrorCode::io, origin + ": missing rows");
    return m;
}

void save_path_embeddings(const std::filesystem::path& dir, const Hin& hin, const MetaPathEmbeddings& emb) {
    std::filesystem::create_directories(dir / "paths");
    std::string names;
    for (std::size_t q = 0; q < emb.tables.size(); ++q) {
        const auto& t = emb.tables[q];
        names += emb.path_names[q] + "\n";
        write_file(dir / "paths" / (emb.path_names[q] + ".target.tsv"), node_table_tsv(hin, t.nodes, t.target));
        write_file(dir / "paths" / (emb.path_names[q] + ".context.tsv"), node_table_tsv(hin, t.nodes, t.context));
    }
    write_file(dir / "paths.txt", names);
}

MetaPathEmbeddings load_path_embeddings(const std::filesystem::path& dir, const Hin& hin, std::size_t dim) {
    if (!std::filesystem::exists(dir / "paths.txt"))
        throw Error(ErrorCode::missing_checkpoint, "no path embeddings under " + dir.string());
    MetaPathEmbeddings emb;
    emb.dim = dim;
    const std::string listing = read_file(dir / "paths.txt");
    for (const auto& name : split(listing, '\n')) {
        if (trim(name).empty()) continue;
        emb.path_names.emplace_back(trim(name));
        PathTable t;
        const auto tfile = dir / "paths" / (emb.path_names.back() + ".target.tsv");
        const auto cfile = dir / "paths" / (emb.path_names.back() + ".context.tsv");
        for (const auto& f : {tfile, cfile})
            if (!std::filesystem::exists(f)) throw Error(ErrorCode::missing_checkpoint, "missing " + f.string());
        const auto target = parse_node_table(read_file(tfile), hin, dim, tfile.string());
        const auto context = parse_node_table(read_file(cfile), hin, dim, cfile.string());
        if (target.size() != context.size()) throw Error(ErrorCode::io, "target and context tables differ in size");
        t.row_of.assign(hin.node_count(), -1);
        t.target = Matrix(target.size(), dim);
        t.context = Matrix(target.size(), dim);
        for (std::size_t r = 0; r < target.size(); ++r) {
            if (context[r].first != target[r].first) throw Error(ErrorCode::io, "target and context rows disagree");
            if (r && target[r].first <= target[r - 1].first) throw Error(ErrorCode::io, "path table rows not sorted");
            t.nodes.push_back(target[r].first);
            t.row_of[target[r].first] = static_cast<std::int32_t>(r);
            std::copy(target[r].second.begin(), target[r].second.end(), t.target.row(r).begin());
            std::copy(context[r].second.begin(), context[r].second.end(), t.context.row(r).begin());
        }
        emb.tables.push_back(std::move(t));
    }
    return emb;
}

namespace {

std::vector<std::string> dense_labels(const ModelParams& p, const Hin& hin, std::vector<const Matrix*>& mats,
                                      std::vector<std::span<const double>>& vecs) {
    std::vector<std::string> labels;
    for (std::size_t t = 0; t < p.layers.size(); ++t) {
        mats.push_back(&p.layers[t].weight);
        labels.push_back("layer" + std::to_string(t) + ".weight");
        vecs.push_back(p.layers[t].bias);
        labels.push_back("layer" + std::to_string(t) + ".bias");
    }
    for (std::size_t t = 0; t < p.fusion.weight.size(); ++t) {
        const std::string name = hin.schema().type_name(TypeId{static_cast<std::uint16_t>(t)});
        mats.push_back(&p.fusion.weight[t]);
        labels.push_back("fusion." + name + ".weight");
        vecs.push_back(p.fusion.bias[t]);
        labels.push_back("fusion." + name + ".bias");
    }
    return labels;
}

}  // namespace

void save_params(const std::filesystem::path& dir, const Hin& hin, const ModelLayout& layout, const ModelParams& p) {
    std::filesystem::create_directories(dir);
    write_file(dir / "id_embeddings.tsv",
               node_table_tsv(hin, layout.users, p.user_id) + node_table_tsv(hin, layout.items, p.item_id));
    std::vector<const Matrix*> mats;
    std::vector<std::span<const double>> vecs;
    const auto labels = dense_labels(p, hin, mats, vecs);
    std::string dense;
    for (std::size_t q = 0; q < mats.size(); ++q) {
        for (std::size_t r = 0; r < mats[q]->rows(); ++r) {
            dense += labels[2 * q] + "\t" + std::to_string(r);
            append_values(dense, mats[q]->row(r));
        }
        dense += labels[2 * q + 1] + "\t0";
        append_values(dense, vecs[q]);
    }
    write_file(dir / "dense.tsv", dense);
    save_path_embeddings(dir, hin, p.paths);
}

ModelParams load_params(const std::filesystem::path& dir, const Hin& hin, const ModelLayout& layout,
                        const ModelConfig& cfg) {
    const std::size_t d = cfg.intents.dim;
    // Start from a correctly shaped initialization, then overwrite every array.
    MetaPathEmbeddings paths = load_path_embeddings(dir, hin, d);
    ModelParams p = init_params(layout, cfg, std::move(paths), 0);

    const auto idfile = dir / "id_embeddings.tsv";
    if (!std::filesystem::exists(idfile)) throw Error(ErrorCode::missing_checkpoint, "missing " + idfile.string());
    std::vector<std::int64_t> user_row(hin.node_count(), -1), item_row(hin.node_count(), -1);
    for (std::size_t r = 0; r < layout.users.size(); ++r) user_row[layout.users[r]] = static_cast<std::int64_t>(r);
    for (std::size_t r = 0; r < layout.items.size(); ++r) item_row[layout.items[r]] = static_cast<std::int64_t>(r);
    std::size_t filled = 0;
    for (const auto& [v, values] : parse_node_table(read_file(idfile), hin, d, idfile.string())) {
        double* dst = nullptr;
        if (user_row[v] >= 0) dst = p.user_id.row(static_cast<std::size_t>(user_row[v])).data();
        else if (item_row[v] >= 0) dst = p.item_id.row(static_cast<std::size_t>(item_row[v])).data();
        else throw Error(ErrorCode::io, idfile.string() + ": node '" + hin.id_of(v) + "' is neither user nor item");
        std::copy(values.begin(), values.end(), dst);
        ++filled;
    }
    if (filled != layout.users.size() + layout.items.size())
        throw Error(ErrorCode::io, idfile.string() + ": expected one row per user and item");

    const auto densefile = dir / "dense.tsv";
    if (!std::filesystem::exists(densefile)) throw Error(ErrorCode::missing_checkpoint, "missing " + densefile.string());
    std::vector<const Matrix*> mats;
    std::vector<std::span<const double>> vecs;
    const auto labels = dense_labels(p, hin, mats, vecs);
    std::size_t rows = 0;
    for_each_line(read_file(densefile), [&](std::size_t line_no, const std::vector<std::string_view>& f) {
        const std::string where = densefile.string() + ":" + std::to_string(line_no);
        if (f.size() < 2) throw Error(ErrorCode::io, where + ": malformed row");
        const auto it = std::find(labels.begin(), labels.end(), f[0]);
        if (it == labels.end())
            throw Error(ErrorCode::config, where + ": parameter '" + std::string(f[0]) + "' does not fit the configured model");
        const std::size_t q = static_cast<std::size_t>(it - labels.begin());
        const std::size_t r = parse_uint(f[1]);
        if (q % 2 == 0) {
            Matrix& m = const_cast<Matrix&>(*mats[q / 2]);
            if (r >= m.rows()) throw Error(ErrorCode::config, where + ": row outside the configured shape");
            const auto v = parse_values(f, 2, m.cols(), where);
            std::copy(v.begin(), v.end(), m.row(r).begin());
        } else {
            auto dst = vecs[q / 2];
            const auto v = parse_values(f, 2, dst.size(), where);
            std::copy(v.begin(), v.end(), const_cast<double*>(dst.data()));
        }
        ++rows;
    });
    std::size_t expected = 0;
    for (const auto* m : mats) expected += m->rows() + 1;
    if (rows != expected)
        throw Error(ErrorCode::config, densefile.string() + ": " + std::to_string(rows) + " rows, configured model needs " +
                                           std::to_string(expected));
    return p;
}

}  // namespace cadsi
