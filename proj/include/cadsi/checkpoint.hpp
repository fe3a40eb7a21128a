#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cadsi/hin.hpp"
#include "cadsi/model.hpp"

namespace cadsi {

/// SHA-1 of "blob <size>\0<content>", as git hashes file contents.
std::string git_blob_sha1(std::string_view content);

/// Sorted key=value record written next to every stage's outputs.
class Manifest {
public:
    void set(const std::string& key, const std::string& value) { entries_[key] = value; }
    bool has(const std::string& key) const { return entries_.count(key) > 0; }
    const std::string& get(const std::string& key) const;
    const std::map<std::string, std::string>& entries() const { return entries_; }

    /// Records input files as input.<label>=<hash> and folds them into content_hash.
    void add_inputs(const std::string& label, const std::filesystem::path& dir, std::span<const std::string> files);
    void add_outputs(const std::filesystem::path& dir, std::span<const std::string> files);
    /// Hash over every input.* entry; call after all inputs are added.
    void seal();

    /// Lines "config.<key>=<value>" collected back into key=value text.
    std::string config_text() const;

    std::string to_text() const;
    static Manifest parse(std::string_view text);

private:
    std::map<std::string, std::string> entries_;
};

inline constexpr const char* kManifestFile = "manifest.txt";

/// Throws Error(missing_checkpoint) naming the stage that should have produced it.
Manifest read_manifest(const std::filesystem::path& dir, const std::string& expected_producer);

/// Rows "<node_type>\t<node_id>\t<v_1>\t...".
std::string node_table_tsv(const Hin& hin, std::span<const NodeId> nodes, const Matrix& rows);
/// Parses a node table; every node must exist and have `dim` values.
std::vector<std::pair<NodeId, std::vector<double>>> parse_node_table(std::string_view text, const Hin& hin,
                                                                     std::size_t dim, const std::string& origin);

/// id_embeddings.tsv, dense.tsv, paths.txt and paths/<name>.{target,context}.tsv
void save_params(const std::filesystem::path& dir, const Hin& hin, const ModelLayout& layout, const ModelParams& p);
ModelParams load_params(const std::filesystem::path& dir, const Hin& hin, const ModelLayout& layout,
                        const ModelConfig& cfg);

/// paths.txt and paths/*.tsv only (pretraining output).
void save_path_embeddings(const std::filesystem::path& dir, const Hin& hin, const MetaPathEmbeddings& emb);
MetaPathEmbeddings load_path_embeddings(const std::filesystem::path& dir, const Hin& hin, std::size_t dim);

/// Matrix rows keyed by a label: "<label>\t<label>\t<v...>" for per-type vectors.
std::string labeled_rows_tsv(std::span<const std::string> labels, const Matrix& rows);
Matrix parse_labeled_rows(std::string_view text, std::span<const std::string> labels, std::size_t dim,
                          const std::string& origin);

}  // namespace cadsi
