#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cadsi/common.hpp"
#include "cadsi/hin.hpp"
#include "cadsi/rng.hpp"
#include "cadsi/walks.hpp"

namespace cadsi {

struct SkipGramConfig {
    std::size_t dim = 64;
    std::size_t window = 3;
    std::size_t negatives = 5;
    double lr = 0.025;
    std::size_t epochs = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Target and context vectors of every node that occurs in one meta path's walks.
struct PathTable {
    std::vector<NodeId> nodes;        // sorted
    std::vector<std::int32_t> row_of;  // per graph node, -1 when absent
    Matrix target;
    Matrix context;

    std::optional<std::size_t> row(NodeId v) const {
        if (v >= row_of.size() || row_of[v] < 0) return std::nullopt;
        return static_cast<std::size_t>(row_of[v]);
    }
};

struct MetaPathEmbeddings {
    std::size_t dim = 0;
    std::vector<std::string> path_names;
    std::vector<PathTable> tables;
};

/// Same tables with every value zeroed; used as a gradient buffer.
MetaPathEmbeddings zeros_like(const MetaPathEmbeddings& emb);

/// Unigram^0.75 negatives restricted to one node type within one path's walks.
class NegativeSampler {
public:
    NegativeSampler() = default;
    NegativeSampler(const WalkCorpus& corpus, const Hin& hin);

    /// False when the path never visits a node of that type.
    bool draw(std::size_t path, TypeId type, Rng& rng, NodeId& out) const;

private:
    struct Table {
        std::vector<NodeId> nodes;
        std::vector<double> cumulative;
    };
    std::size_t type_count_ = 0;
    std::vector<Table> tables_;  // path * types + type
};

struct SkipGramSample {
    std::size_t path;
    NodeId center;
    NodeId context;
    std::vector<NodeId> negatives;
};

/// Draws (center, context) pairs uniformly over corpus positions and window offsets.
class PairSampler {
public:
    PairSampler(const WalkCorpus& corpus, const Hin& hin, std::size_t window);

    SkipGramSample draw(Rng& rng, std::size_t negatives) const;
    const NegativeSampler& negatives() const { return negative_; }

private:
    const WalkCorpus* corpus_;
    const Hin* hin_;
    std::size_t window_;
    std::vector<const Walk*> walks_;
    std::vector<std::size_t> cumulative_tokens_;
    NegativeSampler negative_;
};

MetaPathEmbeddings init_path_embeddings(const WalkCorpus& corpus, std::size_t node_count,
                                        const SkipGramConfig& cfg);

/// -log s(t.c) - sum_w log s(-t.c_w) for one pair. Adds the gradient into
/// `grad` (same layout as the table) when given. Center == context yields 0.
double skipgram_pair_loss(const PathTable& table, NodeId center, NodeId context,
                          std::span<const NodeId> negatives, PathTable* grad);

/// One exact gradient-descent step on skipgram_pair_loss; returns the
/// pre-step loss.
double skipgram_step(PathTable& table, NodeId center, NodeId context, std::span<const NodeId> negatives,
                     double lr);

/// Sum of skipgram_pair_loss over a batch.
double skipgram_batch_loss(const MetaPathEmbeddings& emb, std::span<const SkipGramSample> batch,
                           MetaPathEmbeddings* grad);

struct SkipGramTrace {
    std::vector<double> epoch_mean_loss;
};

MetaPathEmbeddings train_skipgram(const WalkCorpus& corpus, const Hin& hin, const SkipGramConfig& cfg,
                                  SkipGramTrace* trace = nullptr);

/// Per-type affine map applied before averaging a node's per-path vectors.
struct FusionParams {
    std::vector<Matrix> weight;             // per TypeId, dim x dim
    std::vector<std::vector<double>> bias;  // per TypeId, dim
};

/// weight = identity + N(0, noise^2), bias = 0.
FusionParams init_fusion(std::size_t type_count, std::size_t dim, std::uint64_t seed, double noise = 0.01);

/// Mean of each node's per-path target vectors; `counts[v]` receives the
/// number of paths the node occurs in.
Matrix path_means(const MetaPathEmbeddings& emb, std::size_t node_count, std::vector<std::uint32_t>& counts);

/// out = W * x + b
void affine(const Matrix& weight, std::span<const double> bias, std::span<const double> x, std::span<double> out);

struct ContextBank {
    Matrix nodes;  // fused vector per graph node
    std::vector<bool> has_vector;
    std::vector<TypeId> aspect_types;
    Matrix aspects;  // one row per aspect type
    std::vector<NodeId> missing;  // nodes with no per-path vector (assigned zero)

    std::size_t aspect_count() const { return aspect_types.size(); }
};

ContextBank fuse_embeddings(const MetaPathEmbeddings& emb, const Hin& hin, const FusionParams& fusion,
                            std::span<const TypeId> aspect_types);

}  // namespace cadsi
