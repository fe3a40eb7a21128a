#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cadsi/common.hpp"
#include "cadsi/hin.hpp"

namespace cadsi {

struct DisentangleConfig {
    std::size_t k = 4;       // intents
    std::size_t iters = 2;   // routing rounds per layer
    std::size_t layers = 2;  // propagation depth
    std::size_t dim = 64;

    void validate() const;
    std::size_t chunk() const { return dim / k; }
};

/// A d-vector viewed as k contiguous chunks of d/k.
class ChunkedEmbedding {
public:
    ChunkedEmbedding(std::span<const double> flat, std::size_t k);

    std::size_t intents() const { return k_; }
    std::span<const double> chunk(std::size_t j) const { return {values_.data() + j * width_, width_}; }
    std::span<const double> flat() const { return values_; }

private:
    std::size_t k_;
    std::size_t width_;
    std::vector<double> values_;
};

ChunkedEmbedding init_chunks(std::span<const double> id_embedding, const DisentangleConfig& cfg);

/// User-item bipartite graph with edges grouped by user and an item-side index.
class InteractionGraph {
public:
    InteractionGraph() = default;
    /// Pairs are (user index, item index); duplicates are dropped.
    InteractionGraph(std::size_t users, std::size_t items, std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs);
    explicit InteractionGraph(const InteractionMatrix& m);

    std::size_t user_count() const { return users_; }
    std::size_t item_count() const { return items_; }
    std::size_t edge_count() const { return user_of_.size(); }

    std::uint32_t user_of(std::size_t e) const { return user_of_[e]; }
    std::uint32_t item_of(std::size_t e) const { return item_of_[e]; }
    /// Edges of user u are the contiguous range [user_begin(u), user_begin(u+1)).
    std::size_t user_begin(std::uint32_t u) const { return user_offsets_[u]; }
    std::size_t user_end(std::uint32_t u) const { return user_offsets_[u + 1]; }
    std::span<const std::uint32_t> item_edges(std::uint32_t i) const {
        return {item_edge_ids_.data() + item_offsets_[i], item_offsets_[i + 1] - item_offsets_[i]};
    }
    std::optional<std::size_t> find_edge(std::uint32_t u, std::uint32_t i) const;

private:
    std::size_t users_ = 0;
    std::size_t items_ = 0;
    std::vector<std::uint32_t> user_of_;
    std::vector<std::uint32_t> item_of_;
    std::vector<std::size_t> user_offsets_;
    std::vector<std::size_t> item_offsets_;
    std::vector<std::uint32_t> item_edge_ids_;
};

/// Raw routing scores, one row of k per edge, all equal to 1/k.
Matrix init_scores(const InteractionGraph& graph, std::size_t k);

struct NormalizedScores {
    Matrix tilde;        // edges x k, rows are softmax of the raw scores
    Matrix user_degree;  // users x k
    Matrix item_degree;  // items x k
};

/// Process-wide counters filled by every normalize_scores call.
struct RoutingAudit {
    std::atomic<std::uint64_t> calls{0};
    std::atomic<std::uint64_t> rows{0};
    std::atomic<std::uint64_t> violations{0};
};

RoutingAudit& routing_audit();
void reset_routing_audit();

NormalizedScores normalize_scores(const Matrix& raw, const InteractionGraph& graph);

/// Edge weight S~_j(u,i) / sqrt(D_j(u) D_j(i)).
Matrix routing_weights(const NormalizedScores& norm, const InteractionGraph& graph);

/// Weighted sum of item chunks j over u's edges. Returns false for an
/// isolated user, leaving `out` untouched.
bool aggregate_chunk(std::uint32_t u, std::size_t j, const NormalizedScores& norm, const InteractionGraph& graph,
                     const Matrix& item_chunks, std::size_t k, std::span<double> out);

/// raw + x_k(u) . tanh(i_k) for every edge and intent.
Matrix update_scores(const Matrix& raw, const InteractionGraph& graph, const Matrix& user_chunks,
                     const Matrix& item_chunks, std::size_t k);

/// Per-layer map applied chunk-wise: tanh(W x + b), W is (d/k) x (d/k).
struct LayerParams {
    Matrix weight;
    std::vector<double> bias;
};

std::vector<LayerParams> init_layers(const DisentangleConfig& cfg, std::uint64_t seed);

/// Intermediate values of one routing round, kept for the backward pass.
struct RoundCache {
    NormalizedScores norm;
    Matrix weights;    // edges x k
    Matrix user_agg;   // users x d
};

struct LayerCache {
    std::vector<RoundCache> rounds;
    Matrix item_agg;    // items x d, from the last round's weights
    Matrix user_out;    // users x d, after the layer map
    Matrix item_out;
    Matrix routing;     // edges x k, softmax of the scores after the last update
};

struct IntentOutput {
    Matrix users;  // sum of per-layer outputs, users x d
    Matrix items;
    std::vector<LayerCache> layers;
    std::vector<std::uint32_t> isolated_users;
    std::vector<std::uint32_t> isolated_items;
};

IntentOutput intents_forward(const InteractionGraph& graph, const Matrix& user_id, const Matrix& item_id,
                             std::span<const LayerParams> layers, const DisentangleConfig& cfg,
                             unsigned threads = 1);

struct IntentGrad {
    Matrix user_id;
    Matrix item_id;
    std::vector<LayerParams> layers;
};

/// Accumulates into `grad` the gradient of a loss whose derivatives with
/// respect to the forward outputs are `d_users` and `d_items`.
void intents_backward(const InteractionGraph& graph, const Matrix& user_id, const Matrix& item_id,
                      std::span<const LayerParams> layers, const DisentangleConfig& cfg, const IntentOutput& fwd,
                      const Matrix& d_users, const Matrix& d_items, IntentGrad& grad, unsigned threads = 1);

}  // namespace cadsi
