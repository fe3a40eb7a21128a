#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cadsi/hin.hpp"
#include "cadsi/intents.hpp"
#include "cadsi/model.hpp"

namespace cadsi {

struct SplitConfig {
    double train = 0.8;
    double validation = 0.1;
    double test = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

using Interaction = std::pair<std::uint32_t, std::uint32_t>;  // (user index, item index)

struct DataSplit {
    std::vector<Interaction> train;
    std::vector<Interaction> validation;
    std::vector<Interaction> test;
    /// Users whose held-out share was moved back to train to keep one training item.
    std::vector<std::uint32_t> shrunk_users;
};

/// Per-user shuffle then test / validation / train cut; each part sorted.
DataSplit split_interactions(const InteractionMatrix& m, const SplitConfig& cfg);

/// Items per user, sorted; users with no entries get an empty list.
std::vector<std::vector<std::uint32_t>> group_by_user(std::span<const Interaction> pairs, std::size_t users);

/// Every item not in `exclude` (sorted), by score descending with ties to the lower index.
std::vector<std::uint32_t> rank_items(std::span<const double> scores, std::span<const std::uint32_t> exclude);

/// |top-K ∩ test| / |test|; nullopt when the test set is empty.
std::optional<double> recall_at_k(std::span<const std::uint32_t> ranked, std::span<const std::uint32_t> test,
                                  std::size_t k);

/// Binary-gain DCG@K over the ideal DCG of min(|test|, K) hits; nullopt when the test set is empty.
std::optional<double> ndcg_at_k(std::span<const std::uint32_t> ranked, std::span<const std::uint32_t> test,
                                std::size_t k);

struct MetricRow {
    std::size_t k;
    double recall;
    double ndcg;
    std::size_t users;
};

struct MetricReport {
    std::vector<MetricRow> rows;

    const MetricRow& at(std::size_t k) const;
    std::string to_csv() const;
};

/// Fills `out` (one entry per item) with a user's scores.
using UserScorer = std::function<void(std::uint32_t user, std::span<double> out)>;

struct EvalRequest {
    std::size_t items = 0;
    const std::vector<std::vector<std::uint32_t>>* train = nullptr;
    const std::vector<std::vector<std::uint32_t>>* test = nullptr;
    std::vector<std::size_t> ks{20};
    /// When set, test items outside this (sorted) list are ignored.
    const std::vector<std::uint32_t>* restrict_to = nullptr;
    unsigned threads = 1;
};

/// Full ranking per user, averaged over users with a non-empty (restricted) test set.
MetricReport evaluate(const UserScorer& scorer, const EvalRequest& req);

/// Ranks with the plain prediction.
UserScorer model_scorer(const ModelState& state, const ModelParams& params, double delta);
/// Ranks with the refined prediction gated by `aspects`.
UserScorer intervened_scorer(const ModelState& state, const ModelParams& params, const Matrix& aspects, double delta);

/// Attribute nodes of `aspect` sorted by connection count (desc, then id) and
/// the shortest prefix holding at least half of all connections.
std::vector<NodeId> head_attributes(const Hin& hin, TypeId item_type, TypeId aspect);

/// Local item indices whose `aspect` attributes are all outside the head set,
/// items with no such attribute included.
std::vector<std::uint32_t> minority_items(const Hin& hin, std::span<const NodeId> items, TypeId item_type,
                                          TypeId aspect);

struct AblationRow {
    std::string axis;
    std::string value;
    double recall;
    double ndcg;
};

/// Sweep axes: k, L, iterations_n, K.
bool is_ablation_axis(const std::string& axis);
std::vector<std::string> default_ablation_values(const std::string& axis);

/// One run per value; metrics are read at K=20, or at K=value on the K axis.
std::vector<AblationRow> ablation_sweep(const std::string& axis, std::span<const std::string> values,
                                        const std::function<MetricReport(const std::string& value)>& run);

std::string ablation_csv(std::span<const AblationRow> rows);

}  // namespace cadsi
