#include "cadsi/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cadsi/intervention.hpp"
#include "cadsi/rng.hpp"

namespace cadsi {

void SplitConfig::validate() const {
    for (double r : {train, validation, test})
        if (!(r >= 0.0 && r <= 1.0)) throw Error(ErrorCode::config, "split fractions must lie in [0, 1]");
    if (std::abs(train + validation + test - 1.0) > 1e-9)
        throw Error(ErrorCode::config, "split fractions must sum to 1");
}

DataSplit split_interactions(const InteractionMatrix& m, const SplitConfig& cfg) {
    cfg.validate();
    const auto by_user = group_by_user(m.entries, m.users.size());
    DataSplit out;
    for (std::uint32_t u = 0; u < by_user.size(); ++u) {
        std::vector<std::uint32_t> items = by_user[u];
        const std::size_t n = items.size();
        if (n == 0) continue;
        Rng rng = Rng::keyed({cfg.seed, 0x5917, u});
        rng.shuffle(std::span<std::uint32_t>(items));
        auto share = [n](double r) { return static_cast<std::size_t>(std::floor(static_cast<double>(n) * r + 0.5)); };
        std::size_t n_test = share(cfg.test), n_val = share(cfg.validation);
        if (n_test + n_val > n - 1) {
            out.shrunk_users.push_back(u);
            while (n_test + n_val > n - 1) {
                if (n_test >= n_val && n_test > 0) --n_test;
                else --n_val;
            }
        }
        for (std::size_t q = 0; q < n; ++q) {
            auto& dst = q < n_test ? out.test : q < n_test + n_val ? out.validation : out.train;
            dst.emplace_back(u, items[q]);
        }
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.validation.begin(), out.validation.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

std::vector<std::vector<std::uint32_t>> group_by_user(std::span<const Interaction> pairs, std::size_t users) {
    std::vector<std::vector<std::uint32_t>> out(users);
    for (auto [u, i] : pairs) {
        if (u >= users) throw Error(ErrorCode::invalid_argument, "interaction user index out of range");
        out[u].push_back(i);
    }
    for (auto& v : out) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    return out;
}

std::vector<std::uint32_t> rank_items(std::span<const double> scores, std::span<const std::uint32_t> exclude) {
    std::vector<std::uint32_t> out;
    out.reserve(scores.size());
    for (std::uint32_t i = 0; i < scores.size(); ++i)
        if (!std::binary_search(exclude.begin(), exclude.end(), i)) out.push_back(i);
    std::stable_sort(out.begin(), out.end(), [&](std::uint32_t a, std::uint32_t b) { return scores[a] > scores[b]; });
    return out;
}

namespace {

void require_k(std::size_t k) {
    if (k < 1) throw Error(ErrorCode::invalid_argument, "K must be >= 1");
}

bool contains(std::span<const std::uint32_t> sorted, std::uint32_t x) {
    return std::binary_search(sorted.begin(), sorted.end(), x);
}

}  // namespace

std::optional<double> recall_at_k(std::span<const std::uint32_t> ranked, std::span<const std::uint32_t> test,
                                  std::size_t k) {
    require_k(k);
    if (test.empty()) return std::nullopt;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r) hits += contains(test, ranked[r]);
    return static_cast<double>(hits) / static_cast<double>(test.size());
}

std::optional<double> ndcg_at_k(std::span<const std::uint32_t> ranked, std::span<const std::uint32_t> test,
                                std::size_t k) {
    require_k(k);
    if (test.empty()) return std::nullopt;
    double dcg = 0.0, ideal = 0.0;
    for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r)
        if (contains(test, ranked[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    for (std::size_t r = 0; r < std::min(k, test.size()); ++r) ideal += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    return dcg / ideal;
}

const MetricRow& MetricReport::at(std::size_t k) const {
    for (const auto& r : rows)
        if (r.k == k) return r;
    throw Error(ErrorCode::invalid_argument, "no metrics recorded at K=" + std::to_string(k));
}

std::string MetricReport::to_csv() const {
    std::string out = "K,recall,ndcg,n_users\n";
    for (const auto& r : rows)
        out += std::to_string(r.k) + "," + format_double(r.recall) + "," + format_double(r.ndcg) + "," +
               std::to_string(r.users) + "\n";
    return out;
}

MetricReport evaluate(const UserScorer& scorer, const EvalRequest& req) {
    if (!req.train || !req.test) throw Error(ErrorCode::invalid_argument, "evaluation needs train and test sets");
    if (req.ks.empty()) throw Error(ErrorCode::invalid_argument, "no cutoffs requested");
    for (std::size_t k : req.ks) require_k(k);
    const std::size_t users = req.test->size();
    const std::size_t nk = req.ks.size();
    // Per-user values, reduced afterwards in user order.
    std::vector<double> recall(users * nk), ndcg(users * nk);
    std::vector<char> counted(users, 0);
    parallel_for(users, req.threads, [&](std::size_t u) {
        std::vector<std::uint32_t> test = (*req.test)[u];
        if (req.restrict_to) {
            std::erase_if(test, [&](std::uint32_t i) { return !contains(*req.restrict_to, i); });
        }
        if (test.empty()) return;
        std::vector<double> scores(req.items);
        scorer(static_cast<std::uint32_t>(u), scores);
        const auto& seen = (*req.train)[u];
        const auto ranked = rank_items(scores, seen);
        for (std::uint32_t i : ranked)
            if (contains(seen, i))
                throw Error(ErrorCode::invalid_argument, "training item ranked for user " + std::to_string(u));
        for (std::size_t q = 0; q < nk; ++q) {
            recall[u * nk + q] = *recall_at_k(ranked, test, req.ks[q]);
            ndcg[u * nk + q] = *ndcg_at_k(ranked, test, req.ks[q]);
        }
        counted[u] = 1;
    });
    MetricReport report;
    for (std::size_t q = 0; q < nk; ++q) {
        MetricRow row{req.ks[q], 0.0, 0.0, 0};
        for (std::size_t u = 0; u < users; ++u) {
            if (!counted[u]) continue;
            row.recall += recall[u * nk + q];
            row.ndcg += ndcg[u * nk + q];
            ++row.users;
        }
        if (row.users) {
            row.recall /= static_cast<double>(row.users);
            row.ndcg /= static_cast<double>(row.users);
        }
        report.rows.push_back(row);
    }
    return report;
}

UserScorer model_scorer(const ModelState& state, const ModelParams& params, double delta) {
    return [&state, &params, delta](std::uint32_t u, std::span<double> out) {
        for (std::uint32_t i = 0; i < out.size(); ++i) out[i] = score(state, params, u, i, delta);
    };
}

UserScorer intervened_scorer(const ModelState& state, const ModelParams& params, const Matrix& aspects,
                             double delta) {
    return [&state, &params, &aspects, delta](std::uint32_t u, std::span<double> out) {
        for (std::uint32_t i = 0; i < out.size(); ++i) out[i] = intervened_score(state, params, aspects, u, i, delta);
    };
}

std::vector<NodeId> head_attributes(const Hin& hin, TypeId item_type, TypeId aspect) {
    std::vector<NodeId> attrs = hin.nodes_of_type(aspect);
    std::vector<std::size_t> count(hin.node_count(), 0);
    std::size_t total = 0;
    for (NodeId a : attrs) {
        count[a] = hin.neighbors(a, item_type).size();
        total += count[a];
    }
    std::stable_sort(attrs.begin(), attrs.end(), [&](NodeId a, NodeId b) { return count[a] > count[b]; });
    std::vector<NodeId> head;
    std::size_t mass = 0;
    for (NodeId a : attrs) {
        if (2 * mass >= total) break;
        head.push_back(a);
        mass += count[a];
    }
    std::sort(head.begin(), head.end());
    return head;
}

std::vector<std::uint32_t> minority_items(const Hin& hin, std::span<const NodeId> items, TypeId item_type,
                                          TypeId aspect) {
    const auto head = head_attributes(hin, item_type, aspect);
    std::vector<std::uint32_t> out;
    for (std::uint32_t i = 0; i < items.size(); ++i) {
        const auto attrs = hin.neighbors(items[i], aspect);
        const bool in_head = std::any_of(attrs.begin(), attrs.end(),
                                         [&](NodeId a) { return std::binary_search(head.begin(), head.end(), a); });
        if (!in_head) out.push_back(i);
    }
    return out;
}

bool is_ablation_axis(const std::string& axis) {
    return axis == "k" || axis == "L" || axis == "iterations_n" || axis == "K";
}

std::vector<std::string> default_ablation_values(const std::string& axis) {
    if (axis == "k") return {"1", "2", "4", "8", "16"};
    if (axis == "L") return {"1", "2", "3"};
    if (axis == "iterations_n") return {"0", "35", "70", "140"};
    if (axis == "K") return {"10", "20", "30", "40", "50"};
    throw Error(ErrorCode::invalid_argument, "unknown ablation axis '" + axis + "'");
}

std::vector<AblationRow> ablation_sweep(const std::string& axis, std::span<const std::string> values,
                                        const std::function<MetricReport(const std::string& value)>& run) {
    if (!is_ablation_axis(axis)) throw Error(ErrorCode::invalid_argument, "unknown ablation axis '" + axis + "'");
    if (values.empty()) throw Error(ErrorCode::invalid_argument, "ablation needs at least one value");
    std::vector<AblationRow> rows;
    for (const auto& v : values) {
        const std::uint64_t n = parse_uint(v);
        if (n == 0 && axis != "iterations_n")
            throw Error(ErrorCode::invalid_argument, "ablation value for " + axis + " must be >= 1");
        const MetricReport report = run(v);
        const MetricRow& r = report.at(axis == "K" ? n : 20);
        rows.push_back({axis, v, r.recall, r.ndcg});
    }
    return rows;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
    std::string out = "axis,value,recall@20,ndcg@20\n";
    for (const auto& r : rows) out += r.axis + "," + r.value + "," + format_double(r.recall) + "," + format_double(r.ndcg) + "\n";
    return out;
}

}  // namespace cadsi
