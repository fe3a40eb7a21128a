#include "cadsi/intents.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cadsi/rng.hpp"

namespace cadsi {

void DisentangleConfig::validate() const {
    if (k < 1) throw Error(ErrorCode::config, "intent count k must be >= 1");
    if (iters < 1) throw Error(ErrorCode::config, "routing iterations must be >= 1");
    if (layers < 1) throw Error(ErrorCode::config, "layer count must be >= 1");
    if (dim % k != 0)
        throw Error(ErrorCode::config,
                    "dim " + std::to_string(dim) + " is not divisible by k " + std::to_string(k));
}

ChunkedEmbedding::ChunkedEmbedding(std::span<const double> flat, std::size_t k)
    : k_(k), width_(k ? flat.size() / k : 0), values_(flat.begin(), flat.end()) {
    if (k == 0 || flat.size() % k != 0)
        throw Error(ErrorCode::invalid_argument, "embedding of length " + std::to_string(flat.size()) +
                                                     " cannot be split into " + std::to_string(k) + " chunks");
}

ChunkedEmbedding init_chunks(std::span<const double> id_embedding, const DisentangleConfig& cfg) {
    if (id_embedding.size() != cfg.dim)
        throw Error(ErrorCode::invalid_argument, "id embedding length " + std::to_string(id_embedding.size()) +
                                                     " differs from dim " + std::to_string(cfg.dim));
    return ChunkedEmbedding(id_embedding, cfg.k);
}

InteractionGraph::InteractionGraph(std::size_t users, std::size_t items,
                                   std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs)
    : users_(users), items_(items) {
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    user_offsets_.assign(users + 1, 0);
    item_offsets_.assign(items + 1, 0);
    for (auto [u, i] : pairs) {
        if (u >= users || i >= items) throw Error(ErrorCode::invalid_argument, "interaction index out of range");
        user_of_.push_back(u);
        item_of_.push_back(i);
        ++user_offsets_[u + 1];
        ++item_offsets_[i + 1];
    }
    std::partial_sum(user_offsets_.begin(), user_offsets_.end(), user_offsets_.begin());
    std::partial_sum(item_offsets_.begin(), item_offsets_.end(), item_offsets_.begin());
    item_edge_ids_.resize(user_of_.size());
    std::vector<std::size_t> fill(item_offsets_.begin(), item_offsets_.end() - 1);
    for (std::uint32_t e = 0; e < user_of_.size(); ++e) item_edge_ids_[fill[item_of_[e]]++] = e;
}

InteractionGraph::InteractionGraph(const InteractionMatrix& m)
    : InteractionGraph(m.user_count(), m.item_count(), m.entries) {}

std::optional<std::size_t> InteractionGraph::find_edge(std::uint32_t u, std::uint32_t i) const {
    const auto begin = item_of_.begin() + static_cast<std::ptrdiff_t>(user_offsets_[u]);
    const auto end = item_of_.begin() + static_cast<std::ptrdiff_t>(user_offsets_[u + 1]);
    auto it = std::lower_bound(begin, end, i);
    if (it == end || *it != i) return std::nullopt;
    return static_cast<std::size_t>(it - item_of_.begin());
}

Matrix init_scores(const InteractionGraph& graph, std::size_t k) {
    return Matrix(graph.edge_count(), k, 1.0 / static_cast<double>(k));
}

RoutingAudit& routing_audit() {
    static RoutingAudit audit;
    return audit;
}

void reset_routing_audit() {
    auto& a = routing_audit();
    a.calls = 0;
    a.rows = 0;
    a.violations = 0;
}

NormalizedScores normalize_scores(const Matrix& raw, const InteractionGraph& graph) {
    const std::size_t k = raw.cols();
    NormalizedScores out{Matrix(raw.rows(), k), Matrix(graph.user_count(), k), Matrix(graph.item_count(), k)};
    std::uint64_t violations = 0;
    for (std::size_t e = 0; e < raw.rows(); ++e) {
        const auto s = raw.row(e);
        auto p = out.tilde.row(e);
        const double top = *std::max_element(s.begin(), s.end());
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) total += p[j] = std::exp(s[j] - top);
        double check = 0.0;
        bool positive = true;
        for (std::size_t j = 0; j < k; ++j) {
            p[j] /= total;
            check += p[j];
            positive = positive && p[j] > 0.0;
        }
        if (!positive || !(std::abs(check - 1.0) <= 1e-9)) ++violations;
    }
    for (std::size_t e = 0; e < raw.rows(); ++e) {
        axpy(1.0, out.tilde.row(e), out.user_degree.row(graph.user_of(e)));
        axpy(1.0, out.tilde.row(e), out.item_degree.row(graph.item_of(e)));
    }
    auto& audit = routing_audit();
    ++audit.calls;
    audit.rows += raw.rows();
    audit.violations += violations;
    return out;
}

Matrix routing_weights(const NormalizedScores& norm, const InteractionGraph& graph) {
    Matrix w(norm.tilde.rows(), norm.tilde.cols());
    for (std::size_t e = 0; e < w.rows(); ++e) {
        const auto du = norm.user_degree.row(graph.user_of(e));
        const auto di = norm.item_degree.row(graph.item_of(e));
        for (std::size_t j = 0; j < w.cols(); ++j) w(e, j) = norm.tilde(e, j) / std::sqrt(du[j] * di[j]);
    }
    return w;
}

namespace {

/// out[u] = sum over u's edges of w[e,j] * items[i] chunk-wise, for users with edges.
void aggregate_users(const InteractionGraph& g, const Matrix& w, const Matrix& items, const Matrix& fallback,
                     std::size_t k, Matrix& out, unsigned threads) {
    const std::size_t c = items.cols() / k;
    parallel_for(g.user_count(), threads, [&](std::size_t u) {
        auto dst = out.row(u);
        const auto uid = static_cast<std::uint32_t>(u);
        if (g.user_begin(uid) == g.user_end(uid)) {
            std::copy(fallback.row(u).begin(), fallback.row(u).end(), dst.begin());
            return;
        }
        std::fill(dst.begin(), dst.end(), 0.0);
        for (std::size_t e = g.user_begin(uid); e < g.user_end(uid); ++e) {
            const auto src = items.row(g.item_of(e));
            for (std::size_t j = 0; j < k; ++j)
                axpy(w(e, j), src.subspan(j * c, c), dst.subspan(j * c, c));
        }
    });
}

void aggregate_items(const InteractionGraph& g, const Matrix& w, const Matrix& users, const Matrix& fallback,
                     std::size_t k, Matrix& out, unsigned threads) {
    const std::size_t c = users.cols() / k;
    parallel_for(g.item_count(), threads, [&](std::size_t i) {
        auto dst = out.row(i);
        const auto edges = g.item_edges(static_cast<std::uint32_t>(i));
        if (edges.empty()) {
            std::copy(fallback.row(i).begin(), fallback.row(i).end(), dst.begin());
            return;
        }
        std::fill(dst.begin(), dst.end(), 0.0);
        for (auto e : edges) {
            const auto src = users.row(g.user_of(e));
            for (std::size_t j = 0; j < k; ++j)
                axpy(w(e, j), src.subspan(j * c, c), dst.subspan(j * c, c));
        }
    });
}

void apply_layer(const LayerParams& layer, const Matrix& in, std::size_t k, Matrix& out, unsigned threads) {
    const std::size_t c = layer.weight.rows();
    parallel_for(in.rows(), threads, [&](std::size_t r) {
        for (std::size_t j = 0; j < k; ++j) {
            const auto x = in.row(r).subspan(j * c, c);
            auto y = out.row(r).subspan(j * c, c);
            for (std::size_t a = 0; a < c; ++a) y[a] = std::tanh(layer.bias[a] + dot(layer.weight.row(a), x));
        }
    });
}

Matrix tanh_of(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t t = 0; t < m.size(); ++t) out.values()[t] = std::tanh(m.values()[t]);
    return out;
}

}  // namespace

bool aggregate_chunk(std::uint32_t u, std::size_t j, const NormalizedScores& norm, const InteractionGraph& graph,
                     const Matrix& item_chunks, std::size_t k, std::span<double> out) {
    if (graph.user_begin(u) == graph.user_end(u)) return false;
    const std::size_t c = item_chunks.cols() / k;
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t e = graph.user_begin(u); e < graph.user_end(u); ++e) {
        const std::uint32_t i = graph.item_of(e);
        const double w = norm.tilde(e, j) / std::sqrt(norm.user_degree(u, j) * norm.item_degree(i, j));
        axpy(w, item_chunks.row(i).subspan(j * c, c), out);
    }
    return true;
}

Matrix update_scores(const Matrix& raw, const InteractionGraph& graph, const Matrix& user_chunks,
                     const Matrix& item_chunks, std::size_t k) {
    const std::size_t c = item_chunks.cols() / k;
    Matrix out = raw;
    for (std::size_t e = 0; e < raw.rows(); ++e) {
        const auto x = user_chunks.row(graph.user_of(e));
        const auto y = item_chunks.row(graph.item_of(e));
        for (std::size_t j = 0; j < k; ++j) {
            double s = 0.0;
            for (std::size_t a = j * c; a < (j + 1) * c; ++a) s += x[a] * std::tanh(y[a]);
            out(e, j) += s;
        }
    }
    return out;
}

std::vector<LayerParams> init_layers(const DisentangleConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const std::size_t c = cfg.chunk();
    std::vector<LayerParams> layers;
    for (std::size_t t = 0; t < cfg.layers; ++t) {
        Rng rng = Rng::keyed({seed, 0x1A7E, t});
        // Xavier-uniform keeps tanh away from saturation.
        const double bound = std::sqrt(6.0 / static_cast<double>(2 * c));
        LayerParams p{Matrix(c, c), std::vector<double>(c, 0.0)};
        for (double& x : p.weight.values()) x = rng.uniform(-bound, bound);
        layers.push_back(std::move(p));
    }
    return layers;
}

IntentOutput intents_forward(const InteractionGraph& graph, const Matrix& user_id, const Matrix& item_id,
                             std::span<const LayerParams> layers, const DisentangleConfig& cfg, unsigned threads) {
    cfg.validate();
    const std::size_t d = cfg.dim, k = cfg.k;
    if (user_id.rows() != graph.user_count() || item_id.rows() != graph.item_count() || user_id.cols() != d ||
        item_id.cols() != d)
        throw Error(ErrorCode::invalid_argument, "id embedding tables do not match the interaction graph");
    if (layers.size() != cfg.layers) throw Error(ErrorCode::invalid_argument, "layer parameter count mismatch");

    IntentOutput out;
    out.users = Matrix(graph.user_count(), d);
    out.items = Matrix(graph.item_count(), d);
    for (std::uint32_t u = 0; u < graph.user_count(); ++u)
        if (graph.user_begin(u) == graph.user_end(u)) out.isolated_users.push_back(u);
    for (std::uint32_t i = 0; i < graph.item_count(); ++i)
        if (graph.item_edges(i).empty()) out.isolated_items.push_back(i);

    const Matrix* prev_users = &user_id;
    const Matrix* prev_items = &item_id;
    for (std::size_t t = 0; t < cfg.layers; ++t) {
        LayerCache cache;
        const Matrix tanh_items = tanh_of(*prev_items);
        Matrix scores = init_scores(graph, k);
        for (std::size_t r = 0; r < cfg.iters; ++r) {
            RoundCache round;
            round.norm = normalize_scores(scores, graph);
            round.weights = routing_weights(round.norm, graph);
            round.user_agg = Matrix(graph.user_count(), d);
            aggregate_users(graph, round.weights, *prev_items, *prev_users, k, round.user_agg, threads);
            scores = update_scores(scores, graph, round.user_agg, *prev_items, k);
            cache.rounds.push_back(std::move(round));
        }
        cache.routing = normalize_scores(scores, graph).tilde;
        cache.item_agg = Matrix(graph.item_count(), d);
        aggregate_items(graph, cache.rounds.back().weights, *prev_users, *prev_items, k, cache.item_agg, threads);
        cache.user_out = Matrix(graph.user_count(), d);
        cache.item_out = Matrix(graph.item_count(), d);
        apply_layer(layers[t], cache.rounds.back().user_agg, k, cache.user_out, threads);
        apply_layer(layers[t], cache.item_agg, k, cache.item_out, threads);
        axpy(1.0, cache.user_out.values(), out.users.values());
        axpy(1.0, cache.item_out.values(), out.items.values());
        out.layers.push_back(std::move(cache));
        prev_users = &out.layers.back().user_out;
        prev_items = &out.layers.back().item_out;
    }
    if (!all_finite(out.users.values()) || !all_finite(out.items.values()))
        throw Error(ErrorCode::non_finite, "intent forward pass produced a non-finite value");
    return out;
}

namespace {

/// Backward of out = tanh(W in + b) chunk-wise. Adds into d_in, d_weight, d_bias.
void layer_backward(const LayerParams& layer, const Matrix& in, const Matrix& out, const Matrix& d_out,
                    std::size_t k, Matrix& d_in, LayerParams& d_layer) {
    const std::size_t c = layer.weight.rows();
    std::vector<double> dz(c);
    for (std::size_t r = 0; r < in.rows(); ++r) {
        for (std::size_t j = 0; j < k; ++j) {
            const auto x = in.row(r).subspan(j * c, c);
            const auto y = out.row(r).subspan(j * c, c);
            const auto g = d_out.row(r).subspan(j * c, c);
            auto dx = d_in.row(r).subspan(j * c, c);
            for (std::size_t a = 0; a < c; ++a) dz[a] = g[a] * (1.0 - y[a] * y[a]);
            for (std::size_t a = 0; a < c; ++a) {
                if (dz[a] == 0.0) continue;
                d_layer.bias[a] += dz[a];
                axpy(dz[a], x, d_layer.weight.row(a));
                axpy(dz[a], layer.weight.row(a), dx);
            }
        }
    }
}

}  // namespace

void intents_backward(const InteractionGraph& graph, const Matrix& user_id, const Matrix& item_id,
                      std::span<const LayerParams> layers, const DisentangleConfig& cfg, const IntentOutput& fwd,
                      const Matrix& d_users, const Matrix& d_items, IntentGrad& grad, unsigned threads) {
    const std::size_t d = cfg.dim, k = cfg.k, c = cfg.chunk();
    const std::size_t m = graph.user_count(), n = graph.item_count(), E = graph.edge_count();
    if (grad.layers.size() != layers.size()) {
        grad.layers.clear();
        for (const auto& l : layers)
            grad.layers.push_back({Matrix(l.weight.rows(), l.weight.cols()), std::vector<double>(l.bias.size(), 0.0)});
    }
    if (grad.user_id.rows() != m) grad.user_id = Matrix(m, d);
    if (grad.item_id.rows() != n) grad.item_id = Matrix(n, d);

    // Gradient reaching each layer's outputs: the direct sum term plus whatever
    // flows back from the layer above.
    Matrix carry_users(m, d), carry_items(n, d);
    for (std::size_t tt = cfg.layers; tt-- > 0;) {
        const LayerCache& cache = fwd.layers[tt];
        const Matrix& prev_users = tt == 0 ? user_id : fwd.layers[tt - 1].user_out;
        const Matrix& prev_items = tt == 0 ? item_id : fwd.layers[tt - 1].item_out;

        Matrix g_users = d_users, g_items = d_items;
        axpy(1.0, carry_users.values(), g_users.values());
        axpy(1.0, carry_items.values(), g_items.values());

        Matrix d_user_agg(m, d), d_item_agg(n, d);
        layer_backward(layers[tt], cache.rounds.back().user_agg, cache.user_out, g_users, k, d_user_agg,
                       grad.layers[tt]);
        layer_backward(layers[tt], cache.item_agg, cache.item_out, g_items, k, d_item_agg, grad.layers[tt]);

        Matrix d_prev_users(m, d), d_prev_items(n, d);
        Matrix tanh_items = tanh_of(prev_items);

        // Item aggregate: B[i] = sum_e w[e] X[u] using the last round's weights.
        Matrix d_weights(E, k);
        {
            const Matrix& w = cache.rounds.back().weights;
            parallel_for(m, threads, [&](std::size_t u) {
                const auto uid = static_cast<std::uint32_t>(u);
                const auto x = prev_users.row(u);
                auto dx = d_prev_users.row(u);
                for (std::size_t e = graph.user_begin(uid); e < graph.user_end(uid); ++e) {
                    const auto gb = d_item_agg.row(graph.item_of(e));
                    for (std::size_t j = 0; j < k; ++j) {
                        d_weights(e, j) += dot(gb.subspan(j * c, c), x.subspan(j * c, c));
                        axpy(w(e, j), gb.subspan(j * c, c), dx.subspan(j * c, c));
                    }
                }
            });
            for (auto i : fwd.isolated_items) axpy(1.0, d_item_agg.row(i), d_prev_items.row(i));
        }

        Matrix d_agg = std::move(d_user_agg);  // gradient on the current round's user aggregate
        Matrix d_scores_carry(E, k);
        for (std::size_t r = cfg.iters; r-- > 0;) {
            const RoundCache& round = cache.rounds[r];
            const Matrix& w = round.weights;
            if (r + 1 != cfg.iters) d_weights.fill(0.0);

            // User aggregate: A[u] = sum_e w[e] Y[i] (isolated users pass X through).
            parallel_for(E, threads, [&](std::size_t e) {
                const auto ga = d_agg.row(graph.user_of(e));
                const auto y = prev_items.row(graph.item_of(e));
                for (std::size_t j = 0; j < k; ++j) d_weights(e, j) += dot(ga.subspan(j * c, c), y.subspan(j * c, c));
            });
            parallel_for(n, threads, [&](std::size_t i) {
                auto dy = d_prev_items.row(i);
                for (auto e : graph.item_edges(static_cast<std::uint32_t>(i))) {
                    const auto ga = d_agg.row(graph.user_of(e));
                    for (std::size_t j = 0; j < k; ++j) axpy(w(e, j), ga.subspan(j * c, c), dy.subspan(j * c, c));
                }
            });
            for (auto u : fwd.isolated_users) axpy(1.0, d_agg.row(u), d_prev_users.row(u));

            // w = p / sqrt(Du Di) with Du, Di sums of p.
            Matrix d_tilde(E, k), d_du(m, k), d_di(n, k);
            for (std::size_t e = 0; e < E; ++e) {
                const auto u = graph.user_of(e), i = graph.item_of(e);
                for (std::size_t j = 0; j < k; ++j) {
                    const double gw = d_weights(e, j);
                    if (gw == 0.0) continue;
                    const double du = round.norm.user_degree(u, j), di = round.norm.item_degree(i, j);
                    d_tilde(e, j) += gw / std::sqrt(du * di);
                    d_du(u, j) -= 0.5 * gw * w(e, j) / du;
                    d_di(i, j) -= 0.5 * gw * w(e, j) / di;
                }
            }
            for (std::size_t e = 0; e < E; ++e) {
                const auto u = graph.user_of(e), i = graph.item_of(e);
                for (std::size_t j = 0; j < k; ++j) d_tilde(e, j) += d_du(u, j) + d_di(i, j);
            }
            // Softmax backward into the raw scores of this round.
            for (std::size_t e = 0; e < E; ++e) {
                const auto p = round.norm.tilde.row(e);
                const auto gp = d_tilde.row(e);
                const double inner = dot(p, gp);
                for (std::size_t j = 0; j < k; ++j) d_scores_carry(e, j) += p[j] * (gp[j] - inner);
            }
            if (r == 0) break;  // the first round starts from constant scores

            // scores_r = scores_{r-1} + A_{r-1} . tanh(Y)
            const Matrix& prev_agg = cache.rounds[r - 1].user_agg;
            Matrix d_prev_agg(m, d);
            parallel_for(m, threads, [&](std::size_t u) {
                const auto uid = static_cast<std::uint32_t>(u);
                auto dst = d_prev_agg.row(u);
                for (std::size_t e = graph.user_begin(uid); e < graph.user_end(uid); ++e) {
                    const auto ty = tanh_items.row(graph.item_of(e));
                    for (std::size_t j = 0; j < k; ++j)
                        axpy(d_scores_carry(e, j), ty.subspan(j * c, c), dst.subspan(j * c, c));
                }
            });
            parallel_for(n, threads, [&](std::size_t i) {
                const auto ty = tanh_items.row(i);
                auto dy = d_prev_items.row(i);
                for (auto e : graph.item_edges(static_cast<std::uint32_t>(i))) {
                    const auto a = prev_agg.row(graph.user_of(e));
                    for (std::size_t j = 0; j < k; ++j) {
                        const double g = d_scores_carry(e, j);
                        if (g == 0.0) continue;
                        for (std::size_t q = j * c; q < (j + 1) * c; ++q) dy[q] += g * a[q] * (1.0 - ty[q] * ty[q]);
                    }
                }
            });
            d_agg = std::move(d_prev_agg);
        }

        if (tt == 0) {
            axpy(1.0, d_prev_users.values(), grad.user_id.values());
            axpy(1.0, d_prev_items.values(), grad.item_id.values());
        } else {
            carry_users = std::move(d_prev_users);
            carry_items = std::move(d_prev_items);
        }
    }
}

}  // namespace cadsi
