#include "cadsi/hetsg.hpp"

#include <algorithm>
#include <cmath>

namespace cadsi {

void SkipGramConfig::validate() const {
    if (dim < 2) throw Error(ErrorCode::config, "skip-gram dim must be >= 2");
    if (window < 1) throw Error(ErrorCode::config, "skip-gram window must be >= 1");
    if (negatives < 1) throw Error(ErrorCode::config, "skip-gram negatives must be >= 1");
}

MetaPathEmbeddings zeros_like(const MetaPathEmbeddings& emb) {
    MetaPathEmbeddings out = emb;
    for (auto& t : out.tables) {
        t.target.fill(0.0);
        t.context.fill(0.0);
    }
    return out;
}

NegativeSampler::NegativeSampler(const WalkCorpus& corpus, const Hin& hin)
    : type_count_(hin.schema().type_count()), tables_(corpus.paths.size() * hin.schema().type_count()) {
    std::vector<std::vector<double>> counts(corpus.paths.size(), std::vector<double>(hin.node_count(), 0.0));
    for (const auto& [type, walks] : corpus.by_start_type)
        for (const auto& w : walks)
            for (NodeId v : w.nodes) counts[w.path][v] += 1.0;
    for (std::size_t p = 0; p < corpus.paths.size(); ++p) {
        for (NodeId v = 0; v < hin.node_count(); ++v) {
            if (counts[p][v] == 0.0) continue;
            auto& table = tables_[p * type_count_ + hin.type_of(v).value];
            const double prev = table.cumulative.empty() ? 0.0 : table.cumulative.back();
            table.nodes.push_back(v);
            table.cumulative.push_back(prev + std::pow(counts[p][v], 0.75));
        }
    }
}

bool NegativeSampler::draw(std::size_t path, TypeId type, Rng& rng, NodeId& out) const {
    const auto& table = tables_[path * type_count_ + type.value];
    if (table.nodes.empty()) return false;
    const double x = rng.uniform() * table.cumulative.back();
    auto it = std::upper_bound(table.cumulative.begin(), table.cumulative.end(), x);
    if (it == table.cumulative.end()) --it;
    out = table.nodes[static_cast<std::size_t>(it - table.cumulative.begin())];
    return true;
}

PairSampler::PairSampler(const WalkCorpus& corpus, const Hin& hin, std::size_t window)
    : corpus_(&corpus), hin_(&hin), window_(window), negative_(corpus, hin) {
    std::size_t total = 0;
    for (const auto& [type, walks] : corpus.by_start_type) {
        for (const auto& w : walks) {
            if (w.nodes.size() < 2) continue;
            walks_.push_back(&w);
            total += w.nodes.size();
            cumulative_tokens_.push_back(total);
        }
    }
    if (walks_.empty()) throw Error(ErrorCode::empty_input, "walk corpus has no walk with two or more nodes");
}

SkipGramSample PairSampler::draw(Rng& rng, std::size_t negatives) const {
    const std::size_t token = rng.index(cumulative_tokens_.back());
    const auto it = std::upper_bound(cumulative_tokens_.begin(), cumulative_tokens_.end(), token);
    const std::size_t w = static_cast<std::size_t>(it - cumulative_tokens_.begin());
    const Walk& walk = *walks_[w];
    const std::size_t pos = token - (w == 0 ? 0 : cumulative_tokens_[w - 1]);
    const std::size_t lo = pos >= window_ ? pos - window_ : 0;
    const std::size_t hi = std::min(walk.nodes.size() - 1, pos + window_);
    // Uniform over the other positions in [lo, hi].
    std::size_t ctx = lo + rng.index(hi - lo);
    if (ctx >= pos) ++ctx;
    SkipGramSample s{walk.path, walk.nodes[pos], walk.nodes[ctx], {}};
    const TypeId ctx_type = hin_->type_of(s.context);
    s.negatives.reserve(negatives);
    for (std::size_t k = 0; k < negatives; ++k) {
        NodeId neg = 0;
        if (negative_.draw(walk.path, ctx_type, rng, neg)) s.negatives.push_back(neg);
    }
    return s;
}

MetaPathEmbeddings init_path_embeddings(const WalkCorpus& corpus, std::size_t node_count,
                                        const SkipGramConfig& cfg) {
    cfg.validate();
    MetaPathEmbeddings emb;
    emb.dim = cfg.dim;
    emb.tables.resize(corpus.paths.size());
    std::vector<std::vector<bool>> seen(corpus.paths.size(), std::vector<bool>(node_count, false));
    for (const auto& [type, walks] : corpus.by_start_type)
        for (const auto& w : walks)
            for (NodeId v : w.nodes) seen[w.path][v] = true;
    for (std::size_t p = 0; p < corpus.paths.size(); ++p) {
        emb.path_names.push_back(corpus.paths[p].name);
        auto& t = emb.tables[p];
        t.row_of.assign(node_count, -1);
        for (NodeId v = 0; v < node_count; ++v) {
            if (!seen[p][v]) continue;
            t.row_of[v] = static_cast<std::int32_t>(t.nodes.size());
            t.nodes.push_back(v);
        }
        t.target = Matrix(t.nodes.size(), cfg.dim);
        t.context = Matrix(t.nodes.size(), cfg.dim);
        Rng rng = Rng::keyed({cfg.seed, 0x5347, p});
        const double scale = 0.5 / static_cast<double>(cfg.dim);
        for (double& x : t.target.values()) x = rng.uniform(-scale, scale);
    }
    return emb;
}

double skipgram_pair_loss(const PathTable& table, NodeId center, NodeId context,
                          std::span<const NodeId> negatives, PathTable* grad) {
    if (center == context) return 0.0;
    const auto rc = table.row(center);
    const auto rx = table.row(context);
    if (!rc || !rx) throw Error(ErrorCode::unknown_node, "skip-gram pair references a node outside the path");
    const auto t = table.target.row(*rc);
    double loss = 0.0;
    auto term = [&](std::size_t row, double label) {
        const auto c = table.context.row(row);
        const double z = dot(t, c);
        // label 1: -log s(z); label 0: -log s(-z)
        loss -= label > 0.5 ? log_sigmoid(z) : log_sigmoid(-z);
        if (grad) {
            const double g = sigmoid(z) - label;  // d loss / d z
            axpy(g, c, grad->target.row(*rc));
            axpy(g, t, grad->context.row(row));
        }
    };
    term(*rx, 1.0);
    for (NodeId w : negatives) {
        if (w == context) continue;
        const auto rw = table.row(w);
        if (!rw) throw Error(ErrorCode::unknown_node, "negative sample outside the path");
        term(*rw, 0.0);
    }
    return loss;
}

double skipgram_step(PathTable& table, NodeId center, NodeId context, std::span<const NodeId> negatives,
                     double lr) {
    if (center == context) return 0.0;
    const auto rc = table.row(center);
    const auto rx = table.row(context);
    if (!rc || !rx) throw Error(ErrorCode::unknown_node, "skip-gram pair references a node outside the path");
    auto t = table.target.row(*rc);

    // Every derivative is evaluated at the pre-step point, so repeated
    // negatives behave exactly like the summed gradient.
    std::vector<std::pair<std::size_t, double>> terms;
    terms.reserve(negatives.size() + 1);
    double loss = 0.0;
    auto score = [&](std::size_t row, double label) {
        const double z = dot(t, table.context.row(row));
        loss -= label > 0.5 ? log_sigmoid(z) : log_sigmoid(-z);
        terms.emplace_back(row, sigmoid(z) - label);
    };
    score(*rx, 1.0);
    for (NodeId w : negatives) {
        if (w == context) continue;
        const auto rw = table.row(w);
        if (!rw) throw Error(ErrorCode::unknown_node, "negative sample outside the path");
        score(*rw, 0.0);
    }
    std::vector<double> t_grad(t.size(), 0.0);
    for (const auto& [row, g] : terms) axpy(g, table.context.row(row), t_grad);
    for (const auto& [row, g] : terms) axpy(-lr * g, t, table.context.row(row));
    axpy(-lr, t_grad, t);
    return loss;
}

double skipgram_batch_loss(const MetaPathEmbeddings& emb, std::span<const SkipGramSample> batch,
                           MetaPathEmbeddings* grad) {
    double loss = 0.0;
    for (const auto& s : batch)
        loss += skipgram_pair_loss(emb.tables[s.path], s.center, s.context, s.negatives,
                                   grad ? &grad->tables[s.path] : nullptr);
    return loss;
}

MetaPathEmbeddings train_skipgram(const WalkCorpus& corpus, const Hin& hin, const SkipGramConfig& cfg,
                                  SkipGramTrace* trace) {
    if (corpus.walk_count() == 0) throw Error(ErrorCode::empty_input, "walk corpus is empty");
    MetaPathEmbeddings emb = init_path_embeddings(corpus, hin.node_count(), cfg);
    const NegativeSampler sampler(corpus, hin);
    std::vector<NodeId> negatives;
    negatives.reserve(cfg.negatives);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng = Rng::keyed({cfg.seed, 0xE90C, epoch});
        double total = 0.0;
        std::size_t pairs = 0;
        for (const auto& [type, walks] : corpus.by_start_type) {
            for (const auto& walk : walks) {
                auto& table = emb.tables[walk.path];
                const auto& nodes = walk.nodes;
                for (std::size_t pos = 0; pos < nodes.size(); ++pos) {
                    const std::size_t lo = pos >= cfg.window ? pos - cfg.window : 0;
                    const std::size_t hi = std::min(nodes.size() - 1, pos + cfg.window);
                    for (std::size_t ctx = lo; ctx <= hi; ++ctx) {
                        if (ctx == pos || nodes[ctx] == nodes[pos]) continue;
                        negatives.clear();
                        const TypeId ctx_type = hin.type_of(nodes[ctx]);
                        for (std::size_t k = 0; k < cfg.negatives; ++k) {
                            NodeId neg = 0;
                            if (sampler.draw(walk.path, ctx_type, rng, neg)) negatives.push_back(neg);
                        }
                        total += skipgram_step(table, nodes[pos], nodes[ctx], negatives, cfg.lr);
                        ++pairs;
                    }
                }
            }
        }
        for (const auto& t : emb.tables)
            if (!all_finite(t.target.values()) || !all_finite(t.context.values()))
                throw Error(ErrorCode::non_finite, "skip-gram embeddings became non-finite in epoch " +
                                                       std::to_string(epoch));
        if (trace) trace->epoch_mean_loss.push_back(pairs ? total / static_cast<double>(pairs) : 0.0);
    }
    return emb;
}

FusionParams init_fusion(std::size_t type_count, std::size_t dim, std::uint64_t seed, double noise) {
    FusionParams f;
    for (std::size_t t = 0; t < type_count; ++t) {
        Rng rng = Rng::keyed({seed, 0xF051, t});
        Matrix w(dim, dim);
        for (std::size_t r = 0; r < dim; ++r)
            for (std::size_t c = 0; c < dim; ++c) w(r, c) = (r == c ? 1.0 : 0.0) + noise * rng.normal();
        f.weight.push_back(std::move(w));
        f.bias.emplace_back(dim, 0.0);
    }
    return f;
}

Matrix path_means(const MetaPathEmbeddings& emb, std::size_t node_count, std::vector<std::uint32_t>& counts) {
    Matrix mean(node_count, emb.dim);
    counts.assign(node_count, 0);
    for (const auto& t : emb.tables) {
        for (std::size_t r = 0; r < t.nodes.size(); ++r) {
            axpy(1.0, t.target.row(r), mean.row(t.nodes[r]));
            ++counts[t.nodes[r]];
        }
    }
    for (NodeId v = 0; v < node_count; ++v) {
        if (counts[v] == 0) continue;
        const double inv = 1.0 / counts[v];
        for (double& x : mean.row(v)) x *= inv;
    }
    return mean;
}

void affine(const Matrix& weight, std::span<const double> bias, std::span<const double> x, std::span<double> out) {
    for (std::size_t r = 0; r < weight.rows(); ++r) out[r] = bias[r] + dot(weight.row(r), x);
}

ContextBank fuse_embeddings(const MetaPathEmbeddings& emb, const Hin& hin, const FusionParams& fusion,
                            std::span<const TypeId> aspect_types) {
    std::vector<std::uint32_t> counts;
    const Matrix mean = path_means(emb, hin.node_count(), counts);
    ContextBank bank;
    bank.nodes = Matrix(hin.node_count(), emb.dim);
    bank.has_vector.assign(hin.node_count(), false);
    for (NodeId v = 0; v < hin.node_count(); ++v) {
        if (counts[v] == 0) {
            bank.missing.push_back(v);
            continue;
        }
        const auto t = hin.type_of(v).value;
        // (1/J) sum_j (M c_j + b) == M mean_j(c_j) + b
        affine(fusion.weight[t], fusion.bias[t], mean.row(v), bank.nodes.row(v));
        bank.has_vector[v] = true;
    }
    bank.aspect_types.assign(aspect_types.begin(), aspect_types.end());
    bank.aspects = Matrix(aspect_types.size(), emb.dim);
    for (std::size_t a = 0; a < aspect_types.size(); ++a) {
        std::size_t n = 0;
        for (NodeId v : hin.nodes_of_type(aspect_types[a])) {
            if (!bank.has_vector[v]) continue;
            axpy(1.0, bank.nodes.row(v), bank.aspects.row(a));
            ++n;
        }
        if (n > 0)
            for (double& x : bank.aspects.row(a)) x /= static_cast<double>(n);
    }
    return bank;
}

}  // namespace cadsi
