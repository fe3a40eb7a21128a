#include "cadsi/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cadsi/rng.hpp"

namespace cadsi {

void ObjectiveConfig::validate() const {
    for (double v : {lambda_d, lambda_theta, lambda_z, l2})
        if (!(v >= 0.0)) throw Error(ErrorCode::config, "objective weights must be >= 0");
}

void ModelConfig::validate() const {
    intents.validate();
    if (!(delta >= 0.0 && delta <= 1.0)) throw Error(ErrorCode::config, "delta must lie in [0, 1]");
}

void TrainConfig::validate() const {
    if (batch_size == 0) throw Error(ErrorCode::config, "batch size must be >= 1");
    if (!(lr >= 0.0)) throw Error(ErrorCode::config, "learning rate must be >= 0");
    if (eval_every == 0) throw Error(ErrorCode::config, "eval_every must be >= 1");
}

ModelLayout ModelLayout::from_hin(const Hin& hin, TypeId user, TypeId item, std::span<const TypeId> aspects) {
    ModelLayout l;
    l.node_count = hin.node_count();
    for (NodeId v = 0; v < hin.node_count(); ++v) l.node_type.push_back(hin.type_of(v));
    l.user_type = user;
    l.item_type = item;
    l.users = hin.nodes_of_type(user);
    l.items = hin.nodes_of_type(item);
    l.aspect_types.assign(aspects.begin(), aspects.end());
    return l;
}

ModelParams ModelParams::zeros() const {
    ModelParams z = *this;
    for (auto& g : param_groups(z)) std::fill(g.values.begin(), g.values.end(), 0.0);
    return z;
}

std::vector<ParamGroup> param_groups(ModelParams& p) {
    std::vector<ParamGroup> out;
    out.push_back({"user_id", p.user_id.values()});
    out.push_back({"item_id", p.item_id.values()});
    for (std::size_t t = 0; t < p.layers.size(); ++t) {
        out.push_back({"layer" + std::to_string(t) + ".weight", p.layers[t].weight.values()});
        out.push_back({"layer" + std::to_string(t) + ".bias", p.layers[t].bias});
    }
    for (std::size_t t = 0; t < p.fusion.weight.size(); ++t) {
        out.push_back({"fusion" + std::to_string(t) + ".weight", p.fusion.weight[t].values()});
        out.push_back({"fusion" + std::to_string(t) + ".bias", p.fusion.bias[t]});
    }
    for (std::size_t q = 0; q < p.paths.tables.size(); ++q) {
        const std::string name = q < p.paths.path_names.size() ? p.paths.path_names[q] : std::to_string(q);
        out.push_back({"path." + name + ".target", p.paths.tables[q].target.values()});
        out.push_back({"path." + name + ".context", p.paths.tables[q].context.values()});
    }
    return out;
}

std::vector<std::string> param_group_names(const ModelParams& p) {
    std::vector<std::string> names;
    for (auto& g : param_groups(const_cast<ModelParams&>(p))) names.push_back(g.name);
    return names;
}

std::vector<bool> trainable_groups(const ModelParams& p, const ModelLayout& layout, bool aspect_fusion) {
    const auto names = param_group_names(p);
    std::vector<bool> out(names.size(), true);
    if (aspect_fusion) return out;
    for (TypeId a : layout.aspect_types) {
        const std::string prefix = "fusion" + std::to_string(a.value) + ".";
        for (std::size_t g = 0; g < names.size(); ++g)
            if (names[g].rfind(prefix, 0) == 0) out[g] = false;
    }
    return out;
}

ModelParams init_params(const ModelLayout& layout, const ModelConfig& cfg, MetaPathEmbeddings pretrained,
                        std::uint64_t seed) {
    cfg.validate();
    const std::size_t d = cfg.intents.dim;
    if (pretrained.dim != d)
        throw Error(ErrorCode::config, "pretrained embedding dim " + std::to_string(pretrained.dim) +
                                           " differs from model dim " + std::to_string(d));
    ModelParams p;
    auto xavier = [&](Matrix& m, std::uint64_t tag) {
        Rng rng = Rng::keyed({seed, 0x1DE, tag});
        const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
        for (double& x : m.values()) x = rng.uniform(-bound, bound);
    };
    p.user_id = Matrix(layout.user_count(), d);
    p.item_id = Matrix(layout.item_count(), d);
    xavier(p.user_id, 0);
    xavier(p.item_id, 1);
    p.layers = init_layers(cfg.intents, seed);
    std::size_t types = 0;
    for (TypeId t : layout.node_type) types = std::max<std::size_t>(types, t.value + 1u);
    p.fusion = init_fusion(types, d, seed);
    p.paths = std::move(pretrained);
    return p;
}

PathIndex index_paths(const MetaPathEmbeddings& paths, std::size_t node_count) {
    PathIndex idx;
    idx.count.assign(node_count, 0);
    idx.rows.resize(node_count);
    for (std::uint32_t q = 0; q < paths.tables.size(); ++q) {
        const auto& t = paths.tables[q];
        for (std::uint32_t r = 0; r < t.nodes.size(); ++r) {
            idx.rows[t.nodes[r]].emplace_back(q, r);
            ++idx.count[t.nodes[r]];
        }
    }
    return idx;
}

namespace {

std::vector<std::vector<NodeId>> aspect_nodes(const ModelLayout& layout, const PathIndex& index) {
    std::vector<std::vector<NodeId>> out(layout.aspect_types.size());
    for (NodeId v = 0; v < layout.node_count; ++v) {
        if (index.count[v] == 0) continue;
        for (std::size_t a = 0; a < layout.aspect_types.size(); ++a)
            if (layout.node_type[v] == layout.aspect_types[a]) out[a].push_back(v);
    }
    return out;
}

}  // namespace

ModelState model_forward(const ModelLayout& layout, const PathIndex& index, const InteractionGraph& graph,
                         const ModelParams& params, const ModelConfig& cfg) {
    const std::size_t d = cfg.intents.dim;
    ModelState s;
    s.intents = intents_forward(graph, params.user_id, params.item_id, params.layers, cfg.intents, cfg.threads);

    s.node_mean = Matrix(layout.node_count, d);
    for (NodeId v = 0; v < layout.node_count; ++v) {
        if (index.count[v] == 0) continue;
        auto dst = s.node_mean.row(v);
        for (auto [q, r] : index.rows[v]) axpy(1.0, params.paths.tables[q].target.row(r), dst);
        const double inv = 1.0 / index.count[v];
        for (double& x : dst) x *= inv;
    }
    auto fuse = [&](std::span<const NodeId> nodes, Matrix& out) {
        out = Matrix(nodes.size(), d);
        parallel_for(nodes.size(), cfg.threads, [&](std::size_t r) {
            const NodeId v = nodes[r];
            if (index.count[v] == 0) return;
            const auto t = layout.node_type[v].value;
            affine(params.fusion.weight[t], params.fusion.bias[t], s.node_mean.row(v), out.row(r));
        });
    };
    fuse(layout.users, s.user_context);
    fuse(layout.items, s.item_context);

    const auto groups = aspect_nodes(layout, index);
    s.aspect_mean = Matrix(layout.aspect_types.size(), d);
    s.aspect_context = Matrix(layout.aspect_types.size(), d);
    for (std::size_t a = 0; a < groups.size(); ++a) {
        if (groups[a].empty()) continue;
        for (NodeId v : groups[a]) axpy(1.0 / static_cast<double>(groups[a].size()), s.node_mean.row(v), s.aspect_mean.row(a));
        const auto t = layout.aspect_types[a].value;
        affine(params.fusion.weight[t], params.fusion.bias[t], s.aspect_mean.row(a), s.aspect_context.row(a));
    }
    return s;
}

StateGrad StateGrad::zeros_for(const ModelState& s) {
    return {Matrix(s.intents.users.rows(), s.intents.users.cols()),
            Matrix(s.intents.items.rows(), s.intents.items.cols()),
            Matrix(s.user_context.rows(), s.user_context.cols()),
            Matrix(s.item_context.rows(), s.item_context.cols()),
            Matrix(s.aspect_context.rows(), s.aspect_context.cols())};
}

namespace {

/// Backward of out = W x + b: dW += g x^T, db += g, dx += W^T g.
void affine_backward(const Matrix& weight, std::span<const double> x, std::span<const double> g, Matrix& d_weight,
                     std::span<double> d_bias, std::span<double> d_x) {
    for (std::size_t r = 0; r < weight.rows(); ++r) {
        if (g[r] == 0.0) continue;
        d_bias[r] += g[r];
        axpy(g[r], x, d_weight.row(r));
        axpy(g[r], weight.row(r), d_x);
    }
}

}  // namespace

void model_backward(const ModelLayout& layout, const PathIndex& index, const InteractionGraph& graph,
                    const ModelParams& params, const ModelConfig& cfg, const ModelState& state, const StateGrad& sg,
                    ModelParams& grad) {
    const std::size_t d = cfg.intents.dim;
    IntentGrad ig{std::move(grad.user_id), std::move(grad.item_id), std::move(grad.layers)};
    intents_backward(graph, params.user_id, params.item_id, params.layers, cfg.intents, state.intents,
                     sg.user_intent, sg.item_intent, ig, cfg.threads);
    grad.user_id = std::move(ig.user_id);
    grad.item_id = std::move(ig.item_id);
    grad.layers = std::move(ig.layers);

    Matrix d_mean(layout.node_count, d);
    auto back = [&](std::span<const NodeId> nodes, const Matrix& d_ctx) {
        for (std::size_t r = 0; r < nodes.size(); ++r) {
            const NodeId v = nodes[r];
            if (index.count[v] == 0) continue;
            const auto t = layout.node_type[v].value;
            affine_backward(params.fusion.weight[t], state.node_mean.row(v), d_ctx.row(r), grad.fusion.weight[t],
                            grad.fusion.bias[t], d_mean.row(v));
        }
    };
    back(layout.users, sg.user_context);
    back(layout.items, sg.item_context);

    if (sg.aspect_context.rows() == layout.aspect_types.size() && !layout.aspect_types.empty()) {
        const auto groups = aspect_nodes(layout, index);
        std::vector<double> d_aspect(d);
        for (std::size_t a = 0; a < groups.size(); ++a) {
            if (groups[a].empty()) continue;
            std::fill(d_aspect.begin(), d_aspect.end(), 0.0);
            const auto t = layout.aspect_types[a].value;
            affine_backward(params.fusion.weight[t], state.aspect_mean.row(a), sg.aspect_context.row(a),
                            grad.fusion.weight[t], grad.fusion.bias[t], d_aspect);
            const double share = 1.0 / static_cast<double>(groups[a].size());
            for (NodeId v : groups[a]) axpy(share, d_aspect, d_mean.row(v));
        }
    }

    for (NodeId v = 0; v < layout.node_count; ++v) {
        if (index.count[v] == 0) continue;
        const double inv = 1.0 / index.count[v];
        for (auto [q, r] : index.rows[v]) axpy(inv, d_mean.row(v), grad.paths.tables[q].target.row(r));
    }
}

void fm_semantic_intent(std::span<const double> user_intent, std::span<const double> item_intent,
                        std::span<const double> user_context, std::span<const double> item_context,
                        std::span<double> out) {
    const std::size_t d = user_intent.size();
    if (item_intent.size() != d || user_context.size() != d || item_context.size() != d || out.size() != d)
        throw Error(ErrorCode::invalid_argument, "semantic intent inputs differ in length");
    const double weight = dot(user_intent, item_context);
    for (std::size_t t = 0; t < d; ++t) out[t] = weight * user_context[t] * item_intent[t];
}

double predict(std::span<const double> user_id, std::span<const double> item_id, std::span<const double> e,
               double delta) {
    return delta * dot(user_id, item_id) + (1.0 - delta) * dot(e, item_id);
}

double score(const ModelState& s, const ModelParams& p, std::uint32_t u, std::uint32_t i, double delta) {
    const auto uu = s.intents.users.row(u);
    const auto ii = s.intents.items.row(i);
    const auto cu = s.user_context.row(u);
    const auto ci = s.item_context.row(i);
    const auto iid = p.item_id.row(i);
    // e.i without materializing e.
    double tail = 0.0;
    for (std::size_t t = 0; t < uu.size(); ++t) tail += cu[t] * ii[t] * iid[t];
    return delta * dot(p.user_id.row(u), iid) + (1.0 - delta) * dot(uu, ci) * tail;
}

void score_backward(const ModelState& s, const ModelParams& p, std::uint32_t u, std::uint32_t i, double delta,
                    double upstream, StateGrad& sg, ModelParams& grad) {
    const auto uu = s.intents.users.row(u);
    const auto ii = s.intents.items.row(i);
    const auto cu = s.user_context.row(u);
    const auto ci = s.item_context.row(i);
    const auto uid = p.user_id.row(u);
    const auto iid = p.item_id.row(i);
    const std::size_t d = uu.size();
    const double weight = dot(uu, ci);
    double tail = 0.0;
    for (std::size_t t = 0; t < d; ++t) tail += cu[t] * ii[t] * iid[t];
    const double g_sem = upstream * (1.0 - delta);

    axpy(upstream * delta, iid, grad.user_id.row(u));
    auto gi = grad.item_id.row(i);
    auto g_cu = sg.user_context.row(u);
    auto g_ii = sg.item_intent.row(i);
    for (std::size_t t = 0; t < d; ++t) {
        gi[t] += upstream * delta * uid[t] + g_sem * weight * cu[t] * ii[t];
        g_cu[t] += g_sem * weight * ii[t] * iid[t];
        g_ii[t] += g_sem * weight * cu[t] * iid[t];
    }
    axpy(g_sem * tail, ci, sg.user_intent.row(u));
    axpy(g_sem * tail, uu, sg.item_context.row(i));
}

double bpr_data_loss(const ModelState& s, const ModelParams& p, std::span<const TrainingTriple> batch, double delta,
                     StateGrad* sg, ModelParams* grad, double weight) {
    if (batch.empty()) throw Error(ErrorCode::empty_input, "BPR batch is empty");
    double loss = 0.0;
    for (const auto& t : batch) {
        const double diff = score(s, p, t.user, t.pos, delta) - score(s, p, t.user, t.neg, delta);
        loss -= log_sigmoid(diff);
        if (sg && grad) {
            const double g = -sigmoid(-diff) * weight;  // d(-ln s(x))/dx = -s(-x)
            score_backward(s, p, t.user, t.pos, delta, g, *sg, *grad);
            score_backward(s, p, t.user, t.neg, delta, -g, *sg, *grad);
        }
    }
    return loss;
}

double squared_norm(ModelParams& p, const std::vector<bool>& trainable) {
    double total = 0.0;
    const auto groups = param_groups(p);
    for (std::size_t g = 0; g < groups.size(); ++g)
        if (trainable.empty() || trainable[g]) total += dot(groups[g].values, groups[g].values);
    return total;
}

double bpr_loss(const ModelState& s, ModelParams& p, std::span<const TrainingTriple> batch, double delta, double l2) {
    return bpr_data_loss(s, p, batch, delta) + l2 * squared_norm(p, {});
}

double total_objective(const LossComponents& c, const ObjectiveConfig& cfg) {
    return cfg.lambda_d * c.debias + cfg.lambda_theta * c.skipgram + cfg.lambda_z * c.bpr + c.regularizer;
}

void Adam::step(ModelParams& params, ModelParams& grad, const std::vector<bool>& trainable) {
    auto pg = param_groups(params);
    auto gg = param_groups(grad);
    if (m_.empty()) {
        for (const auto& g : pg) {
            m_.emplace_back(g.values.size(), 0.0);
            v_.emplace_back(g.values.size(), 0.0);
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t g = 0; g < pg.size(); ++g) {
        if (!trainable.empty() && !trainable[g]) continue;
        auto x = pg[g].values;
        const auto dx = gg[g].values;
        auto& m = m_[g];
        auto& v = v_[g];
        for (std::size_t q = 0; q < x.size(); ++q) {
            m[q] = beta1_ * m[q] + (1.0 - beta1_) * dx[q];
            v[q] = beta2_ * v[q] + (1.0 - beta2_) * dx[q] * dx[q];
            x[q] -= lr_ * (m[q] / c1) / (std::sqrt(v[q] / c2) + eps_);
        }
    }
}

std::vector<GroupCheck> check_gradients(const std::function<double(const ModelParams&)>& loss, ModelParams params,
                                        ModelParams analytic, double step) {
    std::vector<GroupCheck> out;
    auto pg = param_groups(params);
    auto ag = param_groups(analytic);
    for (std::size_t g = 0; g < pg.size(); ++g) {
        auto x = pg[g].values;
        double diff = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t q = 0; q < x.size(); ++q) {
            const double keep = x[q];
            x[q] = keep + step;
            const double up = loss(params);
            x[q] = keep - step;
            const double down = loss(params);
            x[q] = keep;
            const double fd = (up - down) / (2.0 * step);
            const double an = ag[g].values[q];
            diff += (fd - an) * (fd - an);
            na += fd * fd;
            nb += an * an;
        }
        const double denom = std::sqrt(na) + std::sqrt(nb);
        out.push_back({pg[g].name, denom > 1e-12 ? std::sqrt(diff) / denom : 0.0, x.size()});
    }
    return out;
}

std::string LossTrace::to_csv() const {
    std::string out = "epoch,component,value\n";
    for (const auto& r : rows) out += std::to_string(r.epoch) + "," + r.component + "," + format_double(r.value) + "\n";
    return out;
}

std::vector<std::vector<std::uint32_t>> items_by_user(const InteractionGraph& g) {
    std::vector<std::vector<std::uint32_t>> out(g.user_count());
    for (std::uint32_t u = 0; u < g.user_count(); ++u)
        for (std::size_t e = g.user_begin(u); e < g.user_end(u); ++e) out[u].push_back(g.item_of(e));
    return out;
}

std::vector<TrainingTriple> sample_triples(const TrainingData& data, std::uint64_t seed, std::size_t epoch) {
    const InteractionGraph& g = *data.train;
    std::vector<std::uint32_t> order(g.edge_count());
    std::iota(order.begin(), order.end(), 0u);
    Rng rng = Rng::keyed({seed, 0xB94, epoch});
    rng.shuffle(std::span<std::uint32_t>(order));
    std::vector<TrainingTriple> out;
    out.reserve(order.size());
    for (auto e : order) {
        const std::uint32_t u = g.user_of(e);
        const auto& seen = data.train_items[u];
        if (seen.size() >= g.item_count())
            throw Error(ErrorCode::infeasible, "user " + std::to_string(u) + " has interacted with every item");
        std::uint32_t j = 0;
        do {
            j = static_cast<std::uint32_t>(rng.index(g.item_count()));
        } while (std::binary_search(seen.begin(), seen.end(), j));
        out.push_back({u, g.item_of(e), j});
    }
    return out;
}

namespace {

void dump_diagnostic(const std::string& path, ModelParams& params, std::size_t epoch, std::size_t batch,
                     const LossComponents& c, double total) {
    if (path.empty()) return;
    std::string out = "epoch=" + std::to_string(epoch) + "\nbatch=" + std::to_string(batch) + "\n";
    out += "bpr=" + format_double(c.bpr) + "\nskipgram=" + format_double(c.skipgram) +
           "\ndebias=" + format_double(c.debias) + "\nregularizer=" + format_double(c.regularizer) +
           "\ntotal=" + format_double(total) + "\n";
    for (const auto& g : param_groups(params)) {
        std::size_t bad = 0;
        double norm = 0.0;
        for (double x : g.values) {
            if (!std::isfinite(x)) ++bad;
            else norm += x * x;
        }
        out += "group." + g.name + "=norm:" + format_double(std::sqrt(norm)) + ",non_finite:" + std::to_string(bad) + "\n";
    }
    write_file(path, out);
}

}  // namespace

TrainResult train_model(const TrainingData& data, ModelParams params, const ModelConfig& mcfg,
                        const ObjectiveConfig& ocfg, const TrainConfig& tcfg, const std::vector<bool>& trainable,
                        const Validator& validate, BatchTerm* extra) {
    mcfg.validate();
    ocfg.validate();
    tcfg.validate();
    const ModelLayout& layout = *data.layout;
    const InteractionGraph& graph = *data.train;
    if (graph.edge_count() == 0) throw Error(ErrorCode::empty_input, "no training interactions");
    const PathIndex index = index_paths(params.paths, layout.node_count);
    const std::size_t pairs_per_batch = tcfg.skipgram_pairs ? tcfg.skipgram_pairs : tcfg.batch_size;

    Adam adam(tcfg.lr);
    TrainResult result;
    ModelParams grad = params.zeros();
    MetaPathEmbeddings sg_grad = zeros_like(params.paths);
    ModelParams best;
    bool have_best = false;
    std::size_t since_best = 0;

    for (std::size_t epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
        const auto triples = sample_triples(data, tcfg.seed, epoch);
        LossComponents sums;
        double total = 0.0;
        const std::size_t batches = (triples.size() + tcfg.batch_size - 1) / tcfg.batch_size;
        for (std::size_t b = 0; b < batches; ++b) {
            const std::span<const TrainingTriple> batch(
                triples.data() + b * tcfg.batch_size,
                std::min(tcfg.batch_size, triples.size() - b * tcfg.batch_size));
            for (auto& g : param_groups(grad)) std::fill(g.values.begin(), g.values.end(), 0.0);

            const ModelState state = model_forward(layout, index, graph, params, mcfg);
            StateGrad sg = StateGrad::zeros_for(state);
            LossComponents c;
            c.bpr = bpr_data_loss(state, params, batch, mcfg.delta, &sg, &grad, ocfg.lambda_z);
            if (extra) c.debias = extra->accumulate(state, params, batch, ocfg.lambda_d, sg, grad);
            model_backward(layout, index, graph, params, mcfg, state, sg, grad);

            if (data.pairs && ocfg.lambda_theta > 0.0) {
                Rng rng = Rng::keyed({tcfg.seed, 0x5C1, epoch, b});
                std::vector<SkipGramSample> samples;
                samples.reserve(pairs_per_batch);
                for (std::size_t q = 0; q < pairs_per_batch; ++q)
                    samples.push_back(data.pairs->draw(rng, data.skipgram_negatives));
                for (auto& t : sg_grad.tables) {
                    t.target.fill(0.0);
                    t.context.fill(0.0);
                }
                c.skipgram = skipgram_batch_loss(params.paths, samples, &sg_grad);
                for (std::size_t q = 0; q < sg_grad.tables.size(); ++q) {
                    axpy(ocfg.lambda_theta, sg_grad.tables[q].target.values(), grad.paths.tables[q].target.values());
                    axpy(ocfg.lambda_theta, sg_grad.tables[q].context.values(), grad.paths.tables[q].context.values());
                }
            }

            if (ocfg.l2 > 0.0) {
                c.regularizer = ocfg.l2 * squared_norm(params, trainable);
                auto pg = param_groups(params);
                auto gg = param_groups(grad);
                for (std::size_t g = 0; g < pg.size(); ++g)
                    if (trainable.empty() || trainable[g]) axpy(2.0 * ocfg.l2, pg[g].values, gg[g].values);
            }
            const double batch_total = total_objective(c, ocfg);
            if (!std::isfinite(batch_total)) {
                dump_diagnostic(tcfg.diagnostic_path, params, epoch, b, c, batch_total);
                throw Error(ErrorCode::non_finite, "non-finite training loss at epoch " + std::to_string(epoch) +
                                                       ", batch " + std::to_string(b));
            }
            sums.bpr += c.bpr;
            sums.skipgram += c.skipgram;
            sums.debias += c.debias;
            sums.regularizer += c.regularizer;
            total += batch_total;
            adam.step(params, grad, trainable);
        }
        if (extra) extra->end_epoch(epoch);
        result.trace.rows.push_back({epoch, "bpr", sums.bpr});
        if (data.pairs && ocfg.lambda_theta > 0.0) result.trace.rows.push_back({epoch, "skipgram", sums.skipgram});
        if (extra) result.trace.rows.push_back({epoch, "debias", sums.debias});
        result.trace.rows.push_back({epoch, "regularizer", sums.regularizer});
        result.trace.rows.push_back({epoch, "total", total});
        result.epochs_run = epoch + 1;

        if (validate && (epoch + 1) % tcfg.eval_every == 0) {
            const double v = validate(params);
            result.trace.rows.push_back({epoch, "val_recall@20", v});
            if (v > result.best_validation) {
                result.best_validation = v;
                result.best_epoch = epoch + 1;
                since_best = 0;
                if (tcfg.early_stopping) {
                    best = params;
                    have_best = true;
                }
            } else if (++since_best >= tcfg.patience && tcfg.early_stopping) {
                break;
            }
        }
    }
    result.params = have_best ? std::move(best) : std::move(params);
    return result;
}

}  // namespace cadsi
