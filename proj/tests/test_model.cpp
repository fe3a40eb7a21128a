#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "cadsi/model.hpp"
#include "cadsi/rng.hpp"
#include "micro.hpp"

using namespace cadsi;
using cadsi::testing::micro_model;

namespace {

ModelState flat_state(std::size_t users, std::size_t items, std::size_t d) {
    ModelState s;
    s.intents.users = Matrix(users, d);
    s.intents.items = Matrix(items, d);
    s.user_context = Matrix(users, d);
    s.item_context = Matrix(items, d);
    return s;
}

ModelParams flat_params(std::size_t users, std::size_t items, std::size_t d) {
    ModelParams p;
    p.user_id = Matrix(users, d);
    p.item_id = Matrix(items, d);
    return p;
}

std::vector<TrainingTriple> micro_triples() { return {{0, 0, 2}, {0, 1, 2}, {1, 1, 0}, {1, 2, 0}}; }

std::vector<SkipGramSample> micro_samples(const cadsi::testing::MicroModel& m) {
    PairSampler sampler(m.corpus, m.hin, 2);
    Rng rng = Rng::keyed({5, 6});
    std::vector<SkipGramSample> out;
    for (int q = 0; q < 12; ++q) out.push_back(sampler.draw(rng, 2));
    return out;
}

struct Composite {
    double lambda_theta = 1.0;
    double lambda_z = 1.0;
    double l2 = 0.0;
};

double composite_loss(const cadsi::testing::MicroModel& m, const ModelParams& p, const Composite& w,
                      std::span<const SkipGramSample> samples) {
    const ModelState s = model_forward(m.layout, m.index, m.graph, p, m.cfg);
    const auto triples = micro_triples();
    double loss = w.lambda_z * bpr_data_loss(s, p, triples, m.cfg.delta);
    if (w.lambda_theta > 0) loss += w.lambda_theta * skipgram_batch_loss(p.paths, samples, nullptr);
    if (w.l2 > 0) loss += w.l2 * squared_norm(const_cast<ModelParams&>(p), {});
    return loss;
}

ModelParams composite_grad(const cadsi::testing::MicroModel& m, const ModelParams& p, const Composite& w,
                           std::span<const SkipGramSample> samples) {
    const ModelState s = model_forward(m.layout, m.index, m.graph, p, m.cfg);
    ModelParams grad = p.zeros();
    StateGrad sg = StateGrad::zeros_for(s);
    const auto triples = micro_triples();
    bpr_data_loss(s, p, triples, m.cfg.delta, &sg, &grad, w.lambda_z);
    model_backward(m.layout, m.index, m.graph, p, m.cfg, s, sg, grad);
    if (w.lambda_theta > 0) {
        MetaPathEmbeddings g = zeros_like(p.paths);
        skipgram_batch_loss(p.paths, samples, &g);
        for (std::size_t q = 0; q < g.tables.size(); ++q) {
            axpy(w.lambda_theta, g.tables[q].target.values(), grad.paths.tables[q].target.values());
            axpy(w.lambda_theta, g.tables[q].context.values(), grad.paths.tables[q].context.values());
        }
    }
    if (w.l2 > 0) {
        ModelParams copy = p;
        auto pg = param_groups(copy);
        auto gg = param_groups(grad);
        for (std::size_t g = 0; g < pg.size(); ++g) axpy(2.0 * w.l2, pg[g].values, gg[g].values);
    }
    return grad;
}

}  // namespace

TEST_CASE("semantic intent expands to the scalar form at d=2") {
    const std::vector<double> uu{0.5, -1.0}, ii{2.0, 3.0}, cu{1.5, 0.25}, ci{-2.0, 4.0};
    std::vector<double> e(2);
    fm_semantic_intent(uu, ii, cu, ci, e);
    const double w = 0.5 * -2.0 + -1.0 * 4.0;
    CHECK(e[0] == doctest::Approx(w * 1.5 * 2.0).epsilon(1e-15));
    CHECK(e[1] == doctest::Approx(w * 0.25 * 3.0).epsilon(1e-15));

    const std::vector<double> zero{0.0, 0.0};
    fm_semantic_intent(uu, ii, zero, ci, e);
    CHECK(e == zero);
    fm_semantic_intent(uu, zero, cu, ci, e);
    CHECK(e == zero);

    std::vector<double> short_out(1);
    CHECK_THROWS_AS(fm_semantic_intent(uu, ii, cu, ci, short_out), Error);
}

TEST_CASE("semantic intent is linear in the user intent and in the item intent") {
    Rng rng(3);
    std::vector<double> a(6), b(6), ii(6), cu(6), ci(6), ea(6), eb(6), esum(6), sum(6);
    for (auto* v : {&a, &b, &ii, &cu, &ci})
        for (double& x : *v) x = rng.uniform(-1, 1);
    for (std::size_t t = 0; t < 6; ++t) sum[t] = 2.0 * a[t] + b[t];
    fm_semantic_intent(a, ii, cu, ci, ea);
    fm_semantic_intent(b, ii, cu, ci, eb);
    fm_semantic_intent(sum, ii, cu, ci, esum);
    for (std::size_t t = 0; t < 6; ++t) CHECK(esum[t] == doctest::Approx(2.0 * ea[t] + eb[t]).epsilon(1e-12));

    fm_semantic_intent(a, a, cu, ci, ea);
    fm_semantic_intent(a, b, cu, ci, eb);
    fm_semantic_intent(a, sum, cu, ci, esum);
    for (std::size_t t = 0; t < 6; ++t) CHECK(esum[t] == doctest::Approx(2.0 * ea[t] + eb[t]).epsilon(1e-12));
}

TEST_CASE("prediction blends the collaborative and semantic terms") {
    const std::vector<double> u{1.0, 1.0}, i{1.0, 1.0}, e{2.0, 2.0};
    CHECK(predict(u, i, e, 0.5) == doctest::Approx(3.0));
    CHECK(predict(u, i, e, 1.0) == doctest::Approx(2.0));
    CHECK(predict(u, i, e, 0.0) == doctest::Approx(4.0));
}

TEST_CASE("score agrees with predict on the materialized semantic intent") {
    auto m = micro_model(4);
    const ModelState s = model_forward(m.layout, m.index, m.graph, m.params, m.cfg);
    std::vector<double> e(8);
    for (std::uint32_t u = 0; u < 2; ++u)
        for (std::uint32_t i = 0; i < 3; ++i) {
            fm_semantic_intent(s.intents.users.row(u), s.intents.items.row(i), s.user_context.row(u),
                               s.item_context.row(i), e);
            CHECK(score(s, m.params, u, i, 0.5) ==
                  doctest::Approx(predict(m.params.user_id.row(u), m.params.item_id.row(i), e, 0.5)).epsilon(1e-12));
        }
}

TEST_CASE("BPR loss of equal scores is ln 2 per triple") {
    const ModelState s = flat_state(2, 3, 4);
    ModelParams p = flat_params(2, 3, 4);
    const std::vector<TrainingTriple> one{{0, 0, 1}};
    CHECK(bpr_loss(s, p, one, 0.5, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    const std::vector<TrainingTriple> three{{0, 0, 1}, {1, 2, 0}, {1, 1, 2}};
    CHECK(bpr_loss(s, p, three, 0.5, 0.0) == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(bpr_data_loss(s, p, std::span<const TrainingTriple>{}, 0.5), Error);
}

TEST_CASE("BPR loss approaches zero for large margins and the margin for large violations") {
    const ModelState s = flat_state(1, 2, 1);
    ModelParams p = flat_params(1, 2, 1);
    p.user_id(0, 0) = 1.0;
    p.item_id(0, 0) = 100.0;
    p.item_id(1, 0) = -100.0;
    const std::vector<TrainingTriple> right{{0, 0, 1}}, wrong{{0, 1, 0}};
    CHECK(bpr_data_loss(s, p, right, 1.0) < 1e-80);
    CHECK(bpr_data_loss(s, p, wrong, 1.0) == doctest::Approx(200.0).epsilon(1e-12));
}

TEST_CASE("all-zero weights and parameters give a zero objective") {
    ObjectiveConfig cfg{0.0, 0.0, 0.0, 0.0};
    ModelParams p = flat_params(2, 2, 3);
    LossComponents c;
    c.bpr = 7.0;
    c.skipgram = 2.0;
    c.debias = 1.0;
    c.regularizer = cfg.l2 * squared_norm(p, {});
    CHECK(total_objective(c, cfg) == 0.0);
}

TEST_CASE("total objective isolates each weighted component") {
    LossComponents c{1.0, 2.0, 4.0, 0.5};
    CHECK(total_objective(c, {1, 0, 0, 0}) == 1.5);
    CHECK(total_objective(c, {0, 1, 0, 0}) == 2.5);
    CHECK(total_objective(c, {0, 0, 1, 0}) == 4.5);
    CHECK(total_objective(c, {2, 3, 5, 0}) == doctest::Approx(2 + 6 + 20 + 0.5));
    CHECK_THROWS_AS(ObjectiveConfig({-1, 0, 0, 0}).validate(), Error);
}

TEST_CASE("gradients match central differences on the micro model") {
    for (std::uint64_t seed : {1u, 2u}) {
        auto m = micro_model(seed);
        const auto samples = micro_samples(m);
        for (const Composite& w : {Composite{0.0, 1.0, 0.0}, Composite{1.0, 0.0, 0.0}, Composite{0.7, 1.3, 0.01}}) {
            const ModelParams analytic = composite_grad(m, m.params, w, samples);
            const auto checks = check_gradients(
                [&](const ModelParams& p) { return composite_loss(m, p, w, samples); }, m.params, analytic, 1e-4);
            std::size_t nonzero = 0;
            for (const auto& c : checks) {
                INFO(c.name << " seed " << seed);
                CHECK(c.relative_error <= 1e-4);
                auto g = param_groups(const_cast<ModelParams&>(analytic));
                for (const auto& gr : g)
                    if (gr.name == c.name && std::any_of(gr.values.begin(), gr.values.end(),
                                                         [](double x) { return x != 0.0; }))
                        ++nonzero;
            }
            CHECK(nonzero >= 4);
        }
    }
}

TEST_CASE("a small gradient step does not increase the BPR loss") {
    auto m = micro_model(9);
    const Composite w{0.0, 1.0, 0.0};
    const ModelParams grad = composite_grad(m, m.params, w, {});
    const double before = composite_loss(m, m.params, w, {});
    ModelParams stepped = m.params;
    auto pg = param_groups(stepped);
    auto gg = param_groups(const_cast<ModelParams&>(grad));
    for (std::size_t g = 0; g < pg.size(); ++g) axpy(-1e-5, gg[g].values, pg[g].values);
    CHECK(composite_loss(m, stepped, w, {}) <= before);
}

TEST_CASE("Adam with zero learning rate leaves parameters unchanged") {
    auto m = micro_model(2);
    ModelParams p = m.params;
    ModelParams g = p;  // any non-zero gradient
    Adam adam(0.0);
    for (int t = 0; t < 3; ++t) adam.step(p, g, {});
    auto a = param_groups(p);
    auto b = param_groups(m.params);
    for (std::size_t q = 0; q < a.size(); ++q)
        CHECK(std::equal(a[q].values.begin(), a[q].values.end(), b[q].values.begin()));
    CHECK(adam.steps() == 3);
}

TEST_CASE("Adam skips frozen groups and moves trainable ones against the gradient") {
    auto m = micro_model(2);
    ModelParams p = m.params;
    ModelParams g = p.zeros();
    std::fill(g.user_id.values().begin(), g.user_id.values().end(), 1.0);
    std::fill(g.item_id.values().begin(), g.item_id.values().end(), 1.0);
    std::vector<bool> trainable(param_groups(p).size(), true);
    trainable[1] = false;  // item_id
    Adam(0.01).step(p, g, trainable);
    for (std::size_t q = 0; q < p.user_id.size(); ++q)
        CHECK(p.user_id.values()[q] == doctest::Approx(m.params.user_id.values()[q] - 0.01).epsilon(1e-6));
    CHECK(p.item_id == m.params.item_id);
}

TEST_CASE("trainable groups freeze aspect fusion unless requested") {
    auto m = micro_model(1);
    const auto names = param_group_names(m.params);
    const auto frozen = trainable_groups(m.params, m.layout, false);
    const auto open = trainable_groups(m.params, m.layout, true);
    const std::string aspect = "fusion" + std::to_string(m.layout.aspect_types[0].value) + ".";
    for (std::size_t g = 0; g < names.size(); ++g) {
        CHECK(open[g]);
        CHECK(frozen[g] == (names[g].rfind(aspect, 0) != 0));
    }
}

TEST_CASE("init_params rejects a pretrained dimension mismatch") {
    auto m = micro_model(1);
    ModelConfig cfg = m.cfg;
    cfg.intents.dim = 16;
    CHECK_THROWS_AS(init_params(m.layout, cfg, m.params.paths, 1), Error);
}

TEST_CASE("sampled triples cover every training edge with unobserved negatives") {
    auto m = micro_model(3);
    TrainingData data{&m.layout, &m.graph, items_by_user(m.graph), nullptr, 5};
    const auto a = sample_triples(data, 11, 0);
    const auto b = sample_triples(data, 11, 0);
    const auto c = sample_triples(data, 11, 1);
    REQUIRE(a.size() == m.graph.edge_count());
    std::multiset<std::pair<std::uint32_t, std::uint32_t>> pos;
    for (const auto& t : a) {
        pos.insert({t.user, t.pos});
        const auto& seen = data.train_items[t.user];
        CHECK_FALSE(std::binary_search(seen.begin(), seen.end(), t.neg));
    }
    for (std::size_t e = 0; e < m.graph.edge_count(); ++e) CHECK(pos.count({m.graph.user_of(e), m.graph.item_of(e)}) == 1);
    auto same = [](const auto& x, const auto& y) {
        return std::equal(x.begin(), x.end(), y.begin(), y.end(), [](const auto& p, const auto& q) {
            return p.user == q.user && p.pos == q.pos && p.neg == q.neg;
        });
    };
    CHECK(same(a, b));
    CHECK_FALSE(same(a, c));
}

TEST_CASE("a user who rated every item cannot be given a negative") {
    InteractionGraph g(1, 2, {{0, 0}, {0, 1}});
    ModelLayout layout;
    TrainingData data{&layout, &g, items_by_user(g), nullptr, 5};
    CHECK_THROWS_AS(sample_triples(data, 0, 0), Error);
}

namespace {

// 20 users in two taste groups over 20 items; each user holds out two items.
struct Separable {
    Hin hin;
    ModelLayout layout;
    InteractionGraph train;
    std::vector<std::vector<std::uint32_t>> held_out;
    WalkCorpus corpus;
};

Separable separable(std::uint64_t seed) {
    const Schema schema = cadsi::testing::rec_schema();
    std::vector<std::pair<std::string, std::string>> nodes;
    std::vector<std::tuple<std::string, std::string, std::string>> edges;
    for (int u = 0; u < 20; ++u) nodes.emplace_back("U", "u" + std::to_string(u));
    for (int i = 0; i < 20; ++i) nodes.emplace_back("I", "i" + std::to_string(i));
    nodes.emplace_back("A", "a0");
    nodes.emplace_back("A", "a1");
    Rng rng = Rng::keyed({seed, 404});
    std::vector<std::vector<std::uint32_t>> held(20);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> train;
    for (std::uint32_t u = 0; u < 20; ++u) {
        const std::uint32_t base = (u % 2) * 10;
        std::vector<std::uint32_t> mine(10);
        for (std::uint32_t q = 0; q < 10; ++q) mine[q] = base + q;
        rng.shuffle(std::span<std::uint32_t>(mine));
        for (std::uint32_t q = 0; q < 8; ++q) {
            const std::uint32_t i = mine[q];
            if (q < 6) {
                train.emplace_back(u, i);
                edges.emplace_back("u" + std::to_string(u), "i" + std::to_string(i), "rate");
            } else {
                held[u].push_back(i);
            }
        }
    }
    for (int i = 0; i < 20; ++i) edges.emplace_back("i" + std::to_string(i), i < 10 ? "a0" : "a1", "has");
    Hin hin = cadsi::testing::make_hin(schema, nodes, edges);
    const TypeId U = schema.type("U"), I = schema.type("I"), A = schema.type("A");
    const std::vector<MetaPath> paths{{"UIU", {U, I, U}}, {"IAI", {I, A, I}}};
    WalkConfig wcfg;
    wcfg.walks_per_node = 4;
    wcfg.walk_length = 9;
    wcfg.seed = seed;
    WalkCorpus corpus = generate_corpus(hin, paths, wcfg, 1);
    const std::vector<TypeId> aspects{A};
    ModelLayout layout = ModelLayout::from_hin(hin, U, I, aspects);
    return {std::move(hin), std::move(layout), InteractionGraph(20, 20, train), std::move(held), std::move(corpus)};
}

double held_out_recall(const Separable& d, const ModelParams& p, const ModelConfig& cfg, std::size_t K) {
    const PathIndex index = index_paths(p.paths, d.layout.node_count);
    const ModelState s = model_forward(d.layout, index, d.train, p, cfg);
    const auto seen = items_by_user(d.train);
    double total = 0.0;
    for (std::uint32_t u = 0; u < 20; ++u) {
        std::vector<std::pair<double, std::uint32_t>> ranked;
        for (std::uint32_t i = 0; i < 20; ++i)
            if (!std::binary_search(seen[u].begin(), seen[u].end(), i)) ranked.emplace_back(-score(s, p, u, i, cfg.delta), i);
        std::sort(ranked.begin(), ranked.end());
        std::size_t hits = 0;
        for (std::size_t r = 0; r < K && r < ranked.size(); ++r)
            hits += std::count(d.held_out[u].begin(), d.held_out[u].end(), ranked[r].second);
        total += static_cast<double>(hits) / d.held_out[u].size();
    }
    return total / 20.0;
}

}  // namespace

TEST_CASE("training improves held-out recall on a separable set (median of 5 seeds)") {
    std::vector<double> gains;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Separable d = separable(seed);
        SkipGramConfig scfg;
        scfg.dim = 8;
        scfg.seed = seed;
        ModelConfig cfg;
        cfg.intents = {2, 2, 1, 8};
        ModelParams p = init_params(d.layout, cfg, train_skipgram(d.corpus, d.hin, scfg), seed);
        const double before = held_out_recall(d, p, cfg, 4);

        PairSampler pairs(d.corpus, d.hin, 2);
        TrainingData data{&d.layout, &d.train, items_by_user(d.train), &pairs, 2};
        TrainConfig tcfg;
        tcfg.max_epochs = 60;
        tcfg.batch_size = 32;
        tcfg.lr = 0.02;
        tcfg.early_stopping = false;
        tcfg.seed = seed;
        ObjectiveConfig ocfg;
        ocfg.lambda_theta = 0.1;
        const auto trainable = trainable_groups(p, d.layout, false);
        const TrainResult r = train_model(data, p, cfg, ocfg, tcfg, trainable, nullptr);
        const double after = held_out_recall(d, r.params, cfg, 4);
        gains.push_back(after - before);

        CHECK(r.epochs_run == 60);
        for (const auto& row : r.trace.rows) CHECK(std::isfinite(row.value));
    }
    std::sort(gains.begin(), gains.end());
    CHECK(gains[2] > 0.0);
}

TEST_CASE("early stopping restores the best validation snapshot") {
    Separable d = separable(1);
    SkipGramConfig scfg;
    scfg.dim = 8;
    ModelConfig cfg;
    cfg.intents = {2, 1, 1, 8};
    ModelParams p = init_params(d.layout, cfg, train_skipgram(d.corpus, d.hin, scfg), 1);
    TrainingData data{&d.layout, &d.train, items_by_user(d.train), nullptr, 2};
    TrainConfig tcfg;
    tcfg.max_epochs = 50;
    tcfg.batch_size = 16;
    tcfg.lr = 0.02;
    tcfg.eval_every = 2;
    tcfg.patience = 3;
    // Validation peaks at the fourth evaluation, then declines.
    int calls = 0;
    ModelParams at_peak;
    const Validator v = [&](const ModelParams& q) {
        ++calls;
        if (calls == 4) at_peak = q;
        return calls <= 4 ? calls : 4.0 - calls;
    };
    const TrainResult r = train_model(data, p, cfg, {}, tcfg, {}, v);
    CHECK(r.best_epoch == 8);
    CHECK(r.epochs_run == 14);
    CHECK(r.best_validation == 4.0);
    CHECK(r.params.user_id == at_peak.user_id);
    std::size_t val_rows = 0;
    for (const auto& row : r.trace.rows) val_rows += row.component == "val_recall@20";
    CHECK(val_rows == 7);
}

TEST_CASE("training is deterministic for a fixed seed") {
    auto run = [] {
        Separable d = separable(2);
        SkipGramConfig scfg;
        scfg.dim = 8;
        ModelConfig cfg;
        cfg.intents = {2, 2, 2, 8};
        ModelParams p = init_params(d.layout, cfg, train_skipgram(d.corpus, d.hin, scfg), 3);
        PairSampler pairs(d.corpus, d.hin, 2);
        TrainingData data{&d.layout, &d.train, items_by_user(d.train), &pairs, 2};
        TrainConfig tcfg;
        tcfg.max_epochs = 5;
        tcfg.batch_size = 16;
        return train_model(data, p, cfg, {}, tcfg, {}, nullptr);
    };
    const TrainResult a = run(), b = run();
    CHECK(a.trace.to_csv() == b.trace.to_csv());
    CHECK(a.params.item_id == b.params.item_id);
}

TEST_CASE("a non-finite loss aborts training and writes a diagnostic") {
    auto m = micro_model(1);
    m.params.paths.tables[0].context(0, 0) = std::nan("");
    PairSampler pairs(m.corpus, m.hin, 2);
    TrainingData data{&m.layout, &m.graph, items_by_user(m.graph), &pairs, 2};
    TrainConfig tcfg;
    tcfg.max_epochs = 3;
    tcfg.skipgram_pairs = 200;
    const auto dir = cadsi::testing::scratch_dir("model_nan");
    tcfg.diagnostic_path = (dir / "diag.txt").string();
    try {
        train_model(data, m.params, m.cfg, {}, tcfg, {}, nullptr);
        FAIL("expected non_finite");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::non_finite);
        CHECK(std::string(e.what()).find("epoch 0") != std::string::npos);
    }
    const std::string diag = read_file(dir / "diag.txt");
    CHECK(diag.find("epoch=0") != std::string::npos);
    CHECK(diag.find("non_finite:1") != std::string::npos);
}

TEST_CASE("loss trace CSV header and rows") {
    LossTrace t;
    t.rows.push_back({0, "bpr", 0.5});
    t.rows.push_back({0, "total", 1.25});
    CHECK(t.to_csv() == "epoch,component,value\n0,bpr,0.5\n0,total,1.25\n");
}
