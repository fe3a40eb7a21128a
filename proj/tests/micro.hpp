#pragma once

#include <vector>

#include "cadsi/hetsg.hpp"
#include "cadsi/hin.hpp"
#include "cadsi/intents.hpp"
#include "cadsi/model.hpp"
#include "cadsi/walks.hpp"
#include "fixtures.hpp"

namespace cadsi::testing {

inline Schema rec_schema() {
    return Schema::parse(
        "nodetype U\n"
        "nodetype I\n"
        "nodetype A\n"
        "edgekind rate U I\n"
        "edgekind has I A\n");
}

/// Two users, three items, one aspect node: d=8, k=2.
struct MicroModel {
    Hin hin;
    ModelLayout layout;
    InteractionGraph graph;
    WalkCorpus corpus;
    ModelConfig cfg;
    ModelParams params;
    PathIndex index;
};

inline MicroModel micro_model(std::uint64_t seed, bool perturb = true) {
    const Schema schema = rec_schema();
    Hin hin = make_hin(schema,
                       {{"U", "u0"}, {"U", "u1"}, {"I", "i0"}, {"I", "i1"}, {"I", "i2"}, {"A", "a0"}},
                       {{"u0", "i0", "rate"},
                        {"u0", "i1", "rate"},
                        {"u1", "i1", "rate"},
                        {"u1", "i2", "rate"},
                        {"i0", "a0", "has"},
                        {"i1", "a0", "has"},
                        {"i2", "a0", "has"}});
    const TypeId U = schema.type("U"), I = schema.type("I"), A = schema.type("A");
    const std::vector<MetaPath> paths{{"UIU", {U, I, U}}, {"IAI", {I, A, I}}, {"AIA", {A, I, A}}};
    WalkConfig wcfg;
    wcfg.walks_per_node = 3;
    wcfg.walk_length = 7;
    wcfg.seed = seed;
    WalkCorpus corpus = generate_corpus(hin, paths, wcfg, 1);

    SkipGramConfig scfg;
    scfg.dim = 8;
    scfg.seed = seed;
    MetaPathEmbeddings emb = init_path_embeddings(corpus, hin.node_count(), scfg);
    // Non-zero contexts so every table entry carries gradient.
    Rng rng = Rng::keyed({seed, 77});
    for (auto& t : emb.tables)
        for (double& x : t.context.values()) x = rng.uniform(-0.3, 0.3);

    const std::vector<TypeId> aspects{A};
    ModelLayout layout = ModelLayout::from_hin(hin, U, I, aspects);
    InteractionGraph graph(interaction_matrix(hin, U, I));
    ModelConfig cfg;
    cfg.intents = {2, 2, 2, 8};
    ModelParams params = init_params(layout, cfg, std::move(emb), seed);
    if (perturb) {
        // Move away from identity / zero so every term of the backward pass is exercised.
        for (auto& g : param_groups(params))
            for (double& x : g.values) x += rng.uniform(-0.2, 0.2);
    }
    PathIndex index = index_paths(params.paths, layout.node_count);
    return {std::move(hin), std::move(layout), std::move(graph), std::move(corpus), cfg, std::move(params),
            std::move(index)};
}

}  // namespace cadsi::testing
