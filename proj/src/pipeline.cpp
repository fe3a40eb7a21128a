#include "cadsi/pipeline.hpp"

#include <algorithm>
#include <ostream>

#include "cadsi/synth.hpp"

namespace cadsi {

namespace fs = std::filesystem;

RunConfig resolve_config(const Manifest* upstream, const ConfigSource& source) {
    RunConfig cfg;
    if (upstream) cfg.merge_text(upstream->config_text(), "upstream manifest");
    if (source.file) cfg.merge_text(read_file(*source.file), source.file->string());
    for (const auto& a : source.assignments) cfg.set_assignment(a);
    cfg.validate();
    return cfg;
}

namespace {

std::vector<TypeId> resolve_aspects(const Schema& schema, const RunConfig& cfg, TypeId user, TypeId item) {
    std::vector<TypeId> out;
    const std::string& listed = cfg.get("data.aspect_types");
    if (listed.empty()) {
        for (std::uint16_t t = 0; t < schema.type_count(); ++t)
            if (TypeId{t} != user && TypeId{t} != item) out.push_back(TypeId{t});
    } else {
        for (const auto& name : split(listed, ',')) out.push_back(schema.type(trim(name)));
    }
    return out;
}

Dataset finish_dataset(Hin hin, std::span<const std::vector<std::string>> metapaths, const RunConfig& cfg) {
    Dataset d;
    const Schema& schema = hin.schema();
    d.user = schema.type(cfg.get("data.user_type"));
    d.item = schema.type(cfg.get("data.item_type"));
    d.aspects = resolve_aspects(schema, cfg, d.user, d.item);
    const auto base = resolve_metapaths(schema, metapaths);
    d.paths = with_aspect_rotations(schema, base, d.user, d.item);
    d.layout = ModelLayout::from_hin(hin, d.user, d.item, d.aspects);
    d.matrix = interaction_matrix(hin, d.user, d.item);
    if (d.matrix.entries.empty()) throw Error(ErrorCode::empty_input, "graph has no user-item interactions");
    d.hin = std::move(hin);
    return d;
}

const std::vector<std::string> kDataFiles{"nodes.tsv", "edges.tsv", "schema.txt", "metapaths.txt"};

void write_stage_manifest(const fs::path& out, const std::string& stage, const RunConfig& cfg,
                          const std::vector<std::tuple<std::string, fs::path, std::vector<std::string>>>& inputs,
                          const std::vector<std::string>& outputs, const std::map<std::string, std::string>& extra) {
    Manifest m;
    m.set("stage", stage);
    m.set("seed", std::to_string(cfg.seed()));
    const std::string snapshot = cfg.serialize();
    for (const auto& line : split(snapshot, '\n')) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        m.set("config." + std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
    }
    for (const auto& [label, dir, files] : inputs) m.add_inputs(label, dir, files);
    m.seal();
    m.add_outputs(out, outputs);
    for (const auto& [k, v] : extra) m.set(k, v);
    write_file(out / kManifestFile, m.to_text());
}

std::vector<std::string> path_files(const MetaPathEmbeddings& emb) {
    std::vector<std::string> out{"paths.txt"};
    for (const auto& n : emb.path_names) {
        out.push_back("paths/" + n + ".target.tsv");
        out.push_back("paths/" + n + ".context.tsv");
    }
    return out;
}

std::vector<std::string> aspect_labels(const Dataset& d) {
    std::vector<std::string> out;
    for (TypeId a : d.aspects) out.push_back(d.hin.schema().type_name(a));
    return out;
}

double validation_recall(const Dataset& data, const SplitData& split, const ModelParams& p, const Matrix* aspects,
                         const RunConfig& cfg) {
    return evaluate_model(data, split, p, aspects, cfg, {20}).overall.at(20).recall;
}

std::string split_tsv(const Dataset& d, const SplitData& s) {
    std::string out = "user\titem\tpart\n";
    auto emit = [&](const std::vector<Interaction>& part, const char* name) {
        for (auto [u, i] : part) out += d.hin.id_of(d.layout.users[u]) + "\t" + d.hin.id_of(d.layout.items[i]) + "\t" + name + "\n";
    };
    emit(s.split.train, "train");
    emit(s.split.validation, "validation");
    emit(s.split.test, "test");
    return out;
}

/// Checkpoint plus the per-node vectors a plotting tool wants.
std::vector<std::string> save_model(const fs::path& out, const Dataset& d, const SplitData& split,
                                    const ModelParams& p, const RunConfig& cfg) {
    save_params(out, d.hin, d.layout, p);
    const PathIndex index = index_paths(p.paths, d.layout.node_count);
    const ModelState s = model_forward(d.layout, index, split.train_graph, p, cfg.model());
    write_file(out / "intent_embeddings.tsv", node_table_tsv(d.hin, d.layout.users, s.intents.users) +
                                                  node_table_tsv(d.hin, d.layout.items, s.intents.items));
    write_file(out / "context_embeddings.tsv", node_table_tsv(d.hin, d.layout.users, s.user_context) +
                                                   node_table_tsv(d.hin, d.layout.items, s.item_context));
    write_file(out / "split.tsv", split_tsv(d, split));
    std::vector<std::string> files{"id_embeddings.tsv", "dense.tsv", "intent_embeddings.tsv", "context_embeddings.tsv",
                                   "split.tsv"};
    for (const auto& f : path_files(p.paths)) files.push_back(f);
    return files;
}

std::vector<std::string> save_intervention(const fs::path& out, const Dataset& d, const InterventionResult& r) {
    write_file(out / "aspects.tsv", labeled_rows_tsv(aspect_labels(d), r.aspects));
    write_file(out / "intervention_trace.csv", intervention_trace_csv(r.trace));
    write_file(out / "loss_trace_intervention.csv", r.train.trace.to_csv());
    return {"aspects.tsv", "intervention_trace.csv", "loss_trace_intervention.csv"};
}

struct LoadedModel {
    Manifest manifest;
    RunConfig cfg;
    ModelParams params;
    std::optional<Matrix> aspects;
};

LoadedModel load_model(const ConfigSource& src, const fs::path& data_dir, const fs::path& model_dir,
                       Dataset& data_out) {
    LoadedModel m;
    m.manifest = read_manifest(model_dir, "train");
    const std::string& stage = m.manifest.get("stage");
    if (stage != "train" && stage != "intervene")
        throw Error(ErrorCode::missing_checkpoint, model_dir.string() + " holds a '" + stage +
                                                       "' checkpoint; expected train or intervene output");
    m.cfg = resolve_config(&m.manifest, src);
    data_out = load_dataset(data_dir, m.cfg);
    m.params = load_params(model_dir, data_out.hin, data_out.layout, m.cfg.model());
    if (m.manifest.has("ranking") && m.manifest.get("ranking") == "intervened") {
        const auto file = model_dir / "aspects.tsv";
        if (!fs::exists(file)) throw Error(ErrorCode::missing_checkpoint, "missing " + file.string());
        m.aspects = parse_labeled_rows(read_file(file), aspect_labels(data_out), m.cfg.model().intents.dim,
                                       file.string());
    }
    return m;
}

}  // namespace

Dataset make_dataset(Hin hin, std::span<const std::vector<std::string>> metapaths, const RunConfig& cfg) {
    if (cfg.boolean("data.kcore")) {
        const TypeId user = hin.schema().type(cfg.get("data.user_type"));
        const TypeId item = hin.schema().type(cfg.get("data.item_type"));
        hin = kcore_filter(hin, user, item, static_cast<std::size_t>(cfg.integer("data.core")));
    }
    return finish_dataset(std::move(hin), metapaths, cfg);
}

Dataset load_dataset(const fs::path& dir, const RunConfig& cfg) {
    for (const auto& f : kDataFiles)
        if (!fs::exists(dir / f))
            throw Error(ErrorCode::missing_checkpoint, "missing " + (dir / f).string() + "; run `cadsi synth` or supply it");
    const Schema schema = Schema::parse(read_file(dir / "schema.txt"));
    HinLoadOptions opts;
    opts.kcore = cfg.boolean("data.kcore");
    opts.core = static_cast<std::size_t>(cfg.integer("data.core"));
    opts.user_type = cfg.get("data.user_type");
    opts.item_type = cfg.get("data.item_type");
    const std::vector<fs::path> edges{dir / "edges.tsv"};
    Hin hin = load_hin(dir / "nodes.tsv", edges, schema, opts);
    const auto lines = parse_metapath_lines(read_file(dir / "metapaths.txt"));
    return finish_dataset(std::move(hin), lines, cfg);
}

SplitData make_split(const Dataset& data, const RunConfig& cfg) {
    SplitData s;
    s.split = split_interactions(data.matrix, cfg.split());
    const std::size_t users = data.layout.user_count(), items = data.layout.item_count();
    s.train = group_by_user(s.split.train, users);
    s.validation = group_by_user(s.split.validation, users);
    s.test = group_by_user(s.split.test, users);
    s.train_graph = InteractionGraph(users, items, s.split.train);
    if (!data.aspects.empty()) {
        const std::string& named = cfg.get("eval.minority_aspect");
        const TypeId aspect = named.empty() ? data.aspects[0] : data.hin.schema().type(named);
        s.minority = minority_items(data.hin, data.layout.items, data.item, aspect);
    }
    return s;
}

WalkCorpus build_corpus(const Dataset& data, const RunConfig& cfg) {
    // Walks see only training interactions once a split exists; pretraining
    // uses the same restriction so held-out pairs never leak into the embeddings.
    const SplitData split = make_split(data, cfg);
    std::vector<char> keep_pair(data.layout.user_count() * data.layout.item_count(), 0);
    for (auto [u, i] : split.split.train) keep_pair[u * data.layout.item_count() + i] = 1;
    std::vector<std::int64_t> local(data.hin.node_count(), -1);
    for (std::size_t r = 0; r < data.layout.users.size(); ++r) local[data.layout.users[r]] = static_cast<std::int64_t>(r);
    for (std::size_t r = 0; r < data.layout.items.size(); ++r) local[data.layout.items[r]] = static_cast<std::int64_t>(r);
    const Hin train_hin = data.hin.filtered([](NodeId) { return true; }, [&](const Edge& e) {
        const TypeId ta = data.hin.type_of(e.a), tb = data.hin.type_of(e.b);
        if (!((ta == data.user && tb == data.item) || (ta == data.item && tb == data.user))) return true;
        const NodeId u = ta == data.user ? e.a : e.b, i = ta == data.user ? e.b : e.a;
        return keep_pair[static_cast<std::size_t>(local[u]) * data.layout.item_count() + static_cast<std::size_t>(local[i])] != 0;
    });
    return generate_corpus(train_hin, data.paths, cfg.walks(), cfg.threads());
}

MetaPathEmbeddings pretrain(const Dataset& data, const WalkCorpus& corpus, const RunConfig& cfg, SkipGramTrace* trace) {
    return train_skipgram(corpus, data.hin, cfg.skipgram(), trace);
}

TrainResult run_training(const Dataset& data, const SplitData& split, const WalkCorpus& corpus,
                         MetaPathEmbeddings pretrained, const RunConfig& cfg) {
    const ModelConfig mcfg = cfg.model();
    ModelParams params = init_params(data.layout, mcfg, std::move(pretrained), cfg.seed());
    const PairSampler pairs(corpus, data.hin, static_cast<std::size_t>(cfg.integer("skipgram.window")));
    TrainingData td{&data.layout, &split.train_graph, split.train, &pairs,
                    static_cast<std::size_t>(cfg.integer("skipgram.negatives"))};
    const auto trainable = trainable_groups(params, data.layout, false);
    const Validator validate = [&](const ModelParams& p) { return validation_recall(data, split, p, nullptr, cfg); };
    return train_model(td, std::move(params), mcfg, cfg.objective(), cfg.train(), trainable, validate);
}

InterventionResult run_debiasing(const Dataset& data, const SplitData& split, const WalkCorpus& corpus,
                                 ModelParams params, const RunConfig& cfg) {
    const ModelConfig mcfg = cfg.model();
    const InterventionConfig icfg = cfg.intervention();
    const PairSampler pairs(corpus, data.hin, static_cast<std::size_t>(cfg.integer("skipgram.window")));
    TrainingData td{&data.layout, &split.train_graph, split.train, &pairs,
                    static_cast<std::size_t>(cfg.integer("skipgram.negatives"))};
    Matrix frozen;
    if (!icfg.unfreeze_aspects) {
        const PathIndex index = index_paths(params.paths, data.layout.node_count);
        frozen = model_forward(data.layout, index, split.train_graph, params, mcfg).aspect_context;
    }
    const Validator validate = [&](const ModelParams& p) {
        if (!icfg.unfreeze_aspects) return validation_recall(data, split, p, &frozen, cfg);
        const PathIndex index = index_paths(p.paths, data.layout.node_count);
        const Matrix live = model_forward(data.layout, index, split.train_graph, p, mcfg).aspect_context;
        return validation_recall(data, split, p, &live, cfg);
    };
    return run_intervention(td, std::move(params), mcfg, cfg.objective(), cfg.train(), icfg, validate);
}

Reports evaluate_model(const Dataset& data, const SplitData& split, const ModelParams& params, const Matrix* aspects,
                       const RunConfig& cfg, std::vector<std::size_t> ks) {
    const ModelConfig mcfg = cfg.model();
    const PathIndex index = index_paths(params.paths, data.layout.node_count);
    const ModelState state = model_forward(data.layout, index, split.train_graph, params, mcfg);
    const UserScorer scorer =
        aspects ? intervened_scorer(state, params, *aspects, mcfg.delta) : model_scorer(state, params, mcfg.delta);
    EvalRequest req;
    req.items = data.layout.item_count();
    req.train = &split.train;
    req.test = &split.test;
    req.ks = std::move(ks);
    req.threads = mcfg.threads;
    Reports r;
    r.overall = evaluate(scorer, req);
    req.restrict_to = &split.minority;
    r.minority = evaluate(scorer, req);
    return r;
}

PipelineRun run_pipeline(const Dataset& data, const RunConfig& cfg) {
    PipelineRun run;
    const SplitData split = make_split(data, cfg);
    const WalkCorpus corpus = build_corpus(data, cfg);
    run.pretrained = pretrain(data, corpus, cfg);
    run.trained = run_training(data, split, corpus, run.pretrained, cfg);
    if (cfg.intervention().iterations > 0) {
        run.intervened = run_debiasing(data, split, corpus, run.trained.params, cfg);
        run.reports = evaluate_model(data, split, run.intervened->train.params, &run.intervened->aspects, cfg,
                                     cfg.int_list("eval.ks"));
    } else {
        run.reports = evaluate_model(data, split, run.trained.params, nullptr, cfg, cfg.int_list("eval.ks"));
    }
    return run;
}

void cmd_synth(const ConfigSource& src, const fs::path& out, std::ostream& log) {
    const RunConfig cfg = resolve_config(nullptr, src);
    const SynthConfig scfg = cfg.synth();
    const SynthData data = generate(scfg);
    write_synth(data, scfg, out);
    log << "[synth] " << scfg.n_users << " users, " << scfg.n_items << " items, " << data.truth.interactions.size()
        << " interactions -> " << out.string() << "\n";
    std::vector<std::string> files = kDataFiles;
    for (const char* f : {"interactions.tsv", "ground_truth.tsv", "skew_report.csv"}) files.emplace_back(f);
    write_stage_manifest(out, "synth", cfg, {}, files, {});
}

void cmd_pretrain(const ConfigSource& src, const fs::path& data_dir, const fs::path& out, std::ostream& log) {
    std::optional<Manifest> upstream;
    if (fs::exists(data_dir / kManifestFile)) upstream = read_manifest(data_dir, "synth");
    const RunConfig cfg = resolve_config(upstream ? &*upstream : nullptr, src);
    const Dataset data = load_dataset(data_dir, cfg);
    const WalkCorpus corpus = build_corpus(data, cfg);
    log << "[pretrain] " << corpus.walk_count() << " walks over " << data.paths.size() << " meta paths\n";
    SkipGramTrace trace;
    const MetaPathEmbeddings emb = pretrain(data, corpus, cfg, &trace);
    fs::create_directories(out);
    save_path_embeddings(out, data.hin, emb);
    std::string csv = "epoch,mean_loss\n";
    for (std::size_t e = 0; e < trace.epoch_mean_loss.size(); ++e)
        csv += std::to_string(e) + "," + format_double(trace.epoch_mean_loss[e]) + "\n";
    write_file(out / "skipgram_trace.csv", csv);
    auto outputs = path_files(emb);
    outputs.push_back("skipgram_trace.csv");
    write_stage_manifest(out, "pretrain", cfg, {{"data", data_dir, kDataFiles}}, outputs, {});
}

void cmd_train(const ConfigSource& src, const fs::path& data_dir, const fs::path& pretrained_dir, const fs::path& out,
               bool joint, std::ostream& log) {
    const Manifest upstream = read_manifest(pretrained_dir, "pretrain");
    if (upstream.get("stage") != "pretrain")
        throw Error(ErrorCode::missing_checkpoint, pretrained_dir.string() + " is not pretraining output");
    const RunConfig cfg = resolve_config(&upstream, src);
    const Dataset data = load_dataset(data_dir, cfg);
    const SplitData split = make_split(data, cfg);
    if (!split.split.shrunk_users.empty())
        log << "[train] warning: " << split.split.shrunk_users.size()
            << " users had too few interactions for the held-out share; kept them in train\n";
    const WalkCorpus corpus = build_corpus(data, cfg);
    MetaPathEmbeddings emb = load_path_embeddings(pretrained_dir, data.hin, cfg.model().intents.dim);
    const std::vector<std::string> pretrain_files = path_files(emb);
    const TrainResult trained = run_training(data, split, corpus, std::move(emb), cfg);
    log << "[train] " << trained.epochs_run << " epochs, best validation recall@20 "
        << format_double(trained.best_validation) << " at epoch " << trained.best_epoch << "\n";
    fs::create_directories(out);
    write_file(out / "loss_trace.csv", trained.trace.to_csv());
    std::vector<std::string> outputs{"loss_trace.csv"};
    std::map<std::string, std::string> extra{{"epochs_run", std::to_string(trained.epochs_run)},
                                             {"best_epoch", std::to_string(trained.best_epoch)},
                                             {"joint", joint ? "true" : "false"}};
    const ModelParams* final_params = &trained.params;
    std::optional<InterventionResult> intervened;
    if (joint && cfg.intervention().iterations > 0) {
        intervened = run_debiasing(data, split, corpus, trained.params, cfg);
        log << "[train] intervention ran " << intervened->train.epochs_run << " epochs\n";
        final_params = &intervened->train.params;
        for (const auto& f : save_intervention(out, data, *intervened)) outputs.push_back(f);
        extra["ranking"] = "intervened";
    } else {
        extra["ranking"] = "plain";
    }
    for (const auto& f : save_model(out, data, split, *final_params, cfg)) outputs.push_back(f);
    write_stage_manifest(out, "train", cfg, {{"data", data_dir, kDataFiles}, {"pretrain", pretrained_dir, pretrain_files}},
                         outputs, extra);
}

void cmd_intervene(const ConfigSource& src, const fs::path& data_dir, const fs::path& model_dir, const fs::path& out,
                   std::ostream& log) {
    const Manifest upstream = read_manifest(model_dir, "train");
    if (upstream.get("stage") != "train")
        throw Error(ErrorCode::missing_checkpoint, model_dir.string() + " is not training output");
    const RunConfig cfg = resolve_config(&upstream, src);
    if (cfg.intervention().iterations == 0) throw Error(ErrorCode::config, "intervention.iterations must be >= 1 here");
    const Dataset data = load_dataset(data_dir, cfg);
    const SplitData split = make_split(data, cfg);
    const WalkCorpus corpus = build_corpus(data, cfg);
    ModelParams params = load_params(model_dir, data.hin, data.layout, cfg.model());
    const std::vector<std::string> inputs{"id_embeddings.tsv", "dense.tsv"};
    const InterventionResult r = run_debiasing(data, split, corpus, std::move(params), cfg);
    log << "[intervene] " << r.train.epochs_run << " epochs\n";
    fs::create_directories(out);
    auto outputs = save_intervention(out, data, r);
    for (const auto& f : save_model(out, data, split, r.train.params, cfg)) outputs.push_back(f);
    write_stage_manifest(out, "intervene", cfg, {{"data", data_dir, kDataFiles}, {"train", model_dir, inputs}}, outputs,
                         {{"ranking", "intervened"}});
}

MetricReport cmd_eval(const ConfigSource& src, const fs::path& data_dir, const fs::path& model_dir, const fs::path& out,
                      std::vector<std::size_t> ks, std::ostream& log) {
    Dataset data;
    const LoadedModel m = load_model(src, data_dir, model_dir, data);
    if (ks.empty()) ks = m.cfg.int_list("eval.ks");
    const SplitData split = make_split(data, m.cfg);
    const Reports r = evaluate_model(data, split, m.params, m.aspects ? &*m.aspects : nullptr, m.cfg, ks);
    fs::create_directories(out);
    write_file(out / "metrics.csv", r.overall.to_csv());
    write_file(out / "metrics_minority.csv", r.minority.to_csv());
    for (const auto& row : r.overall.rows)
        log << "[eval] K=" << row.k << " recall=" << format_double(row.recall) << " ndcg=" << format_double(row.ndcg)
            << " users=" << row.users << "\n";
    write_stage_manifest(out, "eval", m.cfg, {{"data", data_dir, kDataFiles}, {"model", model_dir, {"id_embeddings.tsv", "dense.tsv"}}},
                         {"metrics.csv", "metrics_minority.csv"}, {{"ranking", m.aspects ? "intervened" : "plain"}});
    return r.overall;
}

std::vector<Recommendation> cmd_recommend(const ConfigSource& src, const fs::path& data_dir, const fs::path& model_dir,
                                          const std::string& user, std::size_t top) {
    Dataset data;
    const LoadedModel m = load_model(src, data_dir, model_dir, data);
    const auto node = data.hin.find(user);
    if (!node || data.hin.type_of(*node) != data.user)
        throw Error(ErrorCode::unknown_node, "no user '" + user + "' in the graph");
    const auto u = static_cast<std::uint32_t>(
        std::lower_bound(data.layout.users.begin(), data.layout.users.end(), *node) - data.layout.users.begin());
    const SplitData split = make_split(data, m.cfg);
    const ModelConfig mcfg = m.cfg.model();
    const PathIndex index = index_paths(m.params.paths, data.layout.node_count);
    const ModelState state = model_forward(data.layout, index, split.train_graph, m.params, mcfg);
    const UserScorer scorer = m.aspects ? intervened_scorer(state, m.params, *m.aspects, mcfg.delta)
                                        : model_scorer(state, m.params, mcfg.delta);
    std::vector<double> scores(data.layout.item_count());
    scorer(u, scores);
    const auto ranked = rank_items(scores, split.train[u]);
    std::vector<Recommendation> out;
    for (std::size_t r = 0; r < std::min(top, ranked.size()); ++r)
        out.push_back({data.hin.id_of(data.layout.items[ranked[r]]), scores[ranked[r]]});
    return out;
}

std::vector<AblationRow> cmd_ablate(const ConfigSource& src, const fs::path& data_dir, const fs::path& pretrained_dir,
                                    const fs::path& out, const std::string& axis, std::vector<std::string> values,
                                    std::ostream& log) {
    if (!is_ablation_axis(axis)) throw Error(ErrorCode::invalid_argument, "unknown ablation axis '" + axis + "'");
    if (values.empty()) values = default_ablation_values(axis);
    const Manifest upstream = read_manifest(pretrained_dir, "pretrain");
    const RunConfig base = resolve_config(&upstream, src);
    const Dataset data = load_dataset(data_dir, base);
    const SplitData split = make_split(data, base);
    const WalkCorpus corpus = build_corpus(data, base);
    const MetaPathEmbeddings emb = load_path_embeddings(pretrained_dir, data.hin, base.model().intents.dim);

    auto train_and_eval = [&](const RunConfig& cfg, std::vector<std::size_t> ks) {
        TrainResult t = run_training(data, split, corpus, emb, cfg);
        if (cfg.intervention().iterations == 0) return evaluate_model(data, split, t.params, nullptr, cfg, ks).overall;
        const InterventionResult r = run_debiasing(data, split, corpus, std::move(t.params), cfg);
        return evaluate_model(data, split, r.train.params, &r.aspects, cfg, ks).overall;
    };

    std::optional<MetricReport> shared;
    if (axis == "K") {
        std::vector<std::size_t> ks;
        for (const auto& v : values) ks.push_back(static_cast<std::size_t>(parse_uint(v)));
        if (std::find(ks.begin(), ks.end(), 0u) == ks.end()) shared = train_and_eval(base, ks);
    }
    const std::string key = axis == "k" ? "model.k" : axis == "L" ? "model.layers" : "intervention.iterations";
    const auto rows = ablation_sweep(axis, values, [&](const std::string& v) {
        log << "[ablate] " << axis << "=" << v << "\n";
        if (shared) return *shared;
        RunConfig cfg = base;
        cfg.set(key, v);
        cfg.validate();
        return train_and_eval(cfg, {20});
    });
    fs::create_directories(out);
    const std::string file = "ablation_" + axis + ".csv";
    write_file(out / file, ablation_csv(rows));
    write_stage_manifest(out, "ablate", base, {{"data", data_dir, kDataFiles}, {"pretrain", pretrained_dir, path_files(emb)}},
                         {file}, {{"axis", axis}});
    return rows;
}

}  // namespace cadsi
