#include "cadsi/config.hpp"

#include <algorithm>

namespace cadsi {

namespace {

const std::vector<KeySpec> kSchema{
    {"seed", KeyKind::integer, "0", "master seed for every stage"},
    {"threads", KeyKind::integer, "0", "worker threads; 0 falls back to CADSI_THREADS, then 1"},

    {"data.user_type", KeyKind::text, "U", "user node type"},
    {"data.item_type", KeyKind::text, "I", "item node type"},
    {"data.aspect_types", KeyKind::text, "", "comma-separated aspect node types; empty means every other type"},
    {"data.kcore", KeyKind::boolean, "false", "apply the iterated k-core filter on load"},
    {"data.core", KeyKind::integer, "5", "k for the k-core filter"},

    {"synth.users", KeyKind::integer, "300", "generated users"},
    {"synth.items", KeyKind::integer, "500", "generated items"},
    {"synth.aspects", KeyKind::aspect_list, "A:40:0.1,D:20:0.2,G:10:0.05", "name:cardinality:missing_rate list"},
    {"synth.skew", KeyKind::real, "1.0", "Zipf exponent of attribute popularity"},
    {"synth.true_intents", KeyKind::integer, "4", "ground-truth intents"},
    {"synth.interactions_per_user", KeyKind::integer, "30", "interactions per user"},
    {"synth.confound", KeyKind::real, "0.4", "probability an interaction follows the head attributes"},

    {"walks.per_node", KeyKind::integer, "10", "walks per start node and meta path"},
    {"walks.length", KeyKind::integer, "21", "nodes per walk"},

    {"skipgram.window", KeyKind::integer, "3", "context window"},
    {"skipgram.negatives", KeyKind::integer, "5", "negatives per pair"},
    {"skipgram.lr", KeyKind::real, "0.025", "pretraining step size"},
    {"skipgram.epochs", KeyKind::integer, "1", "pretraining passes over the corpus"},

    {"model.dim", KeyKind::integer, "64", "embedding dimension"},
    {"model.k", KeyKind::integer, "4", "intents"},
    {"model.iters", KeyKind::integer, "2", "routing rounds per layer"},
    {"model.layers", KeyKind::integer, "2", "propagation layers"},
    {"model.delta", KeyKind::real, "0.5", "weight of the collaborative term in the prediction"},

    {"objective.lambda_d", KeyKind::real, "1.0", "debias loss weight"},
    {"objective.lambda_theta", KeyKind::real, "1.0", "skip-gram loss weight"},
    {"objective.lambda_z", KeyKind::real, "1.0", "BPR loss weight"},
    {"objective.l2", KeyKind::real, "0.0001", "l2 penalty on trainable parameters"},

    {"split.train", KeyKind::real, "0.8", "train fraction per user"},
    {"split.validation", KeyKind::real, "0.1", "validation fraction per user"},
    {"split.test", KeyKind::real, "0.1", "test fraction per user"},

    {"train.max_epochs", KeyKind::integer, "2000", "epoch cap"},
    {"train.batch_size", KeyKind::integer, "1024", "triples per batch"},
    {"train.lr", KeyKind::real, "0.005", "Adam step size"},
    {"train.eval_every", KeyKind::integer, "10", "epochs between validation runs"},
    {"train.patience", KeyKind::integer, "50", "validation runs without improvement before stopping"},
    {"train.early_stopping", KeyKind::boolean, "true", "stop on patience and restore the best snapshot"},
    {"train.skipgram_pairs", KeyKind::integer, "0", "skip-gram pairs per batch; 0 means batch_size"},

    {"intervention.iterations", KeyKind::integer, "140", "fine-tuning epochs with the debias loss; 0 skips"},
    {"intervention.unfreeze_aspects", KeyKind::boolean, "false", "let the debias loss update aspect vectors"},

    {"eval.ks", KeyKind::int_list, "10,20,50", "reported cutoffs"},
    {"eval.minority_aspect", KeyKind::text, "", "aspect defining minority items; empty means the first aspect"},
};

const KeySpec& spec_of(const std::string& key) {
    for (const auto& s : kSchema)
        if (s.key == key) return s;
    throw Error(ErrorCode::config, "unknown config key '" + key + "'");
}

void check_value(const KeySpec& spec, const std::string& value) {
    try {
        switch (spec.kind) {
            case KeyKind::integer: {
                std::string_view v = trim(value);
                if (!v.empty() && v[0] == '-') v.remove_prefix(1);
                parse_uint(v);
                break;
            }
            case KeyKind::real: parse_double(value); break;
            case KeyKind::boolean:
                if (value != "true" && value != "false") throw Error(ErrorCode::config, "expected true or false");
                break;
            case KeyKind::int_list:
                for (const auto& part : split(value, ',')) parse_uint(part);
                break;
            case KeyKind::aspect_list: parse_aspect_list(value); break;
            case KeyKind::text: break;
        }
    } catch (const Error& e) {
        throw Error(ErrorCode::config, "bad value for " + spec.key + ": " + e.what());
    }
}

}  // namespace

std::span<const KeySpec> config_schema() { return kSchema; }

std::vector<AspectSpec> parse_aspect_list(const std::string& text) {
    std::vector<AspectSpec> out;
    for (const auto& item : split(text, ',')) {
        const auto parts = split(item, ':');
        if (parts.size() != 3) throw Error(ErrorCode::config, "aspect entry '" + std::string(item) + "' is not name:cardinality:rate");
        out.push_back({std::string(trim(parts[0])), static_cast<std::size_t>(parse_uint(parts[1])),
                       parse_double(parts[2])});
    }
    return out;
}

RunConfig::RunConfig() {
    for (const auto& s : kSchema) values_[s.key] = s.default_value;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    RunConfig cfg;
    cfg.merge_text(read_file(path), path.string());
    return cfg;
}

void RunConfig::merge_text(std::string_view text, const std::string& origin) {
    std::size_t line_no = 0;
    for (const auto& raw : cadsi::split(text, '\n')) {
        ++line_no;
        const std::string_view line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        try {
            set_assignment(std::string(line));
        } catch (const Error& e) {
            throw Error(ErrorCode::config, origin + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const KeySpec& spec = spec_of(key);
    check_value(spec, value);
    values_[key] = value;
}

void RunConfig::set_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::config, "expected key=value, got '" + assignment + "'");
    set(std::string(trim(std::string_view(assignment).substr(0, eq))),
        std::string(trim(std::string_view(assignment).substr(eq + 1))));
}

const std::string& RunConfig::get(const std::string& key) const {
    spec_of(key);
    return values_.at(key);
}

std::int64_t RunConfig::integer(const std::string& key) const {
    const std::string_view v = trim(get(key));
    if (!v.empty() && v[0] == '-') return -static_cast<std::int64_t>(parse_uint(v.substr(1)));
    return static_cast<std::int64_t>(parse_uint(v));
}

double RunConfig::real(const std::string& key) const { return parse_double(get(key)); }
bool RunConfig::boolean(const std::string& key) const { return get(key) == "true"; }

std::vector<std::size_t> RunConfig::int_list(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& part : cadsi::split(get(key), ',')) out.push_back(static_cast<std::size_t>(parse_uint(part)));
    return out;
}

std::string RunConfig::serialize() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
}

unsigned RunConfig::threads() const {
    const auto n = integer("threads");
    if (n < 0) throw Error(ErrorCode::config, "threads must be >= 0");
    return resolve_threads(static_cast<unsigned>(n));
}

namespace {

std::size_t count(const RunConfig& c, const std::string& key) {
    const auto v = c.integer(key);
    if (v < 0) throw Error(ErrorCode::config, key + " must be >= 0");
    return static_cast<std::size_t>(v);
}

}  // namespace

SynthConfig RunConfig::synth() const {
    SynthConfig s;
    s.n_users = count(*this, "synth.users");
    s.n_items = count(*this, "synth.items");
    s.aspects = parse_aspect_list(get("synth.aspects"));
    s.skew_exponent = real("synth.skew");
    s.true_intents = count(*this, "synth.true_intents");
    s.interactions_per_user = count(*this, "synth.interactions_per_user");
    s.confound_strength = real("synth.confound");
    s.seed = seed();
    return s;
}

WalkConfig RunConfig::walks() const {
    WalkConfig w;
    w.walks_per_node = count(*this, "walks.per_node");
    w.walk_length = count(*this, "walks.length");
    w.seed = seed();
    return w;
}

SkipGramConfig RunConfig::skipgram() const {
    SkipGramConfig s;
    s.dim = count(*this, "model.dim");
    s.window = count(*this, "skipgram.window");
    s.negatives = count(*this, "skipgram.negatives");
    s.lr = real("skipgram.lr");
    s.epochs = count(*this, "skipgram.epochs");
    s.seed = seed();
    return s;
}

ModelConfig RunConfig::model() const {
    ModelConfig m;
    m.intents.dim = count(*this, "model.dim");
    m.intents.k = count(*this, "model.k");
    m.intents.iters = count(*this, "model.iters");
    m.intents.layers = count(*this, "model.layers");
    m.delta = real("model.delta");
    m.threads = threads();
    return m;
}

ObjectiveConfig RunConfig::objective() const {
    return {real("objective.lambda_d"), real("objective.lambda_theta"), real("objective.lambda_z"),
            real("objective.l2")};
}

TrainConfig RunConfig::train() const {
    TrainConfig t;
    t.max_epochs = count(*this, "train.max_epochs");
    t.batch_size = count(*this, "train.batch_size");
    t.lr = real("train.lr");
    t.eval_every = count(*this, "train.eval_every");
    t.patience = count(*this, "train.patience");
    t.early_stopping = boolean("train.early_stopping");
    t.skipgram_pairs = count(*this, "train.skipgram_pairs");
    t.seed = seed();
    return t;
}

SplitConfig RunConfig::split() const {
    return {real("split.train"), real("split.validation"), real("split.test"), seed()};
}

InterventionConfig RunConfig::intervention() const {
    InterventionConfig i;
    i.iterations = count(*this, "intervention.iterations");
    i.unfreeze_aspects = boolean("intervention.unfreeze_aspects");
    return i;
}

void RunConfig::validate() const {
    synth().validate();
    walks();
    skipgram().validate();
    model().validate();
    objective().validate();
    train().validate();
    split().validate();
    const auto ks = int_list("eval.ks");
    if (ks.empty() || std::find(ks.begin(), ks.end(), 0u) != ks.end())
        throw Error(ErrorCode::config, "eval.ks must list cutoffs >= 1");
    if (count(*this, "data.core") < 1) throw Error(ErrorCode::config, "data.core must be >= 1");
}

}  // namespace cadsi
