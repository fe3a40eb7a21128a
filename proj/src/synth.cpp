#include "cadsi/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>

#include "cadsi/rng.hpp"

namespace cadsi {

void SynthConfig::validate() const {
    if (n_users < 1 || n_items < 1) throw Error(ErrorCode::config, "user and item counts must be >= 1");
    if (aspects.empty()) throw Error(ErrorCode::config, "at least one aspect type is required");
    std::set<std::string> names{"U", "I"};
    std::set<char> prefixes;
    for (const auto& a : aspects) {
        if (a.name.empty() || !names.insert(a.name).second)
            throw Error(ErrorCode::config, "aspect names must be non-empty and distinct from U, I and each other");
        if (!prefixes.insert(static_cast<char>(std::tolower(static_cast<unsigned char>(a.name[0])))).second)
            throw Error(ErrorCode::config, "aspect names must start with distinct letters");
        if (a.cardinality < 1) throw Error(ErrorCode::config, "aspect cardinality must be >= 1");
        if (!(a.missing_rate >= 0.0 && a.missing_rate <= 1.0))
            throw Error(ErrorCode::config, "missing rate must lie in [0, 1]");
    }
    if (!(skew_exponent >= 0.0)) throw Error(ErrorCode::config, "skew exponent must be >= 0");
    if (!(confound_strength >= 0.0 && confound_strength <= 1.0))
        throw Error(ErrorCode::config, "confound strength must lie in [0, 1]");
    if (true_intents < 1 || interactions_per_user < 1) throw Error(ErrorCode::config, "counts must be >= 1");
    if (true_intents > aspects[0].cardinality)
        throw Error(ErrorCode::infeasible, "true_intents (" + std::to_string(true_intents) +
                                               ") exceeds the cardinality of aspect " + aspects[0].name);
    if (interactions_per_user > n_items)
        throw Error(ErrorCode::infeasible, "interactions_per_user exceeds the number of items");
}

bool GroundTruth::intent_consistent(std::uint32_t user, std::uint32_t item) const {
    const auto& pref = intent_attributes[user_intent[user]];
    return std::binary_search(pref.begin(), pref.end(), latent_attributes[item][0]);
}

Schema synth_schema(const SynthConfig& cfg) {
    std::string text = "nodetype U\nnodetype I\n";
    for (const auto& a : cfg.aspects) text += "nodetype " + a.name + "\n";
    text += "edgekind interact U I\n";
    for (const auto& a : cfg.aspects) text += "edgekind has_" + a.name + " I " + a.name + "\n";
    return Schema::parse(text);
}

namespace {

std::string attribute_id(const AspectSpec& a, std::size_t r) {
    return std::string(1, static_cast<char>(std::tolower(static_cast<unsigned char>(a.name[0])))) +
           std::to_string(r);
}

/// Zipf rank weights (r+1)^-s as a cumulative table.
std::vector<double> zipf_cumulative(std::size_t n, double s) {
    std::vector<double> c(n);
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) c[r] = total += std::pow(static_cast<double>(r + 1), -s);
    return c;
}

std::size_t draw(const std::vector<double>& cumulative, Rng& rng) {
    const double x = rng.uniform() * cumulative.back();
    return std::min<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), x) - cumulative.begin(),
                                 cumulative.size() - 1);
}

}  // namespace

SynthData generate(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t n_aspects = cfg.aspects.size();
    SynthData out;
    GroundTruth& truth = out.truth;

    // Attributes: latent draw per item, then an exact missing share hidden per aspect.
    truth.latent_attributes.assign(cfg.n_items, std::vector<std::uint32_t>(n_aspects));
    truth.observed_attributes.assign(cfg.n_items, std::vector<std::optional<std::uint32_t>>(n_aspects));
    for (std::size_t a = 0; a < n_aspects; ++a) {
        const auto cumulative = zipf_cumulative(cfg.aspects[a].cardinality, cfg.skew_exponent);
        Rng rng = Rng::keyed({cfg.seed, 0xA77, a});
        for (std::size_t i = 0; i < cfg.n_items; ++i) {
            truth.latent_attributes[i][a] = static_cast<std::uint32_t>(draw(cumulative, rng));
            truth.observed_attributes[i][a] = truth.latent_attributes[i][a];
        }
        std::vector<std::uint32_t> order(cfg.n_items);
        std::iota(order.begin(), order.end(), 0u);
        rng.shuffle(std::span<std::uint32_t>(order));
        const auto hidden = static_cast<std::size_t>(std::floor(cfg.aspects[a].missing_rate * cfg.n_items + 0.5));
        for (std::size_t q = 0; q < hidden; ++q) truth.observed_attributes[order[q]][a].reset();
    }

    // Intents prefer disjoint attribute sets of the first aspect.
    const std::size_t card0 = cfg.aspects[0].cardinality;
    truth.intent_attributes.assign(cfg.true_intents, {});
    for (std::uint32_t r = 0; r < card0; ++r) truth.intent_attributes[r % cfg.true_intents].push_back(r);

    // Head attributes by observed popularity: shortest prefix holding half the connections.
    std::vector<std::size_t> count(card0, 0);
    std::size_t total = 0;
    for (const auto& item : truth.observed_attributes)
        if (item[0]) ++count[*item[0]], ++total;
    std::vector<std::uint32_t> by_pop(card0);
    std::iota(by_pop.begin(), by_pop.end(), 0u);
    std::stable_sort(by_pop.begin(), by_pop.end(), [&](auto x, auto y) { return count[x] > count[y]; });
    std::size_t mass = 0;
    for (auto r : by_pop) {
        if (2 * mass >= total) break;
        truth.head_attributes.push_back(r);
        mass += count[r];
    }
    std::sort(truth.head_attributes.begin(), truth.head_attributes.end());

    std::vector<std::vector<std::uint32_t>> intent_pool(cfg.true_intents);
    std::vector<std::uint32_t> head_pool;
    for (std::uint32_t i = 0; i < cfg.n_items; ++i) {
        intent_pool[truth.latent_attributes[i][0] % cfg.true_intents].push_back(i);
        const auto& seen = truth.observed_attributes[i][0];
        if (seen && std::binary_search(truth.head_attributes.begin(), truth.head_attributes.end(), *seen))
            head_pool.push_back(i);
    }

    Rng user_rng = Rng::keyed({cfg.seed, 0x1E7});
    truth.user_intent.resize(cfg.n_users);
    for (auto& t : truth.user_intent) t = static_cast<std::uint32_t>(user_rng.index(cfg.true_intents));

    for (std::uint32_t u = 0; u < cfg.n_users; ++u) {
        Rng rng = Rng::keyed({cfg.seed, 0x1A7, u});
        std::vector<char> taken(cfg.n_items, 0);
        auto pick = [&](const std::vector<std::uint32_t>& pool, std::uint32_t& item) {
            std::vector<std::uint32_t> open;
            for (auto i : pool)
                if (!taken[i]) open.push_back(i);
            if (open.empty()) return false;
            item = open[rng.index(open.size())];
            return true;
        };
        const auto& mine = intent_pool[truth.user_intent[u]];
        for (std::size_t q = 0; q < cfg.interactions_per_user; ++q) {
            Driver driver = rng.bernoulli(cfg.confound_strength) ? Driver::confounder : Driver::intent;
            std::uint32_t item = 0;
            bool ok = pick(driver == Driver::intent ? mine : head_pool, item);
            if (!ok) {
                driver = driver == Driver::intent ? Driver::confounder : Driver::intent;
                ok = pick(driver == Driver::intent ? mine : head_pool, item);
            }
            if (!ok)
                throw Error(ErrorCode::infeasible, "not enough candidate items for user " + std::to_string(u) +
                                                       "; lower interactions_per_user");
            taken[item] = 1;
            truth.interactions.push_back({u, item, driver});
        }
    }

    // Graph.
    const Schema schema = synth_schema(cfg);
    std::vector<Hin::NodeRecord> nodes;
    for (std::size_t u = 0; u < cfg.n_users; ++u) {
        out.user_ids.push_back("u" + std::to_string(u));
        nodes.push_back({schema.type("U"), out.user_ids.back()});
    }
    for (std::size_t i = 0; i < cfg.n_items; ++i) {
        out.item_ids.push_back("i" + std::to_string(i));
        nodes.push_back({schema.type("I"), out.item_ids.back()});
    }
    std::vector<NodeId> attr_base(n_aspects);
    for (std::size_t a = 0; a < n_aspects; ++a) {
        attr_base[a] = static_cast<NodeId>(nodes.size());
        for (std::size_t r = 0; r < cfg.aspects[a].cardinality; ++r)
            nodes.push_back({schema.type(cfg.aspects[a].name), attribute_id(cfg.aspects[a], r)});
    }
    const auto item_base = static_cast<NodeId>(cfg.n_users);
    std::vector<Hin::RawEdge> edges;
    const std::size_t interact = *schema.find_kind("interact");
    for (const auto& x : truth.interactions) edges.push_back({x.user, item_base + x.item, interact});
    for (std::size_t a = 0; a < n_aspects; ++a) {
        const std::size_t kind = *schema.find_kind("has_" + cfg.aspects[a].name);
        for (std::uint32_t i = 0; i < cfg.n_items; ++i)
            if (const auto& r = truth.observed_attributes[i][a]) edges.push_back({item_base + i, attr_base[a] + *r, kind});
    }
    out.hin = Hin(schema, std::move(nodes), std::move(edges));

    out.metapaths.push_back({"U", "I", "U"});
    for (const auto& a : cfg.aspects) out.metapaths.push_back({"U", "I", a.name, "I", "U"});
    out.metapaths.push_back({"I", "U", "I"});
    for (const auto& a : cfg.aspects) out.metapaths.push_back({"I", a.name, "I"});
    return out;
}

std::string ground_truth_tsv(const SynthData& data, const SynthConfig& cfg) {
    const GroundTruth& t = data.truth;
    std::string out = "# users\nuser\tintent\n";
    for (std::size_t u = 0; u < t.user_intent.size(); ++u)
        out += data.user_ids[u] + "\t" + std::to_string(t.user_intent[u]) + "\n";
    out += "# items\nitem\taspect_type\tattr_id\n";
    for (std::size_t i = 0; i < t.observed_attributes.size(); ++i)
        for (std::size_t a = 0; a < cfg.aspects.size(); ++a) {
            const auto& r = t.observed_attributes[i][a];
            out += data.item_ids[i] + "\t" + cfg.aspects[a].name + "\t" +
                   (r ? attribute_id(cfg.aspects[a], *r) : std::string("MISSING")) + "\n";
        }
    out += "# latent\nitem\taspect_type\tattr_id\n";
    for (std::size_t i = 0; i < t.latent_attributes.size(); ++i)
        for (std::size_t a = 0; a < cfg.aspects.size(); ++a)
            out += data.item_ids[i] + "\t" + cfg.aspects[a].name + "\t" +
                   attribute_id(cfg.aspects[a], t.latent_attributes[i][a]) + "\n";
    out += "# intents\nintent\tattr_id\n";
    for (std::size_t k = 0; k < t.intent_attributes.size(); ++k)
        for (auto r : t.intent_attributes[k]) out += std::to_string(k) + "\t" + attribute_id(cfg.aspects[0], r) + "\n";
    out += "# head\nattr_id\n";
    for (auto r : t.head_attributes) out += attribute_id(cfg.aspects[0], r) + "\n";
    out += "# interactions\nuser\titem\tdriver\n";
    for (const auto& x : t.interactions)
        out += data.user_ids[x.user] + "\t" + data.item_ids[x.item] + "\t" +
               (x.driver == Driver::intent ? "intent" : "confounder") + "\n";
    return out;
}

std::vector<AspectSkew> skew_report(const Hin& hin, TypeId item_type, std::span<const TypeId> aspects) {
    const auto items = hin.nodes_of_type(item_type);
    std::vector<AspectSkew> out;
    for (TypeId a : aspects) {
        AspectSkew s;
        s.aspect = hin.schema().type_name(a);
        s.items = items.size();
        for (NodeId i : items) s.missing += hin.neighbors(i, a).empty();
        for (NodeId v : hin.nodes_of_type(a)) s.histogram.push_back(hin.neighbors(v, item_type).size());
        std::sort(s.histogram.begin(), s.histogram.end(), std::greater<>());
        s.attributes = s.histogram.size();
        s.connections = std::accumulate(s.histogram.begin(), s.histogram.end(), std::size_t{0});
        s.head_attributes = (s.attributes + 1) / 2;
        const std::size_t head =
            std::accumulate(s.histogram.begin(), s.histogram.begin() + s.head_attributes, std::size_t{0});
        s.head_mass = s.connections ? static_cast<double>(head) / s.connections : 0.0;
        out.push_back(std::move(s));
    }
    return out;
}

std::string skew_report_csv(std::span<const AspectSkew> rows) {
    std::string out =
        "aspect,items,missing,missing_fraction,attributes,connections,head_attributes,head_mass,histogram\n";
    for (const auto& s : rows) {
        std::string hist;
        for (std::size_t q = 0; q < s.histogram.size(); ++q) hist += (q ? ";" : "") + std::to_string(s.histogram[q]);
        out += s.aspect + "," + std::to_string(s.items) + "," + std::to_string(s.missing) + "," +
               format_double(s.missing_fraction()) + "," + std::to_string(s.attributes) + "," +
               std::to_string(s.connections) + "," + std::to_string(s.head_attributes) + "," +
               format_double(s.head_mass) + "," + hist + "\n";
    }
    return out;
}

void write_synth(const SynthData& data, const SynthConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_hin(data.hin, dir);
    std::string paths;
    for (const auto& p : data.metapaths) {
        for (std::size_t q = 0; q < p.size(); ++q) paths += (q ? " " : "") + p[q];
        paths += "\n";
    }
    write_file(dir / "metapaths.txt", paths);
    std::string inter = "user\titem\n";
    for (const auto& x : data.truth.interactions)
        inter += data.user_ids[x.user] + "\t" + data.item_ids[x.item] + "\n";
    write_file(dir / "interactions.tsv", inter);
    write_file(dir / "ground_truth.tsv", ground_truth_tsv(data, cfg));
    std::vector<TypeId> aspects;
    for (const auto& a : cfg.aspects) aspects.push_back(data.hin.schema().type(a.name));
    const auto report = skew_report(data.hin, data.hin.schema().type("I"), aspects);
    write_file(dir / "skew_report.csv", skew_report_csv(report));
}

}  // namespace cadsi
