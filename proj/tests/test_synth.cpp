#include <doctest.h>

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>

#include "cadsi/synth.hpp"
#include "fixtures.hpp"

using namespace cadsi;

namespace {

SynthConfig small(std::uint64_t seed) {
    SynthConfig cfg;
    cfg.n_users = 60;
    cfg.n_items = 200;
    cfg.interactions_per_user = 12;
    cfg.seed = seed;
    return cfg;
}

std::vector<TypeId> aspect_types(const SynthData& d, const SynthConfig& cfg) {
    std::vector<TypeId> out;
    for (const auto& a : cfg.aspects) out.push_back(d.hin.schema().type(a.name));
    return out;
}

}  // namespace

TEST_CASE("unskewed attributes are uniform under a chi-square test") {
    SynthConfig cfg = small(3);
    cfg.n_items = 3000;
    cfg.aspects = {{"G", 10, 0.0}};
    cfg.skew_exponent = 0.0;
    cfg.true_intents = 2;
    const SynthData d = generate(cfg);
    const auto report = skew_report(d.hin, d.hin.schema().type("I"), aspect_types(d, cfg));
    REQUIRE(report.size() == 1);
    const double expected = 3000.0 / 10.0;
    double stat = 0.0;
    for (std::size_t c : report[0].histogram) stat += (c - expected) * (c - expected) / expected;
    const boost::math::chi_squared dist(9);
    CHECK(boost::math::cdf(boost::math::complement(dist, stat)) > 0.01);
    CHECK(report[0].head_mass == doctest::Approx(0.5).epsilon(0.05));
    CHECK(report[0].missing == 0);
}

TEST_CASE("skew exponent 1.5 puts over 80% of connections on the top half") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        SynthConfig cfg = small(seed);
        cfg.n_items = 1000;
        cfg.skew_exponent = 1.5;
        const SynthData d = generate(cfg);
        for (const auto& s : skew_report(d.hin, d.hin.schema().type("I"), aspect_types(d, cfg))) {
            INFO(s.aspect);
            CHECK(s.head_mass > 0.8);
        }
    }
}

TEST_CASE("missing fractions follow the configured rates") {
    SynthConfig cfg;
    cfg.seed = 4;
    const SynthData d = generate(cfg);
    const auto report = skew_report(d.hin, d.hin.schema().type("I"), aspect_types(d, cfg));
    for (std::size_t a = 0; a < cfg.aspects.size(); ++a) {
        CHECK(std::abs(report[a].missing_fraction() - cfg.aspects[a].missing_rate) <= 0.02);
        CHECK(report[a].connections + report[a].missing == cfg.n_items);
    }
}

TEST_CASE("the report flags the most-missing aspect as configured") {
    SynthConfig cfg = small(5);
    cfg.aspects = {{"Au", 30, 0.35}, {"P", 15, 0.05}, {"Y", 10, 0.1}};
    const SynthData d = generate(cfg);
    const auto report = skew_report(d.hin, d.hin.schema().type("I"), aspect_types(d, cfg));
    const auto worst = std::max_element(report.begin(), report.end(), [](const auto& x, const auto& y) {
        return x.missing_fraction() < y.missing_fraction();
    });
    CHECK(worst->aspect == "Au");
}

TEST_CASE("without confounding every user follows the true intent") {
    SynthConfig cfg;
    cfg.confound_strength = 0.0;
    cfg.true_intents = 2;
    cfg.seed = 6;
    const SynthData d = generate(cfg);
    std::vector<std::size_t> consistent(cfg.n_users, 0), total(cfg.n_users, 0);
    for (const auto& x : d.truth.interactions) {
        ++total[x.user];
        consistent[x.user] += d.truth.intent_consistent(x.user, x.item);
        CHECK(x.driver == Driver::intent);
    }
    for (std::size_t u = 0; u < cfg.n_users; ++u) CHECK(consistent[u] >= 0.95 * total[u]);
}

TEST_CASE("drivers are recorded and match their pools") {
    const SynthConfig cfg = small(7);
    const SynthData d = generate(cfg);
    const auto& t = d.truth;
    std::size_t confounded = 0;
    for (const auto& x : t.interactions) {
        if (x.driver == Driver::intent) {
            CHECK(t.intent_consistent(x.user, x.item));
        } else {
            ++confounded;
            const auto& seen = t.observed_attributes[x.item][0];
            REQUIRE(seen.has_value());
            CHECK(std::binary_search(t.head_attributes.begin(), t.head_attributes.end(), *seen));
        }
    }
    const double share = static_cast<double>(confounded) / t.interactions.size();
    CHECK(share == doctest::Approx(cfg.confound_strength).epsilon(0.25));
}

TEST_CASE("graph agrees with the ground truth") {
    const SynthConfig cfg = small(8);
    const SynthData d = generate(cfg);
    const Schema& s = d.hin.schema();
    const TypeId U = s.type("U"), I = s.type("I");
    CHECK(d.hin.node_count() == cfg.n_users + cfg.n_items + 70);
    std::vector<std::size_t> degree(cfg.n_users, 0);
    for (const auto& x : d.truth.interactions) ++degree[x.user];
    for (std::uint32_t u = 0; u < cfg.n_users; ++u) {
        CHECK(d.hin.neighbors(d.hin.node(d.user_ids[u]), I).size() == degree[u]);
        CHECK(degree[u] == cfg.interactions_per_user);
    }
    for (std::uint32_t i = 0; i < cfg.n_items; ++i)
        for (std::size_t a = 0; a < cfg.aspects.size(); ++a) {
            const auto nbrs = d.hin.neighbors(d.hin.node(d.item_ids[i]), s.type(cfg.aspects[a].name));
            const auto& r = d.truth.observed_attributes[i][a];
            CHECK(nbrs.size() == (r ? 1u : 0u));
            if (r) CHECK(d.truth.latent_attributes[i][a] == *r);
        }
    CHECK(interaction_matrix(d.hin, U, I).entries.size() == d.truth.interactions.size());
    const auto checks = validate_metapaths(s, d.metapaths);
    for (const auto& c : checks) CHECK(c.valid);
}

TEST_CASE("generation is deterministic per seed") {
    const SynthConfig cfg = small(9);
    const SynthData a = generate(cfg), b = generate(cfg);
    CHECK(serialize_edges(a.hin) == serialize_edges(b.hin));
    CHECK(ground_truth_tsv(a, cfg) == ground_truth_tsv(b, cfg));
    SynthConfig other = cfg;
    other.seed = 10;
    CHECK(serialize_edges(generate(other).hin) != serialize_edges(a.hin));
}

TEST_CASE("infeasible and invalid configs are rejected") {
    SynthConfig cfg = small(1);
    cfg.true_intents = 41;
    try {
        generate(cfg);
        FAIL("expected infeasible");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::infeasible);
    }
    cfg = small(1);
    cfg.confound_strength = 1.5;
    CHECK_THROWS_AS(generate(cfg), Error);
    cfg = small(1);
    cfg.aspects.push_back({"Ax", 5, 0.0});
    CHECK_THROWS_AS(generate(cfg), Error);
    cfg = small(1);
    cfg.interactions_per_user = 201;
    CHECK_THROWS_AS(generate(cfg), Error);
}

TEST_CASE("written files reload into the same graph") {
    const SynthConfig cfg = small(2);
    const SynthData d = generate(cfg);
    const auto dir = cadsi::testing::scratch_dir("synth_write");
    write_synth(d, cfg, dir);
    for (const char* f : {"nodes.tsv", "edges.tsv", "schema.txt", "metapaths.txt", "interactions.tsv",
                          "ground_truth.tsv", "skew_report.csv"})
        CHECK(std::filesystem::exists(dir / f));
    const Schema schema = Schema::parse(read_file(dir / "schema.txt"));
    const std::vector<std::filesystem::path> edges{dir / "edges.tsv"};
    const Hin back = load_hin(dir / "nodes.tsv", edges, schema);
    CHECK(serialize_edges(back) == serialize_edges(d.hin));
    const std::string gt = read_file(dir / "ground_truth.tsv");
    CHECK(gt.rfind("# users\nuser\tintent\nu0\t", 0) == 0);
    CHECK(gt.find("item\taspect_type\tattr_id\n") != std::string::npos);
    CHECK(read_file(dir / "skew_report.csv").rfind("aspect,items,missing,", 0) == 0);
    CHECK(parse_metapath_lines(read_file(dir / "metapaths.txt")) == d.metapaths);
}
