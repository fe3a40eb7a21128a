#include <algorithm>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"

#include "cadsi/common.hpp"
#include "cadsi/hin.hpp"

using namespace cadsi;
using cadsi::testing::make_hin;
using cadsi::testing::movie_schema;
using cadsi::testing::scratch_dir;

namespace {

std::multiset<std::string> edge_multiset(const Hin& hin) {
    std::multiset<std::string> out;
    for (auto line : split(serialize_edges(hin), '\n'))
        if (!line.empty()) out.insert(std::string(line));
    return out;
}

Hin users_and_items(const std::vector<std::vector<int>>& likes, std::size_t items) {
    const Schema schema = Schema::parse("nodetype U\nnodetype I\nnodetype G\nedgekind ui U I\nedgekind ig I G\n");
    std::vector<std::pair<std::string, std::string>> nodes;
    std::vector<std::tuple<std::string, std::string, std::string>> edges;
    for (std::size_t u = 0; u < likes.size(); ++u) nodes.emplace_back("U", "u" + std::to_string(u));
    for (std::size_t i = 0; i < items; ++i) nodes.emplace_back("I", "i" + std::to_string(i));
    for (std::size_t u = 0; u < likes.size(); ++u)
        for (int i : likes[u]) edges.emplace_back("u" + std::to_string(u), "i" + std::to_string(i), "ui");
    return make_hin(schema, nodes, edges);
}

}  // namespace

TEST_CASE("schema parse and serialize round trip") {
    const Schema s = movie_schema();
    CHECK(s.type_count() == 3);
    CHECK(s.edge_kinds().size() == 2);
    CHECK(Schema::parse(s.serialize()).serialize() == s.serialize());
    CHECK(s.kind_between(s.type("M"), s.type("U")).has_value());
    CHECK_FALSE(s.kind_between(s.type("U"), s.type("A")).has_value());
}

TEST_CASE("schema rejects degenerate declarations") {
    CHECK_THROWS_AS(Schema::parse("nodetype U\n"), Error);
    CHECK_THROWS_AS(Schema::parse("nodetype U\nnodetype U\nedgekind a U U\n"), Error);
    CHECK_THROWS_AS(Schema::parse("nodetype U\nnodetype I\nedgekind a U X\n"), Error);
    CHECK_THROWS_AS(Schema::parse("nodetype U\nnodetype I\nedge a U I\n"), Error);
    // Two types and one relation satisfy |types| + |relations| > 2.
    CHECK_NOTHROW(Schema::parse("nodetype U\nnodetype I\nedgekind ui U I\n"));
}

TEST_CASE("load_hin ingests three users, four items and six interactions") {
    const auto dir = scratch_dir("hin_load");
    write_file(dir / "schema.txt", "nodetype U\nnodetype I\nedgekind ui U I\n");
    write_file(dir / "nodes.tsv", "U\tu1\nU\tu2\nU\tu3\nI\ti1\nI\ti2\nI\ti3\nI\ti4\n");
    write_file(dir / "edges.tsv", "u1\ti1\tui\nu1\ti2\tui\nu2\ti2\tui\ni3\tu2\tui\nu3\ti4\tui\nu3\ti1\tui\n");
    const std::vector<std::filesystem::path> edge_files{dir / "edges.tsv"};
    const Hin hin = load_hin(dir / "nodes.tsv", edge_files, load_schema(dir / "schema.txt"));
    CHECK(hin.node_count() == 7);
    CHECK(hin.edge_count() == 6);
    // Reversed edge lines are oriented to the declared kind.
    for (const auto& e : hin.edges()) CHECK(hin.type_of(e.a) == hin.schema().type("U"));
}

TEST_CASE("load_hin reports malformed inputs") {
    const auto dir = scratch_dir("hin_errors");
    const Schema schema = Schema::parse("nodetype U\nnodetype I\nedgekind ui U I\n");
    write_file(dir / "nodes.tsv", "U\tu1\nI\ti1\n");
    const std::vector<std::filesystem::path> edges{dir / "edges.tsv"};

    write_file(dir / "bad_type.tsv", "X\tu1\n");
    write_file(dir / "edges.tsv", "");
    try {
        load_hin(dir / "bad_type.tsv", edges, schema);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::schema);
    }

    write_file(dir / "edges.tsv", "u1\ti9\tui\n");
    try {
        load_hin(dir / "nodes.tsv", edges, schema);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::unknown_node);
    }

    write_file(dir / "edges.tsv", "u1\tu1\tui\n");
    CHECK_THROWS_AS(load_hin(dir / "nodes.tsv", edges, schema), Error);

    write_file(dir / "empty.tsv", "");
    write_file(dir / "edges.tsv", "");
    try {
        load_hin(dir / "empty.tsv", edges, schema);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::empty_input);
    }
}

TEST_CASE("five-core filter drops a user with a single interaction") {
    std::vector<std::vector<int>> likes(6, {0, 1, 2, 3, 4});
    likes.push_back({0});
    const Hin hin = users_and_items(likes, 5);
    const Schema& s = hin.schema();
    const Hin core = kcore_filter(hin, s.type("U"), s.type("I"), 5);
    CHECK_FALSE(core.find("u6").has_value());
    CHECK(core.nodes_of_type(s.type("U")).size() == 6);
    CHECK(core.edge_count() == 30);
}

TEST_CASE("five-core filter iterates to a fixpoint") {
    // Dropping u5 leaves i5 with four users, which then cascades.
    std::vector<std::vector<int>> likes(5, {0, 1, 2, 3, 4, 5});
    likes[4] = {0, 1, 2, 3, 4};
    likes.push_back({0, 1, 2, 5});
    likes[0].push_back(6);
    const Hin hin = users_and_items(likes, 7);
    const Schema& s = hin.schema();
    const Hin core = kcore_filter(hin, s.type("U"), s.type("I"), 5);
    const auto ui = interaction_matrix(core, s.type("U"), s.type("I"));
    std::vector<std::size_t> per_user(ui.user_count()), per_item(ui.item_count());
    for (auto [u, i] : ui.entries) {
        ++per_user[u];
        ++per_item[i];
    }
    for (auto c : per_user) CHECK(c >= 5);
    for (auto c : per_item) CHECK(c >= 5);
    CHECK_FALSE(core.find("i5").has_value());
    CHECK_FALSE(core.find("i6").has_value());
    CHECK_FALSE(core.find("u5").has_value());
}

TEST_CASE("friend filter applies only when a user-user relation exists") {
    const Schema social = Schema::parse("nodetype U\nnodetype I\nedgekind ui U I\nedgekind uu U U\n");
    std::vector<std::pair<std::string, std::string>> nodes;
    std::vector<std::tuple<std::string, std::string, std::string>> edges;
    for (int u = 0; u < 6; ++u) nodes.emplace_back("U", "u" + std::to_string(u));
    for (int i = 0; i < 5; ++i) nodes.emplace_back("I", "i" + std::to_string(i));
    for (int u = 0; u < 6; ++u)
        for (int i = 0; i < 5; ++i) edges.emplace_back("u" + std::to_string(u), "i" + std::to_string(i), "ui");
    // Users 0-4 befriend every other user; u5 has no friends.
    for (int a = 0; a < 5; ++a)
        for (int b = a + 1; b < 6; ++b)
            if (b < 5 || a == 0) edges.emplace_back("u" + std::to_string(a), "u" + std::to_string(b), "uu");
    const Hin hin = make_hin(social, nodes, edges);
    CHECK_THROWS_AS(kcore_filter(hin, social.type("U"), social.type("I"), 5), Error);

    const Hin relaxed = kcore_filter(hin, social.type("U"), social.type("I"), 1);
    CHECK(relaxed.nodes_of_type(social.type("U")).size() == 6);
}

TEST_CASE("douban-book-like schema loads with five edge kinds") {
    const Schema s = Schema::parse(
        "nodetype U\nnodetype Bo\nnodetype Au\nnodetype P\nnodetype Y\n"
        "edgekind rates U Bo\nedgekind friend U U\nedgekind wrote Bo Au\n"
        "edgekind published Bo P\nedgekind year Bo Y\n");
    const Hin hin = make_hin(s, {{"U", "u1"}, {"U", "u2"}, {"Bo", "b1"}, {"Au", "au1"}, {"P", "p1"}, {"Y", "y1"}},
                             {{"u1", "b1", "rates"},
                              {"u1", "u2", "friend"},
                              {"b1", "au1", "wrote"},
                              {"b1", "p1", "published"},
                              {"b1", "y1", "year"}});
    CHECK(hin.schema().edge_kinds().size() == 5);
    CHECK(hin.edge_count() == 5);
    CHECK(hin.neighbors(hin.node("u1"), s.type("U")).size() == 1);
}

TEST_CASE("neighbors_of_type") {
    const Schema s = movie_schema();
    const Hin hin = make_hin(s, {{"U", "u1"}, {"M", "m1"}, {"A", "a2"}, {"A", "a1"}},
                             {{"u1", "m1", "watch"}, {"m1", "a2", "acted"}, {"m1", "a1", "acted"}});
    const auto actors = neighbors_of_type(hin, "m1", "A");
    REQUIRE(actors.size() == 2);
    std::vector<std::string> ids{hin.id_of(actors[0]), hin.id_of(actors[1])};
    std::sort(ids.begin(), ids.end());
    CHECK(ids == std::vector<std::string>{"a1", "a2"});
    CHECK(neighbors_of_type(hin, "u1", "A").empty());
    CHECK_THROWS_AS(neighbors_of_type(hin, "nobody", "A"), Error);
    // Same call twice gives the same order.
    CHECK(neighbors_of_type(hin, "m1", "A") == actors);
}

TEST_CASE("duplicate edges collapse and adjacency is symmetric") {
    const Schema s = movie_schema();
    const Hin hin = make_hin(s, {{"U", "u1"}, {"U", "u2"}, {"M", "m1"}, {"M", "m2"}, {"A", "a1"}},
                             {{"u1", "m1", "watch"},
                              {"m1", "u1", "watch"},
                              {"u1", "m2", "watch"},
                              {"u2", "m2", "watch"},
                              {"m2", "a1", "acted"}});
    CHECK(hin.edge_count() == 4);
    for (NodeId v = 0; v < hin.node_count(); ++v) {
        for (std::uint16_t t = 0; t < s.type_count(); ++t) {
            auto nb = hin.neighbors(v, TypeId{t});
            CHECK(std::adjacent_find(nb.begin(), nb.end()) == nb.end());
            for (NodeId w : nb) {
                auto back = hin.neighbors(w, hin.type_of(v));
                CHECK(std::find(back.begin(), back.end(), v) != back.end());
            }
        }
    }
}

TEST_CASE("write then load reproduces the graph") {
    const Hin hin = cadsi::testing::complete_graph(3, 4, 2);
    const auto dir = scratch_dir("hin_roundtrip");
    write_hin(hin, dir);
    const std::vector<std::filesystem::path> edges{dir / "edges.tsv"};
    const Hin again = load_hin(dir / "nodes.tsv", edges, load_schema(dir / "schema.txt"));
    CHECK(serialize_nodes(again) == serialize_nodes(hin));
    CHECK(edge_multiset(again) == edge_multiset(hin));
}

TEST_CASE("meta path validation") {
    const Schema s = movie_schema();
    const std::vector<std::vector<std::string>> paths{
        {"U", "M", "U"}, {"U", "M", "A"}, {"U", "A", "M"}, {"M", "A", "M"}, {"U"}};
    const auto report = validate_metapaths(s, paths);
    CHECK(report[0].valid);
    CHECK(report[0].symmetric);
    CHECK(report[1].valid);
    CHECK_FALSE(report[1].symmetric);
    CHECK_FALSE(report[2].valid);
    CHECK(report[2].offending_step == 1);
    CHECK(report[3].valid);
    CHECK_FALSE(report[4].valid);

    const Schema no_actor_link = Schema::parse("nodetype U\nnodetype M\nnodetype A\nedgekind watch U M\n");
    const std::vector<std::vector<std::string>> uma{{"U", "M", "A"}};
    const auto r = validate_metapaths(no_actor_link, uma);
    CHECK_FALSE(r[0].valid);
    CHECK(r[0].offending_step == 2);
    CHECK_THROWS_AS(resolve_metapaths(no_actor_link, uma), Error);
}

TEST_CASE("meta path file parsing skips comments") {
    const auto lines = parse_metapath_lines("# paths\nU M U\n\nM A M\n");
    REQUIRE(lines.size() == 2);
    CHECK(lines[1] == std::vector<std::string>{"M", "A", "M"});
    const auto resolved = resolve_metapaths(movie_schema(), lines);
    CHECK(resolved[0].name == "UMU");
    CHECK(resolved[1].symmetric());
}

TEST_CASE("interaction matrix comes only from the user-item relation") {
    const Hin hin = cadsi::testing::complete_graph(2, 3, 2);
    const Schema& s = hin.schema();
    const auto m = interaction_matrix(hin, s.type("U"), s.type("M"));
    CHECK(m.user_count() == 2);
    CHECK(m.item_count() == 3);
    CHECK(m.entries.size() == 6);
    for (auto [u, i] : m.entries) {
        CHECK(u < 2);
        CHECK(i < 3);
    }
    CHECK_THROWS_AS(interaction_matrix(hin, s.type("U"), s.type("A")), Error);
}
