#include <doctest.h>

#include <functional>
#include <set>

#include "helpers.hpp"
#include "orthodoc/corpus.hpp"
#include "orthodoc/errors.hpp"
#include "orthodoc/kgraph.hpp"
#include "orthodoc/rand.hpp"

using namespace orthodoc;
using testutil::lex;
using testutil::make_doc;

namespace {

Lexicon basic_lexicon() {
    Lexicon l;
    l.entries = {
        lex("distal radius", "distal radius", EntityType::anatomy, {"located_in"}),
        lex("radius", "radius", EntityType::anatomy),
        lex("fracture", "fracture", EntityType::condition),
        lex("cast", "cast", EntityType::treatment, {"treats"}),
        lex("swelling", "swelling", EntityType::symptom, {"indicates"}),
    };
    return l;
}

Passage passage_of(const std::string& text, const std::string& pid = "p#0") {
    Passage p;
    p.passage_id = pid;
    p.doc_id = "p";
    p.text = text;
    p.token_count = static_cast<int>(tokenize(text).size());
    return p;
}

} // namespace

TEST_CASE("extract_entities: dictionary hits in order") {
    auto mentions = extract_entities(passage_of("distal radius fracture treated with cast"),
                                     basic_lexicon());
    REQUIRE(mentions.size() == 3);
    CHECK(mentions[0].canonical_name == "distal radius");
    CHECK(mentions[0].token_begin == 0);
    CHECK(mentions[0].token_end == 2);
    CHECK(mentions[1].canonical_name == "fracture");
    CHECK(mentions[2].canonical_name == "cast");
    CHECK(mentions[2].entity_type == EntityType::treatment);
}

TEST_CASE("extract_entities: longest match wins over sub-phrase") {
    auto mentions = extract_entities(passage_of("the distal radius was involved"), basic_lexicon());
    REQUIRE(mentions.size() == 1);
    CHECK(mentions[0].canonical_name == "distal radius"); // not bare "radius"
}

TEST_CASE("extract_entities: no lexicon terms, empty lexicon") {
    CHECK(extract_entities(passage_of("completely unrelated words"), basic_lexicon()).empty());
    Lexicon empty;
    CHECK_THROWS_AS(extract_entities(passage_of("anything"), empty), ValidationError);
}

TEST_CASE("extract_relations: connective rule table hand-applied") {
    // "fracture treated with cast": co_occurs plus treats via the connective.
    auto p = passage_of("a fracture treated with a cast and swelling");
    auto mentions = extract_entities(p, basic_lexicon());
    REQUIRE(mentions.size() == 3); // fracture, cast, swelling
    auto rels = extract_relations(p, mentions, 8, basic_lexicon());

    bool saw_treats = false, saw_co = false;
    for (const auto& r : rels) {
        if (r.rel_type == rel::treats) {
            saw_treats = true;
            CHECK(r.src_name == "fracture");
            CHECK(r.dst_name == "cast");
        }
        if (r.rel_type == rel::co_occurs && r.src_name == "fracture" && r.dst_name == "cast")
            saw_co = true;
        CHECK(r.passage_id == "p#0");
    }
    CHECK(saw_treats);
    CHECK(saw_co);
}

TEST_CASE("extract_relations: window and arity edge cases") {
    // 50 tokens apart -> no relation
    std::string far = "fracture";
    for (int i = 0; i < 50; ++i) far += " filler" + std::to_string(i);
    far += " cast";
    auto p = passage_of(far);
    auto mentions = extract_entities(p, basic_lexicon());
    REQUIRE(mentions.size() == 2);
    CHECK(extract_relations(p, mentions, 8, basic_lexicon()).empty());

    // single mention -> no relations
    auto single = passage_of("just a fracture here");
    CHECK(extract_relations(single, extract_entities(single, basic_lexicon()), 8, basic_lexicon())
              .empty());
}

TEST_CASE("extract_relations: typed relation needs a hint on an endpoint") {
    Lexicon no_hints;
    no_hints.entries = {lex("fracture", "fracture", EntityType::condition),
                        lex("cast", "cast", EntityType::treatment)}; // no rel_hints
    auto p = passage_of("fracture treated with cast");
    auto mentions = extract_entities(p, no_hints);
    auto rels = extract_relations(p, mentions, 8, no_hints);
    for (const auto& r : rels) CHECK(r.rel_type == rel::co_occurs);
}

TEST_CASE("build_graph: aggregation, ids, determinism") {
    std::vector<Document> docs = {
        make_doc("d1", "fracture treated with cast"),
        make_doc("d2", "the fracture needs a cast"),
        make_doc("d3", "fracture then cast again"),
    };
    CorpusStore store = build_store(docs, 256, 32);
    KnowledgeGraph g = build_graph(store, basic_lexicon(), 12);

    REQUIRE(g.entities.size() == 2);
    CHECK(g.entities[0].canonical_name == "fracture"); // first appearance order
    CHECK(g.entities[1].canonical_name == "cast");
    CHECK(g.entities[0].entity_id == 0);

    // same pair in 3 passages -> one co_occurs relation, weight 3
    int co_count = 0;
    for (const auto& r : g.relations) {
        if (r.rel_type == rel::co_occurs) {
            ++co_count;
            CHECK(r.weight == doctest::Approx(3.0));
            CHECK(r.evidence.size() == 3);
            CHECK(r.src < r.dst); // canonicalized
        }
        if (r.rel_type == rel::treats) CHECK(r.evidence == std::vector<std::string>{"d1#0"});
    }
    CHECK(co_count == 1);

    // byte-identical persisted graph across rebuilds
    auto dir = testutil::scratch_dir("graph_det");
    save_graph(g, dir / "g1.json");
    save_graph(build_graph(store, basic_lexicon(), 12), dir / "g2.json");
    CHECK(testutil::read_file(dir / "g1.json") == testutil::read_file(dir / "g2.json"));
}

TEST_CASE("build_graph: empty corpus and empty lexicon") {
    CorpusStore empty_store = build_store({}, 256, 32);
    KnowledgeGraph g = build_graph(empty_store, basic_lexicon(), 12);
    CHECK(g.entities.empty());
    CHECK(g.relations.empty());
    CHECK(g.communities.empty());

    Lexicon empty;
    CHECK_THROWS_AS(build_graph(empty_store, empty, 12), ValidationError);
    CHECK_THROWS_AS(build_graph(empty_store, basic_lexicon(), 0), ValidationError);
}

TEST_CASE("detect_communities: disconnected triangles") {
    KnowledgeGraph g;
    for (int i = 0; i < 6; ++i)
        g.entities.push_back({i, "e" + std::to_string(i), EntityType::other, {}});
    auto edge = [](int a, int b) {
        return Relation{a, b, rel::co_occurs, 1.0, {"p#0"}};
    };
    g.relations = {edge(0, 1), edge(1, 2), edge(0, 2), edge(3, 4), edge(4, 5), edge(3, 5)};
    auto comm = detect_communities(g);
    REQUIRE(comm.size() == 6);
    CHECK(comm[0] == comm[1]);
    CHECK(comm[1] == comm[2]);
    CHECK(comm[3] == comm[4]);
    CHECK(comm[4] == comm[5]);
    CHECK(comm[0] != comm[3]);
    CHECK(comm[0] == 0); // dense relabel by smallest member
    CHECK(comm[3] == 1);
}

TEST_CASE("detect_communities: single node owns its community") {
    KnowledgeGraph g;
    g.entities.push_back({0, "solo", EntityType::other, {}});
    auto comm = detect_communities(g);
    REQUIRE(comm.size() == 1);
    CHECK(comm[0] == 0);
}

TEST_CASE("detect_communities: weighted path, hand-run schedule") {
    // a-b weight 5, b-c weight 1. Hand-running the ascending in-place
    // schedule: a adopts b's label (its only neighbor), b keeps the label
    // carried by the a-edge (5 > 1), c adopts b's label. Fixpoint after one
    // more sweep: one community holding all three, so b sits with a.
    KnowledgeGraph g;
    for (int i = 0; i < 3; ++i)
        g.entities.push_back({i, std::string(1, static_cast<char>('a' + i)), EntityType::other, {}});
    g.relations = {{0, 1, rel::co_occurs, 5.0, {"p#0"}}, {1, 2, rel::co_occurs, 1.0, {"p#1"}}};
    auto comm = detect_communities(g);
    REQUIRE(comm.size() == 3);
    CHECK(comm[0] == comm[1]); // b ends up with a
    CHECK(comm[0] == comm[2]);
    CHECK(comm[0] == 0);
}

TEST_CASE("community partition property: no community spans components") {
    SplitMix64 gen(23);
    for (int trial = 0; trial < 25; ++trial) {
        const int n = 2 + static_cast<int>(gen.next_below(12));
        KnowledgeGraph g;
        for (int i = 0; i < n; ++i)
            g.entities.push_back({i, "e" + std::to_string(i), EntityType::other, {}});
        const int edges = static_cast<int>(gen.next_below(static_cast<std::uint64_t>(2 * n)));
        std::set<std::pair<int, int>> used;
        for (int e = 0; e < edges; ++e) {
            int a = static_cast<int>(gen.next_below(static_cast<std::uint64_t>(n)));
            int b = static_cast<int>(gen.next_below(static_cast<std::uint64_t>(n)));
            if (a == b) continue;
            if (a > b) std::swap(a, b);
            if (!used.insert({a, b}).second) continue;
            g.relations.push_back(
                {a, b, rel::co_occurs, 1.0 + static_cast<double>(gen.next_below(5)), {"p#0"}});
        }
        auto comm = detect_communities(g);
        REQUIRE(comm.size() == static_cast<std::size_t>(n));

        // union-find over the edges for ground-truth components
        std::vector<int> parent(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) parent[static_cast<std::size_t>(i)] = i;
        std::function<int(int)> find = [&](int x) {
            while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)];
            return x;
        };
        for (const auto& r : g.relations) parent[static_cast<std::size_t>(find(r.src))] = find(r.dst);

        // same community -> same component
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (comm[static_cast<std::size_t>(i)] == comm[static_cast<std::size_t>(j)])
                    CHECK(find(i) == find(j));
        // every entity has exactly one community id in range
        for (int c : comm) CHECK((c >= 0 && c < n));
    }
}

TEST_CASE("provenance soundness: evidence replay finds both endpoints in window") {
    std::vector<Document> docs = {
        make_doc("d1", "fracture treated with cast and mild swelling near the distal radius"),
        make_doc("d2", "swelling around the cast suggests review of the fracture"),
    };
    const int window = 12;
    CorpusStore store = build_store(docs, 256, 32);
    KnowledgeGraph g = build_graph(store, basic_lexicon(), window);
    REQUIRE(!g.relations.empty());

    std::map<std::string, const Passage*> by_id;
    for (const auto& p : store.passages) by_id[p.passage_id] = &p;

    for (const auto& r : g.relations) {
        for (const auto& pid : r.evidence) {
            REQUIRE(by_id.count(pid));
            auto mentions = extract_entities(*by_id.at(pid), basic_lexicon());
            const std::string& src_name =
                g.entities[static_cast<std::size_t>(r.src)].canonical_name;
            const std::string& dst_name =
                g.entities[static_cast<std::size_t>(r.dst)].canonical_name;
            bool found = false;
            for (const auto& a : mentions)
                for (const auto& b : mentions) {
                    if (a.canonical_name != src_name || b.canonical_name != dst_name) continue;
                    if (std::abs(a.token_begin - b.token_begin) <= window) found = true;
                }
            CHECK(found);
        }
    }
}

TEST_CASE("save/load graph: round trip, validation, fingerprint warning") {
    std::vector<Document> docs = {make_doc("d1", "fracture treated with cast")};
    CorpusStore store = build_store(docs, 256, 32);
    KnowledgeGraph g = build_graph(store, basic_lexicon(), 12);
    auto dir = testutil::scratch_dir("graph_io");
    save_graph(g, dir / "g.json");

    GraphLoad loaded = load_graph(dir / "g.json", store.fingerprint);
    CHECK(loaded.warnings.empty());
    CHECK(loaded.graph.built_from == g.built_from);
    REQUIRE(loaded.graph.entities.size() == g.entities.size());
    REQUIRE(loaded.graph.relations.size() == g.relations.size());
    for (std::size_t i = 0; i < g.entities.size(); ++i) {
        CHECK(loaded.graph.entities[i].canonical_name == g.entities[i].canonical_name);
        CHECK(loaded.graph.entities[i].aliases == g.entities[i].aliases);
    }
    CHECK(loaded.graph.communities == g.communities);

    // fingerprint mismatch surfaces a warning, not an error
    GraphLoad mismatched = load_graph(dir / "g.json", store.fingerprint + 1);
    REQUIRE(mismatched.warnings.size() == 1);
    CHECK(mismatched.warnings[0].find("fingerprint") != std::string::npos);

    // dangling endpoint is rejected
    std::string body = testutil::read_file(dir / "g.json");
    auto pos = body.find("\"src\"");
    REQUIRE(pos != std::string::npos);
    std::string broken = body;
    broken.replace(pos, 8, "\"src\": 999");
    testutil::write_file(dir / "broken.json", broken);
    CHECK_THROWS_AS(load_graph(dir / "broken.json"), ValidationError);

    // schema version mismatch is rejected
    std::string wrong_version = body;
    auto vpos = wrong_version.find("\"schema_version\": 1");
    REQUIRE(vpos != std::string::npos);
    wrong_version.replace(vpos, 19, "\"schema_version\": 9");
    testutil::write_file(dir / "v9.json", wrong_version);
    CHECK_THROWS_AS(load_graph(dir / "v9.json"), ValidationError);
}

TEST_CASE("co_occurs symmetry: undirected weight is the same from both ends") {
    std::vector<Document> docs = {make_doc("d1", "fracture with cast"),
                                  make_doc("d2", "cast before fracture")};
    CorpusStore store = build_store(docs, 256, 32);
    KnowledgeGraph g = build_graph(store, basic_lexicon(), 12);
    // both orders in text, one canonical stored relation carrying both passages
    int count = 0;
    for (const auto& r : g.relations)
        if (r.rel_type == rel::co_occurs) {
            ++count;
            CHECK(r.weight == doctest::Approx(2.0));
        }
    CHECK(count == 1);
}
