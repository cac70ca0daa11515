#include "orthodoc/kgraph.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "orthodoc/errors.hpp"
#include "orthodoc/rand.hpp"
#include "orthodoc/version.hpp"

using json = nlohmann::json;

namespace orthodoc {

std::string to_string(EntityType t) {
    switch (t) {
    case EntityType::condition: return "condition";
    case EntityType::anatomy: return "anatomy";
    case EntityType::procedure: return "procedure";
    case EntityType::symptom: return "symptom";
    case EntityType::treatment: return "treatment";
    case EntityType::other: return "other";
    }
    return "other";
}

EntityType entity_type_from_string(const std::string& s) {
    if (s == "condition") return EntityType::condition;
    if (s == "anatomy") return EntityType::anatomy;
    if (s == "procedure") return EntityType::procedure;
    if (s == "symptom") return EntityType::symptom;
    if (s == "treatment") return EntityType::treatment;
    if (s == "other") return EntityType::other;
    throw ValidationError("unknown entity type: \"" + s + "\"");
}

std::optional<int> KnowledgeGraph::find_entity(const std::string& canonical_name) const {
    for (const auto& e : entities)
        if (e.canonical_name == canonical_name) return e.entity_id;
    return std::nullopt;
}

KnowledgeGraph KnowledgeGraph::empty_with_fingerprint(std::uint64_t fp) {
    KnowledgeGraph g;
    g.built_from = fp;
    return g;
}

Lexicon load_lexicon(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("lexicon file not found: " + path.string());
    Lexicon lex;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError("lexicon line " + std::to_string(lineno) +
                                  ": malformed JSON: " + e.what());
        }
        LexiconEntry e;
        e.pattern = j.at("pattern").get<std::string>();
        e.canonical_name = j.at("canonical").get<std::string>();
        e.entity_type = entity_type_from_string(j.at("type").get<std::string>());
        if (j.contains("rel_hints"))
            for (const auto& h : j["rel_hints"]) e.rel_hints.push_back(h.get<std::string>());
        if (e.pattern.empty() || e.canonical_name.empty())
            throw ValidationError("lexicon line " + std::to_string(lineno) +
                                  ": empty pattern or canonical name");
        lex.entries.push_back(std::move(e));
    }
    return lex;
}

namespace {

std::vector<std::string> pattern_tokens(const std::string& pattern) {
    std::vector<std::string> out;
    for (auto& t : tokenize(pattern)) out.push_back(std::move(t.surface));
    return out;
}

struct CompiledLexicon {
    struct Pattern {
        std::vector<std::string> tokens;
        std::string canonical;
        EntityType type;
    };
    // keyed by first token; longest patterns first
    std::unordered_map<std::string, std::vector<Pattern>> by_first;
    std::unordered_map<std::string, EntityType> type_of;
    std::unordered_map<std::string, std::set<std::string>> hints_of;
    std::unordered_map<std::string, std::vector<std::string>> aliases_of; // in lexicon order
};

CompiledLexicon compile(const Lexicon& lex) {
    CompiledLexicon c;
    std::map<std::vector<std::string>, std::string> canonical_of_pattern;
    for (const auto& e : lex.entries) {
        auto toks = pattern_tokens(e.pattern);
        if (toks.empty())
            throw ValidationError("lexicon pattern tokenizes to nothing: \"" + e.pattern + "\"");
        auto it = canonical_of_pattern.find(toks);
        if (it != canonical_of_pattern.end() && it->second != e.canonical_name)
            throw ValidationError("lexicon pattern \"" + e.pattern +
                                  "\" maps to two canonical names: \"" + it->second + "\" and \"" +
                                  e.canonical_name + "\"");
        auto type_it = c.type_of.find(e.canonical_name);
        if (type_it != c.type_of.end() && type_it->second != e.entity_type)
            throw ValidationError("lexicon canonical \"" + e.canonical_name +
                                  "\" declared with two entity types");
        c.type_of[e.canonical_name] = e.entity_type;
        for (const auto& h : e.rel_hints) c.hints_of[e.canonical_name].insert(h);
        if (it == canonical_of_pattern.end()) {
            canonical_of_pattern.emplace(toks, e.canonical_name);
            c.by_first[toks.front()].push_back({toks, e.canonical_name, e.entity_type});
            c.aliases_of[e.canonical_name].push_back(e.pattern);
        }
    }
    for (auto& [first, pats] : c.by_first)
        std::stable_sort(pats.begin(), pats.end(),
                         [](const auto& a, const auto& b) { return a.tokens.size() > b.tokens.size(); });
    return c;
}

} // namespace

std::vector<EntityMention> extract_entities(const Passage& passage, const Lexicon& lexicon) {
    if (lexicon.entries.empty()) throw ValidationError("extract_entities: empty lexicon");
    CompiledLexicon c = compile(lexicon);

    std::vector<std::string> surfaces;
    for (auto& t : tokenize(passage.text)) surfaces.push_back(std::move(t.surface));

    std::vector<EntityMention> out;
    std::size_t i = 0;
    while (i < surfaces.size()) {
        auto it = c.by_first.find(surfaces[i]);
        bool matched = false;
        if (it != c.by_first.end()) {
            for (const auto& pat : it->second) { // longest first
                if (i + pat.tokens.size() > surfaces.size()) continue;
                if (std::equal(pat.tokens.begin(), pat.tokens.end(), surfaces.begin() + i)) {
                    EntityMention m;
                    m.canonical_name = pat.canonical;
                    m.entity_type = pat.type;
                    m.token_begin = static_cast<int>(i);
                    m.token_end = static_cast<int>(i + pat.tokens.size());
                    out.push_back(std::move(m));
                    i += pat.tokens.size();
                    matched = true;
                    break;
                }
            }
        }
        if (!matched) ++i;
    }
    return out;
}

namespace {

struct Connective {
    std::vector<std::string> tokens;
    const char* rel_type;
};

const std::vector<Connective>& connectives() {
    static const std::vector<Connective> rules = {
        {{"treated", "with"}, rel::treats},
        {{"indicates"}, rel::indicates},
        {{"indicate"}, rel::indicates},
        {{"of", "the"}, rel::located_in},
    };
    return rules;
}

bool contains_seq(const std::vector<std::string>& haystack, std::size_t begin, std::size_t end,
                  const std::vector<std::string>& needle) {
    if (needle.empty() || end < begin + needle.size()) return false;
    for (std::size_t i = begin; i + needle.size() <= end; ++i)
        if (std::equal(needle.begin(), needle.end(), haystack.begin() + i)) return true;
    return false;
}

} // namespace

std::vector<RelationDraft> extract_relations(const Passage& passage,
                                             const std::vector<EntityMention>& mentions,
                                             int window_tokens, const Lexicon& lexicon) {
    CompiledLexicon c = compile(lexicon);
    std::vector<std::string> surfaces;
    for (auto& t : tokenize(passage.text)) surfaces.push_back(std::move(t.surface));

    std::vector<RelationDraft> out;
    for (std::size_t i = 0; i < mentions.size(); ++i) {
        for (std::size_t j = i + 1; j < mentions.size(); ++j) {
            const auto& a = mentions[i];
            const auto& b = mentions[j];
            if (a.canonical_name == b.canonical_name) continue;
            if (b.token_begin - a.token_begin > window_tokens) break; // mentions are ordered
            out.push_back({a.canonical_name, b.canonical_name, rel::co_occurs, passage.passage_id});

            const auto gb = static_cast<std::size_t>(a.token_end);
            const auto ge = static_cast<std::size_t>(b.token_begin);
            for (const auto& conn : connectives()) {
                if (!contains_seq(surfaces, gb, ge, conn.tokens)) continue;
                const auto& ha = c.hints_of[a.canonical_name];
                const auto& hb = c.hints_of[b.canonical_name];
                if (ha.count(conn.rel_type) || hb.count(conn.rel_type))
                    out.push_back({a.canonical_name, b.canonical_name, conn.rel_type,
                                   passage.passage_id});
            }
        }
    }
    return out;
}

KnowledgeGraph build_graph(const CorpusStore& store, const Lexicon& lexicon, int window_tokens) {
    if (lexicon.entries.empty()) throw ValidationError("build_graph: empty lexicon");
    if (window_tokens < 1) throw ValidationError("build_graph: window_tokens must be >= 1");
    CompiledLexicon c = compile(lexicon);

    KnowledgeGraph g;
    g.built_from = store.fingerprint;

    std::unordered_map<std::string, int> id_of;
    auto intern = [&](const std::string& canonical) {
        auto it = id_of.find(canonical);
        if (it != id_of.end()) return it->second;
        Entity e;
        e.entity_id = static_cast<int>(g.entities.size());
        e.canonical_name = canonical;
        e.entity_type = c.type_of.at(canonical);
        e.aliases = c.aliases_of.at(canonical);
        g.entities.push_back(std::move(e));
        id_of.emplace(canonical, g.entities.back().entity_id);
        return g.entities.back().entity_id;
    };

    // (src, dst, type) -> distinct evidence passages
    std::map<std::tuple<int, int, std::string>, std::set<std::string>> agg;
    for (const auto& p : store.passages) {
        auto mentions = extract_entities(p, lexicon);
        for (const auto& m : mentions) intern(m.canonical_name);
        for (const auto& r : extract_relations(p, mentions, window_tokens, lexicon)) {
            int s = id_of.at(r.src_name);
            int d = id_of.at(r.dst_name);
            if (r.rel_type == rel::co_occurs && s > d) std::swap(s, d); // undirected
            agg[{s, d, r.rel_type}].insert(r.passage_id);
        }
    }

    for (const auto& [key, evidence] : agg) {
        Relation r;
        r.src = std::get<0>(key);
        r.dst = std::get<1>(key);
        r.rel_type = std::get<2>(key);
        r.evidence.assign(evidence.begin(), evidence.end());
        r.weight = static_cast<double>(r.evidence.size());
        g.relations.push_back(std::move(r));
    }
    std::sort(g.relations.begin(), g.relations.end(), [](const Relation& a, const Relation& b) {
        return std::tie(a.src, a.dst, a.rel_type) < std::tie(b.src, b.dst, b.rel_type);
    });

    g.communities = detect_communities(g);
    return g;
}

std::vector<int> detect_communities(const KnowledgeGraph& graph) {
    const int n = static_cast<int>(graph.entities.size());
    std::vector<std::vector<std::pair<int, double>>> adj(static_cast<std::size_t>(n));
    for (const auto& r : graph.relations) {
        if (r.src < 0 || r.src >= n || r.dst < 0 || r.dst >= n)
            throw ValidationError("detect_communities: relation endpoint out of range");
        adj[static_cast<std::size_t>(r.src)].push_back({r.dst, r.weight});
        adj[static_cast<std::size_t>(r.dst)].push_back({r.src, r.weight});
    }

    std::vector<int> label(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) label[static_cast<std::size_t>(i)] = i;

    for (int sweep = 0; sweep < 100; ++sweep) {
        bool changed = false;
        for (int v = 0; v < n; ++v) {
            const auto& edges = adj[static_cast<std::size_t>(v)];
            if (edges.empty()) continue;
            std::map<int, double> tally;
            for (const auto& [u, w] : edges) tally[label[static_cast<std::size_t>(u)]] += w;
            int best = -1;
            double best_w = -1.0;
            for (const auto& [lab, w] : tally) { // ascending label: first max wins ties
                if (w > best_w) {
                    best_w = w;
                    best = lab;
                }
            }
            if (best != label[static_cast<std::size_t>(v)]) {
                label[static_cast<std::size_t>(v)] = best;
                changed = true;
            }
        }
        if (!changed) break;
    }

    // dense relabel, ordered by smallest member entity_id
    std::map<int, int> dense;
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        int lab = label[static_cast<std::size_t>(i)];
        auto it = dense.find(lab);
        if (it == dense.end()) it = dense.emplace(lab, static_cast<int>(dense.size())).first;
        out[static_cast<std::size_t>(i)] = it->second;
    }
    return out;
}

namespace {

void validate_graph(const KnowledgeGraph& g) {
    const int n = static_cast<int>(g.entities.size());
    std::set<std::string> names;
    for (int i = 0; i < n; ++i) {
        const auto& e = g.entities[static_cast<std::size_t>(i)];
        if (e.entity_id != i)
            throw ValidationError("graph entity ids not dense from 0 (entity " +
                                  std::to_string(i) + " has id " + std::to_string(e.entity_id) + ")");
        if (!names.insert(e.canonical_name).second)
            throw ValidationError("graph canonical name duplicated: \"" + e.canonical_name + "\"");
    }
    for (const auto& r : g.relations) {
        if (r.src < 0 || r.src >= n || r.dst < 0 || r.dst >= n)
            throw ValidationError("graph relation endpoint " +
                                  std::to_string(r.src < 0 || r.src >= n ? r.src : r.dst) +
                                  " does not name an entity");
        if (r.src == r.dst) throw ValidationError("graph relation is a self-loop");
        if (r.weight <= 0.0) throw ValidationError("graph relation weight must be > 0");
        if (r.evidence.empty()) throw ValidationError("graph relation has no evidence");
    }
    if (g.communities.size() != g.entities.size())
        throw ValidationError("graph communities must cover every entity");
}

} // namespace

void save_graph(const KnowledgeGraph& graph, const std::filesystem::path& path) {
    validate_graph(graph);
    json j;
    j["schema_version"] = kGraphSchemaVersion;
    j["fingerprint"] = to_hex(graph.built_from);
    j["entities"] = json::array();
    for (const auto& e : graph.entities)
        j["entities"].push_back({{"id", e.entity_id},
                                 {"name", e.canonical_name},
                                 {"type", to_string(e.entity_type)},
                                 {"aliases", e.aliases}});
    j["relations"] = json::array();
    for (const auto& r : graph.relations)
        j["relations"].push_back({{"src", r.src},
                                  {"dst", r.dst},
                                  {"type", r.rel_type},
                                  {"weight", r.weight},
                                  {"evidence", r.evidence}});
    j["communities"] = graph.communities;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write graph: " + path.string());
    out << j.dump(2) << "\n";
}

GraphLoad load_graph(const std::filesystem::path& path,
                     std::optional<std::uint64_t> expect_fingerprint) {
    std::ifstream in(path);
    if (!in) throw ValidationError("graph file not found: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("graph parse error in " + path.string() + ": " + e.what());
    }
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != kGraphSchemaVersion)
        throw ValidationError("graph schema version mismatch in " + path.string());

    GraphLoad result;
    KnowledgeGraph& g = result.graph;
    g.built_from = std::stoull(j.at("fingerprint").get<std::string>(), nullptr, 16);
    for (const auto& e : j.at("entities")) {
        Entity ent;
        ent.entity_id = e.at("id").get<int>();
        ent.canonical_name = e.at("name").get<std::string>();
        ent.entity_type = entity_type_from_string(e.at("type").get<std::string>());
        for (const auto& a : e.at("aliases")) ent.aliases.push_back(a.get<std::string>());
        g.entities.push_back(std::move(ent));
    }
    for (const auto& r : j.at("relations")) {
        Relation rel;
        rel.src = r.at("src").get<int>();
        rel.dst = r.at("dst").get<int>();
        rel.rel_type = r.at("type").get<std::string>();
        rel.weight = r.at("weight").get<double>();
        for (const auto& ev : r.at("evidence")) rel.evidence.push_back(ev.get<std::string>());
        g.relations.push_back(std::move(rel));
    }
    g.communities = j.at("communities").get<std::vector<int>>();
    validate_graph(g);

    if (expect_fingerprint && *expect_fingerprint != g.built_from)
        result.warnings.push_back("graph fingerprint " + to_hex(g.built_from) +
                                  " does not match current store fingerprint " +
                                  to_hex(*expect_fingerprint));
    return result;
}

} // namespace orthodoc
