#include "orthodoc/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "orthodoc/errors.hpp"
#include "orthodoc/rand.hpp"
#include "orthodoc/version.hpp"

using json = nlohmann::json;

namespace orthodoc {

InvertedIndex build_index(const CorpusStore& store) {
    InvertedIndex idx;
    idx.fingerprint = store.fingerprint;
    idx.passage_count = static_cast<int>(store.passages.size());
    double total_len = 0.0;
    for (const auto& p : store.passages) {
        idx.doc_lengths[p.passage_id] = p.token_count;
        total_len += p.token_count;
        std::map<std::string, int> tf;
        for (const auto& t : tokenize(p.text))
            if (t.is_content) ++tf[t.surface];
        for (const auto& [term, count] : tf) idx.postings[term].push_back({p.passage_id, count});
    }
    idx.avg_doc_len = idx.passage_count > 0 ? total_len / idx.passage_count : 0.0;
    return idx;
}

namespace {

double idf(const InvertedIndex& index, std::size_t df) {
    const double n = static_cast<double>(index.passage_count);
    const double d = static_cast<double>(df);
    return std::log((n - d + 0.5) / (d + 0.5) + 1.0);
}

double tf_part(double tf, double len, double avg_len, double k1, double b) {
    const double norm = 1.0 - b + b * (avg_len > 0.0 ? len / avg_len : 0.0);
    return tf * (k1 + 1.0) / (tf + k1 * norm);
}

std::vector<std::string> distinct_terms(const std::vector<std::string>& terms) {
    std::vector<std::string> out = terms;
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

} // namespace

double bm25_score(const std::vector<std::string>& query_terms, const std::string& passage_id,
                  const InvertedIndex& index, double k1, double b) {
    if (k1 <= 0.0 || b < 0.0 || b > 1.0)
        throw ValidationError("bm25 requires k1 > 0 and b in [0,1]");
    auto len_it = index.doc_lengths.find(passage_id);
    if (len_it == index.doc_lengths.end())
        throw ValidationError("bm25_score: unknown passage_id \"" + passage_id + "\"");

    double score = 0.0;
    for (const auto& term : distinct_terms(query_terms)) {
        auto it = index.postings.find(term);
        if (it == index.postings.end()) continue;
        int tf = 0;
        for (const auto& [pid, count] : it->second) {
            if (pid == passage_id) {
                tf = count;
                break;
            }
        }
        if (tf == 0) continue;
        score += idf(index, it->second.size()) *
                 tf_part(tf, len_it->second, index.avg_doc_len, k1, b);
    }
    return score;
}

namespace {

// entity -> hop it was admitted at (seeds are hop 0)
std::map<int, int> expand_with_hops(const std::set<int>& seeds, const KnowledgeGraph& graph,
                                    int depth) {
    const int n = static_cast<int>(graph.entities.size());
    for (int s : seeds)
        if (s < 0 || s >= n)
            throw ValidationError("expand_with_graph: unknown entity " + std::to_string(s));

    std::map<int, int> hop_of;
    std::set<int> allowed_communities;
    for (int s : seeds) {
        hop_of[s] = 0;
        allowed_communities.insert(graph.communities[static_cast<std::size_t>(s)]);
    }

    std::vector<std::vector<std::pair<int, double>>> adj(static_cast<std::size_t>(n));
    for (const auto& r : graph.relations) {
        adj[static_cast<std::size_t>(r.src)].push_back({r.dst, r.weight});
        adj[static_cast<std::size_t>(r.dst)].push_back({r.src, r.weight});
    }

    std::vector<int> frontier(seeds.begin(), seeds.end());
    int admitted = 0;
    for (int hop = 1; hop <= depth && !frontier.empty() && admitted < kExpansionCap; ++hop) {
        std::map<int, double> candidates; // entity -> best edge weight from frontier
        for (int v : frontier) {
            for (const auto& [u, w] : adj[static_cast<std::size_t>(v)]) {
                if (hop_of.count(u)) continue;
                if (!allowed_communities.count(graph.communities[static_cast<std::size_t>(u)]))
                    continue;
                auto it = candidates.find(u);
                if (it == candidates.end() || w > it->second) candidates[u] = w;
            }
        }
        std::vector<std::pair<int, double>> order(candidates.begin(), candidates.end());
        std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        std::vector<int> next;
        for (const auto& [u, w] : order) {
            if (admitted >= kExpansionCap) break;
            hop_of[u] = hop;
            next.push_back(u);
            ++admitted;
        }
        frontier = std::move(next);
    }
    return hop_of;
}

} // namespace

std::set<int> expand_with_graph(const std::set<int>& seeds, const KnowledgeGraph& graph,
                                int depth) {
    std::set<int> out;
    for (const auto& [e, hop] : expand_with_hops(seeds, graph, depth)) out.insert(e);
    return out;
}

RetrievalResult retrieve(const Query& query, const InvertedIndex& index,
                         const KnowledgeGraph& graph, double k1, double b) {
    if (query.k < 1) throw ValidationError("retrieve: k must be >= 1");
    if (query.expansion_depth < 0) throw ValidationError("retrieve: expansion_depth must be >= 0");
    if (k1 <= 0.0 || b < 0.0 || b > 1.0)
        throw ValidationError("retrieve: requires k1 > 0 and b in [0,1]");
    if (index.fingerprint != graph.built_from)
        throw ValidationError("retrieve: index fingerprint " + to_hex(index.fingerprint) +
                              " does not match graph fingerprint " + to_hex(graph.built_from));

    RetrievalResult result;
    result.query = query;

    // term -> weight; query-text terms carry weight 1.
    std::map<std::string, double> term_weight;
    std::set<std::string> base_terms;
    for (const auto& t : content_token_set(query.text)) {
        term_weight[t] = 1.0;
        base_terms.insert(t);
    }

    // term -> expansion entities it came from
    std::map<std::string, std::set<int>> term_sources;
    if (query.expansion_depth > 0 && !graph.entities.empty()) {
        // Spot entities in the query using the graph's own names and aliases.
        Lexicon lex;
        for (const auto& e : graph.entities) {
            lex.entries.push_back({e.canonical_name, e.canonical_name, e.entity_type, {}});
            for (const auto& a : e.aliases)
                lex.entries.push_back({a, e.canonical_name, e.entity_type, {}});
        }
        ++result.graph_reads;
        Passage q;
        q.passage_id = "query";
        q.text = query.text;
        std::set<int> seeds;
        for (const auto& m : extract_entities(q, lex))
            if (auto id = graph.find_entity(m.canonical_name)) seeds.insert(*id);
        for (int h : query.entity_hints) {
            if (h < 0 || h >= static_cast<int>(graph.entities.size()))
                throw ValidationError("retrieve: unknown entity hint " + std::to_string(h));
            seeds.insert(h);
        }

        if (!seeds.empty()) {
            ++result.graph_reads;
            auto hops = expand_with_hops(seeds, graph, query.expansion_depth);
            for (const auto& [eid, hop] : hops) {
                result.subgraph_entities.insert(eid);
                const double w = std::pow(kHopDiscount, hop);
                for (const auto& tok :
                     content_token_set(graph.entities[static_cast<std::size_t>(eid)].canonical_name)) {
                    auto it = term_weight.find(tok);
                    if (it == term_weight.end() || w > it->second) term_weight[tok] = w;
                    if (!base_terms.count(tok)) term_sources[tok].insert(eid);
                }
            }
            ++result.graph_reads;
            for (const auto& r : graph.relations)
                if (result.subgraph_entities.count(r.src) && result.subgraph_entities.count(r.dst))
                    result.subgraph_relations.push_back(r);
        }
    }

    // Weighted BM25 accumulation over all candidate passages.
    struct Acc {
        double score = 0.0;
        std::set<std::string> matched;
        std::set<int> via;
    };
    std::map<std::string, Acc> acc;
    for (const auto& [term, weight] : term_weight) {
        auto it = index.postings.find(term);
        if (it == index.postings.end()) continue;
        const double term_idf = idf(index, it->second.size());
        for (const auto& [pid, tf] : it->second) {
            Acc& a = acc[pid];
            a.score += weight * term_idf *
                       tf_part(tf, index.doc_lengths.at(pid), index.avg_doc_len, k1, b);
            a.matched.insert(term);
            auto src = term_sources.find(term);
            if (src != term_sources.end()) a.via.insert(src->second.begin(), src->second.end());
        }
    }

    for (auto& [pid, a] : acc) {
        if (a.score <= 0.0) continue;
        ScoredPassage sp;
        sp.passage_id = pid;
        sp.score = a.score;
        sp.matched_terms.assign(a.matched.begin(), a.matched.end());
        sp.via_entities.assign(a.via.begin(), a.via.end());
        result.ranked.push_back(std::move(sp));
    }
    std::sort(result.ranked.begin(), result.ranked.end(),
              [](const ScoredPassage& x, const ScoredPassage& y) {
                  if (x.score != y.score) return x.score > y.score;
                  return x.passage_id < y.passage_id;
              });
    if (result.ranked.size() > static_cast<std::size_t>(query.k))
        result.ranked.resize(static_cast<std::size_t>(query.k));
    return result;
}

void save_index(const InvertedIndex& index, const std::filesystem::path& path) {
    json j;
    j["schema_version"] = kIndexSchemaVersion;
    j["fingerprint"] = to_hex(index.fingerprint);
    j["passage_count"] = index.passage_count;
    j["avg_doc_len"] = index.avg_doc_len;
    j["doc_lengths"] = json::array();
    for (const auto& [pid, len] : index.doc_lengths) j["doc_lengths"].push_back({pid, len});
    j["postings"] = json::array();
    for (const auto& [term, list] : index.postings) {
        json entries = json::array();
        for (const auto& [pid, tf] : list) entries.push_back({pid, tf});
        j["postings"].push_back({term, entries});
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write index: " + path.string());
    out << j.dump(2) << "\n";
}

InvertedIndex load_index(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("index file not found: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("index parse error in " + path.string() + ": " + e.what());
    }
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != kIndexSchemaVersion)
        throw ValidationError("index schema version mismatch in " + path.string());
    InvertedIndex idx;
    idx.fingerprint = std::stoull(j.at("fingerprint").get<std::string>(), nullptr, 16);
    idx.passage_count = j.at("passage_count").get<int>();
    idx.avg_doc_len = j.at("avg_doc_len").get<double>();
    for (const auto& e : j.at("doc_lengths"))
        idx.doc_lengths[e.at(0).get<std::string>()] = e.at(1).get<int>();
    for (const auto& e : j.at("postings")) {
        auto& list = idx.postings[e.at(0).get<std::string>()];
        for (const auto& p : e.at(1)) list.push_back({p.at(0).get<std::string>(), p.at(1).get<int>()});
    }
    return idx;
}

} // namespace orthodoc
