#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "orthodoc/corpus.hpp"
#include "orthodoc/kgraph.hpp"

namespace orthodoc {

struct InvertedIndex {
    // term -> (passage_id, term frequency), in corpus order; content tokens only
    std::map<std::string, std::vector<std::pair<std::string, int>>> postings;
    std::map<std::string, int> doc_lengths; // passage_id -> token_count
    double avg_doc_len = 0.0;
    int passage_count = 0;
    std::uint64_t fingerprint = 0;
};

struct Query {
    std::string text;
    std::vector<int> entity_hints;
    int k = 5;
    int expansion_depth = 0;
};

struct ScoredPassage {
    std::string passage_id;
    double score = 0.0;
    std::vector<std::string> matched_terms; // sorted
    std::vector<int> via_entities;          // expansion entities that matched, sorted
};

struct RetrievalResult {
    Query query;
    std::vector<ScoredPassage> ranked; // score desc, passage_id asc on ties
    std::set<int> subgraph_entities;
    std::vector<Relation> subgraph_relations;
    // Coarse count of knowledge-graph consultations made while serving this
    // query. The no-RAG ablation asserts this stays 0.
    int graph_reads = 0;
};

InvertedIndex build_index(const CorpusStore& store);

void save_index(const InvertedIndex& index, const std::filesystem::path& path);
InvertedIndex load_index(const std::filesystem::path& path);

// Okapi BM25: sum over distinct query terms of
//   idf(t) * tf*(k1+1) / (tf + k1*(1 - b + b*len/avglen)),
//   idf(t) = ln((N - df + 0.5)/(df + 0.5) + 1).
double bm25_score(const std::vector<std::string>& query_terms, const std::string& passage_id,
                  const InvertedIndex& index, double k1, double b);

// Breadth-first over relations up to `depth` hops, capped at 32 admitted
// entities (seeds excluded from the cap), higher-weight edges first with
// entity_id as tie-break, restricted to the seeds' communities.
std::set<int> expand_with_graph(const std::set<int>& seeds, const KnowledgeGraph& graph, int depth);

// Expansion term weighting in retrieve(): 0.5 per hop, i.e. a term from an
// entity admitted at hop h scores with weight 0.5^h. Duplicate terms keep
// their maximum weight.
inline constexpr double kHopDiscount = 0.5;
inline constexpr int kExpansionCap = 32;

RetrievalResult retrieve(const Query& query, const InvertedIndex& index,
                         const KnowledgeGraph& graph, double k1 = 1.2, double b = 0.75);

} // namespace orthodoc
