#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "orthodoc/corpus.hpp"

namespace orthodoc {

enum class EntityType { condition, anatomy, procedure, symptom, treatment, other };

std::string to_string(EntityType t);
EntityType entity_type_from_string(const std::string& s);

// Well-known relation types. rel_type is an open string so corpora can add
// their own; these four have built-in extraction rules.
namespace rel {
inline constexpr const char* co_occurs = "co_occurs";
inline constexpr const char* treats = "treats";
inline constexpr const char* located_in = "located_in";
inline constexpr const char* indicates = "indicates";
} // namespace rel

struct Entity {
    int entity_id = 0; // dense from 0, first-appearance order
    std::string canonical_name;
    EntityType entity_type = EntityType::other;
    std::vector<std::string> aliases; // patterns that map to this entity
};

struct Relation {
    int src = 0;
    int dst = 0;
    std::string rel_type;
    double weight = 0.0;               // count of distinct evidence passages
    std::vector<std::string> evidence; // passage_ids, sorted, non-empty
};

struct LexiconEntry {
    std::string pattern; // word or phrase, matched case-insensitively
    std::string canonical_name;
    EntityType entity_type = EntityType::other;
    std::vector<std::string> rel_hints; // relation types this entity can join
};

struct Lexicon {
    std::vector<LexiconEntry> entries;
};

Lexicon load_lexicon(const std::filesystem::path& path);

struct EntityMention {
    std::string canonical_name;
    EntityType entity_type = EntityType::other;
    int token_begin = 0; // index into the passage token sequence
    int token_end = 0;   // exclusive
};

// Relation at extraction level, before graph ids exist.
struct RelationDraft {
    std::string src_name;
    std::string dst_name;
    std::string rel_type;
    std::string passage_id;
};

struct KnowledgeGraph {
    std::vector<Entity> entities;
    std::vector<Relation> relations;
    std::vector<int> communities; // indexed by entity_id, dense ids from 0
    std::uint64_t built_from = 0; // corpus fingerprint

    std::optional<int> find_entity(const std::string& canonical_name) const;

    // A graph with no knowledge but a valid fingerprint; the no-RAG
    // ablation retrieves against this.
    static KnowledgeGraph empty_with_fingerprint(std::uint64_t fp);
};

// Longest-match-wins, left-to-right, case-insensitive phrase matching over
// the passage token sequence. Mentions never overlap.
std::vector<EntityMention> extract_entities(const Passage& passage, const Lexicon& lexicon);

// co_occurs for every mention pair whose token starts are within
// window_tokens; typed relations when a connective phrase appears between
// the pair and either endpoint's lexicon entry hints that relation type.
std::vector<RelationDraft> extract_relations(const Passage& passage,
                                             const std::vector<EntityMention>& mentions,
                                             int window_tokens, const Lexicon& lexicon);

KnowledgeGraph build_graph(const CorpusStore& store, const Lexicon& lexicon, int window_tokens);

// Sequential label propagation with a fixed ascending-id schedule: adopt the
// neighbor label with the greatest total edge weight, ties to the smallest
// label, until a full sweep changes nothing (or 100 sweeps). Community ids
// are then relabeled densely, ordered by smallest member entity_id.
std::vector<int> detect_communities(const KnowledgeGraph& graph);

struct GraphLoad {
    KnowledgeGraph graph;
    std::vector<std::string> warnings;
};

void save_graph(const KnowledgeGraph& graph, const std::filesystem::path& path);
GraphLoad load_graph(const std::filesystem::path& path,
                     std::optional<std::uint64_t> expect_fingerprint = std::nullopt);

} // namespace orthodoc
