#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace orthodoc {

struct Document {
    std::string doc_id;
    std::string title;
    std::string source;
    std::string text; // UTF-8, non-empty
};

struct Token {
    std::string surface; // lowercased, NFC-normalized, no whitespace
    bool is_content = true;
};

// Token plus its byte range in the normalized source string.
struct TokenSpan {
    Token token;
    std::size_t begin = 0; // byte offset, inclusive
    std::size_t end = 0;   // byte offset, exclusive
};

struct Passage {
    std::string passage_id; // doc_id + "#" + ordinal
    std::string doc_id;
    int ordinal = 0;
    std::string text;
    int token_count = 0;
};

// Chunked corpus plus the fingerprint that ties graph and index builds to
// this exact store content.
struct CorpusStore {
    std::vector<Document> documents;
    std::vector<Passage> passages;
    int max_chunk_tokens = 256;
    int overlap_tokens = 32;
    std::uint64_t fingerprint = 0;
};

// JSONL, one Document per line. Duplicate doc_id and malformed lines are
// reported with line numbers.
std::vector<Document> load_corpus(const std::filesystem::path& path);

// Lowercases, NFC-normalizes (Latin diacritic subset), splits on Unicode
// whitespace and punctuation. Intra-word hyphens survive ("weight-bearing").
std::vector<Token> tokenize(const std::string& text);
std::vector<TokenSpan> tokenize_with_spans(const std::string& text);

// The normalized string the spans of tokenize_with_spans refer to.
std::string normalize_nfc(const std::string& text);

bool is_stopword(const std::string& surface);

// Sliding token windows. Window start advances by max_chunk_tokens -
// overlap_tokens; the final passage may be shorter.
std::vector<Passage> chunk_document(const Document& doc, int max_chunk_tokens, int overlap_tokens);

// Hash over (doc_id, text) pairs plus the chunking parameters.
std::uint64_t corpus_fingerprint(const std::vector<Document>& docs, int max_chunk_tokens,
                                 int overlap_tokens);

CorpusStore build_store(std::vector<Document> docs, int max_chunk_tokens, int overlap_tokens);

void save_store(const CorpusStore& store, const std::filesystem::path& dir);
CorpusStore load_store(const std::filesystem::path& dir);

// Content-token surfaces of a text, as a sorted unique list. Grounding
// overlap and the report-quality metrics all score against this set.
std::vector<std::string> content_token_set(const std::string& text);

} // namespace orthodoc
