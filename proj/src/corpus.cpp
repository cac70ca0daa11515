#include "orthodoc/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "orthodoc/errors.hpp"
#include "orthodoc/rand.hpp"
#include "orthodoc/version.hpp"

using json = nlohmann::json;

namespace orthodoc {
namespace {

// ---------------------------------------------------------------------------
// UTF-8 / normalization
// ---------------------------------------------------------------------------

struct Cp {
    char32_t value = 0;
    std::size_t begin = 0; // byte offset
    std::size_t size = 0;  // bytes consumed
};

std::vector<Cp> decode_utf8(const std::string& s) {
    std::vector<Cp> out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        unsigned char b0 = static_cast<unsigned char>(s[i]);
        char32_t cp = 0;
        std::size_t len = 1;
        if (b0 < 0x80) {
            cp = b0;
        } else if ((b0 >> 5) == 0x6 && i + 1 < s.size()) {
            cp = static_cast<char32_t>((b0 & 0x1f) << 6 | (s[i + 1] & 0x3f));
            len = 2;
        } else if ((b0 >> 4) == 0xe && i + 2 < s.size()) {
            cp = static_cast<char32_t>((b0 & 0x0f) << 12 | (s[i + 1] & 0x3f) << 6 | (s[i + 2] & 0x3f));
            len = 3;
        } else if ((b0 >> 3) == 0x1e && i + 3 < s.size()) {
            cp = static_cast<char32_t>((b0 & 0x07) << 18 | (s[i + 1] & 0x3f) << 12 |
                                       (s[i + 2] & 0x3f) << 6 | (s[i + 3] & 0x3f));
            len = 4;
        } else {
            cp = 0xfffd; // stray byte, keep going
        }
        out.push_back({cp, i, len});
        i += len;
    }
    return out;
}

void encode_utf8(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    } else {
        out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    }
}

// NFC composition for the Latin diacritics that show up in medical eponyms.
// Full NFC needs the Unicode database; this subset keeps the common composed
// and decomposed spellings identical after normalization.
char32_t compose_pair(char32_t base, char32_t mark) {
    struct Entry {
        char32_t base, mark, composed;
    };
    static const Entry table[] = {
        {'A', 0x300, 0xC0}, {'E', 0x300, 0xC8}, {'I', 0x300, 0xCC}, {'O', 0x300, 0xD2},
        {'U', 0x300, 0xD9}, {'a', 0x300, 0xE0}, {'e', 0x300, 0xE8}, {'i', 0x300, 0xEC},
        {'o', 0x300, 0xF2}, {'u', 0x300, 0xF9},
        {'A', 0x301, 0xC1}, {'E', 0x301, 0xC9}, {'I', 0x301, 0xCD}, {'O', 0x301, 0xD3},
        {'U', 0x301, 0xDA}, {'Y', 0x301, 0xDD}, {'a', 0x301, 0xE1}, {'e', 0x301, 0xE9},
        {'i', 0x301, 0xED}, {'o', 0x301, 0xF3}, {'u', 0x301, 0xFA}, {'y', 0x301, 0xFD},
        {'A', 0x302, 0xC2}, {'E', 0x302, 0xCA}, {'I', 0x302, 0xCE}, {'O', 0x302, 0xD4},
        {'U', 0x302, 0xDB}, {'a', 0x302, 0xE2}, {'e', 0x302, 0xEA}, {'i', 0x302, 0xEE},
        {'o', 0x302, 0xF4}, {'u', 0x302, 0xFB},
        {'A', 0x303, 0xC3}, {'N', 0x303, 0xD1}, {'O', 0x303, 0xD5}, {'a', 0x303, 0xE3},
        {'n', 0x303, 0xF1}, {'o', 0x303, 0xF5},
        {'A', 0x308, 0xC4}, {'E', 0x308, 0xCB}, {'I', 0x308, 0xCF}, {'O', 0x308, 0xD6},
        {'U', 0x308, 0xDC}, {'a', 0x308, 0xE4}, {'e', 0x308, 0xEB}, {'i', 0x308, 0xEF},
        {'o', 0x308, 0xF6}, {'u', 0x308, 0xFC}, {'y', 0x308, 0xFF},
        {'A', 0x30A, 0xC5}, {'a', 0x30A, 0xE5},
        {'C', 0x327, 0xC7}, {'c', 0x327, 0xE7},
    };
    for (const auto& e : table)
        if (e.base == base && e.mark == mark) return e.composed;
    return 0;
}

bool is_space_cp(char32_t cp) {
    switch (cp) {
    case ' ': case '\t': case '\n': case '\r': case '\f': case '\v':
    case 0x00A0: case 0x1680: case 0x2028: case 0x2029: case 0x202F:
    case 0x205F: case 0x3000:
        return true;
    default:
        return cp >= 0x2000 && cp <= 0x200A;
    }
}

bool is_punct_cp(char32_t cp) {
    if (cp < 0x80) {
        char c = static_cast<char>(cp);
        return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
               (c >= '{' && c <= '~');
    }
    switch (cp) {
    case 0x2010: case 0x2011: case 0x2012: case 0x2013: case 0x2014: case 0x2015:
    case 0x2018: case 0x2019: case 0x201C: case 0x201D: case 0x2026:
    case 0x00B7: case 0x2022: case 0x00AB: case 0x00BB: case 0x00A1: case 0x00BF:
        return true;
    default:
        return false;
    }
}

bool is_hyphen_cp(char32_t cp) { return cp == '-' || cp == 0x2010 || cp == 0x2011; }

bool is_word_cp(char32_t cp) { return !is_space_cp(cp) && !is_punct_cp(cp); }

char32_t lower_cp(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
    if (cp == 0x178) return 0xFF;
    return cp;
}

const std::unordered_set<std::string>& stopwords() {
    static const std::unordered_set<std::string> words = {
        "a", "about", "above", "after", "again", "all", "also", "am", "an", "and", "any",
        "are", "as", "at", "be", "because", "been", "before", "being", "below", "between",
        "both", "but", "by", "can", "could", "did", "do", "does", "doing", "down", "during",
        "each", "few", "for", "from", "further", "had", "has", "have", "having", "he", "her",
        "here", "hers", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its",
        "itself", "just", "may", "me", "might", "more", "most", "my", "no", "nor", "not",
        "now", "of", "off", "on", "once", "only", "or", "other", "our", "ours", "out",
        "over", "own", "same", "she", "should", "so", "some", "such", "than", "that", "the",
        "their", "theirs", "them", "then", "there", "these", "they", "this", "those",
        "through", "to", "too", "under", "until", "up", "very", "was", "we", "were", "what",
        "when", "where", "which", "while", "who", "whom", "why", "will", "with", "would",
        "you", "your", "yours",
    };
    return words;
}

} // namespace

std::string normalize_nfc(const std::string& text) {
    auto cps = decode_utf8(text);
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < cps.size(); ++i) {
        char32_t cp = cps[i].value;
        if (i + 1 < cps.size()) {
            char32_t composed = compose_pair(cp, cps[i + 1].value);
            if (composed != 0) {
                encode_utf8(composed, out);
                ++i;
                continue;
            }
        }
        encode_utf8(cp, out);
    }
    return out;
}

bool is_stopword(const std::string& surface) { return stopwords().count(surface) > 0; }

std::vector<TokenSpan> tokenize_with_spans(const std::string& text) {
    const std::string norm = normalize_nfc(text);
    auto cps = decode_utf8(norm);
    std::vector<TokenSpan> out;

    std::string surface;
    std::size_t tok_begin = 0;
    bool in_token = false;

    auto flush = [&](std::size_t end_byte) {
        if (!in_token) return;
        TokenSpan ts;
        ts.token.surface = surface;
        ts.token.is_content = !is_stopword(surface);
        ts.begin = tok_begin;
        ts.end = end_byte;
        out.push_back(std::move(ts));
        surface.clear();
        in_token = false;
    };

    for (std::size_t i = 0; i < cps.size(); ++i) {
        const Cp& c = cps[i];
        bool word = is_word_cp(c.value);
        if (!word && is_hyphen_cp(c.value) && in_token && i + 1 < cps.size() &&
            is_word_cp(cps[i + 1].value)) {
            word = true; // intra-word hyphen
        }
        if (word) {
            if (!in_token) {
                in_token = true;
                tok_begin = c.begin;
            }
            encode_utf8(lower_cp(is_hyphen_cp(c.value) ? '-' : c.value), surface);
        } else {
            flush(c.begin);
        }
    }
    flush(norm.size());
    return out;
}

std::vector<Token> tokenize(const std::string& text) {
    auto spans = tokenize_with_spans(text);
    std::vector<Token> out;
    out.reserve(spans.size());
    for (auto& s : spans) out.push_back(std::move(s.token));
    return out;
}

std::vector<std::string> content_token_set(const std::string& text) {
    std::vector<std::string> out;
    for (auto& t : tokenize(text))
        if (t.is_content) out.push_back(std::move(t.surface));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("corpus file not found: " + path.string());

    std::vector<Document> docs;
    std::unordered_map<std::string, int> seen; // doc_id -> first line number
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError("corpus line " + std::to_string(lineno) +
                                  ": malformed JSON: " + e.what());
        }
        for (const char* key : {"doc_id", "title", "source", "text"}) {
            if (!j.contains(key) || !j[key].is_string())
                throw ValidationError("corpus line " + std::to_string(lineno) +
                                      ": missing or non-string key \"" + key + "\"");
        }
        Document d{j["doc_id"], j["title"], j["source"], j["text"]};
        if (d.text.empty())
            throw ValidationError("corpus line " + std::to_string(lineno) + ": empty text for \"" +
                                  d.doc_id + "\"");
        auto it = seen.find(d.doc_id);
        if (it != seen.end())
            throw ValidationError("duplicate doc_id \"" + d.doc_id + "\" on lines " +
                                  std::to_string(it->second) + " and " + std::to_string(lineno));
        seen.emplace(d.doc_id, lineno);
        docs.push_back(std::move(d));
    }
    return docs;
}

std::vector<Passage> chunk_document(const Document& doc, int max_chunk_tokens, int overlap_tokens) {
    if (max_chunk_tokens <= 0 || overlap_tokens < 0 || overlap_tokens >= max_chunk_tokens)
        throw ValidationError("chunking requires 0 <= overlap_tokens < max_chunk_tokens (got " +
                              std::to_string(overlap_tokens) + ", " +
                              std::to_string(max_chunk_tokens) + ")");

    const std::string norm = normalize_nfc(doc.text);
    auto spans = tokenize_with_spans(doc.text);
    std::vector<Passage> out;
    if (spans.empty()) return out;

    const std::size_t n = spans.size();
    const std::size_t stride = static_cast<std::size_t>(max_chunk_tokens - overlap_tokens);
    int ordinal = 0;
    for (std::size_t start = 0; start < n; start += stride) {
        std::size_t stop = std::min(start + static_cast<std::size_t>(max_chunk_tokens), n);
        Passage p;
        p.doc_id = doc.doc_id;
        p.ordinal = ordinal;
        p.passage_id = doc.doc_id + "#" + std::to_string(ordinal);
        p.text = norm.substr(spans[start].begin, spans[stop - 1].end - spans[start].begin);
        p.token_count = static_cast<int>(stop - start);
        out.push_back(std::move(p));
        ++ordinal;
    }
    return out;
}

std::uint64_t corpus_fingerprint(const std::vector<Document>& docs, int max_chunk_tokens,
                                 int overlap_tokens) {
    std::uint64_t h = fnv1a64("orthodoc-store/1");
    h = fnv1a64(std::to_string(max_chunk_tokens) + ":" + std::to_string(overlap_tokens), h);
    for (const auto& d : docs) {
        h = fnv1a64(d.doc_id, h);
        h = fnv1a64("\x1f", h);
        h = fnv1a64(d.text, h);
        h = fnv1a64("\x1e", h);
    }
    return h;
}

CorpusStore build_store(std::vector<Document> docs, int max_chunk_tokens, int overlap_tokens) {
    CorpusStore store;
    store.max_chunk_tokens = max_chunk_tokens;
    store.overlap_tokens = overlap_tokens;
    store.fingerprint = corpus_fingerprint(docs, max_chunk_tokens, overlap_tokens);
    for (const auto& d : docs) {
        auto chunks = chunk_document(d, max_chunk_tokens, overlap_tokens);
        store.passages.insert(store.passages.end(), chunks.begin(), chunks.end());
    }
    store.documents = std::move(docs);
    return store;
}

void save_store(const CorpusStore& store, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json j;
    j["schema_version"] = kStoreSchemaVersion;
    j["fingerprint"] = to_hex(store.fingerprint);
    j["chunk"] = {{"max_tokens", store.max_chunk_tokens}, {"overlap_tokens", store.overlap_tokens}};
    j["documents"] = json::array();
    for (const auto& d : store.documents)
        j["documents"].push_back(
            {{"doc_id", d.doc_id}, {"title", d.title}, {"source", d.source}, {"text", d.text}});
    j["passages"] = json::array();
    for (const auto& p : store.passages)
        j["passages"].push_back({{"passage_id", p.passage_id},
                                 {"doc_id", p.doc_id},
                                 {"ordinal", p.ordinal},
                                 {"text", p.text},
                                 {"token_count", p.token_count}});
    std::ofstream out(dir / "passages.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write store: " + (dir / "passages.json").string());
    out << j.dump(2) << "\n";
}

CorpusStore load_store(const std::filesystem::path& dir) {
    const auto path = dir / "passages.json";
    std::ifstream in(path);
    if (!in) throw ValidationError("store not found: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("store parse error in " + path.string() + ": " + e.what());
    }
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != kStoreSchemaVersion)
        throw ValidationError("store schema version mismatch in " + path.string());

    std::vector<Document> docs;
    for (const auto& d : j.at("documents"))
        docs.push_back({d.at("doc_id"), d.at("title"), d.at("source"), d.at("text")});

    CorpusStore store = build_store(std::move(docs), j.at("chunk").at("max_tokens").get<int>(),
                                    j.at("chunk").at("overlap_tokens").get<int>());

    if (to_hex(store.fingerprint) != j.at("fingerprint").get<std::string>())
        throw ValidationError("store fingerprint mismatch in " + path.string() +
                              " (documents edited after save?)");
    if (j.at("passages").size() != store.passages.size())
        throw ValidationError("store passage list inconsistent in " + path.string());
    return store;
}

} // namespace orthodoc
