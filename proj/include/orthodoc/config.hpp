#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace orthodoc {

// Effective engine configuration. Precedence: CLI flags > --config file >
// these built-in defaults.
struct EngineConfig {
    struct Paths {
        std::string store = "store";
        std::string graph = "graph.json";
        std::string index; // default: <store>/index.json
        std::string weights = "weights.json";
    } paths;

    struct Chunking {
        int max_tokens = 256;
        int overlap_tokens = 32;
    } chunking;

    struct Retrieval {
        int k = 5;
        int depth = 1;
        double k1 = 1.2;
        double b = 0.75;
    } retrieval;

    struct Fusion {
        int d = 32;
        int patches = 16;
        std::uint64_t seed = 42;
        double lr = 0.5;
        int epochs = 200;
        std::vector<std::string> class_labels = {"fracture",    "arthritis",
                                                 "tumor",       "dislocation",
                                                 "degenerative_disease", "normal"};
    } fusion;

    struct ReportParams {
        double tau = 0.3;
        std::string policy = "strict"; // strict | lenient
        std::string template_id = "article";
        std::string date; // empty keeps emitted bytes reproducible
    } report;

    struct BackendParams {
        std::string kind = "template"; // template | http
        std::string url;               // default from ORTHODOC_BACKEND_URL
        std::string key;               // default from ORTHODOC_BACKEND_KEY
        int max_tokens = 512;
        double temperature = 0.0;
    } backend;

    int concurrency_cap = 4;

    std::string index_path() const {
        return paths.index.empty() ? paths.store + "/index.json" : paths.index;
    }
};

// Loads a JSON config file over the defaults. Unknown keys are rejected so
// typos do not silently fall back to defaults.
EngineConfig load_config(const std::filesystem::path& path);

std::string config_to_json(const EngineConfig& config);

void validate_config(const EngineConfig& config);

} // namespace orthodoc
