#include "orthodoc/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include <json.hpp>

#include "orthodoc/errors.hpp"
#include "orthodoc/version.hpp"

using json = nlohmann::json;

namespace orthodoc {
namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key))
            throw ValidationError("config: unknown key \"" + key + "\" in " + where);
}

} // namespace

EngineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config file not found: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("config parse error in " + path.string() + ": " + e.what());
    }

    EngineConfig cfg;
    check_keys(j, {"schema_version", "paths", "chunking", "retrieval", "fusion", "report",
                   "backend", "concurrency_cap"},
               "top level");
    if (j.contains("schema_version") && j["schema_version"].get<int>() != kConfigSchemaVersion)
        throw ValidationError("config schema version mismatch in " + path.string());

    if (j.contains("paths")) {
        const auto& p = j["paths"];
        check_keys(p, {"store", "graph", "index", "weights"}, "paths");
        cfg.paths.store = p.value("store", cfg.paths.store);
        cfg.paths.graph = p.value("graph", cfg.paths.graph);
        cfg.paths.index = p.value("index", cfg.paths.index);
        cfg.paths.weights = p.value("weights", cfg.paths.weights);
    }
    if (j.contains("chunking")) {
        const auto& c = j["chunking"];
        check_keys(c, {"max_tokens", "overlap_tokens"}, "chunking");
        cfg.chunking.max_tokens = c.value("max_tokens", cfg.chunking.max_tokens);
        cfg.chunking.overlap_tokens = c.value("overlap_tokens", cfg.chunking.overlap_tokens);
    }
    if (j.contains("retrieval")) {
        const auto& r = j["retrieval"];
        check_keys(r, {"k", "depth", "k1", "b"}, "retrieval");
        cfg.retrieval.k = r.value("k", cfg.retrieval.k);
        cfg.retrieval.depth = r.value("depth", cfg.retrieval.depth);
        cfg.retrieval.k1 = r.value("k1", cfg.retrieval.k1);
        cfg.retrieval.b = r.value("b", cfg.retrieval.b);
    }
    if (j.contains("fusion")) {
        const auto& f = j["fusion"];
        check_keys(f, {"d", "patches", "seed", "lr", "epochs", "class_labels"}, "fusion");
        cfg.fusion.d = f.value("d", cfg.fusion.d);
        cfg.fusion.patches = f.value("patches", cfg.fusion.patches);
        cfg.fusion.seed = f.value("seed", cfg.fusion.seed);
        cfg.fusion.lr = f.value("lr", cfg.fusion.lr);
        cfg.fusion.epochs = f.value("epochs", cfg.fusion.epochs);
        if (f.contains("class_labels"))
            cfg.fusion.class_labels = f["class_labels"].get<std::vector<std::string>>();
    }
    if (j.contains("report")) {
        const auto& r = j["report"];
        check_keys(r, {"tau", "policy", "template_id", "date"}, "report");
        cfg.report.tau = r.value("tau", cfg.report.tau);
        cfg.report.policy = r.value("policy", cfg.report.policy);
        cfg.report.template_id = r.value("template_id", cfg.report.template_id);
        cfg.report.date = r.value("date", cfg.report.date);
    }
    if (j.contains("backend")) {
        const auto& b = j["backend"];
        check_keys(b, {"kind", "url", "key", "max_tokens", "temperature"}, "backend");
        cfg.backend.kind = b.value("kind", cfg.backend.kind);
        cfg.backend.url = b.value("url", cfg.backend.url);
        cfg.backend.key = b.value("key", cfg.backend.key);
        cfg.backend.max_tokens = b.value("max_tokens", cfg.backend.max_tokens);
        cfg.backend.temperature = b.value("temperature", cfg.backend.temperature);
    }
    cfg.concurrency_cap = j.value("concurrency_cap", cfg.concurrency_cap);
    return cfg;
}

void validate_config(const EngineConfig& cfg) {
    if (cfg.chunking.max_tokens <= 0 || cfg.chunking.overlap_tokens < 0 ||
        cfg.chunking.overlap_tokens >= cfg.chunking.max_tokens)
        throw ValidationError("config: chunking requires 0 <= overlap_tokens < max_tokens");
    if (cfg.retrieval.k < 1) throw ValidationError("config: retrieval.k must be >= 1");
    if (cfg.retrieval.depth < 0) throw ValidationError("config: retrieval.depth must be >= 0");
    if (cfg.retrieval.k1 <= 0.0) throw ValidationError("config: retrieval.k1 must be > 0");
    if (cfg.retrieval.b < 0.0 || cfg.retrieval.b > 1.0)
        throw ValidationError("config: retrieval.b must be in [0,1]");
    if (cfg.fusion.d < 1 || cfg.fusion.patches < 1)
        throw ValidationError("config: fusion dims must be >= 1");
    if (cfg.fusion.class_labels.size() < 2)
        throw ValidationError("config: fusion.class_labels needs >= 2 classes");
    if (!(cfg.report.tau > 0.0 && cfg.report.tau <= 1.0))
        throw ValidationError("config: report.tau must be in (0, 1]");
    if (cfg.report.policy != "strict" && cfg.report.policy != "lenient")
        throw ValidationError("config: report.policy must be strict or lenient");
    if (cfg.backend.kind != "template" && cfg.backend.kind != "http")
        throw ValidationError("config: backend.kind must be template or http");
    if (cfg.concurrency_cap < 1) throw ValidationError("config: concurrency_cap must be >= 1");
}

std::string config_to_json(const EngineConfig& cfg) {
    json j;
    j["schema_version"] = kConfigSchemaVersion;
    j["paths"] = {{"store", cfg.paths.store},
                  {"graph", cfg.paths.graph},
                  {"index", cfg.index_path()},
                  {"weights", cfg.paths.weights}};
    j["chunking"] = {{"max_tokens", cfg.chunking.max_tokens},
                     {"overlap_tokens", cfg.chunking.overlap_tokens}};
    j["retrieval"] = {{"k", cfg.retrieval.k},
                      {"depth", cfg.retrieval.depth},
                      {"k1", cfg.retrieval.k1},
                      {"b", cfg.retrieval.b}};
    j["fusion"] = {{"d", cfg.fusion.d},
                   {"patches", cfg.fusion.patches},
                   {"seed", cfg.fusion.seed},
                   {"lr", cfg.fusion.lr},
                   {"epochs", cfg.fusion.epochs},
                   {"class_labels", cfg.fusion.class_labels}};
    j["report"] = {{"tau", cfg.report.tau},
                   {"policy", cfg.report.policy},
                   {"template_id", cfg.report.template_id},
                   {"date", cfg.report.date}};
    j["backend"] = {{"kind", cfg.backend.kind},
                    {"url", cfg.backend.url},
                    {"max_tokens", cfg.backend.max_tokens},
                    {"temperature", cfg.backend.temperature}};
    j["concurrency_cap"] = cfg.concurrency_cap;
    return j.dump(2) + "\n";
}

} // namespace orthodoc
