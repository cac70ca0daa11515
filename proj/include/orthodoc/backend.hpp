#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <vector>

namespace orthodoc {

struct GenerationRequest {
    std::string system_instruction;
    std::string prompt; // rendered per the ORTHODOC-PROMPT/1 grammar
    int max_tokens = 512;
    double temperature = 0.0; // 0 required for reproducibility mode
    std::string request_id;
};

struct GenerationResponse {
    std::string text;
    std::string backend_id;
    long latency_ms = 0;
};

// ---------------------------------------------------------------------------
// Prompt grammar (the planner <-> backend contract)
//
//   ORTHODOC-PROMPT/1
//   SECTION: <section name>
//   CASE: age=<n> | sex=<s> | occupation=<o> | history=<h> | complaints=<c>
//   NEED: <information need>
//   DIAGNOSIS: <label> (p=<prob>)          [optional]
//   DIFFERENTIAL: <label>                  [optional]
//   EVIDENCE:
//   [1] id=<passage_id> text=<passage text, newlines flattened>
//   ...
//   INSTRUCTIONS: <marker-syntax instructions>
//
// Responses are one sentence per line; a sentence derived from evidence
// passage X carries the marker [E:X].
// ---------------------------------------------------------------------------

struct EvidenceItem {
    std::string passage_id;
    std::string text;
};

struct PromptSpec {
    std::string section;
    std::string case_line; // "age=.. | sex=.. | occupation=.. | history=.. | complaints=.."
    std::string need;
    std::string diagnosis_label;
    double diagnosis_prob = 0.0;
    std::string differential_label;
    std::vector<EvidenceItem> evidence;
};

std::string render_prompt(const PromptSpec& spec);
PromptSpec parse_prompt(const std::string& prompt);

class Backend {
public:
    virtual ~Backend() = default;
    virtual GenerationResponse generate(const GenerationRequest& request) const = 0;
    virtual std::string id() const = 0;
};

// Deterministic test double for the generation model: one declarative
// sentence per evidence passage (first clause + marker) plus fixed
// narrative scaffolding per section kind.
class TemplateBackend : public Backend {
public:
    GenerationResponse generate(const GenerationRequest& request) const override;
    std::string id() const override { return "template"; }
};

struct HttpBackendConfig {
    std::string base_url; // e.g. http://127.0.0.1:8080
    std::string api_key;  // sent as a bearer token when non-empty
    std::string model = "orthodoc";
    int max_in_flight = 4;
    std::chrono::milliseconds deadline{60000};
};

// POSTs to <base>/v1/generate; retries transport errors and 5xx responses
// up to 3 times with 0.5s/1s/2s backoff inside a 60s total deadline.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    ~HttpBackend() override;
    GenerationResponse generate(const GenerationRequest& request) const override;
    std::string id() const override { return "http:" + config_.base_url; }

private:
    HttpBackendConfig config_;
    struct Limiter;
    std::unique_ptr<Limiter> limiter_;
};

} // namespace orthodoc
