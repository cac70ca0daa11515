#include "orthodoc/backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <semaphore>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "orthodoc/errors.hpp"
#include "orthodoc/version.hpp"

using json = nlohmann::json;

namespace orthodoc {
namespace {

// Newlines would break the line-oriented grammar; pipes would break the
// CASE field separators, so field VALUES are sanitized by the planner and
// whole lines only need newline flattening here.
std::string flatten(std::string s) {
    for (char& c : s)
        if (c == '\n' || c == '\r' || c == '\t') c = ' ';
    return s;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string ensure_period(std::string s) {
    s = trim(s);
    if (!s.empty() && s.back() != '.' && s.back() != '!' && s.back() != '?') s += '.';
    return s;
}

std::map<std::string, std::string> parse_case_line(const std::string& line) {
    std::map<std::string, std::string> fields;
    std::size_t pos = 0;
    while (pos < line.size()) {
        std::size_t next = line.find(" | ", pos);
        std::string part = line.substr(pos, next == std::string::npos ? next : next - pos);
        auto eq = part.find('=');
        if (eq != std::string::npos) fields[trim(part.substr(0, eq))] = trim(part.substr(eq + 1));
        if (next == std::string::npos) break;
        pos = next + 3;
    }
    return fields;
}

// Clause n of a passage, clauses being runs between '.', ';' and ':'
// boundaries. Falls back to the last clause when n is out of range.
std::string nth_clause(const std::string& text, std::size_t n) {
    std::vector<std::string> clauses;
    std::size_t start = 0;
    while (start < text.size()) {
        auto cut = text.find_first_of(".;:", start);
        std::string clause =
            trim(cut == std::string::npos ? text.substr(start) : text.substr(start, cut - start));
        if (!clause.empty()) clauses.push_back(std::move(clause));
        if (cut == std::string::npos) break;
        start = cut + 1;
    }
    if (clauses.empty()) return trim(text);
    return clauses[std::min(n, clauses.size() - 1)];
}

} // namespace

std::string render_prompt(const PromptSpec& spec) {
    std::ostringstream out;
    out << kPromptGrammar << "\n";
    out << "SECTION: " << spec.section << "\n";
    out << "CASE: " << flatten(spec.case_line) << "\n";
    out << "NEED: " << flatten(spec.need) << "\n";
    if (!spec.diagnosis_label.empty()) {
        char prob[32];
        std::snprintf(prob, sizeof(prob), "%.4f", spec.diagnosis_prob);
        out << "DIAGNOSIS: " << spec.diagnosis_label << " (p=" << prob << ")\n";
    }
    if (!spec.differential_label.empty()) out << "DIFFERENTIAL: " << spec.differential_label << "\n";
    out << "EVIDENCE:\n";
    for (std::size_t i = 0; i < spec.evidence.size(); ++i)
        out << "[" << (i + 1) << "] id=" << spec.evidence[i].passage_id
            << " text=" << flatten(spec.evidence[i].text) << "\n";
    out << "INSTRUCTIONS: Write one sentence per line. Mark every sentence derived from an "
           "evidence passage with [E:<passage_id>] placed before the final period. State exactly "
           "one sentence of the form \"Primary diagnosis: <condition>.\" when a DIAGNOSIS line is "
           "present and the section is diagnosis_assessment.\n";
    return out.str();
}

PromptSpec parse_prompt(const std::string& prompt) {
    std::istringstream in(prompt);
    std::string line;
    if (!std::getline(in, line) || trim(line) != kPromptGrammar)
        throw ValidationError("malformed prompt: missing " + std::string(kPromptGrammar) +
                              " header");

    PromptSpec spec;
    bool in_evidence = false;
    bool saw_section = false, saw_evidence = false;
    while (std::getline(in, line)) {
        if (line.rfind("SECTION: ", 0) == 0) {
            spec.section = trim(line.substr(9));
            saw_section = true;
            in_evidence = false;
        } else if (line.rfind("CASE: ", 0) == 0) {
            spec.case_line = trim(line.substr(6));
            in_evidence = false;
        } else if (line.rfind("NEED: ", 0) == 0) {
            spec.need = trim(line.substr(6));
            in_evidence = false;
        } else if (line.rfind("DIAGNOSIS: ", 0) == 0) {
            std::string rest = trim(line.substr(11));
            auto paren = rest.rfind(" (p=");
            if (paren != std::string::npos && rest.back() == ')') {
                spec.diagnosis_label = rest.substr(0, paren);
                spec.diagnosis_prob = std::atof(rest.substr(paren + 4).c_str());
            } else {
                spec.diagnosis_label = rest;
            }
            in_evidence = false;
        } else if (line.rfind("DIFFERENTIAL: ", 0) == 0) {
            spec.differential_label = trim(line.substr(14));
            in_evidence = false;
        } else if (trim(line) == "EVIDENCE:") {
            in_evidence = true;
            saw_evidence = true;
        } else if (line.rfind("INSTRUCTIONS: ", 0) == 0) {
            in_evidence = false;
        } else if (in_evidence && !trim(line).empty()) {
            auto id_pos = line.find("id=");
            auto text_pos = line.find(" text=");
            if (id_pos == std::string::npos || text_pos == std::string::npos || text_pos < id_pos)
                throw ValidationError("malformed prompt: bad evidence line \"" + line + "\"");
            EvidenceItem item;
            item.passage_id = trim(line.substr(id_pos + 3, text_pos - id_pos - 3));
            item.text = trim(line.substr(text_pos + 6));
            spec.evidence.push_back(std::move(item));
        }
    }
    if (!saw_section || spec.section.empty())
        throw ValidationError("malformed prompt: missing SECTION line");
    if (!saw_evidence) throw ValidationError("malformed prompt: missing EVIDENCE block");
    return spec;
}

GenerationResponse TemplateBackend::generate(const GenerationRequest& request) const {
    if (request.prompt.empty()) throw ValidationError("template backend: empty prompt");
    PromptSpec spec = parse_prompt(request.prompt);
    auto fields = parse_case_line(spec.case_line);

    std::vector<std::string> lines;
    auto scaffold_patient = [&]() {
        std::string s = "The patient is a " + fields["age"] + "-year-old " + fields["sex"];
        if (!fields["occupation"].empty()) s += " " + fields["occupation"];
        lines.push_back(ensure_period(s));
    };
    // Different sections pull different clauses from the same passage:
    // presentation-style sections take the opening clause, process- and
    // advice-style sections take the follow-on clause.
    auto evidence_lines = [&](std::size_t clause_index) {
        for (const auto& item : spec.evidence)
            lines.push_back(nth_clause(item.text, clause_index) + " [E:" + item.passage_id + "].");
    };

    const std::string& kind = spec.section;
    if (kind == "background") {
        scaffold_patient();
        if (!fields["history"].empty())
            lines.push_back(ensure_period("Relevant history: " + fields["history"]));
        evidence_lines(0);
    } else if (kind == "clinical_presentation") {
        if (!fields["complaints"].empty())
            lines.push_back(ensure_period("The patient reports " + fields["complaints"]));
        evidence_lines(0);
    } else if (kind == "diagnostic_process") {
        lines.push_back("Imaging features were correlated with the presenting complaints.");
        evidence_lines(1);
    } else if (kind == "diagnosis_assessment") {
        if (!spec.diagnosis_label.empty())
            lines.push_back("Primary diagnosis: " + spec.diagnosis_label + ".");
        if (!spec.differential_label.empty())
            lines.push_back("Differential diagnosis: " + spec.differential_label + ".");
        evidence_lines(1);
    } else if (kind == "treatment_plan") {
        evidence_lines(0);
        if (!spec.diagnosis_label.empty())
            lines.push_back("Follow the " + spec.diagnosis_label +
                            " treatment plan and attend review appointments.");
        else
            lines.push_back("Follow up to reassess response to treatment.");
    } else if (kind == "patient_education") {
        evidence_lines(1);
        lines.push_back("Keep activity within the recommended limits.");
    } else if (kind == "conclusion") {
        if (!spec.diagnosis_label.empty())
            lines.push_back("In summary, the findings support a diagnosis of " +
                            spec.diagnosis_label + ".");
        lines.push_back("The treatment plan above addresses the presenting complaints.");
    } else if (kind == "full_report") {
        scaffold_patient();
        if (!fields["complaints"].empty())
            lines.push_back(ensure_period("The patient reports " + fields["complaints"]));
        evidence_lines(0);
        if (!spec.diagnosis_label.empty())
            lines.push_back("Primary diagnosis: " + spec.diagnosis_label + ".");
    } else {
        throw ValidationError("template backend: unknown section \"" + kind + "\"");
    }

    GenerationResponse resp;
    resp.backend_id = id();
    resp.latency_ms = 0;
    std::ostringstream out;
    for (const auto& l : lines) out << l << "\n";
    resp.text = out.str();
    return resp;
}

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

struct HttpBackend::Limiter {
    explicit Limiter(int cap) : sem(cap) {}
    std::counting_semaphore<64> sem;
};

HttpBackend::HttpBackend(HttpBackendConfig config)
    : config_(std::move(config)),
      limiter_(std::make_unique<Limiter>(std::max(1, config_.max_in_flight))) {
    if (config_.base_url.empty()) throw ValidationError("http backend: no endpoint URL configured");
}

HttpBackend::~HttpBackend() = default;

GenerationResponse HttpBackend::generate(const GenerationRequest& request) const {
    if (request.prompt.empty()) throw ValidationError("http backend: empty prompt");

    json body{{"model", config_.model},
              {"system", request.system_instruction},
              {"prompt", request.prompt},
              {"max_tokens", request.max_tokens},
              {"temperature", request.temperature},
              {"request_id", request.request_id}};
    const std::string payload = body.dump();

    limiter_->sem.acquire();
    struct Release {
        Limiter* l;
        ~Release() { l->sem.release(); }
    } release{limiter_.get()};

    const auto start = std::chrono::steady_clock::now();
    const auto deadline = start + config_.deadline;
    auto elapsed_ms = [&] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now() - start)
            .count();
    };

    std::string last_error;
    const int max_attempts = 4; // 1 try + 3 retries
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        if (std::chrono::steady_clock::now() >= deadline)
            throw std::runtime_error("http backend: deadline exceeded after " +
                                     std::to_string(elapsed_ms()) + " ms (" + last_error + ")");

        httplib::Client client(config_.base_url);
        const auto remaining = std::chrono::duration_cast<std::chrono::seconds>(
            deadline - std::chrono::steady_clock::now());
        client.set_connection_timeout(std::max<long>(1, remaining.count()), 0);
        client.set_read_timeout(std::max<long>(1, remaining.count()), 0);
        httplib::Headers headers;
        if (!config_.api_key.empty())
            headers.emplace("Authorization", "Bearer " + config_.api_key);

        auto res = client.Post("/v1/generate", headers, payload, "application/json");
        if (res && res->status >= 200 && res->status < 300) {
            json jr;
            try {
                jr = json::parse(res->body);
            } catch (const json::exception& e) {
                throw std::runtime_error("http backend: response is not JSON: " +
                                         std::string(e.what()));
            }
            if (!jr.contains("text") || !jr["text"].is_string())
                throw std::runtime_error("http backend: response missing \"text\" field");
            GenerationResponse out;
            out.text = jr["text"].get<std::string>();
            out.backend_id = id();
            out.latency_ms = elapsed_ms();
            return out;
        }

        if (res && res->status >= 400 && res->status < 500)
            throw std::runtime_error("http backend: HTTP " + std::to_string(res->status) + ": " +
                                     res->body);
        last_error = res ? "HTTP " + std::to_string(res->status) + ": " + res->body
                         : "transport error: " + httplib::to_string(res.error());

        if (attempt < max_attempts) {
            const auto backoff = std::chrono::milliseconds(500) * (1 << (attempt - 1));
            std::this_thread::sleep_for(std::min(
                backoff, std::chrono::duration_cast<std::chrono::milliseconds>(
                             deadline - std::chrono::steady_clock::now())));
        }
    }
    throw std::runtime_error("http backend: request failed after 4 attempts (" + last_error + ")");
}

} // namespace orthodoc
