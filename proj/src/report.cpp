#include "orthodoc/report.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <future>
#include <semaphore>
#include <set>
#include <sstream>

#include <json.hpp>

#include "orthodoc/errors.hpp"
#include "orthodoc/rand.hpp"
#include "orthodoc/version.hpp"

using json = nlohmann::json;

namespace orthodoc {
namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lower_ascii(std::string s) {
    for (char& c : s)
        if (c >= 'A' && c <= 'Z') c += 32;
    return s;
}

// Class labels use underscores; query and prose terms use spaces.
std::string condition_term(const std::string& label) {
    std::string out = label;
    std::replace(out.begin(), out.end(), '_', ' ');
    return out;
}

const std::set<std::string>& imperative_verbs() {
    static const std::set<std::string> verbs = {
        "apply",   "arrange", "attend", "avoid",  "contact", "continue", "elevate",
        "follow",  "keep",    "limit",  "maintain", "perform", "report",  "rest",
        "resume",  "return",  "schedule", "seek",  "stop",    "take",     "use",
        "wear",
    };
    return verbs;
}

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() && b.empty()) return 0.0;
    std::size_t inter = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia == *ib) {
            ++inter;
            ++ia;
            ++ib;
        } else if (*ia < *ib) {
            ++ia;
        } else {
            ++ib;
        }
    }
    const std::size_t uni = a.size() + b.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

} // namespace

// ---------------------------------------------------------------------------
// Case records
// ---------------------------------------------------------------------------

CaseRecord load_case(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("case file not found: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("case parse error in " + path.string() + ": " + e.what());
    }

    CaseRecord c;
    try {
        c.case_id = j.at("case_id").get<std::string>();
        const auto& demo = j.at("demographics");
        c.demographics.age = demo.at("age").get<int>();
        c.demographics.sex = demo.at("sex").get<std::string>();
        c.demographics.occupation = demo.value("occupation", "");
        c.history = j.value("history", "");
        c.complaints = j.value("complaints", "");
        const auto& patches = j.at("image_patches");
        const int P = static_cast<int>(patches.size());
        if (P < 1) throw ValidationError("case " + c.case_id + ": image_patches is empty");
        const int d = static_cast<int>(patches[0].size());
        c.image_patches.patches = Mat(P, d);
        for (int i = 0; i < P; ++i) {
            if (static_cast<int>(patches[static_cast<std::size_t>(i)].size()) != d)
                throw ValidationError("case " + c.case_id + ": ragged image_patches rows");
            for (int k = 0; k < d; ++k) {
                const double v =
                    patches[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
                if (!std::isfinite(v))
                    throw ValidationError("case " + c.case_id + ": non-finite image feature");
                c.image_patches.patches(i, k) = v;
            }
        }
        c.image_patches.source_id = c.case_id;
        if (j.contains("ground_truth") && !j["ground_truth"].is_null())
            c.ground_truth = j["ground_truth"].get<std::string>();
    } catch (const json::exception& e) {
        throw ValidationError("case schema error in " + path.string() + ": " + e.what());
    }
    if (c.demographics.age < 0)
        throw ValidationError("case " + c.case_id + ": age must be >= 0");
    return c;
}

std::string case_fusion_text(const CaseRecord& c) {
    std::string text = c.history;
    if (!text.empty() && !c.complaints.empty()) text += " ";
    text += c.complaints;
    return text;
}

FusionExample case_to_fusion_example(const CaseRecord& c) {
    return FusionExample{case_fusion_text(c), c.image_patches};
}

// ---------------------------------------------------------------------------
// Sections
// ---------------------------------------------------------------------------

std::string section_name(SectionKind kind) {
    switch (kind) {
    case SectionKind::background: return "background";
    case SectionKind::clinical_presentation: return "clinical_presentation";
    case SectionKind::diagnostic_process: return "diagnostic_process";
    case SectionKind::diagnosis_assessment: return "diagnosis_assessment";
    case SectionKind::treatment_plan: return "treatment_plan";
    case SectionKind::patient_education: return "patient_education";
    case SectionKind::conclusion: return "conclusion";
    }
    return "background";
}

std::string section_heading(SectionKind kind) {
    switch (kind) {
    case SectionKind::background: return "Patient Background";
    case SectionKind::clinical_presentation: return "Clinical Presentation";
    case SectionKind::diagnostic_process: return "Diagnostic Process";
    case SectionKind::diagnosis_assessment: return "Diagnosis and Assessment";
    case SectionKind::treatment_plan: return "Treatment Plan";
    case SectionKind::patient_education: return "Patient Education and Recommendations";
    case SectionKind::conclusion: return "Conclusion";
    }
    return "Patient Background";
}

SectionKind section_from_name(const std::string& name) {
    for (SectionKind k : kAllSections)
        if (section_name(k) == name) return k;
    throw ValidationError("unknown section name: \"" + name + "\"");
}

bool is_evidence_bearing(SectionKind kind) {
    return kind == SectionKind::diagnostic_process || kind == SectionKind::diagnosis_assessment ||
           kind == SectionKind::treatment_plan;
}

std::string to_string(ClaimKind k) {
    switch (k) {
    case ClaimKind::factual: return "factual";
    case ClaimKind::advisory: return "advisory";
    case ClaimKind::narrative: return "narrative";
    }
    return "factual";
}

std::string to_string(ClaimStatus s) {
    switch (s) {
    case ClaimStatus::unverified: return "unverified";
    case ClaimStatus::supported: return "supported";
    case ClaimStatus::flagged: return "flagged";
    case ClaimStatus::removed: return "removed";
    }
    return "unverified";
}

// ---------------------------------------------------------------------------
// Planning
// ---------------------------------------------------------------------------

namespace {

// '|' is the CASE-line field separator, so values cannot carry it.
std::string sanitize_field(std::string s) {
    for (char& c : s) {
        if (c == '\n' || c == '\r' || c == '\t') c = ' ';
        if (c == '|') c = '/';
    }
    return s;
}

std::string render_case_line(const CaseRecord& c) {
    std::ostringstream out;
    out << "age=" << c.demographics.age << " | sex=" << sanitize_field(c.demographics.sex)
        << " | occupation=" << sanitize_field(c.demographics.occupation)
        << " | history=" << sanitize_field(c.history)
        << " | complaints=" << sanitize_field(c.complaints);
    return out.str();
}

} // namespace

ReportPlan plan_report(const CaseRecord& c, const ConditionPrediction& prediction,
                       const KnowledgeGraph& graph, const InvertedIndex& index,
                       const CorpusStore& store, const PlanOptions& options) {
    if (c.complaints.empty())
        throw ValidationError("plan_report: case " + c.case_id +
                              " has no complaints; report generation needs them");
    if (prediction.probabilities.empty() || prediction.predicted.empty())
        throw ValidationError("plan_report: prediction not computed");

    ReportPlan plan;
    plan.case_id = c.case_id;
    plan.prediction = prediction;
    plan.case_line = render_case_line(c);
    plan.fingerprint = index.fingerprint;

    // Differential: second-highest class when it is probable enough.
    if (prediction.probabilities.size() >= 2 &&
        prediction.class_labels.size() == prediction.probabilities.size()) {
        int second = -1;
        for (int i = 0; i < static_cast<int>(prediction.probabilities.size()); ++i) {
            if (i == prediction.predicted_index) continue;
            if (second < 0 || prediction.probabilities[static_cast<std::size_t>(i)] >
                                  prediction.probabilities[static_cast<std::size_t>(second)])
                second = i;
        }
        if (second >= 0 && prediction.probabilities[static_cast<std::size_t>(second)] >=
                               options.differential_threshold)
            plan.differential_label = prediction.class_labels[static_cast<std::size_t>(second)];
    }

    const std::string cond = condition_term(prediction.predicted);
    const std::string demo_terms = std::to_string(c.demographics.age) + " " + c.demographics.sex +
                                   " " + c.demographics.occupation + " " + c.history;

    std::map<std::string, std::string> source_of;
    for (const auto& d : store.documents) source_of[d.doc_id] = d.source;
    std::map<std::string, const Passage*> passage_of;
    for (const auto& p : store.passages) passage_of[p.passage_id] = &p;

    for (SectionKind kind : kAllSections) {
        SectionPlan sp;
        sp.kind = kind;
        switch (kind) {
        case SectionKind::background: sp.query_text = demo_terms; break;
        case SectionKind::clinical_presentation: sp.query_text = c.complaints; break;
        case SectionKind::diagnostic_process: sp.query_text = c.complaints + " " + cond; break;
        case SectionKind::diagnosis_assessment:
            sp.query_text = cond;
            if (!plan.differential_label.empty())
                sp.query_text += " " + condition_term(plan.differential_label);
            break;
        case SectionKind::treatment_plan: sp.query_text = cond + " treatment"; break;
        case SectionKind::patient_education: sp.query_text = cond + " management"; break;
        case SectionKind::conclusion: sp.query_text = ""; break; // synthesis only
        }
        if (!sp.query_text.empty()) {
            Query q;
            q.text = sp.query_text;
            q.k = options.k;
            q.expansion_depth = options.depth;
            sp.retrieval = retrieve(q, index, graph);
            plan.graph_reads += sp.retrieval.graph_reads;
            for (const auto& scored : sp.retrieval.ranked) {
                auto it = passage_of.find(scored.passage_id);
                if (it == passage_of.end())
                    throw ValidationError("plan_report: retrieved passage \"" + scored.passage_id +
                                          "\" missing from store");
                plan.passage_texts[scored.passage_id] = it->second->text;
                plan.evidence_sources[scored.passage_id] = source_of[it->second->doc_id];
            }
        }
        plan.sections.push_back(std::move(sp));
    }

    bool any_evidence = false;
    for (const auto& sp : plan.sections) any_evidence |= !sp.retrieval.ranked.empty();
    if (!any_evidence)
        plan.warnings.push_back(
            "no evidence retrieved for any section; verification will flag or remove "
            "factual claims");
    return plan;
}

// ---------------------------------------------------------------------------
// Drafting
// ---------------------------------------------------------------------------

namespace {

struct ParsedSentence {
    std::string sentence;
    std::vector<std::string> marker_ids;
};

// Strips [E:passage_id] markers, recording their ids.
ParsedSentence parse_sentence_line(const std::string& line) {
    ParsedSentence out;
    std::string s = line;
    for (;;) {
        auto open = s.find("[E:");
        if (open == std::string::npos) break;
        auto close = s.find(']', open);
        if (close == std::string::npos) break;
        out.marker_ids.push_back(trim(s.substr(open + 3, close - open - 3)));
        std::size_t erase_begin = open;
        while (erase_begin > 0 && s[erase_begin - 1] == ' ') --erase_begin;
        s.erase(erase_begin, close - erase_begin + 1);
    }
    out.sentence = trim(s);
    return out;
}

ClaimKind classify_kind(SectionKind section, const std::string& sentence) {
    if (section == SectionKind::background || section == SectionKind::conclusion)
        return ClaimKind::narrative;
    const std::string low = lower_ascii(sentence);
    if (low.rfind("primary diagnosis:", 0) == 0 || low.rfind("differential diagnosis:", 0) == 0)
        return ClaimKind::narrative; // the engine's own conclusion, not a corpus fact
    if (section == SectionKind::patient_education || section == SectionKind::treatment_plan) {
        auto toks = tokenize(sentence);
        if (!toks.empty() && imperative_verbs().count(toks.front().surface))
            return ClaimKind::advisory;
    }
    return ClaimKind::factual;
}

GenerationRequest request_for(const ReportPlan& plan, const SectionPlan& section) {
    PromptSpec spec;
    spec.section = section_name(section.kind);
    spec.case_line = plan.case_line;
    spec.need = section.query_text.empty() ? "summarize the report" : section.query_text;
    spec.diagnosis_label = condition_term(plan.prediction.predicted);
    spec.diagnosis_prob =
        plan.prediction.probabilities[static_cast<std::size_t>(plan.prediction.predicted_index)];
    if (!plan.differential_label.empty())
        spec.differential_label = condition_term(plan.differential_label);
    for (const auto& scored : section.retrieval.ranked)
        spec.evidence.push_back({scored.passage_id, plan.passage_texts.at(scored.passage_id)});

    GenerationRequest req;
    req.system_instruction =
        "You are an orthopedic report writer. Use only the supplied evidence passages "
        "for factual statements.";
    req.prompt = render_prompt(spec);
    req.temperature = 0.0;
    req.request_id = plan.case_id + ":" + spec.section;
    return req;
}

std::vector<Claim> parse_response(const ReportPlan& plan, const SectionPlan& section,
                                  const std::string& text) {
    if (trim(text).empty())
        throw ValidationError("backend returned an unparseable (empty) response for section " +
                              section_name(section.kind));

    std::set<std::string> valid_ids;
    std::map<std::string, double> relevance_of;
    for (const auto& scored : section.retrieval.ranked) {
        valid_ids.insert(scored.passage_id);
        relevance_of[scored.passage_id] = scored.score;
    }

    std::vector<Claim> claims;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        ParsedSentence parsed = parse_sentence_line(line);
        if (parsed.sentence.empty()) continue;

        Claim claim;
        claim.sentence = parsed.sentence;
        claim.kind = classify_kind(section.kind, parsed.sentence);
        const std::string low = lower_ascii(parsed.sentence);
        claim.is_primary_diagnosis = low.rfind("primary diagnosis:", 0) == 0;

        bool unknown_marker = false;
        for (const auto& id : parsed.marker_ids) {
            if (!valid_ids.count(id)) {
                unknown_marker = true;
                continue;
            }
            EvidenceBinding binding;
            binding.passage_id = id;
            binding.relevance = relevance_of[id];
            const std::string& ptext = plan.passage_texts.at(id);
            std::string body = parsed.sentence;
            if (!body.empty() && body.back() == '.') body.pop_back();
            if (ptext.rfind(body, 0) == 0) {
                binding.span_begin = 0;
                binding.span_end = body.size();
            } else {
                binding.span_begin = 0;
                binding.span_end = ptext.size();
            }
            claim.bindings.push_back(std::move(binding));
        }
        if (unknown_marker) claim.status = ClaimStatus::flagged;
        claims.push_back(std::move(claim));
    }
    if (claims.empty())
        throw ValidationError("backend response for section " + section_name(section.kind) +
                              " contained no sentences");
    return claims;
}

} // namespace

std::vector<Claim> draft_section(const ReportPlan& plan, const SectionPlan& section,
                                 const Backend& backend) {
    GenerationRequest req = request_for(plan, section);
    GenerationResponse resp;
    try {
        resp = backend.generate(req);
    } catch (const std::exception& e) {
        throw std::runtime_error("backend failure while drafting section " +
                                 section_name(section.kind) + ": " + e.what());
    }
    return parse_response(plan, section, resp.text);
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

Report synthesize(const ReportPlan& plan, const std::map<SectionKind, std::vector<Claim>>& drafts,
                  const std::string& backend_id) {
    for (SectionKind kind : kAllSections)
        if (!drafts.count(kind))
            throw ValidationError("synthesize: missing draft for section " + section_name(kind));

    Report report;
    report.case_id = plan.case_id;
    report.backend_id = backend_id;
    report.prediction = plan.prediction;
    report.evidence_sources = plan.evidence_sources;

    std::set<std::string> seen;
    for (SectionKind kind : kAllSections) {
        Section section;
        section.kind = kind;
        for (const Claim& claim : drafts.at(kind)) {
            if (seen.count(claim.sentence)) continue; // verbatim repeat, keep first
            seen.insert(claim.sentence);
            section.claims.push_back(claim);
        }
        report.sections.push_back(std::move(section));
    }

    int primaries = 0;
    const std::string cond = lower_ascii(condition_term(plan.prediction.predicted));
    for (const auto& section : report.sections) {
        if (section.kind != SectionKind::diagnosis_assessment) continue;
        for (const auto& claim : section.claims) {
            if (!claim.is_primary_diagnosis) continue;
            ++primaries;
            if (lower_ascii(claim.sentence).find(cond) == std::string::npos)
                throw ValidationError("synthesize: primary diagnosis claim does not name the "
                                      "predicted condition \"" +
                                      cond + "\"");
        }
    }
    if (primaries != 1)
        throw ValidationError("synthesize: diagnosis_assessment must contain exactly one primary "
                              "diagnosis claim, found " +
                              std::to_string(primaries));

    // Cross-reference the diagnostic process when the treatment plan picks up
    // the diagnosed condition.
    for (auto& section : report.sections) {
        if (section.kind != SectionKind::treatment_plan) continue;
        for (auto& claim : section.claims) {
            if (lower_ascii(claim.sentence).find(cond) == std::string::npos) continue;
            std::string s = claim.sentence;
            if (!s.empty() && s[0] >= 'A' && s[0] <= 'Z') s[0] = static_cast<char>(s[0] + 32);
            claim.sentence = "As noted in the diagnostic process, " + s;
            break;
        }
        break;
    }
    return report;
}

Report build_report(const ReportPlan& plan, const Backend& backend, int max_in_flight) {
    // one draft per request_id, shared by any sections that repeat it
    std::map<std::string, const SectionPlan*> unique;
    for (const auto& section : plan.sections)
        unique.emplace(plan.case_id + ":" + section_name(section.kind), &section);

    std::map<std::string, std::vector<Claim>> by_request_id;
    if (max_in_flight <= 1 || unique.size() <= 1) {
        for (const auto& [request_id, section] : unique)
            by_request_id.emplace(request_id, draft_section(plan, *section, backend));
    } else {
        std::counting_semaphore<64> limiter(std::min(max_in_flight, 64));
        std::vector<std::pair<std::string, std::future<std::vector<Claim>>>> futures;
        for (const auto& [request_id, section] : unique) {
            const SectionPlan* sp = section;
            futures.emplace_back(
                request_id, std::async(std::launch::async, [&plan, sp, &backend, &limiter] {
                    limiter.acquire();
                    struct Release {
                        std::counting_semaphore<64>& s;
                        ~Release() { s.release(); }
                    } release{limiter};
                    return draft_section(plan, *sp, backend);
                }));
        }
        for (auto& [request_id, future] : futures) by_request_id.emplace(request_id, future.get());
    }

    std::map<SectionKind, std::vector<Claim>> drafts;
    for (const auto& section : plan.sections)
        drafts[section.kind] = by_request_id.at(plan.case_id + ":" + section_name(section.kind));
    return synthesize(plan, drafts, backend.id());
}

// ---------------------------------------------------------------------------
// Single-pass assembly (the no-CoT ablation)
// ---------------------------------------------------------------------------

namespace {

SectionKind route_sentence(const std::string& sentence) {
    const std::string low = lower_ascii(sentence);
    auto contains = [&](const char* needle) { return low.find(needle) != std::string::npos; };
    if (contains("diagnosis")) return SectionKind::diagnosis_assessment;
    if (contains("-year-old") || contains("history")) return SectionKind::background;
    if (contains("reports") || contains("presents") || contains("complain"))
        return SectionKind::clinical_presentation;
    if (contains("treated") || contains("treatment") || contains("therapy") ||
        contains("surgery") || contains("reduction"))
        return SectionKind::treatment_plan;
    auto toks = tokenize(sentence);
    if ((!toks.empty() && imperative_verbs().count(toks.front().surface)) ||
        contains("management"))
        return SectionKind::patient_education;
    if (contains("in summary") || contains("conclusion")) return SectionKind::conclusion;
    return SectionKind::diagnostic_process;
}

} // namespace

Report build_report_single_pass(const CaseRecord& c, const ReportPlan& plan,
                                const Backend& backend) {
    // One retrieval, one generation, no per-section structure guarantees.
    SectionPlan whole;
    whole.kind = SectionKind::diagnostic_process; // placeholder, unused by routing
    whole.query_text = c.complaints + (c.history.empty() ? "" : " " + c.history);

    // Union the plan's evidence as the single prompt's pool, ranked by score.
    std::map<std::string, double> pool;
    for (const auto& sp : plan.sections)
        for (const auto& scored : sp.retrieval.ranked) {
            auto it = pool.find(scored.passage_id);
            if (it == pool.end() || scored.score > it->second) pool[scored.passage_id] = scored.score;
        }
    std::vector<std::pair<std::string, double>> ranked(pool.begin(), pool.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    for (const auto& [pid, score] : ranked) {
        ScoredPassage sp;
        sp.passage_id = pid;
        sp.score = score;
        whole.retrieval.ranked.push_back(std::move(sp));
    }

    PromptSpec spec;
    spec.section = "full_report";
    spec.case_line = plan.case_line;
    spec.need = whole.query_text;
    spec.diagnosis_label = condition_term(plan.prediction.predicted);
    spec.diagnosis_prob =
        plan.prediction.probabilities[static_cast<std::size_t>(plan.prediction.predicted_index)];
    for (const auto& scored : whole.retrieval.ranked)
        spec.evidence.push_back({scored.passage_id, plan.passage_texts.at(scored.passage_id)});

    GenerationRequest req;
    req.system_instruction =
        "You are an orthopedic report writer. Use only the supplied evidence passages "
        "for factual statements.";
    req.prompt = render_prompt(spec);
    req.temperature = 0.0;
    req.request_id = plan.case_id + ":full_report";

    GenerationResponse resp;
    try {
        resp = backend.generate(req);
    } catch (const std::exception& e) {
        throw std::runtime_error("backend failure while drafting single-pass report: " +
                                 std::string(e.what()));
    }

    std::vector<Claim> flat = parse_response(plan, whole, resp.text);

    Report report;
    report.case_id = plan.case_id;
    report.backend_id = backend.id();
    report.prediction = plan.prediction;
    report.evidence_sources = plan.evidence_sources;
    for (SectionKind kind : kAllSections) report.sections.push_back({kind, {}});

    std::set<std::string> seen;
    for (Claim& claim : flat) {
        if (seen.count(claim.sentence)) continue;
        seen.insert(claim.sentence);
        SectionKind target = route_sentence(claim.sentence);
        claim.kind = classify_kind(target, claim.sentence);
        report.sections[static_cast<std::size_t>(target)].claims.push_back(std::move(claim));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Grounding verification
// ---------------------------------------------------------------------------

Report verify_grounding(Report report, const CorpusStore& store, double tau,
                        VerifyPolicy policy) {
    if (!(tau > 0.0 && tau <= 1.0))
        throw ValidationError("verify_grounding: tau must be in (0, 1]");

    std::map<std::string, std::vector<std::string>> passage_tokens;
    for (const auto& p : store.passages) passage_tokens[p.passage_id] = content_token_set(p.text);

    report.verification.performed = true;
    report.verification.tau = tau;
    report.verification.policy = policy == VerifyPolicy::strict ? "strict" : "lenient";
    report.verification.audit.clear();

    for (auto& section : report.sections) {
        for (auto& claim : section.claims) {
            if (claim.kind != ClaimKind::factual) continue;
            if (claim.status != ClaimStatus::unverified) {
                // flagged at parse time; still audited with its score
                double score = 0.0;
                for (const auto& b : claim.bindings) {
                    auto it = passage_tokens.find(b.passage_id);
                    if (it == passage_tokens.end()) continue;
                    score = std::max(score, jaccard(content_token_set(claim.sentence), it->second));
                }
                report.verification.audit.push_back(
                    {section.kind, claim.sentence, score, to_string(claim.status)});
                continue;
            }

            const auto claim_tokens = content_token_set(claim.sentence);
            double score = 0.0;
            bool has_valid_binding = false;
            for (const auto& b : claim.bindings) {
                auto it = passage_tokens.find(b.passage_id);
                if (it == passage_tokens.end()) continue;
                has_valid_binding = true;
                score = std::max(score, jaccard(claim_tokens, it->second));
            }

            if (has_valid_binding && score >= tau) {
                claim.status = ClaimStatus::supported;
            } else {
                claim.status =
                    policy == VerifyPolicy::strict ? ClaimStatus::removed : ClaimStatus::flagged;
                report.verification.audit.push_back(
                    {section.kind, claim.sentence, score, to_string(claim.status)});
            }
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// LaTeX
// ---------------------------------------------------------------------------

std::string escape_latex(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        switch (c) {
        case '\\': out += "\\textbackslash{}"; break;
        case '{': out += "\\{"; break;
        case '}': out += "\\}"; break;
        case '$': out += "\\$"; break;
        case '&': out += "\\&"; break;
        case '#': out += "\\#"; break;
        case '^': out += "\\textasciicircum{}"; break;
        case '_': out += "\\_"; break;
        case '%': out += "\\%"; break;
        case '~': out += "\\textasciitilde{}"; break;
        default: out.push_back(c);
        }
    }
    return out;
}

namespace {

std::string footnote_for(const Claim& claim, const Report& report) {
    if (claim.bindings.empty()) return "";
    std::string note = "\\footnote{Evidence: ";
    for (std::size_t i = 0; i < claim.bindings.size(); ++i) {
        if (i > 0) note += "; ";
        const auto& b = claim.bindings[i];
        auto it = report.evidence_sources.find(b.passage_id);
        const std::string source = it != report.evidence_sources.end() ? it->second : "corpus";
        note += escape_latex(source) + ", passage \\texttt{" + escape_latex(b.passage_id) + "}";
    }
    note += ".}";
    return note;
}

} // namespace

std::string emit_latex(const Report& report, const std::string& template_id) {
    if (template_id != "article")
        throw ValidationError("emit_latex: unknown template \"" + template_id + "\"");
    if (!report.verification.performed)
        throw ValidationError("emit_latex: report has not been verified");
    for (const auto& section : report.sections)
        for (const auto& claim : section.claims)
            if (claim.kind == ClaimKind::factual && claim.status == ClaimStatus::unverified)
                throw ValidationError("emit_latex: unverified factual claims present; run "
                                      "verify_grounding first");

    // Under the strict policy flagged claims are withheld like removed ones;
    // lenient renders them inside marked admonitions.
    const bool render_flagged = report.verification.policy != "strict";

    std::ostringstream out;
    out << "\\documentclass{article}\n";
    out << "\\usepackage[margin=1in]{geometry}\n";
    out << "\n";
    out << "\\title{Orthopedic Diagnostic Report --- Case " << escape_latex(report.case_id)
        << "}\n";
    out << "\\author{OrthoDoc Engine v" << kEngineVersion << "}\n";
    out << "\\date{" << escape_latex(report.date) << "}\n";
    out << "\n";
    out << "\\begin{document}\n";
    out << "\\maketitle\n";

    for (const auto& section : report.sections) {
        out << "\n\\section*{" << section_heading(section.kind) << "}\n";
        int rendered = 0;
        for (const auto& claim : section.claims) {
            if (claim.status == ClaimStatus::removed) continue;
            if (claim.status == ClaimStatus::flagged) {
                if (!render_flagged) continue;
                out << "\n\\begin{quote}\n\\textbf{Unverified:} " << escape_latex(claim.sentence)
                    << footnote_for(claim, report) << "\n\\end{quote}\n";
            } else {
                out << "\n" << escape_latex(claim.sentence) << footnote_for(claim, report) << "\n";
            }
            ++rendered;
        }
        if (rendered == 0) out << "\nNo findings recorded.\n";
    }

    out << "\n\\end{document}\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void save_report_json(const Report& report, const ReportPlan& plan,
                      const std::filesystem::path& path) {
    json j;
    j["schema_version"] = kReportSchemaVersion;
    j["case_id"] = report.case_id;
    j["date"] = report.date;
    j["backend_id"] = report.backend_id;
    j["engine_version"] = kEngineVersion;
    j["prediction"] = {{"predicted", report.prediction.predicted},
                       {"predicted_index", report.prediction.predicted_index},
                       {"probabilities", report.prediction.probabilities}};
    j["sections"] = json::array();
    for (const auto& section : report.sections) {
        json claims = json::array();
        for (const auto& claim : section.claims) {
            json bindings = json::array();
            for (const auto& b : claim.bindings)
                bindings.push_back({{"passage_id", b.passage_id},
                                    {"span", {b.span_begin, b.span_end}},
                                    {"relevance", b.relevance}});
            claims.push_back({{"sentence", claim.sentence},
                              {"kind", to_string(claim.kind)},
                              {"status", to_string(claim.status)},
                              {"is_primary_diagnosis", claim.is_primary_diagnosis},
                              {"bindings", bindings}});
        }
        j["sections"].push_back({{"kind", section_name(section.kind)}, {"claims", claims}});
    }
    j["verification"] = {{"performed", report.verification.performed},
                         {"tau", report.verification.tau},
                         {"policy", report.verification.policy}};
    j["verification"]["audit"] = json::array();
    for (const auto& entry : report.verification.audit)
        j["verification"]["audit"].push_back({{"section", section_name(entry.section)},
                                              {"sentence", entry.sentence},
                                              {"score", entry.score},
                                              {"action", entry.action}});
    j["plan"] = json::object();
    j["plan"]["fingerprint"] = to_hex(plan.fingerprint);
    j["plan"]["warnings"] = plan.warnings;
    j["plan"]["sections"] = json::array();
    for (const auto& sp : plan.sections) {
        json retrieved = json::array();
        for (const auto& scored : sp.retrieval.ranked)
            retrieved.push_back({{"passage_id", scored.passage_id}, {"score", scored.score}});
        j["plan"]["sections"].push_back({{"kind", section_name(sp.kind)},
                                         {"query", sp.query_text},
                                         {"retrieved", retrieved}});
    }
    j["evidence_sources"] = report.evidence_sources;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report json: " + path.string());
    out << j.dump(2) << "\n";
}

} // namespace orthodoc
