#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "orthodoc/backend.hpp"
#include "orthodoc/fusion.hpp"
#include "orthodoc/kgraph.hpp"
#include "orthodoc/retrieval.hpp"

namespace orthodoc {

struct Demographics {
    int age = 0;
    std::string sex;
    std::string occupation;
};

struct CaseRecord {
    std::string case_id;
    Demographics demographics;
    std::string history;
    std::string complaints;
    ImageFeatures image_patches;
    std::optional<std::string> ground_truth;
};

CaseRecord load_case(const std::filesystem::path& path);

// The text the fusion model embeds for a case.
std::string case_fusion_text(const CaseRecord& c);
FusionExample case_to_fusion_example(const CaseRecord& c);

enum class SectionKind {
    background,
    clinical_presentation,
    diagnostic_process,
    diagnosis_assessment,
    treatment_plan,
    patient_education,
    conclusion,
};

inline constexpr std::array<SectionKind, 7> kAllSections = {
    SectionKind::background,        SectionKind::clinical_presentation,
    SectionKind::diagnostic_process, SectionKind::diagnosis_assessment,
    SectionKind::treatment_plan,    SectionKind::patient_education,
    SectionKind::conclusion,
};

std::string section_name(SectionKind kind);    // snake_case identifier
std::string section_heading(SectionKind kind); // LaTeX heading text
SectionKind section_from_name(const std::string& name);

// Sections whose factual claims the completeness metric requires to be
// supported: diagnostic_process, diagnosis_assessment, treatment_plan.
bool is_evidence_bearing(SectionKind kind);

struct EvidenceBinding {
    std::string passage_id;
    std::size_t span_begin = 0; // byte range within the passage text
    std::size_t span_end = 0;
    double relevance = 0.0;
};

enum class ClaimKind { factual, advisory, narrative };
enum class ClaimStatus { unverified, supported, flagged, removed };

std::string to_string(ClaimKind k);
std::string to_string(ClaimStatus s);

struct Claim {
    std::string sentence; // markers stripped
    std::vector<EvidenceBinding> bindings;
    ClaimKind kind = ClaimKind::factual;
    ClaimStatus status = ClaimStatus::unverified;
    bool is_primary_diagnosis = false;
};

struct SectionPlan {
    SectionKind kind = SectionKind::background;
    std::string query_text; // empty when the section does no retrieval
    RetrievalResult retrieval;
};

struct ReportPlan {
    std::string case_id;
    ConditionPrediction prediction;
    std::string differential_label; // set when 2nd class probability >= 0.15
    std::string case_line;          // CASE field of the prompt grammar
    std::vector<SectionPlan> sections;
    std::map<std::string, std::string> evidence_sources; // passage_id -> doc source
    std::map<std::string, std::string> passage_texts;    // passage_id -> text
    std::vector<std::string> warnings;
    std::uint64_t fingerprint = 0;
    int graph_reads = 0;
};

struct PlanOptions {
    int k = 5;
    int depth = 1;
    double differential_threshold = 0.15;
};

ReportPlan plan_report(const CaseRecord& c, const ConditionPrediction& prediction,
                       const KnowledgeGraph& graph, const InvertedIndex& index,
                       const CorpusStore& store, const PlanOptions& options = {});

struct Section {
    SectionKind kind = SectionKind::background;
    std::vector<Claim> claims;
};

struct VerificationAuditEntry {
    SectionKind section = SectionKind::background;
    std::string sentence;
    double score = 0.0;
    std::string action; // "removed" | "flagged"
};

struct VerificationSummary {
    bool performed = false;
    double tau = 0.0;
    std::string policy;
    std::vector<VerificationAuditEntry> audit;
};

struct Report {
    std::string case_id;
    std::string date; // empty by default so emitted bytes are reproducible
    std::string backend_id;
    ConditionPrediction prediction;
    std::vector<Section> sections; // always canonical order
    std::map<std::string, std::string> evidence_sources;
    VerificationSummary verification;
};

// Drafts one section through the backend and parses the response: one
// sentence per line, [E:passage_id] markers become bindings, kinds assigned
// by section rules. A marker citing a passage the section was not given is
// flagged at parse time.
std::vector<Claim> draft_section(const ReportPlan& plan, const SectionPlan& section,
                                 const Backend& backend);

// Orders sections canonically, drops verbatim repeats (keeping the first),
// checks the single-primary-diagnosis invariant, and injects the diagnostic
// cross-reference phrase into the treatment plan.
Report synthesize(const ReportPlan& plan, const std::map<SectionKind, std::vector<Claim>>& drafts,
                  const std::string& backend_id);

// Drafts all seven sections (deduplicating by request_id) and synthesizes.
// With max_in_flight > 1 sections are drafted concurrently, bounded by that
// limit; the assembled report is identical either way.
Report build_report(const ReportPlan& plan, const Backend& backend, int max_in_flight = 1);

// The no-CoT ablation path: one full_report generation, split by keyword
// routing. Sections the router never hits stay empty and the
// single-primary-diagnosis invariant is not enforced here.
Report build_report_single_pass(const CaseRecord& c, const ReportPlan& plan,
                                const Backend& backend);

enum class VerifyPolicy { strict, lenient };

// Grounding re-assessment: a factual claim is supported iff the best Jaccard
// overlap between its content tokens and a validly bound passage's content
// tokens reaches tau. Otherwise strict removes, lenient flags.
Report verify_grounding(Report report, const CorpusStore& store, double tau, VerifyPolicy policy);

// Escapes the ten LaTeX specials: \ { } $ & # ^ _ % ~. Not idempotent.
std::string escape_latex(const std::string& text);

// Full article-class document. Refuses while any factual claim is still
// unverified. Byte-deterministic for a given report.
std::string emit_latex(const Report& report, const std::string& template_id = "article");

void save_report_json(const Report& report, const ReportPlan& plan,
                      const std::filesystem::path& path);

} // namespace orthodoc
