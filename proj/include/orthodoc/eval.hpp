#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "orthodoc/backend.hpp"
#include "orthodoc/report.hpp"

namespace orthodoc {

struct ConfusionMatrix {
    std::vector<std::string> classes;
    std::vector<std::vector<long>> counts; // rows = truth, cols = predicted
    long total() const;
};

struct PerClassMetrics {
    std::string label;
    double sensitivity = 0.0;
    double specificity = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
    bool degenerate = false; // some 0/0 ratio was coerced to 0
};

struct ConditionMetrics {
    double accuracy = 0.0;
    double macro_sensitivity = 0.0;
    double macro_specificity = 0.0;
    double macro_f1 = 0.0;
    std::vector<PerClassMetrics> per_class;
    bool degenerate = false;
};

ConfusionMatrix confusion_matrix(const std::vector<std::string>& predictions,
                                 const std::vector<std::string>& labels,
                                 const std::vector<std::string>& classes);

// One-vs-rest sensitivity/specificity/precision/F1 per class, macro means.
// 0/0 ratios become 0 and set the degenerate flag.
ConditionMetrics condition_metrics(const ConfusionMatrix& matrix);

// Fraction of the seven sections that are present and non-empty, with the
// three evidence-bearing sections additionally requiring >= 1 supported claim.
double completeness(const Report& report);

// Mean of: (a) canonical section order, (b) fraction of post-background
// sections sharing >= 1 content token with an earlier section, (c) the
// diagnosed condition appearing in the treatment plan.
double coherence(const Report& report);

// Supported factual claims / all factual claims prior to removal. A report
// with no factual claims at all scores 1.0 and sets the degenerate flag.
double factual_correctness(const Report& report, bool* degenerate = nullptr);

// Mean over the evidence-bearing sections of the Jaccard overlap between
// section content tokens and the union of that section's retrieved passages.
double content_relevance(const Report& report, const ReportPlan& plan);

// OQS = 1 + 9 * mean(completeness, coherence, content_relevance,
// factual_correctness), so it lives in [1, 10].
double overall_quality(double completeness, double coherence, double content_relevance,
                       double factual_correctness);

struct BootstrapResult {
    double mean_diff = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

// Seeded paired bootstrap with percentile CI (nearest rank, widened if needed
// so ci_low <= mean_diff <= ci_high always holds). Resample indices come from
// SplitMix64(seed) via next_u64() % n.
BootstrapResult bootstrap_compare(const std::vector<double>& scores_a,
                                  const std::vector<double>& scores_b, int resamples,
                                  std::uint64_t seed);

// ---------------------------------------------------------------------------
// Dataset evaluation and ablations
// ---------------------------------------------------------------------------

struct EvalOptions {
    int k = 5;
    int depth = 1;
    double tau = 0.3;
    VerifyPolicy policy = VerifyPolicy::strict;
    bool rag = true; // off: empty graph, depth 0
    bool cot = true; // off: single-pass generation, heuristic split
};

struct CaseOutcome {
    std::string case_id;
    std::string predicted;
    std::optional<std::string> truth;
    double completeness = 0.0;
    double coherence = 0.0;
    double content_relevance = 0.0;
    double factual_correctness = 0.0;
    std::optional<double> user_satisfaction;
};

struct EvalSummary {
    bool rag = true;
    bool cot = true;
    bool has_condition = false;
    ConditionMetrics condition;
    double completeness = 0.0;
    double coherence = 0.0;
    double content_relevance = 0.0;
    double factual_correctness = 0.0;
    std::optional<double> user_satisfaction;
    double oqs = 0.0;
    long graph_reads = 0; // summed over all retrievals; must be 0 with rag off
    std::vector<CaseOutcome> per_case;
};

std::vector<CaseRecord> load_cases(const std::filesystem::path& dir);
// case_id -> rating in [1, 5]; normalized to [0,1] as (r - 1) / 4.
std::map<std::string, double> load_ratings(const std::filesystem::path& path);

EvalSummary evaluate_dataset(const CorpusStore& store, const InvertedIndex& index,
                             const KnowledgeGraph& graph, const FusionWeights& weights,
                             const std::vector<CaseRecord>& cases,
                             const std::map<std::string, double>& ratings, const Backend& backend,
                             const EvalOptions& options);

std::string summary_to_json(const EvalSummary& summary);

// ---------------------------------------------------------------------------
// Paper-shaped LaTeX tables
// ---------------------------------------------------------------------------

struct QualityRow {
    std::string model;
    double content_relevance = 0.0;
    double factual_correctness = 0.0;
    double completeness = 0.0;
    std::optional<double> user_satisfaction;
};

// Condition identification, F1 unitless (Table 1 layout).
std::string render_condition_table_unitless(
    const std::vector<std::pair<std::string, ConditionMetrics>>& rows);
// Report generation with OQS (Table 2 layout).
std::string render_quality_table_oqs(
    const std::vector<std::tuple<std::string, double, double, double>>& rows);
// Condition identification, F1 in percent (Table 3 layout).
std::string render_condition_table_percent(
    const std::vector<std::pair<std::string, ConditionMetrics>>& rows);
// Report generation C/F/R/U (Table 4 layout). The U column is dropped when no
// row has a user-satisfaction rating.
std::string render_quality_table_cfru(const std::vector<QualityRow>& rows);
// Report generation CR/FC/C/US (Table 5 layout).
std::string render_quality_table_cot(const std::vector<QualityRow>& rows);

} // namespace orthodoc
