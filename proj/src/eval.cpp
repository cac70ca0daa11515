#include "orthodoc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "orthodoc/errors.hpp"
#include "orthodoc/rand.hpp"

using json = nlohmann::json;

namespace orthodoc {
namespace {

std::string fmt(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

std::vector<std::string> claim_tokens_union(const Section& section, bool skip_removed = true) {
    std::set<std::string> tokens;
    for (const auto& claim : section.claims) {
        if (skip_removed && claim.status == ClaimStatus::removed) continue;
        for (const auto& t : content_token_set(claim.sentence)) tokens.insert(t);
    }
    return {tokens.begin(), tokens.end()};
}

double jaccard_sorted(const std::vector<std::string>& a, const std::vector<std::string>& b) {
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

long ConfusionMatrix::total() const {
    long t = 0;
    for (const auto& row : counts)
        for (long v : row) t += v;
    return t;
}

ConfusionMatrix confusion_matrix(const std::vector<std::string>& predictions,
                                 const std::vector<std::string>& labels,
                                 const std::vector<std::string>& classes) {
    if (predictions.size() != labels.size())
        throw ValidationError("confusion_matrix: predictions and labels differ in length");
    std::map<std::string, int> index;
    for (int i = 0; i < static_cast<int>(classes.size()); ++i) index[classes[static_cast<std::size_t>(i)]] = i;

    ConfusionMatrix m;
    m.classes = classes;
    m.counts.assign(classes.size(), std::vector<long>(classes.size(), 0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto t = index.find(labels[i]);
        auto p = index.find(predictions[i]);
        if (t == index.end())
            throw ValidationError("confusion_matrix: unknown truth label \"" + labels[i] + "\"");
        if (p == index.end())
            throw ValidationError("confusion_matrix: unknown predicted label \"" + predictions[i] +
                                  "\"");
        ++m.counts[static_cast<std::size_t>(t->second)][static_cast<std::size_t>(p->second)];
    }
    return m;
}

ConditionMetrics condition_metrics(const ConfusionMatrix& matrix) {
    const std::size_t C = matrix.classes.size();
    if (C == 0 || matrix.counts.size() != C)
        throw ValidationError("condition_metrics: empty or malformed matrix");
    const double total = static_cast<double>(matrix.total());
    if (total <= 0.0) throw ValidationError("condition_metrics: matrix has no observations");

    ConditionMetrics out;
    double trace = 0.0;
    for (std::size_t c = 0; c < C; ++c) trace += static_cast<double>(matrix.counts[c][c]);
    out.accuracy = trace / total;

    for (std::size_t c = 0; c < C; ++c) {
        double tp = static_cast<double>(matrix.counts[c][c]);
        double fn = 0.0, fp = 0.0;
        for (std::size_t j = 0; j < C; ++j) {
            if (j == c) continue;
            fn += static_cast<double>(matrix.counts[c][j]);
            fp += static_cast<double>(matrix.counts[j][c]);
        }
        const double tn = total - tp - fn - fp;

        PerClassMetrics pc;
        pc.label = matrix.classes[c];
        bool deg = false;
        pc.sensitivity = (tp + fn) > 0.0 ? tp / (tp + fn) : (deg = true, 0.0);
        pc.specificity = (tn + fp) > 0.0 ? tn / (tn + fp) : (deg = true, 0.0);
        pc.precision = (tp + fp) > 0.0 ? tp / (tp + fp) : (deg = true, 0.0);
        pc.f1 = (pc.precision + pc.sensitivity) > 0.0
                    ? 2.0 * pc.precision * pc.sensitivity / (pc.precision + pc.sensitivity)
                    : (deg = true, 0.0);
        pc.degenerate = deg;
        out.degenerate |= deg;

        out.macro_sensitivity += pc.sensitivity;
        out.macro_specificity += pc.specificity;
        out.macro_f1 += pc.f1;
        out.per_class.push_back(std::move(pc));
    }
    out.macro_sensitivity /= static_cast<double>(C);
    out.macro_specificity /= static_cast<double>(C);
    out.macro_f1 /= static_cast<double>(C);
    return out;
}

double completeness(const Report& report) {
    int score = 0;
    for (const auto& section : report.sections) {
        bool present = false, supported = false;
        for (const auto& claim : section.claims) {
            if (claim.status == ClaimStatus::removed) continue;
            present = true;
            if (claim.status == ClaimStatus::supported) supported = true;
        }
        if (!present) continue;
        if (is_evidence_bearing(section.kind) && !supported) continue;
        ++score;
    }
    return static_cast<double>(score) / 7.0;
}

double coherence(const Report& report) {
    // (a) canonical order
    double order_ok = 1.0;
    if (report.sections.size() != kAllSections.size()) {
        order_ok = 0.0;
    } else {
        for (std::size_t i = 0; i < kAllSections.size(); ++i)
            if (report.sections[i].kind != kAllSections[i]) order_ok = 0.0;
    }

    // (b) token continuity across sections
    double shared = 0.0;
    int considered = 0;
    std::set<std::string> earlier;
    for (std::size_t i = 0; i < report.sections.size(); ++i) {
        auto tokens = claim_tokens_union(report.sections[i]);
        if (i > 0) {
            ++considered;
            for (const auto& t : tokens) {
                if (earlier.count(t)) {
                    shared += 1.0;
                    break;
                }
            }
        }
        earlier.insert(tokens.begin(), tokens.end());
    }
    const double continuity = considered > 0 ? shared / considered : 0.0;

    // (c) the diagnosis makes it into the treatment plan
    double cond_in_treatment = 0.0;
    std::string cond = report.prediction.predicted;
    std::replace(cond.begin(), cond.end(), '_', ' ');
    for (char& ch : cond)
        if (ch >= 'A' && ch <= 'Z') ch += 32;
    for (const auto& section : report.sections) {
        if (section.kind != SectionKind::treatment_plan) continue;
        for (const auto& claim : section.claims) {
            if (claim.status == ClaimStatus::removed) continue;
            std::string low = claim.sentence;
            for (char& ch : low)
                if (ch >= 'A' && ch <= 'Z') ch += 32;
            if (!cond.empty() && low.find(cond) != std::string::npos) cond_in_treatment = 1.0;
        }
    }

    return (order_ok + continuity + cond_in_treatment) / 3.0;
}

double factual_correctness(const Report& report, bool* degenerate) {
    long total = 0, supported = 0;
    for (const auto& section : report.sections) {
        for (const auto& claim : section.claims) {
            if (claim.kind != ClaimKind::factual) continue;
            ++total;
            if (claim.status == ClaimStatus::supported) ++supported;
        }
    }
    if (degenerate) *degenerate = total == 0;
    if (total == 0) return 1.0; // nothing factual was claimed
    return static_cast<double>(supported) / static_cast<double>(total);
}

double content_relevance(const Report& report, const ReportPlan& plan) {
    double sum = 0.0;
    int considered = 0;
    for (const auto& section : report.sections) {
        if (!is_evidence_bearing(section.kind)) continue;
        ++considered;
        auto section_tokens = claim_tokens_union(section);

        std::set<std::string> retrieved;
        for (const auto& sp : plan.sections) {
            if (sp.kind != section.kind) continue;
            for (const auto& scored : sp.retrieval.ranked) {
                auto it = plan.passage_texts.find(scored.passage_id);
                if (it == plan.passage_texts.end()) continue;
                for (const auto& t : content_token_set(it->second)) retrieved.insert(t);
            }
        }
        std::vector<std::string> retrieved_sorted(retrieved.begin(), retrieved.end());
        sum += jaccard_sorted(section_tokens, retrieved_sorted);
    }
    return considered > 0 ? sum / considered : 0.0;
}

double overall_quality(double completeness, double coherence, double content_relevance,
                       double factual_correctness) {
    const double mean = (completeness + coherence + content_relevance + factual_correctness) / 4.0;
    return 1.0 + 9.0 * mean;
}

BootstrapResult bootstrap_compare(const std::vector<double>& scores_a,
                                  const std::vector<double>& scores_b, int resamples,
                                  std::uint64_t seed) {
    if (scores_a.size() != scores_b.size())
        throw ValidationError("bootstrap_compare: paired score lists differ in length");
    if (scores_a.size() < 5) throw ValidationError("bootstrap_compare: need >= 5 pairs");
    if (resamples < 100) throw ValidationError("bootstrap_compare: need >= 100 resamples");

    const std::size_t n = scores_a.size();
    std::vector<double> diffs(n);
    double mean_diff = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        diffs[i] = scores_a[i] - scores_b[i];
        mean_diff += diffs[i];
    }
    mean_diff /= static_cast<double>(n);

    SplitMix64 gen(seed);
    std::vector<double> means(static_cast<std::size_t>(resamples));
    for (int r = 0; r < resamples; ++r) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += diffs[gen.next_below(n)];
        means[static_cast<std::size_t>(r)] = sum / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());

    const auto rank = [&](double q) {
        auto idx = static_cast<std::size_t>(std::llround(q * (resamples - 1)));
        return means[std::min(idx, means.size() - 1)];
    };
    BootstrapResult out;
    out.mean_diff = mean_diff;
    out.ci_low = std::min(rank(0.025), mean_diff);
    out.ci_high = std::max(rank(0.975), mean_diff);
    return out;
}

// ---------------------------------------------------------------------------
// Dataset runs
// ---------------------------------------------------------------------------

std::vector<CaseRecord> load_cases(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw ValidationError("case directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::vector<CaseRecord> cases;
    cases.reserve(files.size());
    for (const auto& f : files) cases.push_back(load_case(f));
    std::sort(cases.begin(), cases.end(),
              [](const CaseRecord& a, const CaseRecord& b) { return a.case_id < b.case_id; });
    for (std::size_t i = 1; i < cases.size(); ++i)
        if (cases[i].case_id == cases[i - 1].case_id)
            throw ValidationError("duplicate case_id \"" + cases[i].case_id + "\" in " +
                                  dir.string());
    return cases;
}

std::map<std::string, double> load_ratings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("ratings file not found: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("ratings parse error in " + path.string() + ": " + e.what());
    }
    std::map<std::string, double> out;
    for (const auto& [case_id, value] : j.items()) {
        const double r = value.get<double>();
        if (r < 1.0 || r > 5.0)
            throw ValidationError("ratings: case " + case_id + " has rating " + fmt(r, 2) +
                                  " outside [1,5]");
        out[case_id] = (r - 1.0) / 4.0;
    }
    return out;
}

EvalSummary evaluate_dataset(const CorpusStore& store, const InvertedIndex& index,
                             const KnowledgeGraph& graph, const FusionWeights& weights,
                             const std::vector<CaseRecord>& cases,
                             const std::map<std::string, double>& ratings, const Backend& backend,
                             const EvalOptions& options) {
    if (cases.empty()) throw ValidationError("evaluate_dataset: no cases");

    const KnowledgeGraph no_rag_graph = KnowledgeGraph::empty_with_fingerprint(store.fingerprint);
    const KnowledgeGraph& active_graph = options.rag ? graph : no_rag_graph;

    PlanOptions plan_options;
    plan_options.k = options.k;
    plan_options.depth = options.rag ? options.depth : 0;

    EvalSummary summary;
    summary.rag = options.rag;
    summary.cot = options.cot;

    std::vector<std::string> predictions, truths;
    double sum_comp = 0.0, sum_cohe = 0.0, sum_rel = 0.0, sum_fact = 0.0;
    double sum_user = 0.0;
    int user_count = 0;

    // Sequential fold ordered by case_id; cases are pre-sorted by load_cases.
    for (const auto& c : cases) {
        auto fused = cross_modal_attention(embed_text(case_fusion_text(c), weights.d,
                                                      weights.embed_seed),
                                           c.image_patches, weights);
        ConditionPrediction prediction = classify(fused, weights);

        ReportPlan plan = plan_report(c, prediction, active_graph, index, store, plan_options);
        Report report = options.cot ? build_report(plan, backend)
                                    : build_report_single_pass(c, plan, backend);
        report = verify_grounding(std::move(report), store, options.tau, options.policy);

        CaseOutcome outcome;
        outcome.case_id = c.case_id;
        outcome.predicted = prediction.predicted;
        outcome.truth = c.ground_truth;
        outcome.completeness = completeness(report);
        outcome.coherence = coherence(report);
        outcome.content_relevance = content_relevance(report, plan);
        outcome.factual_correctness = factual_correctness(report);
        auto rating = ratings.find(c.case_id);
        if (rating != ratings.end()) {
            outcome.user_satisfaction = rating->second;
            sum_user += rating->second;
            ++user_count;
        }

        sum_comp += outcome.completeness;
        sum_cohe += outcome.coherence;
        sum_rel += outcome.content_relevance;
        sum_fact += outcome.factual_correctness;
        summary.graph_reads += plan.graph_reads;

        if (c.ground_truth) {
            predictions.push_back(prediction.predicted);
            truths.push_back(*c.ground_truth);
        }
        summary.per_case.push_back(std::move(outcome));
    }

    const double n = static_cast<double>(cases.size());
    summary.completeness = sum_comp / n;
    summary.coherence = sum_cohe / n;
    summary.content_relevance = sum_rel / n;
    summary.factual_correctness = sum_fact / n;
    summary.oqs = overall_quality(summary.completeness, summary.coherence,
                                  summary.content_relevance, summary.factual_correctness);
    if (user_count > 0) summary.user_satisfaction = sum_user / user_count;

    if (!truths.empty()) {
        summary.has_condition = true;
        summary.condition =
            condition_metrics(confusion_matrix(predictions, truths, weights.class_labels));
    }
    return summary;
}

std::string summary_to_json(const EvalSummary& summary) {
    json j;
    j["variant"] = {{"rag", summary.rag}, {"cot", summary.cot}};
    if (summary.has_condition) {
        json per_class = json::array();
        for (const auto& pc : summary.condition.per_class)
            per_class.push_back({{"label", pc.label},
                                 {"sensitivity", pc.sensitivity},
                                 {"specificity", pc.specificity},
                                 {"precision", pc.precision},
                                 {"f1", pc.f1},
                                 {"degenerate", pc.degenerate}});
        j["condition"] = {{"accuracy", summary.condition.accuracy},
                          {"macro_sensitivity", summary.condition.macro_sensitivity},
                          {"macro_specificity", summary.condition.macro_specificity},
                          {"macro_f1", summary.condition.macro_f1},
                          {"macro_f1_percent", summary.condition.macro_f1 * 100.0},
                          {"per_class", per_class}};
    }
    j["report_quality"] = {{"completeness", summary.completeness},
                           {"coherence", summary.coherence},
                           {"content_relevance", summary.content_relevance},
                           {"factual_correctness", summary.factual_correctness},
                           {"oqs", summary.oqs}};
    if (summary.user_satisfaction)
        j["report_quality"]["user_satisfaction"] = *summary.user_satisfaction;
    j["graph_reads"] = summary.graph_reads;
    j["per_case"] = json::array();
    for (const auto& outcome : summary.per_case) {
        json o{{"case_id", outcome.case_id},
               {"predicted", outcome.predicted},
               {"completeness", outcome.completeness},
               {"coherence", outcome.coherence},
               {"content_relevance", outcome.content_relevance},
               {"factual_correctness", outcome.factual_correctness}};
        if (outcome.truth) o["truth"] = *outcome.truth;
        if (outcome.user_satisfaction) o["user_satisfaction"] = *outcome.user_satisfaction;
        j["per_case"].push_back(std::move(o));
    }
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

std::string render_condition_table_unitless(
    const std::vector<std::pair<std::string, ConditionMetrics>>& rows) {
    std::ostringstream out;
    out << "\\begin{tabular}{lcccc}\n\\toprule\n";
    out << "\\textbf{Model} & \\textbf{Acc (\\%)} & \\textbf{Sen (\\%)} & \\textbf{Spec (\\%)} & "
           "\\textbf{F1} \\\\\n\\midrule\n";
    for (const auto& [model, m] : rows)
        out << model << " & " << fmt(m.accuracy * 100.0, 2) << " & "
            << fmt(m.macro_sensitivity * 100.0, 2) << " & " << fmt(m.macro_specificity * 100.0, 2)
            << " & " << fmt(m.macro_f1, 2) << " \\\\\n";
    out << "\\bottomrule\n\\end{tabular}\n";
    return out.str();
}

std::string render_quality_table_oqs(
    const std::vector<std::tuple<std::string, double, double, double>>& rows) {
    std::ostringstream out;
    // Column spec mirrors the paper's table, including its extra 'c'.
    out << "\\begin{tabular}{lcccc}\n\\toprule\n";
    out << "\\textbf{Model} & \\textbf{Comp (\\%)} & \\textbf{Cohe (\\%)} & \\textbf{OQS (1-10)} "
           "\\\\\n\\midrule\n";
    for (const auto& [model, comp, cohe, oqs] : rows)
        out << model << " & " << fmt(comp * 100.0, 2) << " & " << fmt(cohe * 100.0, 2) << " & "
            << fmt(oqs, 1) << " \\\\\n";
    out << "\\bottomrule\n\\end{tabular}\n";
    return out.str();
}

std::string render_condition_table_percent(
    const std::vector<std::pair<std::string, ConditionMetrics>>& rows) {
    std::ostringstream out;
    out << "\\begin{tabular}{lcccc}\n\\toprule\n";
    out << "\\textbf{Model} & \\textbf{Acc} (\\%) & \\textbf{Sen} (\\%) & \\textbf{Spe} (\\%) & "
           "\\textbf{F1} (\\%) \\\\\n\\midrule\n";
    for (const auto& [model, m] : rows)
        out << model << " & " << fmt(m.accuracy * 100.0, 2) << " & "
            << fmt(m.macro_sensitivity * 100.0, 2) << " & " << fmt(m.macro_specificity * 100.0, 2)
            << " & " << fmt(m.macro_f1 * 100.0, 2) << " \\\\\n";
    out << "\\bottomrule\n\\end{tabular}\n";
    return out.str();
}

namespace {

std::string render_quality_rows(const std::vector<QualityRow>& rows,
                                const std::array<const char*, 4>& headers) {
    bool with_user = false;
    for (const auto& r : rows) with_user |= r.user_satisfaction.has_value();

    std::ostringstream out;
    out << "\\begin{tabular}{l" << (with_user ? "cccc" : "ccc") << "}\n\\toprule\n";
    out << "\\textbf{Model} & " << headers[0] << " & " << headers[1] << " & " << headers[2];
    if (with_user) out << " & " << headers[3];
    out << " \\\\\n\\midrule\n";
    for (const auto& r : rows) {
        out << r.model << " & " << fmt(r.content_relevance * 100.0, 2) << " & "
            << fmt(r.factual_correctness * 100.0, 2) << " & " << fmt(r.completeness * 100.0, 2);
        if (with_user)
            out << " & " << (r.user_satisfaction ? fmt(*r.user_satisfaction * 100.0, 2) : "--");
        out << " \\\\\n";
    }
    out << "\\bottomrule\n\\end{tabular}\n";
    return out.str();
}

} // namespace

std::string render_quality_table_cfru(const std::vector<QualityRow>& rows) {
    return render_quality_rows(rows, {"\\textbf{C} (\\%)", "\\textbf{F} (\\%)", "\\textbf{R} (\\%)",
                                      "\\textbf{U} (\\%)"});
}

std::string render_quality_table_cot(const std::vector<QualityRow>& rows) {
    return render_quality_rows(rows, {"\\textbf{CR (\\%)}", "\\textbf{FC (\\%)}",
                                      "\\textbf{C (\\%)}", "\\textbf{US (\\%)}"});
}

} // namespace orthodoc
