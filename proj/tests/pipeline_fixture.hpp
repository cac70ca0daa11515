#pragma once

// Shared end-to-end pipeline runner over the bundled synthetic dataset.
// Used by both the unit pipeline tests and the acceptance suite.

#include <map>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "orthodoc/config.hpp"
#include "orthodoc/eval.hpp"
#include "orthodoc/kgraph.hpp"
#include "orthodoc/report.hpp"
#include "orthodoc/retrieval.hpp"

namespace testutil {

struct PipelineArtifacts {
    orthodoc::CorpusStore store;
    orthodoc::InvertedIndex index;
    orthodoc::KnowledgeGraph graph;
    orthodoc::FusionWeights weights;
    std::vector<double> loss_trace;
    std::vector<orthodoc::CaseRecord> cases;
    std::map<std::string, double> ratings;
};

// Builds store, index, graph and trains the fusion head with the engine's
// built-in defaults.
inline PipelineArtifacts build_pipeline_artifacts() {
    using namespace orthodoc;
    const auto data = synthetic_dir();

    PipelineArtifacts a;
    a.store = build_store(load_corpus(data / "corpus.jsonl"), 256, 32);
    a.index = build_index(a.store);
    a.graph = build_graph(a.store, load_lexicon(data / "lexicon.jsonl"), 12);
    a.cases = load_cases(data / "cases");
    a.ratings = load_ratings(data / "ratings.json");

    EngineConfig cfg;
    std::vector<std::pair<FusionExample, int>> dataset;
    std::map<std::string, int> label_index;
    for (int i = 0; i < static_cast<int>(cfg.fusion.class_labels.size()); ++i)
        label_index[cfg.fusion.class_labels[static_cast<std::size_t>(i)]] = i;
    for (const auto& c : a.cases)
        dataset.emplace_back(case_to_fusion_example(c), label_index.at(*c.ground_truth));

    TrainConfig tc;
    tc.lr = cfg.fusion.lr;
    tc.epochs = cfg.fusion.epochs;
    tc.seed = cfg.fusion.seed;
    tc.d = cfg.fusion.d;
    tc.class_labels = cfg.fusion.class_labels;
    TrainResult trained = train_head(dataset, tc);
    a.weights = std::move(trained.weights);
    a.loss_trace = std::move(trained.loss_trace);
    return a;
}

inline orthodoc::ConditionPrediction predict(const PipelineArtifacts& a,
                                             const orthodoc::CaseRecord& c) {
    using namespace orthodoc;
    auto emb = embed_text(case_fusion_text(c), a.weights.d, a.weights.embed_seed);
    return classify(cross_modal_attention(emb, c.image_patches, a.weights), a.weights);
}

// Plan, draft, synthesize, verify for one case with the given backend.
inline orthodoc::Report make_verified_report(const PipelineArtifacts& a,
                                             const orthodoc::CaseRecord& c,
                                             const orthodoc::Backend& backend,
                                             orthodoc::ReportPlan* plan_out = nullptr,
                                             double tau = 0.3) {
    using namespace orthodoc;
    ReportPlan plan = plan_report(c, predict(a, c), a.graph, a.index, a.store);
    Report report =
        verify_grounding(build_report(plan, backend), a.store, tau, VerifyPolicy::strict);
    if (plan_out) *plan_out = std::move(plan);
    return report;
}

} // namespace testutil
