#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <json.hpp>

#include "orthodoc/config.hpp"
#include "orthodoc/corpus.hpp"
#include "orthodoc/errors.hpp"
#include "orthodoc/eval.hpp"
#include "orthodoc/fusion.hpp"
#include "orthodoc/kgraph.hpp"
#include "orthodoc/rand.hpp"
#include "orthodoc/report.hpp"
#include "orthodoc/retrieval.hpp"
#include "orthodoc/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace orthodoc;

namespace {

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

std::unique_ptr<Backend> make_backend(const EngineConfig& cfg) {
    if (cfg.backend.kind == "template") return std::make_unique<TemplateBackend>();
    HttpBackendConfig http;
    http.base_url = cfg.backend.url;
    if (http.base_url.empty()) {
        const char* env = std::getenv("ORTHODOC_BACKEND_URL");
        if (env) http.base_url = env;
    }
    http.api_key = cfg.backend.key;
    if (http.api_key.empty()) {
        const char* env = std::getenv("ORTHODOC_BACKEND_KEY");
        if (env) http.api_key = env;
    }
    http.max_in_flight = cfg.concurrency_cap;
    return std::make_unique<HttpBackend>(http);
}

struct DatasetArtifacts {
    CorpusStore store;
    InvertedIndex index;
    KnowledgeGraph graph;
    FusionWeights weights;
    std::vector<CaseRecord> cases;
    std::map<std::string, double> ratings;
};

DatasetArtifacts load_dataset(const fs::path& dir, const EngineConfig& cfg,
                              const std::string& graph_path, const std::string& weights_path,
                              const std::string& ratings_path) {
    DatasetArtifacts a;
    a.store = build_store(load_corpus(dir / "corpus.jsonl"), cfg.chunking.max_tokens,
                          cfg.chunking.overlap_tokens);
    a.index = build_index(a.store);
    GraphLoad gl = load_graph(graph_path, a.store.fingerprint);
    for (const auto& w : gl.warnings) std::cerr << "warning: " << w << "\n";
    a.graph = std::move(gl.graph);
    a.weights = load_weights(weights_path);
    a.cases = load_cases(dir / "cases");
    if (!ratings_path.empty()) {
        a.ratings = load_ratings(ratings_path);
    } else if (fs::exists(dir / "ratings.json")) {
        a.ratings = load_ratings(dir / "ratings.json");
    }
    return a;
}

ConditionPrediction predict_case(const CaseRecord& c, const FusionWeights& weights) {
    auto emb = embed_text(case_fusion_text(c), weights.d, weights.embed_seed);
    return classify(cross_modal_attention(emb, c.image_patches, weights), weights);
}

// Prefer the saved index when it matches the store; otherwise build fresh.
InvertedIndex index_for(const CorpusStore& store, const EngineConfig& cfg) {
    const fs::path path = cfg.index_path();
    if (fs::exists(path)) {
        InvertedIndex idx = load_index(path);
        if (idx.fingerprint == store.fingerprint) return idx;
        std::cerr << "warning: " << path.string()
                  << " was built from a different store; rebuilding in memory\n";
    }
    return build_index(store);
}

int run(int argc, char** argv) {
    CLI::App app{"OrthoDoc: retrieval-augmented orthopedic report generation engine"};
    app.fallthrough();

    std::string config_path;
    bool print_config = false;
    app.add_option("--config", config_path, "JSON config file (flags override it)");
    app.add_flag("--print-config", print_config, "print the effective config and exit");
    app.set_version_flag("--version", std::string("orthodoc ") + kEngineVersion +
                                          " (config schema " +
                                          std::to_string(kConfigSchemaVersion) + ")");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "chunk a JSONL corpus into a store directory");
    std::string ingest_corpus, ingest_out;
    ingest->add_option("corpus", ingest_corpus, "corpus.jsonl")->required();
    ingest->add_option("--out", ingest_out, "store directory")->required();

    // build-graph
    auto* bgraph = app.add_subcommand("build-graph", "build the knowledge graph from a store");
    std::string bg_store, bg_lexicon, bg_out;
    int bg_window = 12;
    bgraph->add_option("--store", bg_store, "store directory");
    bgraph->add_option("--lexicon", bg_lexicon, "lexicon JSONL")->required();
    bgraph->add_option("--out", bg_out, "output graph.json")->required();
    bgraph->add_option("--window", bg_window, "co-occurrence window in tokens");

    // index
    auto* index_cmd = app.add_subcommand("index", "build the inverted index for a store");
    std::string ix_store, ix_out;
    index_cmd->add_option("--store", ix_store, "store directory");
    index_cmd->add_option("--out", ix_out, "output index.json (default <store>/index.json)");

    // train-head
    auto* train = app.add_subcommand("train-head", "train fusion + classifier weights");
    std::string tr_data, tr_out;
    double tr_lr = -1.0;
    int tr_epochs = -1;
    std::uint64_t tr_seed = 0;
    train->add_option("--data", tr_data, "dataset directory (expects cases/)")->required();
    train->add_option("--out", tr_out, "output weights.json")->required();
    train->add_option("--lr", tr_lr, "learning rate");
    train->add_option("--epochs", tr_epochs, "training epochs");
    auto* tr_seed_opt = train->add_option("--seed", tr_seed, "weight init / embedder seed");

    // diagnose
    auto* diagnose = app.add_subcommand("diagnose", "classify a single case");
    std::string dg_case, dg_weights, dg_out;
    diagnose->add_option("case", dg_case, "case.json")->required();
    diagnose->add_option("--weights", dg_weights, "weights.json");
    diagnose->add_option("--out", dg_out, "write prediction JSON here instead of stdout");

    // retrieve
    auto* retrieve_cmd = app.add_subcommand("retrieve", "query the store with graph expansion");
    std::string rt_store, rt_graph, rt_query, rt_out;
    int rt_k = -1, rt_depth = -1;
    retrieve_cmd->add_option("--store", rt_store, "store directory");
    retrieve_cmd->add_option("--graph", rt_graph, "graph.json");
    retrieve_cmd->add_option("--query", rt_query, "query text")->required();
    retrieve_cmd->add_option("-k", rt_k, "results to return");
    retrieve_cmd->add_option("--depth", rt_depth, "graph expansion depth");
    retrieve_cmd->add_option("--out", rt_out, "write JSON lines here instead of stdout");

    // report
    auto* report_cmd = app.add_subcommand("report", "generate a verified report for a case");
    std::string rp_case, rp_out, rp_backend, rp_policy, rp_store, rp_graph, rp_weights, rp_date;
    double rp_tau = -1.0;
    report_cmd->add_option("case", rp_case, "case.json")->required();
    report_cmd->add_option("--out", rp_out, "output .tex path (report.json written alongside)");
    auto* rp_backend_opt = report_cmd->add_option("--backend", rp_backend, "template | http");
    auto* rp_policy_opt = report_cmd->add_option("--policy", rp_policy, "strict | lenient");
    auto* rp_tau_opt = report_cmd->add_option("--tau", rp_tau, "grounding threshold");
    report_cmd->add_option("--store", rp_store, "store directory");
    report_cmd->add_option("--graph", rp_graph, "graph.json");
    report_cmd->add_option("--weights", rp_weights, "weights.json");
    auto* rp_date_opt = report_cmd->add_option("--date", rp_date, "report date string");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "run the evaluation harness on a dataset");
    std::string ev_dir, ev_weights, ev_graph, ev_ratings, ev_out, ev_predictions;
    std::string ev_model_name = "External";
    eval_cmd->add_option("dataset", ev_dir, "dataset directory")->required();
    eval_cmd->add_option("--weights", ev_weights, "weights.json");
    eval_cmd->add_option("--graph", ev_graph, "graph.json");
    eval_cmd->add_option("--ratings", ev_ratings, "ratings.json (user satisfaction)");
    eval_cmd->add_option("--out", ev_out, "output prefix for summary/tables");
    eval_cmd->add_option("--predictions", ev_predictions,
                         "score an external system's predictions (case_id -> label JSON)");
    eval_cmd->add_option("--model-name", ev_model_name, "row label for --predictions tables");

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "run RAG / CoT ablations on a dataset");
    std::string ab_dir, ab_weights, ab_graph, ab_ratings, ab_out, ab_variants = "rag,cot";
    ablate_cmd->add_option("dataset", ab_dir, "dataset directory")->required();
    ablate_cmd->add_option("--weights", ab_weights, "weights.json");
    ablate_cmd->add_option("--graph", ab_graph, "graph.json");
    ablate_cmd->add_option("--ratings", ab_ratings, "ratings.json");
    ablate_cmd->add_option("--variants", ab_variants, "comma list: rag,cot");
    ablate_cmd->add_option("--out", ab_out, "output prefix for summaries/tables");

    app.require_subcommand(0, 1);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e); // prints help or the error
        return code == 0 ? 0 : 1;    // exit-code contract: validation errors are 1
    }

    EngineConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);

    // flags > config file > defaults
    if (rp_backend_opt->count()) cfg.backend.kind = rp_backend;
    if (rp_policy_opt->count()) cfg.report.policy = rp_policy;
    if (rp_tau_opt->count()) cfg.report.tau = rp_tau;
    if (rp_date_opt->count()) cfg.report.date = rp_date;
    if (tr_lr >= 0.0) cfg.fusion.lr = tr_lr;
    if (tr_epochs >= 0) cfg.fusion.epochs = tr_epochs;
    if (tr_seed_opt->count()) cfg.fusion.seed = tr_seed;
    if (rt_k >= 1) cfg.retrieval.k = rt_k;
    if (rt_depth >= 0) cfg.retrieval.depth = rt_depth;
    auto pick = [](const std::string& flag, const std::string& from_config) {
        return flag.empty() ? from_config : flag;
    };
    cfg.paths.store = pick(!bg_store.empty()   ? bg_store
                           : !ix_store.empty() ? ix_store
                           : !rt_store.empty() ? rt_store
                                               : rp_store,
                           cfg.paths.store);
    cfg.paths.graph = pick(!bg_out.empty()     ? bg_out
                           : !rt_graph.empty() ? rt_graph
                           : !rp_graph.empty() ? rp_graph
                           : !ev_graph.empty() ? ev_graph
                                               : ab_graph,
                           cfg.paths.graph);
    cfg.paths.weights = pick(!dg_weights.empty()   ? dg_weights
                             : !rp_weights.empty() ? rp_weights
                             : !ev_weights.empty() ? ev_weights
                                                   : ab_weights,
                             cfg.paths.weights);
    validate_config(cfg);

    if (print_config) {
        std::cout << config_to_json(cfg);
        return 0;
    }

    if (ingest->parsed()) {
        CorpusStore store = build_store(load_corpus(ingest_corpus), cfg.chunking.max_tokens,
                                        cfg.chunking.overlap_tokens);
        save_store(store, ingest_out);
        std::cerr << "ingested " << store.documents.size() << " documents into "
                  << store.passages.size() << " passages (fingerprint " << to_hex(store.fingerprint)
                  << ")\n";
        return 0;
    }

    if (bgraph->parsed()) {
        CorpusStore store = load_store(cfg.paths.store);
        KnowledgeGraph graph = build_graph(store, load_lexicon(bg_lexicon), bg_window);
        save_graph(graph, bg_out);
        std::cerr << "built graph: " << graph.entities.size() << " entities, "
                  << graph.relations.size() << " relations\n";
        return 0;
    }

    if (index_cmd->parsed()) {
        CorpusStore store = load_store(cfg.paths.store);
        InvertedIndex index = build_index(store);
        const std::string out = ix_out.empty() ? cfg.index_path() : ix_out;
        save_index(index, out);
        std::cerr << "indexed " << index.passage_count << " passages, " << index.postings.size()
                  << " terms\n";
        return 0;
    }

    if (train->parsed()) {
        auto cases = load_cases(fs::path(tr_data) / "cases");
        std::vector<std::pair<FusionExample, int>> dataset;
        std::map<std::string, int> label_index;
        for (int i = 0; i < static_cast<int>(cfg.fusion.class_labels.size()); ++i)
            label_index[cfg.fusion.class_labels[static_cast<std::size_t>(i)]] = i;
        for (const auto& c : cases) {
            if (!c.ground_truth)
                throw ValidationError("train-head: case " + c.case_id + " has no ground_truth");
            auto it = label_index.find(*c.ground_truth);
            if (it == label_index.end())
                throw ValidationError("train-head: case " + c.case_id + " label \"" +
                                      *c.ground_truth + "\" not in class set");
            dataset.emplace_back(case_to_fusion_example(c), it->second);
        }
        TrainConfig tc;
        tc.lr = cfg.fusion.lr;
        tc.epochs = cfg.fusion.epochs;
        tc.seed = cfg.fusion.seed;
        tc.d = cfg.fusion.d;
        tc.class_labels = cfg.fusion.class_labels;
        TrainResult result = train_head(dataset, tc);
        save_weights(result.weights, tr_out);
        std::cerr << "trained " << result.loss_trace.size() - 1 << " epochs; loss "
                  << result.loss_trace.front() << " -> " << result.loss_trace.back() << "\n";
        return 0;
    }

    if (diagnose->parsed()) {
        CaseRecord c = load_case(dg_case);
        FusionWeights weights = load_weights(cfg.paths.weights);
        ConditionPrediction pred = predict_case(c, weights);
        json out{{"case_id", c.case_id},
                 {"predicted", pred.predicted},
                 {"probabilities", pred.probabilities},
                 {"class_labels", pred.class_labels}};
        const std::string text = out.dump(2) + "\n";
        if (dg_out.empty())
            std::cout << text;
        else
            write_file(dg_out, text);
        return 0;
    }

    if (retrieve_cmd->parsed()) {
        CorpusStore store = load_store(cfg.paths.store);
        InvertedIndex index = index_for(store, cfg);
        GraphLoad gl = load_graph(cfg.paths.graph, store.fingerprint);
        for (const auto& w : gl.warnings) std::cerr << "warning: " << w << "\n";
        Query q;
        q.text = rt_query;
        q.k = cfg.retrieval.k;
        q.expansion_depth = cfg.retrieval.depth;
        RetrievalResult result = retrieve(q, index, gl.graph, cfg.retrieval.k1, cfg.retrieval.b);
        std::ostringstream lines;
        for (const auto& sp : result.ranked) {
            json line{{"passage_id", sp.passage_id},
                      {"score", sp.score},
                      {"matched_terms", sp.matched_terms},
                      {"via_entities", sp.via_entities}};
            lines << line.dump() << "\n";
        }
        if (rt_out.empty())
            std::cout << lines.str();
        else
            write_file(rt_out, lines.str());
        return 0;
    }

    if (report_cmd->parsed()) {
        CaseRecord c = load_case(rp_case);
        CorpusStore store = load_store(cfg.paths.store);
        InvertedIndex index = index_for(store, cfg);
        GraphLoad gl = load_graph(cfg.paths.graph, store.fingerprint);
        for (const auto& w : gl.warnings) std::cerr << "warning: " << w << "\n";
        FusionWeights weights = load_weights(cfg.paths.weights);

        ConditionPrediction pred = predict_case(c, weights);
        PlanOptions po;
        po.k = cfg.retrieval.k;
        po.depth = cfg.retrieval.depth;
        ReportPlan plan = plan_report(c, pred, gl.graph, index, store, po);
        for (const auto& w : plan.warnings) std::cerr << "warning: " << w << "\n";

        auto backend = make_backend(cfg);
        Report report = build_report(plan, *backend, cfg.concurrency_cap);
        report.date = cfg.report.date;
        const VerifyPolicy policy =
            cfg.report.policy == "strict" ? VerifyPolicy::strict : VerifyPolicy::lenient;
        report = verify_grounding(std::move(report), store, cfg.report.tau, policy);

        const std::string tex = emit_latex(report, cfg.report.template_id);
        if (rp_out.empty()) {
            std::cout << tex;
        } else {
            write_file(rp_out, tex);
            fs::path json_path = fs::path(rp_out).replace_extension(".json");
            save_report_json(report, plan, json_path);
            std::cerr << "wrote " << rp_out << " and " << json_path.string() << "\n";
        }
        return 0;
    }

    if (eval_cmd->parsed() && !ev_predictions.empty()) {
        // Score a third-party system's prediction file in the same tables.
        auto cases = load_cases(fs::path(ev_dir) / "cases");
        std::ifstream in(ev_predictions);
        if (!in) throw ValidationError("predictions file not found: " + ev_predictions);
        json preds_json;
        try {
            in >> preds_json;
        } catch (const json::exception& e) {
            throw ValidationError("predictions parse error: " + std::string(e.what()));
        }
        std::vector<std::string> predictions, truths;
        for (const auto& c : cases) {
            if (!c.ground_truth) continue;
            if (!preds_json.contains(c.case_id))
                throw ValidationError("predictions file missing case " + c.case_id);
            predictions.push_back(preds_json[c.case_id].get<std::string>());
            truths.push_back(*c.ground_truth);
        }
        ConditionMetrics metrics =
            condition_metrics(confusion_matrix(predictions, truths, cfg.fusion.class_labels));
        std::string table = render_condition_table_unitless({{ev_model_name, metrics}});
        json summary{{"model", ev_model_name},
                     {"accuracy", metrics.accuracy},
                     {"macro_sensitivity", metrics.macro_sensitivity},
                     {"macro_specificity", metrics.macro_specificity},
                     {"macro_f1", metrics.macro_f1},
                     {"macro_f1_percent", metrics.macro_f1 * 100.0}};
        if (ev_out.empty()) {
            std::cout << summary.dump(2) << "\n\n" << table;
        } else {
            write_file(ev_out + "_summary.json", summary.dump(2) + "\n");
            write_file(ev_out + "_condition.tex", table);
            std::cerr << "wrote " << ev_out << "_summary.json and table\n";
        }
        return 0;
    }

    if (eval_cmd->parsed()) {
        DatasetArtifacts a =
            load_dataset(ev_dir, cfg, cfg.paths.graph, cfg.paths.weights, ev_ratings);
        auto backend = make_backend(cfg);
        EvalOptions options;
        options.k = cfg.retrieval.k;
        options.depth = cfg.retrieval.depth;
        options.tau = cfg.report.tau;
        options.policy =
            cfg.report.policy == "strict" ? VerifyPolicy::strict : VerifyPolicy::lenient;
        EvalSummary summary = evaluate_dataset(a.store, a.index, a.graph, a.weights, a.cases,
                                               a.ratings, *backend, options);

        std::string table1, table2;
        if (summary.has_condition)
            table1 = render_condition_table_unitless({{"OrthoDoc", summary.condition}});
        table2 = render_quality_table_oqs(
            {{"OrthoDoc", summary.completeness, summary.coherence, summary.oqs}});

        if (ev_out.empty()) {
            std::cout << summary_to_json(summary);
            if (!table1.empty()) std::cout << "\n" << table1;
            std::cout << "\n" << table2;
        } else {
            write_file(ev_out + "_summary.json", summary_to_json(summary));
            if (!table1.empty()) write_file(ev_out + "_condition.tex", table1);
            write_file(ev_out + "_quality.tex", table2);
            std::cerr << "wrote " << ev_out << "_summary.json and tables\n";
        }
        return 0;
    }

    if (ablate_cmd->parsed()) {
        DatasetArtifacts a =
            load_dataset(ab_dir, cfg, cfg.paths.graph, cfg.paths.weights, ab_ratings);
        auto backend = make_backend(cfg);
        EvalOptions base;
        base.k = cfg.retrieval.k;
        base.depth = cfg.retrieval.depth;
        base.tau = cfg.report.tau;
        base.policy = cfg.report.policy == "strict" ? VerifyPolicy::strict : VerifyPolicy::lenient;

        const bool want_rag = ab_variants.find("rag") != std::string::npos;
        const bool want_cot = ab_variants.find("cot") != std::string::npos;
        if (!want_rag && !want_cot)
            throw ValidationError("ablate: --variants must name rag and/or cot");

        json out_json;
        std::ostringstream stdout_text;
        auto quality_row = [](const std::string& name, const EvalSummary& s) {
            QualityRow row;
            row.model = name;
            row.content_relevance = s.content_relevance;
            row.factual_correctness = s.factual_correctness;
            row.completeness = s.completeness;
            row.user_satisfaction = s.user_satisfaction;
            return row;
        };

        // paired bootstrap over per-case scores, seeded for reproducibility
        auto paired_bootstrap = [](const EvalSummary& on, const EvalSummary& off,
                                   auto metric_of, const char* metric_name) {
            std::vector<double> a_scores, b_scores;
            for (std::size_t i = 0; i < on.per_case.size(); ++i) {
                a_scores.push_back(metric_of(on.per_case[i]));
                b_scores.push_back(metric_of(off.per_case[i]));
            }
            BootstrapResult r = bootstrap_compare(a_scores, b_scores, 1000, 42);
            return json{{"metric", metric_name},
                        {"mean_diff", r.mean_diff},
                        {"ci95_low", r.ci_low},
                        {"ci95_high", r.ci_high},
                        {"resamples", 1000},
                        {"seed", 42}};
        };

        if (want_rag) {
            EvalSummary on = evaluate_dataset(a.store, a.index, a.graph, a.weights, a.cases,
                                              a.ratings, *backend, base);
            EvalOptions off_options = base;
            off_options.rag = false;
            EvalSummary off = evaluate_dataset(a.store, a.index, a.graph, a.weights, a.cases,
                                               a.ratings, *backend, off_options);
            std::string cond = render_condition_table_percent(
                {{"OrthoDoc (RAG)", on.condition}, {"OrthoDoc (No RAG)", off.condition}});
            std::string quality = render_quality_table_cfru(
                {quality_row("OrthoDoc (RAG)", on), quality_row("OrthoDoc (No RAG)", off)});
            out_json["rag"] = {{"on", json::parse(summary_to_json(on))},
                               {"off", json::parse(summary_to_json(off))},
                               {"bootstrap",
                                paired_bootstrap(
                                    on, off,
                                    [](const CaseOutcome& c) { return c.factual_correctness; },
                                    "factual_correctness")}};
            if (ab_out.empty()) {
                stdout_text << cond << "\n" << quality << "\n";
            } else {
                write_file(ab_out + "_rag_condition.tex", cond);
                write_file(ab_out + "_rag_quality.tex", quality);
            }
        }
        if (want_cot) {
            EvalSummary on = evaluate_dataset(a.store, a.index, a.graph, a.weights, a.cases,
                                              a.ratings, *backend, base);
            EvalOptions off_options = base;
            off_options.cot = false;
            EvalSummary off = evaluate_dataset(a.store, a.index, a.graph, a.weights, a.cases,
                                               a.ratings, *backend, off_options);
            std::string quality = render_quality_table_cot(
                {quality_row("OrthoDoc (CoT)", on), quality_row("OrthoDoc (No CoT)", off)});
            out_json["cot"] = {{"on", json::parse(summary_to_json(on))},
                               {"off", json::parse(summary_to_json(off))},
                               {"bootstrap",
                                paired_bootstrap(
                                    on, off,
                                    [](const CaseOutcome& c) { return c.completeness; },
                                    "completeness")}};
            if (ab_out.empty()) {
                stdout_text << quality << "\n";
            } else {
                write_file(ab_out + "_cot_quality.tex", quality);
            }
        }

        if (ab_out.empty()) {
            std::cout << out_json.dump(2) << "\n" << stdout_text.str();
        } else {
            write_file(ab_out + "_summary.json", out_json.dump(2) + "\n");
            std::cerr << "wrote " << ab_out << "_summary.json and tables\n";
        }
        return 0;
    }

    std::cerr << app.help();
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
