// Acceptance suite: runs every release gate end to end and prints one
// PASS/FAIL line per criterion. Exit code is the number of failed criteria.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "helpers.hpp"
#include "oracles.hpp"
#include "pipeline_fixture.hpp"
#include "orthodoc/backend.hpp"
#include "orthodoc/config.hpp"
#include "orthodoc/errors.hpp"
#include "orthodoc/eval.hpp"
#include "orthodoc/fusion.hpp"
#include "orthodoc/rand.hpp"
#include "orthodoc/report.hpp"
#include "orthodoc/retrieval.hpp"

using namespace orthodoc;

namespace {

struct Harness {
    int failures = 0;
    int index = 0;

    void run(const std::string& name, const std::function<void()>& body) {
        ++index;
        const auto start = std::chrono::steady_clock::now();
        std::string error;
        try {
            body();
        } catch (const std::exception& e) {
            error = e.what();
        } catch (...) {
            error = "unknown exception";
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                                .count();
        char line[512];
        if (error.empty()) {
            std::snprintf(line, sizeof(line), "[PASS] %2d %s (%.2fs)", index, name.c_str(), secs);
        } else {
            std::snprintf(line, sizeof(line), "[FAIL] %2d %s (%.2fs): %s", index, name.c_str(),
                          secs, error.c_str());
            ++failures;
        }
        std::cout << line << "\n" << std::flush;
    }
};

void require(bool condition, const std::string& message) {
    if (!condition) throw std::runtime_error(message);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// 1. metric oracle equivalence
// ---------------------------------------------------------------------------
void criterion_metrics() {
    ConfusionMatrix worked;
    worked.classes = {"A", "B"};
    worked.counts = {{8, 2}, {3, 7}};
    auto got = condition_metrics(worked);
    require(std::abs(got.accuracy - 0.75) < 1e-12, "worked accuracy != 0.75");
    require(std::abs(got.per_class[0].sensitivity - 0.8) < 1e-12, "worked sensitivity != 0.8");
    require(std::abs(got.per_class[0].specificity - 0.7) < 1e-12, "worked specificity != 0.7");
    require(std::abs(got.per_class[0].f1 - 0.76190476190476186) < 1e-12,
            "worked F1 != 16/21 (~0.7619)");

    SplitMix64 gen(101);
    for (int trial = 0; trial < 100; ++trial) {
        const int C = 2 + static_cast<int>(gen.next_below(5));
        ConfusionMatrix m;
        long total = 0;
        for (int i = 0; i < C; ++i) {
            m.classes.push_back("c" + std::to_string(i));
            std::vector<long> row;
            for (int j = 0; j < C; ++j) {
                long v = static_cast<long>(gen.next_below(51));
                row.push_back(v);
                total += v;
            }
            m.counts.push_back(row);
        }
        if (total == 0) m.counts[0][0] = 1;

        auto lib = condition_metrics(m);
        auto ora = oracle::condition_metrics(m.counts);
        require(std::abs(lib.accuracy - ora.accuracy) <= 1e-12, "accuracy mismatch vs oracle");
        require(std::abs(lib.macro_sensitivity - ora.macro_sensitivity) <= 1e-12,
                "sensitivity mismatch vs oracle");
        require(std::abs(lib.macro_specificity - ora.macro_specificity) <= 1e-12,
                "specificity mismatch vs oracle");
        require(std::abs(lib.macro_f1 - ora.macro_f1) <= 1e-12, "F1 mismatch vs oracle");
        for (int c = 0; c < C; ++c) {
            require(std::abs(lib.per_class[static_cast<std::size_t>(c)].sensitivity -
                             ora.per_class[static_cast<std::size_t>(c)].sensitivity) <= 1e-12,
                    "per-class sensitivity mismatch");
            require(std::abs(lib.per_class[static_cast<std::size_t>(c)].f1 -
                             ora.per_class[static_cast<std::size_t>(c)].f1) <= 1e-12,
                    "per-class F1 mismatch");
        }
    }
}

// ---------------------------------------------------------------------------
// 2. BM25 oracle equivalence
// ---------------------------------------------------------------------------
void criterion_bm25() {
    // hand-derived single-term case
    CorpusStore store = build_store({Document{"p1", "t", "s", "fracture fracture cast"},
                                     Document{"p2", "t", "s", "arthritis knee pain"}},
                                    256, 32);
    InvertedIndex idx = build_index(store);
    const double hand = bm25_score({"fracture"}, "p1#0", idx, 1.2, 0.75);
    require(std::abs(hand - 0.9531) < 1e-4, "hand-derived case != ~0.9531 (got " + fmt(hand) + ")");

    static const std::vector<std::string> vocab = {
        "fracture", "radius", "cast", "splint", "bone",     "joint", "knee",  "wrist",
        "therapy",  "lesion", "spine", "scan",  "pain",     "edema", "ulna",  "femur",
    };
    SplitMix64 gen(103);
    for (int trial = 0; trial < 150; ++trial) {
        std::vector<Document> docs;
        const int n = 1 + static_cast<int>(gen.next_below(20));
        for (int d = 0; d < n; ++d) {
            std::string text;
            const int len = 1 + static_cast<int>(gen.next_below(24));
            for (int t = 0; t < len; ++t) {
                if (t) text += " ";
                text += vocab[gen.next_below(vocab.size())];
            }
            docs.push_back(Document{"doc" + std::to_string(d), "t", "s", text});
        }
        CorpusStore rstore = build_store(docs, 256, 32);
        InvertedIndex ridx = build_index(rstore);

        oracle::MiniCorpus mini;
        for (const auto& p : rstore.passages) {
            oracle::MiniPassage mp;
            mp.passage_id = p.passage_id;
            for (const auto& t : tokenize(p.text))
                if (t.is_content) mp.content_tokens.push_back(t.surface);
            mp.length = static_cast<double>(p.token_count);
            mini.passages.push_back(std::move(mp));
        }

        std::vector<std::string> query;
        const int qlen = 1 + static_cast<int>(gen.next_below(8));
        for (int t = 0; t < qlen; ++t) query.push_back(vocab[gen.next_below(vocab.size())]);
        const double k1 = 0.5 + gen.next_double() * 2.0;
        const double b = gen.next_double();

        for (const auto& p : rstore.passages) {
            const double lib = bm25_score(query, p.passage_id, ridx, k1, b);
            const double ora = oracle::bm25(mini, query, p.passage_id, k1, b);
            require(std::abs(lib - ora) / std::max(1.0, std::abs(ora)) <= 1e-9,
                    "BM25 mismatch vs oracle: " + fmt(lib) + " vs " + fmt(ora));
        }
    }
}

// ---------------------------------------------------------------------------
// 3. attention / normalization suite
// ---------------------------------------------------------------------------
void criterion_attention() {
    SplitMix64 gen(107);
    auto random_weights = [&gen](int d, int C) {
        FusionWeights w;
        w.d = d;
        w.embed_seed = 99;
        auto fill = [&gen](Mat& m) {
            for (double& v : m.a) v = gen.next_signed() * 0.5;
        };
        w.W_q = Mat(d, d);
        w.W_k = Mat(d, d);
        w.W_v = Mat(d, d);
        w.W_out = Mat(d, C);
        fill(w.W_q);
        fill(w.W_k);
        fill(w.W_v);
        fill(w.W_out);
        w.b_out.assign(static_cast<std::size_t>(C), 0.0);
        for (int c = 0; c < C; ++c) w.class_labels.push_back("c" + std::to_string(c));
        return w;
    };

    for (int trial = 0; trial < 1000; ++trial) {
        const int d = 2 + static_cast<int>(gen.next_below(8));
        const int P = 2 + static_cast<int>(gen.next_below(6));
        FusionWeights w = random_weights(d, 3);
        ImageFeatures img;
        img.patches = Mat(P, d);
        for (double& v : img.patches.a) v = gen.next_signed();
        TextEmbedding text = embed_text("pain swelling deformity wrist", d,
                                        static_cast<std::uint64_t>(trial));

        Mat A = attention_rows(text, img, w);
        for (int i = 0; i < A.rows; ++i) {
            double sum = 0.0;
            for (int j = 0; j < A.cols; ++j) {
                require(A(i, j) >= 0.0, "negative attention weight");
                sum += A(i, j);
            }
            require(std::abs(sum - 1.0) < 1e-9, "attention row does not sum to 1");
        }

        // identical patches -> uniform rows
        ImageFeatures same;
        same.patches = Mat(P, d);
        for (int i = 0; i < P; ++i)
            for (int j = 0; j < d; ++j) same.patches(i, j) = img.patches(0, j);
        Mat U = attention_rows(text, same, w);
        for (int i = 0; i < U.rows; ++i)
            for (int j = 0; j < U.cols; ++j)
                require(std::abs(U(i, j) - 1.0 / P) < 1e-9, "identical patches not uniform");

        // patch permutation leaves the fused vector unchanged
        auto fused = cross_modal_attention(text, img, w);
        ImageFeatures rotated;
        rotated.patches = Mat(P, d);
        for (int i = 0; i < P; ++i)
            for (int j = 0; j < d; ++j) rotated.patches(i, j) = img.patches((i + 1) % P, j);
        auto fused_rot = cross_modal_attention(text, rotated, w);
        for (std::size_t j = 0; j < fused.size(); ++j)
            require(std::abs(fused[j] - fused_rot[j]) < 1e-9,
                    "patch permutation changed the fused vector");
    }
}

// ---------------------------------------------------------------------------
// 4. gradient check
// ---------------------------------------------------------------------------
void criterion_gradients() {
    SplitMix64 gen(109);
    const int d = 6, P = 4;
    auto make_batch = [&gen, d]() {
        std::vector<std::pair<FusionExample, int>> batch;
        const char* texts[] = {"wrist pain after fall", "knee stiffness morning",
                               "night pain with mass", "shoulder pain after tackle"};
        for (int i = 0; i < 4; ++i) {
            FusionExample ex;
            ex.text = texts[i];
            ex.image.patches = Mat(P, d);
            for (double& v : ex.image.patches.a) v = gen.next_signed();
            batch.emplace_back(std::move(ex), i % 2);
        }
        return batch;
    };
    auto make_weights = [&gen, d]() {
        FusionWeights w;
        w.d = d;
        w.embed_seed = 7;
        auto fill = [&gen](Mat& m) {
            for (double& v : m.a) v = gen.next_signed() * 0.5;
        };
        w.W_q = Mat(d, d);
        w.W_k = Mat(d, d);
        w.W_v = Mat(d, d);
        w.W_out = Mat(d, 3);
        fill(w.W_q);
        fill(w.W_k);
        fill(w.W_v);
        fill(w.W_out);
        w.b_out = {0.01, -0.02, 0.03};
        w.class_labels = {"a", "b", "c"};
        return w;
    };

    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        FusionWeights w = make_weights();
        auto batch = make_batch();
        const double err = numerical_gradient_check(w, batch, 1e-5, seed);
        require(err < 1e-4, "gradient check failed at seed " + std::to_string(seed) + ": max rel " +
                                fmt(err));
    }

    // fault injection: one doubled coordinate must be caught
    FusionWeights w = make_weights();
    auto batch = make_batch();
    FusionGradients g = analytic_gradient(w, batch);
    std::size_t victim = 0;
    for (std::size_t i = 0; i < g.W_q.a.size(); ++i)
        if (std::abs(g.W_q.a[i]) > 1e-3) {
            victim = i;
            break;
        }
    g.W_q.a[victim] *= 2.0;
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 40; ++seed)
        worst = std::max(worst, gradient_check_against(w, batch, g, 1e-5, seed));
    require(worst > 0.3, "injected gradient fault went undetected (max rel " + fmt(worst) + ")");
}

// ---------------------------------------------------------------------------
// 5. training sanity on the bundled dataset
// ---------------------------------------------------------------------------
void criterion_training(const testutil::PipelineArtifacts& a) {
    require(a.cases.size() >= 60, "bundled dataset has fewer than 60 cases");
    std::set<std::string> classes;
    for (const auto& c : a.cases) classes.insert(*c.ground_truth);
    require(classes.size() == 6, "bundled dataset does not cover 6 classes");

    require(a.loss_trace.size() >= 2, "missing loss trace");
    const double initial = a.loss_trace.front();
    const double final_loss = a.loss_trace.back();
    require(final_loss < 0.5 * initial, "final loss " + fmt(final_loss) + " not below 50% of " +
                                            fmt(initial));

    int correct = 0;
    for (const auto& c : a.cases)
        correct += testutil::predict(a, c).predicted == *c.ground_truth;
    const double accuracy = static_cast<double>(correct) / static_cast<double>(a.cases.size());
    require(accuracy >= 0.9, "training accuracy " + fmt(accuracy) + " below 0.9");
}

// ---------------------------------------------------------------------------
// 6. hallucination gate
// ---------------------------------------------------------------------------

// Appends exactly one fabricated zero-overlap claim to the treatment plan.
class InjectingBackend : public Backend {
public:
    GenerationResponse generate(const GenerationRequest& request) const override {
        GenerationResponse resp = inner_.generate(request);
        PromptSpec spec = parse_prompt(request.prompt);
        if (spec.section == "treatment_plan" && !spec.evidence.empty())
            resp.text += "Zorblax crystal resonance realigns the astral humors [E:" +
                         spec.evidence[0].passage_id + "].\n";
        return resp;
    }
    std::string id() const override { return "injecting"; }

private:
    TemplateBackend inner_;
};

void criterion_hallucination_gate(const testutil::PipelineArtifacts& a) {
    InjectingBackend backend;
    int reports = 0, injected = 0, removed = 0;
    for (std::size_t i = 0; i < a.cases.size() && reports < 24; ++i) {
        Report report = testutil::make_verified_report(a, a.cases[i], backend);
        ++reports;
        for (const auto& section : report.sections) {
            for (const auto& claim : section.claims) {
                if (claim.sentence.find("Zorblax") != std::string::npos) {
                    ++injected;
                    if (claim.status == ClaimStatus::removed) ++removed;
                }
                if (claim.kind == ClaimKind::factual && claim.status != ClaimStatus::removed)
                    require(claim.status == ClaimStatus::supported,
                            "non-supported factual claim survived strict verification");
            }
        }
        const std::string tex = emit_latex(report);
        require(tex.find("Zorblax") == std::string::npos, "fabricated text leaked into the .tex");
    }
    require(reports >= 20, "fewer than 20 reports in the injection suite");
    require(injected >= 20, "injection did not land in every report");
    require(removed == injected, "only " + std::to_string(removed) + "/" +
                                     std::to_string(injected) + " injected claims were removed");
}

// ---------------------------------------------------------------------------
// 7. ablation directions + golden table layouts
// ---------------------------------------------------------------------------
void criterion_ablation(const testutil::PipelineArtifacts& a) {
    TemplateBackend backend;
    EvalOptions base;
    EvalSummary on =
        evaluate_dataset(a.store, a.index, a.graph, a.weights, a.cases, a.ratings, backend, base);

    EvalOptions no_rag = base;
    no_rag.rag = false;
    EvalSummary rag_off = evaluate_dataset(a.store, a.index, a.graph, a.weights, a.cases,
                                           a.ratings, backend, no_rag);
    EvalOptions no_cot = base;
    no_cot.cot = false;
    EvalSummary cot_off = evaluate_dataset(a.store, a.index, a.graph, a.weights, a.cases,
                                           a.ratings, backend, no_cot);

    require(on.factual_correctness >= rag_off.factual_correctness,
            "factual correctness did not improve with RAG (" + fmt(on.factual_correctness) +
                " vs " + fmt(rag_off.factual_correctness) + ")");
    require(on.completeness > cot_off.completeness,
            "completeness not strictly higher with CoT (" + fmt(on.completeness) + " vs " +
                fmt(cot_off.completeness) + ")");
    require(rag_off.graph_reads == 0, "no-RAG run still read the knowledge graph");

    auto quality_row = [](const std::string& name, const EvalSummary& s) {
        QualityRow row;
        row.model = name;
        row.content_relevance = s.content_relevance;
        row.factual_correctness = s.factual_correctness;
        row.completeness = s.completeness;
        row.user_satisfaction = s.user_satisfaction;
        return row;
    };
    const std::string rag_condition = render_condition_table_percent(
        {{"OrthoDoc (RAG)", on.condition}, {"OrthoDoc (No RAG)", rag_off.condition}});
    const std::string rag_quality = render_quality_table_cfru(
        {quality_row("OrthoDoc (RAG)", on), quality_row("OrthoDoc (No RAG)", rag_off)});
    const std::string cot_quality = render_quality_table_cot(
        {quality_row("OrthoDoc (CoT)", on), quality_row("OrthoDoc (No CoT)", cot_off)});

    auto check_golden = [](const std::string& name, const std::string& produced) {
        const auto path = testutil::golden_dir() / name;
        require(std::filesystem::exists(path), "missing golden file " + path.string());
        require(produced == testutil::read_file(path),
                "table does not match golden file " + name);
    };
    check_golden("ablation_rag_condition.tex", rag_condition);
    check_golden("ablation_rag_quality.tex", rag_quality);
    check_golden("ablation_cot_quality.tex", cot_quality);
}

// ---------------------------------------------------------------------------
// 8. end-to-end determinism
// ---------------------------------------------------------------------------
void criterion_determinism() {
    auto run_once = [](const std::string& tag) {
        auto scratch = testutil::scratch_dir("accept_det_" + tag);
        testutil::PipelineArtifacts a = testutil::build_pipeline_artifacts();
        save_graph(a.graph, scratch / "graph.json");
        save_weights(a.weights, scratch / "weights.json");

        TemplateBackend backend;
        Report report = testutil::make_verified_report(a, a.cases.front(), backend);
        EvalOptions options;
        EvalSummary summary = evaluate_dataset(a.store, a.index, a.graph, a.weights, a.cases,
                                               a.ratings, backend, options);

        std::ostringstream all;
        all << testutil::read_file(scratch / "graph.json") << "\x1e"
            << testutil::read_file(scratch / "weights.json") << "\x1e" << emit_latex(report)
            << "\x1e" << summary_to_json(summary);
        return all.str();
    };
    require(run_once("a") == run_once("b"), "pipeline outputs differ between two runs");
}

// ---------------------------------------------------------------------------
// 9. LaTeX validity
// ---------------------------------------------------------------------------

bool latex_structurally_valid(const std::string& tex, std::string& why) {
    long depth = 0;
    for (char c : tex) {
        if (c == '{') ++depth;
        if (c == '}') --depth;
        if (depth < 0) {
            why = "unbalanced braces";
            return false;
        }
    }
    if (depth != 0) {
        why = "unbalanced braces";
        return false;
    }
    std::vector<std::string> stack;
    std::size_t pos = 0;
    while ((pos = tex.find("\\begin{", pos)) != std::string::npos) {
        auto end = tex.find('}', pos);
        stack.push_back(tex.substr(pos + 7, end - pos - 7));
        pos = end;
    }
    pos = 0;
    std::vector<std::string> ends;
    while ((pos = tex.find("\\end{", pos)) != std::string::npos) {
        auto end = tex.find('}', pos);
        ends.push_back(tex.substr(pos + 5, end - pos - 5));
        pos = end;
    }
    std::sort(stack.begin(), stack.end());
    std::sort(ends.begin(), ends.end());
    if (stack != ends) {
        why = "unmatched begin/end environments";
        return false;
    }
    if (tex.rfind("\\documentclass", 0) != 0) {
        why = "missing \\documentclass preamble";
        return false;
    }
    return true;
}

std::string find_latex_tool() {
    for (const char* tool : {"pdflatex", "tectonic", "lualatex", "xelatex"}) {
        const std::string probe = std::string("command -v ") + tool + " > /dev/null 2>&1";
        if (std::system(probe.c_str()) == 0) return tool;
    }
    return "";
}

void criterion_latex(const testutil::PipelineArtifacts& a) {
    // escape_latex must pass the ten-special-character table exactly
    const std::vector<std::pair<std::string, std::string>> table = {
        {"\\", "\\textbackslash{}"}, {"{", "\\{"},
        {"}", "\\}"},                {"$", "\\$"},
        {"&", "\\&"},                {"#", "\\#"},
        {"^", "\\textasciicircum{}"}, {"_", "\\_"},
        {"%", "\\%"},                {"~", "\\textasciitilde{}"},
    };
    for (const auto& [input, expect] : table)
        require(escape_latex(input) == expect,
                "escape_latex(\"" + input + "\") != \"" + expect + "\"");

    // emitted fixtures: a strict report and a lenient one with a flagged claim
    TemplateBackend backend;
    ReportPlan plan = plan_report(a.cases.front(), testutil::predict(a, a.cases.front()), a.graph,
                                  a.index, a.store);
    Report strict = verify_grounding(build_report(plan, backend), a.store, 0.3,
                                     VerifyPolicy::strict);
    Report lenient = verify_grounding(build_report(plan, backend), a.store, 0.3,
                                      VerifyPolicy::lenient);
    const std::vector<std::string> fixtures = {emit_latex(strict), emit_latex(lenient)};

    std::string why;
    for (const auto& tex : fixtures)
        require(latex_structurally_valid(tex, why), "structural check failed: " + why);

    const std::string tool = find_latex_tool();
    if (tool.empty()) {
        std::cout << "       (no LaTeX toolchain on PATH; compile check runs in CI, structural "
                     "checks applied here)\n";
        return;
    }
    auto scratch = testutil::scratch_dir("accept_latex");
    for (std::size_t i = 0; i < fixtures.size(); ++i) {
        const auto tex_path = scratch / ("fixture" + std::to_string(i) + ".tex");
        testutil::write_file(tex_path, fixtures[i]);
        const std::string cmd = "cd " + scratch.string() + " && " + tool +
                                " -interaction=nonstopmode -halt-on-error " +
                                tex_path.filename().string() + " > /dev/null 2>&1";
        require(std::system(cmd.c_str()) == 0,
                "LaTeX compilation failed for fixture " + std::to_string(i));
    }
}

// ---------------------------------------------------------------------------
// 10. HTTP backend contract
// ---------------------------------------------------------------------------
void criterion_http() {
    PromptSpec spec;
    spec.section = "treatment_plan";
    spec.case_line = "age=50 | sex=male | occupation=farmer | history=None. | complaints=Pain.";
    spec.need = "fracture treatment";
    spec.evidence.push_back({"doc0#0", "A fracture is treated with cast immobilization."});
    GenerationRequest request;
    request.prompt = render_prompt(spec);
    request.request_id = "accept:http";

    // success echo
    {
        httplib::Server server;
        server.Post("/v1/generate", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(nlohmann::json{{"text", "echo"}}.dump(), "application/json");
        });
        const int port = server.bind_to_any_port("127.0.0.1");
        std::thread thread([&server] { server.listen_after_bind(); });
        server.wait_until_ready();
        HttpBackendConfig cfg;
        cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
        GenerationResponse resp = HttpBackend(cfg).generate(request);
        server.stop();
        thread.join();
        require(resp.text == "echo", "echo test failed");
    }

    // two failures then recovery, with documented backoff timing
    {
        std::atomic<int> calls{0};
        httplib::Server server;
        server.Post("/v1/generate", [&calls](const httplib::Request&, httplib::Response& res) {
            if (++calls <= 2) {
                res.status = 500;
                res.set_content("transient", "text/plain");
            } else {
                res.set_content(nlohmann::json{{"text", "recovered"}}.dump(), "application/json");
            }
        });
        const int port = server.bind_to_any_port("127.0.0.1");
        std::thread thread([&server] { server.listen_after_bind(); });
        server.wait_until_ready();
        HttpBackendConfig cfg;
        cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
        const auto start = std::chrono::steady_clock::now();
        GenerationResponse resp = HttpBackend(cfg).generate(request);
        const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - start)
                            .count();
        server.stop();
        thread.join();
        require(resp.text == "recovered", "retry recovery failed");
        require(calls.load() == 3, "expected exactly 3 attempts");
        require(ms >= 1500, "retries returned before the 0.5s+1s backoff window");
        require(ms < 8000, "retries took far longer than the documented backoff");
    }

    // missing `text` field is a schema error naming the field
    {
        httplib::Server server;
        server.Post("/v1/generate", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(nlohmann::json{{"output", "nope"}}.dump(), "application/json");
        });
        const int port = server.bind_to_any_port("127.0.0.1");
        std::thread thread([&server] { server.listen_after_bind(); });
        server.wait_until_ready();
        HttpBackendConfig cfg;
        cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
        bool threw = false;
        try {
            HttpBackend(cfg).generate(request);
        } catch (const std::exception& e) {
            threw = std::string(e.what()).find("\"text\"") != std::string::npos;
        }
        server.stop();
        thread.join();
        require(threw, "missing-field schema error not raised");
    }
}

} // namespace

int main() {
    std::cout << "OrthoDoc acceptance suite\n";
    Harness harness;

    // shared artifacts for the dataset-driven criteria
    testutil::PipelineArtifacts artifacts;
    bool artifacts_ready = false;
    try {
        artifacts = testutil::build_pipeline_artifacts();
        artifacts_ready = true;
    } catch (const std::exception& e) {
        std::cout << "[FAIL]    pipeline artifacts: " << e.what() << "\n";
        harness.failures += 1;
    }

    harness.run("metric oracle equivalence (worked matrix + 100 random)", criterion_metrics);
    harness.run("BM25 oracle equivalence (hand case + randomized corpora)", criterion_bm25);
    harness.run("attention/normalization suite (1000 randomized trials)", criterion_attention);
    harness.run("gradient check (20 seeds + fault injection)", criterion_gradients);
    if (artifacts_ready) {
        harness.run("training sanity on the bundled dataset",
                    [&artifacts] { criterion_training(artifacts); });
        harness.run("hallucination gate (injection suite, strict verification)",
                    [&artifacts] { criterion_hallucination_gate(artifacts); });
        harness.run("ablation directions + golden table layouts",
                    [&artifacts] { criterion_ablation(artifacts); });
    } else {
        harness.failures += 3;
        std::cout << "[FAIL]  5 training sanity: pipeline artifacts unavailable\n";
        std::cout << "[FAIL]  6 hallucination gate: pipeline artifacts unavailable\n";
        std::cout << "[FAIL]  7 ablation directions: pipeline artifacts unavailable\n";
        harness.index += 3;
    }
    harness.run("end-to-end determinism (byte-identical artifacts)", criterion_determinism);
    if (artifacts_ready) {
        harness.run("LaTeX validity (escape table + document fixtures)",
                    [&artifacts] { criterion_latex(artifacts); });
    } else {
        harness.failures += 1;
        std::cout << "[FAIL]  9 LaTeX validity: pipeline artifacts unavailable\n";
        harness.index += 1;
    }
    harness.run("HTTP backend contract (echo, retry, schema error)", criterion_http);

    std::cout << (harness.failures == 0 ? "ALL CRITERIA PASSED\n"
                                        : std::to_string(harness.failures) + " CRITERIA FAILED\n");
    return harness.failures;
}
