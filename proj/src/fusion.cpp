#include "orthodoc/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "orthodoc/corpus.hpp"
#include "orthodoc/errors.hpp"
#include "orthodoc/rand.hpp"
#include "orthodoc/version.hpp"

using json = nlohmann::json;

namespace orthodoc {
namespace {

constexpr double kProbClamp = 1e-12;

Mat matmul(const Mat& x, const Mat& y) {
    Mat out(x.rows, y.cols);
    for (int i = 0; i < x.rows; ++i)
        for (int k = 0; k < x.cols; ++k) {
            const double xv = x(i, k);
            if (xv == 0.0) continue;
            for (int j = 0; j < y.cols; ++j) out(i, j) += xv * y(k, j);
        }
    return out;
}

// x^T * y where x is (n x r), y is (n x c) -> (r x c)
Mat matmul_tn(const Mat& x, const Mat& y) {
    Mat out(x.cols, y.cols);
    for (int n = 0; n < x.rows; ++n)
        for (int i = 0; i < x.cols; ++i) {
            const double xv = x(n, i);
            if (xv == 0.0) continue;
            for (int j = 0; j < y.cols; ++j) out(i, j) += xv * y(n, j);
        }
    return out;
}

// x * y^T where x is (r x n), y is (c x n) -> (r x c)
Mat matmul_nt(const Mat& x, const Mat& y) {
    Mat out(x.rows, y.rows);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < y.rows; ++j) {
            double s = 0.0;
            for (int n = 0; n < x.cols; ++n) s += x(i, n) * y(j, n);
            out(i, j) = s;
        }
    return out;
}

void check_finite(const Mat& m, const char* what) {
    for (double v : m.a)
        if (!std::isfinite(v)) throw ValidationError(std::string(what) + " contains non-finite values");
}

struct Forward {
    Mat Q, K, V, A, H; // A is T x P row-softmaxed scores
    std::vector<double> fused;
    ConditionPrediction prediction;
};

Forward forward_pass(const TextEmbedding& text, const ImageFeatures& image,
                     const FusionWeights& w) {
    const int d = w.d;
    if (text.tokens.cols != d || image.patches.cols != d || w.W_q.rows != d || w.W_q.cols != d ||
        w.W_k.rows != d || w.W_k.cols != d || w.W_v.rows != d || w.W_v.cols != d ||
        w.W_out.rows != d)
        throw ValidationError("fusion: dimension mismatch between inputs and weights");
    if (text.tokens.rows < 1 || image.patches.rows < 1)
        throw ValidationError("fusion: need at least one text token and one image patch");
    check_finite(text.tokens, "text embedding");
    check_finite(image.patches, "image features");

    Forward f;
    f.Q = matmul(text.tokens, w.W_q);
    f.K = matmul(image.patches, w.W_k);
    f.V = matmul(image.patches, w.W_v);

    const int T = f.Q.rows, P = f.K.rows;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    Mat scores = matmul_nt(f.Q, f.K);
    f.A = Mat(T, P);
    for (int i = 0; i < T; ++i) {
        std::vector<double> row(static_cast<std::size_t>(P));
        for (int j = 0; j < P; ++j) row[static_cast<std::size_t>(j)] = scores(i, j) * scale;
        auto sm = softmax(row);
        for (int j = 0; j < P; ++j) f.A(i, j) = sm[static_cast<std::size_t>(j)];
    }

    f.H = matmul(f.A, f.V);
    f.fused.assign(static_cast<std::size_t>(d), 0.0);
    for (int i = 0; i < T; ++i)
        for (int j = 0; j < d; ++j) f.fused[static_cast<std::size_t>(j)] += f.H(i, j);
    for (double& v : f.fused) v /= T;

    f.prediction = classify(f.fused, w);
    return f;
}

} // namespace

TextEmbedding embed_text(const std::string& text, int d, std::uint64_t seed) {
    if (d < 1) throw ValidationError("embed_text: d must be >= 1");
    auto toks = tokenize(text);
    if (toks.empty()) throw ValidationError("embed_text: text has no tokens");

    TextEmbedding emb;
    emb.tokens = Mat(static_cast<int>(toks.size()), d);
    for (int i = 0; i < emb.tokens.rows; ++i) {
        const std::string& surface = toks[static_cast<std::size_t>(i)].surface;
        emb.token_surfaces.push_back(surface);
        SplitMix64 gen(fnv1a64(surface) ^ (seed * 0x9e3779b97f4a7c15ULL));
        double norm_sq = 0.0;
        for (int j = 0; j < d; ++j) {
            const double v = gen.next_signed();
            emb.tokens(i, j) = v;
            norm_sq += v * v;
        }
        double norm = std::sqrt(norm_sq);
        if (norm < 1e-12) {
            emb.tokens(i, 0) = 1.0;
            norm = 1.0;
        }
        for (int j = 0; j < d; ++j) emb.tokens(i, j) /= norm;
    }
    return emb;
}

std::vector<double> softmax(const std::vector<double>& v) {
    if (v.empty()) return {};
    double mx = v[0];
    for (double x : v) {
        if (!std::isfinite(x)) throw ValidationError("softmax: non-finite input");
        mx = std::max(mx, x);
    }
    std::vector<double> out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - mx);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

Mat attention_rows(const TextEmbedding& text, const ImageFeatures& image, const FusionWeights& w) {
    return forward_pass(text, image, w).A;
}

std::vector<double> cross_modal_attention(const TextEmbedding& text, const ImageFeatures& image,
                                          const FusionWeights& w) {
    return forward_pass(text, image, w).fused;
}

ConditionPrediction classify(const std::vector<double>& fused, const FusionWeights& w) {
    const int d = w.W_out.rows, C = w.W_out.cols;
    if (static_cast<int>(fused.size()) != d || static_cast<int>(w.b_out.size()) != C)
        throw ValidationError("classify: dimension mismatch");
    if (C < 2) throw ValidationError("classify: need at least two classes");

    std::vector<double> logits(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c) {
        double z = w.b_out[static_cast<std::size_t>(c)];
        for (int i = 0; i < d; ++i) z += fused[static_cast<std::size_t>(i)] * w.W_out(i, c);
        if (!std::isfinite(z)) throw ValidationError("classify: non-finite logit");
        logits[static_cast<std::size_t>(c)] = z;
    }

    ConditionPrediction pred;
    pred.probabilities = softmax(logits);
    pred.predicted_index = 0;
    for (int c = 1; c < C; ++c)
        if (pred.probabilities[static_cast<std::size_t>(c)] >
            pred.probabilities[static_cast<std::size_t>(pred.predicted_index)])
            pred.predicted_index = c;
    pred.class_labels = w.class_labels;
    if (!w.class_labels.empty())
        pred.predicted = w.class_labels[static_cast<std::size_t>(pred.predicted_index)];
    return pred;
}

double cross_entropy_loss(const ConditionPrediction& prediction, int true_label) {
    if (true_label < 0 || true_label >= static_cast<int>(prediction.probabilities.size()))
        throw ValidationError("loss: label index out of range");
    const double p = prediction.probabilities[static_cast<std::size_t>(true_label)];
    return -std::log(std::max(p, kProbClamp));
}

namespace {

FusionGradients zero_gradients(const FusionWeights& w) {
    FusionGradients g;
    g.W_q = Mat(w.W_q.rows, w.W_q.cols);
    g.W_k = Mat(w.W_k.rows, w.W_k.cols);
    g.W_v = Mat(w.W_v.rows, w.W_v.cols);
    g.W_out = Mat(w.W_out.rows, w.W_out.cols);
    g.b_out.assign(w.b_out.size(), 0.0);
    return g;
}

// One example's loss and gradient contribution (unscaled).
double example_backward(const FusionWeights& w, const TextEmbedding& text,
                        const ImageFeatures& image, int label, FusionGradients& g) {
    Forward f = forward_pass(text, image, w);
    const int T = f.Q.rows, P = f.K.rows, d = w.d, C = w.W_out.cols;
    const double loss = cross_entropy_loss(f.prediction, label);

    // dL/dlogits; the clamp zeroes the gradient below kProbClamp
    std::vector<double> dz(static_cast<std::size_t>(C), 0.0);
    if (f.prediction.probabilities[static_cast<std::size_t>(label)] >= kProbClamp) {
        for (int c = 0; c < C; ++c)
            dz[static_cast<std::size_t>(c)] = f.prediction.probabilities[static_cast<std::size_t>(c)];
        dz[static_cast<std::size_t>(label)] -= 1.0;
    }

    std::vector<double> dfused(static_cast<std::size_t>(d), 0.0);
    for (int i = 0; i < d; ++i) {
        for (int c = 0; c < C; ++c) {
            g.W_out(i, c) += f.fused[static_cast<std::size_t>(i)] * dz[static_cast<std::size_t>(c)];
            dfused[static_cast<std::size_t>(i)] += w.W_out(i, c) * dz[static_cast<std::size_t>(c)];
        }
    }
    for (int c = 0; c < C; ++c) g.b_out[static_cast<std::size_t>(c)] += dz[static_cast<std::size_t>(c)];

    // fused = mean over rows of H
    Mat dH(T, d);
    for (int i = 0; i < T; ++i)
        for (int j = 0; j < d; ++j) dH(i, j) = dfused[static_cast<std::size_t>(j)] / T;

    Mat dV = matmul_tn(f.A, dH);  // P x d
    Mat dA = matmul_nt(dH, f.V);  // T x P

    // softmax backward per row, with the 1/sqrt(d) score scale folded in
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    Mat dS(T, P);
    for (int i = 0; i < T; ++i) {
        double dot = 0.0;
        for (int j = 0; j < P; ++j) dot += dA(i, j) * f.A(i, j);
        for (int j = 0; j < P; ++j) dS(i, j) = f.A(i, j) * (dA(i, j) - dot) * scale;
    }

    Mat dQ = matmul(dS, f.K);     // T x d
    Mat dK = matmul_tn(dS, f.Q);  // P x d

    Mat gWq = matmul_tn(text.tokens, dQ);
    Mat gWk = matmul_tn(image.patches, dK);
    Mat gWv = matmul_tn(image.patches, dV);
    for (std::size_t i = 0; i < g.W_q.a.size(); ++i) g.W_q.a[i] += gWq.a[i];
    for (std::size_t i = 0; i < g.W_k.a.size(); ++i) g.W_k.a[i] += gWk.a[i];
    for (std::size_t i = 0; i < g.W_v.a.size(); ++i) g.W_v.a[i] += gWv.a[i];
    return loss;
}

struct EmbeddedBatch {
    std::vector<TextEmbedding> texts;
    const std::vector<std::pair<FusionExample, int>>* raw = nullptr;
};

EmbeddedBatch embed_batch(const FusionWeights& w,
                          const std::vector<std::pair<FusionExample, int>>& batch) {
    EmbeddedBatch eb;
    eb.raw = &batch;
    eb.texts.reserve(batch.size());
    for (const auto& [ex, label] : batch) eb.texts.push_back(embed_text(ex.text, w.d, w.embed_seed));
    return eb;
}

double mean_loss_embedded(const FusionWeights& w, const EmbeddedBatch& eb) {
    double total = 0.0;
    for (std::size_t i = 0; i < eb.raw->size(); ++i) {
        Forward f = forward_pass(eb.texts[i], (*eb.raw)[i].first.image, w);
        total += cross_entropy_loss(f.prediction, (*eb.raw)[i].second);
    }
    return total / static_cast<double>(eb.raw->size());
}

FusionGradients mean_gradient_embedded(const FusionWeights& w, const EmbeddedBatch& eb,
                                       double* mean_loss_out = nullptr) {
    FusionGradients g = zero_gradients(w);
    double total = 0.0;
    for (std::size_t i = 0; i < eb.raw->size(); ++i)
        total += example_backward(w, eb.texts[i], (*eb.raw)[i].first.image, (*eb.raw)[i].second, g);
    const double inv = 1.0 / static_cast<double>(eb.raw->size());
    for (double& v : g.W_q.a) v *= inv;
    for (double& v : g.W_k.a) v *= inv;
    for (double& v : g.W_v.a) v *= inv;
    for (double& v : g.W_out.a) v *= inv;
    for (double& v : g.b_out) v *= inv;
    if (mean_loss_out) *mean_loss_out = total * inv;
    return g;
}

Mat init_mat(int rows, int cols, double scale, SplitMix64& gen) {
    Mat m(rows, cols);
    for (double& v : m.a) v = gen.next_signed() * scale;
    return m;
}

// Flat parameter view in a fixed order: W_q, W_k, W_v, W_out, b_out.
std::vector<double*> param_view(FusionWeights& w) {
    std::vector<double*> view;
    for (Mat* m : {&w.W_q, &w.W_k, &w.W_v, &w.W_out})
        for (double& v : m->a) view.push_back(&v);
    for (double& v : w.b_out) view.push_back(&v);
    return view;
}

std::vector<const double*> grad_view(const FusionGradients& g) {
    std::vector<const double*> view;
    for (const Mat* m : {&g.W_q, &g.W_k, &g.W_v, &g.W_out})
        for (const double& v : m->a) view.push_back(&v);
    for (const double& v : g.b_out) view.push_back(&v);
    return view;
}

} // namespace

double batch_mean_loss(const FusionWeights& w,
                       const std::vector<std::pair<FusionExample, int>>& batch) {
    if (batch.empty()) throw ValidationError("batch_mean_loss: empty batch");
    return mean_loss_embedded(w, embed_batch(w, batch));
}

FusionGradients analytic_gradient(const FusionWeights& w,
                                  const std::vector<std::pair<FusionExample, int>>& batch) {
    if (batch.empty()) throw ValidationError("analytic_gradient: empty batch");
    return mean_gradient_embedded(w, embed_batch(w, batch));
}

TrainResult train_head(const std::vector<std::pair<FusionExample, int>>& dataset,
                       const TrainConfig& config) {
    if (dataset.empty()) throw ValidationError("train_head: empty dataset");
    if (config.class_labels.size() < 2) throw ValidationError("train_head: need >= 2 class labels");
    if (config.lr < 0.0) throw ValidationError("train_head: lr must be >= 0");
    if (config.epochs < 0) throw ValidationError("train_head: epochs must be >= 0");
    if (config.d < 1) throw ValidationError("train_head: d must be >= 1");
    const int C = static_cast<int>(config.class_labels.size());
    for (const auto& [ex, label] : dataset)
        if (label < 0 || label >= C)
            throw ValidationError("train_head: label " + std::to_string(label) +
                                  " outside class set");

    TrainResult result;
    FusionWeights& w = result.weights;
    w.d = config.d;
    w.embed_seed = config.seed;
    w.class_labels = config.class_labels;
    SplitMix64 gen(config.seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(config.d));
    w.W_q = init_mat(config.d, config.d, scale, gen);
    w.W_k = init_mat(config.d, config.d, scale, gen);
    w.W_v = init_mat(config.d, config.d, scale, gen);
    w.W_out = init_mat(config.d, C, scale, gen);
    w.b_out.assign(static_cast<std::size_t>(C), 0.0);

    EmbeddedBatch eb = embed_batch(w, dataset);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double loss = 0.0;
        FusionGradients g = mean_gradient_embedded(w, eb, &loss);
        if (!std::isfinite(loss))
            throw std::runtime_error("train_head: loss diverged to non-finite at epoch " +
                                     std::to_string(epoch));
        result.loss_trace.push_back(loss);

        auto params = param_view(w);
        auto grads = grad_view(g);
        for (std::size_t i = 0; i < params.size(); ++i) *params[i] -= config.lr * *grads[i];
    }
    result.loss_trace.push_back(mean_loss_embedded(w, eb));
    return result;
}

double gradient_check_against(const FusionWeights& w,
                              const std::vector<std::pair<FusionExample, int>>& batch,
                              const FusionGradients& grads, double eps, std::uint64_t seed) {
    if (eps < 1e-7 || eps > 1e-3)
        throw ValidationError("gradient check: eps must be in [1e-7, 1e-3]");
    if (batch.empty()) throw ValidationError("gradient check: empty batch");

    FusionWeights probe = w; // mutated in place coordinate by coordinate
    EmbeddedBatch eb = embed_batch(probe, batch);
    auto params = param_view(probe);
    auto analytic = grad_view(grads);
    if (params.size() != analytic.size())
        throw ValidationError("gradient check: gradient shape mismatch");

    const std::size_t total = params.size();
    const std::size_t want = std::min<std::size_t>(total, 64);
    SplitMix64 gen(seed);
    std::vector<std::size_t> coords;
    std::vector<bool> taken(total, false);
    while (coords.size() < want) {
        std::size_t i = static_cast<std::size_t>(gen.next_below(total));
        if (taken[i]) continue;
        taken[i] = true;
        coords.push_back(i);
    }

    double max_rel = 0.0;
    for (std::size_t i : coords) {
        const double orig = *params[i];
        *params[i] = orig + eps;
        const double lp = mean_loss_embedded(probe, eb);
        *params[i] = orig - eps;
        const double lm = mean_loss_embedded(probe, eb);
        *params[i] = orig;
        const double numeric = (lp - lm) / (2.0 * eps);
        const double a = *analytic[i];
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

double numerical_gradient_check(const FusionWeights& w,
                                const std::vector<std::pair<FusionExample, int>>& batch, double eps,
                                std::uint64_t seed) {
    return gradient_check_against(w, batch, analytic_gradient(w, batch), eps, seed);
}

void save_weights(const FusionWeights& w, const std::filesystem::path& path) {
    auto mat_json = [](const Mat& m) {
        json rows = json::array();
        for (int i = 0; i < m.rows; ++i) {
            json row = json::array();
            for (int j = 0; j < m.cols; ++j) row.push_back(m(i, j));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    json j;
    j["schema_version"] = kWeightsSchemaVersion;
    j["d"] = w.d;
    j["C"] = static_cast<int>(w.class_labels.size());
    j["embed_seed"] = w.embed_seed;
    j["class_labels"] = w.class_labels;
    j["W_q"] = mat_json(w.W_q);
    j["W_k"] = mat_json(w.W_k);
    j["W_v"] = mat_json(w.W_v);
    j["W_out"] = mat_json(w.W_out);
    j["b_out"] = w.b_out;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write weights: " + path.string());
    out << j.dump(2) << "\n";
}

FusionWeights load_weights(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("weights file not found: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("weights parse error in " + path.string() + ": " + e.what());
    }
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != kWeightsSchemaVersion)
        throw ValidationError("weights schema version mismatch in " + path.string());

    auto mat_from = [&](const char* key, int rows, int cols) {
        Mat m(rows, cols);
        const auto& rows_json = j.at(key);
        if (static_cast<int>(rows_json.size()) != rows)
            throw ValidationError(std::string("weights: bad shape for ") + key);
        for (int i = 0; i < rows; ++i) {
            if (static_cast<int>(rows_json[static_cast<std::size_t>(i)].size()) != cols)
                throw ValidationError(std::string("weights: bad shape for ") + key);
            for (int jj = 0; jj < cols; ++jj) {
                m(i, jj) = rows_json[static_cast<std::size_t>(i)][static_cast<std::size_t>(jj)]
                               .get<double>();
                if (!std::isfinite(m(i, jj)))
                    throw ValidationError(std::string("weights: non-finite value in ") + key);
            }
        }
        return m;
    };

    FusionWeights w;
    w.d = j.at("d").get<int>();
    const int C = j.at("C").get<int>();
    w.embed_seed = j.at("embed_seed").get<std::uint64_t>();
    w.class_labels = j.at("class_labels").get<std::vector<std::string>>();
    if (static_cast<int>(w.class_labels.size()) != C || C < 2)
        throw ValidationError("weights: class label list inconsistent with C");
    w.W_q = mat_from("W_q", w.d, w.d);
    w.W_k = mat_from("W_k", w.d, w.d);
    w.W_v = mat_from("W_v", w.d, w.d);
    w.W_out = mat_from("W_out", w.d, C);
    w.b_out = j.at("b_out").get<std::vector<double>>();
    if (static_cast<int>(w.b_out.size()) != C) throw ValidationError("weights: bad b_out length");
    return w;
}

} // namespace orthodoc
