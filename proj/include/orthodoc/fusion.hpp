#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace orthodoc {

// Minimal row-major dense matrix; everything here is desk scale.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }
};

struct ImageFeatures {
    Mat patches; // P x d
    std::string source_id;
};

struct TextEmbedding {
    Mat tokens; // T x d
    std::vector<std::string> token_surfaces;
};

struct FusionWeights {
    Mat W_q, W_k, W_v; // d x d
    Mat W_out;         // d x C
    std::vector<double> b_out;
    std::vector<std::string> class_labels;
    int d = 0;
    std::uint64_t embed_seed = 0; // frozen embedder key, kept for inference
};

struct ConditionPrediction {
    std::vector<double> probabilities;
    int predicted_index = 0;
    std::string predicted;
    std::vector<std::string> class_labels; // aligned with probabilities
};

// Hashed random projection: each token surface maps to a fixed pseudo-random
// unit vector keyed by (surface, seed).
TextEmbedding embed_text(const std::string& text, int d, std::uint64_t seed);

// Numerically stable (max-subtracted) softmax.
std::vector<double> softmax(const std::vector<double>& v);

// Q from text, K and V from image patches; fused vector is the mean over
// text rows of softmax(Q K^T / sqrt(d)) V.
std::vector<double> cross_modal_attention(const TextEmbedding& text, const ImageFeatures& image,
                                          const FusionWeights& w);

// Exposed for the attention-property tests: the T x P row-softmaxed matrix.
Mat attention_rows(const TextEmbedding& text, const ImageFeatures& image, const FusionWeights& w);

ConditionPrediction classify(const std::vector<double>& fused, const FusionWeights& w);

// Cross-entropy -ln p(true), clamped at p >= 1e-12.
double cross_entropy_loss(const ConditionPrediction& prediction, int true_label);

struct FusionExample {
    std::string text; // embedded with the model's frozen embedder
    ImageFeatures image;
};

struct TrainConfig {
    double lr = 0.5;
    int epochs = 200;
    std::uint64_t seed = 42;
    int d = 32;
    std::vector<std::string> class_labels;
};

struct TrainResult {
    FusionWeights weights;
    std::vector<double> loss_trace; // epochs+1 entries; [0] is the initial loss
};

// Full-batch gradient descent on mean cross-entropy through the classifier
// and the attention projections; the embedder stays frozen.
TrainResult train_head(const std::vector<std::pair<FusionExample, int>>& dataset,
                       const TrainConfig& config);

struct FusionGradients {
    Mat W_q, W_k, W_v, W_out;
    std::vector<double> b_out;
};

double batch_mean_loss(const FusionWeights& w,
                       const std::vector<std::pair<FusionExample, int>>& batch);
FusionGradients analytic_gradient(const FusionWeights& w,
                                  const std::vector<std::pair<FusionExample, int>>& batch);

// Central finite differences on a seeded random subset of >= 50 coordinates
// (or all of them, for tiny models) against the supplied gradients. Relative
// error denominator is max(|analytic|, |numeric|, 1e-8).
double gradient_check_against(const FusionWeights& w,
                              const std::vector<std::pair<FusionExample, int>>& batch,
                              const FusionGradients& grads, double eps, std::uint64_t seed);
double numerical_gradient_check(const FusionWeights& w,
                                const std::vector<std::pair<FusionExample, int>>& batch, double eps,
                                std::uint64_t seed);

void save_weights(const FusionWeights& w, const std::filesystem::path& path);
FusionWeights load_weights(const std::filesystem::path& path);

} // namespace orthodoc
