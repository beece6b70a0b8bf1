#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "h2s/matrix.hpp"
#include "h2s/rng.hpp"

namespace h2s {

struct BlockSpec {
    std::uint32_t channels = 0;
    bool use_residual = true;
};

struct EmbedderConfig {
    std::uint32_t input_frames = 625;  // T
    std::uint32_t n_mels = 80;
    std::vector<BlockSpec> blocks = {{16, true}, {32, true}, {64, true}, {128, true}};
    std::uint32_t embed_dim = 128;  // D
    std::uint64_t rng_seed = 1234;

    void validate() const;  // throws ConfigError
};

struct ArcFaceConfig {
    double scale = 64.0;   // s
    double margin = 0.50;  // m, radians
    std::uint32_t n_classes = 0;

    void validate() const;
};

struct TrainConfig {
    std::uint32_t epochs = 100;
    std::uint32_t batch_size = 32;
    double lr = 1e-2;
    double lr_decay = 0.5;
    std::uint32_t lr_decay_every = 10;
    double weight_decay = 1e-1;
    std::uint64_t rng_seed = 1234;

    void validate() const;
};

// All parameters are double precision; float32 appears only in exported
// embeddings.
struct BlockParams {
    std::vector<double> conv_w;      // [cout, cin, 3, 3] row-major
    std::vector<double> conv_b;      // [cout]
    std::vector<double> shortcut_w;  // [cout, cin]; empty for identity shortcut
};

struct EmbedderParams {
    std::vector<BlockParams> blocks;
    std::vector<double> proj_w;  // [c_last, D]
    std::vector<double> proj_b;  // [D]
    MatD head_w;                 // D x n_classes margin-head weight matrix
};

struct Embedding {
    std::vector<float> vector;  // unit norm
    std::string song_id;
};

enum class FixMode { train, infer };

// Crops (random in train mode, centered in infer mode) or symmetrically pads
// with pad_value so the output has exactly T rows. rng is consulted only for
// train-mode crops.
MatF fix_length(const MatF& m, std::size_t T, FixMode mode, Rng* rng, float pad_value);

EmbedderParams init_params(const EmbedderConfig& cfg, std::uint32_t n_classes);

// Block stack (3x3 conv -> ReLU -> residual add -> 2x2 average pool), global
// average pool, linear projection, L2 normalization. Returns a unit vector.
std::vector<double> forward_embed(const EmbedderParams& params, const EmbedderConfig& cfg,
                                  const MatF& patch);

std::vector<double> l2_normalize(const std::vector<double>& v);  // throws ZeroVector

struct ArcFaceResult {
    double loss = 0.0;
    MatD logits;  // B x C, margin applied to the target column, scaled by s
    MatD cos;     // B x C, clamped cosines (margin-free logits are s * cos)
    MatD d_emb;   // B x D, dLoss/dEmbedding (only when with_grad)
    MatD d_head;  // D x C, dLoss/dW (only when with_grad)
};

// Additive-angular-margin softmax cross-entropy over cosines between unit
// embeddings and the L2-normalized columns of W.
ArcFaceResult arcface_loss(const MatD& embeddings, const std::vector<std::uint32_t>& labels,
                           const MatD& W, const ArcFaceConfig& cfg, bool with_grad = false);

// Shape-alike of EmbedderParams holding gradient accumulators.
EmbedderParams zero_like(const EmbedderParams& p);

// Flat view over every parameter tensor in canonical (checkpoint) order.
struct TensorRef {
    std::string name;
    std::vector<std::size_t> dims;
    std::vector<double>* data;
    bool is_bias;
};
std::vector<TensorRef> tensor_refs(EmbedderParams& p);

// Exact analytic gradients of arcface_loss(forward_embed(batch)) w.r.t. every
// parameter. Returns the mean batch loss; adds gradients into `grads`; also
// reports the margin-free cosines for accuracy bookkeeping.
double backward_batch(const EmbedderParams& params, const EmbedderConfig& cfg,
                      const std::vector<MatF>& batch, const std::vector<std::uint32_t>& labels,
                      const ArcFaceConfig& acfg, EmbedderParams& grads, MatD* cos_out = nullptr);

// p <- p - lr_e * (g + weight_decay * p) with lr_e = lr * decay^(epoch/every);
// biases are excluded from weight decay.
void sgd_step(EmbedderParams& params, const EmbedderParams& grads, const TrainConfig& t,
              std::uint32_t epoch);

struct TrainHistory {
    std::vector<double> loss;      // per-epoch mean arcface loss
    std::vector<double> accuracy;  // per-epoch margin-free top-1 accuracy
};

struct TrainResult {
    EmbedderParams params;
    TrainHistory history;
};

TrainResult train(const std::vector<MatF>& mels, const std::vector<std::uint32_t>& labels,
                  const EmbedderConfig& e, const ArcFaceConfig& a, const TrainConfig& t,
                  float pad_value);

// Checkpoint: magic "H2SPAR1\0", u32 tensor count, then per tensor
// u16 name length + name, u32 rank, u32 dims..., float64 data, little-endian.
void save_checkpoint(const EmbedderParams& params, const std::filesystem::path& path);
EmbedderParams load_checkpoint(const std::filesystem::path& path, const EmbedderConfig& cfg);

}  // namespace h2s
