#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "wavecomp/image.hpp"

namespace wavecomp::vit {

struct ModelConfig {
    int image_size = 32; // square images, W = H
    int channels = 3;
    int patch_size = 4;
    int hidden_dim = 48;
    int num_heads = 4;
    int num_layers = 4;
    int mlp_dim = 192;
    int num_classes = 10;

    int grid() const { return image_size / patch_size; }
    int tokens() const { return grid() * grid() + 1; } // patches + CLS
    int patch_dim() const { return patch_size * patch_size * channels; }
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

// Desk-scale defaults: 65 tokens x 48 dims, so (N-1)*D = 32*32*3 and the
// token-to-image reshape is exact, mirroring ViT-B/16 at 224^2.
ModelConfig toy_config();

constexpr double kLayerNormEps = 1e-6;

struct EncoderLayerParams {
    Eigen::VectorXd ln1_scale, ln1_shift;
    Eigen::MatrixXd wq, wk, wv, wo; // (D x D), rows = output dims
    Eigen::VectorXd bq, bk, bv, bo;
    Eigen::VectorXd ln2_scale, ln2_shift;
    Eigen::MatrixXd mlp_w1; // (mlp_dim x D)
    Eigen::VectorXd mlp_b1;
    Eigen::MatrixXd mlp_w2; // (D x mlp_dim)
    Eigen::VectorXd mlp_b2;
};

// Frozen ViT encoder + classifier head. Immutable after construction; safe to
// share across threads.
struct Model {
    ModelConfig config;
    Eigen::MatrixXd patch_weight; // (D x P*P*C)
    Eigen::VectorXd patch_bias;
    Eigen::VectorXd cls_embedding;
    Eigen::MatrixXd pos_embedding; // (N x D)
    std::vector<EncoderLayerParams> layers;
    Eigen::VectorXd lnf_scale, lnf_shift;
    Eigen::MatrixXd head_weight; // (K x D)
    Eigen::VectorXd head_bias;
};

using TensorMap = std::map<std::string, wavecomp::Tensor>;

// Canonical tensor names and shapes for a config, in container order.
std::vector<std::pair<std::string, std::vector<uint32_t>>> tensor_layout(const ModelConfig& config);

Model model_from_tensors(const ModelConfig& config, const TensorMap& tensors);
TensorMap model_to_tensors(const Model& model);

// Deterministic seeded init: truncated normal (std 0.02, clipped at 2 sigma)
// for weights/embeddings, zeros for biases and LN shifts, ones for LN scales.
// Each tensor draws from its own named stream, so (config, seed) fixes every
// bit regardless of construction order.
Model init_random(const ModelConfig& config, uint64_t seed);

// Per-layer token matrices: index 0 = embedded input, index l = output of
// encoder layer l; the final entry has the terminal layer-norm applied.
struct LayerTrace {
    std::vector<Eigen::MatrixXd> layers; // each (N x D), row 0 = CLS
};

LayerTrace forward(const Model& model, const Image& image);

// Variant used by diagnostics/tests: also returns every softmaxed attention
// map (layers * heads matrices of shape N x N).
LayerTrace forward_with_attention(const Model& model, const Image& image,
                                  std::vector<Eigen::MatrixXd>* attention_maps);

Eigen::VectorXd cls_token(const LayerTrace& trace, int layer);

Eigen::VectorXd classify(const Model& model, const Eigen::VectorXd& cls);

// Argmax with ties broken toward the lowest class index.
int predicted_class(const Eigen::VectorXd& logits);

// Exact-CDF GELU, x * Phi(x).
double gelu(double x);

// Normalize one token (mean 0, variance 1 under eps) before scale-shift.
Eigen::VectorXd layer_norm_normalize(const Eigen::VectorXd& x, double eps = kLayerNormEps);

// --- weight container -------------------------------------------------------
// Layout: magic "VITW", version u32 LE, 8 u32 config fields in declaration
// order, tensor directory (count u32; per tensor: name length u16, UTF-8
// name, ndim u32, dims u32*ndim, f64 LE row-major payload).
std::vector<uint8_t> save_weights(const Model& model);
Model load_weights(const std::vector<uint8_t>& bytes);
void save_weights_file(const std::filesystem::path& path, const Model& model);
Model load_weights_file(const std::filesystem::path& path);

// FNV-1a over the serialized container; used to key primitive caches.
uint64_t model_hash(const Model& model);

} // namespace wavecomp::vit
