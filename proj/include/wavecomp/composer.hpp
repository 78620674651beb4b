#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "wavecomp/vit.hpp"
#include "wavecomp/wavelet.hpp"

namespace wavecomp::composer {

enum class ConstraintMode { unconstrained, conic, convex };

std::string to_string(ConstraintMode mode);
ConstraintMode mode_from_string(std::string_view s);

struct TrainHyper {
    double lr = 0.001;
    int epochs = 100;
    uint64_t seed = 0;
    // Distillation variant: match the original's softmax instead of its hard
    // argmax. Off by default; relative accuracy treats the original
    // prediction as ground truth.
    bool soft_target = false;
};

struct HistoryEntry {
    int epoch = 0; // 0 = initialization (eta = 1, projected)
    double train_loss = 0.0;
    double val_relative_accuracy = 0.0;
    Eigen::VectorXd eta; // weights at the end of the epoch
};

struct Provenance {
    wavelet::WaveletName basis = wavelet::WaveletName::haar;
    int levels = 1;
    int layer = 0; // encoder layer whose CLS tokens were probed
};

// Learned subband weights, canonical PrimitiveSet order (LL first).
struct CompositionModel {
    Eigen::VectorXd weights;
    ConstraintMode mode = ConstraintMode::unconstrained;
    Provenance provenance;
    TrainHyper hyper;
    std::vector<HistoryEntry> history;

    int n() const { return static_cast<int>(weights.size()); }
};

// Per-image probe record: row p of z holds the CLS token of primitive p at
// the probed layer; target is the frozen model's own prediction for the
// original image, not the dataset label.
struct CLSBundle {
    std::string id;
    Eigen::MatrixXd z; // n x D
    Eigen::VectorXd z_orig;
    int target = 0;
    int label = -1;
};

// Weighted sum of primitive CLS tokens: returns Z^T eta.
Eigen::VectorXd compose(const Eigen::VectorXd& eta, const Eigen::MatrixXd& z);

// unconstrained: identity; conic: elementwise clamp at zero; convex:
// Euclidean projection onto the probability simplex (sort-based threshold).
// Bitwise idempotent in all modes.
Eigen::VectorXd project(const Eigen::VectorXd& eta, ConstraintMode mode);

struct LossGrad {
    double loss = 0.0;
    Eigen::VectorXd grad;
};

// Cross-entropy of classify(compose(eta, Z)) against the hard target, with
// the exact chain-rule gradient through the affine head:
// grad = Z W_c^T (softmax - onehot(t)).
LossGrad loss_and_grad(const vit::Model& model, const Eigen::VectorXd& eta,
                       const Eigen::MatrixXd& z, int target);

// Soft-distillation variant against a target distribution.
LossGrad loss_and_grad_soft(const vit::Model& model, const Eigen::VectorXd& eta,
                            const Eigen::MatrixXd& z, const Eigen::VectorXd& target_probs);

double mean_loss(const vit::Model& model, const Eigen::VectorXd& eta,
                 const std::vector<CLSBundle>& bundles, bool soft_target = false);

// Agreement rate with the frozen model's own predictions.
double relative_accuracy(const vit::Model& model, const Eigen::VectorXd& eta,
                         const std::vector<CLSBundle>& bundles);

// Projected per-example SGD from eta = 1 (projected), seeded shuffling each
// epoch, feasible after every update. Returns the iterate with the best
// validation relative accuracy (ties -> earliest epoch, initialization
// included as epoch 0) plus the full history. An empty val split validates
// on the train split.
CompositionModel train(const vit::Model& model, const std::vector<CLSBundle>& train_split,
                       const std::vector<CLSBundle>& val_split, ConstraintMode mode,
                       const TrainHyper& hyper, const Provenance& provenance);

// Human-readable text record; floats carry 17 significant digits so parsing
// reproduces the exact doubles.
std::string to_text(const CompositionModel& cm);
CompositionModel from_text(const std::string& text);
void save_composition(const std::filesystem::path& path, const CompositionModel& cm);
CompositionModel load_composition(const std::filesystem::path& path);

} // namespace wavecomp::composer
