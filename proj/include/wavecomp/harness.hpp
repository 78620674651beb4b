#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "wavecomp/composer.hpp"
#include "wavecomp/image.hpp"
#include "wavecomp/metrics.hpp"
#include "wavecomp/vit.hpp"
#include "wavecomp/wavelet.hpp"

namespace wavecomp::harness {

// --- datasets ---------------------------------------------------------------

struct DatasetItem {
    std::string id;
    Image image;
    int label = 0;
};

struct Dataset {
    std::vector<DatasetItem> items;
    int num_classes = 0;
    std::string provenance;

    size_t size() const { return items.size(); }
};

// Class-conditional procedural images: per-class oriented gratings plus
// seeded blobs, pixels in [0,1]. Deterministic per (args, seed) and
// separable enough that a pixel-space nearest-centroid classifier beats
// chance.
Dataset generate_synthetic_dataset(int num_classes, int per_class, int size, uint64_t seed);

// CSV manifest "id,relative_path,label"; rows resolve relative to the
// manifest location; images are PPM (P6) or TNSR, scaled to [0,1].
Dataset load_manifest(const std::filesystem::path& manifest_path);

void save_dataset(const Dataset& ds, const std::filesystem::path& dir, bool as_ppm = false);

struct Split {
    std::vector<size_t> train, val, test;
    uint64_t seed = 0;
    bool stratified = true;
};

// Seeded stratified 60:20:20 split. Classes with fewer than 5 members force
// an unstratified fallback (warning on stderr).
Split split_dataset(const Dataset& ds, uint64_t seed);

// Same split from bare labels (used when only a bundle cache is at hand);
// split_dataset delegates here, so the two agree for the same seed.
Split split_by_labels(const std::vector<int>& labels, int num_classes, uint64_t seed);

// --- primitive CLS cache ------------------------------------------------------

struct BundleCache {
    uint64_t model_hash = 0;
    wavelet::WaveletName basis = wavelet::WaveletName::haar;
    int levels = 1;
    int layer = 0;
    int n = 0;
    int dim = 0;
    int num_classes = 0;
    std::vector<composer::CLSBundle> bundles; // dataset order
};

// Decompose each image, push every primitive plus the original through the
// frozen encoder, and record the layer-`layer` CLS rows in canonical subband
// order. layer == -1 selects the final (post-LN) layer.
BundleCache cache_primitive_cls(const vit::Model& model, const Dataset& ds,
                                const wavelet::WaveletBasis& basis, int levels, int layer);

void save_cache(const std::filesystem::path& path, const BundleCache& cache);
BundleCache load_cache(const std::filesystem::path& path);

// Refuses a cache whose key (model hash, basis, levels, layer) is stale.
BundleCache load_cache_checked(const std::filesystem::path& path, uint64_t model_hash,
                               wavelet::WaveletName basis, int levels, int layer);

// --- evaluation ---------------------------------------------------------------

enum class EvalPath { original, summed, learned };

struct EvalRow {
    std::string condition;
    double accuracy_gt = 0.0;       // vs dataset labels
    double accuracy_relative = 0.0; // vs the frozen model's own predictions
    size_t count = 0;
};

std::vector<int> predict(const vit::Model& model, const BundleCache& cache,
                         const std::vector<size_t>& indices, EvalPath path,
                         const Eigen::VectorXd* eta = nullptr);

EvalRow eval_accuracy(const vit::Model& model, const BundleCache& cache,
                      const std::vector<size_t>& indices, EvalPath path,
                      const Eigen::VectorXd* eta, const std::string& condition);

struct ErrorReport {
    // Percentages; the aggregate errors are sums of their disjoint parts, so
    // err_learned == err_learned_not_org + err_both holds bitwise.
    double err_learned = 0.0;
    double err_org = 0.0;
    double err_learned_not_org = 0.0;
    double err_org_not_learned = 0.0;
    double err_both = 0.0;
    size_t count = 0;
};

ErrorReport error_breakdown(const std::vector<int>& predictions_learned,
                            const std::vector<int>& predictions_original,
                            const std::vector<int>& labels);

// --- image-space operations ----------------------------------------------------

// Pixelwise sum of eta_p * primitive_p. No clipping; 8-bit export is where
// clamping happens.
Image reweight_image(const wavelet::PrimitiveSet& primitives, const Eigen::VectorXd& eta);

// Additive seeded Gaussian noise, clamped to [0,1].
Image distort_noise(const Image& image, double sigma, uint64_t seed);

// Block-DCT compression surrogate: 8x8 blockwise DCT per channel, uniform
// quantization with the quality-scaled standard luminance table, inverse,
// clamp. A surrogate for JPEG's spectral character, not bit-compatible with
// JPEG files.
Image distort_compress(const Image& image, int quality);

// Annex-K luminance table scaled to `quality` (all ones at quality 100).
std::array<int, 64> compression_quant_table(int quality);

// --- reports --------------------------------------------------------------------

struct LayerCkaReport {
    std::vector<double> summed;  // per layer 0..L, averaged over images
    std::vector<double> learned;
};

// Per-layer CKA between the original token matrix and the eta-weighted sum
// of the primitives' token matrices (CLS-trained scalars broadcast to all
// tokens), tokens as samples.
LayerCkaReport layerwise_cka_report(const vit::Model& model, const Dataset& ds,
                                    const std::vector<size_t>& indices,
                                    const wavelet::WaveletBasis& basis, int levels,
                                    const Eigen::VectorXd& eta_learned);

struct SsimMapReport {
    std::vector<Plane> maps; // per channel
    std::vector<double> channel_scores;
    double score = 0.0;
    metrics::SsimParams params;
};

// Final-layer tokens of the original vs the eta-composed primitives, CLS
// stripped, reflowed to image shape, windowed SSIM per channel.
SsimMapReport ssim_map_report(const vit::Model& model, const Image& image,
                              const wavelet::WaveletBasis& basis, int levels,
                              const Eigen::VectorXd& eta);

// --- experiment pipeline ----------------------------------------------------------

struct RunConfig {
    // model
    std::string model = "toy"; // "toy" or a .vitw path
    uint64_t model_seed = 42;
    // dataset
    std::string dataset = "synthetic"; // "synthetic" or a manifest path
    int classes = 10;
    int per_class = 20;
    int image_size = 32;
    uint64_t dataset_seed = 7;
    uint64_t split_seed = 1;
    // decomposition / probing
    wavelet::WaveletName basis = wavelet::WaveletName::haar;
    int levels = 1;
    int layer = -1; // -1 = final layer
    // training
    std::vector<composer::ConstraintMode> modes = {composer::ConstraintMode::unconstrained,
                                                   composer::ConstraintMode::conic,
                                                   composer::ConstraintMode::convex};
    double lr = 0.001;
    int epochs = 100;
    uint64_t train_seed = 3;
    bool soft_target = false;
    // distortions
    double noise_sigma = 0.1;
    int jpeg_quality = 50;
    uint64_t distort_seed = 9;
    // report sampling
    int cka_images = 8;
    int ssim_image_index = 0;
    int reweight_images = 200;

    static RunConfig from_file(const std::filesystem::path& path);
    static RunConfig from_string(const std::string& text);
    std::map<std::string, std::string> echo() const; // resolved key/value view
};

struct RunResult {
    std::filesystem::path out_dir;
    std::vector<std::string> report_files;
};

// Full pipeline: dataset -> cache -> train (per mode) -> accuracy tables ->
// weights dump -> reweighted-image eval -> error breakdown -> distortion eval
// -> CKA/SSIM reports; everything indexed by manifest.json in out_dir. A
// stage failure records the stage in an incomplete manifest and rethrows.
RunResult run_experiment(const RunConfig& config, const std::filesystem::path& out_dir);

} // namespace wavecomp::harness
