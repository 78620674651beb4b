#include <cmath>

#include "wavecomp/errors.hpp"
#include "wavecomp/harness.hpp"

namespace wavecomp::harness {

LayerCkaReport layerwise_cka_report(const vit::Model& model, const Dataset& ds,
                                    const std::vector<size_t>& indices,
                                    const wavelet::WaveletBasis& basis, int levels,
                                    const Eigen::VectorXd& eta_learned) {
    if (indices.empty()) throw UsageError("layerwise CKA needs a non-empty image sample");
    const int layer_count = model.config.num_layers + 1;
    const int n = 3 * levels + 1;
    if (eta_learned.size() != n)
        throw UsageError("composition weight count does not match 3*levels+1");

    LayerCkaReport report;
    report.summed.assign(layer_count, 0.0);
    report.learned.assign(layer_count, 0.0);

    for (size_t idx : indices) {
        if (idx >= ds.items.size()) throw DataError("CKA sample index out of range");
        const Image& image = ds.items[idx].image;
        vit::LayerTrace original = vit::forward(model, image);
        wavelet::PrimitiveSet primitives =
            wavelet::primitive_images(wavelet::decompose(image, basis, levels));

        std::vector<vit::LayerTrace> traces;
        traces.reserve(primitives.items.size());
        for (const wavelet::Primitive& prim : primitives.items)
            traces.push_back(vit::forward(model, prim.image));

        for (int l = 0; l < layer_count; ++l) {
            Eigen::MatrixXd summed = Eigen::MatrixXd::Zero(original.layers[l].rows(),
                                                           original.layers[l].cols());
            Eigen::MatrixXd learned = summed;
            for (int p = 0; p < n; ++p) {
                summed += traces[p].layers[l];
                learned += eta_learned[p] * traces[p].layers[l];
            }
            report.summed[l] += metrics::linear_cka(original.layers[l], summed).score;
            report.learned[l] += metrics::linear_cka(original.layers[l], learned).score;
        }
    }
    const double count = static_cast<double>(indices.size());
    for (int l = 0; l < layer_count; ++l) {
        report.summed[l] /= count;
        report.learned[l] /= count;
    }
    return report;
}

SsimMapReport ssim_map_report(const vit::Model& model, const Image& image,
                              const wavelet::WaveletBasis& basis, int levels,
                              const Eigen::VectorXd& eta) {
    const vit::ModelConfig& cfg = model.config;
    const long token_values =
        static_cast<long>(cfg.tokens() - 1) * cfg.hidden_dim;
    const long pixel_values =
        static_cast<long>(cfg.image_size) * cfg.image_size * cfg.channels;
    if (token_values != pixel_values)
        throw UsageError("SSIM map needs (N-1)*D == W*H*C; model has " +
                         std::to_string(token_values) + " token values vs " +
                         std::to_string(pixel_values) + " pixels");

    vit::LayerTrace original = vit::forward(model, image);
    wavelet::PrimitiveSet primitives =
        wavelet::primitive_images(wavelet::decompose(image, basis, levels));
    if (static_cast<long>(primitives.items.size()) != eta.size())
        throw UsageError("composition weight count does not match the primitive count");

    const int last = cfg.num_layers;
    Eigen::MatrixXd composed = Eigen::MatrixXd::Zero(cfg.tokens(), cfg.hidden_dim);
    for (int p = 0; p < eta.size(); ++p)
        composed += eta[p] * vit::forward(model, primitives.items[p].image).layers[last];

    Eigen::MatrixXd tokens_orig = original.layers[last].bottomRows(cfg.tokens() - 1);
    Eigen::MatrixXd tokens_comp = composed.bottomRows(cfg.tokens() - 1);
    Image a = metrics::tokens_to_image(tokens_orig, cfg.image_size, cfg.image_size, cfg.channels);
    Image b = metrics::tokens_to_image(tokens_comp, cfg.image_size, cfg.image_size, cfg.channels);

    SsimMapReport report;
    report.params = metrics::SsimParams::for_pair(a, b);
    metrics::SsimResult result = metrics::ssim(a, b, report.params);
    report.maps = std::move(result.maps);
    report.channel_scores = std::move(result.channel_scores);
    report.score = result.score;
    return report;
}

} // namespace wavecomp::harness
