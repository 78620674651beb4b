#pragma once

#include <Eigen/Dense>
#include <vector>

#include "wavecomp/image.hpp"

namespace wavecomp::metrics {

struct CkaResult {
    double score = 0.0;
    bool degenerate = false; // a centered operand had zero norm
};

// Linear centered kernel alignment between two representation matrices with
// the same sample count (rows): |Y'X|_F^2 / (|X'X|_F |Y'Y|_F) after column
// centering. Invariant to orthogonal right-multiplication and isotropic
// scaling; symmetric.
CkaResult linear_cka(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = 1.0;

    double c1() const { return (k1 * data_range) * (k1 * data_range); }
    double c2() const { return (k2 * data_range) * (k2 * data_range); }

    // data_range from the pooled value span of the pair (floored at 1 for a
    // degenerate constant pair). Representations are unbounded, unlike 8-bit
    // images, so the range is per-comparison.
    static SsimParams for_pair(const Image& a, const Image& b);
};

struct SsimResult {
    double score = 0.0;               // mean over maps and channels
    std::vector<Plane> maps;          // one per channel, valid windows only
    std::vector<double> channel_scores;
};

// Gaussian-windowed SSIM with per-channel maps over valid window positions
// ((W-window+1) x (H-window+1)).
SsimResult ssim(const Image& a, const Image& b, const SsimParams& params);

// Row-major reflow of an (N-1) x D token matrix into a W x H x C raster.
// Requires (N-1)*D == W*H*C; exact inverse below.
Image tokens_to_image(const Eigen::MatrixXd& tokens, int width, int height, int channels);
Eigen::MatrixXd image_to_tokens(const Image& image, int rows, int cols);

} // namespace wavecomp::metrics
