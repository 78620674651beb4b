#include "wavecomp/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "wavecomp/errors.hpp"

namespace wavecomp::metrics {

CkaResult linear_cka(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    if (x.rows() != y.rows())
        throw UsageError("CKA operands must share the sample count (rows): " +
                         std::to_string(x.rows()) + " vs " + std::to_string(y.rows()));
    if (x.rows() < 2) throw UsageError("CKA needs at least 2 samples");
    Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
    Eigen::MatrixXd yc = y.rowwise() - y.colwise().mean();
    double cross = (yc.transpose() * xc).squaredNorm();
    double xn = (xc.transpose() * xc).norm();
    double yn = (yc.transpose() * yc).norm();
    if (xn == 0.0 || yn == 0.0) return {0.0, true};
    return {cross / (xn * yn), false};
}

SsimParams SsimParams::for_pair(const Image& a, const Image& b) {
    SsimParams p;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : a.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (double v : b.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double span = hi - lo;
    p.data_range = span > 0.0 ? span : 1.0;
    return p;
}

namespace {

std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(static_cast<size_t>(size) * size);
    const double half = (size - 1) / 2.0;
    double sum = 0.0;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double dx = x - half, dy = y - half;
            double g = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            w[static_cast<size_t>(y) * size + x] = g;
            sum += g;
        }
    }
    for (double& v : w) v /= sum;
    return w;
}

} // namespace

SsimResult ssim(const Image& a, const Image& b, const SsimParams& params) {
    if (!a.same_shape(b))
        throw UsageError("SSIM operands must have identical shapes");
    if (params.data_range <= 0.0) throw UsageError("SSIM data range must be positive");
    const int win = params.window;
    if (a.width < win || a.height < win)
        throw UsageError("image smaller than the SSIM window");
    const std::vector<double> w = gaussian_window(win, params.sigma);
    const double c1 = params.c1(), c2 = params.c2();
    const int ow = a.width - win + 1, oh = a.height - win + 1;

    SsimResult result;
    double total = 0.0;
    for (int ch = 0; ch < a.channels; ++ch) {
        Plane map(ow, oh);
        double csum = 0.0;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                size_t wi = 0;
                for (int dy = 0; dy < win; ++dy) {
                    for (int dx = 0; dx < win; ++dx, ++wi) {
                        double g = w[wi];
                        double va = a.at(ox + dx, oy + dy, ch);
                        double vb = b.at(ox + dx, oy + dy, ch);
                        mx += g * va;
                        my += g * vb;
                        sxx += g * va * va;
                        syy += g * vb * vb;
                        sxy += g * va * vb;
                    }
                }
                double vx = sxx - mx * mx;
                double vy = syy - my * my;
                double cov = sxy - mx * my;
                double v = ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
                           ((mx * mx + my * my + c1) * (vx + vy + c2));
                // |v| <= 1 holds mathematically; clamp the last-ulp rounding
                v = std::clamp(v, -1.0, 1.0);
                map.at(ox, oy) = v;
                csum += v;
            }
        }
        double cscore = csum / (static_cast<double>(ow) * oh);
        result.channel_scores.push_back(cscore);
        total += cscore;
        result.maps.push_back(std::move(map));
    }
    result.score = total / a.channels;
    return result;
}

Image tokens_to_image(const Eigen::MatrixXd& tokens, int width, int height, int channels) {
    const size_t need = static_cast<size_t>(width) * height * channels;
    const size_t have = static_cast<size_t>(tokens.rows()) * tokens.cols();
    if (need != have)
        throw UsageError("cannot reshape " + std::to_string(tokens.rows()) + "x" +
                         std::to_string(tokens.cols()) + " tokens (" + std::to_string(have) +
                         " values) into " + std::to_string(width) + "x" + std::to_string(height) +
                         "x" + std::to_string(channels) + " (" + std::to_string(need) +
                         " values); strip the CLS row and check (N-1)*D == W*H*C");
    Image img(width, height, channels);
    size_t i = 0;
    for (Eigen::Index r = 0; r < tokens.rows(); ++r)
        for (Eigen::Index c = 0; c < tokens.cols(); ++c)
            img.data[i++] = tokens(r, c);
    return img;
}

Eigen::MatrixXd image_to_tokens(const Image& image, int rows, int cols) {
    const size_t need = static_cast<size_t>(rows) * cols;
    if (need != image.data.size())
        throw UsageError("token shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " does not match image value count " + std::to_string(image.data.size()));
    Eigen::MatrixXd tokens(rows, cols);
    size_t i = 0;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            tokens(r, c) = image.data[i++];
    return tokens;
}

} // namespace wavecomp::metrics
