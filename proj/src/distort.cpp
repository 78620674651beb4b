#include <algorithm>
#include <cmath>

#include "wavecomp/errors.hpp"
#include "wavecomp/harness.hpp"
#include "wavecomp/rng.hpp"

namespace wavecomp::harness {

namespace {

// Annex-K luminance quantization table (ISO/IEC 10918-1), zig-zag-free layout.
constexpr int kLuminanceTable[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  //
    12, 12, 14, 19, 26,  58,  60,  55,  //
    14, 13, 16, 24, 40,  57,  69,  56,  //
    14, 17, 22, 29, 51,  87,  80,  62,  //
    18, 22, 37, 56, 68,  109, 103, 77,  //
    24, 35, 55, 64, 81,  104, 113, 92,  //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99};

constexpr int kBlock = 8;

// Orthonormal DCT-II basis, an 8x8 orthogonal matrix.
struct DctBasis {
    double m[kBlock][kBlock];
    DctBasis() {
        const double pi = 3.14159265358979323846;
        for (int u = 0; u < kBlock; ++u) {
            double scale = (u == 0) ? std::sqrt(1.0 / kBlock) : std::sqrt(2.0 / kBlock);
            for (int x = 0; x < kBlock; ++x)
                m[u][x] = scale * std::cos((2 * x + 1) * u * pi / (2.0 * kBlock));
        }
    }
};

const DctBasis kDct;

void dct2_block(const double in[kBlock][kBlock], double out[kBlock][kBlock], bool inverse) {
    double tmp[kBlock][kBlock];
    // rows
    for (int y = 0; y < kBlock; ++y)
        for (int u = 0; u < kBlock; ++u) {
            double s = 0.0;
            for (int x = 0; x < kBlock; ++x)
                s += in[y][x] * (inverse ? kDct.m[x][u] : kDct.m[u][x]);
            tmp[y][u] = s;
        }
    // columns
    for (int v = 0; v < kBlock; ++v)
        for (int u = 0; u < kBlock; ++u) {
            double s = 0.0;
            for (int y = 0; y < kBlock; ++y)
                s += tmp[y][u] * (inverse ? kDct.m[y][v] : kDct.m[v][y]);
            out[v][u] = s;
        }
}

} // namespace

Image distort_noise(const Image& image, double sigma, uint64_t seed) {
    if (sigma < 0.0) throw UsageError("noise sigma must be non-negative");
    if (sigma == 0.0) return image;
    Rng rng(seed, "gaussian-noise");
    Image out = image;
    for (double& v : out.data) v = std::clamp(v + rng.normal(0.0, sigma), 0.0, 1.0);
    return out;
}

std::array<int, 64> compression_quant_table(int quality) {
    if (quality < 1 || quality > 100)
        throw UsageError("compression quality must be in [1, 100]");
    // standard libjpeg quality scaling; all entries hit 1 at quality 100
    const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    std::array<int, 64> table{};
    for (int i = 0; i < 64; ++i)
        table[i] = std::clamp((kLuminanceTable[i] * scale + 50) / 100, 1, 255);
    return table;
}

Image distort_compress(const Image& image, int quality) {
    const std::array<int, 64> table = compression_quant_table(quality);
    if (image.width % kBlock != 0 || image.height % kBlock != 0)
        throw UsageError("compression surrogate needs dimensions divisible by 8; got " +
                         std::to_string(image.width) + "x" + std::to_string(image.height));

    Image out = image;
    double block[kBlock][kBlock], coeff[kBlock][kBlock];
    for (int c = 0; c < image.channels; ++c) {
        for (int by = 0; by < image.height; by += kBlock) {
            for (int bx = 0; bx < image.width; bx += kBlock) {
                // to 8-bit scale with the JPEG level shift
                for (int y = 0; y < kBlock; ++y)
                    for (int x = 0; x < kBlock; ++x)
                        block[y][x] = image.at(bx + x, by + y, c) * 255.0 - 128.0;
                dct2_block(block, coeff, false);
                for (int y = 0; y < kBlock; ++y)
                    for (int x = 0; x < kBlock; ++x) {
                        const double q = table[y * kBlock + x];
                        coeff[y][x] = std::round(coeff[y][x] / q) * q;
                    }
                dct2_block(coeff, block, true);
                for (int y = 0; y < kBlock; ++y)
                    for (int x = 0; x < kBlock; ++x) {
                        // decoder-style 8-bit output grid, then back to [0,1]
                        double v = std::round(std::clamp(block[y][x] + 128.0, 0.0, 255.0));
                        out.at(bx + x, by + y, c) = v / 255.0;
                    }
            }
        }
    }
    return out;
}

} // namespace wavecomp::harness
