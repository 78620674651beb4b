#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "wavecomp/image.hpp"

namespace wavecomp::wavelet {

enum class WaveletName { haar, db4 };

std::string to_string(WaveletName name);
WaveletName wavelet_name_from_string(std::string_view s);

// Orthonormal quadrature-mirror filter pair.
// Invariants: sum(lo) = sqrt(2), sum(lo^2) = 1, hi[i] = (-1)^i * lo[len-1-i],
// synthesis filters are the time-reverse of the analysis filters.
struct WaveletBasis {
    WaveletName name;
    std::vector<double> analysis_lo;
    std::vector<double> analysis_hi;
    std::vector<double> synthesis_lo;
    std::vector<double> synthesis_hi;

    int taps() const { return static_cast<int>(analysis_lo.size()); }
};

WaveletBasis basis_filters(WaveletName name);
WaveletBasis basis_filters(std::string_view name);

// Subband naming gives the separable filter pair as (x direction, y direction):
// LH = low-pass along x, high-pass along y; HL the converse. LL exists only at
// the deepest level.
enum class SubbandKind { LL, LH, HL, HH };

std::string to_string(SubbandKind kind);

struct SubbandId {
    int level = 1; // 1..levels, higher = coarser
    SubbandKind kind = SubbandKind::LL;

    bool operator==(const SubbandId&) const = default;
};

std::string to_string(const SubbandId& id);

// Canonical subband order: LL first, then details by descending level,
// LH/HL/HH within a level. This is the index p used by every downstream
// weight vector.
std::vector<SubbandId> canonical_subbands(int levels);

// Per-level detail blocks, one plane per channel.
struct LevelDetails {
    std::vector<Plane> lh, hl, hh;
};

// Multilevel periodized 2D DWT coefficients. approx holds the level-`levels`
// LL block per channel; details[m-1] holds the level-m blocks.
struct DecompositionTree {
    WaveletBasis basis;
    int levels = 0;
    int width = 0, height = 0, channels = 0;
    std::vector<Plane> approx;
    std::vector<LevelDetails> details;

    const Plane& block(const SubbandId& id, int channel) const;
    Plane& block(const SubbandId& id, int channel);
};

struct Primitive {
    SubbandId id;
    Image image;
};

// The 3*levels+1 per-subband image-space reconstructions, in canonical order.
// Their pixelwise sum equals the source image (linearity of synthesis).
struct PrimitiveSet {
    std::vector<Primitive> items;

    size_t size() const { return items.size(); }
};

// Separable periodized analysis, rows (x) then columns (y) per channel,
// recursing on the LL block. Width and height must be divisible by
// 2^levels.
DecompositionTree decompose(const Image& image, const WaveletBasis& basis, int levels);

// Exact inverse of decompose (double precision round-trip within 1e-9).
Image reconstruct(const DecompositionTree& tree);

// reconstruct(tree with all blocks except one zeroed), for each subband.
PrimitiveSet primitive_images(const DecompositionTree& tree);

// Coefficient / pixel energy per channel (Parseval check helpers).
double coefficient_energy(const DecompositionTree& tree, int channel);
double pixel_energy(const Image& image, int channel);

} // namespace wavecomp::wavelet
