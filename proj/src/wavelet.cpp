#include "wavecomp/wavelet.hpp"

#include <algorithm>
#include <cmath>

#include "wavecomp/errors.hpp"

namespace wavecomp::wavelet {

namespace {

// Daubechies-4 (8-tap) scaling filter, orthonormal normalization
// (sum = sqrt(2)). Correctly rounded doubles from a 60-digit spectral
// factorization; the four moment/orthonormality identities hold to
// machine precision.
constexpr std::array<double, 8> kDb4Lo = {
    0.2303778133088965,    0.7148465705529157,   0.6308807679298589,
    -0.027983769416859854, -0.18703481171909309, 0.030841381835560764,
    0.0328830116668852,    -0.010597401785069032};

constexpr double kInvSqrt2 = 0.70710678118654752440;

std::vector<double> qmf_high(const std::vector<double>& lo) {
    const size_t len = lo.size();
    std::vector<double> hi(len);
    for (size_t i = 0; i < len; ++i)
        hi[i] = ((i % 2 == 0) ? 1.0 : -1.0) * lo[len - 1 - i];
    return hi;
}

std::vector<double> reversed(const std::vector<double>& f) {
    return {f.rbegin(), f.rend()};
}

// One periodized analysis pass: x (length n, even) -> approx in out[0..n/2),
// detail in out[n/2..n).  a[k] = sum_t lo[t] * x[(2k+t) mod n].
void analyze_1d(const double* x, int n, const WaveletBasis& b, double* out) {
    const int taps = b.taps();
    const int half = n / 2;
    for (int k = 0; k < half; ++k) {
        double a = 0.0, d = 0.0;
        for (int t = 0; t < taps; ++t) {
            double v = x[(2 * k + t) % n];
            a += b.analysis_lo[t] * v;
            d += b.analysis_hi[t] * v;
        }
        out[k] = a;
        out[half + k] = d;
    }
}

// Inverse of analyze_1d: gather over the zero-upsampled halves with the
// time-reversed (synthesis) filters. Exact transpose of the analysis
// operator, so orthonormality gives perfect reconstruction for any even n,
// including n < taps (the filter wraps).
void synthesize_1d(const double* in, int n, const WaveletBasis& b, double* out) {
    const int taps = b.taps();
    const int half = n / 2;
    for (int m = 0; m < n; ++m) {
        double acc = 0.0;
        for (int t = 0; t < taps; ++t) {
            // index into the upsampled coefficient stream
            int idx = m + t - (taps - 1);
            idx %= n;
            if (idx < 0) idx += n;
            if (idx % 2 == 0) {
                int k = idx / 2;
                acc += b.synthesis_lo[t] * in[k] + b.synthesis_hi[t] * in[half + k];
            }
        }
        out[m] = acc;
    }
}

// Single-level separable step: rows (along x) then columns (along y).
void dwt_step(const Plane& in, const WaveletBasis& b,
              Plane& ll, Plane& lh, Plane& hl, Plane& hh) {
    const int w = in.width, h = in.height;
    const int hw = w / 2, hh2 = h / 2;
    Plane tmp(w, h);
    for (int y = 0; y < h; ++y)
        analyze_1d(&in.v[static_cast<size_t>(y) * w], w, b, &tmp.v[static_cast<size_t>(y) * w]);
    Plane full(w, h);
    std::vector<double> col(h), colo(h);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) col[y] = tmp.at(x, y);
        analyze_1d(col.data(), h, b, colo.data());
        for (int y = 0; y < h; ++y) full.at(x, y) = colo[y];
    }
    ll = Plane(hw, hh2);
    lh = Plane(hw, hh2);
    hl = Plane(hw, hh2);
    hh = Plane(hw, hh2);
    for (int y = 0; y < hh2; ++y) {
        for (int x = 0; x < hw; ++x) {
            ll.at(x, y) = full.at(x, y);
            hl.at(x, y) = full.at(hw + x, y);      // high-pass along x
            lh.at(x, y) = full.at(x, hh2 + y);     // high-pass along y
            hh.at(x, y) = full.at(hw + x, hh2 + y);
        }
    }
}

Plane idwt_step(const Plane& ll, const Plane& lh, const Plane& hl, const Plane& hh,
                const WaveletBasis& b) {
    const int hw = ll.width, hh2 = ll.height;
    const int w = hw * 2, h = hh2 * 2;
    Plane full(w, h);
    for (int y = 0; y < hh2; ++y) {
        for (int x = 0; x < hw; ++x) {
            full.at(x, y) = ll.at(x, y);
            full.at(hw + x, y) = hl.at(x, y);
            full.at(x, hh2 + y) = lh.at(x, y);
            full.at(hw + x, hh2 + y) = hh.at(x, y);
        }
    }
    // undo columns, then rows
    Plane tmp(w, h);
    std::vector<double> col(h), colo(h);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) col[y] = full.at(x, y);
        synthesize_1d(col.data(), h, b, colo.data());
        for (int y = 0; y < h; ++y) tmp.at(x, y) = colo[y];
    }
    Plane out(w, h);
    for (int y = 0; y < h; ++y)
        synthesize_1d(&tmp.v[static_cast<size_t>(y) * w], w, b, &out.v[static_cast<size_t>(y) * w]);
    return out;
}

void validate_tree(const DecompositionTree& tree) {
    if (tree.levels < 1) throw DataError("decomposition tree has no levels");
    if (tree.channels < 1) throw DataError("decomposition tree has no channels");
    const int div = 1 << tree.levels;
    if (tree.width % div != 0 || tree.height % div != 0)
        throw DataError("decomposition tree shape is not divisible by 2^levels");
    if (static_cast<int>(tree.approx.size()) != tree.channels ||
        static_cast<int>(tree.details.size()) != tree.levels)
        throw DataError("decomposition tree is missing blocks");
    for (int c = 0; c < tree.channels; ++c) {
        if (tree.approx[c].width != tree.width / div || tree.approx[c].height != tree.height / div)
            throw DataError("approximation block shape mismatch");
    }
    for (int m = 1; m <= tree.levels; ++m) {
        const auto& d = tree.details[m - 1];
        int bw = tree.width >> m, bh = tree.height >> m;
        if (static_cast<int>(d.lh.size()) != tree.channels ||
            static_cast<int>(d.hl.size()) != tree.channels ||
            static_cast<int>(d.hh.size()) != tree.channels)
            throw DataError("detail blocks missing a channel");
        for (int c = 0; c < tree.channels; ++c) {
            for (const Plane* p : {&d.lh[c], &d.hl[c], &d.hh[c]}) {
                if (p->width != bw || p->height != bh)
                    throw DataError("detail block shape mismatch at level " + std::to_string(m));
            }
        }
    }
}

} // namespace

std::string to_string(WaveletName name) {
    switch (name) {
        case WaveletName::haar: return "haar";
        case WaveletName::db4: return "db4";
    }
    return "?";
}

WaveletName wavelet_name_from_string(std::string_view s) {
    if (s == "haar") return WaveletName::haar;
    if (s == "db4") return WaveletName::db4;
    throw UsageError("unknown wavelet basis \"" + std::string(s) +
                     "\" (supported: haar, db4)");
}

WaveletBasis basis_filters(WaveletName name) {
    WaveletBasis b;
    b.name = name;
    switch (name) {
        case WaveletName::haar:
            b.analysis_lo = {kInvSqrt2, kInvSqrt2};
            break;
        case WaveletName::db4:
            b.analysis_lo.assign(kDb4Lo.begin(), kDb4Lo.end());
            break;
    }
    b.analysis_hi = qmf_high(b.analysis_lo);
    b.synthesis_lo = reversed(b.analysis_lo);
    b.synthesis_hi = reversed(b.analysis_hi);
    return b;
}

WaveletBasis basis_filters(std::string_view name) {
    return basis_filters(wavelet_name_from_string(name));
}

std::string to_string(SubbandKind kind) {
    switch (kind) {
        case SubbandKind::LL: return "LL";
        case SubbandKind::LH: return "LH";
        case SubbandKind::HL: return "HL";
        case SubbandKind::HH: return "HH";
    }
    return "?";
}

std::string to_string(const SubbandId& id) {
    return to_string(id.kind) + std::to_string(id.level);
}

std::vector<SubbandId> canonical_subbands(int levels) {
    std::vector<SubbandId> out;
    out.push_back({levels, SubbandKind::LL});
    for (int m = levels; m >= 1; --m) {
        out.push_back({m, SubbandKind::LH});
        out.push_back({m, SubbandKind::HL});
        out.push_back({m, SubbandKind::HH});
    }
    return out;
}

const Plane& DecompositionTree::block(const SubbandId& id, int channel) const {
    if (id.kind == SubbandKind::LL) {
        if (id.level != levels)
            throw DataError("LL block exists only at the deepest level");
        return approx[channel];
    }
    const auto& d = details.at(id.level - 1);
    switch (id.kind) {
        case SubbandKind::LH: return d.lh[channel];
        case SubbandKind::HL: return d.hl[channel];
        default: return d.hh[channel];
    }
}

Plane& DecompositionTree::block(const SubbandId& id, int channel) {
    return const_cast<Plane&>(std::as_const(*this).block(id, channel));
}

DecompositionTree decompose(const Image& image, const WaveletBasis& basis, int levels) {
    if (levels < 1) throw UsageError("levels must be >= 1");
    if (image.width <= 0 || image.height <= 0 || image.channels <= 0)
        throw DataError("empty image");
    const int div = 1 << levels;
    if (image.width % div != 0 || image.height % div != 0) {
        auto pad = [&](int n) { return (n + div - 1) / div * div; };
        throw DataError("image " + std::to_string(image.width) + "x" +
                        std::to_string(image.height) + " is not divisible by 2^" +
                        std::to_string(levels) + "; pad to " +
                        std::to_string(pad(image.width)) + "x" +
                        std::to_string(pad(image.height)));
    }

    DecompositionTree tree;
    tree.basis = basis;
    tree.levels = levels;
    tree.width = image.width;
    tree.height = image.height;
    tree.channels = image.channels;
    tree.approx.resize(image.channels);
    tree.details.resize(levels);
    for (int m = 0; m < levels; ++m) {
        tree.details[m].lh.resize(image.channels);
        tree.details[m].hl.resize(image.channels);
        tree.details[m].hh.resize(image.channels);
    }

    for (int c = 0; c < image.channels; ++c) {
        Plane current = image.channel(c);
        for (int m = 1; m <= levels; ++m) {
            Plane ll, lh, hl, hh;
            dwt_step(current, basis, ll, lh, hl, hh);
            tree.details[m - 1].lh[c] = std::move(lh);
            tree.details[m - 1].hl[c] = std::move(hl);
            tree.details[m - 1].hh[c] = std::move(hh);
            current = std::move(ll);
        }
        tree.approx[c] = std::move(current);
    }
    return tree;
}

Image reconstruct(const DecompositionTree& tree) {
    validate_tree(tree);
    Image out(tree.width, tree.height, tree.channels);
    for (int c = 0; c < tree.channels; ++c) {
        Plane current = tree.approx[c];
        for (int m = tree.levels; m >= 1; --m) {
            const auto& d = tree.details[m - 1];
            current = idwt_step(current, d.lh[c], d.hl[c], d.hh[c], tree.basis);
        }
        out.set_channel(c, current);
    }
    return out;
}

PrimitiveSet primitive_images(const DecompositionTree& tree) {
    validate_tree(tree);
    PrimitiveSet set;
    for (const SubbandId& id : canonical_subbands(tree.levels)) {
        DecompositionTree solo = tree;
        for (int c = 0; c < tree.channels; ++c) {
            for (const SubbandId& other : canonical_subbands(tree.levels)) {
                if (other == id) continue;
                Plane& p = solo.block(other, c);
                std::fill(p.v.begin(), p.v.end(), 0.0);
            }
        }
        set.items.push_back({id, reconstruct(solo)});
    }
    return set;
}

double coefficient_energy(const DecompositionTree& tree, int channel) {
    double e = 0.0;
    for (const SubbandId& id : canonical_subbands(tree.levels)) {
        const Plane& p = tree.block(id, channel);
        for (double v : p.v) e += v * v;
    }
    return e;
}

double pixel_energy(const Image& image, int channel) {
    double e = 0.0;
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            double v = image.at(x, y, channel);
            e += v * v;
        }
    return e;
}

} // namespace wavecomp::wavelet
