#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "wavecomp/errors.hpp"
#include "wavecomp/wavelet.hpp"

using namespace wavecomp;
using namespace wavecomp::wavelet;

namespace {

const double kSqrt2 = std::sqrt(2.0);

void check_basis_invariants(const WaveletBasis& b) {
    double sum_lo = 0.0, sum_sq = 0.0;
    for (double v : b.analysis_lo) {
        sum_lo += v;
        sum_sq += v * v;
    }
    CHECK(std::abs(sum_lo - kSqrt2) < 1e-12);
    CHECK(std::abs(sum_sq - 1.0) < 1e-12);
    const size_t len = b.analysis_lo.size();
    REQUIRE(b.analysis_hi.size() == len);
    for (size_t i = 0; i < len; ++i) {
        double expected = ((i % 2 == 0) ? 1.0 : -1.0) * b.analysis_lo[len - 1 - i];
        CHECK(std::abs(b.analysis_hi[i] - expected) <= 1e-12);
    }
    // synthesis filters are the time-reverse of analysis filters
    for (size_t i = 0; i < len; ++i) {
        CHECK(b.synthesis_lo[i] == b.analysis_lo[len - 1 - i]);
        CHECK(b.synthesis_hi[i] == b.analysis_hi[len - 1 - i]);
    }
}

} // namespace

TEST_CASE("haar filters match the orthonormal convention") {
    WaveletBasis b = basis_filters(WaveletName::haar);
    REQUIRE(b.taps() == 2);
    CHECK(b.analysis_lo[0] == doctest::Approx(1.0 / kSqrt2).epsilon(1e-15));
    CHECK(b.analysis_lo[1] == doctest::Approx(1.0 / kSqrt2).epsilon(1e-15));
    CHECK(b.analysis_hi[0] == doctest::Approx(1.0 / kSqrt2).epsilon(1e-15));
    CHECK(b.analysis_hi[1] == doctest::Approx(-1.0 / kSqrt2).epsilon(1e-15));
    check_basis_invariants(b);
}

TEST_CASE("db4 filters satisfy the moment and orthonormality identities") {
    WaveletBasis b = basis_filters("db4");
    REQUIRE(b.taps() == 8);
    check_basis_invariants(b);
    double sum_hi = 0.0, first_moment = 0.0;
    for (size_t i = 0; i < b.analysis_hi.size(); ++i) {
        sum_hi += b.analysis_hi[i];
        first_moment += static_cast<double>(i) * b.analysis_hi[i];
    }
    CHECK(std::abs(sum_hi) < 1e-10);
    CHECK(std::abs(first_moment) < 1e-10); // two vanishing moments
}

TEST_CASE("unknown basis names are rejected") {
    CHECK_THROWS_AS(basis_filters("sym5"), UsageError);
    CHECK_THROWS_AS(basis_filters(""), UsageError);
}

TEST_CASE("2x2 haar decomposition matches the hand-computed coefficients") {
    Image img(2, 2, 1);
    img.at(0, 0, 0) = 1;
    img.at(1, 0, 0) = 2;
    img.at(0, 1, 0) = 3;
    img.at(1, 1, 0) = 4;
    DecompositionTree tree = decompose(img, basis_filters(WaveletName::haar), 1);

    CHECK(tree.approx[0].at(0, 0) == doctest::Approx(5.0).epsilon(1e-12));
    // HL = high-pass along x, low-pass along y
    CHECK(tree.block({1, SubbandKind::HL}, 0).at(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
    // LH = low-pass along x, high-pass along y
    CHECK(tree.block({1, SubbandKind::LH}, 0).at(0, 0) == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(tree.block({1, SubbandKind::HH}, 0).at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));

    Image back = reconstruct(tree);
    CHECK(test_util::linf_diff(img, back) < 1e-9);
}

TEST_CASE("constant images have zero detail and a scaled LL block") {
    const double c = 0.37;
    for (int levels : {1, 2}) {
        Image img(8, 8, 2);
        for (double& v : img.data) v = c;
        DecompositionTree tree = decompose(img, basis_filters(WaveletName::haar), levels);
        for (int ch = 0; ch < 2; ++ch) {
            for (int m = 1; m <= levels; ++m) {
                for (SubbandKind kind : {SubbandKind::LH, SubbandKind::HL, SubbandKind::HH})
                    for (double v : tree.block({m, kind}, ch).v)
                        CHECK(std::abs(v) < 1e-12);
            }
            const double expected = (1 << levels) * c;
            for (double v : tree.approx[ch].v)
                CHECK(v == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("Parseval holds for a random 8x8 image under db4 at two levels") {
    Rng rng(2024);
    Image img = test_util::random_image(rng, 8, 8, 1);
    DecompositionTree tree = decompose(img, basis_filters(WaveletName::db4), 2);
    double coeff = coefficient_energy(tree, 0);
    double pix = pixel_energy(img, 0);
    CHECK(std::abs(coeff - pix) / pix < 1e-9);
}

TEST_CASE("reconstruct inverts decompose for a random 16x16x3 db4 tree") {
    Rng rng(7);
    Image img = test_util::random_image(rng, 16, 16, 3);
    DecompositionTree tree = decompose(img, basis_filters(WaveletName::db4), 2);
    CHECK(test_util::linf_diff(img, reconstruct(tree)) < 1e-9);
}

TEST_CASE("an all-zero tree reconstructs the zero image") {
    Rng rng(8);
    Image img = test_util::random_image(rng, 8, 8, 1);
    DecompositionTree tree = decompose(img, basis_filters(WaveletName::haar), 1);
    for (const SubbandId& id : canonical_subbands(1))
        for (double& v : tree.block(id, 0).v) v = 0.0;
    Image zero = reconstruct(tree);
    for (double v : zero.data) CHECK(std::abs(v) < 1e-15);
}

TEST_CASE("decompose rejects shapes that 2^levels does not divide") {
    Image img(6, 8, 1);
    CHECK_THROWS_WITH_AS(decompose(img, basis_filters(WaveletName::haar), 2),
                         doctest::Contains("pad to 8x8"), DataError);
}

TEST_CASE("reconstruct rejects a shape-inconsistent tree") {
    Rng rng(9);
    Image img = test_util::random_image(rng, 8, 8, 1);
    DecompositionTree tree = decompose(img, basis_filters(WaveletName::haar), 1);
    tree.details[0].hh[0] = Plane(2, 2); // wrong block size
    CHECK_THROWS_AS(reconstruct(tree), DataError);
}

TEST_CASE("2x2 haar primitives: LL primitive is constant 2.5 and all sum back") {
    Image img(2, 2, 1);
    img.at(0, 0, 0) = 1;
    img.at(1, 0, 0) = 2;
    img.at(0, 1, 0) = 3;
    img.at(1, 1, 0) = 4;
    PrimitiveSet prims = primitive_images(decompose(img, basis_filters(WaveletName::haar), 1));
    REQUIRE(prims.size() == 4);
    CHECK(prims.items[0].id == SubbandId{1, SubbandKind::LL});
    for (double v : prims.items[0].image.data) CHECK(v == doctest::Approx(2.5).epsilon(1e-12));

    Image sum(2, 2, 1);
    for (const Primitive& p : prims.items)
        for (size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += p.image.data[i];
    CHECK(test_util::linf_diff(sum, img) < 1e-9);
}

TEST_CASE("constant image: LL primitive equals the image, detail primitives vanish") {
    Image img(8, 8, 1);
    for (double& v : img.data) v = 0.25;
    PrimitiveSet prims = primitive_images(decompose(img, basis_filters(WaveletName::db4), 1));
    CHECK(test_util::linf_diff(prims.items[0].image, img) < 1e-9);
    for (size_t p = 1; p < prims.size(); ++p)
        for (double v : prims.items[p].image.data) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("two-level decomposition yields 7 primitives in canonical order") {
    Rng rng(11);
    Image img = test_util::random_image(rng, 8, 8, 1);
    PrimitiveSet prims = primitive_images(decompose(img, basis_filters(WaveletName::haar), 2));
    REQUIRE(prims.size() == 7);
    const std::vector<SubbandId> expected = {
        {2, SubbandKind::LL}, {2, SubbandKind::LH}, {2, SubbandKind::HL}, {2, SubbandKind::HH},
        {1, SubbandKind::LH}, {1, SubbandKind::HL}, {1, SubbandKind::HH}};
    for (size_t i = 0; i < expected.size(); ++i) CHECK(prims.items[i].id == expected[i]);
}

TEST_CASE("decompose is linear in its input") {
    Rng rng(12);
    for (WaveletName name : {WaveletName::haar, WaveletName::db4}) {
        Image a = test_util::random_image(rng, 16, 8, 2);
        Image b = test_util::random_image(rng, 16, 8, 2);
        const double alpha = 1.7, beta = -0.4;
        Image mix(16, 8, 2);
        for (size_t i = 0; i < mix.data.size(); ++i)
            mix.data[i] = alpha * a.data[i] + beta * b.data[i];
        WaveletBasis basis = basis_filters(name);
        DecompositionTree ta = decompose(a, basis, 2);
        DecompositionTree tb = decompose(b, basis, 2);
        DecompositionTree tm = decompose(mix, basis, 2);
        for (int ch = 0; ch < 2; ++ch) {
            for (const SubbandId& id : canonical_subbands(2)) {
                const Plane& pa = ta.block(id, ch);
                const Plane& pb = tb.block(id, ch);
                const Plane& pm = tm.block(id, ch);
                for (size_t i = 0; i < pm.v.size(); ++i)
                    CHECK(std::abs(pm.v[i] - (alpha * pa.v[i] + beta * pb.v[i])) < 1e-9);
            }
        }
    }
}

TEST_CASE("perfect reconstruction across bases, levels, and odd-shaped images") {
    Rng rng(13);
    for (WaveletName name : {WaveletName::haar, WaveletName::db4}) {
        WaveletBasis basis = basis_filters(name);
        for (int levels : {1, 2}) {
            for (auto [w, h, c] : {std::tuple{8, 8, 1}, {12, 20, 3}, {32, 16, 2}}) {
                Image img = test_util::random_image(rng, w, h, c);
                Image back = reconstruct(decompose(img, basis, levels));
                CAPTURE(static_cast<int>(name));
                CAPTURE(levels);
                CHECK(test_util::linf_diff(img, back) < 1e-9);
            }
        }
    }
}

TEST_CASE("primitive additivity holds for db4 at two levels on a rectangular image") {
    Rng rng(14);
    Image img = test_util::random_image(rng, 24, 16, 3);
    PrimitiveSet prims = primitive_images(decompose(img, basis_filters(WaveletName::db4), 2));
    REQUIRE(prims.size() == 7);
    Image sum(24, 16, 3);
    for (const Primitive& p : prims.items)
        for (size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += p.image.data[i];
    CHECK(test_util::linf_diff(sum, img) < 1e-9);
}
