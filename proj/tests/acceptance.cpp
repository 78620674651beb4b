// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exit code 0 iff all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "wavecomp/composer.hpp"
#include "wavecomp/harness.hpp"
#include "wavecomp/metrics.hpp"
#include "wavecomp/rng.hpp"
#include "wavecomp/vit.hpp"
#include "wavecomp/wavelet.hpp"

using namespace wavecomp;
namespace fs = std::filesystem;

namespace {

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& msg) {
    if (!cond) throw Failure(msg);
}

Image random_image(Rng& rng, int w, int h, int c) {
    Image img(w, h, c);
    for (double& v : img.data) v = rng.next_double();
    return img;
}

double linf(const Image& a, const Image& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
    return m;
}

// The shared 100-image corpus for criteria 1-3: seeded sizes in [8, 64]
// (multiples of 4 so both levels are admissible), 1-3 channels.
struct CorpusImage {
    Image image;
};

std::vector<CorpusImage> corpus() {
    static std::vector<CorpusImage> cached;
    if (!cached.empty()) return cached;
    Rng rng(0xACCE97);
    for (int i = 0; i < 100; ++i) {
        int w = 8 + 4 * static_cast<int>(rng.below(15)); // 8..64
        int h = 8 + 4 * static_cast<int>(rng.below(15));
        int c = 1 + static_cast<int>(rng.below(3));
        cached.push_back({random_image(rng, w, h, c)});
    }
    return cached;
}

// ---------------------------------------------------------------------------

void criterion_reconstruction() {
    auto t0 = std::chrono::steady_clock::now();
    for (wavelet::WaveletName name : {wavelet::WaveletName::haar, wavelet::WaveletName::db4}) {
        wavelet::WaveletBasis basis = wavelet::basis_filters(name);
        for (int levels : {1, 2}) {
            for (const CorpusImage& ci : corpus()) {
                Image back = wavelet::reconstruct(wavelet::decompose(ci.image, basis, levels));
                double err = linf(ci.image, back);
                require(err <= 1e-9, "round-trip error " + std::to_string(err));
            }
        }
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    require(secs < 5.0, "runtime " + std::to_string(secs) + "s exceeds 5s");
}

void criterion_primitives() {
    for (wavelet::WaveletName name : {wavelet::WaveletName::haar, wavelet::WaveletName::db4}) {
        wavelet::WaveletBasis basis = wavelet::basis_filters(name);
        for (int levels : {1, 2}) {
            for (const CorpusImage& ci : corpus()) {
                wavelet::PrimitiveSet prims =
                    wavelet::primitive_images(wavelet::decompose(ci.image, basis, levels));
                require(prims.size() == static_cast<size_t>(3 * levels + 1),
                        "expected " + std::to_string(3 * levels + 1) + " primitives, got " +
                            std::to_string(prims.size()));
                Image sum(ci.image.width, ci.image.height, ci.image.channels);
                for (const wavelet::Primitive& p : prims.items)
                    for (size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += p.image.data[i];
                double err = linf(sum, ci.image);
                require(err <= 1e-9, "additivity error " + std::to_string(err));
            }
        }
    }
}

void criterion_parseval() {
    for (wavelet::WaveletName name : {wavelet::WaveletName::haar, wavelet::WaveletName::db4}) {
        wavelet::WaveletBasis basis = wavelet::basis_filters(name);
        for (int levels : {1, 2}) {
            for (const CorpusImage& ci : corpus()) {
                wavelet::DecompositionTree tree = wavelet::decompose(ci.image, basis, levels);
                for (int c = 0; c < ci.image.channels; ++c) {
                    double coeff = wavelet::coefficient_energy(tree, c);
                    double pix = wavelet::pixel_energy(ci.image, c);
                    require(std::abs(coeff - pix) <= 1e-9 * pix,
                            "Parseval relative error " + std::to_string((coeff - pix) / pix));
                }
            }
        }
    }
}

void criterion_cka() {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        int s = 6 + static_cast<int>(rng.below(10));
        int d = 3 + static_cast<int>(rng.below(6));
        Eigen::MatrixXd x = random_matrix(rng, s, d);
        Eigen::MatrixXd y = random_matrix(rng, s, d + 2);

        require(std::abs(metrics::linear_cka(x, x).score - 1.0) <= 1e-9, "self-CKA off 1");

        Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(rng, d, d));
        Eigen::MatrixXd r = qr.householderQ();
        require(std::abs(metrics::linear_cka(x, x * r).score - 1.0) <= 1e-9,
                "orthogonal invariance violated");

        double c = rng.normal();
        if (std::abs(c) < 0.01) c = 1.5;
        require(std::abs(metrics::linear_cka(x, c * x).score - 1.0) <= 1e-9,
                "scale invariance violated");

        double ab = metrics::linear_cka(x, y).score;
        double ba = metrics::linear_cka(y, x).score;
        require(std::abs(ab - ba) <= 1e-12, "symmetry violated");
    }
}

void criterion_ssim() {
    Rng rng(5);
    Image img = random_image(rng, 24, 24, 3);
    metrics::SsimParams unit;
    unit.data_range = 1.0;
    metrics::SsimResult self = metrics::ssim(img, img, unit);
    require(self.score == 1.0, "identity score is not exactly 1");
    for (const Plane& map : self.maps)
        for (double v : map.v) require(v == 1.0, "identity map entry not exactly 1");

    Image other = random_image(rng, 24, 24, 3);
    metrics::SsimParams pair_params = metrics::SsimParams::for_pair(img, other);
    double ab = metrics::ssim(img, other, pair_params).score;
    double ba = metrics::ssim(other, img, pair_params).score;
    require(std::abs(ab - ba) <= 1e-12, "symmetry violated");

    const double c = 0.3, delta = 0.2;
    Image flat_a(16, 16, 1), flat_b(16, 16, 1);
    for (double& v : flat_a.data) v = c;
    for (double& v : flat_b.data) v = c + delta;
    metrics::SsimParams params = metrics::SsimParams::for_pair(flat_a, flat_b);
    double c1 = params.c1();
    double expected = (2 * c * (c + delta) + c1) / (c * c + (c + delta) * (c + delta) + c1);
    double got = metrics::ssim(flat_a, flat_b, params).score;
    require(std::abs(got - expected) <= 1e-10,
            "constant-image closed form off by " + std::to_string(got - expected));
}

void criterion_gradient() {
    vit::ModelConfig cfg = vit::toy_config();
    cfg.image_size = 8;
    cfg.hidden_dim = 16;
    cfg.mlp_dim = 32;
    cfg.num_classes = 6;
    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        vit::Model model = vit::init_random(cfg, 1000 + trial);
        model.head_weight = random_matrix(rng, cfg.num_classes, cfg.hidden_dim, 0.4);
        Eigen::MatrixXd z = random_matrix(rng, 4, cfg.hidden_dim);
        Eigen::VectorXd eta = random_matrix(rng, 4, 1).col(0);
        int target = static_cast<int>(rng.below(cfg.num_classes));
        composer::LossGrad lg = composer::loss_and_grad(model, eta, z, target);
        const double h = 1e-6;
        for (int i = 0; i < 4; ++i) {
            Eigen::VectorXd lo = eta, hi = eta;
            lo[i] -= h;
            hi[i] += h;
            double fd = (composer::loss_and_grad(model, hi, z, target).loss -
                         composer::loss_and_grad(model, lo, z, target).loss) /
                        (2 * h);
            double rel = std::abs(lg.grad[i] - fd) / std::max(std::abs(fd), 1e-8);
            require(rel <= 1e-5, "gradient relative error " + std::to_string(rel));
        }
    }
}

void criterion_projection() {
    Rng rng(7);
    // convex projection beats every 1e-3 simplex grid point for n <= 3
    for (int n : {2, 3}) {
        for (int trial = 0; trial < 8; ++trial) {
            Eigen::VectorXd eta(n);
            for (int i = 0; i < n; ++i) eta[i] = rng.normal(0.3, 1.5);
            Eigen::VectorXd p = composer::project(eta, composer::ConstraintMode::convex);
            require(p.minCoeff() >= 0.0, "negative convex coordinate");
            require(std::abs(p.sum() - 1.0) <= 1e-12, "simplex sum off 1");
            double dp = (p - eta).norm();
            const int steps = 1000;
            if (n == 2) {
                for (int i = 0; i <= steps; ++i) {
                    Eigen::VectorXd s(2);
                    s << i / 1000.0, (steps - i) / 1000.0;
                    require(dp <= (s - eta).norm() + 1e-9, "grid point beats projection");
                }
            } else {
                for (int i = 0; i <= steps; ++i)
                    for (int j = 0; j <= steps - i; ++j) {
                        Eigen::VectorXd s(3);
                        s << i / 1000.0, j / 1000.0, (steps - i - j) / 1000.0;
                        require(dp <= (s - eta).norm() + 1e-9, "grid point beats projection");
                    }
            }
        }
    }
    // conic = clamp; both projections exactly idempotent
    for (int n : {2, 4, 7}) {
        for (int trial = 0; trial < 40; ++trial) {
            Eigen::VectorXd eta(n);
            for (int i = 0; i < n; ++i) eta[i] = rng.normal(0.0, 2.0);
            Eigen::VectorXd conic = composer::project(eta, composer::ConstraintMode::conic);
            for (int i = 0; i < n; ++i)
                require(conic[i] == std::max(eta[i], 0.0), "conic is not the clamp");
            Eigen::VectorXd conic2 = composer::project(conic, composer::ConstraintMode::conic);
            require(conic == conic2, "conic projection not exactly idempotent");
            Eigen::VectorXd cvx = composer::project(eta, composer::ConstraintMode::convex);
            Eigen::VectorXd cvx2 = composer::project(cvx, composer::ConstraintMode::convex);
            require((cvx.array() == cvx2.array()).all(),
                    "convex projection not exactly idempotent");
        }
    }
}

// Planted-composition oracle shared state for criteria 8.
void criterion_planted() {
    vit::ModelConfig cfg = vit::toy_config(); // D=48, K=10
    cfg.image_size = 8;
    vit::Model model = vit::init_random(cfg, 88);

    Eigen::VectorXd hidden(4);
    hidden << 1.5, 0.3, 0.2, 0.1;
    Rng rng(89, "planted-acceptance");
    std::vector<composer::CLSBundle> all;
    while (all.size() < 200) {
        composer::CLSBundle b;
        b.id = "p" + std::to_string(all.size());
        b.z = random_matrix(rng, 4, cfg.hidden_dim, 6.0);
        b.z_orig = composer::compose(hidden, b.z);
        Eigen::VectorXd logits = vit::classify(model, b.z_orig);
        b.target = vit::predicted_class(logits);
        double second = -1e300;
        for (int k = 0; k < logits.size(); ++k)
            if (k != b.target) second = std::max(second, logits[k]);
        if (logits[b.target] - second < 0.25) continue; // keep targets well-margined
        b.label = b.target;
        all.push_back(std::move(b));
    }
    std::vector<composer::CLSBundle> train_b(all.begin(), all.begin() + 120);
    std::vector<composer::CLSBundle> val_b(all.begin() + 120, all.begin() + 160);
    std::vector<composer::CLSBundle> test_b(all.begin() + 160, all.end());

    composer::TrainHyper hyper; // lr 0.001, 100 epochs
    hyper.seed = 90;
    composer::Provenance prov{wavelet::WaveletName::haar, 1, cfg.num_layers};
    composer::CompositionModel cm = composer::train(
        model, train_b, val_b, composer::ConstraintMode::unconstrained, hyper, prov);

    double rel = composer::relative_accuracy(model, cm.weights, test_b);
    require(rel >= 0.99, "held-out relative accuracy " + std::to_string(rel));

    // coarse grid-search oracle: step 0.25 over [-1, 3]^4
    std::vector<Eigen::MatrixXd> heads; // K x n per bundle
    for (const composer::CLSBundle& b : train_b) heads.push_back(model.head_weight * b.z.transpose());
    double best_grid = 1e300;
    const int steps = 17;
    Eigen::VectorXd eta(4);
    for (int i0 = 0; i0 < steps; ++i0) {
        eta[0] = -1.0 + 0.25 * i0;
        for (int i1 = 0; i1 < steps; ++i1) {
            eta[1] = -1.0 + 0.25 * i1;
            for (int i2 = 0; i2 < steps; ++i2) {
                eta[2] = -1.0 + 0.25 * i2;
                for (int i3 = 0; i3 < steps; ++i3) {
                    eta[3] = -1.0 + 0.25 * i3;
                    double total = 0.0;
                    for (size_t b = 0; b < heads.size(); ++b) {
                        Eigen::VectorXd logits = heads[b] * eta + model.head_bias;
                        double mx = logits.maxCoeff();
                        double lse = mx + std::log((logits.array() - mx).exp().sum());
                        total += lse - logits[train_b[b].target];
                    }
                    best_grid = std::min(best_grid, total / static_cast<double>(heads.size()));
                }
            }
        }
    }
    double final_train = cm.history.back().train_loss;
    require(final_train <= best_grid + 1e-3,
            "final train loss " + std::to_string(final_train) + " vs grid best " +
                std::to_string(best_grid));
}

void criterion_baseline_dominance() {
    for (uint64_t seed : {11ull, 12ull}) {
        vit::ModelConfig cfg = vit::toy_config();
        cfg.image_size = 16;
        cfg.num_classes = 5;
        vit::Model model = vit::init_random(cfg, 500 + seed);
        harness::Dataset ds = harness::generate_synthetic_dataset(5, 8, 16, seed);
        harness::BundleCache cache = harness::cache_primitive_cls(
            model, ds, wavelet::basis_filters(wavelet::WaveletName::haar), 1, -1);
        harness::Split split = harness::split_dataset(ds, seed);
        std::vector<composer::CLSBundle> train_b, val_b;
        for (size_t i : split.train) train_b.push_back(cache.bundles[i]);
        for (size_t i : split.val) val_b.push_back(cache.bundles[i]);

        composer::TrainHyper hyper; // lr 0.001, 100 epochs
        hyper.seed = seed;
        composer::Provenance prov{wavelet::WaveletName::haar, 1, cache.layer};
        Eigen::VectorXd ones = Eigen::VectorXd::Ones(cache.n);
        for (composer::ConstraintMode mode :
             {composer::ConstraintMode::unconstrained, composer::ConstraintMode::conic,
              composer::ConstraintMode::convex}) {
            // the summed baseline, projected into the mode's feasible set
            // (the training initialization; eta = 1 itself for the two modes
            // where it is feasible)
            double baseline = composer::mean_loss(model, composer::project(ones, mode), train_b);
            composer::CompositionModel cm =
                composer::train(model, train_b, val_b, mode, hyper, prov);
            double trained = composer::mean_loss(model, cm.weights, train_b);
            require(trained <= baseline + 1e-12,
                    composer::to_string(mode) + " trained CE " + std::to_string(trained) +
                        " exceeds summed baseline " + std::to_string(baseline) + " (seed " +
                        std::to_string(seed) + ")");
        }
    }
}

void criterion_error_identities() {
    Rng rng(13);
    for (int trial = 0; trial < 1000; ++trial) {
        size_t n = 1 + rng.below(1000);
        std::vector<int> labels(n, 0), pl(n), po(n);
        for (size_t i = 0; i < n; ++i) {
            pl[i] = static_cast<int>(rng.below(2));
            po[i] = static_cast<int>(rng.below(2));
        }
        harness::ErrorReport e = harness::error_breakdown(pl, po, labels);
        require(e.err_learned == e.err_learned_not_org + e.err_both, "learned identity broken");
        require(e.err_org == e.err_org_not_learned + e.err_both, "org identity broken");
    }
    std::vector<int> labels(1000, 0), learned(1000, 0), original(1000, 0);
    for (int i = 0; i < 159; ++i) learned[i] = original[i] = 1;
    for (int i = 159; i < 197; ++i) learned[i] = 1;
    for (int i = 197; i < 209; ++i) original[i] = 1;
    harness::ErrorReport r = harness::error_breakdown(learned, original, labels);
    require(r.err_learned == 19.7 && r.err_org == 17.1 && r.err_learned_not_org == 3.8 &&
                r.err_org_not_learned == 1.2 && r.err_both == 15.9,
            "published row not reproduced exactly");
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    require(is.good(), "missing " + p.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void criterion_end_to_end() {
    harness::RunConfig cfg; // defaults: 10x20 synthetic @32, toy ViT, haar L1,
                            // three modes, lr 0.001, 100 epochs
    auto t0 = std::chrono::steady_clock::now();
    fs::path dir1 = fs::temp_directory_path() / "wavecomp_accept_run1";
    fs::path dir2 = fs::temp_directory_path() / "wavecomp_accept_run2";
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    harness::run_experiment(cfg, dir1);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    require(secs < 300.0, "pipeline took " + std::to_string(secs) + "s");
    harness::run_experiment(cfg, dir2);

    const std::vector<std::string> reports = {
        "table_accuracy.csv", "weights.json",   "table_reweighted.csv",
        "errors.csv",         "distortion.csv", "cka_layers.csv",
        "ssim.json"};
    for (const std::string& f : reports) {
        require(fs::exists(dir1 / f), "missing report " + f);
        require(slurp(dir1 / f) == slurp(dir2 / f), "rerun differs in " + f);
    }
    for (int c = 0; c < 3; ++c) {
        std::string f = "ssim_map_ch" + std::to_string(c) + ".tnsr";
        require(fs::exists(dir1 / f), "missing map " + f);
        require(slurp(dir1 / f) == slurp(dir2 / f), "rerun differs in " + f);
    }
    for (const char* f : {"manifest.json", "model.vitw", "cache_original.clsb",
                          "composition_unconstrained.json", "composition_conic.json",
                          "composition_convex.json"})
        require(slurp(dir1 / f) == slurp(dir2 / f),
                std::string("rerun differs in ") + f);
    require(slurp(dir1 / "manifest.json").find("\"status\": \"complete\"") != std::string::npos,
            "manifest not complete");
}

void criterion_reweight_ssim() {
    Rng rng(14);
    for (wavelet::WaveletName name : {wavelet::WaveletName::haar, wavelet::WaveletName::db4}) {
        wavelet::WaveletBasis basis = wavelet::basis_filters(name);
        for (int levels : {1, 2}) {
            Image img = random_image(rng, 32, 32, 3);
            wavelet::PrimitiveSet prims =
                wavelet::primitive_images(wavelet::decompose(img, basis, levels));
            Image back = harness::reweight_image(prims, Eigen::VectorXd::Ones(3 * levels + 1));
            require(linf(back, img) <= 1e-9, "reweight(1) round-trip failed");
        }
    }

    vit::Model model = vit::init_random(vit::toy_config(), 15);
    Image img = random_image(rng, 32, 32, 3);
    harness::SsimMapReport report = harness::ssim_map_report(
        model, img, wavelet::basis_filters(wavelet::WaveletName::haar), 1,
        Eigen::VectorXd::Ones(4));
    require(report.maps.size() == 3, "expected three channel maps");
    for (const Plane& map : report.maps) {
        require(map.width == 22 && map.height == 22,
                "maps should cover the 32x32 grid minus window margins");
        for (double v : map.v)
            require(v >= -1.0 && v <= 1.0, "map value outside [-1, 1]");
    }
}

} // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<void()> body;
    };
    const std::vector<Criterion> criteria = {
        {1, "perfect reconstruction (100 images, both bases, levels 1-2, <=1e-9, <5s)",
         criterion_reconstruction},
        {2, "primitive additivity and 3M+1 count", criterion_primitives},
        {3, "Parseval energy identity (<=1e-9 relative)", criterion_parseval},
        {4, "CKA self/orthogonal/scale invariance and symmetry", criterion_cka},
        {5, "SSIM identity, symmetry, constant closed form", criterion_ssim},
        {6, "analytic gradient vs central differences (100 instances, <=1e-5)",
         criterion_gradient},
        {7, "projection correctness (simplex grid, clamp, exact idempotency)",
         criterion_projection},
        {8, "planted-composition recovery (rel-acc >= 0.99, beats 0.25-grid oracle)",
         criterion_planted},
        {9, "baseline dominance (trained CE <= summed CE, all modes)",
         criterion_baseline_dominance},
        {10, "error-report identities and published row", criterion_error_identities},
        {11, "end-to-end determinism and smoke (<5 min, seven reports, byte-identical rerun)",
         criterion_end_to_end},
        {12, "reweighting round-trip and SSIM-map pipeline", criterion_reweight_ssim},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        try {
            c.body();
            std::printf("PASS %2d: %s\n", c.id, c.name);
        } catch (const std::exception& e) {
            std::printf("FAIL %2d: %s -- %s\n", c.id, c.name, e.what());
            ++failures;
        }
        std::fflush(stdout);
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
