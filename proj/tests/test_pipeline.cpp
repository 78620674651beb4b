#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "wavecomp/errors.hpp"
#include "wavecomp/harness.hpp"

using namespace wavecomp;
using namespace wavecomp::harness;

namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("wavecomp_pipe_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string small_config_text(int levels = 1) {
    std::ostringstream os;
    os << "# desk-scale smoke configuration\n";
    os << "model = toy\n";
    os << "model_seed = 42\n";
    os << "dataset = synthetic\n";
    os << "classes = 4\n";
    os << "per_class = 10\n";
    os << "image_size = 32\n";
    os << "dataset_seed = 7\n";
    os << "split_seed = 1\n";
    os << "basis = haar\n";
    os << "levels = " << levels << "\n";
    os << "modes = unconstrained,conic,convex\n";
    os << "lr = 0.001\n";
    os << "epochs = 3\n";
    os << "train_seed = 3\n";
    os << "noise_sigma = 0.1\n";
    os << "jpeg_quality = 50\n";
    os << "distort_seed = 9\n";
    os << "cka_images = 2\n";
    os << "ssim_image_index = 0\n";
    os << "reweight_images = 4\n";
    return os.str();
}

} // namespace

TEST_CASE("config parsing handles comments, lists, and bad keys") {
    RunConfig cfg = RunConfig::from_string(small_config_text());
    CHECK(cfg.classes == 4);
    CHECK(cfg.modes.size() == 3);
    CHECK(cfg.basis == wavelet::WaveletName::haar);
    CHECK_THROWS_WITH_AS(RunConfig::from_string("bogus_key = 1\n"), doctest::Contains("bogus_key"),
                         UsageError);
    CHECK_THROWS_AS(RunConfig::from_string("levels = 3\n"), UsageError);
    CHECK_THROWS_AS(RunConfig::from_string("modes =\n"), UsageError);
    CHECK_THROWS_AS(RunConfig::from_string("lr\n"), UsageError);
}

TEST_CASE("the toy pipeline emits all seven report kinds and is byte-deterministic") {
    RunConfig cfg = RunConfig::from_string(small_config_text());
    fs::path dir1 = temp_dir("run1");
    fs::path dir2 = temp_dir("run2");
    RunResult res = run_experiment(cfg, dir1);
    run_experiment(cfg, dir2);

    const std::vector<std::string> reports = {
        "table_accuracy.csv", "weights.json",       "table_reweighted.csv", "errors.csv",
        "distortion.csv",     "cka_layers.csv",     "ssim.json",            "ssim_map_ch0.tnsr",
        "ssim_map_ch1.tnsr",  "ssim_map_ch2.tnsr"};
    for (const std::string& f : reports) {
        CAPTURE(f);
        REQUIRE(fs::exists(dir1 / f));
        CHECK(slurp(dir1 / f) == slurp(dir2 / f));
    }
    CHECK(slurp(dir1 / "manifest.json") == slurp(dir2 / "manifest.json"));
    CHECK(slurp(dir1 / "manifest.json").find("\"status\": \"complete\"") != std::string::npos);
    CHECK(slurp(dir1 / "cache_original.clsb") == slurp(dir2 / "cache_original.clsb"));
    for (const std::string& f : res.report_files) CHECK(fs::exists(dir1 / f));

    // accuracy table carries one row per condition
    std::string acc = slurp(dir1 / "table_accuracy.csv");
    CHECK(acc.find("original") != std::string::npos);
    CHECK(acc.find("summed") != std::string::npos);
    CHECK(acc.find("unconstrained") != std::string::npos);
    CHECK(acc.find("convex") != std::string::npos);

    // distortion table mirrors the three image types
    std::string dist = slurp(dir1 / "distortion.csv");
    CHECK(dist.find("original,") != std::string::npos);
    CHECK(dist.find("compressed,") != std::string::npos);
    CHECK(dist.find("noisy,") != std::string::npos);
}

TEST_CASE("a levels-2 run reports 7 weights per mode") {
    RunConfig cfg = RunConfig::from_string(small_config_text(2));
    cfg.modes = {composer::ConstraintMode::unconstrained};
    fs::path dir = temp_dir("run_l2");
    run_experiment(cfg, dir);
    std::string weights = slurp(dir / "weights.json");
    CHECK(weights.find("\"LL2\"") != std::string::npos);
    CHECK(weights.find("\"LH1\"") != std::string::npos);
    // seven canonical subbands listed
    size_t count = 0;
    for (size_t pos = 0; (pos = weights.find("\"LL2\"", pos)) != std::string::npos; ++pos)
        ++count;
    CHECK(count == 1);
    composer::CompositionModel cm =
        composer::load_composition(dir / "composition_unconstrained.json");
    CHECK(cm.n() == 7);
}

TEST_CASE("a failing stage leaves an incomplete manifest naming the stage") {
    RunConfig cfg = RunConfig::from_string(small_config_text());
    cfg.ssim_image_index = 9999; // out of range for the test split
    fs::path dir = temp_dir("run_fail");
    CHECK_THROWS_AS(run_experiment(cfg, dir), UsageError);
    std::string manifest = slurp(dir / "manifest.json");
    CHECK(manifest.find("\"status\": \"incomplete\"") != std::string::npos);
    CHECK(manifest.find("\"failed_stage\": \"ssim\"") != std::string::npos);
}
