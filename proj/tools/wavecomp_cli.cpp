// wavecomp command line: dataset generation, decomposition, probing,
// composition training, and the config-driven experiment pipeline.

#include <CLI11.hpp>

#include <charconv>
#include <filesystem>
#include <iostream>

#include <nlohmann/json.hpp>

#include "wavecomp/composer.hpp"
#include "wavecomp/errors.hpp"
#include "wavecomp/harness.hpp"
#include "wavecomp/metrics.hpp"
#include "wavecomp/vit.hpp"
#include "wavecomp/wavelet.hpp"

namespace fs = std::filesystem;
using namespace wavecomp;

namespace {

std::string fmt(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

Image load_image_any(const fs::path& path) {
    if (path.extension() == ".ppm") return read_ppm(path);
    if (path.extension() == ".tnsr") return tensor_to_image(read_tnsr_file(path), path.string());
    throw UsageError("unsupported image format " + path.extension().string() +
                     " (expected .ppm or .tnsr)");
}

void save_image_any(const fs::path& path, const Image& img) {
    if (path.extension() == ".ppm") {
        if (write_ppm(path, img))
            std::cerr << "note: values outside [0,1] were clamped for 8-bit export\n";
        return;
    }
    if (path.extension() == ".tnsr") {
        write_tnsr_file(path, image_to_tensor(img));
        return;
    }
    throw UsageError("unsupported output format " + path.extension().string() +
                     " (expected .ppm or .tnsr)");
}

std::vector<size_t> split_part(const harness::Split& split, const std::string& part,
                               size_t total) {
    if (part == "train") return split.train;
    if (part == "val") return split.val;
    if (part == "test") return split.test;
    if (part == "all") {
        std::vector<size_t> all(total);
        for (size_t i = 0; i < total; ++i) all[i] = i;
        return all;
    }
    throw UsageError("unknown split part \"" + part + "\" (train|val|test|all)");
}

int check_levels(int levels) {
    if (levels < 1 || levels > 2) throw UsageError("levels must be 1 or 2");
    return levels;
}

harness::BundleCache load_cache_for_model(const std::string& path, const vit::Model& model) {
    harness::BundleCache cache = harness::load_cache(path);
    if (cache.model_hash != vit::model_hash(model))
        throw DataError(path + ": stale cache (model hash mismatch)");
    return cache;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"wavelet-subband compositionality probe for ViT encoders"};
    app.require_subcommand(1);
    app.fallthrough();

    uint64_t seed = 0;
    std::string out;
    std::string config_path;
    app.add_option("--seed", seed, "default seed for seeded verbs");
    app.add_option("--out", out, "output file or directory");
    app.add_option("--config", config_path, "experiment config file");

    // --- gen-data -------------------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic labeled dataset");
    int gd_classes = 10, gd_per_class = 20, gd_size = 32;
    bool gd_ppm = false;
    gen->add_option("--classes", gd_classes, "class count");
    gen->add_option("--per-class", gd_per_class, "images per class");
    gen->add_option("--size", gd_size, "square image size");
    gen->add_flag("--ppm", gd_ppm, "store images as 8-bit PPM instead of TNSR");
    gen->callback([&] {
        if (out.empty()) throw UsageError("gen-data needs --out <dir>");
        harness::Dataset ds =
            harness::generate_synthetic_dataset(gd_classes, gd_per_class, gd_size, seed);
        harness::save_dataset(ds, out, gd_ppm);
        std::cout << "wrote " << ds.items.size() << " images and manifest.csv to " << out << "\n";
    });

    // --- init-model ------------------------------------------------------------
    auto* init = app.add_subcommand("init-model", "create a seeded toy ViT weight container");
    vit::ModelConfig mc = vit::toy_config();
    init->add_option("--image-size", mc.image_size);
    init->add_option("--channels", mc.channels);
    init->add_option("--patch-size", mc.patch_size);
    init->add_option("--hidden-dim", mc.hidden_dim);
    init->add_option("--heads", mc.num_heads);
    init->add_option("--layers", mc.num_layers);
    init->add_option("--mlp-dim", mc.mlp_dim);
    init->add_option("--num-classes", mc.num_classes);
    init->callback([&] {
        if (out.empty()) throw UsageError("init-model needs --out <file.vitw>");
        vit::Model model = vit::init_random(mc, seed);
        vit::save_weights_file(out, model);
        std::cout << "wrote " << out << " (hash " << std::hex << vit::model_hash(model)
                  << std::dec << ")\n";
    });

    // --- decompose ---------------------------------------------------------------
    auto* dec = app.add_subcommand("decompose", "multilevel DWT of one image, with primitives");
    std::string dec_image, dec_basis = "haar";
    int dec_levels = 1;
    dec->add_option("--image", dec_image)->required();
    dec->add_option("--basis", dec_basis, "haar | db4");
    dec->add_option("--levels", dec_levels, "1 | 2");
    dec->callback([&] {
        if (out.empty()) throw UsageError("decompose needs --out <dir>");
        Image img = load_image_any(dec_image);
        wavelet::WaveletBasis basis = wavelet::basis_filters(dec_basis);
        wavelet::DecompositionTree tree = wavelet::decompose(img, basis, check_levels(dec_levels));
        fs::create_directories(out);
        for (const wavelet::SubbandId& id : wavelet::canonical_subbands(tree.levels))
            for (int c = 0; c < tree.channels; ++c)
                write_tnsr_file(fs::path(out) / ("coeff_" + wavelet::to_string(id) + "_ch" +
                                                 std::to_string(c) + ".tnsr"),
                                plane_to_tensor(tree.block(id, c)));
        wavelet::PrimitiveSet prims = wavelet::primitive_images(tree);
        for (const wavelet::Primitive& p : prims.items)
            write_tnsr_file(fs::path(out) / ("primitive_" + wavelet::to_string(p.id) + ".tnsr"),
                            image_to_tensor(p.image));
        nlohmann::ordered_json meta;
        meta["basis"] = wavelet::to_string(basis.name);
        meta["levels"] = tree.levels;
        meta["subbands"] = nlohmann::ordered_json::array();
        for (const wavelet::SubbandId& id : wavelet::canonical_subbands(tree.levels))
            meta["subbands"].push_back(wavelet::to_string(id));
        for (int c = 0; c < tree.channels; ++c) {
            meta["coefficient_energy"].push_back(wavelet::coefficient_energy(tree, c));
            meta["pixel_energy"].push_back(wavelet::pixel_energy(img, c));
        }
        std::ofstream os(fs::path(out) / "decompose.json", std::ios::binary);
        os << meta.dump(2) << "\n";
        std::cout << "wrote " << prims.items.size() << " primitives to " << out << "\n";
    });

    // --- cache ----------------------------------------------------------------------
    auto* cache_cmd = app.add_subcommand("cache", "cache primitive CLS tokens for a dataset");
    std::string ca_model, ca_data, ca_basis = "haar";
    int ca_levels = 1, ca_layer = -1;
    cache_cmd->add_option("--model", ca_model)->required();
    cache_cmd->add_option("--data", ca_data, "manifest.csv path")->required();
    cache_cmd->add_option("--basis", ca_basis);
    cache_cmd->add_option("--levels", ca_levels);
    cache_cmd->add_option("--layer", ca_layer, "encoder layer (-1 = final)");
    cache_cmd->callback([&] {
        if (out.empty()) throw UsageError("cache needs --out <file.clsb>");
        vit::Model model = vit::load_weights_file(ca_model);
        harness::Dataset ds = harness::load_manifest(ca_data);
        harness::BundleCache cache = harness::cache_primitive_cls(
            model, ds, wavelet::basis_filters(ca_basis), check_levels(ca_levels), ca_layer);
        harness::save_cache(out, cache);
        std::cout << "cached " << cache.bundles.size() << " bundles (n=" << cache.n << ", layer "
                  << cache.layer << ") to " << out << "\n";
    });

    // --- train -------------------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "train a composition model from a cache");
    std::string tr_model, tr_cache, tr_mode = "unconstrained";
    double tr_lr = 0.001;
    int tr_epochs = 100;
    uint64_t tr_split_seed = 1;
    bool tr_soft = false;
    train_cmd->add_option("--model", tr_model)->required();
    train_cmd->add_option("--cache", tr_cache)->required();
    train_cmd->add_option("--mode", tr_mode, "unconstrained | conic | convex");
    train_cmd->add_option("--lr", tr_lr);
    train_cmd->add_option("--epochs", tr_epochs);
    train_cmd->add_option("--split-seed", tr_split_seed);
    train_cmd->add_flag("--soft-target", tr_soft, "distill full logits instead of the hard label");
    train_cmd->callback([&] {
        if (out.empty()) throw UsageError("train needs --out <composition.json>");
        vit::Model model = vit::load_weights_file(tr_model);
        harness::BundleCache cache = load_cache_for_model(tr_cache, model);
        std::vector<int> labels;
        for (const auto& b : cache.bundles) labels.push_back(b.label);
        harness::Split split = harness::split_by_labels(labels, cache.num_classes, tr_split_seed);
        std::vector<composer::CLSBundle> train_b, val_b;
        for (size_t i : split.train) train_b.push_back(cache.bundles[i]);
        for (size_t i : split.val) val_b.push_back(cache.bundles[i]);
        composer::TrainHyper hyper{tr_lr, tr_epochs, seed, tr_soft};
        composer::Provenance prov{cache.basis, cache.levels, cache.layer};
        composer::CompositionModel cm = composer::train(
            model, train_b, val_b, composer::mode_from_string(tr_mode), hyper, prov);
        composer::save_composition(out, cm);
        std::cout << "trained " << tr_mode << " weights:";
        for (int i = 0; i < cm.n(); ++i) std::cout << " " << fmt(cm.weights[i]);
        std::cout << "\n";
    });

    // --- eval --------------------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "accuracy of a prediction path on a split part");
    std::string ev_model, ev_cache, ev_path = "learned", ev_comp, ev_part = "test",
                ev_reference = "gt";
    uint64_t ev_split_seed = 1;
    eval_cmd->add_option("--model", ev_model)->required();
    eval_cmd->add_option("--cache", ev_cache)->required();
    eval_cmd->add_option("--path", ev_path, "original | summed | learned");
    eval_cmd->add_option("--composition", ev_comp, "composition record (for learned)");
    eval_cmd->add_option("--split", ev_part, "train | val | test | all");
    eval_cmd->add_option("--split-seed", ev_split_seed);
    eval_cmd->add_option("--reference", ev_reference, "gt | original");
    eval_cmd->callback([&] {
        vit::Model model = vit::load_weights_file(ev_model);
        harness::BundleCache cache = load_cache_for_model(ev_cache, model);
        std::vector<int> labels;
        for (const auto& b : cache.bundles) labels.push_back(b.label);
        harness::Split split = harness::split_by_labels(labels, cache.num_classes, ev_split_seed);
        std::vector<size_t> indices = split_part(split, ev_part, cache.bundles.size());
        harness::EvalPath path;
        Eigen::VectorXd eta;
        const Eigen::VectorXd* eta_ptr = nullptr;
        if (ev_path == "original") path = harness::EvalPath::original;
        else if (ev_path == "summed") path = harness::EvalPath::summed;
        else if (ev_path == "learned") {
            path = harness::EvalPath::learned;
            if (ev_comp.empty()) throw UsageError("eval --path learned needs --composition");
            eta = composer::load_composition(ev_comp).weights;
            eta_ptr = &eta;
        } else throw UsageError("unknown eval path \"" + ev_path + "\"");
        harness::EvalRow row =
            harness::eval_accuracy(model, cache, indices, path, eta_ptr, ev_path);
        if (ev_reference != "gt" && ev_reference != "original")
            throw UsageError("unknown reference \"" + ev_reference + "\" (gt | original)");
        std::cout << "condition,acc_gt,acc_relative,n\n"
                  << row.condition << "," << fmt(row.accuracy_gt) << ","
                  << fmt(row.accuracy_relative) << "," << row.count << "\n";
        std::cout << "# reference " << ev_reference << ": "
                  << fmt(ev_reference == "gt" ? row.accuracy_gt : row.accuracy_relative) << "\n";
    });

    // --- errors -------------------------------------------------------------------------
    auto* err_cmd = app.add_subcommand("errors", "prediction-error breakdown vs the original model");
    std::string er_model, er_cache, er_part = "test";
    std::vector<std::string> er_comps;
    uint64_t er_split_seed = 1;
    err_cmd->add_option("--model", er_model)->required();
    err_cmd->add_option("--cache", er_cache)->required();
    err_cmd->add_option("--composition", er_comps, "composition record(s)")->required();
    err_cmd->add_option("--split", er_part);
    err_cmd->add_option("--split-seed", er_split_seed);
    err_cmd->callback([&] {
        vit::Model model = vit::load_weights_file(er_model);
        harness::BundleCache cache = load_cache_for_model(er_cache, model);
        std::vector<int> labels_all;
        for (const auto& b : cache.bundles) labels_all.push_back(b.label);
        harness::Split split =
            harness::split_by_labels(labels_all, cache.num_classes, er_split_seed);
        std::vector<size_t> indices = split_part(split, er_part, cache.bundles.size());
        std::vector<int> labels;
        for (size_t i : indices) labels.push_back(cache.bundles[i].label);
        std::vector<int> pred_orig =
            harness::predict(model, cache, indices, harness::EvalPath::original);
        std::cout << "mode,err_learned,err_org,err_learned_not_org,err_org_not_learned,err_both,n\n";
        for (const std::string& comp : er_comps) {
            composer::CompositionModel cm = composer::load_composition(comp);
            std::vector<int> pred_learned =
                harness::predict(model, cache, indices, harness::EvalPath::learned, &cm.weights);
            harness::ErrorReport er = harness::error_breakdown(pred_learned, pred_orig, labels);
            std::cout << composer::to_string(cm.mode) << "," << fmt(er.err_learned) << ","
                      << fmt(er.err_org) << "," << fmt(er.err_learned_not_org) << ","
                      << fmt(er.err_org_not_learned) << "," << fmt(er.err_both) << "," << er.count
                      << "\n";
        }
    });

    // --- reweight ------------------------------------------------------------------------
    auto* rw_cmd = app.add_subcommand("reweight", "apply composition weights to image subbands");
    std::string rw_image, rw_comp;
    rw_cmd->add_option("--image", rw_image)->required();
    rw_cmd->add_option("--composition", rw_comp)->required();
    rw_cmd->callback([&] {
        if (out.empty()) throw UsageError("reweight needs --out <file.ppm|file.tnsr>");
        Image img = load_image_any(rw_image);
        composer::CompositionModel cm = composer::load_composition(rw_comp);
        wavelet::PrimitiveSet prims = wavelet::primitive_images(wavelet::decompose(
            img, wavelet::basis_filters(cm.provenance.basis), cm.provenance.levels));
        save_image_any(out, harness::reweight_image(prims, cm.weights));
        std::cout << "wrote " << out << "\n";
    });

    // --- distort --------------------------------------------------------------------------
    auto* di_cmd = app.add_subcommand("distort", "additive Gaussian noise or block-DCT compression");
    std::string di_image, di_mode = "noise";
    double di_sigma = 0.1;
    int di_quality = 50;
    di_cmd->add_option("--image", di_image)->required();
    di_cmd->add_option("--mode", di_mode, "noise | compress");
    di_cmd->add_option("--sigma", di_sigma, "noise standard deviation on the [0,1] scale");
    di_cmd->add_option("--quality", di_quality, "compression quality in [1,100]");
    di_cmd->callback([&] {
        if (out.empty()) throw UsageError("distort needs --out <file>");
        Image img = load_image_any(di_image);
        Image result;
        if (di_mode == "noise") result = harness::distort_noise(img, di_sigma, seed);
        else if (di_mode == "compress") result = harness::distort_compress(img, di_quality);
        else throw UsageError("unknown distortion mode \"" + di_mode + "\"");
        save_image_any(out, result);
        std::cout << "wrote " << out << "\n";
    });

    // --- cka ------------------------------------------------------------------------------
    auto* cka_cmd = app.add_subcommand("cka", "layerwise CKA of summed vs learned compositions");
    std::string ck_model, ck_data, ck_comp;
    int ck_sample = 8;
    cka_cmd->add_option("--model", ck_model)->required();
    cka_cmd->add_option("--data", ck_data, "manifest.csv path")->required();
    cka_cmd->add_option("--composition", ck_comp)->required();
    cka_cmd->add_option("--sample", ck_sample, "number of images to average over");
    cka_cmd->callback([&] {
        vit::Model model = vit::load_weights_file(ck_model);
        harness::Dataset ds = harness::load_manifest(ck_data);
        composer::CompositionModel cm = composer::load_composition(ck_comp);
        std::vector<size_t> indices;
        for (size_t i = 0; i < ds.items.size() && static_cast<int>(i) < ck_sample; ++i)
            indices.push_back(i);
        harness::LayerCkaReport report = harness::layerwise_cka_report(
            model, ds, indices, wavelet::basis_filters(cm.provenance.basis),
            cm.provenance.levels, cm.weights);
        std::ostream* os = &std::cout;
        std::ofstream file;
        if (!out.empty()) {
            file.open(out, std::ios::binary);
            if (!file) throw DataError("cannot open " + out);
            os = &file;
        }
        *os << "layer,summed,learned\n";
        for (size_t l = 0; l < report.summed.size(); ++l)
            *os << l << "," << fmt(report.summed[l]) << "," << fmt(report.learned[l]) << "\n";
    });

    // --- ssim-map ----------------------------------------------------------------------------
    auto* sm_cmd = app.add_subcommand("ssim-map", "SSIM maps of original vs composed final tokens");
    std::string sm_model, sm_image, sm_comp;
    sm_cmd->add_option("--model", sm_model)->required();
    sm_cmd->add_option("--image", sm_image)->required();
    sm_cmd->add_option("--composition", sm_comp)->required();
    sm_cmd->callback([&] {
        if (out.empty()) throw UsageError("ssim-map needs --out <dir>");
        vit::Model model = vit::load_weights_file(sm_model);
        Image img = load_image_any(sm_image);
        composer::CompositionModel cm = composer::load_composition(sm_comp);
        harness::SsimMapReport report = harness::ssim_map_report(
            model, img, wavelet::basis_filters(cm.provenance.basis), cm.provenance.levels,
            cm.weights);
        fs::create_directories(out);
        for (size_t c = 0; c < report.maps.size(); ++c)
            write_tnsr_file(fs::path(out) / ("ssim_map_ch" + std::to_string(c) + ".tnsr"),
                            plane_to_tensor(report.maps[c]));
        std::cout << "score " << fmt(report.score) << " (per channel:";
        for (double s : report.channel_scores) std::cout << " " << fmt(s);
        std::cout << ")\n";
    });

    // --- run ------------------------------------------------------------------------------------
    auto* run_cmd = app.add_subcommand("run", "config-driven end-to-end experiment");
    run_cmd->callback([&] {
        if (config_path.empty()) throw UsageError("run needs --config <file>");
        if (out.empty()) throw UsageError("run needs --out <dir>");
        harness::RunConfig cfg = harness::RunConfig::from_file(config_path);
        harness::RunResult res = harness::run_experiment(cfg, out);
        std::cout << "experiment complete; reports in " << res.out_dir.string() << ":\n";
        for (const std::string& f : res.report_files) std::cout << "  " << f << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
