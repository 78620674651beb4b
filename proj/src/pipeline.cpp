#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wavecomp/errors.hpp"
#include "wavecomp/harness.hpp"
#include "wavecomp/rng.hpp"

namespace wavecomp::harness {

namespace {

using ordered_json = nlohmann::ordered_json;

// Shortest round-trip decimal form, deterministic across reruns.
std::string fmt(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

uint64_t parse_u64(const std::string& v, const std::string& key) {
    try {
        return std::stoull(v);
    } catch (...) {
        throw UsageError("config key " + key + ": bad integer \"" + v + "\"");
    }
}

int parse_int(const std::string& v, const std::string& key) {
    try {
        return std::stoi(v);
    } catch (...) {
        throw UsageError("config key " + key + ": bad integer \"" + v + "\"");
    }
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        return std::stod(v);
    } catch (...) {
        throw UsageError("config key " + key + ": bad number \"" + v + "\"");
    }
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw UsageError("config key " + key + ": bad boolean \"" + v + "\"");
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    size_t e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    return os;
}

} // namespace

RunConfig RunConfig::from_string(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));

        if (key == "model") cfg.model = value;
        else if (key == "model_seed") cfg.model_seed = parse_u64(value, key);
        else if (key == "dataset") cfg.dataset = value;
        else if (key == "classes") cfg.classes = parse_int(value, key);
        else if (key == "per_class") cfg.per_class = parse_int(value, key);
        else if (key == "image_size") cfg.image_size = parse_int(value, key);
        else if (key == "dataset_seed") cfg.dataset_seed = parse_u64(value, key);
        else if (key == "split_seed") cfg.split_seed = parse_u64(value, key);
        else if (key == "basis") cfg.basis = wavelet::wavelet_name_from_string(value);
        else if (key == "levels") cfg.levels = parse_int(value, key);
        else if (key == "layer") cfg.layer = parse_int(value, key);
        else if (key == "modes") {
            cfg.modes.clear();
            std::istringstream ms(value);
            std::string mode;
            while (std::getline(ms, mode, ','))
                cfg.modes.push_back(composer::mode_from_string(trim(mode)));
        } else if (key == "lr") cfg.lr = parse_double(value, key);
        else if (key == "epochs") cfg.epochs = parse_int(value, key);
        else if (key == "train_seed") cfg.train_seed = parse_u64(value, key);
        else if (key == "soft_target") cfg.soft_target = parse_bool(value, key);
        else if (key == "noise_sigma") cfg.noise_sigma = parse_double(value, key);
        else if (key == "jpeg_quality") cfg.jpeg_quality = parse_int(value, key);
        else if (key == "distort_seed") cfg.distort_seed = parse_u64(value, key);
        else if (key == "cka_images") cfg.cka_images = parse_int(value, key);
        else if (key == "ssim_image_index") cfg.ssim_image_index = parse_int(value, key);
        else if (key == "reweight_images") cfg.reweight_images = parse_int(value, key);
        else throw UsageError("config line " + std::to_string(line_no) + ": unknown key \"" + key + "\"");
    }
    if (cfg.levels < 1 || cfg.levels > 2)
        throw UsageError("config: levels must be 1 or 2");
    if (cfg.modes.empty()) throw UsageError("config: modes must list at least one constraint mode");
    if (cfg.epochs < 1) throw UsageError("config: epochs must be positive");
    return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw UsageError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return from_string(ss.str());
}

std::map<std::string, std::string> RunConfig::echo() const {
    std::map<std::string, std::string> kv;
    kv["model"] = model;
    kv["model_seed"] = std::to_string(model_seed);
    kv["dataset"] = dataset;
    kv["classes"] = std::to_string(classes);
    kv["per_class"] = std::to_string(per_class);
    kv["image_size"] = std::to_string(image_size);
    kv["dataset_seed"] = std::to_string(dataset_seed);
    kv["split_seed"] = std::to_string(split_seed);
    kv["basis"] = wavelet::to_string(basis);
    kv["levels"] = std::to_string(levels);
    kv["layer"] = std::to_string(layer);
    std::string mode_list;
    for (size_t i = 0; i < modes.size(); ++i)
        mode_list += (i ? "," : "") + composer::to_string(modes[i]);
    kv["modes"] = mode_list;
    kv["lr"] = fmt(lr);
    kv["epochs"] = std::to_string(epochs);
    kv["train_seed"] = std::to_string(train_seed);
    kv["soft_target"] = soft_target ? "true" : "false";
    kv["noise_sigma"] = fmt(noise_sigma);
    kv["jpeg_quality"] = std::to_string(jpeg_quality);
    kv["distort_seed"] = std::to_string(distort_seed);
    kv["cka_images"] = std::to_string(cka_images);
    kv["ssim_image_index"] = std::to_string(ssim_image_index);
    kv["reweight_images"] = std::to_string(reweight_images);
    return kv;
}

namespace {

std::vector<composer::CLSBundle> select_bundles(const BundleCache& cache,
                                                const std::vector<size_t>& indices) {
    std::vector<composer::CLSBundle> out;
    out.reserve(indices.size());
    for (size_t i : indices) out.push_back(cache.bundles[i]);
    return out;
}

std::string model_tag(const RunConfig& cfg) {
    if (cfg.model == "toy") return "toy" + std::to_string(cfg.model_seed);
    return std::filesystem::path(cfg.model).stem().string();
}

void write_accuracy_csv(const std::filesystem::path& path, const std::vector<EvalRow>& rows) {
    auto os = open_out(path);
    os << "condition,acc_gt,acc_relative,n\n";
    for (const EvalRow& r : rows)
        os << r.condition << "," << fmt(r.accuracy_gt) << "," << fmt(r.accuracy_relative) << ","
           << r.count << "\n";
}

} // namespace

RunResult run_experiment(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    RunResult result;
    result.out_dir = out_dir;
    std::string stage = "setup";
    ordered_json manifest;
    manifest["status"] = "incomplete";
    for (const auto& [k, v] : cfg.echo()) manifest["config"][k] = v;

    auto flush_manifest = [&]() {
        auto os = open_out(out_dir / "manifest.json");
        os << manifest.dump(2) << "\n";
    };

    try {
        // --- dataset ---------------------------------------------------------
        stage = "dataset";
        Dataset ds = (cfg.dataset == "synthetic")
                         ? generate_synthetic_dataset(cfg.classes, cfg.per_class, cfg.image_size,
                                                      cfg.dataset_seed)
                         : load_manifest(cfg.dataset);

        // --- model -----------------------------------------------------------
        stage = "model";
        vit::Model model;
        if (cfg.model == "toy") {
            vit::ModelConfig mc = vit::toy_config();
            mc.image_size = cfg.image_size;
            mc.num_classes = ds.num_classes;
            model = vit::init_random(mc, cfg.model_seed);
        } else {
            model = vit::load_weights_file(cfg.model);
        }
        for (const DatasetItem& item : ds.items)
            if (item.image.width != model.config.image_size ||
                item.image.height != model.config.image_size ||
                item.image.channels != model.config.channels)
                throw DataError("dataset image " + item.id + " does not match the model config");
        if (model.config.image_size % 8 != 0)
            throw UsageError("image_size must be divisible by 8 for the distortion stage");
        vit::save_weights_file(out_dir / "model.vitw", model);
        manifest["artifacts"]["model"] = "model.vitw";

        Split split = split_dataset(ds, cfg.split_seed);
        const wavelet::WaveletBasis basis = wavelet::basis_filters(cfg.basis);
        const std::string tag = model_tag(cfg);
        const std::string condition_base =
            tag + " " + wavelet::to_string(cfg.basis) + " L" + std::to_string(cfg.levels);

        // --- primitive cache ---------------------------------------------------
        stage = "cache";
        BundleCache cache = cache_primitive_cls(model, ds, basis, cfg.levels, cfg.layer);
        save_cache(out_dir / "cache_original.clsb", cache);
        manifest["artifacts"]["cache"] = "cache_original.clsb";

        // --- training ----------------------------------------------------------
        stage = "train";
        composer::TrainHyper hyper;
        hyper.lr = cfg.lr;
        hyper.epochs = cfg.epochs;
        hyper.seed = cfg.train_seed;
        hyper.soft_target = cfg.soft_target;
        composer::Provenance prov{cfg.basis, cfg.levels, cache.layer};

        std::vector<composer::CLSBundle> train_bundles = select_bundles(cache, split.train);
        std::vector<composer::CLSBundle> val_bundles = select_bundles(cache, split.val);
        std::vector<composer::CompositionModel> trained;
        for (composer::ConstraintMode mode : cfg.modes) {
            composer::CompositionModel cm =
                composer::train(model, train_bundles, val_bundles, mode, hyper, prov);
            std::string file = "composition_" + composer::to_string(mode) + ".json";
            composer::save_composition(out_dir / file, cm);
            manifest["artifacts"]["compositions"].push_back(file);
            trained.push_back(std::move(cm));
        }

        // --- accuracy table ---------------------------------------------------
        stage = "evaluate";
        std::vector<EvalRow> rows;
        rows.push_back(eval_accuracy(model, cache, split.test, EvalPath::original, nullptr,
                                     condition_base + " original"));
        rows.push_back(eval_accuracy(model, cache, split.test, EvalPath::summed, nullptr,
                                     condition_base + " summed"));
        for (const composer::CompositionModel& cm : trained)
            rows.push_back(eval_accuracy(model, cache, split.test, EvalPath::learned, &cm.weights,
                                         condition_base + " " + composer::to_string(cm.mode)));
        write_accuracy_csv(out_dir / "table_accuracy.csv", rows);
        manifest["reports"]["accuracy"] = "table_accuracy.csv";

        // --- learned-weights dump ----------------------------------------------
        stage = "weights";
        {
            ordered_json w;
            w["model"] = tag;
            w["basis"] = wavelet::to_string(cfg.basis);
            w["levels"] = cfg.levels;
            w["layer"] = cache.layer;
            ordered_json subbands = ordered_json::array();
            for (const wavelet::SubbandId& id : wavelet::canonical_subbands(cfg.levels))
                subbands.push_back(wavelet::to_string(id));
            w["subband_order"] = subbands;
            for (const composer::CompositionModel& cm : trained) {
                ordered_json arr = ordered_json::array();
                for (int i = 0; i < cm.n(); ++i) arr.push_back(cm.weights[i]);
                w["modes"][composer::to_string(cm.mode)] = arr;
            }
            auto os = open_out(out_dir / "weights.json");
            os << w.dump(2) << "\n";
            manifest["reports"]["weights"] = "weights.json";
        }

        // --- reweighted-image evaluation ----------------------------------------
        stage = "reweight";
        {
            std::vector<size_t> sample = split.test;
            if (static_cast<int>(sample.size()) > cfg.reweight_images)
                sample.resize(cfg.reweight_images);
            auto os = open_out(out_dir / "table_reweighted.csv");
            os << "mode,accuracy,n\n";
            auto classify_image = [&](const Image& img) {
                vit::LayerTrace trace = vit::forward(model, img);
                return vit::predicted_class(
                    vit::classify(model, vit::cls_token(trace, cache.layer)));
            };
            size_t original_hits = 0;
            std::vector<size_t> mode_hits(trained.size(), 0);
            for (size_t idx : sample) {
                const DatasetItem& item = ds.items[idx];
                if (classify_image(item.image) == item.label) ++original_hits;
                wavelet::PrimitiveSet prims = wavelet::primitive_images(
                    wavelet::decompose(item.image, basis, cfg.levels));
                for (size_t m = 0; m < trained.size(); ++m) {
                    Image rw = reweight_image(prims, trained[m].weights);
                    if (classify_image(rw) == item.label) ++mode_hits[m];
                }
            }
            const double n = static_cast<double>(sample.size());
            os << "original," << fmt(original_hits / n) << "," << sample.size() << "\n";
            for (size_t m = 0; m < trained.size(); ++m)
                os << composer::to_string(trained[m].mode) << "," << fmt(mode_hits[m] / n) << ","
                   << sample.size() << "\n";
            manifest["reports"]["reweighted"] = "table_reweighted.csv";
        }

        // --- error-overlap breakdown ---------------------------------------------
        stage = "errors";
        {
            std::vector<int> labels;
            for (size_t idx : split.test) labels.push_back(cache.bundles[idx].label);
            std::vector<int> pred_orig = predict(model, cache, split.test, EvalPath::original);
            auto os = open_out(out_dir / "errors.csv");
            os << "mode,err_learned,err_org,err_learned_not_org,err_org_not_learned,err_both,n\n";
            for (const composer::CompositionModel& cm : trained) {
                std::vector<int> pred_learned =
                    predict(model, cache, split.test, EvalPath::learned, &cm.weights);
                ErrorReport er = error_breakdown(pred_learned, pred_orig, labels);
                os << composer::to_string(cm.mode) << "," << fmt(er.err_learned) << ","
                   << fmt(er.err_org) << "," << fmt(er.err_learned_not_org) << ","
                   << fmt(er.err_org_not_learned) << "," << fmt(er.err_both) << "," << er.count
                   << "\n";
            }
            manifest["reports"]["errors"] = "errors.csv";
        }

        // --- distortion robustness -------------------------------------------------
        stage = "distortion";
        {
            auto os = open_out(out_dir / "distortion.csv");
            os << "image_type,original,unconstrained,conic,convex\n";
            auto eval_variant = [&](const std::string& name, const Dataset& variant) {
                BundleCache vcache = (&variant == &ds)
                                         ? cache
                                         : cache_primitive_cls(model, variant, basis, cfg.levels,
                                                               cfg.layer);
                os << name;
                os << "," << fmt(eval_accuracy(model, vcache, split.test, EvalPath::original,
                                               nullptr, name)
                                     .accuracy_gt);
                for (composer::ConstraintMode mode :
                     {composer::ConstraintMode::unconstrained, composer::ConstraintMode::conic,
                      composer::ConstraintMode::convex}) {
                    const composer::CompositionModel* cm = nullptr;
                    for (const composer::CompositionModel& t : trained)
                        if (t.mode == mode) cm = &t;
                    os << ",";
                    if (cm)
                        os << fmt(eval_accuracy(model, vcache, split.test, EvalPath::learned,
                                                &cm->weights, name)
                                      .accuracy_gt);
                }
                os << "\n";
            };
            eval_variant("original", ds);

            Dataset compressed = ds;
            for (DatasetItem& item : compressed.items)
                item.image = distort_compress(item.image, cfg.jpeg_quality);
            compressed.provenance = ds.provenance + "+compress(q=" + std::to_string(cfg.jpeg_quality) + ")";
            eval_variant("compressed", compressed);

            Dataset noisy = ds;
            for (DatasetItem& item : noisy.items)
                item.image = distort_noise(item.image, cfg.noise_sigma,
                                           cfg.distort_seed ^ fnv1a64(item.id));
            noisy.provenance = ds.provenance + "+noise(sigma=" + fmt(cfg.noise_sigma) + ")";
            eval_variant("noisy", noisy);
            manifest["reports"]["distortion"] = "distortion.csv";
        }

        // --- layerwise CKA curves -----------------------------------------------------
        stage = "cka";
        {
            std::vector<size_t> sample = split.test;
            if (static_cast<int>(sample.size()) > cfg.cka_images) sample.resize(cfg.cka_images);
            LayerCkaReport report = layerwise_cka_report(model, ds, sample, basis, cfg.levels,
                                                         trained.front().weights);
            auto os = open_out(out_dir / "cka_layers.csv");
            os << "layer,summed,learned\n";
            for (size_t l = 0; l < report.summed.size(); ++l)
                os << l << "," << fmt(report.summed[l]) << "," << fmt(report.learned[l]) << "\n";
            manifest["reports"]["cka"] = "cka_layers.csv";
        }

        // --- SSIM maps ----------------------------------------------------------------
        stage = "ssim";
        {
            if (cfg.ssim_image_index < 0 ||
                cfg.ssim_image_index >= static_cast<int>(split.test.size()))
                throw UsageError("ssim_image_index out of range for the test split");
            size_t idx = split.test[static_cast<size_t>(cfg.ssim_image_index)];
            SsimMapReport report = ssim_map_report(model, ds.items[idx].image, basis, cfg.levels,
                                                   trained.front().weights);
            ordered_json sj;
            sj["image_id"] = ds.items[idx].id;
            sj["mode"] = composer::to_string(trained.front().mode);
            sj["score"] = report.score;
            sj["channel_scores"] = report.channel_scores;
            sj["window"] = report.params.window;
            sj["sigma"] = report.params.sigma;
            sj["k1"] = report.params.k1;
            sj["k2"] = report.params.k2;
            sj["data_range"] = report.params.data_range;
            manifest["reports"]["ssim"].push_back("ssim.json");
            for (size_t c = 0; c < report.maps.size(); ++c) {
                std::string file = "ssim_map_ch" + std::to_string(c) + ".tnsr";
                write_tnsr_file(out_dir / file, plane_to_tensor(report.maps[c]));
                manifest["reports"]["ssim"].push_back(file);
            }
            auto os = open_out(out_dir / "ssim.json");
            os << sj.dump(2) << "\n";
        }

        manifest["status"] = "complete";
        flush_manifest();
        for (const auto& [kind, value] : manifest["reports"].items()) {
            if (value.is_array())
                for (const auto& f : value) result.report_files.push_back(f.get<std::string>());
            else
                result.report_files.push_back(value.get<std::string>());
        }
        return result;
    } catch (...) {
        manifest["status"] = "incomplete";
        manifest["failed_stage"] = stage;
        try {
            flush_manifest();
        } catch (...) {
            // surface the original failure, not the manifest write
        }
        try {
            throw;
        } catch (const UsageError& e) {
            throw UsageError("stage " + stage + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError("stage " + stage + ": " + e.what());
        } catch (const NumericError& e) {
            throw NumericError("stage " + stage + ": " + e.what());
        } catch (...) {
            throw;
        }
    }
}

} // namespace wavecomp::harness
