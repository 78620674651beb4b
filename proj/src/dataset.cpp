#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "wavecomp/errors.hpp"
#include "wavecomp/harness.hpp"
#include "wavecomp/rng.hpp"

namespace wavecomp::harness {

namespace {

constexpr double kTwoPi = 6.283185307179586476925287;

std::string class_id(int k, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "c%02d_i%04d", k, i);
    return buf;
}

} // namespace

Dataset generate_synthetic_dataset(int num_classes, int per_class, int size, uint64_t seed) {
    if (num_classes < 2) throw UsageError("synthetic dataset needs at least 2 classes");
    if (per_class < 1) throw UsageError("per_class must be positive");
    if (size < 8 || size % 4 != 0)
        throw UsageError("synthetic image size must be a multiple of 4 and at least 8 "
                         "(admissible for the toy ViT and 2-level DWT)");

    Dataset ds;
    ds.num_classes = num_classes;
    ds.provenance = "synthetic(seed=" + std::to_string(seed) + ")";
    const int channels = 3;
    const double channel_gain[3] = {1.0, 0.85, 0.7};

    for (int k = 0; k < num_classes; ++k) {
        // class signature: orientation + spatial frequency of the grating
        const double theta = kTwoPi / 2.0 * k / num_classes;
        const double freq = 1.5 + (k % 4);
        const double ct = std::cos(theta), st = std::sin(theta);
        for (int i = 0; i < per_class; ++i) {
            Rng rng(seed, "synth:" + std::to_string(k) + ":" + std::to_string(i));
            const double phase = rng.uniform(-0.5, 0.5);
            const double chroma_shift = rng.uniform(-0.3, 0.3);
            const int blob_count = 1 + static_cast<int>(rng.below(3));
            struct Blob {
                double cx, cy, sigma, amp;
            };
            std::vector<Blob> blobs;
            for (int b = 0; b < blob_count; ++b)
                blobs.push_back({rng.next_double(), rng.next_double(), rng.uniform(0.08, 0.2),
                                 rng.uniform(-0.15, 0.15)});

            Image img(size, size, channels);
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    const double u = (x + 0.5) / size, v = (y + 0.5) / size;
                    double blob = 0.0;
                    for (const Blob& b : blobs) {
                        double dx = u - b.cx, dy = v - b.cy;
                        blob += b.amp * std::exp(-(dx * dx + dy * dy) / (2 * b.sigma * b.sigma));
                    }
                    const double carrier = kTwoPi * freq * (u * ct + v * st) + phase;
                    for (int c = 0; c < channels; ++c) {
                        double g = 0.22 * channel_gain[c] *
                                   std::sin(carrier + chroma_shift * c);
                        double val = 0.5 + g + blob + 0.02 * rng.normal();
                        img.at(x, y, c) = std::clamp(val, 0.0, 1.0);
                    }
                }
            }
            ds.items.push_back({class_id(k, i), std::move(img), k});
        }
    }
    return ds;
}

Dataset load_manifest(const std::filesystem::path& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw DataError("cannot open manifest " + manifest_path.string());
    const std::filesystem::path base = manifest_path.parent_path();

    Dataset ds;
    ds.provenance = "manifest(" + manifest_path.filename().string() + ")";
    std::string line;
    int row = 0;
    int max_label = -1;
    std::vector<std::string> seen_ids;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty() || line[0] == '#') continue;
        if (row == 1 && line.rfind("id,", 0) == 0) continue; // header
        std::istringstream ss(line);
        std::string id, rel, label_str;
        if (!std::getline(ss, id, ',') || !std::getline(ss, rel, ',') ||
            !std::getline(ss, label_str))
            throw DataError("manifest row " + std::to_string(row) +
                            ": expected \"id,relative_path,label\"");
        int label;
        try {
            label = std::stoi(label_str);
        } catch (...) {
            throw DataError("manifest row " + std::to_string(row) + " (id " + id +
                            "): bad label \"" + label_str + "\"");
        }
        if (label < 0)
            throw DataError("manifest row " + std::to_string(row) + " (id " + id +
                            "): label out of range");
        if (std::find(seen_ids.begin(), seen_ids.end(), id) != seen_ids.end())
            throw DataError("manifest row " + std::to_string(row) + ": duplicate id " + id);
        seen_ids.push_back(id);

        const std::filesystem::path file = base / rel;
        if (!std::filesystem::exists(file))
            throw DataError("manifest row " + std::to_string(row) + " (id " + id +
                            "): missing file " + file.string());
        Image img;
        if (file.extension() == ".ppm") {
            img = read_ppm(file);
        } else if (file.extension() == ".tnsr") {
            img = tensor_to_image(read_tnsr_file(file), file.string());
        } else {
            throw DataError("manifest row " + std::to_string(row) + " (id " + id +
                            "): unsupported image format " + file.extension().string());
        }
        max_label = std::max(max_label, label);
        ds.items.push_back({id, std::move(img), label});
    }
    if (ds.items.empty()) throw DataError("manifest " + manifest_path.string() + " lists no images");
    ds.num_classes = max_label + 1;
    return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir, bool as_ppm) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.csv", std::ios::binary);
    if (!manifest) throw DataError("cannot write manifest in " + dir.string());
    manifest << "id,relative_path,label\n";
    for (const DatasetItem& item : ds.items) {
        std::string file = item.id + (as_ppm ? ".ppm" : ".tnsr");
        if (as_ppm)
            write_ppm(dir / file, item.image);
        else
            write_tnsr_file(dir / file, image_to_tensor(item.image));
        manifest << item.id << "," << file << "," << item.label << "\n";
    }
}

Split split_dataset(const Dataset& ds, uint64_t seed) {
    std::vector<int> labels;
    labels.reserve(ds.items.size());
    for (const DatasetItem& item : ds.items) labels.push_back(item.label);
    return split_by_labels(labels, ds.num_classes, seed);
}

Split split_by_labels(const std::vector<int>& labels, int num_classes, uint64_t seed) {
    if (labels.empty()) throw DataError("cannot split an empty dataset");
    Split split;
    split.seed = seed;

    std::vector<std::vector<size_t>> per_class(num_classes);
    for (size_t i = 0; i < labels.size(); ++i) {
        int label = labels[i];
        if (label < 0 || label >= num_classes)
            throw DataError("dataset item " + std::to_string(i) + " has label out of range");
        per_class[label].push_back(i);
    }

    size_t min_class = labels.size();
    for (const auto& idx : per_class) min_class = std::min(min_class, idx.size());
    split.stratified = min_class >= 5;
    if (!split.stratified)
        std::cerr << "warning: class with " << min_class
                  << " item(s) is too small for a stratified 60:20:20 split; "
                     "falling back to an unstratified split\n";

    auto assign = [&](std::vector<size_t> idx, const std::string& stream) {
        Rng rng(seed, stream);
        rng.shuffle(idx);
        size_t n = idx.size();
        size_t n_train = n * 6 / 10; // integer floor avoids 0.6*n rounding down
        size_t n_val = n * 2 / 10;
        for (size_t i = 0; i < n; ++i) {
            if (i < n_train)
                split.train.push_back(idx[i]);
            else if (i < n_train + n_val)
                split.val.push_back(idx[i]);
            else
                split.test.push_back(idx[i]);
        }
    };

    if (split.stratified) {
        for (int k = 0; k < num_classes; ++k)
            assign(per_class[k], "split-class-" + std::to_string(k));
    } else {
        std::vector<size_t> all(labels.size());
        std::iota(all.begin(), all.end(), size_t{0});
        assign(all, "split-all");
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.val.begin(), split.val.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

} // namespace wavecomp::harness
