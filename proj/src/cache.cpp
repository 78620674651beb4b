#include <cstring>
#include <fstream>

#include "wavecomp/errors.hpp"
#include "wavecomp/harness.hpp"

namespace wavecomp::harness {

namespace {

constexpr uint32_t kCacheVersion = 1;

int resolve_layer(const vit::Model& model, int layer) {
    const int last = model.config.num_layers;
    if (layer == -1) return last;
    if (layer < 0 || layer > last)
        throw UsageError("probe layer " + std::to_string(layer) + " out of range [0, " +
                         std::to_string(last) + "]");
    return layer;
}

void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

uint32_t get_u32(std::istream& is, const char* what) {
    uint32_t v;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) throw DataError(std::string("cache truncated at ") + what);
    return v;
}
uint64_t get_u64(std::istream& is, const char* what) {
    uint64_t v;
    if (!is.read(reinterpret_cast<char*>(&v), 8)) throw DataError(std::string("cache truncated at ") + what);
    return v;
}

} // namespace

BundleCache cache_primitive_cls(const vit::Model& model, const Dataset& ds,
                                const wavelet::WaveletBasis& basis, int levels, int layer) {
    if (ds.items.empty()) throw DataError("cannot cache an empty dataset");
    const int probe_layer = resolve_layer(model, layer);

    BundleCache cache;
    cache.model_hash = vit::model_hash(model);
    cache.basis = basis.name;
    cache.levels = levels;
    cache.layer = probe_layer;
    cache.n = 3 * levels + 1;
    cache.dim = model.config.hidden_dim;
    cache.num_classes = ds.num_classes;

    for (const DatasetItem& item : ds.items) {
        wavelet::DecompositionTree tree = wavelet::decompose(item.image, basis, levels);
        wavelet::PrimitiveSet primitives = wavelet::primitive_images(tree);

        composer::CLSBundle bundle;
        bundle.id = item.id;
        bundle.label = item.label;
        bundle.z.resize(cache.n, cache.dim);
        for (int p = 0; p < cache.n; ++p) {
            vit::LayerTrace trace = vit::forward(model, primitives.items[p].image);
            bundle.z.row(p) = vit::cls_token(trace, probe_layer).transpose();
        }
        vit::LayerTrace trace = vit::forward(model, item.image);
        bundle.z_orig = vit::cls_token(trace, probe_layer);
        bundle.target = vit::predicted_class(vit::classify(model, bundle.z_orig));
        cache.bundles.push_back(std::move(bundle));
    }
    return cache;
}

void save_cache(const std::filesystem::path& path, const BundleCache& cache) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os.write("CLSB", 4);
    put_u32(os, kCacheVersion);
    put_u64(os, cache.model_hash);
    put_u32(os, cache.basis == wavelet::WaveletName::haar ? 0u : 1u);
    put_u32(os, static_cast<uint32_t>(cache.levels));
    put_u32(os, static_cast<uint32_t>(cache.layer));
    put_u32(os, static_cast<uint32_t>(cache.n));
    put_u32(os, static_cast<uint32_t>(cache.dim));
    put_u32(os, static_cast<uint32_t>(cache.num_classes));
    put_u32(os, static_cast<uint32_t>(cache.bundles.size()));
    for (const composer::CLSBundle& b : cache.bundles) {
        uint16_t len = static_cast<uint16_t>(b.id.size());
        os.write(reinterpret_cast<const char*>(&len), 2);
        os.write(b.id.data(), len);
        put_u32(os, static_cast<uint32_t>(b.label));
        put_u32(os, static_cast<uint32_t>(b.target));
        os.write(reinterpret_cast<const char*>(b.z_orig.data()),
                 static_cast<std::streamsize>(sizeof(double) * cache.dim));
        for (int p = 0; p < cache.n; ++p) {
            Eigen::VectorXd row = b.z.row(p).transpose();
            os.write(reinterpret_cast<const char*>(row.data()),
                     static_cast<std::streamsize>(sizeof(double) * cache.dim));
        }
    }
    if (!os) throw DataError("cache write failed: " + path.string());
}

BundleCache load_cache(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open cache " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "CLSB", 4) != 0)
        throw DataError(path.string() + ": not a CLS bundle cache");
    if (get_u32(is, "version") != kCacheVersion)
        throw DataError(path.string() + ": unsupported cache version");
    BundleCache cache;
    cache.model_hash = get_u64(is, "model hash");
    cache.basis = get_u32(is, "basis") == 0 ? wavelet::WaveletName::haar : wavelet::WaveletName::db4;
    cache.levels = static_cast<int>(get_u32(is, "levels"));
    cache.layer = static_cast<int>(get_u32(is, "layer"));
    cache.n = static_cast<int>(get_u32(is, "n"));
    cache.dim = static_cast<int>(get_u32(is, "dim"));
    cache.num_classes = static_cast<int>(get_u32(is, "num_classes"));
    uint32_t count = get_u32(is, "bundle count");
    for (uint32_t i = 0; i < count; ++i) {
        composer::CLSBundle b;
        uint16_t len;
        if (!is.read(reinterpret_cast<char*>(&len), 2))
            throw DataError(path.string() + ": truncated bundle id");
        b.id.resize(len);
        if (!is.read(b.id.data(), len)) throw DataError(path.string() + ": truncated bundle id");
        b.label = static_cast<int>(get_u32(is, "label"));
        b.target = static_cast<int>(get_u32(is, "target"));
        b.z_orig.resize(cache.dim);
        if (!is.read(reinterpret_cast<char*>(b.z_orig.data()),
                     static_cast<std::streamsize>(sizeof(double) * cache.dim)))
            throw DataError(path.string() + ": truncated CLS payload for " + b.id);
        b.z.resize(cache.n, cache.dim);
        for (int p = 0; p < cache.n; ++p) {
            Eigen::VectorXd row(cache.dim);
            if (!is.read(reinterpret_cast<char*>(row.data()),
                         static_cast<std::streamsize>(sizeof(double) * cache.dim)))
                throw DataError(path.string() + ": truncated primitive CLS payload for " + b.id);
            b.z.row(p) = row.transpose();
        }
        cache.bundles.push_back(std::move(b));
    }
    return cache;
}

BundleCache load_cache_checked(const std::filesystem::path& path, uint64_t model_hash,
                               wavelet::WaveletName basis, int levels, int layer) {
    BundleCache cache = load_cache(path);
    if (cache.model_hash != model_hash)
        throw DataError(path.string() + ": stale cache (model hash mismatch)");
    if (cache.basis != basis || cache.levels != levels ||
        (layer != -1 && cache.layer != layer))
        throw DataError(path.string() + ": stale cache (basis/levels/layer key mismatch)");
    return cache;
}

std::vector<int> predict(const vit::Model& model, const BundleCache& cache,
                         const std::vector<size_t>& indices, EvalPath path,
                         const Eigen::VectorXd* eta) {
    if (path == EvalPath::learned && eta == nullptr)
        throw UsageError("learned evaluation path needs composition weights");
    std::vector<int> out;
    out.reserve(indices.size());
    for (size_t idx : indices) {
        if (idx >= cache.bundles.size())
            throw DataError("split index " + std::to_string(idx) + " exceeds cache size");
        const composer::CLSBundle& b = cache.bundles[idx];
        Eigen::VectorXd cls;
        switch (path) {
            case EvalPath::original:
                cls = b.z_orig;
                break;
            case EvalPath::summed:
                // the literal sum of primitive representations (its own
                // code path, not compose(1, Z))
                cls = b.z.colwise().sum().transpose();
                break;
            case EvalPath::learned:
                cls = composer::compose(*eta, b.z);
                break;
        }
        out.push_back(vit::predicted_class(vit::classify(model, cls)));
    }
    return out;
}

EvalRow eval_accuracy(const vit::Model& model, const BundleCache& cache,
                      const std::vector<size_t>& indices, EvalPath path,
                      const Eigen::VectorXd* eta, const std::string& condition) {
    if (indices.empty()) throw UsageError("evaluation over an empty split");
    std::vector<int> preds = predict(model, cache, indices, path, eta);
    size_t gt_hits = 0, rel_hits = 0;
    for (size_t i = 0; i < indices.size(); ++i) {
        const composer::CLSBundle& b = cache.bundles[indices[i]];
        if (preds[i] == b.label) ++gt_hits;
        if (preds[i] == b.target) ++rel_hits;
    }
    EvalRow row;
    row.condition = condition;
    row.count = indices.size();
    row.accuracy_gt = static_cast<double>(gt_hits) / static_cast<double>(indices.size());
    row.accuracy_relative = static_cast<double>(rel_hits) / static_cast<double>(indices.size());
    return row;
}

ErrorReport error_breakdown(const std::vector<int>& predictions_learned,
                            const std::vector<int>& predictions_original,
                            const std::vector<int>& labels) {
    if (predictions_learned.size() != labels.size() ||
        predictions_original.size() != labels.size())
        throw UsageError("error breakdown inputs must have equal lengths");
    if (labels.empty()) throw UsageError("error breakdown over empty inputs");
    size_t only_learned = 0, only_org = 0, both = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        bool lw = predictions_learned[i] != labels[i];
        bool ow = predictions_original[i] != labels[i];
        if (lw && ow)
            ++both;
        else if (lw)
            ++only_learned;
        else if (ow)
            ++only_org;
    }
    const double n = static_cast<double>(labels.size());
    ErrorReport r;
    r.count = labels.size();
    r.err_learned_not_org = 100.0 * static_cast<double>(only_learned) / n;
    r.err_org_not_learned = 100.0 * static_cast<double>(only_org) / n;
    r.err_both = 100.0 * static_cast<double>(both) / n;
    // aggregates as sums of the disjoint parts so the identities are bitwise
    r.err_learned = r.err_learned_not_org + r.err_both;
    r.err_org = r.err_org_not_learned + r.err_both;
    return r;
}

Image reweight_image(const wavelet::PrimitiveSet& primitives, const Eigen::VectorXd& eta) {
    if (static_cast<size_t>(eta.size()) != primitives.items.size())
        throw UsageError("weight count " + std::to_string(eta.size()) +
                         " does not match primitive count " +
                         std::to_string(primitives.items.size()));
    if (primitives.items.empty()) throw UsageError("empty primitive set");
    Image out = primitives.items[0].image;
    for (double& v : out.data) v = 0.0;
    for (int p = 0; p < eta.size(); ++p) {
        const Image& prim = primitives.items[p].image;
        if (!out.same_shape(prim)) throw DataError("primitive images disagree in shape");
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += eta[p] * prim.data[i];
    }
    return out;
}

} // namespace wavecomp::harness
