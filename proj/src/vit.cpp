#include "wavecomp/vit.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "wavecomp/errors.hpp"
#include "wavecomp/rng.hpp"

namespace wavecomp::vit {

namespace {

constexpr uint32_t kWeightsVersion = 1;

void require(bool cond, const std::string& msg) {
    if (!cond) throw DataError(msg);
}

Eigen::MatrixXd tensor_to_matrix(const Tensor& t, const std::string& name) {
    require(t.dims.size() == 2, "tensor " + name + " must be 2-D");
    Eigen::MatrixXd m(t.dims[0], t.dims[1]);
    for (uint32_t r = 0; r < t.dims[0]; ++r)
        for (uint32_t c = 0; c < t.dims[1]; ++c)
            m(r, c) = t.data[static_cast<size_t>(r) * t.dims[1] + c];
    return m;
}

Eigen::VectorXd tensor_to_vector(const Tensor& t, const std::string& name) {
    require(t.dims.size() == 1, "tensor " + name + " must be 1-D");
    return Eigen::Map<const Eigen::VectorXd>(t.data.data(), t.data.size());
}

Tensor matrix_to_tensor(const Eigen::MatrixXd& m) {
    Tensor t;
    t.dims = {static_cast<uint32_t>(m.rows()), static_cast<uint32_t>(m.cols())};
    t.data.resize(static_cast<size_t>(m.rows()) * m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            t.data[static_cast<size_t>(r) * m.cols() + c] = m(r, c);
    return t;
}

Tensor vector_to_tensor(const Eigen::VectorXd& v) {
    Tensor t;
    t.dims = {static_cast<uint32_t>(v.size())};
    t.data.assign(v.data(), v.data() + v.size());
    return t;
}

const Tensor& lookup(const TensorMap& tensors, const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("missing tensor " + name);
    return it->second;
}

void check_shape(const Tensor& t, const std::vector<uint32_t>& dims, const std::string& name) {
    if (t.dims != dims) {
        std::string want, got;
        for (uint32_t d : dims) want += std::to_string(d) + " ";
        for (uint32_t d : t.dims) got += std::to_string(d) + " ";
        throw DataError("tensor " + name + " has shape [ " + got + "] but config requires [ " +
                        want + "]");
    }
    for (double v : t.data)
        if (!std::isfinite(v)) throw DataError("tensor " + name + " contains non-finite values");
}

// Row-wise layer norm of a token matrix.
Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const Eigen::VectorXd& scale,
                           const Eigen::VectorXd& shift) {
    const Eigen::Index n = x.rows(), d = x.cols();
    Eigen::MatrixXd out(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        double mean = x.row(i).mean();
        double var = (x.row(i).array() - mean).square().sum() / static_cast<double>(d);
        double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        out.row(i) = ((x.row(i).array() - mean) * inv) * scale.transpose().array() +
                     shift.transpose().array();
    }
    return out;
}

// Rows of x through an affine map y = x W^T + b.
Eigen::MatrixXd affine(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w,
                       const Eigen::VectorXd& b) {
    Eigen::MatrixXd y = x * w.transpose();
    y.rowwise() += b.transpose();
    return y;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& s) {
    Eigen::MatrixXd p(s.rows(), s.cols());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        double mx = s.row(i).maxCoeff();
        Eigen::ArrayXd e = (s.row(i).array() - mx).exp();
        p.row(i) = e / e.sum();
    }
    return p;
}

Eigen::MatrixXd multi_head_attention(const Eigen::MatrixXd& x, const EncoderLayerParams& lp,
                                     int num_heads, std::vector<Eigen::MatrixXd>* attn_out) {
    const Eigen::Index n = x.rows(), d = x.cols();
    const Eigen::Index dh = d / num_heads;
    Eigen::MatrixXd q = affine(x, lp.wq, lp.bq);
    Eigen::MatrixXd k = affine(x, lp.wk, lp.bk);
    Eigen::MatrixXd v = affine(x, lp.wv, lp.bv);
    Eigen::MatrixXd concat(n, d);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int hidx = 0; hidx < num_heads; ++hidx) {
        auto qh = q.middleCols(hidx * dh, dh);
        auto kh = k.middleCols(hidx * dh, dh);
        auto vh = v.middleCols(hidx * dh, dh);
        Eigen::MatrixXd probs = softmax_rows(qh * kh.transpose() * scale);
        if (attn_out) attn_out->push_back(probs);
        concat.middleCols(hidx * dh, dh) = probs * vh;
    }
    return affine(concat, lp.wo, lp.bo);
}

Eigen::MatrixXd embed(const Model& model, const Image& image) {
    const ModelConfig& cfg = model.config;
    if (image.width != cfg.image_size || image.height != cfg.image_size ||
        image.channels != cfg.channels)
        throw DataError("image shape " + std::to_string(image.width) + "x" +
                        std::to_string(image.height) + "x" + std::to_string(image.channels) +
                        " does not match model config");
    const int g = cfg.grid(), p = cfg.patch_size, c = cfg.channels;
    Eigen::MatrixXd tokens(cfg.tokens(), cfg.hidden_dim);
    tokens.row(0) = model.cls_embedding.transpose();
    Eigen::VectorXd patch(cfg.patch_dim());
    for (int py = 0; py < g; ++py) {
        for (int px = 0; px < g; ++px) {
            // patch pixels flattened row-major, channel-last
            for (int dy = 0; dy < p; ++dy)
                for (int dx = 0; dx < p; ++dx)
                    for (int ch = 0; ch < c; ++ch)
                        patch[(static_cast<Eigen::Index>(dy) * p + dx) * c + ch] =
                            image.at(px * p + dx, py * p + dy, ch);
            tokens.row(1 + py * g + px) =
                (model.patch_weight * patch + model.patch_bias).transpose();
        }
    }
    return tokens + model.pos_embedding;
}

LayerTrace forward_impl(const Model& model, const Image& image,
                        std::vector<Eigen::MatrixXd>* attn_out) {
    LayerTrace trace;
    Eigen::MatrixXd x = embed(model, image);
    trace.layers.push_back(x);
    const int L = model.config.num_layers;
    for (int l = 0; l < L; ++l) {
        const EncoderLayerParams& lp = model.layers[l];
        x += multi_head_attention(layer_norm(x, lp.ln1_scale, lp.ln1_shift), lp,
                                  model.config.num_heads, attn_out);
        Eigen::MatrixXd h = affine(layer_norm(x, lp.ln2_scale, lp.ln2_shift), lp.mlp_w1, lp.mlp_b1);
        h = h.unaryExpr([](double v) { return gelu(v); });
        x += affine(h, lp.mlp_w2, lp.mlp_b2);
        if (l == L - 1) {
            trace.layers.push_back(layer_norm(x, model.lnf_scale, model.lnf_shift));
        } else {
            trace.layers.push_back(x);
        }
    }
    for (const auto& m : trace.layers)
        if (!m.allFinite())
            throw NumericError("non-finite values in encoder trace");
    return trace;
}

} // namespace

void ModelConfig::validate() const {
    auto positive = [](int v, const char* name) {
        if (v <= 0) throw UsageError(std::string("model config: ") + name + " must be positive");
    };
    positive(image_size, "image_size");
    positive(channels, "channels");
    positive(patch_size, "patch_size");
    positive(hidden_dim, "hidden_dim");
    positive(num_heads, "num_heads");
    positive(num_layers, "num_layers");
    positive(mlp_dim, "mlp_dim");
    positive(num_classes, "num_classes");
    if (image_size % patch_size != 0)
        throw UsageError("model config: image_size must be divisible by patch_size");
    if (hidden_dim % num_heads != 0)
        throw UsageError("model config: hidden_dim must be divisible by num_heads");
}

ModelConfig toy_config() { return ModelConfig{}; }

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440));
}

Eigen::VectorXd layer_norm_normalize(const Eigen::VectorXd& x, double eps) {
    double mean = x.mean();
    double var = (x.array() - mean).square().sum() / static_cast<double>(x.size());
    return (x.array() - mean) / std::sqrt(var + eps);
}

std::vector<std::pair<std::string, std::vector<uint32_t>>> tensor_layout(const ModelConfig& cfg) {
    const auto D = static_cast<uint32_t>(cfg.hidden_dim);
    const auto N = static_cast<uint32_t>(cfg.tokens());
    const auto P = static_cast<uint32_t>(cfg.patch_dim());
    const auto M = static_cast<uint32_t>(cfg.mlp_dim);
    const auto K = static_cast<uint32_t>(cfg.num_classes);
    std::vector<std::pair<std::string, std::vector<uint32_t>>> out;
    out.push_back({"patch_proj.weight", {D, P}});
    out.push_back({"patch_proj.bias", {D}});
    out.push_back({"cls", {D}});
    out.push_back({"pos", {N, D}});
    for (int l = 0; l < cfg.num_layers; ++l) {
        std::string pre = "layer" + std::to_string(l) + ".";
        out.push_back({pre + "ln1.scale", {D}});
        out.push_back({pre + "ln1.shift", {D}});
        for (const char* nm : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
            out.push_back({pre + nm, {D, D}});
        for (const char* nm : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"})
            out.push_back({pre + nm, {D}});
        out.push_back({pre + "ln2.scale", {D}});
        out.push_back({pre + "ln2.shift", {D}});
        out.push_back({pre + "mlp.w1", {M, D}});
        out.push_back({pre + "mlp.b1", {M}});
        out.push_back({pre + "mlp.w2", {D, M}});
        out.push_back({pre + "mlp.b2", {D}});
    }
    out.push_back({"ln_f.scale", {D}});
    out.push_back({"ln_f.shift", {D}});
    out.push_back({"head.weight", {K, D}});
    out.push_back({"head.bias", {K}});
    return out;
}

Model model_from_tensors(const ModelConfig& config, const TensorMap& tensors) {
    config.validate();
    auto layout = tensor_layout(config);
    if (tensors.size() != layout.size()) {
        for (const auto& [name, dims] : layout)
            if (!tensors.count(name)) throw DataError("missing tensor " + name);
        for (const auto& [name, t] : tensors) {
            bool known = false;
            for (const auto& [lname, dims] : layout)
                if (lname == name) known = true;
            if (!known) throw DataError("unexpected tensor " + name);
        }
    }
    for (const auto& [name, dims] : layout) check_shape(lookup(tensors, name), dims, name);

    Model m;
    m.config = config;
    m.patch_weight = tensor_to_matrix(lookup(tensors, "patch_proj.weight"), "patch_proj.weight");
    m.patch_bias = tensor_to_vector(lookup(tensors, "patch_proj.bias"), "patch_proj.bias");
    m.cls_embedding = tensor_to_vector(lookup(tensors, "cls"), "cls");
    m.pos_embedding = tensor_to_matrix(lookup(tensors, "pos"), "pos");
    for (int l = 0; l < config.num_layers; ++l) {
        std::string pre = "layer" + std::to_string(l) + ".";
        EncoderLayerParams lp;
        lp.ln1_scale = tensor_to_vector(lookup(tensors, pre + "ln1.scale"), pre + "ln1.scale");
        lp.ln1_shift = tensor_to_vector(lookup(tensors, pre + "ln1.shift"), pre + "ln1.shift");
        lp.wq = tensor_to_matrix(lookup(tensors, pre + "attn.wq"), pre + "attn.wq");
        lp.wk = tensor_to_matrix(lookup(tensors, pre + "attn.wk"), pre + "attn.wk");
        lp.wv = tensor_to_matrix(lookup(tensors, pre + "attn.wv"), pre + "attn.wv");
        lp.wo = tensor_to_matrix(lookup(tensors, pre + "attn.wo"), pre + "attn.wo");
        lp.bq = tensor_to_vector(lookup(tensors, pre + "attn.bq"), pre + "attn.bq");
        lp.bk = tensor_to_vector(lookup(tensors, pre + "attn.bk"), pre + "attn.bk");
        lp.bv = tensor_to_vector(lookup(tensors, pre + "attn.bv"), pre + "attn.bv");
        lp.bo = tensor_to_vector(lookup(tensors, pre + "attn.bo"), pre + "attn.bo");
        lp.ln2_scale = tensor_to_vector(lookup(tensors, pre + "ln2.scale"), pre + "ln2.scale");
        lp.ln2_shift = tensor_to_vector(lookup(tensors, pre + "ln2.shift"), pre + "ln2.shift");
        lp.mlp_w1 = tensor_to_matrix(lookup(tensors, pre + "mlp.w1"), pre + "mlp.w1");
        lp.mlp_b1 = tensor_to_vector(lookup(tensors, pre + "mlp.b1"), pre + "mlp.b1");
        lp.mlp_w2 = tensor_to_matrix(lookup(tensors, pre + "mlp.w2"), pre + "mlp.w2");
        lp.mlp_b2 = tensor_to_vector(lookup(tensors, pre + "mlp.b2"), pre + "mlp.b2");
        m.layers.push_back(std::move(lp));
    }
    m.lnf_scale = tensor_to_vector(lookup(tensors, "ln_f.scale"), "ln_f.scale");
    m.lnf_shift = tensor_to_vector(lookup(tensors, "ln_f.shift"), "ln_f.shift");
    m.head_weight = tensor_to_matrix(lookup(tensors, "head.weight"), "head.weight");
    m.head_bias = tensor_to_vector(lookup(tensors, "head.bias"), "head.bias");
    return m;
}

TensorMap model_to_tensors(const Model& m) {
    TensorMap t;
    t["patch_proj.weight"] = matrix_to_tensor(m.patch_weight);
    t["patch_proj.bias"] = vector_to_tensor(m.patch_bias);
    t["cls"] = vector_to_tensor(m.cls_embedding);
    t["pos"] = matrix_to_tensor(m.pos_embedding);
    for (int l = 0; l < m.config.num_layers; ++l) {
        std::string pre = "layer" + std::to_string(l) + ".";
        const EncoderLayerParams& lp = m.layers[l];
        t[pre + "ln1.scale"] = vector_to_tensor(lp.ln1_scale);
        t[pre + "ln1.shift"] = vector_to_tensor(lp.ln1_shift);
        t[pre + "attn.wq"] = matrix_to_tensor(lp.wq);
        t[pre + "attn.wk"] = matrix_to_tensor(lp.wk);
        t[pre + "attn.wv"] = matrix_to_tensor(lp.wv);
        t[pre + "attn.wo"] = matrix_to_tensor(lp.wo);
        t[pre + "attn.bq"] = vector_to_tensor(lp.bq);
        t[pre + "attn.bk"] = vector_to_tensor(lp.bk);
        t[pre + "attn.bv"] = vector_to_tensor(lp.bv);
        t[pre + "attn.bo"] = vector_to_tensor(lp.bo);
        t[pre + "ln2.scale"] = vector_to_tensor(lp.ln2_scale);
        t[pre + "ln2.shift"] = vector_to_tensor(lp.ln2_shift);
        t[pre + "mlp.w1"] = matrix_to_tensor(lp.mlp_w1);
        t[pre + "mlp.b1"] = vector_to_tensor(lp.mlp_b1);
        t[pre + "mlp.w2"] = matrix_to_tensor(lp.mlp_w2);
        t[pre + "mlp.b2"] = vector_to_tensor(lp.mlp_b2);
    }
    t["ln_f.scale"] = vector_to_tensor(m.lnf_scale);
    t["ln_f.shift"] = vector_to_tensor(m.lnf_shift);
    t["head.weight"] = matrix_to_tensor(m.head_weight);
    t["head.bias"] = vector_to_tensor(m.head_bias);
    return t;
}

Model init_random(const ModelConfig& config, uint64_t seed) {
    config.validate();
    TensorMap tensors;
    for (const auto& [name, dims] : tensor_layout(config)) {
        Tensor t;
        t.dims = dims;
        size_t n = 1;
        for (uint32_t d : dims) n *= d;
        t.data.assign(n, 0.0);
        bool is_bias = name.ends_with("bias") || name.ends_with(".shift") ||
                       name.ends_with(".b1") || name.ends_with(".b2") ||
                       name.ends_with(".bq") || name.ends_with(".bk") ||
                       name.ends_with(".bv") || name.ends_with(".bo");
        bool is_scale = name.ends_with(".scale");
        if (is_scale) {
            std::fill(t.data.begin(), t.data.end(), 1.0);
        } else if (!is_bias) {
            Rng rng(seed, name);
            for (double& v : t.data) v = rng.truncated_normal(0.02);
        }
        tensors[name] = std::move(t);
    }
    return model_from_tensors(config, tensors);
}

LayerTrace forward(const Model& model, const Image& image) {
    return forward_impl(model, image, nullptr);
}

LayerTrace forward_with_attention(const Model& model, const Image& image,
                                  std::vector<Eigen::MatrixXd>* attention_maps) {
    return forward_impl(model, image, attention_maps);
}

Eigen::VectorXd cls_token(const LayerTrace& trace, int layer) {
    if (layer < 0 || layer >= static_cast<int>(trace.layers.size()))
        throw UsageError("layer " + std::to_string(layer) + " out of range [0, " +
                         std::to_string(trace.layers.size() - 1) + "]");
    return trace.layers[layer].row(0).transpose();
}

Eigen::VectorXd classify(const Model& model, const Eigen::VectorXd& cls) {
    if (cls.size() != model.head_weight.cols())
        throw UsageError("CLS vector has dimension " + std::to_string(cls.size()) +
                         " but the classifier expects " +
                         std::to_string(model.head_weight.cols()));
    return model.head_weight * cls + model.head_bias;
}

int predicted_class(const Eigen::VectorXd& logits) {
    int best = 0;
    for (int i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best]) best = i;
    return best;
}

// --- weight container -------------------------------------------------------

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32v(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

struct ByteReader {
    const std::vector<uint8_t>& buf;
    size_t pos = 0;
    std::string context = "container header";

    void need(size_t n, const std::string& what) {
        if (pos + n > buf.size())
            throw DataError("weight container truncated while reading " + what);
    }
    uint16_t u16(const std::string& what) {
        need(2, what);
        uint16_t v = static_cast<uint16_t>(buf[pos] | (buf[pos + 1] << 8));
        pos += 2;
        return v;
    }
    uint32_t u32(const std::string& what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    double f64(const std::string& what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[pos + i]) << (8 * i);
        pos += 8;
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }
};

} // namespace

std::vector<uint8_t> save_weights(const Model& model) {
    std::vector<uint8_t> out;
    out.insert(out.end(), {'V', 'I', 'T', 'W'});
    put_u32v(out, kWeightsVersion);
    const ModelConfig& c = model.config;
    for (int field : {c.image_size, c.channels, c.patch_size, c.hidden_dim, c.num_heads,
                      c.num_layers, c.mlp_dim, c.num_classes})
        put_u32v(out, static_cast<uint32_t>(field));
    TensorMap tensors = model_to_tensors(model);
    auto layout = tensor_layout(model.config);
    put_u32v(out, static_cast<uint32_t>(layout.size()));
    for (const auto& [name, dims] : layout) {
        const Tensor& t = tensors.at(name);
        put_u16(out, static_cast<uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u32v(out, static_cast<uint32_t>(t.dims.size()));
        for (uint32_t d : t.dims) put_u32v(out, d);
        for (double v : t.data) {
            uint64_t bits;
            std::memcpy(&bits, &v, 8);
            for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((bits >> (8 * i)) & 0xff));
        }
    }
    return out;
}

Model load_weights(const std::vector<uint8_t>& bytes) {
    ByteReader r{bytes};
    r.need(4, "magic");
    if (std::memcmp(bytes.data(), "VITW", 4) != 0)
        throw DataError("weight container has bad magic");
    r.pos = 4;
    uint32_t version = r.u32("version");
    if (version != kWeightsVersion)
        throw DataError("unsupported weight container version " + std::to_string(version));
    ModelConfig cfg;
    cfg.image_size = static_cast<int>(r.u32("config.image_size"));
    cfg.channels = static_cast<int>(r.u32("config.channels"));
    cfg.patch_size = static_cast<int>(r.u32("config.patch_size"));
    cfg.hidden_dim = static_cast<int>(r.u32("config.hidden_dim"));
    cfg.num_heads = static_cast<int>(r.u32("config.num_heads"));
    cfg.num_layers = static_cast<int>(r.u32("config.num_layers"));
    cfg.mlp_dim = static_cast<int>(r.u32("config.mlp_dim"));
    cfg.num_classes = static_cast<int>(r.u32("config.num_classes"));
    cfg.validate();

    uint32_t count = r.u32("tensor count");
    auto layout = tensor_layout(cfg);
    if (count != layout.size())
        throw DataError("weight container lists " + std::to_string(count) + " tensors but config requires " +
                        std::to_string(layout.size()) + " (first expected: " + layout[std::min<size_t>(count, layout.size() - 1)].first + ")");
    TensorMap tensors;
    for (uint32_t i = 0; i < count; ++i) {
        const std::string expected = layout[i].first;
        uint16_t name_len = r.u16("name length of tensor " + expected);
        r.need(name_len, "name of tensor " + expected);
        std::string name(bytes.begin() + static_cast<long>(r.pos),
                         bytes.begin() + static_cast<long>(r.pos + name_len));
        r.pos += name_len;
        Tensor t;
        uint32_t ndim = r.u32("ndim of " + name);
        if (ndim == 0 || ndim > 4) throw DataError("implausible ndim for tensor " + name);
        size_t n = 1;
        for (uint32_t k = 0; k < ndim; ++k) {
            uint32_t d = r.u32("dims of " + name);
            t.dims.push_back(d);
            n *= d;
        }
        t.data.reserve(n);
        for (size_t k = 0; k < n; ++k) t.data.push_back(r.f64("payload of " + name));
        tensors[name] = std::move(t);
    }
    return model_from_tensors(cfg, tensors);
}

void save_weights_file(const std::filesystem::path& path, const Model& model) {
    auto bytes = save_weights(model);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw DataError("weight write failed: " + path.string());
}

Model load_weights_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return load_weights(bytes);
}

uint64_t model_hash(const Model& model) {
    auto bytes = save_weights(model);
    return fnv1a64(bytes.data(), bytes.size());
}

} // namespace wavecomp::vit
