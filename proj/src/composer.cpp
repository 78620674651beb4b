#include "wavecomp/composer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wavecomp/errors.hpp"
#include "wavecomp/rng.hpp"

namespace wavecomp::composer {

std::string to_string(ConstraintMode mode) {
    switch (mode) {
        case ConstraintMode::unconstrained: return "unconstrained";
        case ConstraintMode::conic: return "conic";
        case ConstraintMode::convex: return "convex";
    }
    return "?";
}

ConstraintMode mode_from_string(std::string_view s) {
    if (s == "unconstrained") return ConstraintMode::unconstrained;
    if (s == "conic") return ConstraintMode::conic;
    if (s == "convex") return ConstraintMode::convex;
    throw UsageError("unknown constraint mode \"" + std::string(s) +
                     "\" (supported: unconstrained, conic, convex)");
}

Eigen::VectorXd compose(const Eigen::VectorXd& eta, const Eigen::MatrixXd& z) {
    if (eta.size() != z.rows())
        throw UsageError("composition weight count " + std::to_string(eta.size()) +
                         " does not match primitive count " + std::to_string(z.rows()));
    return z.transpose() * eta;
}

namespace {

int last_argmax(const Eigen::VectorXd& w) {
    int best = 0;
    for (int i = 1; i < w.size(); ++i)
        if (w[i] >= w[best]) best = i;
    return best;
}

double sum_excluding(const Eigen::VectorXd& w, int skip) {
    double s = 0.0;
    for (int i = 0; i < w.size(); ++i)
        if (i != skip) s += w[i];
    return s;
}

// Euclidean projection onto { w : w_i >= 0, sum w = 1 }. The sort-threshold
// step finds the unique tau with sum max(eta_i - tau, 0) = 1; the pivot
// fix-up then pins the largest coordinate to 1 - (sum of the rest) so the
// feasibility short-circuit above sees bit-exact feasibility and projection
// is exactly idempotent.
Eigen::VectorXd project_convex(const Eigen::VectorXd& eta) {
    const int n = static_cast<int>(eta.size());
    if ((eta.array() >= 0.0).all()) {
        int j = last_argmax(eta);
        if (sum_excluding(eta, j) + eta[j] == 1.0) return eta;
    }

    std::vector<double> u(eta.data(), eta.data() + n);
    std::sort(u.begin(), u.end(), std::greater<double>());
    double cumsum = 0.0, tau = 0.0;
    for (int j = 0; j < n; ++j) {
        cumsum += u[j];
        double candidate = (cumsum - 1.0) / (j + 1);
        if (u[j] - candidate > 0.0) tau = candidate;
    }
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) w[i] = std::max(eta[i] - tau, 0.0);

    for (int guard = 0; guard < n + 2; ++guard) {
        int j = last_argmax(w);
        double fixed = 1.0 - sum_excluding(w, j);
        if (fixed == w[j]) break;
        w[j] = fixed;
    }
    return w;
}

Eigen::ArrayXd softmax(const Eigen::VectorXd& logits) {
    double mx = logits.maxCoeff();
    Eigen::ArrayXd e = (logits.array() - mx).exp();
    return e / e.sum();
}

LossGrad loss_grad_impl(const vit::Model& model, const Eigen::VectorXd& eta,
                        const Eigen::MatrixXd& z, const Eigen::VectorXd& q, int hard_target) {
    Eigen::VectorXd composed = compose(eta, z);
    Eigen::VectorXd logits = vit::classify(model, composed);
    if (!logits.allFinite())
        throw NumericError("non-finite logits in composition loss (divergence)");
    double mx = logits.maxCoeff();
    double lse = mx + std::log((logits.array() - mx).exp().sum());
    Eigen::ArrayXd p = (logits.array() - lse).exp();

    double loss;
    Eigen::VectorXd residual;
    if (hard_target >= 0) {
        loss = lse - logits[hard_target];
        residual = p.matrix();
        residual[hard_target] -= 1.0;
    } else {
        loss = (q.array() * (lse - logits.array())).sum();
        residual = (p - q.array()).matrix();
    }
    if (!std::isfinite(loss)) throw NumericError("non-finite composition loss (divergence)");
    LossGrad out;
    out.loss = loss;
    out.grad = z * (model.head_weight.transpose() * residual);
    if (!out.grad.allFinite())
        throw NumericError("non-finite composition gradient (divergence)");
    return out;
}

Eigen::VectorXd soft_target_of(const vit::Model& model, const CLSBundle& b) {
    return softmax(vit::classify(model, b.z_orig)).matrix();
}

} // namespace

Eigen::VectorXd project(const Eigen::VectorXd& eta, ConstraintMode mode) {
    if (!eta.allFinite()) throw NumericError("cannot project non-finite weights");
    switch (mode) {
        case ConstraintMode::unconstrained:
            return eta;
        case ConstraintMode::conic: {
            Eigen::VectorXd w = eta;
            for (int i = 0; i < w.size(); ++i)
                if (w[i] < 0.0) w[i] = 0.0;
            return w;
        }
        case ConstraintMode::convex:
            return project_convex(eta);
    }
    throw UsageError("bad constraint mode");
}

LossGrad loss_and_grad(const vit::Model& model, const Eigen::VectorXd& eta,
                       const Eigen::MatrixXd& z, int target) {
    if (target < 0 || target >= model.config.num_classes)
        throw UsageError("target class " + std::to_string(target) + " out of range");
    return loss_grad_impl(model, eta, z, Eigen::VectorXd(), target);
}

LossGrad loss_and_grad_soft(const vit::Model& model, const Eigen::VectorXd& eta,
                            const Eigen::MatrixXd& z, const Eigen::VectorXd& target_probs) {
    if (target_probs.size() != model.config.num_classes)
        throw UsageError("target distribution size mismatch");
    return loss_grad_impl(model, eta, z, target_probs, -1);
}

double mean_loss(const vit::Model& model, const Eigen::VectorXd& eta,
                 const std::vector<CLSBundle>& bundles, bool soft_target) {
    if (bundles.empty()) throw UsageError("mean_loss over an empty bundle collection");
    double total = 0.0;
    for (const CLSBundle& b : bundles) {
        total += soft_target
                     ? loss_and_grad_soft(model, eta, b.z, soft_target_of(model, b)).loss
                     : loss_and_grad(model, eta, b.z, b.target).loss;
    }
    return total / static_cast<double>(bundles.size());
}

double relative_accuracy(const vit::Model& model, const Eigen::VectorXd& eta,
                         const std::vector<CLSBundle>& bundles) {
    if (bundles.empty()) throw UsageError("relative_accuracy over an empty bundle collection");
    int hits = 0;
    for (const CLSBundle& b : bundles) {
        int pred = vit::predicted_class(vit::classify(model, compose(eta, b.z)));
        if (pred == b.target) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(bundles.size());
}

CompositionModel train(const vit::Model& model, const std::vector<CLSBundle>& train_split,
                       const std::vector<CLSBundle>& val_split, ConstraintMode mode,
                       const TrainHyper& hyper, const Provenance& provenance) {
    if (train_split.empty()) throw UsageError("training needs a non-empty train split");
    const int n = static_cast<int>(train_split.front().z.rows());
    for (const auto* split : {&train_split, &val_split})
        for (const CLSBundle& b : *split) {
            if (b.z.rows() != n)
                throw DataError("bundle " + b.id + " has inconsistent primitive count");
            if (b.target < 0 || b.target >= model.config.num_classes)
                throw DataError("bundle " + b.id + " target class out of range");
        }
    const std::vector<CLSBundle>& val = val_split.empty() ? train_split : val_split;

    Eigen::VectorXd eta = project(Eigen::VectorXd::Ones(n), mode);

    CompositionModel cm;
    cm.mode = mode;
    cm.provenance = provenance;
    cm.hyper = hyper;

    double best_acc = relative_accuracy(model, eta, val);
    Eigen::VectorXd best_eta = eta;
    cm.history.push_back({0, mean_loss(model, eta, train_split, hyper.soft_target), best_acc, eta});

    std::vector<size_t> order(train_split.size());
    std::iota(order.begin(), order.end(), size_t{0});
    Rng shuffler(hyper.seed, "composer-train-shuffle");

    for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
        shuffler.shuffle(order);
        for (size_t idx : order) {
            const CLSBundle& b = train_split[idx];
            try {
                LossGrad lg = hyper.soft_target
                                  ? loss_and_grad_soft(model, eta, b.z, soft_target_of(model, b))
                                  : loss_and_grad(model, eta, b.z, b.target);
                Eigen::VectorXd next = eta - hyper.lr * lg.grad;
                if (!next.allFinite())
                    throw NumericError("non-finite weight update (divergence)");
                eta = project(next, mode);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch));
            }
        }
        double train_loss = mean_loss(model, eta, train_split, hyper.soft_target);
        if (!std::isfinite(train_loss))
            throw NumericError("non-finite train loss at epoch " + std::to_string(epoch));
        double val_acc = relative_accuracy(model, eta, val);
        cm.history.push_back({epoch, train_loss, val_acc, eta});
        if (val_acc > best_acc) {
            best_acc = val_acc;
            best_eta = eta;
        }
    }

    cm.weights = best_eta;
    return cm;
}

// --- text record -------------------------------------------------------------

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

std::string to_text(const CompositionModel& cm) {
    std::ostringstream os;
    os << "{\n";
    os << "  \"mode\": \"" << to_string(cm.mode) << "\",\n";
    os << "  \"basis\": \"" << wavelet::to_string(cm.provenance.basis) << "\",\n";
    os << "  \"levels\": " << cm.provenance.levels << ",\n";
    os << "  \"layer\": " << cm.provenance.layer << ",\n";
    os << "  \"n\": " << cm.n() << ",\n";
    os << "  \"weights\": [";
    for (int i = 0; i < cm.n(); ++i) os << (i ? ", " : "") << fmt17(cm.weights[i]);
    os << "],\n";
    os << "  \"lr\": " << fmt17(cm.hyper.lr) << ",\n";
    os << "  \"epochs\": " << cm.hyper.epochs << ",\n";
    os << "  \"seed\": " << cm.hyper.seed << ",\n";
    os << "  \"soft_target\": " << (cm.hyper.soft_target ? "true" : "false") << ",\n";
    os << "  \"history\": [";
    for (size_t i = 0; i < cm.history.size(); ++i) {
        const HistoryEntry& h = cm.history[i];
        os << (i ? ",\n    " : "\n    ");
        os << "{\"epoch\": " << h.epoch << ", \"train_loss\": " << fmt17(h.train_loss)
           << ", \"val_relative_accuracy\": " << fmt17(h.val_relative_accuracy) << ", \"eta\": [";
        for (int k = 0; k < h.eta.size(); ++k) os << (k ? ", " : "") << fmt17(h.eta[k]);
        os << "]}";
    }
    os << (cm.history.empty() ? "]" : "\n  ]") << "\n";
    os << "}\n";
    return os.str();
}

CompositionModel from_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(std::string("composition record is not valid JSON: ") + e.what());
    }
    try {
        CompositionModel cm;
        cm.mode = mode_from_string(j.at("mode").get<std::string>());
        cm.provenance.basis = wavelet::wavelet_name_from_string(j.at("basis").get<std::string>());
        cm.provenance.levels = j.at("levels").get<int>();
        cm.provenance.layer = j.at("layer").get<int>();
        int n = j.at("n").get<int>();
        auto weights = j.at("weights").get<std::vector<double>>();
        if (static_cast<int>(weights.size()) != n)
            throw DataError("composition record: n does not match the weight count");
        cm.weights = Eigen::Map<const Eigen::VectorXd>(weights.data(), n);
        cm.hyper.lr = j.at("lr").get<double>();
        cm.hyper.epochs = j.at("epochs").get<int>();
        cm.hyper.seed = j.at("seed").get<uint64_t>();
        cm.hyper.soft_target = j.at("soft_target").get<bool>();
        for (const auto& h : j.at("history")) {
            HistoryEntry entry{h.at("epoch").get<int>(), h.at("train_loss").get<double>(),
                               h.at("val_relative_accuracy").get<double>(), {}};
            auto eta = h.at("eta").get<std::vector<double>>();
            entry.eta = Eigen::Map<const Eigen::VectorXd>(eta.data(), eta.size());
            cm.history.push_back(std::move(entry));
        }
        return cm;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("composition record is missing fields: ") + e.what());
    }
}

void save_composition(const std::filesystem::path& path, const CompositionModel& cm) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os << to_text(cm);
    if (!os) throw DataError("composition write failed: " + path.string());
}

CompositionModel load_composition(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return from_text(ss.str());
}

} // namespace wavecomp::composer
