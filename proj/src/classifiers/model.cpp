#include "lvdiag/classifiers.hpp"

#include "lvdiag/tensor/ltsr.hpp"

#include <json.hpp>

#include <fstream>

namespace lvdiag::clf {
namespace {

using json = nlohmann::ordered_json;

json scaler_json(const Scaler& s) { return {{"mean", s.mean}, {"scale", s.scale}}; }

Scaler scaler_from(const json& j) {
    return {j.at("mean").get<std::vector<double>>(), j.at("scale").get<std::vector<double>>()};
}

json tensor_json(const Tensor& t) { return {{"shape", t.shape()}, {"data", t.storage()}}; }

Tensor tensor_from(const json& j) {
    return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
}

json to_json(const SvmStackModel& m) {
    json j;
    j["kind"] = "SVMC";
    j["n_base"] = m.config.n_base;
    j["C"] = m.config.C;
    j["gamma_config"] = m.config.gamma;
    j["meta_lr"] = m.config.meta_lr;
    j["meta_epochs"] = m.config.meta_epochs;
    j["inner_folds"] = m.config.inner_folds;
    j["seed"] = m.config.seed;
    j["gamma"] = m.gamma;
    j["scaler"] = scaler_json(m.scaler);
    auto& bases = j["bases"] = json::array();
    for (const SvmModel& b : m.bases)
        bases.push_back({{"support", tensor_json(b.support)},
                         {"coef", b.coef},
                         {"bias", b.bias},
                         {"converged", b.converged},
                         {"iterations", b.iterations}});
    j["meta_w"] = m.meta_w;
    j["meta_b"] = m.meta_b;
    return j;
}

SvmStackModel svm_from(const json& j) {
    SvmStackModel m;
    m.config.n_base = j.at("n_base").get<std::size_t>();
    m.config.C = j.at("C").get<double>();
    m.config.gamma = j.at("gamma_config").get<double>();
    m.config.meta_lr = j.at("meta_lr").get<double>();
    m.config.meta_epochs = j.at("meta_epochs").get<std::size_t>();
    m.config.inner_folds = j.at("inner_folds").get<std::size_t>();
    m.config.seed = j.at("seed").get<std::uint64_t>();
    m.gamma = j.at("gamma").get<double>();
    m.scaler = scaler_from(j.at("scaler"));
    for (const auto& b : j.at("bases")) {
        SvmModel s;
        s.support = tensor_from(b.at("support"));
        s.coef = b.at("coef").get<std::vector<double>>();
        s.bias = b.at("bias").get<double>();
        s.converged = b.at("converged").get<bool>();
        s.iterations = b.at("iterations").get<std::size_t>();
        s.gamma = m.gamma;
        s.C = m.config.C;
        m.bases.push_back(std::move(s));
    }
    m.meta_w = j.at("meta_w").get<std::vector<double>>();
    m.meta_b = j.at("meta_b").get<double>();
    return m;
}

json to_json(const RfModel& m) {
    json j;
    j["kind"] = "RFC";
    j["n_trees"] = m.config.n_trees;
    j["max_depth"] = m.config.max_depth;
    j["max_features"] = m.config.max_features;
    j["bootstrap"] = m.config.bootstrap;
    j["seed"] = m.config.seed;
    auto& trees = j["trees"] = json::array();
    for (const Tree& t : m.trees) {
        std::vector<int> feature, left, right, label;
        std::vector<double> threshold;
        for (const TreeNode& n : t.nodes) {
            feature.push_back(n.feature);
            threshold.push_back(n.threshold);
            left.push_back(n.left);
            right.push_back(n.right);
            label.push_back(n.label);
        }
        trees.push_back({{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"label", label}});
    }
    return j;
}

RfModel rf_from(const json& j) {
    RfModel m;
    m.config.n_trees = j.at("n_trees").get<std::size_t>();
    m.config.max_depth = j.at("max_depth").get<std::size_t>();
    m.config.max_features = j.at("max_features").get<std::size_t>();
    m.config.bootstrap = j.at("bootstrap").get<bool>();
    m.config.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& t : j.at("trees")) {
        const auto feature = t.at("feature").get<std::vector<int>>();
        const auto threshold = t.at("threshold").get<std::vector<double>>();
        const auto left = t.at("left").get<std::vector<int>>();
        const auto right = t.at("right").get<std::vector<int>>();
        const auto label = t.at("label").get<std::vector<int>>();
        Tree tree;
        for (std::size_t k = 0; k < feature.size(); ++k) {
            TreeNode n;
            n.feature = feature.at(k);
            n.threshold = threshold.at(k);
            n.left = left.at(k);
            n.right = right.at(k);
            n.label = label.at(k);
            if (n.feature >= 0 && (n.left <= int(k) || n.right <= int(k) || std::size_t(std::max(n.left, n.right)) >= feature.size()))
                throw std::runtime_error("clf.json: tree node " + std::to_string(k) + " has invalid children");
            tree.nodes.push_back(n);
        }
        if (tree.nodes.empty()) throw std::runtime_error("clf.json: empty tree");
        m.trees.push_back(std::move(tree));
    }
    if (m.trees.empty()) throw std::runtime_error("clf.json: forest has no trees");
    return m;
}

} // namespace

std::string kind_name(Kind k) {
    switch (k) {
    case Kind::svmc: return "SVMC";
    case Kind::mlp: return "MLP";
    case Kind::rfc: return "RFC";
    }
    return "?";
}

Kind parse_kind(const std::string& s) {
    if (s == "SVMC" || s == "svmc") return Kind::svmc;
    if (s == "MLP" || s == "mlp") return Kind::mlp;
    if (s == "RFC" || s == "rfc") return Kind::rfc;
    throw std::invalid_argument("unknown classifier '" + s + "' (expected SVMC, MLP or RFC)");
}

Model train(Kind kind, const Tensor& X, const Labels& y, const ClassifierConfig& cfg) {
    switch (kind) {
    case Kind::svmc: return svm_stack_train(X, y, cfg.svm);
    case Kind::mlp: return mlp_train(X, y, cfg.mlp);
    case Kind::rfc: return rf_train(X, y, cfg.rf);
    }
    throw std::invalid_argument("train: unknown classifier kind");
}

Kind kind_of(const Model& m) {
    if (std::holds_alternative<SvmStackModel>(m)) return Kind::svmc;
    if (std::holds_alternative<MlpModel>(m)) return Kind::mlp;
    return Kind::rfc;
}

std::vector<double> predict_scores(const Model& m, const Tensor& X) {
    if (X.rank() != 2) throw ShapeError("predict: expected (n,p), got " + shape_str(X.shape()));
    const std::size_t n = X.dim(0), p = X.dim(1);
    std::vector<double> scores(n);
    if (const auto* mlp = std::get_if<MlpModel>(&m)) {
        const Tensor probs = mlp_predict(*mlp, X);
        for (std::size_t i = 0; i < n; ++i) scores[i] = probs[i * 2 + 1];
        return scores;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = X.data().subspan(i * p, p);
        if (const auto* svm = std::get_if<SvmStackModel>(&m)) {
            if (p != svm->scaler.mean.size()) throw ShapeError("predict: model expects " + std::to_string(svm->scaler.mean.size()) + " features, got " + std::to_string(p));
            scores[i] = svm->score(row);
        } else {
            scores[i] = std::get<RfModel>(m).vote(row);
        }
    }
    return scores;
}

Labels predict_labels(const Model& m, const Tensor& X) {
    const auto scores = predict_scores(m, X);
    Labels out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] > 0.5 ? 1 : 0;
    return out;
}

void save_model(const std::filesystem::path& dir, const Model& m) {
    std::filesystem::create_directories(dir);
    json j;
    if (const auto* svm = std::get_if<SvmStackModel>(&m)) {
        j = to_json(*svm);
    } else if (const auto* rf = std::get_if<RfModel>(&m)) {
        j = to_json(*rf);
    } else {
        const MlpModel& mlp = std::get<MlpModel>(m);
        j["kind"] = "MLP";
        j["lr"] = mlp.config.lr;
        j["dropout"] = mlp.config.dropout;
        j["epochs"] = mlp.config.epochs;
        j["batch_size"] = mlp.config.batch_size;
        j["seed"] = mlp.config.seed;
        j["widths"] = {kMlpWidths[0], kMlpWidths[1], kMlpWidths[2]};
        j["scaler"] = scaler_json(mlp.scaler);
        auto& files = j["parameters"] = json::array();
        for (std::size_t k = 0; k < mlp.params.size(); ++k) {
            const std::string file = "mlp_" + std::string(k % 2 ? "b" : "w") + std::to_string(k / 2) + ".ltsr";
            save_ltsr(dir / file, mlp.params[k]);
            files.push_back(file);
        }
    }
    std::ofstream os(dir / "clf.json");
    if (!os) throw std::runtime_error("clf: cannot write " + (dir / "clf.json").string());
    os << j.dump(1) << '\n';
}

Model load_model(const std::filesystem::path& dir) {
    std::ifstream is(dir / "clf.json");
    if (!is) throw std::runtime_error("clf: cannot open " + (dir / "clf.json").string());
    try {
        const json j = json::parse(is);
        const Kind kind = parse_kind(j.at("kind").get<std::string>());
        if (kind == Kind::svmc) return svm_from(j);
        if (kind == Kind::rfc) return rf_from(j);
        MlpConfig cfg;
        cfg.lr = j.at("lr").get<double>();
        cfg.dropout = j.at("dropout").get<double>();
        cfg.epochs = j.at("epochs").get<std::size_t>();
        cfg.batch_size = j.at("batch_size").get<std::size_t>();
        cfg.seed = j.at("seed").get<std::uint64_t>();
        MlpModel m;
        m.config = cfg;
        m.scaler = scaler_from(j.at("scaler"));
        for (const auto& f : j.at("parameters")) m.params.push_back(load_ltsr(dir / f.get<std::string>()));
        if (m.params.size() != 8) throw std::runtime_error("clf.json: MLP needs 8 parameter tensors");
        const std::size_t widths[3] = {kMlpWidths[0], kMlpWidths[1], kMlpWidths[2]};
        for (std::size_t layer = 0; layer < 3; ++layer)
            if (m.params[2 * layer].rank() != 2 || m.params[2 * layer].dim(1) != widths[layer])
                throw std::runtime_error("clf.json: MLP layer " + std::to_string(layer) + " has the wrong width");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("clf: malformed " + (dir / "clf.json").string() + ": " + e.what());
    }
}

} // namespace lvdiag::clf
