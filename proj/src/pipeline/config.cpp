#include "lvdiag/pipeline.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace lvdiag::pipeline {
namespace {

using json = nlohmann::ordered_json;

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw std::invalid_argument("config: '" + where + "' must be an object");
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key)) throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& into) {
    if (j.contains(key)) into = j.at(key).get<T>();
}

std::string cam_class_name(featsel::CamClass c) { return c == featsel::CamClass::foreground ? "foreground" : "background"; }
std::string cam_norm_name(featsel::CamNormalization n) {
    return n == featsel::CamNormalization::positions ? "positions" : "kernels";
}

} // namespace

ExperimentConfig config_from_json(const std::string& text, const std::filesystem::path& base) {
    ExperimentConfig cfg;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    try {
        check_keys(j, "config", {"dataset", "folds", "method", "classifier", "variants", "seed", "segnet", "featsel",
                                 "svm", "mlp", "rf", "outputs"});
        if (j.contains("dataset")) {
            std::filesystem::path p = j.at("dataset").get<std::string>();
            cfg.dataset = p.is_relative() && !base.empty() ? base / p : p;
        }
        read(j, "folds", cfg.folds);
        read(j, "seed", cfg.seed);
        if (j.contains("variants")) {
            if (j.contains("method") || j.contains("classifier"))
                throw std::invalid_argument("config: give either 'variants' or 'method'/'classifier', not both");
            cfg.variants.clear();
            for (const auto& v : j.at("variants")) {
                check_keys(v, "variants[]", {"method", "classifier"});
                cfg.variants.push_back({featsel::parse_method(v.at("method").get<std::string>()),
                                        clf::parse_kind(v.at("classifier").get<std::string>())});
            }
        } else {
            if (j.contains("method")) cfg.variants[0].method = featsel::parse_method(j.at("method").get<std::string>());
            if (j.contains("classifier")) cfg.variants[0].classifier = clf::parse_kind(j.at("classifier").get<std::string>());
        }
        if (j.contains("segnet")) {
            const json& s = j.at("segnet");
            check_keys(s, "segnet", {"levels", "base_channels", "epochs", "batch_size", "lr0", "decay",
                                     "augment_amplitude", "dice_weight"});
            read(s, "levels", cfg.arch.levels);
            read(s, "base_channels", cfg.arch.base_channels);
            read(s, "epochs", cfg.segnet.epochs);
            read(s, "batch_size", cfg.segnet.batch_size);
            read(s, "lr0", cfg.segnet.lr0);
            read(s, "decay", cfg.segnet.decay);
            read(s, "augment_amplitude", cfg.segnet.augment_amplitude);
            read(s, "dice_weight", cfg.segnet.dice_weight);
        }
        if (j.contains("featsel")) {
            const json& f = j.at("featsel");
            check_keys(f, "featsel", {"pooling", "fsl_target", "alpha_count", "alpha_min_ratio", "lasso_tol",
                                      "cam_class", "cam_normalization"});
            if (f.contains("pooling")) cfg.pooling = featsel::parse_pooling(f.at("pooling").get<std::string>());
            read(f, "fsl_target", cfg.fsl_target);
            read(f, "alpha_count", cfg.alpha_count);
            read(f, "alpha_min_ratio", cfg.alpha_min_ratio);
            read(f, "lasso_tol", cfg.lasso_tol);
            if (f.contains("cam_class")) {
                const auto c = f.at("cam_class").get<std::string>();
                if (c != "foreground" && c != "background")
                    throw std::invalid_argument("config: cam_class must be foreground or background");
                cfg.cam_class = c == "foreground" ? featsel::CamClass::foreground : featsel::CamClass::background;
            }
            if (f.contains("cam_normalization")) {
                const auto c = f.at("cam_normalization").get<std::string>();
                if (c != "positions" && c != "kernels")
                    throw std::invalid_argument("config: cam_normalization must be positions or kernels");
                cfg.cam_normalization =
                    c == "positions" ? featsel::CamNormalization::positions : featsel::CamNormalization::kernels;
            }
        }
        if (j.contains("svm")) {
            const json& s = j.at("svm");
            check_keys(s, "svm", {"n_base", "C", "gamma", "meta_lr", "meta_epochs", "inner_folds"});
            read(s, "n_base", cfg.classifiers.svm.n_base);
            read(s, "C", cfg.classifiers.svm.C);
            read(s, "gamma", cfg.classifiers.svm.gamma);
            read(s, "meta_lr", cfg.classifiers.svm.meta_lr);
            read(s, "meta_epochs", cfg.classifiers.svm.meta_epochs);
            read(s, "inner_folds", cfg.classifiers.svm.inner_folds);
        }
        if (j.contains("mlp")) {
            const json& m = j.at("mlp");
            check_keys(m, "mlp", {"lr", "dropout", "epochs", "batch_size"});
            read(m, "lr", cfg.classifiers.mlp.lr);
            read(m, "dropout", cfg.classifiers.mlp.dropout);
            read(m, "epochs", cfg.classifiers.mlp.epochs);
            read(m, "batch_size", cfg.classifiers.mlp.batch_size);
        }
        if (j.contains("rf")) {
            const json& r = j.at("rf");
            check_keys(r, "rf", {"n_trees", "max_depth", "max_features", "bootstrap"});
            read(r, "n_trees", cfg.classifiers.rf.n_trees);
            read(r, "max_depth", cfg.classifiers.rf.max_depth);
            read(r, "max_features", cfg.classifiers.rf.max_features);
            read(r, "bootstrap", cfg.classifiers.rf.bootstrap);
        }
        if (j.contains("outputs")) {
            const json& o = j.at("outputs");
            check_keys(o, "outputs", {"checkpoints", "gradcam", "runtime"});
            read(o, "checkpoints", cfg.write_checkpoints);
            read(o, "gradcam", cfg.write_gradcam);
            read(o, "runtime", cfg.record_runtime);
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return config_from_json(ss.str(), path.parent_path());
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["dataset"] = cfg.dataset.string();
    j["folds"] = cfg.folds;
    auto& vs = j["variants"] = json::array();
    for (const Variant& v : cfg.variants)
        vs.push_back({{"method", featsel::method_name(v.method)}, {"classifier", clf::kind_name(v.classifier)}});
    j["seed"] = cfg.seed;
    j["segnet"] = {{"levels", cfg.arch.levels},
                   {"base_channels", cfg.arch.base_channels},
                   {"epochs", cfg.segnet.epochs},
                   {"batch_size", cfg.segnet.batch_size},
                   {"lr0", cfg.segnet.lr0},
                   {"decay", cfg.segnet.decay},
                   {"augment_amplitude", cfg.segnet.augment_amplitude},
                   {"dice_weight", cfg.segnet.dice_weight}};
    j["featsel"] = {{"pooling", featsel::pooling_name(cfg.pooling)},
                    {"fsl_target", cfg.fsl_target},
                    {"alpha_count", cfg.alpha_count},
                    {"alpha_min_ratio", cfg.alpha_min_ratio},
                    {"lasso_tol", cfg.lasso_tol},
                    {"cam_class", cam_class_name(cfg.cam_class)},
                    {"cam_normalization", cam_norm_name(cfg.cam_normalization)}};
    const auto& c = cfg.classifiers;
    j["svm"] = {{"n_base", c.svm.n_base}, {"C", c.svm.C}, {"gamma", c.svm.gamma}, {"meta_lr", c.svm.meta_lr},
                {"meta_epochs", c.svm.meta_epochs}, {"inner_folds", c.svm.inner_folds}};
    j["mlp"] = {{"lr", c.mlp.lr}, {"dropout", c.mlp.dropout}, {"epochs", c.mlp.epochs}, {"batch_size", c.mlp.batch_size}};
    j["rf"] = {{"n_trees", c.rf.n_trees}, {"max_depth", c.rf.max_depth}, {"max_features", c.rf.max_features},
               {"bootstrap", c.rf.bootstrap}};
    j["outputs"] = {{"checkpoints", cfg.write_checkpoints}, {"gradcam", cfg.write_gradcam}, {"runtime", cfg.record_runtime}};
    return j.dump(2);
}

std::string fingerprint(const ExperimentConfig& cfg) {
    // FNV-1a over the canonical JSON.
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char ch : config_to_json(cfg)) {
        h ^= ch;
        h *= 0x100000001B3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace lvdiag::pipeline
