#include "lvdiag/pipeline.hpp"

#include "lvdiag/rng.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <numeric>

namespace lvdiag::pipeline {
namespace {

constexpr std::uint64_t kFoldTag = 0xF0D5;
constexpr std::uint64_t kNetTag = 0x5E6;
constexpr std::uint64_t kTrainTag = 0x7A1;
constexpr std::uint64_t kClassifierTag = 0xC1A5;

std::string fold_name(std::size_t fold) { return "fold_" + std::to_string(fold); }

std::vector<double> as_double(const std::vector<int>& labels, const std::vector<std::size_t>& idx) {
    std::vector<double> out;
    for (std::size_t i : idx) out.push_back(double(labels[i]));
    return out;
}

Tensor rows(const Tensor& X, const std::vector<std::size_t>& idx) {
    const std::size_t p = X.dim(1);
    Tensor out({idx.size(), p});
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy_n(X.data().begin() + std::ptrdiff_t(idx[r] * p), p, out.data().begin() + std::ptrdiff_t(r * p));
    return out;
}

// Temporal mean of a (T,H,W) map, upsampled to the video's (H,W).
Tensor cam_image(const Tensor& cam, std::size_t height, std::size_t width) {
    const std::size_t T = cam.dim(0), H = cam.dim(1), W = cam.dim(2);
    Tensor mean({1, H, W});
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < H * W; ++i) mean[i] += cam[t * H * W + i] / double(T);
    return featsel::upsample_nearest(mean, {1, height, width}).reshaped({height, width});
}

template <class F>
auto staged(const std::string& stage, std::size_t fold, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, fold, e.what());
    }
}

} // namespace

std::vector<std::vector<std::size_t>> kfold_split(const std::vector<int>& labels, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("kfold_split: k must be >= 2");
    std::vector<std::size_t> members[2];
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("kfold_split: labels must be 0 or 1");
        members[labels[i]].push_back(i);
    }
    for (int c = 0; c < 2; ++c)
        if (members[c].size() < k)
            throw std::invalid_argument("kfold_split: class " + std::to_string(c) + " has " +
                                        std::to_string(members[c].size()) + " members, fewer than k=" + std::to_string(k));
    Rng rng(seed);
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t next = 0;
    for (int c = 0; c < 2; ++c) {
        std::shuffle(members[c].begin(), members[c].end(), rng.engine());
        for (std::size_t i : members[c]) folds[next++ % k].push_back(i);
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

void Confusion::add(int truth, int predicted) {
    if (truth == 1) (predicted == 1 ? tp : fn) += 1;
    else (predicted == 1 ? fp : tn) += 1;
}

Confusion& Confusion::operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
}

Metrics compute_metrics(const Confusion& c) {
    if (c.total() == 0) throw std::invalid_argument("compute_metrics: all counts are zero");
    auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
        if (den == 0) return std::nullopt;
        return double(num) / double(den);
    };
    Metrics m;
    m.sensitivity = ratio(c.tp, c.tp + c.fn);
    m.specificity = ratio(c.tn, c.tn + c.fp);
    m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
    m.accuracy = ratio(c.tp + c.tn, c.total());
    return m;
}

std::string variant_name(const Variant& v) {
    return featsel::method_name(v.method) + "+" + clf::kind_name(v.classifier);
}

void ExperimentConfig::validate() const {
    if (folds < 2) throw std::invalid_argument("config: folds must be >= 2");
    if (variants.empty()) throw std::invalid_argument("config: no variants");
    if (!(fsl_target > 0.0 && fsl_target < 1.0)) throw std::invalid_argument("config: fsl_target outside (0,1)");
    arch.validate();
    segnet.validate();
}

FoldFeatures fold_features(const ExperimentConfig& cfg, const std::vector<phantom::LabeledEcho>& cases,
                           const std::vector<std::size_t>& train, const std::vector<std::size_t>& test, std::size_t fold,
                           const Progress& progress) {
    FoldFeatures f;
    f.fold = fold;
    f.train = train;
    f.test = test;

    f.net = staged("segnet-train", fold, [&] {
        std::vector<Tensor> videos, masks;
        for (std::size_t i : train) {
            videos.push_back(cases[i].video);
            masks.push_back(cases[i].mask);
        }
        segnet::TrainConfig tc = cfg.segnet;
        tc.seed = derive_seed(cfg.seed, kTrainTag, fold);
        auto report = [&](std::size_t epoch, double loss) {
            if (progress)
                progress(fold_name(fold) + " segnet epoch " + std::to_string(epoch + 1) + "/" +
                         std::to_string(tc.epochs) + " loss " + std::to_string(loss));
        };
        return segnet::train(videos, masks, segnet::build(cfg.arch, derive_seed(cfg.seed, kNetTag, fold)), tc, report)
            .params;
    });

    f.test_dice = staged("segnet-evaluate", fold, [&] {
        double total = 0.0;
        for (std::size_t i : test)
            total += segnet::dice(segnet::binarize(segnet::segment(f.net, cases[i].video)), cases[i].mask);
        return test.empty() ? 0.0 : total / double(test.size());
    });

    staged("extract", fold, [&] {
        std::vector<double> flat;
        std::size_t p = 0;
        for (std::size_t i = 0; i < cases.size(); ++i) {
            const Tensor b = segnet::extract_bottleneck(f.net, cases[i].video);
            const auto row = featsel::flatten_features(b, cfg.pooling);
            if (i == 0) {
                p = row.size();
                f.per_kernel = p / b.dim(0);
                flat.reserve(cases.size() * p);
            } else if (row.size() != p) {
                throw ShapeError("case " + cases[i].id + " yields " + std::to_string(row.size()) + " features, expected " +
                                 std::to_string(p));
            }
            flat.insert(flat.end(), row.begin(), row.end());
        }
        f.X = Tensor({cases.size(), p}, flat);
        return 0;
    });

    const bool fsr = std::any_of(cfg.variants.begin(), cfg.variants.end(),
                                 [](const Variant& v) { return v.method == featsel::Method::fsr; });
    if (fsr)
        staged("gradcam", fold, [&] {
            for (std::size_t i : train)
                f.cam.push_back(featsel::kernel_weights(f.net, cases[i].video, cfg.cam_class, cfg.cam_normalization));
            return 0;
        });
    return f;
}

featsel::SelectionResult select_features(const ExperimentConfig& cfg, featsel::Method method, const FoldFeatures& f,
                                         const std::vector<int>& labels) {
    featsel::SelectionResult s;
    switch (method) {
    case featsel::Method::none:
        s.method = featsel::Method::none;
        s.universe = f.X.dim(1);
        s.indices.resize(s.universe);
        std::iota(s.indices.begin(), s.indices.end(), std::size_t(0));
        s.reduction_ratio = 0.0;
        break;
    case featsel::Method::fsr:
        if (f.cam.size() != f.train.size()) throw std::logic_error("select_features: GradCAM weights were not computed");
        s = featsel::fsr_select(f.cam);
        break;
    case featsel::Method::fsl: {
        const Tensor Xtr = rows(f.X, f.train);
        const std::vector<double> ytr = as_double(labels, f.train);
        const auto grid = featsel::default_alpha_grid(featsel::standardize(Xtr), ytr, cfg.alpha_count, cfg.alpha_min_ratio);
        s = featsel::fsl_select(Xtr, ytr, cfg.fsl_target, grid, cfg.lasso_tol);
        break;
    }
    }
    s.fold = fold_name(f.fold);
    return s;
}

std::vector<std::size_t> selected_columns(const featsel::SelectionResult& s, const FoldFeatures& f) {
    if (s.method == featsel::Method::fsr) return featsel::kernel_feature_indices(s.indices, f.per_kernel);
    return s.indices;
}

FoldResult evaluate_variant(const ExperimentConfig& cfg, const Variant& v, const FoldFeatures& f,
                            const std::vector<int>& labels, const std::filesystem::path& fold_dir,
                            const featsel::SelectionResult* selection) {
    FoldResult r;
    r.fold = f.fold;
    r.test = f.test;
    if (selection && selection->method != v.method) throw std::logic_error("evaluate_variant: selection method mismatch");
    r.selection = selection ? *selection
                            : staged("select-" + featsel::method_name(v.method), f.fold,
                                     [&] { return select_features(cfg, v.method, f, labels); });
    const auto columns = selected_columns(r.selection, f);
    r.feature_count = columns.size();

    const clf::Model model = staged("classify-" + clf::kind_name(v.classifier), f.fold, [&] {
        clf::ClassifierConfig cc = cfg.classifiers;
        const std::uint64_t seed = derive_seed(cfg.seed, kClassifierTag, f.fold);
        cc.svm.seed = cc.mlp.seed = cc.rf.seed = seed;
        std::vector<int> ytr;
        for (std::size_t i : f.train) ytr.push_back(labels[i]);
        return clf::train(v.classifier, featsel::select_columns(rows(f.X, f.train), columns), ytr, cc);
    });

    staged("evaluate", f.fold, [&] {
        const Tensor Xte = featsel::select_columns(rows(f.X, f.test), columns);
        r.scores = clf::predict_scores(model, Xte);
        for (std::size_t k = 0; k < f.test.size(); ++k) {
            r.predicted.push_back(r.scores[k] > 0.5 ? 1 : 0);
            r.confusion.add(labels[f.test[k]], r.predicted.back());
        }
        return 0;
    });

    if (!fold_dir.empty())
        staged("write-artifacts", f.fold, [&] {
            const auto dir = fold_dir / variant_name(v);
            std::filesystem::create_directories(dir);
            featsel::write_selection(dir / "selection.json", r.selection);
            clf::save_model(dir / "classifier", model);
            return 0;
        });
    return r;
}

Report run_experiment(const ExperimentConfig& cfg, const std::vector<phantom::LabeledEcho>& cases,
                      const std::filesystem::path& out, const Progress& progress) {
    cfg.validate();
    std::vector<int> labels;
    for (const auto& c : cases) labels.push_back(int(c.label));
    const auto folds = staged("split", 0, [&] { return kfold_split(labels, cfg.folds, derive_seed(cfg.seed, kFoldTag)); });

    Report report;
    report.fingerprint = fingerprint(cfg);
    report.cases = cases.size();
    report.positives = std::size_t(std::count(labels.begin(), labels.end(), 1));
    report.variants.resize(cfg.variants.size());
    std::vector<double> seconds(cfg.variants.size(), 0.0);
    for (std::size_t v = 0; v < cfg.variants.size(); ++v) report.variants[v].variant = cfg.variants[v];

    for (std::size_t k = 0; k < folds.size(); ++k) {
        std::vector<std::size_t> train;
        for (std::size_t j = 0; j < folds.size(); ++j)
            if (j != k) train.insert(train.end(), folds[j].begin(), folds[j].end());
        std::sort(train.begin(), train.end());

        const auto start = std::chrono::steady_clock::now();
        const FoldFeatures f = fold_features(cfg, cases, train, folds[k], k, progress);
        const double shared = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        report.segmentation_dice.push_back(f.test_dice);
        if (progress) progress(fold_name(k) + " held-out Dice " + std::to_string(f.test_dice));

        const auto fold_dir = out.empty() ? std::filesystem::path{} : out / fold_name(k);
        if (!out.empty())
            staged("write-artifacts", k, [&] {
                if (cfg.write_checkpoints) segnet::save_checkpoint(fold_dir / "segnet", f.net);
                if (cfg.write_gradcam && !f.cam.empty()) {
                    const auto dir = fold_dir / "gradcam";
                    std::filesystem::create_directories(dir);
                    for (std::size_t t = 0; t < f.train.size(); ++t) {
                        const auto& c = cases[f.train[t]];
                        const Tensor cam = featsel::gradcam_map(segnet::extract_bottleneck(f.net, c.video), f.cam[t]);
                        featsel::write_pgm(dir / (c.id + ".pgm"), cam_image(cam, c.video.dim(1), c.video.dim(2)));
                    }
                }
                return 0;
            });

        std::map<featsel::Method, std::pair<featsel::SelectionResult, double>> selections;
        for (std::size_t v = 0; v < cfg.variants.size(); ++v) {
            const featsel::Method method = cfg.variants[v].method;
            if (!selections.count(method)) {
                const auto t0 = std::chrono::steady_clock::now();
                auto s = staged("select-" + featsel::method_name(method), k,
                                [&] { return select_features(cfg, method, f, labels); });
                selections[method] = {std::move(s), std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
            }
            const auto& [selection, select_s] = selections.at(method);
            const auto t0 = std::chrono::steady_clock::now();
            FoldResult r = evaluate_variant(cfg, cfg.variants[v], f, labels, fold_dir, &selection);
            seconds[v] += shared + select_s + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            if (progress) progress(fold_name(k) + " " + variant_name(cfg.variants[v]) + " done");
            report.variants[v].folds.push_back(std::move(r));
        }
    }

    for (std::size_t v = 0; v < report.variants.size(); ++v) {
        VariantReport& vr = report.variants[v];
        double reduction = 0.0;
        for (const FoldResult& r : vr.folds) {
            vr.pooled += r.confusion;
            vr.fold_metrics.push_back(compute_metrics(r.confusion));
            reduction += r.selection.reduction_ratio;
        }
        vr.metrics = compute_metrics(vr.pooled);
        vr.reduction = reduction / double(vr.folds.size());
        if (cfg.record_runtime) vr.runtime_s = seconds[v];
    }
    return report;
}

Report run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out, const Progress& progress) {
    const auto cases = staged("load-dataset", 0, [&] { return phantom::read_dataset(cfg.dataset); });
    return run_experiment(cfg, cases, out, progress);
}

} // namespace lvdiag::pipeline
