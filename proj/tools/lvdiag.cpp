#include "lvdiag/classifiers.hpp"
#include "lvdiag/featsel.hpp"
#include "lvdiag/phantom.hpp"
#include "lvdiag/pipeline.hpp"
#include "lvdiag/segnet.hpp"
#include "lvdiag/tensor/ltsr.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace lvdiag;
namespace fs = std::filesystem;

namespace {

std::vector<int> labels_of(const std::vector<phantom::ManifestRow>& rows) {
    std::vector<int> y;
    for (const auto& r : rows) y.push_back(int(r.label));
    return y;
}

std::vector<phantom::ManifestRow> manifest(const fs::path& dataset) { return phantom::read_manifest(dataset / "manifest.csv"); }

Tensor load_matrix(const fs::path& path) {
    Tensor X = load_ltsr(path);
    if (X.rank() != 2) throw ShapeError("feature matrix " + path.string() + " must be (n,p), got " + shape_str(X.shape()));
    return X;
}

std::vector<std::size_t> columns_for(const featsel::SelectionResult& s, std::size_t p) {
    if (s.method != featsel::Method::fsr) {
        if (s.universe != p)
            throw std::invalid_argument("selection covers " + std::to_string(s.universe) + " features, matrix has " +
                                        std::to_string(p));
        return s.indices;
    }
    if (s.universe == 0 || p % s.universe != 0)
        throw std::invalid_argument("FSR selection over " + std::to_string(s.universe) + " kernels does not divide " +
                                    std::to_string(p) + " features");
    return featsel::kernel_feature_indices(s.indices, p / s.universe);
}

void phantom_generate(const fs::path& out, std::size_t n, const phantom::PhantomConfig& cfg) {
    phantom::write_dataset(out, phantom::generate_dataset(cfg, n));
    std::cout << "wrote " << n << " cases to " << out.string() << "\n";
}

void segnet_train(const fs::path& dataset, const fs::path& out, const segnet::Architecture& arch, std::uint64_t seed,
                  const segnet::TrainConfig& tc) {
    const auto cases = phantom::read_dataset(dataset);
    std::vector<Tensor> videos, masks;
    for (const auto& c : cases) {
        videos.push_back(c.video);
        masks.push_back(c.mask);
    }
    const auto result = segnet::train(videos, masks, segnet::build(arch, seed), tc, [&](std::size_t e, double loss) {
        std::printf("epoch %zu/%zu loss %.6f\n", e + 1, tc.epochs, loss);
        std::fflush(stdout);
    });
    segnet::save_checkpoint(out, result.params);
    std::cout << "saved " << out.string() << "\n";
}

void segnet_segment(const fs::path& model, const fs::path& dataset, const fs::path& out) {
    const auto net = segnet::load_checkpoint(model);
    fs::create_directories(out);
    double total = 0.0;
    const auto cases = phantom::read_dataset(dataset);
    for (const auto& c : cases) {
        const Tensor prob = segnet::segment(net, c.video);
        save_ltsr(out / (c.id + ".ltsr"), prob);
        const double d = segnet::dice(segnet::binarize(prob), c.mask);
        total += d;
        std::printf("%s dice %.4f\n", c.id.c_str(), d);
    }
    std::printf("mean dice %.4f over %zu cases\n", total / double(cases.size()), cases.size());
}

void segnet_extract(const fs::path& model, const fs::path& dataset, const fs::path& out, featsel::Pooling pooling) {
    const auto net = segnet::load_checkpoint(model);
    const auto cases = phantom::read_dataset(dataset);
    std::vector<double> flat;
    std::size_t p = 0;
    for (const auto& c : cases) {
        const auto row = featsel::flatten_features(segnet::extract_bottleneck(net, c.video), pooling);
        p = row.size();
        flat.insert(flat.end(), row.begin(), row.end());
    }
    save_ltsr(out, Tensor({cases.size(), p}, flat));
    std::printf("wrote (%zu,%zu) features to %s\n", cases.size(), p, out.string().c_str());
}

void featsel_fsl(const fs::path& features, const fs::path& dataset, double target, std::size_t count, double min_ratio,
                 const fs::path& out) {
    const Tensor X = load_matrix(features);
    const auto y = labels_of(manifest(dataset));
    if (y.size() != X.dim(0))
        throw std::invalid_argument("manifest lists " + std::to_string(y.size()) + " cases, matrix has " +
                                    std::to_string(X.dim(0)) + " rows");
    const std::vector<double> yd(y.begin(), y.end());
    const auto grid = featsel::default_alpha_grid(featsel::standardize(X), yd, count, min_ratio);
    const auto s = featsel::fsl_select(X, yd, target, grid);
    featsel::write_selection(out, s);
    std::printf("FSL kept %zu of %zu features (alpha %.6g, reduction %.4f)\n", s.indices.size(), s.universe, *s.alpha,
                s.reduction_ratio);
}

void featsel_fsr(const fs::path& model, const fs::path& dataset, const fs::path& out, const fs::path& heatmaps,
                 featsel::CamClass cls, featsel::CamNormalization norm) {
    const auto net = segnet::load_checkpoint(model);
    const auto cases = phantom::read_dataset(dataset);
    std::vector<featsel::KernelWeights> weights;
    if (!heatmaps.empty()) fs::create_directories(heatmaps);
    for (const auto& c : cases) {
        weights.push_back(featsel::kernel_weights(net, c.video, cls, norm));
        if (heatmaps.empty()) continue;
        const Tensor cam = featsel::gradcam_map(segnet::extract_bottleneck(net, c.video), weights.back());
        const std::size_t T = cam.dim(0), H = cam.dim(1), W = cam.dim(2);
        Tensor mean({1, H, W});
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t i = 0; i < H * W; ++i) mean[i] += cam[t * H * W + i] / double(T);
        const std::size_t h = c.video.dim(1), w = c.video.dim(2);
        featsel::write_pgm(heatmaps / (c.id + ".pgm"), featsel::upsample_nearest(mean, {1, h, w}).reshaped({h, w}));
    }
    const auto s = featsel::fsr_select(weights);
    featsel::write_selection(out, s);
    std::printf("FSR kernels");
    for (std::size_t k : s.indices) std::printf(" %zu", k);
    std::printf(" (reduction %.4f)\n", s.reduction_ratio);
}

void clf_train(clf::Kind kind, const fs::path& features, const fs::path& dataset, const fs::path& selection,
               const fs::path& out, const clf::ClassifierConfig& cfg) {
    const Tensor X = load_matrix(features);
    const auto y = labels_of(manifest(dataset));
    if (y.size() != X.dim(0))
        throw std::invalid_argument("manifest lists " + std::to_string(y.size()) + " cases, matrix has " +
                                    std::to_string(X.dim(0)) + " rows");
    const Tensor Xs = selection.empty() ? X : featsel::select_columns(X, columns_for(featsel::read_selection(selection), X.dim(1)));
    clf::save_model(out, clf::train(kind, Xs, y, cfg));
    std::printf("trained %s on (%zu,%zu)\n", clf::kind_name(kind).c_str(), Xs.dim(0), Xs.dim(1));
}

void clf_predict(const fs::path& model, const fs::path& features, const fs::path& selection, const fs::path& dataset) {
    const Tensor X = load_matrix(features);
    const Tensor Xs = selection.empty() ? X : featsel::select_columns(X, columns_for(featsel::read_selection(selection), X.dim(1)));
    const auto scores = clf::predict_scores(clf::load_model(model), Xs);
    std::vector<phantom::ManifestRow> rows;
    if (!dataset.empty()) rows = manifest(dataset);
    if (!rows.empty() && rows.size() != scores.size())
        throw std::invalid_argument("manifest lists " + std::to_string(rows.size()) + " cases, matrix has " +
                                    std::to_string(scores.size()) + " rows");
    pipeline::Confusion c;
    std::printf("row,id,score,label%s\n", rows.empty() ? "" : ",truth");
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const int label = scores[i] > 0.5 ? 1 : 0;
        std::printf("%zu,%s,%.6f,%d", i, rows.empty() ? "" : rows[i].id.c_str(), scores[i], label);
        if (!rows.empty()) {
            std::printf(",%d", int(rows[i].label));
            c.add(int(rows[i].label), label);
        }
        std::printf("\n");
    }
    if (!rows.empty()) {
        const auto m = pipeline::compute_metrics(c);
        std::fprintf(stderr, "accuracy %.4f\n", *m.accuracy);
    }
}

void pipeline_run(const fs::path& config, const fs::path& out) {
    const auto cfg = pipeline::load_config(config);
    const auto report = pipeline::run_experiment(cfg, out, [](const std::string& msg) {
        std::cerr << msg << "\n";
    });
    pipeline::emit_report(report, out);
    std::ifstream csv(out / "report.csv");
    std::cout << csv.rdbuf();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"LV segmentation features for differential diagnosis"};
    app.require_subcommand(1);

    // phantom
    auto* ph = app.add_subcommand("phantom", "synthetic echo datasets");
    ph->require_subcommand(1);
    auto* gen = ph->add_subcommand("generate", "write a phantom dataset");
    phantom::PhantomConfig pcfg;
    fs::path gen_out;
    std::size_t gen_n = 80;
    gen->add_option("--out", gen_out, "dataset directory")->required();
    gen->add_option("-n,--cases", gen_n, "number of cases")->capture_default_str();
    gen->add_option("--frames", pcfg.frames)->capture_default_str();
    gen->add_option("--height", pcfg.height)->capture_default_str();
    gen->add_option("--width", pcfg.width)->capture_default_str();
    gen->add_option("--tts-fraction", pcfg.tts_fraction)->capture_default_str();
    gen->add_option("--speckle", pcfg.speckle)->capture_default_str();
    gen->add_option("--artifacts", pcfg.artifact_probability, "bright band probability per case")->capture_default_str();
    gen->add_option("--seed", pcfg.seed)->capture_default_str();
    gen->callback([&] { phantom_generate(gen_out, gen_n, pcfg); });

    // segnet
    auto* sn = app.add_subcommand("segnet", "segmentation network");
    sn->require_subcommand(1);
    segnet::Architecture arch;
    segnet::TrainConfig tc;
    std::uint64_t net_seed = 1;
    fs::path sn_dataset, sn_out, sn_model;
    std::string pooling = "temporal-mean";
    auto* tr = sn->add_subcommand("train", "train on every case of a dataset");
    tr->add_option("--dataset", sn_dataset)->required()->check(CLI::ExistingDirectory);
    tr->add_option("--out", sn_out, "checkpoint directory")->required();
    tr->add_option("--levels", arch.levels)->capture_default_str();
    tr->add_option("--base-channels", arch.base_channels)->capture_default_str();
    tr->add_option("--epochs", tc.epochs)->capture_default_str();
    tr->add_option("--batch-size", tc.batch_size)->capture_default_str();
    tr->add_option("--lr", tc.lr0)->capture_default_str();
    tr->add_option("--decay", tc.decay)->capture_default_str();
    tr->add_option("--augment", tc.augment_amplitude)->capture_default_str();
    tr->add_option("--dice-weight", tc.dice_weight)->capture_default_str();
    tr->add_option("--seed", net_seed, "initialization seed")->capture_default_str();
    tr->add_option("--train-seed", tc.seed, "shuffle and augmentation seed")->capture_default_str();
    tr->callback([&] { segnet_train(sn_dataset, sn_out, arch, net_seed, tc); });
    auto* seg = sn->add_subcommand("segment", "write foreground probabilities and report Dice");
    seg->add_option("--model", sn_model)->required()->check(CLI::ExistingDirectory);
    seg->add_option("--dataset", sn_dataset)->required()->check(CLI::ExistingDirectory);
    seg->add_option("--out", sn_out)->required();
    seg->callback([&] { segnet_segment(sn_model, sn_dataset, sn_out); });
    auto* ext = sn->add_subcommand("extract", "write the flattened bottleneck feature matrix");
    ext->add_option("--model", sn_model)->required()->check(CLI::ExistingDirectory);
    ext->add_option("--dataset", sn_dataset)->required()->check(CLI::ExistingDirectory);
    ext->add_option("--out", sn_out, "LTSR file")->required();
    ext->add_option("--pooling", pooling)->check(CLI::IsMember({"none", "temporal-mean"}))->capture_default_str();
    ext->callback([&] { segnet_extract(sn_model, sn_dataset, sn_out, featsel::parse_pooling(pooling)); });

    // featsel
    auto* fsel = app.add_subcommand("featsel", "feature selection");
    fsel->require_subcommand(1);
    fs::path fs_features, fs_dataset, fs_out, fs_model, fs_heatmaps;
    double target = 0.10, min_ratio = 1e-3;
    std::size_t count = 40;
    std::string cam_class = "foreground", cam_norm = "positions";
    auto* fsl = fsel->add_subcommand("fsl", "LASSO support selection");
    fsl->add_option("--features", fs_features)->required()->check(CLI::ExistingFile);
    fsl->add_option("--dataset", fs_dataset, "dataset holding manifest.csv labels")->required()->check(CLI::ExistingDirectory);
    fsl->add_option("--target", target, "target keep fraction")->capture_default_str();
    fsl->add_option("--alphas", count, "grid size")->capture_default_str();
    fsl->add_option("--min-ratio", min_ratio, "smallest alpha over the null alpha")->capture_default_str();
    fsl->add_option("--out", fs_out, "selection.json")->required();
    fsl->callback([&] { featsel_fsl(fs_features, fs_dataset, target, count, min_ratio, fs_out); });
    auto* fsr = fsel->add_subcommand("fsr", "GradCAM kernel ranking");
    fsr->add_option("--model", fs_model)->required()->check(CLI::ExistingDirectory);
    fsr->add_option("--dataset", fs_dataset)->required()->check(CLI::ExistingDirectory);
    fsr->add_option("--out", fs_out, "selection.json")->required();
    fsr->add_option("--heatmaps", fs_heatmaps, "directory for PGM heatmaps");
    fsr->add_option("--cam-class", cam_class)->check(CLI::IsMember({"foreground", "background"}))->capture_default_str();
    fsr->add_option("--normalization", cam_norm)->check(CLI::IsMember({"positions", "kernels"}))->capture_default_str();
    fsr->callback([&] {
        featsel_fsr(fs_model, fs_dataset, fs_out, fs_heatmaps,
                    cam_class == "foreground" ? featsel::CamClass::foreground : featsel::CamClass::background,
                    cam_norm == "positions" ? featsel::CamNormalization::positions : featsel::CamNormalization::kernels);
    });

    // clf
    auto* cl = app.add_subcommand("clf", "classifiers");
    cl->require_subcommand(1);
    clf::ClassifierConfig ccfg;
    std::string kind = "RFC";
    fs::path cl_features, cl_dataset, cl_selection, cl_out, cl_model;
    std::uint64_t cl_seed = 1;
    auto* ctr = cl->add_subcommand("train", "train a classifier");
    ctr->add_option("--kind", kind)->check(CLI::IsMember({"SVMC", "MLP", "RFC"}, CLI::ignore_case))->capture_default_str();
    ctr->add_option("--features", cl_features)->required()->check(CLI::ExistingFile);
    ctr->add_option("--dataset", cl_dataset, "dataset holding manifest.csv labels")->required()->check(CLI::ExistingDirectory);
    ctr->add_option("--selection", cl_selection, "selection.json")->check(CLI::ExistingFile);
    ctr->add_option("--out", cl_out, "model directory")->required();
    ctr->add_option("--seed", cl_seed)->capture_default_str();
    ctr->add_option("--trees", ccfg.rf.n_trees)->capture_default_str();
    ctr->add_option("--max-depth", ccfg.rf.max_depth)->capture_default_str();
    ctr->add_option("--mlp-epochs", ccfg.mlp.epochs)->capture_default_str();
    ctr->add_option("--mlp-lr", ccfg.mlp.lr)->capture_default_str();
    ctr->add_option("--dropout", ccfg.mlp.dropout)->capture_default_str();
    ctr->add_option("--svm-C", ccfg.svm.C)->capture_default_str();
    ctr->add_option("--svm-gamma", ccfg.svm.gamma, "0 selects 1/(p var)")->capture_default_str();
    ctr->add_option("--meta-lr", ccfg.svm.meta_lr)->capture_default_str();
    ctr->callback([&] {
        ccfg.svm.seed = ccfg.mlp.seed = ccfg.rf.seed = cl_seed;
        clf_train(clf::parse_kind(kind), cl_features, cl_dataset, cl_selection, cl_out, ccfg);
    });
    auto* cpr = cl->add_subcommand("predict", "score a feature matrix");
    cpr->add_option("--model", cl_model)->required()->check(CLI::ExistingDirectory);
    cpr->add_option("--features", cl_features)->required()->check(CLI::ExistingFile);
    cpr->add_option("--selection", cl_selection, "selection.json")->check(CLI::ExistingFile);
    cpr->add_option("--dataset", cl_dataset, "dataset for ids and accuracy")->check(CLI::ExistingDirectory);
    cpr->callback([&] { clf_predict(cl_model, cl_features, cl_selection, cl_dataset); });

    // pipeline
    auto* pl = app.add_subcommand("pipeline", "cross-validated experiments");
    pl->require_subcommand(1);
    fs::path config, pl_out;
    auto* run = pl->add_subcommand("run", "run the configured variants and write reports");
    run->add_option("--config", config)->required()->check(CLI::ExistingFile);
    run->add_option("--out", pl_out)->required();
    run->callback([&] { pipeline_run(config, pl_out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const pipeline::StageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
