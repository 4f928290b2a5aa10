#pragma once

#include "lvdiag/classifiers.hpp"
#include "lvdiag/featsel.hpp"
#include "lvdiag/phantom.hpp"
#include "lvdiag/segnet.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace lvdiag::pipeline {

/// Stratified folds: each class is shuffled and dealt round-robin, continuing
/// where the previous class stopped. Every class needs at least k members.
std::vector<std::vector<std::size_t>> kfold_split(const std::vector<int>& labels, std::size_t k, std::uint64_t seed);

/// Positive class is label 1.
struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::size_t total() const { return tp + fp + tn + fn; }
    void add(int truth, int predicted);
    Confusion& operator+=(const Confusion& o);
};

/// A ratio with a zero denominator is absent.
struct Metrics {
    std::optional<double> sensitivity, specificity, f1, accuracy;
};

Metrics compute_metrics(const Confusion& c);

struct Variant {
    featsel::Method method = featsel::Method::fsl;
    clf::Kind classifier = clf::Kind::rfc;
};
/// "FSL+RFC", "NONE+SVMC", ...
std::string variant_name(const Variant& v);

struct ExperimentConfig {
    std::filesystem::path dataset;
    std::size_t folds = 4;
    std::vector<Variant> variants{Variant{}};
    std::uint64_t seed = 1;

    segnet::Architecture arch;
    segnet::TrainConfig segnet;

    featsel::Pooling pooling = featsel::Pooling::temporal_mean;
    double fsl_target = 0.10;
    std::size_t alpha_count = 40;
    double alpha_min_ratio = 1e-3;
    double lasso_tol = 1e-8;
    featsel::CamClass cam_class = featsel::CamClass::foreground;
    featsel::CamNormalization cam_normalization = featsel::CamNormalization::positions;

    clf::ClassifierConfig classifiers;

    bool write_checkpoints = true;
    bool write_gradcam = true;
    /// Off by default so that report.csv is byte-identical across runs.
    bool record_runtime = false;

    void validate() const;
};

/// Reads a JSON config; relative dataset paths resolve against the config's directory.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig config_from_json(const std::string& text, const std::filesystem::path& base = {});
/// Canonical JSON of every field, used for the fingerprint.
std::string config_to_json(const ExperimentConfig& cfg);
std::string fingerprint(const ExperimentConfig& cfg);

struct FoldResult {
    std::size_t fold = 0;
    std::vector<std::size_t> test;
    std::vector<int> predicted;
    std::vector<double> scores;
    Confusion confusion;
    featsel::SelectionResult selection;
    std::size_t feature_count = 0;
};

struct VariantReport {
    Variant variant;
    std::vector<FoldResult> folds;
    Confusion pooled;
    Metrics metrics;                    ///< from pooled counts
    std::vector<Metrics> fold_metrics;
    double reduction = 0.0;             ///< mean over folds
    std::optional<double> runtime_s;
};

struct Report {
    std::string fingerprint;
    std::size_t cases = 0;
    std::size_t positives = 0;
    std::vector<double> segmentation_dice;  ///< held-out Dice per fold
    std::vector<VariantReport> variants;
};

/// Everything a fold produces before classification.
struct FoldFeatures {
    std::size_t fold = 0;
    std::vector<std::size_t> train, test;
    segnet::SegNetParams net;
    Tensor X;                      ///< (n,p) flattened bottleneck features of every case
    std::size_t per_kernel = 0;    ///< flattened features per bottleneck kernel
    std::vector<featsel::KernelWeights> cam;  ///< per training case, filled when FSR is requested
    double test_dice = 0.0;
};

using Progress = std::function<void(const std::string&)>;

/// Trains the segmentation net on the training split and extracts features of every case.
FoldFeatures fold_features(const ExperimentConfig& cfg, const std::vector<phantom::LabeledEcho>& cases,
                           const std::vector<std::size_t>& train, const std::vector<std::size_t>& test, std::size_t fold,
                           const Progress& progress = {});

/// Selection from training rows and training labels only.
featsel::SelectionResult select_features(const ExperimentConfig& cfg, featsel::Method method, const FoldFeatures& f,
                                         const std::vector<int>& labels);

/// Column indices into FoldFeatures::X that a selection keeps.
std::vector<std::size_t> selected_columns(const featsel::SelectionResult& s, const FoldFeatures& f);

/// Selection, classifier training and held-out evaluation of one variant.
/// A given `selection` is used as is instead of being recomputed.
FoldResult evaluate_variant(const ExperimentConfig& cfg, const Variant& v, const FoldFeatures& f,
                            const std::vector<int>& labels, const std::filesystem::path& fold_dir = {},
                            const featsel::SelectionResult* selection = nullptr);

/// Stage failure, tagged with the stage and fold.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, std::size_t fold, const std::string& what)
        : std::runtime_error("stage " + stage + ", fold " + std::to_string(fold) + ": " + what),
          stage(std::move(stage)), fold(fold) {}
    std::string stage;
    std::size_t fold;
};

/// Runs every variant with one segmentation net per fold. Artifacts go under `out` when given.
Report run_experiment(const ExperimentConfig& cfg, const std::vector<phantom::LabeledEcho>& cases,
                      const std::filesystem::path& out = {}, const Progress& progress = {});
Report run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out = {},
                      const Progress& progress = {});

struct PublishedRow {
    const char* method;
    double sensitivity, specificity, f1, accuracy;
};
/// Published reference numbers, shown for context only.
const std::vector<PublishedRow>& published_rows();

/// Writes report.csv and report.md into `dir`.
void emit_report(const Report& report, const std::filesystem::path& dir);

} // namespace lvdiag::pipeline
