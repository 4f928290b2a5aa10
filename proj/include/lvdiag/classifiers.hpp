#pragma once

#include "lvdiag/tensor/graph.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace lvdiag::clf {

/// Training matrix (n,p) row-major and binary labels in {0,1}.
using Labels = std::vector<int>;

double rbf_kernel(std::span<const double> u, std::span<const double> v, double gamma);

/// Per-column mean and scale applied before the SVM and the MLP; constant columns keep scale 1.
struct Scaler {
    std::vector<double> mean, scale;
    static Scaler fit(const Tensor& X);
    Tensor apply(const Tensor& X) const;
};

// ---------------------------------------------------------------- SVM

struct SvmModel {
    Tensor support;                  ///< (s,p) support vectors
    std::vector<double> coef;        ///< alpha_i * y_i per support vector
    double bias = 0.0;
    double gamma = 1.0;
    double C = 1.0;
    std::vector<double> alpha;       ///< dual variables of every training sample
    std::vector<double> y;           ///< training labels in {-1,+1}
    bool converged = false;
    std::size_t iterations = 0;

    /// f(x) = sum_i alpha_i y_i k(x_i, x) + b
    double decision(std::span<const double> x) const;
};

/// SMO on the dual with maximal-violating-pair selection; stops when the KKT
/// gap falls below `tol`.
SvmModel svm_train(const Tensor& X, const std::vector<double>& y, double C, double gamma, double tol = 1e-3,
                   std::size_t max_iter = 1000000);

struct SvmStackConfig {
    std::size_t n_base = 5;
    double C = 1.0;
    double gamma = 0.0;              ///< 0 selects 1 / (p * var(X)) on scaled features
    double meta_lr = 1e-4;
    std::size_t meta_epochs = 2000;
    std::size_t inner_folds = 5;     ///< folds producing the out-of-fold meta features
    std::uint64_t seed = 11;
};

struct SvmStackModel {
    SvmStackConfig config;
    Scaler scaler;
    double gamma = 0.0;
    std::vector<SvmModel> bases;
    std::vector<double> meta_w;
    double meta_b = 0.0;

    /// Meta probability of label 1.
    double score(std::span<const double> x) const;
};

SvmStackModel svm_stack_train(const Tensor& X, const Labels& y, const SvmStackConfig& cfg);

// ---------------------------------------------------------------- MLP

inline constexpr std::size_t kMlpWidths[3] = {64, 256, 512};

struct MlpConfig {
    double lr = 1e-3;
    double dropout = 0.5;
    std::size_t epochs = 200;
    std::size_t batch_size = 16;
    std::uint64_t seed = 13;
};

struct MlpModel {
    MlpConfig config;
    Scaler scaler;
    std::vector<Tensor> params;  ///< w0,b0,w1,b1,w2,b2,w3,b3; dense layout w (in,out)
    std::vector<double> loss_history;

    /// Logits (n,2). `dropout_seed` is used only when training is true.
    Var forward(Graph& g, std::span<const Var> p, Var x, bool training, std::uint64_t dropout_seed) const;
};

MlpModel mlp_init(std::size_t inputs, const MlpConfig& cfg);
MlpModel mlp_train(const Tensor& X, const Labels& y, const MlpConfig& cfg);
/// Class probabilities (n,2); rows sum to 1.
Tensor mlp_predict(const MlpModel& m, const Tensor& X);

/// Thrown on a non-finite training loss; `epoch` is zero-based.
class MlpDiverged : public std::runtime_error {
public:
    MlpDiverged(std::size_t epoch, const std::string& what) : std::runtime_error(what), epoch(epoch) {}
    std::size_t epoch;
};

// ---------------------------------------------------------------- RF

struct RfConfig {
    std::size_t n_trees = 100;
    std::size_t max_depth = 11;
    std::size_t max_features = 0;  ///< 0 selects ceil(sqrt(p))
    bool bootstrap = true;
    std::uint64_t seed = 17;
};

struct TreeNode {
    int feature = -1;        ///< -1 marks a leaf
    double threshold = 0.0;  ///< x[feature] <= threshold goes left
    int left = -1, right = -1;
    int label = 0;
    double impurity = 0.0;
    std::size_t samples = 0;
};

struct Tree {
    std::vector<TreeNode> nodes;  ///< root at 0
    int predict(std::span<const double> x) const;
    /// Longest root-to-leaf path, counted in splits.
    std::size_t depth() const;
};

struct RfModel {
    RfConfig config;
    std::vector<Tree> trees;
    std::vector<std::vector<std::size_t>> bootstrap_indices;

    /// Fraction of trees voting 1.
    double vote(std::span<const double> x) const;
    /// Majority vote; a tie goes to 0.
    int predict(std::span<const double> x) const { return vote(x) > 0.5 ? 1 : 0; }
};

RfModel rf_train(const Tensor& X, const Labels& y, const RfConfig& cfg);

/// Gini impurity 1 - sum_k p_k^2 of a label multiset.
double gini(std::size_t ones, std::size_t total);

// ---------------------------------------------------------------- common

enum class Kind { svmc, mlp, rfc };
std::string kind_name(Kind k);
Kind parse_kind(const std::string& s);

struct ClassifierConfig {
    SvmStackConfig svm;
    MlpConfig mlp;
    RfConfig rf;
};

using Model = std::variant<SvmStackModel, MlpModel, RfModel>;

Model train(Kind kind, const Tensor& X, const Labels& y, const ClassifierConfig& cfg);
Kind kind_of(const Model& m);
/// Score of label 1 per row: meta probability, softmax probability or vote fraction.
std::vector<double> predict_scores(const Model& m, const Tensor& X);
/// Labels from scores: 1 when the score exceeds 0.5.
Labels predict_labels(const Model& m, const Tensor& X);

/// Writes clf.json (kind, hyperparameters, seed, and the tree / support-vector
/// encoding) plus LTSR files for MLP weights.
void save_model(const std::filesystem::path& dir, const Model& m);
Model load_model(const std::filesystem::path& dir);

} // namespace lvdiag::clf
