#pragma once

#include "lvdiag/segnet.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lvdiag::featsel {

/// GradCAM class: foreground (LV) probability or its complement.
enum class CamClass : int { background = 0, foreground = 1 };

/// Divisor of the summed gradients: spatio-temporal positions, or the kernel count.
enum class CamNormalization { positions, kernels };

struct KernelWeights {
    std::vector<double> alpha;  ///< one per bottleneck kernel
    CamClass target = CamClass::foreground;
};

/// alpha_l = (1/N) sum over positions of dy/dF_l, where y is the sum over voxels of
/// the predicted probability of `target`. Throws std::invalid_argument for
/// non-finite parameters.
KernelWeights kernel_weights(const segnet::SegNetParams& net, const Tensor& video,
                             CamClass target = CamClass::foreground,
                             CamNormalization norm = CamNormalization::positions);

/// relu(sum_l alpha_l F_l) over (T',H',W') for features (C,T',H',W').
Tensor gradcam_map(const Tensor& features, const KernelWeights& weights);

/// Nearest-neighbour upsampling of a (T',H',W') map to `shape`, each dimension an integer multiple.
Tensor upsample_nearest(const Tensor& map, const Shape& shape);

enum class Method { none, fsr, fsl };
std::string method_name(Method m);
Method parse_method(const std::string& s);

struct SelectionResult {
    Method method = Method::none;
    std::vector<std::size_t> indices;  ///< kernel indices (fsr) or flattened-feature indices (fsl, none)
    std::size_t universe = 0;          ///< kernel count (fsr) or flattened length (fsl, none)
    std::optional<double> alpha;       ///< chosen penalty (fsl)
    std::string fold;
    double reduction_ratio = 0.0;      ///< 1 - kept / universe
};

/// Top 5 kernels per case, pooled, then the 3 most frequent. Ties go to the lower index.
SelectionResult fsr_select(const std::vector<KernelWeights>& per_case);

/// Indices of the `k` largest entries, ties broken by lower index.
std::vector<std::size_t> top_k(const std::vector<double>& values, std::size_t k);

double soft_threshold(double z, double t);

/// Column-standardized copy: zero mean, unit population variance. Constant
/// columns become zero and keep scale 0.
struct Standardized {
    std::vector<double> data;  ///< column-major n x p
    std::vector<double> mean, scale;
    std::size_t n = 0, p = 0;
    double at(std::size_t row, std::size_t col) const { return data[col * n + row]; }
};
/// X is (n,p) row-major.
Standardized standardize(const Tensor& X);

struct LassoFit {
    std::vector<double> w;  ///< standardized-space coefficients
    double intercept = 0.0;
    double alpha = 0.0;
    std::size_t iterations = 0;  ///< full sweeps
    double max_update = 0.0;     ///< largest coordinate change in the last sweep
    double kkt_residual = 0.0;   ///< largest KKT violation at return
    bool converged = false;
    std::vector<double> objective_history;  ///< objective after each sweep
    std::vector<double> mean, scale;

    std::vector<std::size_t> support() const;
};

/// Minimizes (1/(2n))||y - b - Xs w||^2 + alpha ||w||_1 by cyclic coordinate
/// descent, Xs the standardized X. Stops when a sweep moves no coordinate by
/// tol or more and every KKT condition holds within tol.
LassoFit lasso_fit(const Tensor& X, const std::vector<double>& y, double alpha, double tol = 1e-8,
                   std::size_t max_iter = 100000);

/// Same objective, reusing a standardized design and optional warm start.
LassoFit lasso_fit(const Standardized& Xs, const std::vector<double>& y, double alpha, double tol,
                   std::size_t max_iter, const std::vector<double>* warm_start = nullptr);

/// max_i |x_i^T (y - mean y)| / n over standardized columns; every alpha at or above gives w = 0.
double lasso_null_alpha(const Standardized& Xs, const std::vector<double>& y);

/// `count` alphas spaced geometrically from the null alpha down to null * min_ratio.
std::vector<double> default_alpha_grid(const Standardized& Xs, const std::vector<double>& y, std::size_t count = 40,
                                       double min_ratio = 1e-3);

/// Fits every alpha of the grid and keeps the support whose size fraction is
/// closest to target_keep_fraction (earlier grid entry wins ties).
SelectionResult fsl_select(const Tensor& X, const std::vector<double>& y, double target_keep_fraction,
                           const std::vector<double>& alpha_grid, double tol = 1e-8);

enum class Pooling { none, temporal_mean };
std::string pooling_name(Pooling p);
Pooling parse_pooling(const std::string& s);

/// Row-major flatten of (C,T',H',W'): index ((c*T'+t)*H'+h)*W'+w for none,
/// (c*H'+h)*W'+w after averaging over t for temporal_mean.
std::vector<double> flatten_features(const Tensor& features, Pooling pooling);

/// Flattened indices owned by the given kernels, in kernel order.
std::vector<std::size_t> kernel_feature_indices(const std::vector<std::size_t>& kernels, std::size_t per_kernel);

/// Rows of X (n,p) restricted to `columns`.
Tensor select_columns(const Tensor& X, const std::vector<std::size_t>& columns);

void write_selection(const std::filesystem::path& path, const SelectionResult& s);
SelectionResult read_selection(const std::filesystem::path& path);

/// 8-bit binary PGM of a (H,W) map, min-max scaled (a constant map is written as zeros).
void write_pgm(const std::filesystem::path& path, const Tensor& map);

} // namespace lvdiag::featsel
