#include "lvdiag/featsel.hpp"

#include <algorithm>
#include <cmath>

namespace lvdiag::featsel {
namespace {

double dot_column(const Standardized& Xs, std::size_t j, const std::vector<double>& v) {
    const double* col = Xs.data.data() + j * Xs.n;
    double s = 0.0;
    for (std::size_t i = 0; i < Xs.n; ++i) s += col[i] * v[i];
    return s;
}

double mean_of(const std::vector<double>& y) {
    double s = 0.0;
    for (double v : y) s += v;
    return s / double(y.size());
}

double objective(const std::vector<double>& r, const std::vector<double>& w, double alpha) {
    double rss = 0.0, l1 = 0.0;
    for (double v : r) rss += v * v;
    for (double v : w) l1 += std::abs(v);
    return rss / (2.0 * double(r.size())) + alpha * l1;
}

} // namespace

double soft_threshold(double z, double t) {
    if (!(t >= 0.0)) throw std::invalid_argument("soft_threshold: threshold must be >= 0");
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

Standardized standardize(const Tensor& X) {
    if (X.rank() != 2) throw ShapeError("standardize: expected (n,p), got " + shape_str(X.shape()));
    Standardized s;
    s.n = X.dim(0);
    s.p = X.dim(1);
    s.data.assign(s.n * s.p, 0.0);
    s.mean.assign(s.p, 0.0);
    s.scale.assign(s.p, 0.0);
    for (std::size_t j = 0; j < s.p; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < s.n; ++i) m += X[i * s.p + j];
        m /= double(s.n);
        double ss = 0.0;
        for (std::size_t i = 0; i < s.n; ++i) ss += (X[i * s.p + j] - m) * (X[i * s.p + j] - m);
        const double sd = std::sqrt(ss / double(s.n));
        s.mean[j] = m;
        if (!(sd > 1e-12 * std::max(1.0, std::abs(m)))) continue;
        s.scale[j] = sd;
        for (std::size_t i = 0; i < s.n; ++i) s.data[j * s.n + i] = (X[i * s.p + j] - m) / sd;
    }
    return s;
}

std::vector<std::size_t> LassoFit::support() const {
    std::vector<std::size_t> s;
    for (std::size_t j = 0; j < w.size(); ++j)
        if (w[j] != 0.0) s.push_back(j);
    return s;
}

double lasso_null_alpha(const Standardized& Xs, const std::vector<double>& y) {
    if (y.size() != Xs.n) throw ShapeError("lasso: " + std::to_string(y.size()) + " labels for " + std::to_string(Xs.n) + " rows");
    const double ybar = mean_of(y);
    std::vector<double> r(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) r[i] = y[i] - ybar;
    double best = 0.0;
    for (std::size_t j = 0; j < Xs.p; ++j) best = std::max(best, std::abs(dot_column(Xs, j, r)) / double(Xs.n));
    return best;
}

LassoFit lasso_fit(const Standardized& Xs, const std::vector<double>& y, double alpha, double tol,
                   std::size_t max_iter, const std::vector<double>* warm_start) {
    const std::size_t n = Xs.n, p = Xs.p;
    if (n < 2) throw std::invalid_argument("lasso_fit: need at least 2 rows");
    if (y.size() != n) throw ShapeError("lasso_fit: " + std::to_string(y.size()) + " labels for " + std::to_string(n) + " rows");
    if (!(alpha >= 0.0)) throw std::invalid_argument("lasso_fit: alpha must be >= 0");
    if (!(tol > 0.0)) throw std::invalid_argument("lasso_fit: tol must be > 0");

    LassoFit fit;
    fit.alpha = alpha;
    fit.mean = Xs.mean;
    fit.scale = Xs.scale;
    fit.intercept = mean_of(y);
    fit.w.assign(p, 0.0);
    if (warm_start) {
        if (warm_start->size() != p) throw ShapeError("lasso_fit: warm start has wrong length");
        for (std::size_t j = 0; j < p; ++j)
            if (Xs.scale[j] > 0.0) fit.w[j] = (*warm_start)[j];
    }

    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = y[i] - fit.intercept;
    for (std::size_t j = 0; j < p; ++j)
        if (fit.w[j] != 0.0) {
            const double* col = Xs.data.data() + j * n;
            for (std::size_t i = 0; i < n; ++i) r[i] -= fit.w[j] * col[i];
        }

    const double inv_n = 1.0 / double(n);
    for (fit.iterations = 0; fit.iterations < max_iter;) {
        double max_update = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            if (Xs.scale[j] == 0.0) continue;
            const double* col = Xs.data.data() + j * n;
            const double old = fit.w[j];
            const double next = soft_threshold(dot_column(Xs, j, r) * inv_n + old, alpha);
            const double delta = next - old;
            if (delta == 0.0) continue;
            for (std::size_t i = 0; i < n; ++i) r[i] -= delta * col[i];
            fit.w[j] = next;
            max_update = std::max(max_update, std::abs(delta));
        }
        ++fit.iterations;
        fit.max_update = max_update;
        fit.objective_history.push_back(objective(r, fit.w, alpha));
        if (max_update >= tol) continue;

        double kkt = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            if (Xs.scale[j] == 0.0) continue;
            const double grad = -dot_column(Xs, j, r) * inv_n;
            const double v = fit.w[j] != 0.0 ? std::abs(grad + alpha * (fit.w[j] > 0 ? 1.0 : -1.0))
                                             : std::max(0.0, std::abs(grad) - alpha);
            kkt = std::max(kkt, v);
        }
        fit.kkt_residual = kkt;
        if (kkt <= tol) {
            fit.converged = true;
            break;
        }
    }
    return fit;
}

LassoFit lasso_fit(const Tensor& X, const std::vector<double>& y, double alpha, double tol, std::size_t max_iter) {
    return lasso_fit(standardize(X), y, alpha, tol, max_iter);
}

std::vector<double> default_alpha_grid(const Standardized& Xs, const std::vector<double>& y, std::size_t count,
                                       double min_ratio) {
    if (count < 2) throw std::invalid_argument("alpha grid: need at least 2 values");
    if (!(min_ratio > 0.0 && min_ratio < 1.0)) throw std::invalid_argument("alpha grid: min_ratio outside (0,1)");
    const double top = lasso_null_alpha(Xs, y);
    std::vector<double> grid(count);
    for (std::size_t k = 0; k < count; ++k) grid[k] = top * std::pow(min_ratio, double(k) / double(count - 1));
    return grid;
}

SelectionResult fsl_select(const Tensor& X, const std::vector<double>& y, double target_keep_fraction,
                           const std::vector<double>& alpha_grid, double tol) {
    if (!(target_keep_fraction > 0.0 && target_keep_fraction < 1.0))
        throw std::invalid_argument("fsl_select: target_keep_fraction outside (0,1)");
    if (alpha_grid.empty()) throw std::invalid_argument("fsl_select: empty alpha grid");
    const Standardized Xs = standardize(X);
    SelectionResult best;
    best.method = Method::fsl;
    best.universe = Xs.p;
    double best_gap = std::numeric_limits<double>::infinity();
    const std::vector<double>* warm = nullptr;
    LassoFit previous;
    for (double alpha : alpha_grid) {
        LassoFit fit = lasso_fit(Xs, y, alpha, tol, 100000, warm);
        const auto support = fit.support();
        if (!support.empty()) {
            const double gap = std::abs(double(support.size()) / double(Xs.p) - target_keep_fraction);
            if (gap < best_gap) {
                best_gap = gap;
                best.indices = support;
                best.alpha = alpha;
            }
        }
        previous = std::move(fit);
        warm = &previous.w;
    }
    if (best.indices.empty()) {
        const auto [lo, hi] = std::minmax_element(alpha_grid.begin(), alpha_grid.end());
        throw std::invalid_argument("fsl_select: every alpha in [" + std::to_string(*lo) + ", " + std::to_string(*hi) +
                                    "] gives an empty support");
    }
    best.reduction_ratio = 1.0 - double(best.indices.size()) / double(Xs.p);
    return best;
}

} // namespace lvdiag::featsel
