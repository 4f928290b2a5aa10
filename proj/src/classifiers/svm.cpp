#include "lvdiag/classifiers.hpp"

#include "lvdiag/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace lvdiag::clf {
namespace {

constexpr double kTau = 1e-12;
constexpr double kMetaInitGain = 4.0;

std::span<const double> row(const Tensor& X, std::size_t i) {
    const std::size_t p = X.dim(1);
    return X.data().subspan(i * p, p);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Tensor take_rows(const Tensor& X, const std::vector<std::size_t>& idx) {
    const std::size_t p = X.dim(1);
    Tensor out({idx.size(), p});
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy_n(X.data().begin() + std::ptrdiff_t(idx[r] * p), p, out.data().begin() + std::ptrdiff_t(r * p));
    return out;
}

bool both_classes(const Labels& y, const std::vector<std::size_t>& idx) {
    bool zero = false, one = false;
    for (std::size_t i : idx) (y[i] ? one : zero) = true;
    return zero && one;
}

std::vector<std::size_t> bootstrap(const Labels& y, const std::vector<std::size_t>& pool, std::uint64_t seed) {
    Rng rng(seed);
    for (int attempt = 0; attempt < 100; ++attempt) {
        std::vector<std::size_t> idx(pool.size());
        for (auto& i : idx) i = pool[rng.index(pool.size())];
        if (both_classes(y, idx)) return idx;
    }
    throw std::runtime_error("svm stack: bootstrap replicas keep missing a class after 100 draws");
}

SvmModel train_base(const Tensor& X, const Labels& y, const std::vector<std::size_t>& idx, double C, double gamma) {
    std::vector<double> ys(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) ys[r] = y[idx[r]] ? 1.0 : -1.0;
    return svm_train(take_rows(X, idx), ys, C, gamma);
}

} // namespace

double rbf_kernel(std::span<const double> u, std::span<const double> v, double gamma) {
    if (u.size() != v.size())
        throw ShapeError("rbf_kernel: dimensions " + std::to_string(u.size()) + " and " + std::to_string(v.size()));
    if (!(gamma > 0.0)) throw std::invalid_argument("rbf_kernel: gamma must be > 0");
    double d2 = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) d2 += (u[i] - v[i]) * (u[i] - v[i]);
    return std::exp(-gamma * d2);
}

Scaler Scaler::fit(const Tensor& X) {
    const std::size_t n = X.dim(0), p = X.dim(1);
    Scaler s;
    s.mean.assign(p, 0.0);
    s.scale.assign(p, 1.0);
    for (std::size_t j = 0; j < p; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += X[i * p + j];
        m /= double(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) ss += (X[i * p + j] - m) * (X[i * p + j] - m);
        const double sd = std::sqrt(ss / double(n));
        s.mean[j] = m;
        if (sd > 1e-12 * std::max(1.0, std::abs(m))) s.scale[j] = sd;
    }
    return s;
}

Tensor Scaler::apply(const Tensor& X) const {
    if (X.rank() != 2 || X.dim(1) != mean.size())
        throw ShapeError("scaler: expected (n," + std::to_string(mean.size()) + "), got " + shape_str(X.shape()));
    Tensor out = X;
    const std::size_t p = mean.size();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - mean[i % p]) / scale[i % p];
    return out;
}

double SvmModel::decision(std::span<const double> x) const {
    double f = bias;
    for (std::size_t s = 0; s < coef.size(); ++s) f += coef[s] * rbf_kernel(row(support, s), x, gamma);
    return f;
}

SvmModel svm_train(const Tensor& X, const std::vector<double>& y, double C, double gamma, double tol,
                   std::size_t max_iter) {
    if (X.rank() != 2 || X.dim(0) != y.size())
        throw ShapeError("svm_train: X " + shape_str(X.shape()) + " with " + std::to_string(y.size()) + " labels");
    if (!(C > 0.0)) throw std::invalid_argument("svm_train: C must be > 0");
    if (!(gamma > 0.0)) throw std::invalid_argument("svm_train: gamma must be > 0");
    const std::size_t n = y.size();
    bool pos = false, neg = false;
    for (double v : y) {
        if (v != 1.0 && v != -1.0) throw std::invalid_argument("svm_train: labels must be -1 or +1");
        (v > 0 ? pos : neg) = true;
    }
    if (!pos || !neg) throw std::invalid_argument("svm_train: both classes must be present");

    std::vector<double> K(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) K[i * n + j] = K[j * n + i] = rbf_kernel(row(X, i), row(X, j), gamma);

    std::vector<double> alpha(n, 0.0), G(n, -1.0);
    auto in_up = [&](std::size_t t) { return y[t] > 0 ? alpha[t] < C : alpha[t] > 0; };
    auto in_low = [&](std::size_t t) { return y[t] > 0 ? alpha[t] > 0 : alpha[t] < C; };

    SvmModel m;
    m.C = C;
    m.gamma = gamma;
    for (m.iterations = 0; m.iterations < max_iter; ++m.iterations) {
        std::size_t i = n, j = n;
        double gmax = -std::numeric_limits<double>::infinity(), gmin = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < n; ++t) {
            const double v = -y[t] * G[t];
            if (in_up(t) && v > gmax) {
                gmax = v;
                i = t;
            }
            if (in_low(t) && v < gmin) {
                gmin = v;
                j = t;
            }
        }
        if (i == n || j == n || gmax - gmin < tol) {
            m.converged = true;
            break;
        }

        const double Kii = K[i * n + i], Kjj = K[j * n + j], Kij = K[i * n + j];
        const double old_i = alpha[i], old_j = alpha[j];
        if (y[i] != y[j]) {
            const double quad = std::max(Kii + Kjj + 2.0 * Kij, kTau);
            const double delta = (-G[i] - G[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0) {
                if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = diff; }
            } else {
                if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = -diff; }
            }
            if (diff > 0) {
                if (alpha[i] > C) { alpha[i] = C; alpha[j] = C - diff; }
            } else {
                if (alpha[j] > C) { alpha[j] = C; alpha[i] = C + diff; }
            }
        } else {
            const double quad = std::max(Kii + Kjj - 2.0 * Kij, kTau);
            const double delta = (G[i] - G[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > C) {
                if (alpha[i] > C) { alpha[i] = C; alpha[j] = sum - C; }
            } else {
                if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = sum; }
            }
            if (sum > C) {
                if (alpha[j] > C) { alpha[j] = C; alpha[i] = sum - C; }
            } else {
                if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = sum; }
            }
        }
        const double di = alpha[i] - old_i, dj = alpha[j] - old_j;
        for (std::size_t t = 0; t < n; ++t)
            G[t] += y[t] * (y[i] * K[i * n + t] * di + y[j] * K[j * n + t] * dj);
    }

    // b = -rho, rho averaged over free vectors or taken mid-range when none is free.
    double sum = 0.0, ub = std::numeric_limits<double>::infinity(), lb = -ub;
    std::size_t free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = y[t] * G[t];
        if (alpha[t] > 0 && alpha[t] < C) {
            sum += yg;
            ++free;
        } else if ((alpha[t] >= C) == (y[t] > 0)) {
            lb = std::max(lb, yg);
        } else {
            ub = std::min(ub, yg);
        }
    }
    const double rho = free > 0 ? sum / double(free) : 0.5 * (ub + lb);
    m.bias = -rho;
    m.alpha = alpha;
    m.y = y;

    std::vector<std::size_t> sv;
    for (std::size_t t = 0; t < n; ++t)
        if (alpha[t] > 0) sv.push_back(t);
    m.support = Tensor({std::max<std::size_t>(sv.size(), 1), X.dim(1)});
    for (std::size_t s = 0; s < sv.size(); ++s) {
        std::copy_n(row(X, sv[s]).begin(), X.dim(1), m.support.data().begin() + std::ptrdiff_t(s * X.dim(1)));
        m.coef.push_back(alpha[sv[s]] * y[sv[s]]);
    }
    return m;
}

double SvmStackModel::score(std::span<const double> x) const {
    Tensor one({1, x.size()}, std::vector<double>(x.begin(), x.end()));
    const Tensor xs = scaler.apply(one);
    double z = meta_b;
    for (std::size_t b = 0; b < bases.size(); ++b) z += meta_w[b] * sigmoid(bases[b].decision(xs.data()));
    return sigmoid(z);
}

SvmStackModel svm_stack_train(const Tensor& X, const Labels& y, const SvmStackConfig& cfg) {
    if (cfg.n_base < 1) throw std::invalid_argument("svm stack: n_base must be >= 1");
    if (cfg.inner_folds < 2) throw std::invalid_argument("svm stack: inner_folds must be >= 2");
    if (!(cfg.meta_lr >= 0.0)) throw std::invalid_argument("svm stack: meta_lr must be >= 0");
    if (X.rank() != 2 || X.dim(0) != y.size())
        throw ShapeError("svm stack: X " + shape_str(X.shape()) + " with " + std::to_string(y.size()) + " labels");
    const std::size_t n = y.size();
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t(0));
    if (!both_classes(y, all)) throw std::invalid_argument("svm stack: both classes must be present");

    SvmStackModel m;
    m.config = cfg;
    m.scaler = Scaler::fit(X);
    const Tensor Xs = m.scaler.apply(X);
    if (cfg.gamma > 0.0) {
        m.gamma = cfg.gamma;
    } else {
        const double mean = Xs.sum() / double(Xs.size());
        double var = 0.0;
        for (double v : Xs.data()) var += (v - mean) * (v - mean);
        var /= double(Xs.size());
        m.gamma = var > 0.0 ? 1.0 / (double(X.dim(1)) * var) : 1.0;
    }

    // Out-of-fold meta features: fold f holds samples whose position in a
    // seeded shuffle is congruent to f, separately per class.
    const std::size_t folds = std::min(cfg.inner_folds, n);
    std::vector<std::size_t> fold_of(n);
    {
        Rng rng(derive_seed(cfg.seed, 0xF01D));
        for (int cls = 0; cls < 2; ++cls) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < n; ++i)
                if (y[i] == cls) members.push_back(i);
            std::shuffle(members.begin(), members.end(), rng.engine());
            for (std::size_t k = 0; k < members.size(); ++k) fold_of[members[k]] = k % folds;
        }
    }
    std::vector<std::vector<double>> Z(n, std::vector<double>(cfg.n_base, 0.5));
    for (std::size_t f = 0; f < folds; ++f) {
        std::vector<std::size_t> train_idx, held;
        for (std::size_t i = 0; i < n; ++i) (fold_of[i] == f ? held : train_idx).push_back(i);
        if (held.empty() || !both_classes(y, train_idx)) continue;
        for (std::size_t b = 0; b < cfg.n_base; ++b) {
            const auto idx = bootstrap(y, train_idx, derive_seed(cfg.seed, 1 + f, b));
            const SvmModel base = train_base(Xs, y, idx, cfg.C, m.gamma);
            for (std::size_t i : held) Z[i][b] = sigmoid(base.decision(row(Xs, i)));
        }
    }

    for (std::size_t b = 0; b < cfg.n_base; ++b)
        m.bases.push_back(train_base(Xs, y, bootstrap(y, all, derive_seed(cfg.seed, 0, b)), cfg.C, m.gamma));

    // Meta logistic regression starts at the mean-vote rule and takes full-batch gradient steps.
    m.meta_w.assign(cfg.n_base, kMetaInitGain / double(cfg.n_base));
    m.meta_b = -0.5 * kMetaInitGain;
    for (std::size_t epoch = 0; epoch < cfg.meta_epochs; ++epoch) {
        std::vector<double> gw(cfg.n_base, 0.0);
        double gb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double z = m.meta_b;
            for (std::size_t b = 0; b < cfg.n_base; ++b) z += m.meta_w[b] * Z[i][b];
            const double err = sigmoid(z) - double(y[i]);
            for (std::size_t b = 0; b < cfg.n_base; ++b) gw[b] += err * Z[i][b];
            gb += err;
        }
        for (std::size_t b = 0; b < cfg.n_base; ++b) m.meta_w[b] -= cfg.meta_lr * gw[b] / double(n);
        m.meta_b -= cfg.meta_lr * gb / double(n);
    }
    return m;
}

} // namespace lvdiag::clf
