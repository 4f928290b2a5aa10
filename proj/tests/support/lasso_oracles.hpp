#pragma once

// Reference LASSO solvers written independently of the coordinate-descent fit.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace lvdiag::oracle {

/// Column-standardized design (population variance) and centered labels.
struct Design {
    Eigen::MatrixXd Xs;
    Eigen::VectorXd yc;
    double ybar = 0.0;
};

inline Design make_design(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    Design d;
    const double n = double(X.rows());
    d.Xs = X;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double m = X.col(j).mean();
        const double sd = std::sqrt((X.col(j).array() - m).square().sum() / n);
        d.Xs.col(j) = (X.col(j).array() - m) / sd;
    }
    d.ybar = y.mean();
    d.yc = y.array() - d.ybar;
    return d;
}

/// Unpenalized least squares with intercept via the normal equations.
inline Eigen::VectorXd normal_equations(const Design& d) {
    const Eigen::MatrixXd G = d.Xs.transpose() * d.Xs;
    return G.ldlt().solve(d.Xs.transpose() * d.yc);
}

inline double lasso_objective(const Design& d, const Eigen::VectorXd& w, double alpha) {
    const double n = double(d.Xs.rows());
    return (d.yc - d.Xs * w).squaredNorm() / (2.0 * n) + alpha * w.lpNorm<1>();
}

/// Accelerated proximal gradient (FISTA) on the centered problem.
inline Eigen::VectorXd proximal_gradient(const Design& d, double alpha, double tol = 1e-14,
                                         int max_iter = 2000000) {
    const double n = double(d.Xs.rows());
    const Eigen::MatrixXd G = d.Xs.transpose() * d.Xs / n;
    const Eigen::VectorXd c = d.Xs.transpose() * d.yc / n;
    const double L = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(G).eigenvalues().maxCoeff();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d.Xs.cols()), z = w, prev = w;
    double t = 1.0;
    for (int it = 0; it < max_iter; ++it) {
        const Eigen::VectorXd step = z - (G * z - c) / L;
        for (Eigen::Index j = 0; j < w.size(); ++j) {
            const double a = std::abs(step[j]) - alpha / L;
            w[j] = a > 0.0 ? std::copysign(a, step[j]) : 0.0;
        }
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        z = w + ((t - 1.0) / t_next) * (w - prev);
        t = t_next;
        if ((w - prev).lpNorm<Eigen::Infinity>() < tol && it > 10) break;
        prev = w;
    }
    return w;
}

/// Largest KKT violation of the standardized LASSO problem at w.
inline double kkt_violation(const Design& d, const Eigen::VectorXd& w, double alpha) {
    const double n = double(d.Xs.rows());
    const Eigen::VectorXd grad = d.Xs.transpose() * (d.Xs * w - d.yc) / n;
    double worst = 0.0;
    for (Eigen::Index j = 0; j < w.size(); ++j) {
        const double v = w[j] != 0.0 ? std::abs(grad[j] + alpha * (w[j] > 0 ? 1.0 : -1.0))
                                     : std::max(0.0, std::abs(grad[j]) - alpha);
        worst = std::max(worst, v);
    }
    return worst;
}

} // namespace lvdiag::oracle
