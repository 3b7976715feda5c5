#ifndef IVSEL_OPTIMIZE_HPP
#define IVSEL_OPTIMIZE_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "ivsel/common.hpp"

namespace ivsel {

struct OptimSettings {
    double grad_tol = 1e-6;   // scaled by (1 + |f|)
    double step_tol = 1e-9;
    int max_iter = 500;
    bool compute_hessian = true;
};

struct OptimResult {
    VectorXd argmin;
    double objective_value = std::numeric_limits<double>::quiet_NaN();
    MatrixXd hessian;
    bool converged = false;
    int iterations = 0;
    double gradient_norm = std::numeric_limits<double>::quiet_NaN();
    std::string note;
};

using ObjectiveFn = std::function<double(const VectorXd&)>;
using GradientFn = std::function<VectorXd(const VectorXd&)>;

/// Central-difference gradient, relative step cbrt(eps).
inline VectorXd fd_gradient(const ObjectiveFn& f, const VectorXd& x) {
    const double rel = std::cbrt(std::numeric_limits<double>::epsilon());
    VectorXd g(x.size());
    VectorXd xp = x;
    for (int i = 0; i < x.size(); ++i) {
        const double h = rel * std::max(1.0, std::abs(x[i]));
        const double xi = x[i];
        xp[i] = xi + h;
        const double fp = f(xp);
        xp[i] = xi - h;
        const double fm = f(xp);
        xp[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// Central second differences, relative step eps^(1/4); symmetrized.
inline MatrixXd fd_hessian(const ObjectiveFn& f, const VectorXd& x) {
    const int n = static_cast<int>(x.size());
    const double rel = std::pow(std::numeric_limits<double>::epsilon(), 0.25);
    VectorXd h(n);
    for (int i = 0; i < n; ++i) h[i] = rel * std::max(1.0, std::abs(x[i]));

    MatrixXd hess(n, n);
    const double f0 = f(x);
    VectorXd xp = x;
    for (int i = 0; i < n; ++i) {
        const double xi = x[i];
        xp[i] = xi + h[i];
        const double fp = f(xp);
        xp[i] = xi - h[i];
        const double fm = f(xp);
        xp[i] = xi;
        hess(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double xi = x[i], xj = x[j];
            xp[i] = xi + h[i];
            xp[j] = xj + h[j];
            const double fpp = f(xp);
            xp[j] = xj - h[j];
            const double fpm = f(xp);
            xp[i] = xi - h[i];
            const double fmm = f(xp);
            xp[j] = xj + h[j];
            const double fmp = f(xp);
            xp[i] = xi;
            xp[j] = xj;
            hess(i, j) = hess(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
        }
    }
    return 0.5 * (hess + hess.transpose());
}

namespace detail {

inline OptimResult bfgs_core(const ObjectiveFn& f, const GradientFn& grad, VectorXd x,
                             const OptimSettings& settings) {
    const int n = static_cast<int>(x.size());
    OptimResult result;

    double fx = f(x);
    if (!std::isfinite(fx)) {
        result.argmin = x;
        result.note = "objective not finite at start";
        return result;
    }
    VectorXd g = grad(x);

    MatrixXd H = MatrixXd::Identity(n, n);
    bool restarted = false;
    int iter = 0;

    auto grad_converged = [&](double fval, const VectorXd& gv) {
        return gv.norm() <= settings.grad_tol * (1.0 + std::abs(fval));
    };

    while (iter < settings.max_iter) {
        if (grad_converged(fx, g)) {
            result.converged = true;
            break;
        }
        ++iter;

        VectorXd p = -(H * g);
        double slope = g.dot(p);
        if (!(slope < 0.0) || !p.allFinite()) {
            H = MatrixXd::Identity(n, n);
            p = -g;
            slope = g.dot(p);
        }

        // Backtracking Armijo search; non-finite trial values just shrink the step.
        double alpha = 1.0;
        double f_new = fx;
        VectorXd x_new = x;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = x + alpha * p;
            f_new = f(x_new);
            if (std::isfinite(f_new) && f_new <= fx + 1e-4 * alpha * slope) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }

        const double step_norm = accepted ? (alpha * p.norm()) : 0.0;
        if (!accepted || step_norm <= settings.step_tol * (1.0 + x.norm())) {
            if (!restarted) {
                restarted = true;
                for (int i = 0; i < n; ++i) {
                    x[i] += 1e-4 * (1.0 + std::abs(x[i])) * ((i % 2 == 0) ? 1.0 : -1.0);
                }
                fx = f(x);
                if (!std::isfinite(fx)) {
                    result.note = "objective not finite after restart";
                    break;
                }
                g = grad(x);
                H = MatrixXd::Identity(n, n);
                continue;
            }
            result.note = accepted ? "step below tolerance" : "line search failed";
            result.converged = grad_converged(fx, g);
            break;
        }

        VectorXd g_new = grad(x_new);
        VectorXd s = x_new - x;
        VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const double rho = 1.0 / sy;
            MatrixXd I = MatrixXd::Identity(n, n);
            MatrixXd A = I - rho * s * y.transpose();
            H = A * H * A.transpose() + rho * s * s.transpose();
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }

    if (iter >= settings.max_iter && !result.converged) {
        result.converged = grad_converged(fx, g);
        if (!result.converged) result.note = "iteration cap exceeded";
    }

    result.argmin = x;
    result.objective_value = fx;
    result.iterations = iter;
    result.gradient_norm = g.norm();
    if (settings.compute_hessian) result.hessian = fd_hessian(f, x);
    return result;
}

}  // namespace detail

/// Quasi-Newton minimization with central finite-difference gradients.
inline OptimResult minimize(const ObjectiveFn& f, const VectorXd& start,
                            const OptimSettings& settings = {}) {
    return detail::bfgs_core(f, [&f](const VectorXd& x) { return fd_gradient(f, x); }, start,
                             settings);
}

/// Same search with a caller-supplied gradient; used on hot paths where the
/// likelihood gradient is available in closed form. The reported Hessian is
/// still the central-difference one.
inline OptimResult minimize(const ObjectiveFn& f, const GradientFn& grad, const VectorXd& start,
                            const OptimSettings& settings = {}) {
    return detail::bfgs_core(f, grad, start, settings);
}

}  // namespace ivsel

#endif
