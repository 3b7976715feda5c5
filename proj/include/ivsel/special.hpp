#ifndef IVSEL_SPECIAL_HPP
#define IVSEL_SPECIAL_HPP

#include <array>
#include <cmath>
#include <vector>

#include "ivsel/common.hpp"

namespace ivsel {

inline constexpr double kSqrt2 = 1.4142135623730951;
inline constexpr double kInvSqrt2Pi = 0.3989422804014327;
inline constexpr double kLogSqrt2Pi = 0.9189385332046727;

inline double normal_pdf(double x) {
    return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

inline double normal_log_pdf(double x) {
    return -0.5 * x * x - kLogSqrt2Pi;
}

inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / kSqrt2);
}

namespace detail {

// Mills ratio m(x) = (1 - Phi(x)) / phi(x) via the Laplace continued fraction,
// accurate for x > 5.
inline double mills_ratio_cf(double x) {
    double f = 0.0;
    for (int k = 60; k >= 1; --k) f = k / (x + f);
    return 1.0 / (x + f);
}

}  // namespace detail

/// Inverse Mills ratio phi(x) / (1 - Phi(x)), stable over the whole real line.
inline double inverse_mills(double x) {
    if (x > 5.0) return 1.0 / detail::mills_ratio_cf(x);
    // erfc stays well away from underflow for x <= 5.
    return normal_pdf(x) / (0.5 * std::erfc(x / kSqrt2));
}

/// log Phi(x) without underflow in the left tail.
inline double normal_log_cdf(double x) {
    if (x > -5.0) return std::log(0.5 * std::erfc(-x / kSqrt2));
    // Phi(x) = phi(x) * m(-x) with m the Mills ratio.
    return normal_log_pdf(x) + std::log(detail::mills_ratio_cf(-x));
}

/// phi(x) / Phi(x); the hazard of the reflected normal, = inverse_mills(-x).
inline double normal_hazard_lower(double x) {
    return inverse_mills(-x);
}

/// Standard normal quantile. Rational approximation (Acklam) with one Halley
/// refinement, giving close to machine precision.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw NumericError("normal_quantile: p must lie strictly in (0, 1)");
    }
    static constexpr std::array<double, 6> a = {
        -3.969683028665376e+01, 2.209460984245205e+02,  -2.759285104469687e+02,
        1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr std::array<double, 5> b = {
        -5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
        6.680131188771972e+01, -1.328068155288572e+01};
    static constexpr std::array<double, 6> c = {
        -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
        -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr std::array<double, 4> d = {7.784695709041462e-03, 3.224671290700398e-01,
                                                2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    double x;
    if (p < p_low) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        double q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    double e = normal_cdf(x) - p;
    double u = e / normal_pdf(x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

namespace detail {

struct GaussLegendreRule {
    std::vector<double> nodes;    // on (-1, 1)
    std::vector<double> weights;
};

// Nodes via Newton iteration on P_n; standard construction.
inline GaussLegendreRule make_gauss_legendre(int n) {
    GaussLegendreRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (x * p0 - p1) / (x * x - 1.0);
            double dx = p0 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        rule.weights[i] = 2.0 / ((1.0 - x * x) * pp * pp);
        rule.weights[n - 1 - i] = rule.weights[i];
    }
    return rule;
}

inline const GaussLegendreRule& gauss_legendre_33() {
    static const GaussLegendreRule rule = make_gauss_legendre(33);
    return rule;
}

inline const GaussLegendreRule& gauss_legendre_65() {
    static const GaussLegendreRule rule = make_gauss_legendre(65);
    return rule;
}

template <typename F>
double gl_integrate(const F& f, double lo, double hi, const GaussLegendreRule& rule) {
    if (hi <= lo) return 0.0;
    const double c = 0.5 * (hi + lo);
    const double h = 0.5 * (hi - lo);
    double sum = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        sum += rule.weights[i] * f(c + h * rule.nodes[i]);
    }
    return h * sum;
}

}  // namespace detail

/// Bivariate standard normal CDF P(T1 <= a, T2 <= b) with correlation rho.
/// Single quadrature of phi(t) * Phi((a - rho t)/sqrt(1 - rho^2)) over t <= b,
/// with the integration range split around the transition point so the rule
/// resolves steep Phi factors at high |rho|.
inline double binormal_cdf(double a, double b, double rho) {
    if (!(rho >= -1.0 && rho <= 1.0)) throw NumericError("binormal_cdf: |rho| must be <= 1");
    if (rho > 1.0 - 1e-12) return normal_cdf(std::min(a, b));
    if (rho < -1.0 + 1e-12) return std::max(0.0, normal_cdf(a) + normal_cdf(b) - 1.0);

    const double lim = 8.5;
    const double hi = std::min(b, lim);
    const double lo = -lim;
    if (hi <= lo) return 0.0;
    if (a >= lim) return normal_cdf(b);
    if (a <= -lim) return 0.0;

    const double s = std::sqrt(1.0 - rho * rho);
    auto integrand = [&](double t) { return normal_pdf(t) * normal_cdf((a - rho * t) / s); };

    std::vector<double> cuts = {lo, hi};
    if (std::abs(rho) > 1e-3) {
        const double t_star = a / rho;
        const double w = 8.0 * s / std::abs(rho);
        for (double cut : {t_star - w, t_star + w}) {
            if (cut > lo && cut < hi) cuts.push_back(cut);
        }
        std::sort(cuts.begin(), cuts.end());
    }

    const auto& coarse = detail::gauss_legendre_33();
    const auto& fine = detail::gauss_legendre_65();
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        double v33 = detail::gl_integrate(integrand, cuts[i], cuts[i + 1], coarse);
        if (cuts[i + 1] - cuts[i] > 2.0 || std::abs(rho) > 0.6) {
            double v65 = detail::gl_integrate(integrand, cuts[i], cuts[i + 1], fine);
            total += v65;
        } else {
            total += v33;
        }
    }
    return std::min(1.0, std::max(0.0, total));
}

struct BinormalGrad {
    double value;
    double da;
    double db;
    double drho;
};

/// Value and partial derivatives of binormal_cdf; the derivatives are in
/// closed form (only the value needs quadrature).
inline BinormalGrad binormal_cdf_grad(double a, double b, double rho) {
    BinormalGrad g;
    g.value = binormal_cdf(a, b, rho);
    const double s2 = std::max(1.0 - rho * rho, 1e-14);
    const double s = std::sqrt(s2);
    g.da = normal_pdf(a) * normal_cdf((b - rho * a) / s);
    g.db = normal_pdf(b) * normal_cdf((a - rho * b) / s);
    g.drho = std::exp(-(a * a - 2.0 * rho * a * b + b * b) / (2.0 * s2)) / (2.0 * M_PI * s);
    return g;
}

inline double expit(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) {
    return std::log(p / (1.0 - p));
}

/// log(1 + exp(x)) without overflow.
inline double log1pexp(double x) {
    if (x > 33.0) return x;
    if (x < -33.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

}  // namespace ivsel

#endif
