#include <catch2/catch_amalgamated.hpp>

#include "ivsel/special.hpp"

using namespace ivsel;

TEST_CASE("normal pdf and cdf reference values") {
    CHECK(normal_pdf(0.0) == Catch::Approx(0.39894228).epsilon(1e-7));
    CHECK(normal_cdf(0.0) == Catch::Approx(0.5).margin(1e-15));
    CHECK(normal_cdf(1.959964) == Catch::Approx(0.975).margin(1e-7));
    CHECK(normal_pdf(3.0) > 0.0);
}

TEST_CASE("cdf symmetry to 1e-12 over |x| <= 8") {
    for (double x = -8.0; x <= 8.0; x += 0.173) {
        CHECK(normal_cdf(x) + normal_cdf(-x) == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("quantile reference values and round trip") {
    CHECK(normal_quantile(0.975) == Catch::Approx(1.959964).margin(5e-7));
    CHECK(normal_quantile(0.5) == Catch::Approx(0.0).margin(1e-12));
    // q(1e-12), 50-digit oracle
    CHECK(normal_quantile(1e-12) == Catch::Approx(-7.0344838253).margin(1e-8));
    for (double x = -6.0; x <= 6.0; x += 0.1) {
        CHECK(normal_quantile(normal_cdf(x)) == Catch::Approx(x).margin(1e-9));
    }
    CHECK_THROWS_AS(normal_quantile(0.0), NumericError);
    CHECK_THROWS_AS(normal_quantile(1.0), NumericError);
    CHECK_THROWS_AS(normal_quantile(-0.5), NumericError);
}

TEST_CASE("inverse Mills reference values") {
    // phi(0) / 0.5
    CHECK(inverse_mills(0.0) == Catch::Approx(0.7978846).epsilon(1e-6));
    // deep left tail: tiny but finite
    const double left = inverse_mills(-30.0);
    CHECK(left < 1e-100);
    CHECK(left > 0.0);
    CHECK(std::isfinite(left));
    // 50-digit oracle: phi(8)/(1 - Phi(8))
    CHECK(inverse_mills(8.0) == Catch::Approx(8.1213681122).epsilon(1e-9));
    CHECK(inverse_mills(5.0) == Catch::Approx(5.1865039671258).epsilon(1e-10));
    CHECK(inverse_mills(12.0) == Catch::Approx(12.082214175254).epsilon(1e-10));
}

TEST_CASE("inverse Mills is increasing and convex; excess over x vanishes") {
    double prev = inverse_mills(-8.0);
    double prev_diff = -1.0;
    bool first = true;
    for (double x = -7.9; x <= 8.0; x += 0.1) {
        const double cur = inverse_mills(x);
        CHECK(cur > prev);
        const double diff = cur - prev;
        if (!first) {
            CHECK(diff >= prev_diff - 1e-9);  // second difference >= 0
        }
        first = false;
        prev_diff = diff;
        prev = cur;
    }
    // lambda(x) - x decreases to 0 from above as x grows
    double prev_excess = inverse_mills(2.0) - 2.0;
    for (double x = 3.0; x <= 40.0; x += 1.0) {
        const double excess = inverse_mills(x) - x;
        CHECK(excess > 0.0);
        CHECK(excess < prev_excess);
        prev_excess = excess;
    }
    CHECK(prev_excess < 1e-3);
}

TEST_CASE("log normal cdf matches direct computation and stays finite") {
    for (double x = -4.5; x < 6.0; x += 0.3) {
        CHECK(normal_log_cdf(x) == Catch::Approx(std::log(normal_cdf(x))).epsilon(1e-10));
    }
    CHECK(std::isfinite(normal_log_cdf(-40.0)));
    CHECK(normal_log_cdf(-40.0) == Catch::Approx(-0.5 * 1600 - std::log(40.0) - kLogSqrt2Pi)
                                        .epsilon(1e-3));
}

TEST_CASE("bivariate normal cdf against 50-digit quadrature oracle") {
    CHECK(binormal_cdf(0.0, 0.0, 0.0) == Catch::Approx(0.25).margin(1e-10));
    CHECK(binormal_cdf(0.0, 0.0, 0.5) == Catch::Approx(0.333333333333).margin(1e-9));
    CHECK(binormal_cdf(1.0, 0.5, 0.3) == Catch::Approx(0.6093086778).margin(1e-9));
    CHECK(binormal_cdf(-0.7, 1.2, -0.6) == Catch::Approx(0.16790840375).margin(1e-9));
    CHECK(binormal_cdf(2.0, -1.0, 0.85) == Catch::Approx(0.158655253195).margin(1e-9));
    CHECK(binormal_cdf(0.3, 0.3, 0.999) == Catch::Approx(0.61110647409).margin(1e-8));
}

TEST_CASE("bivariate normal limit identities") {
    // independence factorizes
    CHECK(binormal_cdf(0.7, -0.3, 0.0) ==
          Catch::Approx(normal_cdf(0.7) * normal_cdf(-0.3)).margin(1e-10));
    // b -> inf marginalizes
    CHECK(binormal_cdf(0.9, 40.0, 0.4) == Catch::Approx(normal_cdf(0.9)).margin(1e-9));
    // comonotone and antithetic limits
    CHECK(binormal_cdf(0.4, 1.1, 1.0) == Catch::Approx(normal_cdf(0.4)).margin(1e-12));
    CHECK(binormal_cdf(0.4, 1.1, -1.0) ==
          Catch::Approx(std::max(0.0, normal_cdf(0.4) + normal_cdf(1.1) - 1.0)).margin(1e-12));
}

TEST_CASE("bivariate normal gradient matches finite differences") {
    const double a = 0.6, b = -0.4, rho = 0.35;
    const auto g = binormal_cdf_grad(a, b, rho);
    const double h = 1e-6;
    CHECK(g.da == Catch::Approx((binormal_cdf(a + h, b, rho) - binormal_cdf(a - h, b, rho)) /
                                (2 * h)).epsilon(1e-5));
    CHECK(g.db == Catch::Approx((binormal_cdf(a, b + h, rho) - binormal_cdf(a, b - h, rho)) /
                                (2 * h)).epsilon(1e-5));
    CHECK(g.drho == Catch::Approx((binormal_cdf(a, b, rho + h) - binormal_cdf(a, b, rho - h)) /
                                  (2 * h)).epsilon(1e-4));
}

TEST_CASE("expit/logit round trip and log1pexp tails") {
    for (double x : {-20.0, -3.0, 0.0, 1.7, 25.0}) {
        CHECK(logit(expit(x)) == Catch::Approx(x).epsilon(1e-9));
    }
    CHECK(log1pexp(50.0) == Catch::Approx(50.0).margin(1e-12));
    CHECK(log1pexp(-50.0) == Catch::Approx(std::exp(-50.0)).epsilon(1e-12));
}
