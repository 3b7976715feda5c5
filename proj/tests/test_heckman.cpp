#include <catch2/catch_amalgamated.hpp>

#include "ivsel/heckman.hpp"
#include "test_helpers.hpp"

using namespace ivsel;
using ivsel_test::make_baseline;

namespace {

// independent errors in the selection equation => sigma12 = 0
Dataset make_uncorrelated_selection(RngStream& s, int n) {
    Dataset data;
    data.covariates.resize(n, 1);
    data.instruments.resize(n, 1);
    data.outcome.resize(n);
    data.outcome_full.resize(n);
    data.selection.resize(n);
    for (int i = 0; i < n; ++i) {
        const double x = s.normal();
        const double z = s.normal();
        const double y = 1.0 + 0.1 * x + s.normal();
        const double latent = 0.3 + 0.5 * x + 0.6 * z + s.normal();  // independent of eps
        const int r = latent > 0.0 ? 1 : 0;
        data.covariates(i, 0) = x;
        data.instruments(i, 0) = z;
        data.outcome_full[i] = y;
        data.outcome[i] = r ? y : std::numeric_limits<double>::quiet_NaN();
        data.selection[i] = r;
    }
    data.outcome_missing = true;
    data.default_names();
    return data;
}

}  // namespace

TEST_CASE("two-step: zero error correlation gives a null Mills coefficient") {
    RngStream s(100, 0);
    Dataset data = make_uncorrelated_selection(s, 40000);
    const auto ts = heckman_two_step(data);
    const double mills = ts.fit.estimate("mills");
    const double mills_se = ts.fit.std_error("mills");
    CHECK(std::abs(mills) < 3.5 * mills_se);
    const auto cca = fit_cca(data, Family::linear);
    CHECK(ts.fit.estimate("x1") == Catch::Approx(cca.estimate("x1")).margin(0.02));
}

TEST_CASE("two-step with everything selected degrades to OLS with a warning") {
    RngStream s(101, 0);
    Dataset data = ivsel_test::make_complete(s, 400, 1.0, 0.1);
    const auto ts = heckman_two_step(data);
    const auto ols = fit_ols(data);
    CHECK(ts.fit.estimate("x1") == Catch::Approx(ols.estimate("x1")).margin(1e-10));
    REQUIRE_FALSE(ts.fit.warnings.empty());
}

TEST_CASE("mle recovers the baseline slope on one large draw") {
    RngStream s(102, 0);
    Dataset data = make_baseline(s, {.n = 100000});
    const auto fit = heckman_mle(data);
    REQUIRE(fit.converged);
    CHECK(fit.estimate("x1") == Catch::Approx(0.1).margin(0.025));
    // two-step and MLE agree within joint uncertainty
    const auto ts = heckman_two_step(data);
    CHECK(std::abs(fit.estimate("x1") - ts.fit.estimate("x1")) <
          3.0 * std::max(fit.std_error("x1"), ts.fit.std_error("x1")));
    // log-likelihood at the MLE dominates the two-step start
    detail::HeckmanDesigns d = detail::heckman_designs(data);
    detail::HeckmanLikelihood lik(d);
    CHECK(-fit.loglik.value() <= lik.value(ts.packed_start) + 1e-6);
    // reported covariance is symmetric positive definite
    Eigen::LLT<MatrixXd> llt(fit.covariance);
    CHECK(llt.info() == Eigen::Success);
    CHECK((fit.covariance - fit.covariance.transpose()).norm() < 1e-10);
}

TEST_CASE("mle with rho fixed at zero equals complete-case OLS") {
    RngStream s(103, 0);
    Dataset data = make_baseline(s, {.n = 4000});
    HeckmanOptions opt;
    opt.fix_rho = true;
    const auto fixed = heckman_mle(data, opt);
    REQUIRE(fixed.converged);
    const auto cca = fit_cca(data, Family::linear);
    CHECK(fixed.estimate("x1") == Catch::Approx(cca.estimate("x1")).margin(1e-6));
    CHECK(fixed.estimate("(intercept)") ==
          Catch::Approx(cca.estimate("(intercept)")).margin(1e-6));
}

TEST_CASE("score at the mle is numerically null") {
    RngStream s(104, 0);
    Dataset data = make_baseline(s, {.n = 6000});
    const auto fit = heckman_mle(data);
    REQUIRE(fit.converged);
    detail::HeckmanDesigns d = detail::heckman_designs(data);
    detail::HeckmanLikelihood lik(d);
    VectorXd packed(lik.dim());
    const int p_out = 2, p_sel = 3;
    packed << fit.estimates.head(p_out + p_sel), std::log(fit.estimate("sigma")),
        std::atanh(fit.estimate("rho"));
    const VectorXd g = fd_gradient([&lik](const VectorXd& th) { return lik.value(th); }, packed);
    CHECK(g.norm() < 1e-5 * (1.0 + std::abs(fit.loglik.value())));
}

TEST_CASE("analytic heckman gradient matches finite differences") {
    RngStream s(105, 0);
    Dataset data = make_baseline(s, {.n = 500});
    detail::HeckmanDesigns d = detail::heckman_designs(data);
    detail::HeckmanLikelihood lik(d);
    VectorXd theta(lik.dim());
    theta << 0.9, 0.15, -0.4, 0.4, 0.35, std::log(1.1), std::atanh(0.3);
    const VectorXd g_an = lik.gradient(theta);
    const VectorXd g_fd =
        fd_gradient([&lik](const VectorXd& th) { return lik.value(th); }, theta);
    CHECK((g_an - g_fd).norm() / g_fd.norm() < 1e-6);
}

TEST_CASE("missing instrument raises a configuration error") {
    RngStream s(106, 0);
    Dataset data = make_baseline(s, {.n = 300});
    data.instruments.resize(data.n(), 0);
    data.instrument_names.clear();
    CHECK_THROWS_AS(heckman_mle(data), ConfigError);
}

TEST_CASE("instrument duplicated as covariate raises the collinearity guard") {
    RngStream s(107, 0);
    Dataset data = make_baseline(s, {.n = 300});
    Dataset bad = data;
    bad.covariates.conservativeResize(bad.n(), 2);
    bad.covariates.col(1) = bad.instruments.col(0);
    bad.covariate_names.push_back("zcopy");
    for (int i = 0; i < bad.n(); ++i) {
        if (bad.selection[i] == 0) {
            // keep governed-missingness consistent for the new column
            bad.covariates(i, 1) = bad.instruments(i, 0);
        }
    }
    CHECK_THROWS_AS(heckman_mle(bad), ConfigError);
}

TEST_CASE("binary mle: independent errors reduce to the complete-case probit") {
    RngStream s(108, 0);
    const int n = 30000;
    Dataset data;
    data.covariates.resize(n, 1);
    data.instruments.resize(n, 1);
    data.outcome.resize(n);
    data.selection.resize(n);
    for (int i = 0; i < n; ++i) {
        const double x = s.normal();
        const double z = s.normal();
        const int y = s.bernoulli(normal_cdf(0.4 + 0.6 * x));
        const int r = s.bernoulli(normal_cdf(0.2 + 0.4 * x + 0.5 * z));  // rho = 0
        data.covariates(i, 0) = x;
        data.instruments(i, 0) = z;
        data.outcome[i] = r ? y : std::numeric_limits<double>::quiet_NaN();
        data.selection[i] = r;
    }
    data.outcome_missing = true;
    data.default_names();
    const auto fit = heckman_binary_mle(data);
    REQUIRE(fit.converged);
    const auto cca = fit_cca(data, Family::probit);
    CHECK(fit.estimate("x1") == Catch::Approx(cca.estimate("x1")).margin(0.05));
    CHECK(std::abs(fit.estimate("rho")) < 0.1);
}

TEST_CASE("binary heckman gradient matches finite differences") {
    RngStream s(109, 0);
    const int n = 400;
    Dataset data;
    data.covariates.resize(n, 1);
    data.instruments.resize(n, 1);
    data.outcome.resize(n);
    data.selection.resize(n);
    for (int i = 0; i < n; ++i) {
        const double x = s.normal();
        const double z = s.normal();
        const int y = s.bernoulli(normal_cdf(0.3 + 0.5 * x));
        const int r = s.bernoulli(normal_cdf(0.1 + 0.3 * x + 0.5 * z));
        data.covariates(i, 0) = x;
        data.instruments(i, 0) = z;
        data.outcome[i] = r ? y : std::numeric_limits<double>::quiet_NaN();
        data.selection[i] = r;
    }
    data.outcome_missing = true;
    data.default_names();
    detail::HeckmanDesigns d = detail::heckman_designs(data);
    detail::BinaryHeckmanLikelihood lik(d);
    VectorXd theta(lik.dim());
    theta << 0.25, 0.45, 0.1, 0.3, 0.4, std::atanh(0.2);
    VectorXd g_an(lik.dim());
    lik.eval(theta, &g_an);
    const VectorXd g_fd = fd_gradient(
        [&lik](const VectorXd& th) { return lik.eval(th, nullptr); }, theta);
    CHECK((g_an - g_fd).norm() / g_fd.norm() < 1e-5);
}
