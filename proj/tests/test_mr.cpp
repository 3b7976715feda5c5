#include <catch2/catch_amalgamated.hpp>

#include "ivsel/mr.hpp"

using namespace ivsel;

namespace {

// one-sample MR draw: single normal instrument score, optional missingness
struct MrDraw {
    Dataset data;
};

Dataset make_mr_single(RngStream& s, int n, double theta, double beta_r, double delta_r,
                       double alpha_r, bool mask_exposure, bool mask_outcome) {
    Dataset data;
    data.covariates.resize(n, 1);
    data.covariates_full.resize(n, 1);
    data.instruments.resize(n, 1);
    data.variants.resize(n, 1);
    data.outcome.resize(n);
    data.outcome_full.resize(n);
    data.selection.resize(n);
    const double beta_x = std::sqrt(2.0 / 19.0);
    for (int i = 0; i < n; ++i) {
        const double g = s.normal();
        const double z = s.normal();
        const double u = s.normal();
        const double x = beta_x * g + u + s.normal();
        const double y = theta * x + u + s.normal();
        const int r = s.bernoulli(expit(alpha_r + beta_r * x + 0.5 * z + delta_r * y));
        data.variants(i, 0) = g;
        data.instruments(i, 0) = z;
        data.covariates_full(i, 0) = x;
        data.outcome_full[i] = y;
        data.selection[i] = r;
        data.covariates(i, 0) = (mask_exposure && r == 0)
                                    ? std::numeric_limits<double>::quiet_NaN()
                                    : x;
        data.outcome[i] = (mask_outcome && r == 0) ? std::numeric_limits<double>::quiet_NaN() : y;
    }
    data.exposure_missing = mask_exposure;
    data.outcome_missing = mask_outcome;
    data.default_names();
    return data;
}

Dataset make_mr_complete(RngStream& s, int n, double theta, int K) {
    Dataset data;
    data.covariates.resize(n, 1);
    data.instruments.resize(n, 1);
    data.variants.resize(n, K);
    data.outcome.resize(n);
    data.selection = VectorXi::Ones(n);
    std::vector<double> freqs(K), betas(K);
    for (int j = 0; j < K; ++j) {
        freqs[j] = s.uniform(0.1, 0.9);
        betas[j] = 0.2;
    }
    for (int i = 0; i < n; ++i) {
        double x = s.normal();
        for (int j = 0; j < K; ++j) {
            data.variants(i, j) = s.binomial2(freqs[j]);
            x += betas[j] * data.variants(i, j);
        }
        const double u = s.normal();
        x += u;
        data.covariates(i, 0) = x;
        data.instruments(i, 0) = s.normal();
        data.outcome[i] = theta * x + u + s.normal();
    }
    data.default_names();
    return data;
}

}  // namespace

TEST_CASE("wald ratio reference values") {
    const auto a = wald_ratio(1.0, 0.0, 0.2, 0.05);
    CHECK(a.theta == Catch::Approx(0.2).margin(1e-12));
    CHECK(a.se == Catch::Approx(0.05).margin(1e-12));

    const auto b = wald_ratio(1.0, 0.1, 0.2, 0.05);
    CHECK(b.se == Catch::Approx(0.053852).margin(1e-6));

    const auto c = wald_ratio(2.0, 0.4, 0.0, 0.9);
    CHECK(c.theta == 0.0);

    CHECK_THROWS_AS(wald_ratio(0.0, 0.1, 0.2, 0.05), NumericError);
}

TEST_CASE("wald se is never below the first-order term") {
    RngStream s(300, 0);
    for (int i = 0; i < 200; ++i) {
        const double bx = s.uniform(0.05, 2.0) * (s.bernoulli(0.5) ? 1.0 : -1.0);
        const double sx = s.uniform(0.001, 0.5);
        const double by = s.uniform(-1.0, 1.0);
        const double sy = s.uniform(0.001, 0.5);
        const auto est = wald_ratio(bx, sx, by, sy);
        CHECK(est.se >= sy / std::abs(bx) - 1e-12);
    }
}

TEST_CASE("weak denominator warning") {
    const auto est = wald_ratio(0.15, 0.1, 0.2, 0.05);
    REQUIRE_FALSE(est.warnings.empty());
    const auto ok = wald_ratio(1.0, 0.1, 0.2, 0.05);
    CHECK(ok.warnings.empty());
}

TEST_CASE("ivw reference behaviour") {
    SummaryStats one;
    one.variant = {"v1"};
    one.bx.resize(1);
    one.sx.resize(1);
    one.by.resize(1);
    one.sy.resize(1);
    one.bx << 1.0;
    one.sx << 0.1;
    one.by << 0.2;
    one.sy << 0.05;
    const auto est1 = ivw(one);
    CHECK(est1.theta == Catch::Approx(0.2).margin(1e-12));
    CHECK(est1.se == Catch::Approx(0.05).margin(1e-12));

    SummaryStats two;
    two.variant = {"v1", "v2"};
    two.bx.resize(2);
    two.sx.resize(2);
    two.by.resize(2);
    two.sy.resize(2);
    two.bx << 1.0, 1.0;
    two.sx << 0.1, 0.1;
    two.by << 0.2, 0.2;
    two.sy << 0.05, 0.05;
    const auto est2 = ivw(two);
    CHECK(est2.theta == Catch::Approx(est1.theta).margin(1e-12));
    CHECK(est2.se == Catch::Approx(est1.se / std::sqrt(2.0)).margin(1e-12));
}

TEST_CASE("ivw invariances: reordering and joint sign flips") {
    RngStream s(301, 0);
    SummaryStats stats;
    const int K = 6;
    stats.bx.resize(K);
    stats.sx.resize(K);
    stats.by.resize(K);
    stats.sy.resize(K);
    for (int j = 0; j < K; ++j) {
        stats.variant.push_back("v" + std::to_string(j));
        stats.bx[j] = s.uniform(0.1, 0.4);
        stats.sx[j] = s.uniform(0.01, 0.1);
        stats.by[j] = s.uniform(-0.1, 0.2);
        stats.sy[j] = s.uniform(0.01, 0.1);
    }
    const auto base = ivw(stats);

    SummaryStats reversed = stats;
    std::reverse(reversed.variant.begin(), reversed.variant.end());
    reversed.bx = stats.bx.reverse();
    reversed.sx = stats.sx.reverse();
    reversed.by = stats.by.reverse();
    reversed.sy = stats.sy.reverse();
    const auto rev = ivw(reversed);
    CHECK(rev.theta == Catch::Approx(base.theta).margin(1e-12));
    CHECK(rev.se == Catch::Approx(base.se).margin(1e-12));

    SummaryStats flipped = stats;
    flipped.bx[2] = -stats.bx[2];
    flipped.by[2] = -stats.by[2];
    const auto flip = ivw(flipped);
    CHECK(flip.theta == Catch::Approx(base.theta).margin(1e-12));
    CHECK(flip.se == Catch::Approx(base.se).margin(1e-12));

    SummaryStats bad = stats;
    bad.sy[1] = 0.0;
    CHECK_THROWS_AS(ivw(bad), DataError);
}

TEST_CASE("just-identified identity: tsls = wald = ivw at K = 1") {
    RngStream s(302, 0);
    Dataset data = make_mr_complete(s, 3000, 0.2, 1);

    const auto ax = adjusted_association(data, MrVariable::exposure, 0, Adjuster::cca);
    const auto ay = adjusted_association(data, MrVariable::outcome, 0, Adjuster::cca);
    const auto wald = wald_ratio(ax.b, ax.s, ay.b, ay.s);

    const auto two_stage = tsls(data, Adjuster::cca, RngStream(1, 1));

    SummaryStats stats;
    stats.variant = {"g1"};
    stats.bx.resize(1);
    stats.sx.resize(1);
    stats.by.resize(1);
    stats.sy.resize(1);
    stats.bx << ax.b;
    stats.sx << ax.s;
    stats.by << ay.b;
    stats.sy << ay.s;
    const auto combined = ivw(stats);

    CHECK(two_stage.theta == Catch::Approx(wald.theta).margin(1e-10));
    CHECK(combined.theta == Catch::Approx(wald.theta).margin(1e-10));
}

TEST_CASE("fall-through: adjusters agree with OLS when the target is complete") {
    RngStream s(303, 0);
    Dataset data = make_mr_single(s, 5000, 0.2, 0.0, 1.0, 0.0, false, true);
    // exposure side fully observed -> every adjuster reduces to OLS
    const auto ols = adjusted_association(data, MrVariable::exposure, 0, Adjuster::cca);
    for (auto adj : {Adjuster::ipw, Adjuster::heckman, Adjuster::ttw, Adjuster::oracle}) {
        const auto alt = adjusted_association(data, MrVariable::exposure, 0, adj);
        CHECK(alt.b == Catch::Approx(ols.b).margin(1e-12));
        CHECK(alt.s == Catch::Approx(ols.s).margin(1e-12));
    }
}

TEST_CASE("heckman-adjusted wald recovers theta on one large draw") {
    RngStream s(304, 0);
    Dataset data = make_mr_single(s, 60000, 0.2, 0.5, 0.5, 0.0, true, true);
    const auto ax = adjusted_association(data, MrVariable::exposure, 0, Adjuster::heckman);
    const auto ay = adjusted_association(data, MrVariable::outcome, 0, Adjuster::heckman);
    REQUIRE(ax.converged);
    REQUIRE(ay.converged);
    const auto est = wald_ratio(ax.b, ax.s, ay.b, ay.s);
    CHECK(est.theta == Catch::Approx(0.2).margin(0.05));

    const auto cx = adjusted_association(data, MrVariable::exposure, 0, Adjuster::cca);
    const auto cy = adjusted_association(data, MrVariable::outcome, 0, Adjuster::cca);
    const auto cca_est = wald_ratio(cx.b, cx.s, cy.b, cy.s);
    // collider bias pushes the complete-case ratio far below the truth
    CHECK(cca_est.theta < 0.12);
}

TEST_CASE("summary statistics with the oracle adjuster reproduce per-variant OLS") {
    RngStream s(305, 0);
    Dataset dx = make_mr_complete(s, 2000, 0.2, 3);
    Dataset dy = make_mr_complete(s, 2000, 0.2, 3);
    const auto stats = selection_adjusted_summary_stats(dx, dy, Adjuster::oracle);
    REQUIRE(stats.k() == 3);
    for (int j = 0; j < 3; ++j) {
        const auto ox = adjusted_association(dx, MrVariable::exposure, j, Adjuster::cca);
        const auto oy = adjusted_association(dy, MrVariable::outcome, j, Adjuster::cca);
        CHECK(stats.bx[j] == Catch::Approx(ox.b).margin(1e-12));
        CHECK(stats.by[j] == Catch::Approx(oy.b).margin(1e-12));
    }
    // one-sample overload carries the overlap caveat
    const auto one = selection_adjusted_summary_stats(dx, Adjuster::oracle);
    CHECK(one.provenance.find("overlap") != std::string::npos);

    Dataset mismatched = dy;
    mismatched.variants.conservativeResize(mismatched.n(), 2);
    mismatched.variant_names.pop_back();
    CHECK_THROWS_AS(selection_adjusted_summary_stats(dx, mismatched, Adjuster::oracle), DataError);
}

TEST_CASE("bootstrap standard errors are deterministic in the stream") {
    RngStream s(306, 0);
    Dataset data = make_mr_single(s, 1500, 0.2, 0.0, 1.0, 0.0, false, true);
    TslsOptions opt;
    opt.n_bootstrap = 12;
    const auto a = tsls(data, Adjuster::heckman, RngStream(500, 7), opt);
    const auto b = tsls(data, Adjuster::heckman, RngStream(500, 7), opt);
    REQUIRE(a.n_bootstrap.has_value());
    CHECK(a.theta == b.theta);
    CHECK(a.se == b.se);
    const auto c = tsls(data, Adjuster::heckman, RngStream(500, 8), opt);
    CHECK(c.se != a.se);
}
