#include <catch2/catch_amalgamated.hpp>

#include "ivsel/rng.hpp"

using namespace ivsel;

TEST_CASE("identical (seed, index) reproduce bit-identical sequences") {
    RngStream a(20240601, 17);
    RngStream b(20240601, 17);
    for (int i = 0; i < 1000; ++i) {
        REQUIRE(a.next_u64() == b.next_u64());
    }
    RngStream c(20240601, 17);
    RngStream d(20240601, 17);
    for (int i = 0; i < 200; ++i) {
        REQUIRE(c.normal() == d.normal());
        REQUIRE(c.binomial2(0.3) == d.binomial2(0.3));
        REQUIRE(c.t(4) == d.t(4));
    }
}

TEST_CASE("distinct stream indices decorrelate") {
    RngStream a(7, 0);
    RngStream b(7, 1);
    int equal = 0;
    double sum_a = 0.0, sum_b = 0.0, sum_ab = 0.0, sum_a2 = 0.0, sum_b2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double ua = a.uniform();
        const double ub = b.uniform();
        if (ua == ub) ++equal;
        sum_a += ua;
        sum_b += ub;
        sum_ab += ua * ub;
        sum_a2 += ua * ua;
        sum_b2 += ub * ub;
    }
    CHECK(equal == 0);
    const double cov = sum_ab / n - (sum_a / n) * (sum_b / n);
    const double corr = cov / std::sqrt((sum_a2 / n - (sum_a / n) * (sum_a / n)) *
                                        (sum_b2 / n - (sum_b / n) * (sum_b / n)));
    CHECK(std::abs(corr) < 0.05);
}

TEST_CASE("substreams are deterministic and distinct from the parent") {
    RngStream parent(123, 5);
    RngStream s1 = parent.substream(1);
    RngStream s1_again = RngStream(123, 5).substream(1);
    RngStream s2 = parent.substream(2);
    CHECK(s1.next_u64() == s1_again.next_u64());
    RngStream p2(123, 5);
    CHECK(s2.next_u64() != p2.next_u64());
}

TEST_CASE("degenerate distribution parameters") {
    RngStream s(1, 1);
    VectorXd zeros = VectorXd::Zero(50);
    const VectorXi draws = sample_bernoulli(s, zeros);
    CHECK((draws.array() == 0).all());
    for (int i = 0; i < 50; ++i) CHECK(s.binomial2(1.0) == 2);
    for (int i = 0; i < 50; ++i) CHECK(s.binomial2(0.0) == 0);
    CHECK_THROWS_AS(s.bernoulli(1.5), ConfigError);
    CHECK_THROWS_AS(s.binomial2(-0.1), ConfigError);
    CHECK_THROWS_AS(s.lognormal(0.0, -1.0), ConfigError);
    CHECK_THROWS_AS(s.t(0), ConfigError);
    CHECK_THROWS_AS(s.uniform(2.0, 1.0), ConfigError);
    CHECK_THROWS_AS(s.poisson(-1.0), ConfigError);
}

TEST_CASE("log-normal mean over 1e6 draws matches exp(mu + sigma2/2)") {
    RngStream s(99, 3);
    const double sigma2 = 1.618034;  // golden-ratio variance, unit-variance log-normal
    double sum = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) sum += s.lognormal(0.0, sigma2);
    CHECK(sum / n == Catch::Approx(2.2456994).margin(0.02));
}

TEST_CASE("uniform stays inside the open interval and has the right mean") {
    RngStream s(5, 9);
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double u = s.uniform(-1.0, 3.0);
        REQUIRE(u > -1.0);
        REQUIRE(u < 3.0);
        sum += u;
    }
    CHECK(sum / 100000 == Catch::Approx(1.0).margin(0.02));
}

TEST_CASE("normal, t(4) and mixture moments") {
    RngStream s(77, 2);
    const int n = 200000;
    double m1 = 0.0, m2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = s.normal();
        m1 += z;
        m2 += z * z;
    }
    CHECK(m1 / n == Catch::Approx(0.0).margin(0.01));
    CHECK(m2 / n == Catch::Approx(1.0).margin(0.02));

    double t2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = s.t(4);
        t2 += v * v;
    }
    CHECK(t2 / n == Catch::Approx(2.0).margin(0.15));  // var of t(4) = 4/2

    std::vector<RngStream::MixtureComponent> comps = {{-2.0, 0.5, 0.25}, {2.0, 0.5, 0.75}};
    double mm = 0.0, mv = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = s.normal_mixture(comps);
        mm += v;
    }
    mm /= n;
    CHECK(mm == Catch::Approx(1.0).margin(0.02));
    CHECK_THROWS_AS(s.normal_mixture({{0.0, 1.0, 0.5}, {1.0, 1.0, 0.6}}), ConfigError);
}

TEST_CASE("poisson sampler mean/variance") {
    RngStream s(31, 4);
    const double lambda = 3.7;
    const int n = 200000;
    double m1 = 0.0, m2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double k = s.poisson(lambda);
        m1 += k;
        m2 += k * k;
    }
    m1 /= n;
    CHECK(m1 == Catch::Approx(lambda).margin(0.03));
    CHECK(m2 / n - m1 * m1 == Catch::Approx(lambda).margin(0.1));
    CHECK(s.poisson(0.0) == 0);
}
