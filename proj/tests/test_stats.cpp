#include <catch2/catch_amalgamated.hpp>

#include "sgdm/stats.hpp"

using namespace sgdm;
using namespace sgdm::stats;

TEST_CASE("paired t-test: equal inputs give p = 1") {
    std::vector<double> x = {1.0, 2.5, -3.0, 4.0};
    auto r = paired_t_test(x, x);
    CHECK(r.t == 0.0);
    CHECK(r.p == 1.0);
}

TEST_CASE("paired t-test matches the reference table on d = {1..5}") {
    std::vector<double> x = {1, 2, 3, 4, 5};
    std::vector<double> y(5, 0.0);
    auto r = paired_t_test(x, y);
    CHECK(r.t == Catch::Approx(4.2426406871).epsilon(1e-9));
    CHECK(r.p == Catch::Approx(0.0132355996).epsilon(1e-6));
}

TEST_CASE("paired t-test antisymmetry under swap") {
    std::vector<double> x = {3.0, 1.0, 4.0, 1.5, 9.2, 2.6};
    std::vector<double> y = {2.0, 2.0, 3.5, 2.5, 8.0, 3.0};
    auto a = paired_t_test(x, y);
    auto b = paired_t_test(y, x);
    CHECK(a.t == Catch::Approx(-b.t).margin(1e-12));
    CHECK(a.p == Catch::Approx(b.p).margin(1e-12));
}

TEST_CASE("paired t-test zero-variance conventions") {
    std::vector<double> x = {2, 3, 4};
    std::vector<double> y = {1, 2, 3};  // constant nonzero difference
    auto r = paired_t_test(x, y);
    CHECK(std::isinf(r.t));
    CHECK(r.t > 0);
    CHECK(r.p == 0.0);

    CHECK_THROWS_AS(paired_t_test({1, 2}, {1}), Error);
    CHECK_THROWS_AS(paired_t_test({1}, {1}), Error);
}

TEST_CASE("bh_fdr single p-value is unchanged") {
    auto r = bh_fdr({0.031}, 0.05);
    CHECK(r.adjusted[0] == Catch::Approx(0.031));
    CHECK(r.rejected[0]);
}

TEST_CASE("bh_fdr hand-evaluated step-up example") {
    auto r = bh_fdr({0.01, 0.02, 0.03, 0.04}, 0.05);
    for (double adj : r.adjusted) CHECK(adj == Catch::Approx(0.04).margin(1e-12));
    for (bool rej : r.rejected) CHECK(rej);
}

TEST_CASE("bh_fdr adjusted values are monotone in sorted order and >= raw") {
    std::vector<double> p = {0.2, 0.001, 0.9, 0.04, 0.04, 0.31, 0.0007};
    auto r = bh_fdr(p, 0.05);
    for (size_t i = 0; i < p.size(); ++i) CHECK(r.adjusted[i] >= p[i]);
    std::vector<size_t> order(p.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return p[a] < p[b]; });
    for (size_t i = 1; i < order.size(); ++i)
        CHECK(r.adjusted[order[i]] >= r.adjusted[order[i - 1]] - 1e-15);

    CHECK_THROWS_AS(bh_fdr({1.2}, 0.05), Error);
    CHECK_THROWS_AS(bh_fdr({-0.1}, 0.05), Error);
}

TEST_CASE("bootstrap CI collapses on constant data and is deterministic") {
    std::vector<double> c(20, 3.25);
    auto [lo, hi] = bootstrap_ci(c, 500, 0.95, 9);
    CHECK(lo == 3.25);
    CHECK(hi == 3.25);

    std::vector<double> x = {1, 2, 3, 4, 5, 6, 7, 8};
    auto a = bootstrap_ci(x, 1000, 0.95, 42);
    auto b = bootstrap_ci(x, 1000, 0.95, 42);
    CHECK(a == b);
    CHECK_THROWS_AS(bootstrap_ci(x, 50, 0.95, 1), Error);
    CHECK_THROWS_AS(bootstrap_ci({}, 500, 0.95, 1), Error);
}

TEST_CASE("bootstrap CI brackets the sample mean on symmetric data") {
    Rng rng(17);
    for (uint64_t seed = 0; seed < 8; ++seed) {
        std::vector<double> x;
        for (int i = 0; i < 40; ++i) x.push_back(rng.gaussian());
        double m = mean_of(x);
        auto [lo, hi] = bootstrap_ci(x, 1000, 0.95, seed);
        CHECK(lo <= m);
        CHECK(m <= hi);
    }
}

TEST_CASE("pearson r on exact linear relations") {
    std::vector<double> x = {1, 2, 3, 4, 5, 6};
    std::vector<double> y, z;
    for (double v : x) {
        y.push_back(2 * v + 1);
        z.push_back(-v);
    }
    auto a = pearson_r(x, y);
    CHECK(a.r == Catch::Approx(1.0).margin(1e-12));
    CHECK(a.p == Catch::Approx(0.0).margin(1e-12));
    auto b = pearson_r(x, z);
    CHECK(b.r == Catch::Approx(-1.0).margin(1e-12));
}

TEST_CASE("pearson r matches the direct covariance formula oracle") {
    Rng rng(23);
    std::vector<double> x, y;
    for (int i = 0; i < 50; ++i) {
        x.push_back(rng.gaussian());
        y.push_back(0.3 * x.back() + rng.gaussian());
    }
    auto res = pearson_r(x, y);
    double mx = mean_of(x), my = mean_of(y);
    double num = 0, dx2 = 0, dy2 = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        num += (x[i] - mx) * (y[i] - my);
        dx2 += (x[i] - mx) * (x[i] - mx);
        dy2 += (y[i] - my) * (y[i] - my);
    }
    CHECK(res.r == Catch::Approx(num / std::sqrt(dx2 * dy2)).margin(1e-12));

    std::vector<double> flat(10, 2.0);
    CHECK_THROWS_AS(pearson_r(flat, y), Error);
}

TEST_CASE("t distribution p-values cross-check reference values") {
    CHECK(t_two_tailed_p(2.0, 10) == Catch::Approx(0.0733880348).epsilon(1e-7));
    CHECK(t_two_tailed_p(-2.0, 10) == Catch::Approx(0.0733880348).epsilon(1e-7));
    CHECK(t_two_tailed_p(1.0, 3) == Catch::Approx(0.3910022190).epsilon(1e-7));
    CHECK(t_two_tailed_p(5.5, 30) == Catch::Approx(5.678573e-06).epsilon(1e-5));
}
