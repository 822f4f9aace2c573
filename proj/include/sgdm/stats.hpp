#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "sgdm/common.hpp"
#include "sgdm/tensor.hpp"

namespace sgdm::stats {

// Regularized incomplete beta I_x(a,b) via Lentz's continued fraction.
inline double beta_inc(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;

    bool flip = x > (a + 1.0) / (a + b + 2.0);
    if (flip) {
        std::swap(a, b);
        x = 1.0 - x;
    }

    constexpr double TINY = 1e-300;
    constexpr double EPS = 1e-14;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < TINY) d = TINY;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < TINY) d = TINY;
        c = 1.0 + aa / c;
        if (std::abs(c) < TINY) c = TINY;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < TINY) d = TINY;
        c = 1.0 + aa / c;
        if (std::abs(c) < TINY) c = TINY;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < EPS) break;
    }
    double front = std::exp(a * std::log(x) + b * std::log(1.0 - x) + std::lgamma(a + b) -
                            std::lgamma(a) - std::lgamma(b)) / a;
    double r = front * h;
    return flip ? 1.0 - r : r;
}

// two-tailed p for a t statistic with nu degrees of freedom
inline double t_two_tailed_p(double t, double nu) {
    if (std::isinf(t)) return 0.0;
    if (std::isnan(t)) fail_invalid("t statistic is NaN");
    return beta_inc(nu / 2.0, 0.5, nu / (nu + t * t));
}

struct TTestResult {
    double t = 0;
    double p = 1;
};

// Two-tailed paired t-test. Zero-variance differences follow the stated
// convention: all-zero -> (t=0, p=1); nonzero constant -> t = +/-inf, p = 0.
inline TTestResult paired_t_test(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size(), "paired_t_test: length mismatch");
    require(x.size() >= 2, "paired_t_test: need at least 2 pairs");
    size_t n = x.size();
    std::vector<double> d(n);
    for (size_t i = 0; i < n; ++i) d[i] = x[i] - y[i];
    double mean = mean_of(d);
    double ss = 0;
    for (double v : d) ss += (v - mean) * (v - mean);
    double sd = std::sqrt(ss / double(n - 1));
    if (sd == 0.0) {
        if (mean == 0.0) return {0.0, 1.0};
        return {mean > 0 ? std::numeric_limits<double>::infinity()
                         : -std::numeric_limits<double>::infinity(),
                0.0};
    }
    double t = mean / (sd / std::sqrt(double(n)));
    return {t, t_two_tailed_p(t, double(n - 1))};
}

struct FdrResult {
    std::vector<double> adjusted;  // original order
    std::vector<bool> rejected;    // adjusted <= q
};

// Benjamini-Hochberg step-up: p_(i) * m / i with monotone enforcement.
inline FdrResult bh_fdr(const std::vector<double>& p_values, double q) {
    for (double p : p_values)
        require(p >= 0.0 && p <= 1.0 && std::isfinite(p), "bh_fdr: p-values must be in [0,1]");
    size_t m = p_values.size();
    FdrResult out;
    out.adjusted.resize(m);
    out.rejected.resize(m);
    if (m == 0) return out;

    std::vector<size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return p_values[a] < p_values[b]; });

    std::vector<double> adj(m);
    for (size_t i = 0; i < m; ++i)
        adj[i] = std::min(1.0, p_values[order[i]] * double(m) / double(i + 1));
    for (size_t i = m - 1; i-- > 0;) adj[i] = std::min(adj[i], adj[i + 1]);

    for (size_t i = 0; i < m; ++i) {
        out.adjusted[order[i]] = adj[i];
        out.rejected[order[i]] = adj[i] <= q;
    }
    return out;
}

// percentile bootstrap CI of the mean, deterministic per seed
inline std::pair<double, double> bootstrap_ci(const std::vector<double>& x, int n_resamples,
                                              double level, uint64_t seed) {
    require(!x.empty(), "bootstrap_ci: empty sample");
    require(n_resamples >= 100, "bootstrap_ci: need at least 100 resamples");
    require(level > 0 && level < 1, "bootstrap_ci: level must be in (0,1)");
    Rng rng(seed);
    std::vector<double> means(static_cast<size_t>(n_resamples));
    for (int r = 0; r < n_resamples; ++r) {
        double s = 0;
        for (size_t i = 0; i < x.size(); ++i) s += x[rng.below(x.size())];
        means[size_t(r)] = s / double(x.size());
    }
    std::sort(means.begin(), means.end());
    auto quantile = [&](double qq) {
        double pos = qq * double(means.size() - 1);
        size_t lo = size_t(std::floor(pos));
        size_t hi = std::min(lo + 1, means.size() - 1);
        double frac = pos - double(lo);
        return means[lo] * (1 - frac) + means[hi] * frac;
    };
    double alpha = (1.0 - level) / 2.0;
    return {quantile(alpha), quantile(1.0 - alpha)};
}

struct PearsonResult {
    double r = 0;
    double p = 1;
};

inline PearsonResult pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size(), "pearson_r: length mismatch");
    require(x.size() >= 3, "pearson_r: need at least 3 points");
    size_t n = x.size();
    double mx = mean_of(x), my = mean_of(y);
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < n; ++i) {
        double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    require(sxx > 0 && syy > 0, "pearson_r: zero variance input");
    double r = sxy / std::sqrt(sxx * syy);
    r = std::clamp(r, -1.0, 1.0);
    double nu = double(n - 2);
    if (std::abs(r) >= 1.0) return {r, 0.0};
    double t = r * std::sqrt(nu / (1.0 - r * r));
    return {r, t_two_tailed_p(t, nu)};
}

inline double sample_sd(const std::vector<double>& x) {
    if (x.size() < 2) return 0.0;
    double m = mean_of(x);
    double ss = 0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / double(x.size() - 1));
}

inline double sem_of(const std::vector<double>& x) {
    if (x.size() < 2) return 0.0;
    return sample_sd(x) / std::sqrt(double(x.size()));
}

}  // namespace sgdm::stats
