#include <catch2/catch_amalgamated.hpp>

#include "sgdm/metrics.hpp"
#include "sgdm/synthgen.hpp"

using namespace sgdm;
using namespace sgdm::metrics;

namespace {

Tensor make_mask(int64_t H, int64_t W, const std::function<bool(int64_t, int64_t)>& pred) {
    Tensor m({H, W});
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) m.at({y, x}) = pred(y, x) ? 1.0 : 0.0;
    return m;
}

Tensor random_mask(Rng& rng, int64_t H, int64_t W, double p) {
    Tensor m({H, W});
    for (auto& v : m.v) v = rng.uniform() < p ? 1.0 : 0.0;
    return m;
}

Tensor translate_mask(const Tensor& m, int dy, int dx) {
    int64_t H = m.dim(0), W = m.dim(1);
    Tensor out({H, W});
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
            int64_t sy = y - dy, sx = x - dx;
            if (sy >= 0 && sy < H && sx >= 0 && sx < W) out.at({y, x}) = m.at({sy, sx});
        }
    return out;
}

// Gauss-Jordan inverse, test-side
std::vector<double> mat_inv(std::vector<double> a, int n) {
    std::vector<double> inv(size_t(n * n), 0.0);
    for (int i = 0; i < n; ++i) inv[size_t(i * n + i)] = 1.0;
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[size_t(r * n + col)]) > std::abs(a[size_t(piv * n + col)])) piv = r;
        for (int c = 0; c < n; ++c) {
            std::swap(a[size_t(col * n + c)], a[size_t(piv * n + c)]);
            std::swap(inv[size_t(col * n + c)], inv[size_t(piv * n + c)]);
        }
        double d = a[size_t(col * n + col)];
        for (int c = 0; c < n; ++c) {
            a[size_t(col * n + c)] /= d;
            inv[size_t(col * n + c)] /= d;
        }
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            double f = a[size_t(r * n + col)];
            for (int c = 0; c < n; ++c) {
                a[size_t(r * n + c)] -= f * a[size_t(col * n + c)];
                inv[size_t(r * n + c)] -= f * inv[size_t(col * n + c)];
            }
        }
    }
    return inv;
}

std::vector<double> mat_mul(const std::vector<double>& a, const std::vector<double>& b, int n) {
    std::vector<double> c(size_t(n * n), 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k)
            for (int j = 0; j < n; ++j)
                c[size_t(i * n + j)] += a[size_t(i * n + k)] * b[size_t(k * n + j)];
    return c;
}

// Denman-Beavers square root iteration: independent oracle for tr((Sa Sb)^{1/2})
std::vector<double> denman_beavers_sqrt(std::vector<double> y, int n) {
    std::vector<double> z(size_t(n * n), 0.0);
    for (int i = 0; i < n; ++i) z[size_t(i * n + i)] = 1.0;
    for (int it = 0; it < 60; ++it) {
        auto yi = mat_inv(y, n);
        auto zi = mat_inv(z, n);
        for (size_t i = 0; i < y.size(); ++i) {
            double ny = 0.5 * (y[i] + zi[i]);
            double nz = 0.5 * (z[i] + yi[i]);
            y[i] = ny;
            z[i] = nz;
        }
    }
    return y;
}

}  // namespace

TEST_CASE("iou identities") {
    auto a = make_mask(8, 8, [](int64_t y, int64_t x) { return y < 4; });
    CHECK(iou(a, a) == 1.0);
    auto b = make_mask(8, 8, [](int64_t y, int64_t x) { return y >= 4; });
    CHECK(iou(a, b) == 0.0);
    // two equal squares overlapping on half their area -> 1/3
    auto s1 = make_mask(10, 10, [](int64_t y, int64_t x) { return y < 4 && x < 4; });
    auto s2 = make_mask(10, 10, [](int64_t y, int64_t x) { return y < 4 && x >= 2 && x < 6; });
    CHECK(iou(s1, s2) == Catch::Approx(1.0 / 3.0).margin(1e-12));
    // both empty -> 1
    auto e = make_mask(4, 4, [](int64_t, int64_t) { return false; });
    CHECK(iou(e, e) == 1.0);
    Tensor wrong({3, 3});
    CHECK_THROWS_AS(iou(a, wrong), Error);
}

TEST_CASE("shift_iou degenerate radius equals iou") {
    Rng rng(3);
    auto a = random_mask(rng, 9, 9, 0.4);
    auto b = random_mask(rng, 9, 9, 0.4);
    CHECK(shift_iou(a, b, 0) == Catch::Approx(iou(a, b)).margin(1e-12));
}

TEST_CASE("shift_iou realigns exact translations") {
    auto a = make_mask(12, 12, [](int64_t y, int64_t x) { return y >= 3 && y < 8 && x >= 2 && x < 7; });
    auto b = translate_mask(a, 0, 2);
    CHECK(shift_iou(a, b, 2) == 1.0);
    CHECK(shift_iou(a, b, 1) < 1.0);
}

TEST_CASE("shift_iou matches the exhaustive 49-translation oracle") {
    Rng rng(11);
    for (int rep = 0; rep < 3; ++rep) {
        auto a = random_mask(rng, 10, 10, 0.35);
        auto b = random_mask(rng, 10, 10, 0.35);
        double oracle = 0;
        for (int dy = -3; dy <= 3; ++dy)
            for (int dx = -3; dx <= 3; ++dx) oracle = std::max(oracle, iou(a, translate_mask(b, dy, dx)));
        CHECK(shift_iou(a, b, 3) == Catch::Approx(oracle).margin(1e-12));
        CHECK(shift_iou(a, b, 3) >= iou(a, b));
    }
}

TEST_CASE("ssim identities and symmetry") {
    Rng rng(5);
    Tensor x({3, 16, 16}), y({3, 16, 16});
    for (auto& v : x.v) v = rng.uniform();
    for (auto& v : y.v) v = rng.uniform();
    CHECK(ssim(x, x) == Catch::Approx(1.0).margin(1e-12));
    CHECK(ssim(x, y) == Catch::Approx(ssim(y, x)).margin(1e-9));
}

TEST_CASE("ssim closed form for constant images") {
    double v1 = 0.3, v2 = 0.8;
    Tensor x({3, 9, 9}, v1), y({3, 9, 9}, v2);
    double c1 = 0.01 * 0.01;
    double expected = (2 * v1 * v2 + c1) / (v1 * v1 + v2 * v2 + c1);
    CHECK(ssim(x, y) == Catch::Approx(expected).margin(1e-12));
    Tensor small({3, 5, 5}, v1);
    CHECK_THROWS_AS(ssim(small, small), Error);
}

TEST_CASE("inception score on uniform predictions is 1") {
    Tensor probs({12, 4}, 0.25);
    auto [m, s] = inception_score(probs, 3);
    CHECK(m == Catch::Approx(1.0).margin(1e-12));
    CHECK(s == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("inception score on one-hot covering predictions is C") {
    int C = 3, reps = 4;
    Tensor probs({int64_t(C * reps), int64_t(C)});
    for (int i = 0; i < C * reps; ++i) probs.at({i, i % C}) = 1.0;  // every split covers classes evenly
    auto [m, s] = inception_score(probs, 2);
    CHECK(m == Catch::Approx(double(C)).margin(1e-9));
}

TEST_CASE("inception score matches a naive KL-sum oracle") {
    Rng rng(19);
    int64_t N = 20, C = 5;
    Tensor probs({N, C});
    for (int64_t i = 0; i < N; ++i) {
        double s = 0;
        for (int64_t j = 0; j < C; ++j) {
            probs.at({i, j}) = rng.uniform() + 0.05;
            s += probs.at({i, j});
        }
        for (int64_t j = 0; j < C; ++j) probs.at({i, j}) /= s;
    }
    int n_splits = 4;
    std::vector<double> split_scores;
    for (int sp = 0; sp < n_splits; ++sp) {
        int64_t lo = N * sp / n_splits, hi = N * (sp + 1) / n_splits;
        std::vector<double> pbar(size_t(C), 0.0);
        for (int64_t i = lo; i < hi; ++i)
            for (int64_t j = 0; j < C; ++j) pbar[size_t(j)] += probs.at({i, j}) / double(hi - lo);
        double mkl = 0;
        for (int64_t i = lo; i < hi; ++i) {
            double kl = 0;
            for (int64_t j = 0; j < C; ++j)
                kl += probs.at({i, j}) * std::log(probs.at({i, j}) / pbar[size_t(j)]);
            mkl += kl / double(hi - lo);
        }
        split_scores.push_back(std::exp(mkl));
    }
    auto [m, s] = inception_score(probs, n_splits);
    CHECK(m == Catch::Approx(mean_of(split_scores)).margin(1e-9));

    Tensor bad({2, 2});
    bad.at({0, 0}) = 0.7;
    bad.at({0, 1}) = 0.7;
    bad.at({1, 0}) = 0.5;
    bad.at({1, 1}) = 0.5;
    CHECK_THROWS_AS(inception_score(bad, 1), Error);
}

TEST_CASE("frechet distance identities") {
    Rng rng(29);
    Tensor a({20, 4});
    for (auto& v : a.v) v = rng.gaussian();
    CHECK(frechet_distance(a, a) == Catch::Approx(0.0).margin(1e-6));

    // 1-D equal-variance case: distance reduces to (m1-m2)^2
    double m1 = 0.7, m2 = -0.4, d = 0.9;
    Tensor f1({2, 1}), f2({2, 1});
    f1.at({0, 0}) = m1 - d;
    f1.at({1, 0}) = m1 + d;
    f2.at({0, 0}) = m2 - d;
    f2.at({1, 0}) = m2 + d;
    CHECK(frechet_distance(f1, f2) == Catch::Approx((m1 - m2) * (m1 - m2)).margin(1e-9));

    Tensor wrong({5, 3});
    CHECK_THROWS_AS(frechet_distance(a, wrong), Error);
}

TEST_CASE("frechet distance matches an independent matrix-sqrt oracle") {
    Rng rng(31);
    int d = 3;
    Tensor a({40, 3}), b({40, 3});
    for (auto& v : a.v) v = rng.gaussian();
    for (int64_t i = 0; i < 40; ++i) {
        b.at({i, 0}) = 0.5 + 1.5 * rng.gaussian();
        b.at({i, 1}) = -0.3 + 0.5 * rng.gaussian() + 0.3 * b.at({i, 0});
        b.at({i, 2}) = rng.gaussian();
    }
    double got = frechet_distance(a, b);
    CHECK(got == Catch::Approx(frechet_distance(b, a)).margin(1e-9));

    // oracle: same moments, Denman-Beavers sqrt of the product
    auto moments = [&](const Tensor& f, std::vector<double>& mu, std::vector<double>& cov) {
        int64_t n = f.dim(0);
        mu.assign(size_t(d), 0.0);
        for (int64_t i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) mu[size_t(j)] += f.at({i, j}) / double(n);
        cov.assign(size_t(d * d), 0.0);
        for (int64_t i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j)
                for (int k = 0; k < d; ++k)
                    cov[size_t(j * d + k)] +=
                        (f.at({i, j}) - mu[size_t(j)]) * (f.at({i, k}) - mu[size_t(k)]) / double(n - 1);
        for (int j = 0; j < d; ++j) cov[size_t(j * d + j)] += 1e-6;
    };
    std::vector<double> mu_a, mu_b, ca, cb;
    moments(a, mu_a, ca);
    moments(b, mu_b, cb);
    auto sqrt_prod = denman_beavers_sqrt(mat_mul(ca, cb, d), d);
    double mean_term = 0, tr = 0;
    for (int j = 0; j < d; ++j) {
        mean_term += (mu_a[size_t(j)] - mu_b[size_t(j)]) * (mu_a[size_t(j)] - mu_b[size_t(j)]);
        tr += ca[size_t(j * d + j)] + cb[size_t(j * d + j)] - 2.0 * sqrt_prod[size_t(j * d + j)];
    }
    CHECK(got == Catch::Approx(mean_term + tr).margin(1e-6));
}

TEST_CASE("embedding similarity identities with a stub encoder") {
    auto encode = [](const Tensor& img) { return normalized(img.v); };
    Rng rng(37);
    Tensor a({3, 8, 8}), b({3, 8, 8});
    for (auto& v : a.v) v = rng.uniform();
    for (auto& v : b.v) v = rng.uniform();
    CHECK(embedding_similarity(a, a, encode) == Catch::Approx(1.0).margin(1e-6));
    CHECK(embedding_similarity(a, b, encode) ==
          Catch::Approx(embedding_similarity(b, a, encode)).margin(1e-12));
}

TEST_CASE("image_to_mask threshold semantics") {
    Tensor white({3, 6, 6}, 1.0);
    Tensor black({3, 6, 6}, 0.0);
    CHECK(mean_of(image_to_mask(white).v) == 0.0);
    CHECK(mean_of(image_to_mask(black).v) == 1.0);
}

TEST_CASE("metric report aggregation keeps invariants and round-trips JSON") {
    MetricReport r;
    Rng rng(41);
    for (int i = 0; i < 25; ++i) {
        PerItem it;
        it.stimulus_id = "s" + std::to_string(i);
        it.subject_id = "sub01";
        it.values["iou"] = rng.uniform();
        it.values["ssim"] = rng.uniform() * 0.5;
        r.per_item.push_back(it);
    }
    aggregate_report(r);
    std::vector<double> a, b;
    for (auto& it : r.per_item) {
        a.push_back(it.values["iou"]);
        b.push_back(it.values["ssim"]);
    }
    auto tt = stats::paired_t_test(a, b);
    auto fdr = stats::bh_fdr({tt.p}, 0.05);
    r.comparisons.push_back({"m_a", "m_b", "iou", tt.t, tt.p, fdr.adjusted[0]});
    REQUIRE_NOTHROW(r.validate());

    auto j = report_to_json(r);
    auto r2 = report_from_json(j);
    CHECK(report_to_json(r2).dump() == j.dump());
    CHECK(r2.aggregate.at("iou").mean == r.aggregate.at("iou").mean);

    auto csv = report_to_csv(r);
    CHECK(csv.find("stimulus_id,subject_id,iou,ssim") == 0);
}

TEST_CASE("desk classifier reaches 90 percent on synthetic categories") {
    synth::SynthConfig scfg;
    scfg.n_stimuli = 90;
    scfg.n_subjects = 1;
    scfg.seed = 77;
    auto ds = synth::make_synth_dataset(scfg);
    std::vector<Tensor> images;
    std::vector<int> labels;
    for (const auto& s : ds.stimuli) {
        images.push_back(s.image);
        labels.push_back(int(s.category));
    }
    ClassifierConfig cfg;
    cfg.epochs = 30;
    auto cls = make_classifier(cfg);
    auto curve = train_classifier(cls, images, labels);
    CHECK(curve.back() < curve.front());
    double acc = classifier_accuracy(cls, images, labels);
    INFO("train accuracy " << acc);
    CHECK(acc >= 0.9);
}
