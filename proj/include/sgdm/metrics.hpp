#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sgdm/autodiff.hpp"
#include "sgdm/common.hpp"
#include "sgdm/data.hpp"
#include "sgdm/serialize.hpp"
#include "sgdm/stats.hpp"
#include "sgdm/tensor.hpp"

namespace sgdm::metrics {

// ---- masks ----

inline void check_mask(const Tensor& m) {
    require(m.rank() == 2, "mask must be [H,W]");
    for (double v : m.v) require(v == 0.0 || v == 1.0, "mask entries must be 0/1");
}

// dark-on-light foreground: luminance below threshold
inline Tensor image_to_mask(const Tensor& img, double threshold = 0.5) {
    require(img.rank() == 3, "image_to_mask: [C,H,W] expected");
    int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    Tensor mask({H, W});
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
            double lum;
            if (C >= 3)
                lum = 0.299 * img.at({0, y, x}) + 0.587 * img.at({1, y, x}) + 0.114 * img.at({2, y, x});
            else
                lum = img.at({0, y, x});
            mask.at({y, x}) = lum < threshold ? 1.0 : 0.0;
        }
    return mask;
}

inline double iou(const Tensor& a, const Tensor& b) {
    require(a.shape == b.shape, "iou: shape mismatch");
    double inter = 0, uni = 0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        bool pa = a.v[i] != 0.0, pb = b.v[i] != 0.0;
        inter += (pa && pb) ? 1 : 0;
        uni += (pa || pb) ? 1 : 0;
    }
    if (uni == 0) return 1.0;  // both empty
    return inter / uni;
}

// max IoU over integer translations of b within |dx|,|dy| <= max_shift
inline double shift_iou(const Tensor& a, const Tensor& b, int max_shift) {
    require(a.shape == b.shape, "shift_iou: shape mismatch");
    require(max_shift >= 0, "shift_iou: negative radius");
    int64_t H = a.dim(0), W = a.dim(1);
    double best = 0;
    for (int dy = -max_shift; dy <= max_shift; ++dy)
        for (int dx = -max_shift; dx <= max_shift; ++dx) {
            double inter = 0, uni = 0;
            for (int64_t y = 0; y < H; ++y)
                for (int64_t x = 0; x < W; ++x) {
                    bool pa = a.at({y, x}) != 0.0;
                    int64_t sy = y - dy, sx = x - dx;
                    bool pb = sy >= 0 && sy < H && sx >= 0 && sx < W && b.at({sy, sx}) != 0.0;
                    inter += (pa && pb) ? 1 : 0;
                    uni += (pa || pb) ? 1 : 0;
                }
            best = std::max(best, uni == 0 ? 1.0 : inter / uni);
        }
    return best;
}

inline int default_shift_radius(const Tensor& mask) {
    return int(std::max<int64_t>(1, mask.dim(0) / 10));
}

// ---- SSIM ----

namespace detail {
inline Tensor luminance(const Tensor& img) {
    if (img.rank() == 2) return img;
    require(img.rank() == 3, "ssim: [C,H,W] or [H,W] expected");
    int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    Tensor out({H, W});
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
            out.at({y, x}) = C >= 3 ? 0.299 * img.at({0, y, x}) + 0.587 * img.at({1, y, x}) +
                                          0.114 * img.at({2, y, x})
                                    : img.at({0, y, x});
    return out;
}
}  // namespace detail

struct SsimConfig {
    int window = 7;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

// mean local SSIM over valid uniform windows
inline double ssim(const Tensor& xi, const Tensor& yi, const SsimConfig& cfg = {}) {
    Tensor x = detail::luminance(xi);
    Tensor y = detail::luminance(yi);
    require(x.shape == y.shape, "ssim: shape mismatch");
    int64_t H = x.dim(0), W = x.dim(1);
    int w = cfg.window;
    require(H >= w && W >= w, "ssim: image smaller than window");
    double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
    double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);
    double n = double(w) * double(w);
    double total = 0;
    int64_t count = 0;
    for (int64_t y0 = 0; y0 + w <= H; ++y0)
        for (int64_t x0 = 0; x0 + w <= W; ++x0) {
            double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
            for (int dy = 0; dy < w; ++dy)
                for (int dx = 0; dx < w; ++dx) {
                    double a = x.at({y0 + dy, x0 + dx});
                    double b = y.at({y0 + dy, x0 + dx});
                    sx += a;
                    sy += b;
                    sxx += a * a;
                    syy += b * b;
                    sxy += a * b;
                }
            double mx = sx / n, my = sy / n;
            double vx = sxx / n - mx * mx;
            double vy = syy / n - my * my;
            double cxy = sxy / n - mx * my;
            total += ((2 * mx * my + c1) * (2 * cxy + c2)) /
                     ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    return total / double(count);
}

// ---- Inception Score ----

// probs: [N, C] rows on the simplex; per split IS = exp(mean_i KL(p_i || p_bar))
inline std::pair<double, double> inception_score(const Tensor& probs, int n_splits) {
    require(probs.rank() == 2, "inception_score: [N,C] expected");
    int64_t N = probs.dim(0), C = probs.dim(1);
    require(n_splits >= 1 && N >= n_splits, "inception_score: need at least n_splits rows");
    for (int64_t i = 0; i < N; ++i) {
        double s = 0;
        for (int64_t j = 0; j < C; ++j) {
            double p = probs.at({i, j});
            require(p >= 0.0, "inception_score: negative probability");
            s += p;
        }
        require(std::abs(s - 1.0) <= 1e-5, "inception_score: probabilities must sum to 1");
    }
    std::vector<double> scores;
    for (int s = 0; s < n_splits; ++s) {
        int64_t lo = N * s / n_splits, hi = N * (s + 1) / n_splits;
        std::vector<double> marginal(size_t(C), 0.0);
        for (int64_t i = lo; i < hi; ++i)
            for (int64_t j = 0; j < C; ++j) marginal[size_t(j)] += probs.at({i, j}) / double(hi - lo);
        double mean_kl = 0;
        for (int64_t i = lo; i < hi; ++i) {
            double kl = 0;
            for (int64_t j = 0; j < C; ++j) {
                double p = probs.at({i, j});
                if (p > 1e-12) kl += p * std::log(p / std::max(marginal[size_t(j)], 1e-12));
            }
            mean_kl += kl / double(hi - lo);
        }
        scores.push_back(std::exp(mean_kl));
    }
    double mean = mean_of(scores);
    double var = 0;
    for (double v : scores) var += (v - mean) * (v - mean);
    return {mean, std::sqrt(var / double(scores.size()))};
}

// ---- Frechet distance ----

namespace detail {

// cyclic Jacobi eigendecomposition of a symmetric matrix (in-place copies)
inline void jacobi_eig(std::vector<double> a, int n, std::vector<double>& eigvals,
                       std::vector<double>& eigvecs) {
    eigvecs.assign(size_t(n * n), 0.0);
    for (int i = 0; i < n; ++i) eigvecs[size_t(i * n + i)] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a[size_t(p * n + q)] * a[size_t(p * n + q)];
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                double apq = a[size_t(p * n + q)];
                if (std::abs(apq) < 1e-300) continue;
                double app = a[size_t(p * n + p)], aqq = a[size_t(q * n + q)];
                double theta = (aqq - app) / (2 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double cth = 1.0 / std::sqrt(t * t + 1.0);
                double sth = t * cth;
                for (int k = 0; k < n; ++k) {
                    double akp = a[size_t(k * n + p)], akq = a[size_t(k * n + q)];
                    a[size_t(k * n + p)] = cth * akp - sth * akq;
                    a[size_t(k * n + q)] = sth * akp + cth * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = a[size_t(p * n + k)], aqk = a[size_t(q * n + k)];
                    a[size_t(p * n + k)] = cth * apk - sth * aqk;
                    a[size_t(q * n + k)] = sth * apk + cth * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    double vkp = eigvecs[size_t(k * n + p)], vkq = eigvecs[size_t(k * n + q)];
                    eigvecs[size_t(k * n + p)] = cth * vkp - sth * vkq;
                    eigvecs[size_t(k * n + q)] = sth * vkp + cth * vkq;
                }
            }
    }
    eigvals.resize(size_t(n));
    for (int i = 0; i < n; ++i) eigvals[size_t(i)] = a[size_t(i * n + i)];
}

// symmetric PSD square root with negative eigenvalues clipped at zero
inline std::vector<double> sym_sqrt(const std::vector<double>& m, int n) {
    std::vector<double> vals, vecs;
    jacobi_eig(m, n, vals, vecs);
    std::vector<double> out(size_t(n * n), 0.0);
    for (int k = 0; k < n; ++k) {
        double s = vals[size_t(k)] > 0 ? std::sqrt(vals[size_t(k)]) : 0.0;
        if (s == 0) continue;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                out[size_t(i * n + j)] += s * vecs[size_t(i * n + k)] * vecs[size_t(j * n + k)];
    }
    return out;
}

inline std::vector<double> matmul_sq(const std::vector<double>& a, const std::vector<double>& b,
                                     int n) {
    std::vector<double> c(size_t(n * n), 0.0);
    gemm(n, n, n, a.data(), b.data(), c.data());
    return c;
}

}  // namespace detail

// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^{1/2}); covariances get a 1e-6 ridge
inline double frechet_distance(const Tensor& feats_a, const Tensor& feats_b, double ridge = 1e-6) {
    require(feats_a.rank() == 2 && feats_b.rank() == 2, "frechet_distance: [N,d] expected");
    require(feats_a.dim(1) == feats_b.dim(1), "frechet_distance: feature dim mismatch");
    int d = int(feats_a.dim(1));

    auto moments = [&](const Tensor& f, std::vector<double>& mu, std::vector<double>& cov) {
        int64_t n = f.dim(0);
        require(n >= 2, "frechet_distance: need at least 2 rows per set");
        mu.assign(size_t(d), 0.0);
        for (int64_t i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) mu[size_t(j)] += f.at({i, j}) / double(n);
        cov.assign(size_t(d * d), 0.0);
        for (int64_t i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j)
                for (int k = 0; k < d; ++k)
                    cov[size_t(j * d + k)] +=
                        (f.at({i, j}) - mu[size_t(j)]) * (f.at({i, k}) - mu[size_t(k)]) / double(n - 1);
        for (int j = 0; j < d; ++j) cov[size_t(j * d + j)] += ridge;
    };

    std::vector<double> mu_a, mu_b, cov_a, cov_b;
    moments(feats_a, mu_a, cov_a);
    moments(feats_b, mu_b, cov_b);

    double mean_term = 0;
    for (int j = 0; j < d; ++j) mean_term += (mu_a[size_t(j)] - mu_b[size_t(j)]) * (mu_a[size_t(j)] - mu_b[size_t(j)]);

    // tr((Sa Sb)^{1/2}) computed via the symmetric proxy sqrt(Sa)·Sb·sqrt(Sa)
    auto ra = detail::sym_sqrt(cov_a, d);
    auto inner = detail::matmul_sq(detail::matmul_sq(ra, cov_b, d), ra, d);
    for (int i = 0; i < d; ++i)  // symmetrize numerical residue
        for (int j = i + 1; j < d; ++j) {
            double v = 0.5 * (inner[size_t(i * d + j)] + inner[size_t(j * d + i)]);
            inner[size_t(i * d + j)] = inner[size_t(j * d + i)] = v;
        }
    std::vector<double> vals, vecs;
    detail::jacobi_eig(inner, d, vals, vecs);
    double tr_sqrt = 0;
    for (double v : vals) tr_sqrt += v > 0 ? std::sqrt(v) : 0.0;

    double tr_a = 0, tr_b = 0;
    for (int j = 0; j < d; ++j) {
        tr_a += cov_a[size_t(j * d + j)];
        tr_b += cov_b[size_t(j * d + j)];
    }
    return std::max(0.0, mean_term + tr_a + tr_b - 2.0 * tr_sqrt);
}

// cosine similarity of two images under a shared image encoder
inline double embedding_similarity(const Tensor& gen, const Tensor& target,
                                   const std::function<std::vector<double>(const Tensor&)>& encode) {
    return cosine(encode(gen), encode(target));
}

// ---- desk-scale category classifier (Inception stand-in) ----

struct ClassifierConfig {
    int64_t img_size = 64;
    int n_classes = 3;
    int epochs = 40;
    int batch = 16;
    double lr = 2e-3;
    uint64_t seed = 7;
};

struct Classifier {
    ad::ParamStore store;
    ClassifierConfig cfg;
    bool trained = false;
};

namespace detail {
inline ad::Var classifier_logits(ad::Tape& t, Classifier& cls, ad::Var x) {
    auto& s = cls.store;
    x = t.add_scalar(x, -0.5);  // center the mostly-white canvas
    auto h1 = t.relu(t.conv2d(x, t.param(s.get("conv1.w")), 2, 1));
    auto h2 = t.relu(t.conv2d(h1, t.param(s.get("conv2.w")), 2, 1));
    auto h3 = t.relu(t.conv2d(h2, t.param(s.get("conv3.w")), 2, 1));
    const auto& hs = t.val(h3);
    int64_t B = hs.dim(0), C = hs.dim(1), H = hs.dim(2), W = hs.dim(3);
    auto pooled = t.mean_axis1(t.reshape(t.transpose_last2(t.reshape(h3, {B, C, H * W})), {B, H * W, C}));
    return t.add_bias(t.matmul(pooled, t.param(s.get("head.w"))), t.param(s.get("head.b")));
}
}  // namespace detail

inline Classifier make_classifier(const ClassifierConfig& cfg) {
    Classifier cls;
    cls.cfg = cfg;
    Rng rng(mix_seed(0xc1a55, cfg.seed));
    cls.store.add("conv1.w", ad::xavier_init(rng, {8, 3, 3, 3}, 27, 8));
    cls.store.add("conv2.w", ad::xavier_init(rng, {16, 8, 3, 3}, 72, 16));
    cls.store.add("conv3.w", ad::xavier_init(rng, {32, 16, 3, 3}, 144, 32));
    cls.store.add("head.w", ad::xavier_init(rng, {32, cfg.n_classes}, 32, cfg.n_classes));
    cls.store.add("head.b", Tensor({cfg.n_classes}));
    return cls;
}

inline Tensor stack_images(const std::vector<const Tensor*>& imgs) {
    require(!imgs.empty(), "stack_images: empty batch");
    int64_t C = imgs[0]->dim(0), H = imgs[0]->dim(1), W = imgs[0]->dim(2);
    Tensor out({int64_t(imgs.size()), C, H, W});
    for (size_t i = 0; i < imgs.size(); ++i) {
        require(imgs[i]->shape == imgs[0]->shape, "stack_images: inconsistent shapes");
        std::copy(imgs[i]->v.begin(), imgs[i]->v.end(), out.v.begin() + int64_t(i) * C * H * W);
    }
    return out;
}

inline std::vector<double> train_classifier(Classifier& cls, const std::vector<Tensor>& images,
                                            const std::vector<int>& labels) {
    require(images.size() == labels.size() && !images.empty(), "train_classifier: bad inputs");
    Rng rng(mix_seed(0xc1a56, cls.cfg.seed));
    std::vector<size_t> order(images.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> curve;
    ad::AdamConfig adam{cls.cfg.lr};
    for (int ep = 0; ep < cls.cfg.epochs; ++ep) {
        rng.shuffle(order);
        double ep_loss = 0;
        int nb = 0;
        for (size_t start = 0; start < order.size(); start += size_t(cls.cfg.batch)) {
            size_t end = std::min(order.size(), start + size_t(cls.cfg.batch));
            std::vector<const Tensor*> batch;
            std::vector<int64_t> y;
            for (size_t i = start; i < end; ++i) {
                batch.push_back(&images[order[i]]);
                y.push_back(labels[order[i]]);
            }
            cls.store.zero_grad();
            ad::Tape t;
            auto logits = detail::classifier_logits(t, cls, t.input(stack_images(batch)));
            auto loss = t.nll_from_logits(logits, y);
            t.backward(loss);
            ad::adam_step(cls.store, adam);
            ep_loss += t.val(loss).v[0];
            ++nb;
        }
        curve.push_back(ep_loss / std::max(1, nb));
    }
    cls.trained = true;
    return curve;
}

inline std::vector<double> classify_probs(Classifier& cls, const Tensor& image) {
    require_state(cls.trained, "classifier is not trained");
    ad::Tape t;
    auto logits = detail::classifier_logits(t, cls, t.input(stack_images({&image})));
    auto probs = t.softmax_last(logits);
    return t.val(probs).v;
}

inline double classifier_accuracy(Classifier& cls, const std::vector<Tensor>& images,
                                  const std::vector<int>& labels) {
    int correct = 0;
    for (size_t i = 0; i < images.size(); ++i) {
        auto p = classify_probs(cls, images[i]);
        int best = int(std::max_element(p.begin(), p.end()) - p.begin());
        if (best == labels[i]) ++correct;
    }
    return double(correct) / double(images.size());
}

inline void save_classifier(const std::string& path, const Classifier& cls) {
    json meta = {{"kind", "is-classifier"},
                 {"trained", cls.trained},
                 {"img_size", cls.cfg.img_size},
                 {"n_classes", cls.cfg.n_classes}};
    save_checkpoint(path, store_to_checkpoint(cls.store, meta));
}

inline Classifier load_classifier(const std::string& path) {
    auto ck = load_checkpoint(path);
    Classifier cls;
    cls.cfg.img_size = ck.meta.value("img_size", 64);
    cls.cfg.n_classes = ck.meta.value("n_classes", 3);
    cls.trained = ck.meta.value("trained", false);
    checkpoint_to_store(ck, cls.store);
    return cls;
}

// ---- MetricReport ----

struct Aggregate {
    double mean = 0, sem = 0, ci_low = 0, ci_high = 0;
};

struct PerItem {
    std::string stimulus_id, subject_id;
    std::map<std::string, double> values;
};

struct Comparison {
    std::string method_a, method_b, metric;
    double t = 0, p_raw = 1, p_fdr = 1;
};

struct MetricReport {
    std::vector<PerItem> per_item;
    std::map<std::string, Aggregate> aggregate;
    std::vector<Comparison> comparisons;
    json extra;  // run flags (ablation mode, control rate, config hash)

    void validate() const {
        for (const auto& [k, a] : aggregate) {
            require(a.ci_low <= a.mean && a.mean <= a.ci_high, "aggregate CI must bracket mean");
        }
        for (const auto& c : comparisons) {
            require(c.p_raw >= 0 && c.p_raw <= 1 && c.p_fdr >= 0 && c.p_fdr <= 1,
                    "p-values out of range");
            require(c.p_fdr >= c.p_raw, "adjusted p below raw p");
        }
    }
};

inline void aggregate_report(MetricReport& report, int n_resamples = 1000, double level = 0.95,
                             uint64_t seed = 1234) {
    std::map<std::string, std::vector<double>> columns;
    for (const auto& item : report.per_item)
        for (const auto& [k, v] : item.values) columns[k].push_back(v);
    for (const auto& [k, col] : columns) {
        Aggregate a;
        a.mean = mean_of(col);
        a.sem = stats::sem_of(col);
        auto [lo, hi] = stats::bootstrap_ci(col, n_resamples, level, mix_seed(seed, fnv1a64(k)));
        a.ci_low = std::min(lo, a.mean);
        a.ci_high = std::max(hi, a.mean);
        report.aggregate[k] = a;
    }
}

inline json report_to_json(const MetricReport& r) {
    json items = json::array();
    for (const auto& it : r.per_item)
        items.push_back({{"stimulus_id", it.stimulus_id},
                         {"subject_id", it.subject_id},
                         {"values", it.values}});
    json agg = json::object();
    for (const auto& [k, a] : r.aggregate)
        agg[k] = {{"mean", a.mean}, {"sem", a.sem}, {"ci_low", a.ci_low}, {"ci_high", a.ci_high}};
    json comps = json::array();
    for (const auto& c : r.comparisons)
        comps.push_back({{"method_a", c.method_a},
                         {"method_b", c.method_b},
                         {"metric", c.metric},
                         {"t", c.t},
                         {"p_raw", c.p_raw},
                         {"p_fdr", c.p_fdr}});
    return {{"per_item", items}, {"aggregate", agg}, {"comparisons", comps}, {"extra", r.extra}};
}

inline MetricReport report_from_json(const json& j) {
    MetricReport r;
    for (const auto& it : j.at("per_item")) {
        PerItem p;
        p.stimulus_id = it.at("stimulus_id").get<std::string>();
        p.subject_id = it.at("subject_id").get<std::string>();
        p.values = it.at("values").get<std::map<std::string, double>>();
        r.per_item.push_back(std::move(p));
    }
    for (const auto& [k, a] : j.at("aggregate").items())
        r.aggregate[k] = {a.at("mean").get<double>(), a.at("sem").get<double>(),
                          a.at("ci_low").get<double>(), a.at("ci_high").get<double>()};
    for (const auto& c : j.at("comparisons"))
        r.comparisons.push_back({c.at("method_a").get<std::string>(),
                                 c.at("method_b").get<std::string>(),
                                 c.at("metric").get<std::string>(), c.at("t").get<double>(),
                                 c.at("p_raw").get<double>(), c.at("p_fdr").get<double>()});
    if (j.contains("extra")) r.extra = j.at("extra");
    return r;
}

inline std::string report_to_csv(const MetricReport& r) {
    std::set<std::string> cols;
    for (const auto& it : r.per_item)
        for (const auto& [k, v] : it.values) cols.insert(k);
    std::string out = "stimulus_id,subject_id";
    for (const auto& c : cols) out += "," + c;
    out += "\n";
    for (const auto& it : r.per_item) {
        out += it.stimulus_id + "," + it.subject_id;
        for (const auto& c : cols) {
            auto f = it.values.find(c);
            char buf[32];
            if (f != it.values.end())
                std::snprintf(buf, sizeof buf, ",%.9g", f->second);
            else
                std::snprintf(buf, sizeof buf, ",");
            out += buf;
        }
        out += "\n";
    }
    return out;
}

}  // namespace sgdm::metrics
