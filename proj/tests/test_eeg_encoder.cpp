#include <catch2/catch_amalgamated.hpp>

#include "sgdm/eeg_encoder.hpp"
#include "sgdm/synthgen.hpp"
#include "test_util.hpp"

using namespace sgdm;
using namespace sgdm::atm;

namespace {

AtmConfig tiny_cfg() {
    AtmConfig cfg;
    cfg.conv_dim = 2;
    cfg.conv_kernel = 3;
    cfg.conv_stride = 1;
    cfg.d_k = 3;
    cfg.temporal_taps = 3;
    cfg.hidden = 6;
    cfg.embed_dim = 4;
    cfg.seed = 3;
    return cfg;
}

EEGEpoch make_epoch(Rng& rng, int64_t C, int64_t T, double scale = 1.0) {
    EEGEpoch e;
    e.data = Tensor({C, T});
    for (auto& v : e.data.v) v = scale * rng.gaussian();
    e.sampling_rate = 250;
    e.subject_id = "subT";
    e.stimulus_id = "stim";
    for (int64_t c = 0; c < C; ++c) e.channel_names.push_back("ch" + std::to_string(c));
    return e;
}

}  // namespace

TEST_CASE("embed_channels: zero epoch reproduces the positional table") {
    auto p = make_atm(tiny_cfg(), 3, 10);
    Rng rng(1);
    auto e = make_epoch(rng, 3, 10, 0.0);
    auto h = embed_channels(e, p);
    REQUIRE(h.shape == std::vector<int64_t>{3, 10, 2});
    const auto& pos = p.store.get("pos").value;
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t t = 0; t < 10; ++t)
            for (int64_t f = 0; f < 2; ++f)
                CHECK(h.at({c, t, f}) == Catch::Approx(pos.at({t, f})).margin(1e-12));
}

TEST_CASE("embed_channels: doubling the input doubles H minus the positional part") {
    auto p = make_atm(tiny_cfg(), 3, 12);
    Rng rng(2);
    auto e = make_epoch(rng, 3, 12);
    auto e2 = e;
    for (auto& v : e2.data.v) v *= 2.0;
    auto h1 = embed_channels(e, p);
    auto h2 = embed_channels(e2, p);
    const auto& pos = p.store.get("pos").value;
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t t = 0; t < 12; ++t)
            for (int64_t f = 0; f < 2; ++f) {
                double a = h1.at({c, t, f}) - pos.at({t, f});
                double b = h2.at({c, t, f}) - pos.at({t, f});
                CHECK(b == Catch::Approx(2.0 * a).margin(1e-9));
            }
}

TEST_CASE("embed_channels matches a sliding-dot-product oracle") {
    auto cfg = tiny_cfg();
    cfg.conv_stride = 2;
    auto p = make_atm(cfg, 2, 11);
    Rng rng(3);
    auto e = make_epoch(rng, 2, 11);
    auto h = embed_channels(e, p);
    const auto& w = p.store.get("conv.w").value;  // [d,k]
    const auto& pos = p.store.get("pos").value;
    int64_t pad = cfg.conv_kernel / 2;
    for (int64_t c = 0; c < 2; ++c)
        for (int64_t t = 0; t < h.dim(1); ++t)
            for (int64_t f = 0; f < cfg.conv_dim; ++f) {
                double acc = 0;
                for (int64_t k = 0; k < cfg.conv_kernel; ++k) {
                    int64_t ti = t * cfg.conv_stride - pad + k;
                    if (ti >= 0 && ti < 11) acc += w.at({f, k}) * e.data.at({c, ti});
                }
                CHECK(h.at({c, t, f}) == Catch::Approx(acc + pos.at({t, f})).margin(1e-6));
            }

    EEGEpoch tooshort = make_epoch(rng, 2, 2);
    CHECK_THROWS_AS(embed_channels(tooshort, p), Error);
}

TEST_CASE("channel attention: zero value projection is the identity map") {
    auto p = make_atm(tiny_cfg(), 4, 8);
    auto& wv = p.store.get("attn.wv").value;
    std::fill(wv.v.begin(), wv.v.end(), 0.0);
    Rng rng(4);
    Tensor h({4, 8, 2});
    for (auto& v : h.v) v = rng.gaussian();
    auto out = channel_attention(h, p);
    for (size_t i = 0; i < h.v.size(); ++i) CHECK(out.v[i] == Catch::Approx(h.v[i]).margin(1e-12));
}

TEST_CASE("channel attention rows sum to one") {
    auto p = make_atm(tiny_cfg(), 5, 8);
    Rng rng(5);
    ad::Tape t;
    Tensor h({2, 5, 8, 2});
    for (auto& v : h.v) v = rng.gaussian();
    auto res = channel_attention_var(t, p, t.input(h));
    const auto& attn = t.val(res.attn);
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t i = 0; i < 5; ++i) {
            double s = 0;
            for (int64_t j = 0; j < 5; ++j) s += attn.at({b, i, j});
            CHECK(s == Catch::Approx(1.0).margin(1e-6));
        }
}

TEST_CASE("channel attention matches a hand-rolled two-channel oracle") {
    auto p = make_atm(tiny_cfg(), 2, 4);
    Rng rng(6);
    Tensor h({2, 4, 2});
    for (auto& v : h.v) v = rng.gaussian();
    auto got = channel_attention(h, p);

    int64_t F = 8;  // 4 * 2 folded
    const auto& wq = p.store.get("attn.wq").value;
    const auto& wk = p.store.get("attn.wk").value;
    const auto& wv = p.store.get("attn.wv").value;
    auto matvec = [&](const Tensor& W, const double* x, int64_t rows, int64_t cols,
                      std::vector<double>& out) {
        out.assign(size_t(cols), 0.0);
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < cols; ++c) out[size_t(c)] += x[r] * W.v[size_t(r * cols + c)];
    };
    std::vector<double> q0, q1, k0, k1, v0, v1;
    matvec(wq, &h.v[0], F, 3, q0);
    matvec(wq, &h.v[size_t(F)], F, 3, q1);
    matvec(wk, &h.v[0], F, 3, k0);
    matvec(wk, &h.v[size_t(F)], F, 3, k1);
    matvec(wv, &h.v[0], F, F, v0);
    matvec(wv, &h.v[size_t(F)], F, F, v1);
    double inv = 1.0 / std::sqrt(3.0);
    auto dotv = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0;
        for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    };
    for (int row = 0; row < 2; ++row) {
        const auto& q = row == 0 ? q0 : q1;
        double s0 = dotv(q, k0) * inv, s1 = dotv(q, k1) * inv;
        double m = std::max(s0, s1);
        double a0 = std::exp(s0 - m), a1 = std::exp(s1 - m);
        double z = a0 + a1;
        a0 /= z;
        a1 /= z;
        for (int64_t f = 0; f < F; ++f) {
            double expect = a0 * v0[size_t(f)] + a1 * v1[size_t(f)] + h.v[size_t(row * F + f)];
            CHECK(got.v[size_t(row * F + f)] == Catch::Approx(expect).margin(1e-6));
        }
    }
}

TEST_CASE("temporal-spatial conv: outputs are non-negative") {
    auto p = make_atm(tiny_cfg(), 3, 6);
    Rng rng(7);
    Tensor h({3, 6, 2});
    for (auto& v : h.v) v = rng.gaussian();
    auto f = temporal_spatial_conv(h, p);
    for (double v : f.v) CHECK(v >= 0.0);
}

TEST_CASE("temporal-spatial conv identity configuration") {
    auto p = make_atm(tiny_cfg(), 3, 6);
    auto& wt = p.store.get("tsconv.wt").value;  // [taps,d,d]
    auto& ws = p.store.get("tsconv.ws").value;
    auto& b = p.store.get("tsconv.b").value;
    std::fill(wt.v.begin(), wt.v.end(), 0.0);
    std::fill(ws.v.begin(), ws.v.end(), 0.0);
    std::fill(b.v.begin(), b.v.end(), 0.0);
    int64_t center = 1;  // taps = 3
    for (int64_t g = 0; g < 2; ++g) wt.at({center, g, g}) = 1.0;

    Rng rng(8);
    Tensor h({3, 6, 2});
    for (auto& v : h.v) v = std::abs(rng.gaussian());  // non-negative input
    auto f = temporal_spatial_conv(h, p);
    for (size_t i = 0; i < h.v.size(); ++i) CHECK(f.v[i] == Catch::Approx(h.v[i]).margin(1e-12));
}

TEST_CASE("temporal-spatial conv matches a naive double-loop oracle") {
    auto p = make_atm(tiny_cfg(), 3, 5);
    Rng rng(9);
    Tensor h({3, 5, 2});
    for (auto& v : h.v) v = rng.gaussian();
    auto got = temporal_spatial_conv(h, p);

    const auto& wt = p.store.get("tsconv.wt").value;
    const auto& ws = p.store.get("tsconv.ws").value;
    const auto& b = p.store.get("tsconv.b").value;
    int64_t taps = 3, pad = 1, C = 3, T = 5, d = 2;
    for (int64_t c = 0; c < C; ++c)
        for (int64_t t = 0; t < T; ++t)
            for (int64_t f = 0; f < d; ++f) {
                double acc = b.at({f});
                for (int64_t tap = 0; tap < taps; ++tap) {
                    int64_t ti = t - pad + tap;
                    if (ti < 0 || ti >= T) continue;
                    for (int64_t g = 0; g < d; ++g) acc += wt.at({tap, g, f}) * h.at({c, ti, g});
                }
                for (int64_t c2 = 0; c2 < C; ++c2) acc += ws.at({c2, c}) * h.at({c2, t, f});
                acc = std::max(0.0, acc);
                CHECK(got.at({c, t, f}) == Catch::Approx(acc).margin(1e-6));
            }
}

TEST_CASE("projector: output dimension and degenerate-weight behavior") {
    auto p = make_atm(tiny_cfg(), 3, 6);
    Rng rng(10);
    Tensor f({3, 6, 2});
    for (auto& v : f.v) v = std::abs(rng.gaussian());
    auto z = project_semantic(f, p, true);
    CHECK(z.dim() == 4);

    std::fill(p.store.get("proj.w1").value.v.begin(), p.store.get("proj.w1").value.v.end(), 0.0);
    std::fill(p.store.get("proj.b1").value.v.begin(), p.store.get("proj.b1").value.v.end(), 0.0);
    std::fill(p.store.get("proj.w2").value.v.begin(), p.store.get("proj.w2").value.v.end(), 0.0);
    auto& b2 = p.store.get("proj.b2").value;
    for (int64_t i = 0; i < 4; ++i) b2.at({i}) = 0.1 * double(i + 1);
    auto z2 = project_semantic(f, p, true);
    for (int64_t i = 0; i < 4; ++i) CHECK(z2.v[size_t(i)] == Catch::Approx(b2.at({i})).margin(1e-12));
}

TEST_CASE("full forward pass: batch equals single within 1e-6") {
    auto p = make_atm(tiny_cfg(), 4, 9);
    Rng rng(11);
    auto e1 = make_epoch(rng, 4, 9);
    auto e2 = make_epoch(rng, 4, 9);
    auto batch = encode_epoch_batch({&e1, &e2}, p);
    auto s1 = encode_epoch(e1, p);
    auto s2 = encode_epoch(e2, p);
    for (size_t i = 0; i < s1.v.size(); ++i) {
        CHECK(batch[0].v[i] == Catch::Approx(s1.v[i]).margin(1e-6));
        CHECK(batch[1].v[i] == Catch::Approx(s2.v[i]).margin(1e-6));
    }
    CHECK(std::abs(l2_norm(s1.v) - 1.0) <= 1e-6);
}

TEST_CASE("semantic loss closed-form cases") {
    Tensor zi({2, 2});
    zi.at({0, 0}) = 1;
    zi.at({1, 1}) = 1;
    // lambda1 = 0, Z_E = z_I componentwise -> zero loss
    CHECK(semantic_loss(zi, zi, 0.0, 0.5, 1.0) == 0.0);
    // lambda2 = 0 orthonormal diagonal at tau = 1 -> lambda1 * 0.31326...
    CHECK(semantic_loss(zi, zi, 0.7, 0.0, 1.0) ==
          Catch::Approx(0.7 * 0.313261687518).margin(1e-9));
}

TEST_CASE("L_sem gradient matches finite differences through the full ATM path") {
    auto p = make_atm(tiny_cfg(), 3, 10);
    Rng rng(12);
    Tensor x({3, 3, 10});
    for (auto& v : x.v) v = rng.gaussian();
    Tensor zi({3, 4});
    for (int64_t i = 0; i < 3; ++i) {
        std::vector<double> row(4);
        for (auto& v : row) v = rng.gaussian();
        row = normalized(row);
        std::copy(row.begin(), row.end(), zi.v.begin() + i * 4);
    }
    auto loss = [&](ad::ParamStore& st, bool bwd) {
        ad::Tape t;
        auto ze = t.l2_normalize_last(atm_forward_var(t, p, t.input(x)));
        auto mse = t.scale(t.mean_all(t.square(t.sub(ze, t.input(zi)))), 4.0);
        auto nce = clip::info_nce_var(t, ze, t.input(zi), t.input(Tensor({1}, {std::log(0.5)})));
        auto l = t.add(t.scale(nce, 1.0), t.scale(mse, 0.5));
        if (bwd) t.backward(l);
        return t.val(l).v[0];
    };
    CHECK(sgdm_test::max_rel_err_sampled(p.store, loss, 6) < 1e-4);
}

TEST_CASE("channel permutation with conjugated spatial kernel leaves Z_E unchanged") {
    auto cfg = tiny_cfg();
    auto p = make_atm(cfg, 5, 8);
    Rng rng(13);
    auto e = make_epoch(rng, 5, 8);
    auto z = encode_epoch(e, p);

    std::vector<int64_t> perm = {3, 0, 4, 1, 2};
    EEGEpoch pe = e;
    for (int64_t c = 0; c < 5; ++c) {
        for (int64_t t = 0; t < 8; ++t) pe.data.at({c, t}) = e.data.at({perm[size_t(c)], t});
        pe.channel_names[size_t(c)] = e.channel_names[size_t(perm[size_t(c)])];
    }
    auto p2 = make_atm(cfg, 5, 8);
    p2.store = p.store;
    auto& ws = p2.store.get("tsconv.ws").value;
    const auto& ws0 = p.store.get("tsconv.ws").value;
    for (int64_t a = 0; a < 5; ++a)
        for (int64_t b = 0; b < 5; ++b) ws.at({a, b}) = ws0.at({perm[size_t(a)], perm[size_t(b)]});

    auto z2 = encode_epoch(pe, p2);
    for (size_t i = 0; i < z.v.size(); ++i) CHECK(z2.v[i] == Catch::Approx(z.v[i]).margin(1e-6));
}

TEST_CASE("train_semantic: loss falls over 20 epochs on 128 synthetic trials") {
    synth::SynthConfig scfg;
    scfg.n_stimuli = 64;
    scfg.n_subjects = 2;
    scfg.noise_sigma = 0.0;
    scfg.seed = 51;
    auto ds = synth::make_synth_dataset(scfg);
    REQUIRE(ds.epochs.size() == 128);

    // unit-norm targets built from the cognitive code (image-embedding stand-in)
    std::map<std::string, clip::Embedding> targets;
    for (const auto& s : ds.stimuli) {
        std::vector<double> v(64, 0.0);
        std::copy(s.cognitive_code.v.begin(), s.cognitive_code.v.end(), v.begin());
        v[60] = s.category == Category::human;
        v[61] = s.category == Category::animal;
        v[62] = s.category == Category::object;
        targets[s.stimulus_id] = {normalized(v), clip::SpaceTag::image};
    }
    std::vector<std::pair<const EEGEpoch*, const clip::Embedding*>> data;
    for (const auto& e : ds.epochs) data.push_back({&e, &targets.at(e.stimulus_id)});

    auto cfg = pipeline_preset();
    cfg.conv_dim = 4;
    auto p = make_atm(cfg, 64, 250);
    AtmTrainConfig tcfg;
    tcfg.epochs = 20;
    auto curve = train_semantic(p, data, tcfg);
    REQUIRE(curve.size() == 20);
    CHECK(curve.back() < curve.front());
    CHECK(p.trained);

    CHECK_THROWS_AS(train_semantic(p, {}, tcfg), Error);
}

TEST_CASE("trained ATM achieves 80 percent top-1 in 10-way retrieval on noiseless data") {
    synth::SynthConfig scfg;
    scfg.n_stimuli = 100;
    scfg.n_subjects = 1;
    scfg.noise_sigma = 0.0;
    scfg.remap_prob = 0.0;
    scfg.seed = 61;
    auto ds = synth::make_synth_dataset(scfg);

    std::vector<std::string> corpus;
    for (const auto& s : ds.stimuli) {
        std::string text;
        for (const auto& a : s.annotations) text += a + " ";
        corpus.push_back(text);
    }
    clip::DualEncoderConfig ccfg;
    ccfg.l_max = 24;
    auto dual = clip::make_dual_encoder(ccfg, corpus);
    std::vector<std::pair<const Tensor*, std::string>> pairs;
    for (size_t i = 0; i < ds.stimuli.size(); ++i) pairs.push_back({&ds.stimuli[i].image, corpus[i]});
    clip::FinetuneConfig fcfg;
    fcfg.trainable_layers = 2;
    fcfg.steps = 80;
    fcfg.batch = 24;
    clip::finetune_dual(dual, pairs, fcfg);

    std::map<std::string, clip::Embedding> zimg;
    for (const auto& s : ds.stimuli) zimg[s.stimulus_id] = clip::encode_image(dual, s.image);
    std::vector<std::pair<const EEGEpoch*, const clip::Embedding*>> data;
    for (const auto& e : ds.epochs) data.push_back({&e, &zimg.at(e.stimulus_id)});

    auto p = make_atm(pipeline_preset(), 64, 250);
    AtmTrainConfig tcfg;
    tcfg.epochs = 30;
    auto curve = train_semantic(p, data, tcfg);

    int correct = 0, trials = 10;
    for (int i = 0; i < trials; ++i) {
        auto ze = encode_epoch(ds.epochs[size_t(i)], p);
        double best = -2;
        int best_j = -1;
        for (int j = 0; j < 10; ++j) {
            double s = dot(ze.v, zimg.at(ds.epochs[size_t(j)].stimulus_id).v);
            if (s > best) {
                best = s;
                best_j = j;
            }
        }
        if (best_j == i) ++correct;
    }
    INFO("top-1 " << correct << "/10, final loss " << curve.back());
    CHECK(correct >= 8);
}

TEST_CASE("atm checkpoints round-trip") {
    auto p = make_atm(tiny_cfg(), 3, 10);
    p.trained = true;
    auto path = (std::filesystem::temp_directory_path() / "sgdm_atm_test.ckpt").string();
    save_atm(path, p);
    auto q = load_atm(path);
    CHECK(q.channels == 3);
    CHECK(q.samples == 10);
    CHECK(q.t_out == p.t_out);
    CHECK(q.trained);
    CHECK(q.cfg.conv_dim == p.cfg.conv_dim);
    std::filesystem::remove(path);
}
