#include <catch2/catch_amalgamated.hpp>

#include "sgdm/diffusion_prior.hpp"
#include "test_util.hpp"

using namespace sgdm;
using namespace sgdm::prior;

namespace {

std::vector<double> unit_vec(Rng& rng, int64_t d) {
    std::vector<double> v(static_cast<size_t>(d));
    for (auto& x : v) x = rng.gaussian();
    return normalized(v);
}

}  // namespace

TEST_CASE("schedule construction validates positivity and monotonicity") {
    auto s = make_geometric_schedule(50, 0.05, 5.0);
    CHECK(s.steps() == 50);
    CHECK(s.sigma.front() == Catch::Approx(0.05));
    CHECK(s.sigma.back() == Catch::Approx(5.0));

    NoiseSchedule bad1{{0.1, 0.05}};
    CHECK_THROWS_AS(bad1.validate(), Error);
    NoiseSchedule bad2{{0.0, 0.1}};
    CHECK_THROWS_AS(bad2.validate(), Error);
    CHECK_THROWS_AS(make_geometric_schedule(10, -1.0, 5.0), Error);
}

TEST_CASE("add_noise: zero sigma and zero draw both return the input") {
    std::vector<double> z = {0.5, -0.25, 1.0};
    NoiseSchedule test_only{{0.0}};  // permissible for direct calls; validate() would reject
    std::vector<double> eps = {1.0, 2.0, 3.0};
    CHECK(add_noise(z, 1, eps, test_only) == z);

    auto s = make_geometric_schedule(10, 0.1, 2.0);
    std::vector<double> zero(3, 0.0);
    CHECK(add_noise(z, 7, zero, s) == z);
    CHECK_THROWS_AS(add_noise(z, 0, eps, s), Error);
    CHECK_THROWS_AS(add_noise(z, 11, eps, s), Error);
}

TEST_CASE("add_noise second moment matches sigma^2 D over 10k draws") {
    auto s = make_geometric_schedule(10, 0.1, 2.0);
    int64_t t = 6, D = 8;
    double sigma = s.sigma[size_t(t - 1)];
    Rng rng(99);
    std::vector<double> z = unit_vec(rng, D);
    double acc = 0;
    int n = 10000;
    for (int i = 0; i < n; ++i) {
        std::vector<double> eps(static_cast<size_t>(D));
        for (auto& e : eps) e = rng.gaussian();
        auto zt = add_noise(z, t, eps, s);
        for (int64_t j = 0; j < D; ++j) acc += (zt[size_t(j)] - z[size_t(j)]) * (zt[size_t(j)] - z[size_t(j)]);
    }
    double expected = sigma * sigma * double(D);
    CHECK(acc / n == Catch::Approx(expected).epsilon(0.05));
}

TEST_CASE("prior loss is zero for an oracle denoiser and about D for a zero denoiser") {
    auto s = make_geometric_schedule(20, 0.05, 5.0);
    Rng rng(3);
    int64_t D = 16;
    std::vector<PriorItem> batch;
    for (int i = 0; i < 600; ++i) batch.push_back({unit_vec(rng, D), unit_vec(rng, D)});

    // harness: recover the exact eps from the known z_i
    auto oracle = [&](size_t i, const std::vector<double>& z_t, int64_t t,
                      const std::vector<double>&) {
        double sigma = s.sigma[size_t(t - 1)];
        std::vector<double> eps(z_t.size());
        for (size_t j = 0; j < z_t.size(); ++j) eps[j] = (z_t[j] - batch[i].z_i[j]) / sigma;
        return eps;
    };
    CHECK(prior_loss_with(batch, s, 42, oracle) == Catch::Approx(0.0).margin(1e-18));

    auto zero_fn = [&](size_t, const std::vector<double>& z_t, int64_t,
                       const std::vector<double>&) { return std::vector<double>(z_t.size(), 0.0); };
    CHECK(prior_loss_with(batch, s, 42, zero_fn) == Catch::Approx(double(D)).epsilon(0.05));
}

TEST_CASE("prior loss is invariant to batch order") {
    auto s = make_geometric_schedule(20, 0.05, 5.0);
    Rng rng(7);
    std::vector<PriorItem> batch;
    for (int i = 0; i < 40; ++i) batch.push_back({unit_vec(rng, 8), unit_vec(rng, 8)});
    auto zero_fn = [](size_t, const std::vector<double>& z_t, int64_t, const std::vector<double>&) {
        return std::vector<double>(z_t.size(), 0.0);
    };
    double a = prior_loss_with(batch, s, 5, zero_fn);
    std::reverse(batch.begin(), batch.end());
    double b = prior_loss_with(batch, s, 5, zero_fn);
    CHECK(a == Catch::Approx(b).margin(1e-12));
}

TEST_CASE("prior loss gradient matches finite differences at D=8") {
    PriorConfig cfg;
    cfg.embed_dim = 8;
    cfg.temb_dim = 4;
    cfg.hidden = 12;
    cfg.steps = 10;
    auto p = make_prior(cfg);
    Rng rng(11);
    std::vector<PriorItem> batch;
    for (int i = 0; i < 4; ++i) batch.push_back({unit_vec(rng, 8), unit_vec(rng, 8)});
    auto loss = [&](ad::ParamStore& st, bool bwd) {
        ad::Tape tape;
        auto l = prior_loss_var(tape, p, batch, 33);
        if (bwd) tape.backward(l);
        return tape.val(l).v[0];
    };
    CHECK(sgdm_test::max_rel_err(p.store, loss) < 1e-4);
}

TEST_CASE("graph loss and eager loss agree on the same draws") {
    PriorConfig cfg;
    cfg.embed_dim = 8;
    cfg.temb_dim = 4;
    cfg.hidden = 12;
    cfg.steps = 10;
    auto p = make_prior(cfg);
    Rng rng(13);
    std::vector<PriorItem> batch;
    for (int i = 0; i < 10; ++i) batch.push_back({unit_vec(rng, 8), unit_vec(rng, 8)});
    ad::Tape tape;
    double graph_loss = tape.val(prior_loss_var(tape, p, batch, 77)).v[0];
    double eager_loss = prior_loss(batch, p, 77);
    CHECK(graph_loss == Catch::Approx(eager_loss).margin(1e-10));
}

TEST_CASE("sampling is deterministic, unit norm, and closed form at one step") {
    PriorConfig cfg;
    cfg.embed_dim = 8;
    cfg.temb_dim = 4;
    cfg.hidden = 12;
    cfg.steps = 10;
    auto p = make_prior(cfg);
    Rng rng(17);
    auto z_e = unit_vec(rng, 8);

    auto a = sample_prior(z_e, p, 5, 123);
    auto b = sample_prior(z_e, p, 5, 123);
    CHECK(a.v == b.v);
    CHECK(std::abs(l2_norm(a.v) - 1.0) <= 1e-6);
    CHECK(a.tag == clip::SpaceTag::prior);
    CHECK_THROWS_AS(sample_prior(z_e, p, 0, 1), Error);

    // one step: x = sigma_T eps0 - sigma_T * eps_hat(x0, T, z_e), then normalized
    auto one = sample_prior(z_e, p, 1, 55);
    double sigma_T = p.schedule.sigma.back();
    Rng r0(mix_seed(0x5a3f1e, 55));
    std::vector<double> x0(8);
    for (auto& v : x0) v = sigma_T * r0.gaussian();
    auto eps_hat = denoise_eps(p, x0, p.schedule.steps(), z_e);
    std::vector<double> expect(8);
    for (size_t j = 0; j < 8; ++j) expect[j] = x0[j] - sigma_T * eps_hat[j];
    expect = normalized(expect);
    for (size_t j = 0; j < 8; ++j) CHECK(one.v[j] == Catch::Approx(expect[j]).margin(1e-9));
}

TEST_CASE("training on 500 pairs at least halves the sampling error vs untrained") {
    PriorConfig cfg;
    cfg.embed_dim = 16;
    cfg.temb_dim = 8;
    cfg.hidden = 128;
    cfg.steps = 30;
    auto trained = make_prior(cfg);
    auto untrained = make_prior(cfg);

    Rng rng(23);
    std::vector<PriorItem> data;
    for (int i = 0; i < 500; ++i) {
        auto z = unit_vec(rng, 16);
        std::vector<double> z_e(z);
        for (auto& v : z_e) v += 0.15 * rng.gaussian();
        z_e = normalized(z_e);
        data.push_back({z, z_e});
    }
    PriorTrainConfig tcfg;
    tcfg.steps = 800;
    auto curve = train_prior(trained, data, tcfg);
    CHECK(curve.back() < curve.front());

    auto mean_sq_err = [&](PriorParams& p) {
        double acc = 0;
        int n = 100;
        for (int i = 0; i < n; ++i) {
            auto s = sample_prior(data[size_t(i)].z_e, p, 20, uint64_t(1000 + i));
            for (size_t j = 0; j < s.v.size(); ++j) {
                double d = s.v[j] - data[size_t(i)].z_i[j];
                acc += d * d;
            }
        }
        return acc / n;
    };
    double err_trained = mean_sq_err(trained);
    double err_untrained = mean_sq_err(untrained);
    INFO("trained " << err_trained << " untrained " << err_untrained);
    CHECK(err_trained < 0.5 * err_untrained);
}

TEST_CASE("prior checkpoints round-trip including the schedule") {
    PriorConfig cfg;
    cfg.embed_dim = 8;
    cfg.temb_dim = 4;
    cfg.hidden = 12;
    cfg.steps = 7;
    auto p = make_prior(cfg);
    p.trained = true;
    auto path = (std::filesystem::temp_directory_path() / "sgdm_prior_test.ckpt").string();
    save_prior(path, p);
    auto q = load_prior(path);
    CHECK(q.schedule.sigma == p.schedule.sigma);
    CHECK(q.cfg.hidden == 12);
    CHECK(q.trained);
    std::filesystem::remove(path);
}
