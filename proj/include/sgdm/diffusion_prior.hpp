#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sgdm/autodiff.hpp"
#include "sgdm/common.hpp"
#include "sgdm/dual_encoder.hpp"
#include "sgdm/serialize.hpp"

// Conditional diffusion prior over the semantic space. Noising is the
// literal variance-exploding form z_t = z + sigma_t * eps; the sampler is a
// deterministic predicted-eps ladder over a strided subset of steps.

namespace sgdm::prior {

struct NoiseSchedule {
    std::vector<double> sigma;  // sigma[t-1], t = 1..steps

    int64_t steps() const { return int64_t(sigma.size()); }

    void validate() const {
        require(!sigma.empty(), "schedule: empty");
        double prev = 0;
        for (double s : sigma) {
            require(s > 0, "schedule: sigma must be strictly positive");
            require(s >= prev, "schedule: sigma must be non-decreasing");
            prev = s;
        }
    }
};

// geometric ladder; sigma_max should dominate the unit embedding norm
inline NoiseSchedule make_geometric_schedule(int64_t steps = 50, double sigma_min = 0.05,
                                             double sigma_max = 5.0) {
    require(steps >= 1 && sigma_min > 0 && sigma_max >= sigma_min, "schedule: bad range");
    NoiseSchedule s;
    for (int64_t t = 0; t < steps; ++t) {
        double frac = steps == 1 ? 1.0 : double(t) / double(steps - 1);
        s.sigma.push_back(sigma_min * std::pow(sigma_max / sigma_min, frac));
    }
    s.validate();
    return s;
}

inline std::vector<double> add_noise(const std::vector<double>& z, int64_t t,
                                     const std::vector<double>& eps, const NoiseSchedule& schedule) {
    require(t >= 1 && t <= schedule.steps(), "add_noise: step out of range");
    require(z.size() == eps.size(), "add_noise: dim mismatch");
    std::vector<double> out(z.size());
    double s = schedule.sigma[size_t(t - 1)];
    for (size_t i = 0; i < z.size(); ++i) out[i] = z[i] + s * eps[i];
    return out;
}

inline std::vector<double> timestep_embedding(int64_t t, int64_t dim) {
    std::vector<double> e(static_cast<size_t>(dim));
    for (int64_t j = 0; j < dim; ++j) {
        double rate = std::pow(10000.0, -double(j / 2 * 2) / double(dim));
        e[size_t(j)] = (j % 2 == 0) ? std::sin(double(t) * rate) : std::cos(double(t) * rate);
    }
    return e;
}

struct PriorConfig {
    int64_t embed_dim = 64;  // D
    int64_t temb_dim = 16;
    int64_t hidden = 256;
    int64_t steps = 50;
    double sigma_min = 0.05;
    double sigma_max = 5.0;
    uint64_t seed = 1;
};

struct PriorParams {
    ad::ParamStore store;
    PriorConfig cfg;
    NoiseSchedule schedule;
    bool trained = false;
};

inline PriorParams make_prior(const PriorConfig& cfg) {
    PriorParams p;
    p.cfg = cfg;
    p.schedule = make_geometric_schedule(cfg.steps, cfg.sigma_min, cfg.sigma_max);
    Rng rng(mix_seed(0xd1ff, cfg.seed));
    int64_t in = 2 * cfg.embed_dim + cfg.temb_dim;
    auto& s = p.store;
    s.add("l1.w", ad::xavier_init(rng, {in, cfg.hidden}, in, cfg.hidden));
    s.add("l1.b", Tensor({cfg.hidden}));
    s.add("l2.w", ad::xavier_init(rng, {cfg.hidden, cfg.hidden}, cfg.hidden, cfg.hidden));
    s.add("l2.b", Tensor({cfg.hidden}));
    s.add("out.w", ad::xavier_init(rng, {cfg.hidden, cfg.embed_dim}, cfg.hidden, cfg.embed_dim));
    s.add("out.b", Tensor({cfg.embed_dim}));
    return p;
}

// time-conditioned MLP over concat[z_t, temb, Z_E]
inline ad::Var denoiser_var(ad::Tape& t, PriorParams& p, ad::Var z_t, ad::Var temb, ad::Var z_e) {
    auto x = t.concat_last({z_t, temb, z_e});
    auto h1 = t.gelu(t.add_bias(t.matmul(x, t.param(p.store.get("l1.w"))), t.param(p.store.get("l1.b"))));
    auto h2 = t.gelu(t.add_bias(t.matmul(h1, t.param(p.store.get("l2.w"))), t.param(p.store.get("l2.b"))));
    return t.add_bias(t.matmul(h2, t.param(p.store.get("out.w"))), t.param(p.store.get("out.b")));
}

inline std::vector<double> denoise_eps(PriorParams& p, const std::vector<double>& z_t, int64_t t,
                                       const std::vector<double>& z_e) {
    ad::Tape tape;
    auto out = denoiser_var(
        tape, p, tape.input(Tensor({1, int64_t(z_t.size())}, std::vector<double>(z_t))),
        tape.input(Tensor({1, p.cfg.temb_dim}, timestep_embedding(t, p.cfg.temb_dim))),
        tape.input(Tensor({1, int64_t(z_e.size())}, std::vector<double>(z_e))));
    return tape.val(out).v;
}

struct PriorItem {
    std::vector<double> z_i;  // target image embedding
    std::vector<double> z_e;  // EEG-derived conditioning
};

// per-item draws are seeded from the item contents, so the Monte-Carlo loss
// is a pure mean over items and invariant to batch order
inline std::pair<int64_t, std::vector<double>> item_draw(const PriorItem& item,
                                                         const NoiseSchedule& schedule,
                                                         uint64_t seed) {
    uint64_t h = mix_seed(seed, fnv1a64(item.z_i.data(), item.z_i.size() * sizeof(double)));
    h = mix_seed(h, fnv1a64(item.z_e.data(), item.z_e.size() * sizeof(double)));
    Rng rng(h);
    int64_t t = 1 + int64_t(rng.below(uint64_t(schedule.steps())));
    std::vector<double> eps(item.z_i.size());
    for (auto& e : eps) e = rng.gaussian();
    return {t, eps};
}

using DenoiserFn = std::function<std::vector<double>(size_t item_index, const std::vector<double>& z_t,
                                                     int64_t t, const std::vector<double>& z_e)>;

// Monte-Carlo denoising objective with an injectable denoiser (test harness)
inline double prior_loss_with(const std::vector<PriorItem>& batch, const NoiseSchedule& schedule,
                              uint64_t seed, const DenoiserFn& fn) {
    require(!batch.empty(), "prior_loss: empty batch");
    double total = 0;
    for (size_t i = 0; i < batch.size(); ++i) {
        auto [t, eps] = item_draw(batch[i], schedule, seed);
        auto z_t = add_noise(batch[i].z_i, t, eps, schedule);
        auto eps_hat = fn(i, z_t, t, batch[i].z_e);
        require(eps_hat.size() == eps.size(), "prior_loss: denoiser dim mismatch");
        double s = 0;
        for (size_t j = 0; j < eps.size(); ++j) {
            double d = eps_hat[j] - eps[j];
            s += d * d;
        }
        total += s;
    }
    return total / double(batch.size());
}

inline double prior_loss(const std::vector<PriorItem>& batch, PriorParams& p, uint64_t seed) {
    return prior_loss_with(batch, p.schedule, seed,
                           [&](size_t, const std::vector<double>& z_t, int64_t t,
                               const std::vector<double>& z_e) { return denoise_eps(p, z_t, t, z_e); });
}

// graph version of the same objective (identical draws), for training and
// gradient checks
inline ad::Var prior_loss_var(ad::Tape& tape, PriorParams& p, const std::vector<PriorItem>& batch,
                              uint64_t seed) {
    require(!batch.empty(), "prior_loss: empty batch");
    int64_t B = int64_t(batch.size());
    int64_t D = p.cfg.embed_dim;
    Tensor z_t({B, D}), temb({B, p.cfg.temb_dim}), z_e({B, D}), eps({B, D});
    for (int64_t i = 0; i < B; ++i) {
        const auto& item = batch[size_t(i)];
        require(int64_t(item.z_i.size()) == D && int64_t(item.z_e.size()) == D,
                "prior_loss: dim mismatch");
        auto [t, e] = item_draw(item, p.schedule, seed);
        auto noisy = add_noise(item.z_i, t, e, p.schedule);
        auto te = timestep_embedding(t, p.cfg.temb_dim);
        std::copy(noisy.begin(), noisy.end(), z_t.v.begin() + i * D);
        std::copy(e.begin(), e.end(), eps.v.begin() + i * D);
        std::copy(te.begin(), te.end(), temb.v.begin() + i * p.cfg.temb_dim);
        std::copy(item.z_e.begin(), item.z_e.end(), z_e.v.begin() + i * D);
    }
    auto eps_hat = denoiser_var(tape, p, tape.input(std::move(z_t)), tape.input(std::move(temb)),
                                tape.input(std::move(z_e)));
    auto diff = tape.sub(eps_hat, tape.input(std::move(eps)));
    return tape.scale(tape.mean_all(tape.square(diff)), double(D));  // sum dims, mean items
}

// deterministic predicted-eps ladder from sigma_max down to zero
inline clip::Embedding sample_prior(const std::vector<double>& z_e, PriorParams& p,
                                    int64_t n_sample_steps, uint64_t seed) {
    require(n_sample_steps >= 1, "sample_prior: need at least one step");
    int64_t T = p.schedule.steps();
    std::vector<int64_t> ladder;
    for (int64_t k = 0; k < n_sample_steps; ++k) {
        int64_t t = n_sample_steps == 1
                        ? T
                        : T - int64_t(std::llround(double(k) * double(T - 1) / double(n_sample_steps - 1)));
        ladder.push_back(std::max<int64_t>(1, t));
    }

    Rng rng(mix_seed(0x5a3f1e, seed));
    std::vector<double> x(z_e.size());
    double sigma_start = p.schedule.sigma.back();
    for (auto& v : x) v = sigma_start * rng.gaussian();

    for (size_t k = 0; k < ladder.size(); ++k) {
        int64_t t = ladder[k];
        double sigma_t = p.schedule.sigma[size_t(t - 1)];
        double sigma_next = k + 1 < ladder.size() ? p.schedule.sigma[size_t(ladder[k + 1] - 1)] : 0.0;
        auto eps_hat = denoise_eps(p, x, t, z_e);
        for (size_t j = 0; j < x.size(); ++j) x[j] -= (sigma_t - sigma_next) * eps_hat[j];
    }
    return {normalized(x), clip::SpaceTag::prior};
}

struct PriorTrainConfig {
    int steps = 400;
    int batch = 64;
    double lr = 1e-3;
    uint64_t seed = 9;
};

inline std::vector<double> train_prior(PriorParams& p, const std::vector<PriorItem>& data,
                                       const PriorTrainConfig& cfg) {
    require(!data.empty(), "train_prior: empty training set");
    Rng rng(mix_seed(0xd1ff2, cfg.seed));
    ad::AdamConfig adam{cfg.lr};
    std::vector<double> curve;
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<PriorItem> batch;
        for (int i = 0; i < cfg.batch; ++i) batch.push_back(data[rng.below(data.size())]);
        p.store.zero_grad();
        ad::Tape tape;
        auto loss = prior_loss_var(tape, p, batch, rng.next_u64());
        tape.backward(loss);
        ad::adam_step(p.store, adam);
        curve.push_back(tape.val(loss).v[0]);
    }
    p.trained = true;
    return curve;
}

inline void save_prior(const std::string& path, const PriorParams& p) {
    json meta = {{"kind", "diffusion-prior"},
                 {"trained", p.trained},
                 {"schedule", p.schedule.sigma},
                 {"config",
                  {{"embed_dim", p.cfg.embed_dim},
                   {"temb_dim", p.cfg.temb_dim},
                   {"hidden", p.cfg.hidden},
                   {"steps", p.cfg.steps},
                   {"sigma_min", p.cfg.sigma_min},
                   {"sigma_max", p.cfg.sigma_max},
                   {"seed", p.cfg.seed}}}};
    save_checkpoint(path, store_to_checkpoint(p.store, meta));
}

inline PriorParams load_prior(const std::string& path) {
    auto ck = load_checkpoint(path);
    PriorParams p;
    const auto& c = ck.meta.at("config");
    p.cfg.embed_dim = c.at("embed_dim");
    p.cfg.temb_dim = c.at("temb_dim");
    p.cfg.hidden = c.at("hidden");
    p.cfg.steps = c.at("steps");
    p.cfg.sigma_min = c.at("sigma_min");
    p.cfg.sigma_max = c.at("sigma_max");
    p.cfg.seed = c.at("seed");
    p.schedule.sigma = ck.meta.at("schedule").get<std::vector<double>>();
    p.schedule.validate();
    p.trained = ck.meta.value("trained", false);
    checkpoint_to_store(ck, p.store);
    return p;
}

}  // namespace sgdm::prior
