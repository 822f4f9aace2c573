#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sgdm/autodiff.hpp"
#include "sgdm/common.hpp"
#include "sgdm/data.hpp"
#include "sgdm/eeg_encoder.hpp"
#include "sgdm/metrics.hpp"
#include "sgdm/serialize.hpp"

// Stage I structure pathway. A small convolutional VAE supplies reference
// structural latents S_gt at the fixed 4x64x64 contract (1x spatial factor);
// the predictor maps EEG through an ATM-style front end, reshapes to
// [c0,1,1] and upsamples through six stride-2 transposed convolutions (each
// doubling the side and halving the channels) plus two stride-1 refiners.

namespace sgdm::structpred {

struct StructureMap {
    Tensor latent;  // [C_s, H_s, W_s]
    Tensor mask;    // [H,W] 0/1, present only after structure_to_mask
    bool has_mask = false;
};

// ---- reference VAE ----

struct RefVaeConfig {
    int64_t img_size = 64;
    int64_t latent_channels = 4;
    int64_t mid_channels = 16;
    double kl_weight = 1e-4;
    uint64_t seed = 1;
};

struct RefVaeParams {
    ad::ParamStore store;
    RefVaeConfig cfg;
    bool trained = false;
    bool frozen = false;
    double recon_mse = -1;  // training-set reconstruction error, recorded at train time
};

inline RefVaeParams make_ref_vae(const RefVaeConfig& cfg) {
    RefVaeParams p;
    p.cfg = cfg;
    Rng rng(mix_seed(0x4ae0, cfg.seed));
    auto& s = p.store;
    int64_t m = cfg.mid_channels, L = cfg.latent_channels;
    s.add("enc1.w", ad::xavier_init(rng, {m, 3, 3, 3}, 27, m));
    s.add("enc1.b", ad::gaussian_init(rng, {m}, 0.01));
    s.add("enc2.w", ad::xavier_init(rng, {m, m, 3, 3}, 9 * m, m));
    s.add("enc2.b", ad::gaussian_init(rng, {m}, 0.01));
    s.add("enc3.w", ad::xavier_init(rng, {2 * L, m, 3, 3}, 9 * m, 2 * L));
    s.add("enc3.b", Tensor({2 * L}));
    s.add("dec1.w", ad::xavier_init(rng, {m, L, 3, 3}, 9 * L, m));
    s.add("dec1.b", ad::gaussian_init(rng, {m}, 0.01));
    s.add("dec2.w", ad::xavier_init(rng, {m, m, 3, 3}, 9 * m, m));
    s.add("dec2.b", ad::gaussian_init(rng, {m}, 0.01));
    s.add("dec3.w", ad::xavier_init(rng, {3, m, 3, 3}, 9 * m, 3));
    s.add("dec3.b", Tensor({3}));
    return p;
}

struct VaePosterior {
    ad::Var mu, logvar;
};

inline VaePosterior vae_encode_var(ad::Tape& t, RefVaeParams& p, ad::Var images) {
    auto& s = p.store;
    auto h1 = t.relu(t.add_chan_bias(t.conv2d(t.add_scalar(images, -0.5), t.param(s.get("enc1.w")), 1, 1),
                                     t.param(s.get("enc1.b"))));
    auto h2 = t.relu(t.add_chan_bias(t.conv2d(h1, t.param(s.get("enc2.w")), 1, 1), t.param(s.get("enc2.b"))));
    auto h3 = t.add_chan_bias(t.conv2d(h2, t.param(s.get("enc3.w")), 1, 1), t.param(s.get("enc3.b")));
    int64_t L = p.cfg.latent_channels;
    return {t.slice_chan(h3, 0, L), t.slice_chan(h3, L, 2 * L)};
}

inline ad::Var vae_decode_var(ad::Tape& t, RefVaeParams& p, ad::Var z) {
    auto& s = p.store;
    auto h1 = t.relu(t.add_chan_bias(t.conv2d(z, t.param(s.get("dec1.w")), 1, 1), t.param(s.get("dec1.b"))));
    auto h2 = t.relu(t.add_chan_bias(t.conv2d(h1, t.param(s.get("dec2.w")), 1, 1), t.param(s.get("dec2.b"))));
    auto out = t.add_chan_bias(t.conv2d(h2, t.param(s.get("dec3.w")), 1, 1), t.param(s.get("dec3.b")));
    return t.add_scalar(out, 0.5);
}

// posterior mean latent, deterministic
inline StructureMap vae_encode_reference(const Tensor& image, RefVaeParams& p) {
    require_state(p.trained, "reference VAE is not trained");
    require(image.rank() == 3 && image.dim(0) == 3, "vae_encode_reference: [3,H,W] expected");
    ad::Tape t;
    auto post = vae_encode_var(t, p, t.input(image.reshaped({1, 3, image.dim(1), image.dim(2)})));
    const auto& mu = t.val(post.mu);
    StructureMap s;
    s.latent = mu.reshaped({mu.dim(1), mu.dim(2), mu.dim(3)});
    return s;
}

inline Tensor vae_decode(const Tensor& latent, RefVaeParams& p) {
    require_state(p.trained, "reference VAE decoder is not trained");
    require(latent.rank() == 3, "vae_decode: [C,H,W] expected");
    ad::Tape t;
    auto img = vae_decode_var(t, p, t.input(latent.reshaped({1, latent.dim(0), latent.dim(1), latent.dim(2)})));
    const auto& o = t.val(img);
    return o.reshaped({o.dim(1), o.dim(2), o.dim(3)});
}

struct VaeTrainConfig {
    int epochs = 40;
    int batch = 16;
    double lr = 2e-3;
    uint64_t seed = 11;
};

inline std::vector<double> train_ref_vae(RefVaeParams& p, const std::vector<const Tensor*>& images,
                                         const VaeTrainConfig& cfg) {
    require(!images.empty(), "train_ref_vae: no images");
    Rng rng(mix_seed(0x4ae1, cfg.seed));
    ad::AdamConfig adam{cfg.lr};
    std::vector<double> curve;
    std::vector<size_t> order(images.size());
    std::iota(order.begin(), order.end(), 0);

    for (int ep = 0; ep < cfg.epochs; ++ep) {
        rng.shuffle(order);
        double ep_loss = 0;
        int nb = 0;
        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch)) {
            size_t end = std::min(order.size(), start + size_t(cfg.batch));
            std::vector<const Tensor*> batch;
            for (size_t i = start; i < end; ++i) batch.push_back(images[order[i]]);
            auto x = metrics::stack_images(batch);
            p.store.zero_grad();
            ad::Tape t;
            auto xin = t.input(x);
            auto post = vae_encode_var(t, p, xin);
            Tensor eps_t(t.val(post.mu).shape);
            for (auto& v : eps_t.v) v = rng.gaussian();
            auto eps = t.input(std::move(eps_t));
            auto std_half = t.exp_op(t.scale(post.logvar, 0.5));
            auto z = t.add(post.mu, t.mul(std_half, eps));
            auto recon = vae_decode_var(t, p, z);
            auto rec_loss = t.mean_all(t.square(t.sub(recon, xin)));
            // KL(N(mu, sigma) || N(0,1)) averaged per latent entry
            auto kl = t.scale(
                t.mean_all(t.sub(t.add(t.square(post.mu), t.exp_op(post.logvar)),
                                 t.add_scalar(post.logvar, 1.0))),
                0.5);
            auto loss = t.add(rec_loss, t.scale(kl, p.cfg.kl_weight));
            t.backward(loss);
            ad::adam_step(p.store, adam);
            ep_loss += t.val(rec_loss).v[0];
            ++nb;
        }
        curve.push_back(ep_loss / std::max(1, nb));
    }
    p.trained = true;
    p.recon_mse = curve.back();
    return curve;
}

// ---- EEG -> structure predictor ----

struct StructPredictorConfig {
    atm::AtmConfig front = atm::pipeline_preset();
    int64_t latent_channels = 4;  // C_s
    int64_t latent_size = 64;     // H_s = W_s, fixed by the six-doubling stack
    bool code_conditioning = true;
    double code_weight = 0.1;  // auxiliary pooled-code loss weight
    uint64_t seed = 1;
};

struct StructPredictorParams {
    ad::ParamStore store;  // deconv stack + bottleneck + code heads
    atm::AtmParams front;  // ATM-style embedding + channel attention, separate weights
    StructPredictorConfig cfg;
    bool trained = false;

    int64_t c0() const { return cfg.latent_channels * 64; }
};

inline StructPredictorParams make_struct_predictor(const StructPredictorConfig& cfg,
                                                   int64_t channels, int64_t samples) {
    require(cfg.latent_size == 64, "struct predictor: six doublings fix the 64x64 latent side");
    StructPredictorParams p;
    p.cfg = cfg;
    auto fcfg = cfg.front;
    fcfg.seed = mix_seed(0x57f0, cfg.seed);
    p.front = atm::make_atm(fcfg, channels, samples);

    int64_t c0 = p.c0();
    require(c0 == cfg.latent_channels * (1 << 6), "struct predictor: c0 must equal C_s * 2^6");

    Rng rng(mix_seed(0x57f1, cfg.seed));
    auto& s = p.store;
    int64_t F = p.front.token_width();
    s.add("bottleneck.w", ad::xavier_init(rng, {F, c0}, F, c0));
    s.add("bottleneck.b", Tensor({c0}));
    s.add("code_in.w", Tensor({49, c0}));  // zero-init, bias-free conditioning head
    int64_t ch = c0;
    for (int up = 0; up < 6; ++up) {
        int64_t next = ch / 2;
        s.add("up" + std::to_string(up) + ".w",
              ad::xavier_init(rng, {ch, next, 4, 4}, ch * 16, next * 16));
        // small nonzero bias keeps ReLU pre-activations off the exact kink
        s.add("up" + std::to_string(up) + ".b", ad::gaussian_init(rng, {next}, 0.01));
        ch = next;
    }
    require(ch == cfg.latent_channels, "struct predictor: channel halving must end at C_s");
    s.add("refine1.w", ad::xavier_init(rng, {ch, ch, 3, 3}, 9 * ch, 9 * ch));
    s.add("refine1.b", ad::gaussian_init(rng, {ch}, 0.01));
    s.add("refine2.w", ad::xavier_init(rng, {ch, ch, 3, 3}, 9 * ch, 9 * ch));
    s.add("refine2.b", ad::gaussian_init(rng, {ch}, 0.01));
    s.add("code_out.w", ad::xavier_init(rng, {ch, 1}, ch, 1));  // pooled 7x7 readout
    return p;
}

struct StructForward {
    ad::Var latent;                        // [B,C_s,64,64]
    std::vector<std::vector<int64_t>> spatial_trace;  // side length after each stage
};

inline StructForward predict_structure_var(ad::Tape& t, StructPredictorParams& p, ad::Var epochs,
                                           const Tensor* code /*[B,49] or null*/) {
    auto h = atm::embed_channels_var(t, p.front, epochs);
    auto att = atm::channel_attention_var(t, p.front, h);
    auto shape = t.val(att.out).shape;
    int64_t B = shape[0], C = shape[1];
    int64_t F = shape[2] * shape[3];
    auto pooled = t.mean_axis1(t.reshape(att.out, {B, C, F}));
    auto bott = t.add_bias(t.matmul(t.layernorm_last(pooled), t.param(p.store.get("bottleneck.w"))),
                           t.param(p.store.get("bottleneck.b")));
    if (code != nullptr) {
        require(p.cfg.code_conditioning, "code given but conditioning head is disabled");
        require(code->rank() == 2 && code->dim(0) == B && code->dim(1) == 49,
                "predict_structure: code must be [B,49]");
        bott = t.add(bott, t.matmul(t.input(*code), t.param(p.store.get("code_in.w"))));
    }
    auto x = t.reshape(bott, {B, p.c0(), 1, 1});

    StructForward out;
    out.spatial_trace.push_back({1, 1});
    for (int up = 0; up < 6; ++up) {
        x = t.relu(t.add_chan_bias(
            t.conv_transpose2d(x, t.param(p.store.get("up" + std::to_string(up) + ".w")), 2, 1),
            t.param(p.store.get("up" + std::to_string(up) + ".b"))));
        out.spatial_trace.push_back({t.val(x).dim(2), t.val(x).dim(3)});
    }
    x = t.relu(t.add_chan_bias(t.conv_transpose2d(x, t.param(p.store.get("refine1.w")), 1, 1),
                               t.param(p.store.get("refine1.b"))));
    x = t.add_chan_bias(t.conv_transpose2d(x, t.param(p.store.get("refine2.w")), 1, 1),
                        t.param(p.store.get("refine2.b")));
    out.spatial_trace.push_back({t.val(x).dim(2), t.val(x).dim(3)});
    out.latent = x;
    return out;
}

inline StructureMap predict_structure(const EEGEpoch& epoch, StructPredictorParams& p,
                                      const Tensor* code7x7 = nullptr) {
    epoch.validate();
    ad::Tape t;
    Tensor code_row;
    const Tensor* code_ptr = nullptr;
    if (code7x7 != nullptr) {
        require(code7x7->shape == std::vector<int64_t>{7, 7}, "predict_structure: code must be 7x7");
        code_row = code7x7->reshaped({1, 49});
        code_ptr = &code_row;
    }
    auto fwd = predict_structure_var(t, p, t.input(atm::epochs_to_batch({&epoch})), code_ptr);
    const auto& latent = t.val(fwd.latent);
    StructureMap s;
    s.latent = latent.reshaped({latent.dim(1), latent.dim(2), latent.dim(3)});
    return s;
}

inline double struct_loss(const StructureMap& s, const StructureMap& s_gt) {
    require(s.latent.shape == s_gt.latent.shape, "struct_loss: shape mismatch");
    double acc = 0;
    for (size_t i = 0; i < s.latent.v.size(); ++i) {
        double d = s.latent.v[i] - s_gt.latent.v[i];
        acc += d * d;
    }
    return acc / double(s.latent.numel());
}

// decode the latent and threshold luminance (dark foreground on light ground)
inline Tensor structure_to_mask(const StructureMap& s, RefVaeParams& vae, double threshold = 0.5) {
    auto img = vae_decode(s.latent, vae);
    for (auto& v : img.v) v = std::clamp(v, 0.0, 1.0);
    return metrics::image_to_mask(img, threshold);
}

struct StructTrainItem {
    const EEGEpoch* epoch;
    Tensor s_gt;  // [C_s,64,64] reference latent
    Tensor code;  // [7,7]
};

struct StructTrainConfig {
    int epochs = 12;
    int batch = 16;
    double lr = 1e-3;
    uint64_t seed = 13;
};

inline std::vector<double> train_structure(StructPredictorParams& p, RefVaeParams& vae,
                                           const std::vector<StructTrainItem>& data,
                                           const StructTrainConfig& cfg) {
    require(!data.empty(), "train_structure: empty training set");
    require_state(vae.trained, "train_structure: reference VAE must be trained first");
    require_state(vae.frozen, "train_structure: reference VAE must be frozen (leakage guard)");

    Rng rng(mix_seed(0x57f2, cfg.seed));
    ad::AdamConfig adam{cfg.lr};
    std::vector<double> curve;
    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    bool use_code_loss = p.cfg.code_weight > 0;
    for (int ep = 0; ep < cfg.epochs; ++ep) {
        rng.shuffle(order);
        double ep_loss = 0;
        int nb = 0;
        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch)) {
            size_t end = std::min(order.size(), start + size_t(cfg.batch));
            std::vector<const EEGEpoch*> epochs;
            int64_t B = int64_t(end - start);
            Tensor s_gt({B, p.cfg.latent_channels, 64, 64});
            Tensor codes({B, 49});
            for (size_t i = start; i < end; ++i) {
                const auto& item = data[order[i]];
                epochs.push_back(item.epoch);
                std::copy(item.s_gt.v.begin(), item.s_gt.v.end(),
                          s_gt.v.begin() + int64_t(i - start) * item.s_gt.numel());
                std::copy(item.code.v.begin(), item.code.v.end(),
                          codes.v.begin() + int64_t(i - start) * 49);
            }
            p.store.zero_grad();
            p.front.store.zero_grad();
            ad::Tape t;
            auto fwd = predict_structure_var(t, p, t.input(atm::epochs_to_batch(epochs)), nullptr);
            auto loss = t.mse(fwd.latent, t.input(std::move(s_gt)));
            if (use_code_loss) {
                auto pooled = t.avg_pool_grid(fwd.latent, 7, 7);  // [B,C_s,7,7]
                int64_t Cs = p.cfg.latent_channels;
                auto flat = t.reshape(pooled, {B, Cs, 49});
                auto code_pred = t.matmul(t.transpose_last2(flat), t.param(p.store.get("code_out.w")));
                auto code_loss = t.mse(t.reshape(code_pred, {B, 49}), t.input(std::move(codes)));
                loss = t.add(loss, t.scale(code_loss, p.cfg.code_weight));
            }
            t.backward(loss);
            ad::adam_step(p.store, adam);
            ad::adam_step(p.front.store, adam);
            ep_loss += t.val(loss).v[0];
            ++nb;
        }
        curve.push_back(ep_loss / std::max(1, nb));
    }
    p.trained = true;
    return curve;
}

// ---- checkpoints ----

inline void save_ref_vae(const std::string& path, const RefVaeParams& p) {
    json meta = {{"kind", "ref-vae"},
                 {"trained", p.trained},
                 {"frozen", p.frozen},
                 {"recon_mse", p.recon_mse},
                 {"config",
                  {{"img_size", p.cfg.img_size},
                   {"latent_channels", p.cfg.latent_channels},
                   {"mid_channels", p.cfg.mid_channels},
                   {"kl_weight", p.cfg.kl_weight},
                   {"seed", p.cfg.seed}}}};
    save_checkpoint(path, store_to_checkpoint(p.store, meta));
}

inline RefVaeParams load_ref_vae(const std::string& path) {
    auto ck = load_checkpoint(path);
    RefVaeParams p;
    const auto& c = ck.meta.at("config");
    p.cfg.img_size = c.at("img_size");
    p.cfg.latent_channels = c.at("latent_channels");
    p.cfg.mid_channels = c.at("mid_channels");
    p.cfg.kl_weight = c.at("kl_weight");
    p.cfg.seed = c.at("seed");
    p.trained = ck.meta.value("trained", false);
    p.frozen = ck.meta.value("frozen", false);
    p.recon_mse = ck.meta.value("recon_mse", -1.0);
    checkpoint_to_store(ck, p.store);
    return p;
}

inline void save_struct_predictor(const std::string& path, const StructPredictorParams& p) {
    ad::ParamStore merged;
    for (const auto& [k, v] : p.store.params) merged.add("head." + k, v.value);
    for (const auto& [k, v] : p.front.store.params) merged.add("front." + k, v.value);
    json meta = {{"kind", "struct-predictor"},
                 {"trained", p.trained},
                 {"channels", p.front.channels},
                 {"samples", p.front.samples},
                 {"config",
                  {{"latent_channels", p.cfg.latent_channels},
                   {"latent_size", p.cfg.latent_size},
                   {"code_conditioning", p.cfg.code_conditioning},
                   {"code_weight", p.cfg.code_weight},
                   {"seed", p.cfg.seed},
                   {"front",
                    {{"conv_dim", p.front.cfg.conv_dim},
                     {"conv_kernel", p.front.cfg.conv_kernel},
                     {"conv_stride", p.front.cfg.conv_stride},
                     {"d_k", p.front.cfg.d_k},
                     {"temporal_taps", p.front.cfg.temporal_taps},
                     {"hidden", p.front.cfg.hidden},
                     {"embed_dim", p.front.cfg.embed_dim},
                     {"learned_pos", p.front.cfg.learned_pos},
                     {"seed", p.front.cfg.seed}}}}}};
    save_checkpoint(path, store_to_checkpoint(merged, meta));
}

inline StructPredictorParams load_struct_predictor(const std::string& path) {
    auto ck = load_checkpoint(path);
    const auto& c = ck.meta.at("config");
    StructPredictorConfig cfg;
    cfg.latent_channels = c.at("latent_channels");
    cfg.latent_size = c.at("latent_size");
    cfg.code_conditioning = c.at("code_conditioning");
    cfg.code_weight = c.at("code_weight");
    cfg.seed = c.at("seed");
    const auto& f = c.at("front");
    cfg.front.conv_dim = f.at("conv_dim");
    cfg.front.conv_kernel = f.at("conv_kernel");
    cfg.front.conv_stride = f.at("conv_stride");
    cfg.front.d_k = f.at("d_k");
    cfg.front.temporal_taps = f.at("temporal_taps");
    cfg.front.hidden = f.at("hidden");
    cfg.front.embed_dim = f.at("embed_dim");
    cfg.front.learned_pos = f.at("learned_pos");

    auto p = make_struct_predictor(cfg, ck.meta.at("channels"), ck.meta.at("samples"));
    for (const auto& [k, t] : ck.arrays) {
        if (k.rfind("head.", 0) == 0)
            p.store.get(k.substr(5)).value = t;
        else if (k.rfind("front.", 0) == 0)
            p.front.store.get(k.substr(6)).value = t;
    }
    p.trained = ck.meta.value("trained", false);
    return p;
}

}  // namespace sgdm::structpred
