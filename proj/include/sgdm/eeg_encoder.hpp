#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sgdm/autodiff.hpp"
#include "sgdm/common.hpp"
#include "sgdm/data.hpp"
#include "sgdm/dual_encoder.hpp"
#include "sgdm/serialize.hpp"

// Adaptive Thinking Mapper: shared per-channel 1-D conv embedding with
// positional encoding, self-attention across channels (temporal dimension
// folded into token features), temporal + spatial convolution, and a
// residual MLP projector into the shared semantic space.
//
// The spatial "convolution" is a dense channel-mixing matrix (a full-extent
// kernel over the channel axis, EEGNet-style); channels are mean-pooled
// before the projector, which makes the whole map covariant under channel
// permutations conjugating that matrix.

namespace sgdm::atm {

struct AtmConfig {
    int64_t conv_dim = 32;    // d, per-channel embedding features
    int64_t conv_kernel = 9;  // temporal conv taps ('same' padding)
    int64_t conv_stride = 1;  // T' = ceil(T / stride)
    int64_t d_k = 32;         // attention key dim
    int64_t temporal_taps = 5;
    int64_t hidden = 128;     // projector hidden width
    int64_t embed_dim = 64;   // D
    bool learned_pos = true;  // false: fixed sinusoidal table
    double lambda1 = 1.0;     // contrastive weight
    double lambda2 = 0.5;     // regression weight
    uint64_t seed = 1;
};

// pipeline preset: strided conv keeps the folded token width manageable
inline AtmConfig pipeline_preset() {
    AtmConfig c;
    c.conv_dim = 8;
    c.conv_stride = 5;
    return c;
}

struct AtmParams {
    ad::ParamStore store;
    AtmConfig cfg;
    int64_t channels = 0;
    int64_t samples = 0;
    int64_t t_out = 0;
    bool trained = false;

    int64_t token_width() const { return t_out * cfg.conv_dim; }
};

namespace detail {
inline Tensor sinusoidal_pos(int64_t T, int64_t d) {
    Tensor p({T, d});
    for (int64_t t = 0; t < T; ++t)
        for (int64_t j = 0; j < d; ++j) {
            double rate = std::pow(10000.0, -double(j / 2 * 2) / double(d));
            p.at({t, j}) = (j % 2 == 0) ? std::sin(double(t) * rate) : std::cos(double(t) * rate);
        }
    return p;
}
}  // namespace detail

inline AtmParams make_atm(const AtmConfig& cfg, int64_t channels, int64_t samples) {
    require(cfg.conv_kernel <= samples, "make_atm: conv kernel longer than epoch");
    require(cfg.lambda1 >= 0 && cfg.lambda2 >= 0 && (cfg.lambda1 > 0 || cfg.lambda2 > 0),
            "make_atm: loss weights must be non-negative and not both zero");
    AtmParams p;
    p.cfg = cfg;
    p.channels = channels;
    p.samples = samples;
    int64_t pad = cfg.conv_kernel / 2;
    p.t_out = (samples + 2 * pad - cfg.conv_kernel) / cfg.conv_stride + 1;

    Rng rng(mix_seed(0xa7a1, cfg.seed));
    auto& s = p.store;
    int64_t d = cfg.conv_dim, F = p.token_width();
    s.add("conv.w", ad::xavier_init(rng, {d, cfg.conv_kernel}, cfg.conv_kernel, d));
    s.add("pos", cfg.learned_pos ? ad::gaussian_init(rng, {p.t_out, d}, 0.02)
                                 : detail::sinusoidal_pos(p.t_out, d));
    s.add("attn.wq", ad::xavier_init(rng, {F, cfg.d_k}, F, cfg.d_k));
    s.add("attn.wk", ad::xavier_init(rng, {F, cfg.d_k}, F, cfg.d_k));
    s.add("attn.wv", ad::xavier_init(rng, {F, F}, F, F));
    s.add("tsconv.wt", ad::xavier_init(rng, {cfg.temporal_taps, d, d}, cfg.temporal_taps * d, d));
    s.add("tsconv.ws", ad::xavier_init(rng, {channels, channels}, channels, channels));
    s.add("tsconv.b", Tensor({d}));
    s.add("proj.w1", ad::xavier_init(rng, {F, cfg.hidden}, F, cfg.hidden));
    s.add("proj.b1", Tensor({cfg.hidden}));
    s.add("proj.w2", ad::xavier_init(rng, {cfg.hidden, cfg.embed_dim}, cfg.hidden, cfg.embed_dim));
    s.add("proj.b2", Tensor({cfg.embed_dim}));
    return p;
}

// ---- graph builders (batch-first) ----

// x[B,C,T] -> H[B,C,T',d]: shared conv per channel plus positional encoding
inline ad::Var embed_channels_var(ad::Tape& t, AtmParams& p, ad::Var x) {
    auto h = t.conv1d_shared(x, t.param(p.store.get("conv.w")), p.cfg.conv_stride);
    return t.add_bcast_leading(h, t.param(p.store.get("pos")));
}

struct AttentionOut {
    ad::Var out;   // [B,C,T',d]
    ad::Var attn;  // [B,C,C] softmax rows
};

// self-attention across channels; token features are the folded (T',d) block
inline AttentionOut channel_attention_var(ad::Tape& t, AtmParams& p, ad::Var h) {
    auto hshape = t.val(h).shape;
    int64_t B = hshape[0], C = hshape[1];
    int64_t F = hshape[2] * hshape[3];
    auto tokens = t.reshape(h, {B, C, F});
    auto q = t.matmul(tokens, t.param(p.store.get("attn.wq")));
    auto k = t.matmul(tokens, t.param(p.store.get("attn.wk")));
    auto v = t.matmul(tokens, t.param(p.store.get("attn.wv")));
    auto scores = t.scale(t.bmm(q, t.transpose_last2(k)), 1.0 / std::sqrt(double(p.cfg.d_k)));
    auto attn = t.softmax_last(scores);
    auto mixed = t.add(t.bmm(attn, v), tokens);  // residual
    return {t.reshape(mixed, hshape), attn};
}

// F = relu(W_t * H' + W_s * H' + b); W_t runs along time, W_s mixes channels
inline ad::Var temporal_spatial_conv_var(ad::Tape& t, AtmParams& p, ad::Var h) {
    const auto& hs = t.val(h);
    int64_t B = hs.dim(0), C = hs.dim(1), T = hs.dim(2), d = hs.dim(3);
    auto time_part = t.conv_time_feat(h, t.param(p.store.get("tsconv.wt")));
    // channel mixing: out[c] = sum_c' W_s[c',c] * h[c']
    auto flat = t.reshape(h, {B, C, T * d});
    auto mixed = t.transpose_last2(t.matmul(t.transpose_last2(flat), t.param(p.store.get("tsconv.ws"))));
    auto spatial_part = t.reshape(mixed, {B, C, T, d});
    auto summed = t.add_bias(t.add(time_part, spatial_part), t.param(p.store.get("tsconv.b")));
    return t.relu(summed);
}

// channel-mean pooling, pre-projection LN, two-layer MLP with a residual
// path around the activation and a post-residual LN
inline ad::Var project_semantic_var(ad::Tape& t, AtmParams& p, ad::Var f) {
    const auto& fs = t.val(f);
    int64_t B = fs.dim(0), C = fs.dim(1);
    int64_t F = fs.dim(2) * fs.dim(3);
    require(F == p.token_width(), "project_semantic: flattened width mismatch");
    auto pooled = t.mean_axis1(t.reshape(f, {B, C, F}));
    auto xin = t.layernorm_last(pooled);
    auto pre = t.add_bias(t.matmul(xin, t.param(p.store.get("proj.w1"))), t.param(p.store.get("proj.b1")));
    auto hres = t.add(t.gelu(pre), pre);
    auto hn = t.layernorm_last(hres);
    return t.add_bias(t.matmul(hn, t.param(p.store.get("proj.w2"))), t.param(p.store.get("proj.b2")));
}

inline ad::Var atm_forward_var(ad::Tape& t, AtmParams& p, ad::Var x) {
    auto h = embed_channels_var(t, p, x);
    auto a = channel_attention_var(t, p, h);
    auto f = temporal_spatial_conv_var(t, p, a.out);
    return project_semantic_var(t, p, f);
}

// ---- eager wrappers over single epochs ----

inline Tensor epochs_to_batch(const std::vector<const EEGEpoch*>& epochs) {
    require(!epochs.empty(), "epochs_to_batch: empty batch");
    int64_t C = epochs[0]->channels(), T = epochs[0]->samples();
    Tensor x({int64_t(epochs.size()), C, T});
    for (size_t i = 0; i < epochs.size(); ++i) {
        require(epochs[i]->channels() == C && epochs[i]->samples() == T,
                "epochs_to_batch: inconsistent epoch shapes");
        std::copy(epochs[i]->data.v.begin(), epochs[i]->data.v.end(),
                  x.v.begin() + int64_t(i) * C * T);
    }
    return x;
}

inline Tensor embed_channels(const EEGEpoch& epoch, AtmParams& p) {
    epoch.validate();
    require(p.cfg.conv_kernel <= epoch.samples(), "embed_channels: epoch shorter than kernel");
    ad::Tape t;
    auto h = embed_channels_var(t, p, t.input(epochs_to_batch({&epoch})));
    const auto& hs = t.val(h);
    return hs.reshaped({hs.dim(1), hs.dim(2), hs.dim(3)});
}

inline Tensor channel_attention(const Tensor& h_single, AtmParams& p) {
    ad::Tape t;
    auto h = t.input(h_single.reshaped({1, h_single.dim(0), h_single.dim(1), h_single.dim(2)}));
    auto a = channel_attention_var(t, p, h);
    const auto& os = t.val(a.out);
    return os.reshaped({os.dim(1), os.dim(2), os.dim(3)});
}

inline Tensor temporal_spatial_conv(const Tensor& h_single, AtmParams& p) {
    ad::Tape t;
    auto h = t.input(h_single.reshaped({1, h_single.dim(0), h_single.dim(1), h_single.dim(2)}));
    auto f = temporal_spatial_conv_var(t, p, h);
    const auto& os = t.val(f);
    return os.reshaped({os.dim(1), os.dim(2), os.dim(3)});
}

// D-dim EEG embedding; normalized unless raw = true
inline clip::Embedding project_semantic(const Tensor& f_single, AtmParams& p, bool raw = false) {
    ad::Tape t;
    auto f = t.input(f_single.reshaped({1, f_single.dim(0), f_single.dim(1), f_single.dim(2)}));
    auto z = project_semantic_var(t, p, f);
    if (!raw) z = t.l2_normalize_last(z);
    return {t.val(z).v, clip::SpaceTag::eeg};
}

inline clip::Embedding encode_epoch(const EEGEpoch& epoch, AtmParams& p) {
    ad::Tape t;
    auto z = t.l2_normalize_last(atm_forward_var(t, p, t.input(epochs_to_batch({&epoch}))));
    return {t.val(z).v, clip::SpaceTag::eeg};
}

inline std::vector<clip::Embedding> encode_epoch_batch(const std::vector<const EEGEpoch*>& epochs,
                                                       AtmParams& p) {
    ad::Tape t;
    auto z = t.l2_normalize_last(atm_forward_var(t, p, t.input(epochs_to_batch(epochs))));
    const auto& zs = t.val(z);
    std::vector<clip::Embedding> out;
    for (int64_t b = 0; b < zs.dim(0); ++b)
        out.push_back({{zs.v.begin() + b * zs.dim(1), zs.v.begin() + (b + 1) * zs.dim(1)},
                       clip::SpaceTag::eeg});
    return out;
}

// joint objective on already-computed embeddings (rows of z_i unit norm)
inline double semantic_loss(const Tensor& z_e_normalized, const Tensor& z_i, double lambda1,
                            double lambda2, double tau) {
    require(z_e_normalized.shape == z_i.shape, "semantic_loss: shape mismatch");
    double mse = 0;
    for (size_t i = 0; i < z_i.v.size(); ++i) {
        double dd = z_e_normalized.v[i] - z_i.v[i];
        mse += dd * dd;
    }
    mse /= double(z_i.dim(0));  // mean over items of the squared distance
    double contrastive = lambda1 > 0 ? clip::info_nce_loss(z_e_normalized, z_i, tau) : 0.0;
    return lambda1 * contrastive + lambda2 * mse;
}

struct AtmTrainConfig {
    int epochs = 20;
    int batch = 32;
    double lr = 1e-3;
    double tau = 0.07;
    uint64_t seed = 5;
};

// minimizes lambda1 * L_CLIP + lambda2 * L_MSE against image embeddings
inline std::vector<double> train_semantic(
    AtmParams& p, const std::vector<std::pair<const EEGEpoch*, const clip::Embedding*>>& data,
    const AtmTrainConfig& cfg) {
    require(!data.empty(), "train_semantic: empty training set");
    for (const auto& [e, z] : data)
        require(z->dim() == p.cfg.embed_dim, "train_semantic: target dim mismatch");

    Rng rng(mix_seed(0xa7a2, cfg.seed));
    ad::AdamConfig adam{cfg.lr};
    std::vector<double> curve;
    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    for (int ep = 0; ep < cfg.epochs; ++ep) {
        rng.shuffle(order);
        double ep_loss = 0;
        int nb = 0;
        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch)) {
            size_t end = std::min(order.size(), start + size_t(cfg.batch));
            if (end - start < 2 && p.cfg.lambda1 > 0) break;  // InfoNCE needs pairs
            std::vector<const EEGEpoch*> epochs;
            Tensor zi({int64_t(end - start), p.cfg.embed_dim});
            for (size_t i = start; i < end; ++i) {
                epochs.push_back(data[order[i]].first);
                std::copy(data[order[i]].second->v.begin(), data[order[i]].second->v.end(),
                          zi.v.begin() + int64_t(i - start) * p.cfg.embed_dim);
            }
            p.store.zero_grad();
            ad::Tape t;
            auto ze = t.l2_normalize_last(atm_forward_var(t, p, t.input(epochs_to_batch(epochs))));
            auto zi_var = t.input(zi);
            ad::Var loss;
            auto mse = t.scale(t.mean_all(t.square(t.sub(ze, zi_var))),
                               double(p.cfg.embed_dim));  // per-item squared distance
            if (p.cfg.lambda1 > 0) {
                auto log_tau = t.input(Tensor({1}, {std::log(cfg.tau)}));
                auto nce = clip::info_nce_var(t, ze, zi_var, log_tau);
                loss = t.add(t.scale(nce, p.cfg.lambda1), t.scale(mse, p.cfg.lambda2));
            } else {
                loss = t.scale(mse, p.cfg.lambda2);
            }
            t.backward(loss);
            ad::adam_step(p.store, adam, [&](const std::string& name) {
                return p.cfg.learned_pos || name != "pos";
            });
            ep_loss += t.val(loss).v[0];
            ++nb;
        }
        curve.push_back(ep_loss / std::max(1, nb));
    }
    p.trained = true;
    return curve;
}

inline void save_atm(const std::string& path, const AtmParams& p) {
    json meta = {{"kind", "atm"},
                 {"trained", p.trained},
                 {"channels", p.channels},
                 {"samples", p.samples},
                 {"t_out", p.t_out},
                 {"config",
                  {{"conv_dim", p.cfg.conv_dim},
                   {"conv_kernel", p.cfg.conv_kernel},
                   {"conv_stride", p.cfg.conv_stride},
                   {"d_k", p.cfg.d_k},
                   {"temporal_taps", p.cfg.temporal_taps},
                   {"hidden", p.cfg.hidden},
                   {"embed_dim", p.cfg.embed_dim},
                   {"learned_pos", p.cfg.learned_pos},
                   {"lambda1", p.cfg.lambda1},
                   {"lambda2", p.cfg.lambda2},
                   {"seed", p.cfg.seed}}}};
    save_checkpoint(path, store_to_checkpoint(p.store, meta));
}

inline AtmParams load_atm(const std::string& path) {
    auto ck = load_checkpoint(path);
    AtmParams p;
    const auto& c = ck.meta.at("config");
    p.cfg.conv_dim = c.at("conv_dim");
    p.cfg.conv_kernel = c.at("conv_kernel");
    p.cfg.conv_stride = c.at("conv_stride");
    p.cfg.d_k = c.at("d_k");
    p.cfg.temporal_taps = c.at("temporal_taps");
    p.cfg.hidden = c.at("hidden");
    p.cfg.embed_dim = c.at("embed_dim");
    p.cfg.learned_pos = c.at("learned_pos");
    p.cfg.lambda1 = c.at("lambda1");
    p.cfg.lambda2 = c.at("lambda2");
    p.cfg.seed = c.at("seed");
    p.channels = ck.meta.at("channels");
    p.samples = ck.meta.at("samples");
    p.t_out = ck.meta.at("t_out");
    p.trained = ck.meta.value("trained", false);
    checkpoint_to_store(ck, p.store);
    return p;
}

}  // namespace sgdm::atm
