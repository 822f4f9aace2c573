#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sgdm/autodiff.hpp"
#include "sgdm/common.hpp"
#include "sgdm/serialize.hpp"
#include "sgdm/tensor.hpp"

// Toy-scale text-image dual encoder defining the shared semantic space.
// Word-level tokenizer with a corpus-built vocabulary, two small pre-LN
// transformers, learnable log-temperature (clamped to tau in [0.01, 1]),
// and partial fine-tuning that trains only the last k layers plus heads.

namespace sgdm::clip {

enum class SpaceTag { text, image, eeg, prior };

struct Embedding {
    std::vector<double> v;
    SpaceTag tag = SpaceTag::image;
    int64_t dim() const { return int64_t(v.size()); }
};

// ---- tokenizer ----

struct Vocabulary {
    static constexpr int64_t kPad = 0, kStart = 1, kEnd = 2, kUnk = 3;
    std::map<std::string, int64_t> word_to_id;
    int64_t size() const { return 4 + int64_t(word_to_id.size()); }
};

inline std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch)))
            cur.push_back(char(std::tolower(static_cast<unsigned char>(ch))));
        else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

inline Vocabulary build_vocabulary(const std::vector<std::string>& corpus) {
    std::set<std::string> uniq;
    for (const auto& text : corpus)
        for (const auto& w : split_words(text)) uniq.insert(w);
    Vocabulary v;
    int64_t id = 4;
    for (const auto& w : uniq) v.word_to_id[w] = id++;
    return v;
}

struct TokenSequence {
    std::vector<int64_t> ids;  // length exactly l_max
    int64_t end_index = 0;
};

inline TokenSequence tokenize(const std::string& text, const Vocabulary& vocab, int64_t l_max) {
    require(l_max >= 3, "tokenize: l_max must fit start/end sentinels");
    auto words = split_words(text);
    require(!words.empty(), "tokenize: empty text");
    TokenSequence seq;
    seq.ids.assign(size_t(l_max), Vocabulary::kPad);
    seq.ids[0] = Vocabulary::kStart;
    int64_t pos = 1;
    for (const auto& w : words) {
        if (pos >= l_max - 1) break;  // truncate, leaving room for <end>
        auto it = vocab.word_to_id.find(w);
        seq.ids[size_t(pos++)] = it == vocab.word_to_id.end() ? Vocabulary::kUnk : it->second;
    }
    seq.end_index = std::min<int64_t>(int64_t(words.size()) + 1, l_max - 1);
    seq.ids[size_t(seq.end_index)] = Vocabulary::kEnd;
    return seq;
}

// ---- model ----

struct DualEncoderConfig {
    int64_t embed_dim = 64;  // D
    int64_t text_layers = 2, text_hidden = 64, text_heads = 4;
    int64_t image_layers = 2, image_hidden = 64, image_heads = 4;
    int64_t patch = 8;
    int64_t l_max = 16;
    bool causal_text = true;
    uint64_t seed = 1;
};

// paper-scale preset, kept as configuration rather than a default
inline DualEncoderConfig paper_preset() {
    DualEncoderConfig c;
    c.embed_dim = 1024;
    c.text_layers = 12;
    c.text_hidden = 768;
    c.text_heads = 12;
    c.image_layers = 32;
    c.image_hidden = 1280;
    c.image_heads = 16;
    c.patch = 14;
    c.l_max = 77;
    return c;
}

struct DualEncoderParams {
    ad::ParamStore store;
    DualEncoderConfig cfg;
    Vocabulary vocab;
    bool trained = false;
    bool frozen = false;

    double tau() const {
        double lt = store.get("log_tau").value.v[0];
        return std::exp(std::clamp(lt, std::log(0.01), 0.0));
    }
};

inline int64_t image_token_count(const DualEncoderConfig& cfg, int64_t H, int64_t W) {
    require(H % cfg.patch == 0 && W % cfg.patch == 0,
            "image dims must be divisible by the patch size");
    return (H / cfg.patch) * (W / cfg.patch) + 1;  // + CLS
}

namespace detail {

inline void add_transformer_params(ad::ParamStore& s, Rng& rng, const std::string& prefix,
                                   int64_t layers, int64_t d) {
    for (int64_t l = 0; l < layers; ++l) {
        std::string p = prefix + ".layer" + std::to_string(l) + ".";
        s.add(p + "wq", ad::xavier_init(rng, {d, d}, d, d));
        s.add(p + "wk", ad::xavier_init(rng, {d, d}, d, d));
        s.add(p + "wv", ad::xavier_init(rng, {d, d}, d, d));
        s.add(p + "wo", ad::xavier_init(rng, {d, d}, d, d));
        s.add(p + "mlp.w1", ad::xavier_init(rng, {d, 4 * d}, d, 4 * d));
        s.add(p + "mlp.b1", Tensor({4 * d}));
        s.add(p + "mlp.w2", ad::xavier_init(rng, {4 * d, d}, 4 * d, d));
        s.add(p + "mlp.b2", Tensor({d}));
    }
}

// multi-head self-attention; mask is an additive [B,L,L] tensor (0 / -1e30)
inline ad::Var attention(ad::Tape& t, ad::ParamStore& s, const std::string& prefix, ad::Var x,
                         ad::Var mask, int64_t heads) {
    const auto& xs = t.val(x);
    int64_t d = xs.dim(2);
    int64_t dh = d / heads;
    require(d % heads == 0, "attention: head count must divide width");
    auto q = t.matmul(x, t.param(s.get(prefix + "wq")));
    auto k = t.matmul(x, t.param(s.get(prefix + "wk")));
    auto v = t.matmul(x, t.param(s.get(prefix + "wv")));
    std::vector<ad::Var> head_outs;
    for (int64_t h = 0; h < heads; ++h) {
        auto qh = t.slice_last(q, h * dh, (h + 1) * dh);
        auto kh = t.slice_last(k, h * dh, (h + 1) * dh);
        auto vh = t.slice_last(v, h * dh, (h + 1) * dh);
        auto scores = t.scale(t.bmm(qh, t.transpose_last2(kh)), 1.0 / std::sqrt(double(dh)));
        auto attn = t.softmax_last(t.add(scores, mask));
        head_outs.push_back(t.bmm(attn, vh));
    }
    auto merged = heads == 1 ? head_outs[0] : t.concat_last(head_outs);
    return t.matmul(merged, t.param(s.get(prefix + "wo")));
}

inline ad::Var transformer(ad::Tape& t, ad::ParamStore& s, const std::string& prefix, ad::Var x,
                           ad::Var mask, int64_t layers, int64_t heads) {
    for (int64_t l = 0; l < layers; ++l) {
        std::string p = prefix + ".layer" + std::to_string(l) + ".";
        x = t.add(x, attention(t, s, p, t.layernorm_last(x), mask, heads));
        auto h = t.layernorm_last(x);
        auto m = t.add_bias(t.matmul(t.gelu(t.add_bias(t.matmul(h, t.param(s.get(p + "mlp.w1"))),
                                                       t.param(s.get(p + "mlp.b1")))),
                                     t.param(s.get(p + "mlp.w2"))),
                            t.param(s.get(p + "mlp.b2")));
        x = t.add(x, m);
    }
    return t.layernorm_last(x);
}

// additive attention mask: positions strictly after each row's limit are
// hidden from every query; optionally causal
inline Tensor make_mask(int64_t B, int64_t L, const std::vector<int64_t>& visible_until,
                        bool causal) {
    Tensor mask({B, L, L});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < L; ++i)
            for (int64_t j = 0; j < L; ++j) {
                bool hidden = j > visible_until[size_t(b)];
                if (causal && j > i) hidden = true;
                mask.v[size_t((b * L + i) * L + j)] = hidden ? -1e30 : 0.0;
            }
    return mask;
}

// patches are centered around zero before projection
inline Tensor patchify(const Tensor& image, int64_t patch) {
    int64_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
    int64_t ph = H / patch, pw = W / patch;
    Tensor out({ph * pw, C * patch * patch});
    for (int64_t py = 0; py < ph; ++py)
        for (int64_t px = 0; px < pw; ++px) {
            int64_t row = py * pw + px;
            int64_t col = 0;
            for (int64_t c = 0; c < C; ++c)
                for (int64_t dy = 0; dy < patch; ++dy)
                    for (int64_t dx = 0; dx < patch; ++dx)
                        out.at({row, col++}) =
                            image.at({c, py * patch + dy, px * patch + dx}) - 0.5;
        }
    return out;
}

}  // namespace detail

inline DualEncoderParams make_dual_encoder(const DualEncoderConfig& cfg,
                                           const std::vector<std::string>& corpus) {
    DualEncoderParams p;
    p.cfg = cfg;
    p.vocab = build_vocabulary(corpus);
    Rng rng(mix_seed(0xc11b, cfg.seed));
    auto& s = p.store;

    s.add("text.tok_embed", ad::gaussian_init(rng, {p.vocab.size(), cfg.text_hidden}, 0.02));
    s.add("text.pos_embed", ad::gaussian_init(rng, {cfg.l_max, cfg.text_hidden}, 0.02));
    detail::add_transformer_params(s, rng, "text", cfg.text_layers, cfg.text_hidden);
    s.add("text.proj", ad::xavier_init(rng, {cfg.text_hidden, cfg.embed_dim}, cfg.text_hidden,
                                       cfg.embed_dim));

    int64_t patch_dim = 3 * cfg.patch * cfg.patch;
    s.add("image.patch_proj",
          ad::xavier_init(rng, {patch_dim, cfg.image_hidden}, patch_dim, cfg.image_hidden));
    s.add("image.cls", ad::gaussian_init(rng, {1, 1, cfg.image_hidden}, 0.02));
    // position table sized lazily would break checkpoints; fix 64x64 canvas
    s.add("image.pos_embed",
          ad::gaussian_init(rng, {(64 / cfg.patch) * (64 / cfg.patch) + 1, cfg.image_hidden}, 0.02));
    detail::add_transformer_params(s, rng, "image", cfg.image_layers, cfg.image_hidden);
    s.add("image.proj", ad::xavier_init(rng, {cfg.image_hidden, cfg.embed_dim}, cfg.image_hidden,
                                        cfg.embed_dim));

    s.add("log_tau", Tensor({1}, {std::log(0.07)}));
    return p;
}

// graph builders shared by inference and training

inline ad::Var encode_text_var(ad::Tape& t, DualEncoderParams& p,
                               const std::vector<TokenSequence>& seqs) {
    require(!seqs.empty(), "encode_text: empty batch");
    int64_t B = int64_t(seqs.size()), L = p.cfg.l_max;
    std::vector<int64_t> ids;
    std::vector<int64_t> ends, visible;
    for (const auto& s : seqs) {
        require(int64_t(s.ids.size()) == L, "token sequence length mismatch");
        ids.insert(ids.end(), s.ids.begin(), s.ids.end());
        ends.push_back(s.end_index);
        visible.push_back(s.end_index);  // hide everything after <end>
    }
    auto x = t.embedding(t.param(p.store.get("text.tok_embed")), ids, B, L);
    x = t.add_bcast_leading(x, t.param(p.store.get("text.pos_embed")));
    auto mask = t.input(detail::make_mask(B, L, visible, p.cfg.causal_text));
    auto h = detail::transformer(t, p.store, "text", x, mask, p.cfg.text_layers, p.cfg.text_heads);
    auto pooled = t.take_rows(h, ends);
    return t.l2_normalize_last(t.matmul(pooled, t.param(p.store.get("text.proj"))));
}

inline ad::Var encode_image_var(ad::Tape& t, DualEncoderParams& p, const std::vector<const Tensor*>& images) {
    require(!images.empty(), "encode_image: empty batch");
    int64_t B = int64_t(images.size());
    require(images[0]->rank() == 3 && images[0]->dim(0) == 3, "encode_image: [3,H,W] expected");
    int64_t H = images[0]->dim(1), W = images[0]->dim(2);
    int64_t tokens = image_token_count(p.cfg, H, W);
    int64_t P = tokens - 1;
    Tensor patches({B, P, 3 * p.cfg.patch * p.cfg.patch});
    for (int64_t b = 0; b < B; ++b) {
        require(images[size_t(b)]->dim(1) == H && images[size_t(b)]->dim(2) == W,
                "encode_image: inconsistent batch shapes");
        auto pt = detail::patchify(*images[size_t(b)], p.cfg.patch);
        std::copy(pt.v.begin(), pt.v.end(), patches.v.begin() + b * pt.numel());
    }
    auto x = t.matmul(t.input(std::move(patches)), t.param(p.store.get("image.patch_proj")));
    auto cls = t.expand0(t.param(p.store.get("image.cls")), B);
    x = t.concat_rows3(cls, x);
    require(p.store.get("image.pos_embed").value.dim(0) == tokens,
            "image size incompatible with the positional table");
    x = t.add_bcast_leading(x, t.param(p.store.get("image.pos_embed")));
    std::vector<int64_t> visible(size_t(B), tokens - 1);
    auto mask = t.input(detail::make_mask(B, tokens, visible, false));
    auto h = detail::transformer(t, p.store, "image", x, mask, p.cfg.image_layers, p.cfg.image_heads);
    auto pooled = t.take_rows(h, std::vector<int64_t>(size_t(B), 0));  // CLS
    return t.l2_normalize_last(t.matmul(pooled, t.param(p.store.get("image.proj"))));
}

inline Embedding encode_text(DualEncoderParams& p, const TokenSequence& seq) {
    ad::Tape t;
    auto v = encode_text_var(t, p, {seq});
    return {t.val(v).v, SpaceTag::text};
}

inline std::vector<Embedding> encode_text_batch(DualEncoderParams& p,
                                                const std::vector<TokenSequence>& seqs) {
    ad::Tape t;
    auto v = encode_text_var(t, p, seqs);
    const auto& out = t.val(v);
    std::vector<Embedding> es;
    for (int64_t b = 0; b < out.dim(0); ++b)
        es.push_back({{out.v.begin() + b * out.dim(1), out.v.begin() + (b + 1) * out.dim(1)},
                      SpaceTag::text});
    return es;
}

inline Embedding encode_image(DualEncoderParams& p, const Tensor& image) {
    ad::Tape t;
    auto v = encode_image_var(t, p, {&image});
    return {t.val(v).v, SpaceTag::image};
}

inline std::vector<Embedding> encode_image_batch(DualEncoderParams& p,
                                                 const std::vector<const Tensor*>& images) {
    ad::Tape t;
    auto v = encode_image_var(t, p, images);
    const auto& out = t.val(v);
    std::vector<Embedding> es;
    for (int64_t b = 0; b < out.dim(0); ++b)
        es.push_back({{out.v.begin() + b * out.dim(1), out.v.begin() + (b + 1) * out.dim(1)},
                      SpaceTag::image});
    return es;
}

// InfoNCE over unit rows: -1/B sum_i log softmax_j(z_T_i . z_I_j / tau)[i]
inline double info_nce_loss(const Tensor& zt, const Tensor& zi, double tau) {
    require(tau > 0, "info_nce_loss: tau must be positive");
    require(zt.rank() == 2 && zi.rank() == 2 && zt.shape == zi.shape, "info_nce_loss: [B,D] pair");
    int64_t B = zt.dim(0), D = zt.dim(1);
    require(B >= 2, "info_nce_loss: need at least 2 pairs");
    for (const Tensor* m : {&zt, &zi})
        for (int64_t i = 0; i < B; ++i) {
            double s = 0;
            for (int64_t j = 0; j < D; ++j) s += m->v[size_t(i * D + j)] * m->v[size_t(i * D + j)];
            require(std::abs(std::sqrt(s) - 1.0) <= 1e-4, "info_nce_loss: rows must be unit norm");
        }
    double loss = 0;
    for (int64_t i = 0; i < B; ++i) {
        std::vector<double> logits(static_cast<size_t>(B));
        for (int64_t j = 0; j < B; ++j) {
            double s = 0;
            for (int64_t k = 0; k < D; ++k) s += zt.v[size_t(i * D + k)] * zi.v[size_t(j * D + k)];
            logits[size_t(j)] = s / tau;
        }
        double mx = *std::max_element(logits.begin(), logits.end());
        double lse = 0;
        for (double l : logits) lse += std::exp(l - mx);
        lse = mx + std::log(lse);
        loss += lse - logits[size_t(i)];
    }
    return loss / double(B);
}

// graph version; inv_tau enters as exp(-log_tau) so the temperature trains
inline ad::Var info_nce_var(ad::Tape& t, ad::Var zt, ad::Var zi, ad::Var log_tau) {
    auto inv_tau = t.exp_op(t.scale(log_tau, -1.0));
    auto sims = t.matmul(zt, t.transpose_last2(zi));  // [B,B]
    auto logits = t.scale_by(sims, inv_tau);
    auto ls = t.log_softmax_last(logits);
    return t.scale(t.mean_all(t.take_diag(ls)), -1.0);
}

struct FinetuneConfig {
    int trainable_layers = 3;  // k: last k transformer layers per branch
    int steps = 300;
    int batch = 32;
    double lr = 1e-3;
    uint64_t seed = 3;
};

struct TrainCurve {
    std::vector<double> losses;
};

// Trains the last k transformer layers of both towers plus the projection
// heads and log-temperature; everything earlier stays bitwise intact.
inline TrainCurve finetune_dual(DualEncoderParams& p,
                                const std::vector<std::pair<const Tensor*, std::string>>& pairs,
                                const FinetuneConfig& cfg) {
    require(!pairs.empty(), "finetune_dual: empty training set");
    int64_t k = cfg.trainable_layers;
    require(k >= 0 && k <= std::min(p.cfg.text_layers, p.cfg.image_layers),
            "finetune_dual: trainable layer count exceeds tower depth");

    auto trainable = [&](const std::string& name) {
        if (name == "log_tau" || name == "text.proj" || name == "image.proj") return true;
        for (const char* tower : {"text", "image"}) {
            int64_t layers = tower == std::string("text") ? p.cfg.text_layers : p.cfg.image_layers;
            for (int64_t l = layers - k; l < layers; ++l)
                if (name.rfind(std::string(tower) + ".layer" + std::to_string(l) + ".", 0) == 0)
                    return true;
        }
        return false;
    };

    std::vector<TokenSequence> seqs;
    seqs.reserve(pairs.size());
    for (const auto& [img, text] : pairs) seqs.push_back(tokenize(text, p.vocab, p.cfg.l_max));

    Rng rng(mix_seed(0xf17e, cfg.seed));
    ad::AdamConfig adam{cfg.lr};
    TrainCurve curve;
    int64_t B = std::min<int64_t>(cfg.batch, int64_t(pairs.size()));
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<size_t> idx(pairs.size());
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        idx.resize(size_t(B));

        std::vector<const Tensor*> images;
        std::vector<TokenSequence> batch_seqs;
        for (size_t i : idx) {
            images.push_back(pairs[i].first);
            batch_seqs.push_back(seqs[i]);
        }
        p.store.zero_grad();
        ad::Tape t;
        auto zt = encode_text_var(t, p, batch_seqs);
        auto zi = encode_image_var(t, p, images);
        auto loss = info_nce_var(t, zt, zi, t.param(p.store.get("log_tau")));
        t.backward(loss);
        ad::adam_step(p.store, adam, trainable);
        auto& lt = p.store.get("log_tau").value.v[0];
        lt = std::clamp(lt, std::log(0.01), 0.0);
        curve.losses.push_back(t.val(loss).v[0]);
    }
    p.trained = true;
    return curve;
}

inline double top1_retrieval(const std::vector<Embedding>& queries,
                             const std::vector<Embedding>& gallery) {
    require(queries.size() == gallery.size() && !queries.empty(), "retrieval: size mismatch");
    int correct = 0;
    for (size_t i = 0; i < queries.size(); ++i) {
        size_t best = 0;
        double best_sim = -2;
        for (size_t j = 0; j < gallery.size(); ++j) {
            double s = dot(queries[i].v, gallery[j].v);
            if (s > best_sim) {
                best_sim = s;
                best = j;
            }
        }
        if (best == i) ++correct;
    }
    return double(correct) / double(queries.size());
}

inline void save_dual_encoder(const std::string& path, const DualEncoderParams& p) {
    std::vector<std::string> words;
    for (const auto& [w, id] : p.vocab.word_to_id) words.push_back(w);
    json meta = {{"kind", "dual-encoder"},
                 {"trained", p.trained},
                 {"frozen", p.frozen},
                 {"tau", p.tau()},
                 {"vocab", words},
                 {"config",
                  {{"embed_dim", p.cfg.embed_dim},
                   {"text_layers", p.cfg.text_layers},
                   {"text_hidden", p.cfg.text_hidden},
                   {"text_heads", p.cfg.text_heads},
                   {"image_layers", p.cfg.image_layers},
                   {"image_hidden", p.cfg.image_hidden},
                   {"image_heads", p.cfg.image_heads},
                   {"patch", p.cfg.patch},
                   {"l_max", p.cfg.l_max},
                   {"causal_text", p.cfg.causal_text},
                   {"seed", p.cfg.seed}}}};
    save_checkpoint(path, store_to_checkpoint(p.store, meta));
}

inline DualEncoderParams load_dual_encoder(const std::string& path) {
    auto ck = load_checkpoint(path);
    DualEncoderParams p;
    const auto& c = ck.meta.at("config");
    p.cfg.embed_dim = c.at("embed_dim");
    p.cfg.text_layers = c.at("text_layers");
    p.cfg.text_hidden = c.at("text_hidden");
    p.cfg.text_heads = c.at("text_heads");
    p.cfg.image_layers = c.at("image_layers");
    p.cfg.image_hidden = c.at("image_hidden");
    p.cfg.image_heads = c.at("image_heads");
    p.cfg.patch = c.at("patch");
    p.cfg.l_max = c.at("l_max");
    p.cfg.causal_text = c.at("causal_text");
    p.cfg.seed = c.at("seed");
    p.trained = ck.meta.value("trained", false);
    p.frozen = ck.meta.value("frozen", false);
    int64_t id = 4;
    for (const auto& w : ck.meta.at("vocab")) p.vocab.word_to_id[w.get<std::string>()] = id++;
    checkpoint_to_store(ck, p.store);
    return p;
}

}  // namespace sgdm::clip
