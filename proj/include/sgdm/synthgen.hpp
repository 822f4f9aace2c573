#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sgdm/common.hpp"
#include "sgdm/data.hpp"
#include "sgdm/tensor.hpp"

// Synthetic tangram stimuli with ground-truth 7x7 cognitive codes plus a
// forward EEG model carrying local shape information early (100-250 ms,
// occipital-weighted) and categorical information late (350-650 ms,
// temporal-weighted). The categorical amplitude scales with the fixed
// probe's category margin, so harder-to-categorize stimuli yield weaker
// late responses.

namespace sgdm::synth {

struct TangramPiece {
    std::vector<std::array<double, 2>> vertices;  // unit-square coordinates
    std::string piece_type;
};

struct TangramSpec {
    std::vector<TangramPiece> pieces;
    Category category = Category::object;
    std::vector<std::pair<std::vector<int>, std::string>> part_labels;

    void validate() const {
        require(pieces.size() >= 1 && pieces.size() <= 7, "tangram needs 1..7 pieces");
        for (const auto& p : pieces) require(polygon_area(p.vertices) > 1e-6, "degenerate piece");
        std::vector<int> owner(pieces.size(), -1);
        for (size_t li = 0; li < part_labels.size(); ++li)
            for (int pi : part_labels[li].first) {
                require(pi >= 0 && pi < int(pieces.size()), "part label references missing piece");
                require(owner[size_t(pi)] < 0, "piece referenced by two part labels");
                owner[size_t(pi)] = int(li);
            }
    }

    static double polygon_area(const std::vector<std::array<double, 2>>& v) {
        double a = 0;
        for (size_t i = 0; i < v.size(); ++i) {
            const auto& p = v[i];
            const auto& q = v[(i + 1) % v.size()];
            a += p[0] * q[1] - q[0] * p[1];
        }
        return std::abs(a) / 2;
    }
};

struct SubjectProfile {
    std::string subject_id;
    std::map<Category, std::vector<std::string>> semantic_bias;
    std::vector<double> response_gain;  // per channel
    double noise_sigma = 0;
    double remap_prob = 0;  // chance of perceiving a different category

    void validate() const {
        require(noise_sigma >= 0, "noise_sigma must be >= 0");
        for (double g : response_gain)
            require(std::isfinite(g) && g > 0, "response gains must be finite and positive");
    }
};

inline Montage default_montage() {
    Montage m;
    auto add = [&](const std::string& prefix, int n, const std::string& region) {
        for (int i = 1; i <= n; ++i) {
            std::string name = prefix + std::to_string(i);
            m.channels.push_back(name);
            m.regions[region].push_back(name);
        }
    };
    add("F", 12, "frontal");
    add("C", 14, "central");
    add("P", 14, "parietal");
    add("T", 14, "temporal");
    add("O", 10, "occipital");
    return m;
}

namespace detail {

inline bool point_in_polygon(double x, double y, const std::vector<std::array<double, 2>>& poly) {
    bool inside = false;
    size_t n = poly.size();
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        double xi = poly[i][0], yi = poly[i][1];
        double xj = poly[j][0], yj = poly[j][1];
        if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) inside = !inside;
    }
    return inside;
}

struct Slot {
    std::vector<std::array<double, 2>> poly;
    const char* type;
    const char* part;
};

inline const std::vector<Slot>& layout_slots(Category cat) {
    using V = std::vector<std::array<double, 2>>;
    static const std::vector<Slot> human = {
        {V{{0.40, 0.30}, {0.60, 0.30}, {0.60, 0.62}, {0.40, 0.62}}, "square", "torso"},
        {V{{0.50, 0.08}, {0.60, 0.19}, {0.50, 0.30}, {0.40, 0.19}}, "diamond", "head"},
        {V{{0.40, 0.62}, {0.49, 0.62}, {0.37, 0.96}}, "triangle", "left leg"},
        {V{{0.51, 0.62}, {0.60, 0.62}, {0.63, 0.96}}, "triangle", "right leg"},
        {V{{0.40, 0.32}, {0.40, 0.46}, {0.22, 0.42}}, "triangle", "left arm"},
        {V{{0.60, 0.32}, {0.78, 0.42}, {0.60, 0.46}}, "triangle", "right arm"},
        {V{{0.44, 0.08}, {0.56, 0.08}, {0.50, 0.01}}, "triangle", "hat"},
    };
    static const std::vector<Slot> animal = {
        {V{{0.24, 0.40}, {0.70, 0.40}, {0.76, 0.62}, {0.30, 0.62}}, "parallelogram", "body"},
        {V{{0.70, 0.28}, {0.94, 0.42}, {0.70, 0.52}}, "triangle", "head"},
        {V{{0.60, 0.62}, {0.67, 0.62}, {0.67, 0.88}, {0.60, 0.88}}, "square", "front leg"},
        {V{{0.32, 0.62}, {0.39, 0.62}, {0.39, 0.88}, {0.32, 0.88}}, "square", "back leg"},
        {V{{0.24, 0.40}, {0.24, 0.54}, {0.04, 0.34}}, "triangle", "tail"},
        {V{{0.72, 0.24}, {0.78, 0.10}, {0.84, 0.26}}, "triangle", "ear"},
        {V{{0.46, 0.62}, {0.53, 0.62}, {0.53, 0.84}, {0.46, 0.84}}, "square", "middle leg"},
    };
    static const std::vector<Slot> object = {
        {V{{0.36, 0.44}, {0.64, 0.44}, {0.64, 0.72}, {0.36, 0.72}}, "square", "base"},
        {V{{0.30, 0.44}, {0.70, 0.44}, {0.50, 0.18}}, "triangle", "roof"},
        {V{{0.46, 0.72}, {0.54, 0.72}, {0.54, 0.86}, {0.46, 0.86}}, "square", "stem"},
        {V{{0.36, 0.86}, {0.64, 0.86}, {0.64, 0.93}, {0.36, 0.93}}, "square", "foot"},
        {V{{0.36, 0.48}, {0.22, 0.58}, {0.36, 0.68}}, "triangle", "left handle"},
        {V{{0.64, 0.48}, {0.78, 0.58}, {0.64, 0.68}}, "triangle", "right handle"},
        {V{{0.50, 0.06}, {0.56, 0.12}, {0.50, 0.18}, {0.44, 0.12}}, "diamond", "knob"},
    };
    switch (cat) {
        case Category::human: return human;
        case Category::animal: return animal;
        default: return object;
    }
}

inline const std::vector<std::string>& category_vocab(Category cat) {
    static const std::vector<std::string> human = {"human figure", "standing person", "dancer",
                                                   "walking man", "tall person"};
    static const std::vector<std::string> animal = {"animal", "standing dog", "grazing horse",
                                                    "wild cat", "long tailed fox"};
    static const std::vector<std::string> object = {"object", "small house", "glass trophy",
                                                    "table lamp", "stone vessel"};
    switch (cat) {
        case Category::human: return human;
        case Category::animal: return animal;
        default: return object;
    }
}

// moment features of a 7x7 occupancy grid
inline std::array<double, 10> code_moments(const Tensor& code) {
    double total = 0, cx = 0, cy = 0;
    for (int64_t i = 0; i < 7; ++i)
        for (int64_t j = 0; j < 7; ++j) {
            double c = code.at({i, j});
            total += c;
            cx += c * (double(j) + 0.5) / 7.0;
            cy += c * (double(i) + 0.5) / 7.0;
        }
    if (total < 1e-9) return {1, 0, 0.5, 0.5, 0, 0, 0, 0, 0, 0};
    cx /= total;
    cy /= total;
    double sxx = 0, syy = 0, sxy = 0, top = 0, bottom = 0, mid = 0;
    for (int64_t i = 0; i < 7; ++i)
        for (int64_t j = 0; j < 7; ++j) {
            double c = code.at({i, j});
            double dx = (double(j) + 0.5) / 7.0 - cx;
            double dy = (double(i) + 0.5) / 7.0 - cy;
            sxx += c * dx * dx;
            syy += c * dy * dy;
            sxy += c * dx * dy;
            if (i <= 2) top += c;
            if (i >= 4) bottom += c;
            if (i >= 2 && i <= 4 && j >= 2 && j <= 4) mid += c;
        }
    sxx /= total;
    syy /= total;
    sxy /= total;
    return {1.0, total / 49.0, cx, cy, sxx, syy, sxy, top / total, bottom / total, mid / total};
}

}  // namespace detail

// Fixed linear probe over code moments. Scores feed a softmax; the margin is
// the probability gap between the given category and the best other one.
inline double probe_margin(const Tensor& code, Category cat) {
    static const double W[3][10] = {
        // bias, mass, cx,  cy,  sxx,  syy,  sxy, top, bottom, mid
        {0.0, 0.0, 0.0, 0.0, -55.0, 55.0, 0.0, 1.5, 1.5, 0.0},    // human: tall
        {0.0, 0.0, 0.0, 0.0, 55.0, -55.0, 0.0, 0.0, 0.0, 0.0},    // animal: wide
        {1.2, 0.0, 0.0, 0.0, -35.0, -35.0, 0.0, 0.0, 0.0, 9.0},   // object: compact
    };
    auto f = detail::code_moments(code);
    double s[3];
    for (int k = 0; k < 3; ++k) {
        s[k] = 0;
        for (int j = 0; j < 10; ++j) s[k] += W[k][j] * f[size_t(j)];
    }
    double mx = std::max({s[0], s[1], s[2]});
    double z = 0;
    for (double& x : s) {
        x = std::exp(x - mx);
        z += x;
    }
    for (double& x : s) x /= z;
    int ci = int(cat);
    double best_other = -1;
    for (int k = 0; k < 3; ++k)
        if (k != ci) best_other = std::max(best_other, s[k]);
    return s[ci] - best_other;
}

inline Tensor rasterize(const TangramSpec& spec, int64_t size) {
    Tensor img({3, size, size}, 1.0);
    for (int64_t y = 0; y < size; ++y)
        for (int64_t x = 0; x < size; ++x) {
            double px = (double(x) + 0.5) / double(size);
            double py = (double(y) + 0.5) / double(size);
            for (const auto& piece : spec.pieces)
                if (detail::point_in_polygon(px, py, piece.vertices)) {
                    for (int64_t c = 0; c < 3; ++c) img.v[size_t((c * size + y) * size + x)] = 0.0;
                    break;
                }
        }
    return img;
}

// fraction of foreground pixels per cell of the 7x7 canvas partition
inline Tensor cognitive_code_from_image(const Tensor& img) {
    int64_t H = img.dim(1), W = img.dim(2);
    Tensor code({7, 7});
    for (int64_t i = 0; i < 7; ++i)
        for (int64_t j = 0; j < 7; ++j) {
            int64_t y0 = i * H / 7, y1 = (i + 1) * H / 7;
            int64_t x0 = j * W / 7, x1 = (j + 1) * W / 7;
            int64_t fg = 0;
            for (int64_t y = y0; y < y1; ++y)
                for (int64_t x = x0; x < x1; ++x)
                    if (img.v[size_t(y * W + x)] < 0.5) ++fg;
            code.at({i, j}) = double(fg) / double((y1 - y0) * (x1 - x0));
        }
    return code;
}

inline std::pair<TangramSpec, StimulusRecord> make_tangram(uint64_t seed, int n_pieces,
                                                           int64_t img_size = 64) {
    require(n_pieces >= 1 && n_pieces <= 7, "make_tangram: n_pieces must be in [1,7]");
    Rng rng(mix_seed(0x7a6aa11, seed));

    TangramSpec spec;
    spec.category = Category(int(rng.below(3)));
    const auto& slots = detail::layout_slots(spec.category);
    double jitter = 0.015 + 0.06 * rng.uniform();

    for (int i = 0; i < n_pieces; ++i) {
        const auto& slot = slots[size_t(i)];
        double dx = rng.uniform(-jitter, jitter);
        double dy = rng.uniform(-jitter, jitter);
        double sc = 1.0 + rng.uniform(-jitter, jitter);
        double cx = 0, cy = 0;
        for (const auto& v : slot.poly) {
            cx += v[0];
            cy += v[1];
        }
        cx /= double(slot.poly.size());
        cy /= double(slot.poly.size());
        TangramPiece piece;
        piece.piece_type = slot.type;
        for (const auto& v : slot.poly) {
            double x = cx + (v[0] - cx) * sc + dx;
            double y = cy + (v[1] - cy) * sc + dy;
            piece.vertices.push_back({std::clamp(x, 0.005, 0.995), std::clamp(y, 0.005, 0.995)});
        }
        spec.part_labels.push_back({{i}, slot.part});
        spec.pieces.push_back(std::move(piece));
    }
    spec.validate();

    StimulusRecord rec;
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "tg%016llx", static_cast<unsigned long long>(seed));
    rec.stimulus_id = idbuf;
    rec.image = rasterize(spec, img_size);
    rec.cognitive_code = cognitive_code_from_image(rec.image);
    rec.category = spec.category;
    rec.dataset_tag = DatasetTag::synthetic;
    rec.abstraction_level = std::clamp(1.0 - probe_margin(rec.cognitive_code, spec.category), 0.0, 1.0);

    const auto& vocab = detail::category_vocab(spec.category);
    rec.annotations.push_back(vocab[size_t(rng.below(vocab.size()))]);
    // per-part labels carry coarse position words so texts identify layouts
    static const char* kRow[3] = {"upper", "middle", "lower"};
    static const char* kCol[3] = {"left", "center", "right"};
    for (size_t pi = 0; pi < spec.pieces.size(); ++pi) {
        double cx = 0, cy = 0;
        for (const auto& v : spec.pieces[pi].vertices) {
            cx += v[0];
            cy += v[1];
        }
        cx /= double(spec.pieces[pi].vertices.size());
        cy /= double(spec.pieces[pi].vertices.size());
        int col = std::min(2, int(cx * 3.0));
        int row = std::min(2, int(cy * 3.0));
        rec.annotations.push_back(std::string(kRow[row]) + " " + kCol[col] + " " +
                                  spec.pieces[pi].piece_type + " " + spec.part_labels[pi].second);
    }
    rec.validate();
    return {std::move(spec), std::move(rec)};
}

inline SubjectProfile make_subject_profile(const std::string& subject_id, uint64_t seed,
                                           size_t n_channels, double noise_sigma,
                                           double remap_prob = 0.15) {
    Rng rng(mix_seed(0x5ab7ec7, seed));
    SubjectProfile p;
    p.subject_id = subject_id;
    p.noise_sigma = noise_sigma;
    p.remap_prob = remap_prob;
    p.response_gain.resize(n_channels);
    for (auto& g : p.response_gain) g = rng.uniform(0.85, 1.15);
    for (Category c : {Category::human, Category::animal, Category::object}) {
        const auto& vocab = detail::category_vocab(c);
        p.semantic_bias[c] = {vocab[rng.below(vocab.size())], vocab[rng.below(vocab.size())]};
    }
    return p;
}

// deterministic per (subject, stimulus); identity when remap_prob = 0
inline Category perceived_category(const SubjectProfile& prof, const StimulusRecord& stim) {
    if (prof.remap_prob <= 0) return stim.category;
    Rng rng(mix_seed(fnv1a64(prof.subject_id), fnv1a64(stim.stimulus_id)));
    if (rng.uniform() >= prof.remap_prob) return stim.category;
    int shift = 1 + int(rng.below(2));
    return Category((int(stim.category) + shift) % 3);
}

namespace detail {

constexpr int kChannels = 64;
constexpr int kSamples = 250;
constexpr double kRateHz = 250.0;
constexpr double kBaselineRms = 0.25;  // microvolts
constexpr double kLocalAmp = 8.0;
constexpr double kCatAmp = 9.0;
constexpr double kCatFloor = 0.08;

inline double region_gain_local(const std::string& region) {
    if (region == "occipital") return 1.0;
    return 0.3;
}
inline double region_gain_cat(const std::string& region) {
    if (region == "temporal") return 1.0;
    if (region == "parietal") return 0.5;
    return 0.12;
}

// fixed spatial mixing of the 49 code entries into channels
inline const std::vector<double>& local_mixing(const Montage& montage) {
    static std::vector<double> M = [&] {
        Rng rng(0x10ca1);
        std::vector<double> m(size_t(kChannels * 49));
        for (int ch = 0; ch < kChannels; ++ch) {
            double g = region_gain_local(montage.region_of(montage.channels[size_t(ch)]));
            for (int k = 0; k < 49; ++k) m[size_t(ch * 49 + k)] = g * rng.gaussian();
        }
        return m;
    }();
    return M;
}

// one fixed spatial pattern per category
inline const std::vector<double>& category_patterns(const Montage& montage) {
    static std::vector<double> P = [&] {
        Rng rng(0xca7e0);
        std::vector<double> p(size_t(3 * kChannels));
        for (int c = 0; c < 3; ++c)
            for (int ch = 0; ch < kChannels; ++ch) {
                double g = region_gain_cat(montage.region_of(montage.channels[size_t(ch)]));
                p[size_t(c * kChannels + ch)] = g * rng.gaussian();
            }
        return p;
    }();
    return P;
}

inline double hann(double t, double t0, double t1) {
    if (t < t0 || t >= t1) return 0.0;
    double u = (t - t0) / (t1 - t0);
    return 0.5 * (1.0 - std::cos(2.0 * M_PI * u));
}

}  // namespace detail

// Forward model: 1/f baseline + early local readout of the cognitive code
// (100-250 ms) + late categorical pattern scaled by the probe margin of the
// perceived category (350-650 ms) + white noise, per-channel gain applied.
// Output is rounded to float32 so saved datasets reload bit-exactly.
inline EEGEpoch simulate_eeg(const StimulusRecord& stim, const SubjectProfile& prof, uint64_t seed) {
    stim.validate();
    prof.validate();
    static const Montage montage = default_montage();
    constexpr int C = detail::kChannels;
    constexpr int T = detail::kSamples;
    require(prof.response_gain.size() == size_t(C), "profile gain count must match montage");

    Category perceived = perceived_category(prof, stim);
    double cat_scale =
        std::max(detail::kCatFloor, std::clamp(probe_margin(stim.cognitive_code, perceived), 0.0, 1.0));

    const auto& M = detail::local_mixing(montage);
    const auto& P = detail::category_patterns(montage);

    std::vector<double> local_drive(C, 0.0);
    for (int ch = 0; ch < C; ++ch)
        for (int k = 0; k < 49; ++k) local_drive[size_t(ch)] += M[size_t(ch * 49 + k)] * stim.cognitive_code.v[size_t(k)];

    // 1/f baseline via fixed 40-component spectral table
    constexpr int K = 40;
    static const std::vector<double> cos_tab = [] {
        std::vector<double> t(size_t(K * T));
        for (int k = 0; k < K; ++k)
            for (int i = 0; i < T; ++i)
                t[size_t(k * T + i)] = std::cos(2.0 * M_PI * double(k + 1) * double(i) / double(T));
        return t;
    }();
    static const std::vector<double> sin_tab = [] {
        std::vector<double> t(size_t(K * T));
        for (int k = 0; k < K; ++k)
            for (int i = 0; i < T; ++i)
                t[size_t(k * T + i)] = std::sin(2.0 * M_PI * double(k + 1) * double(i) / double(T));
        return t;
    }();
    double rms_unit = 0;
    for (int k = 0; k < K; ++k) rms_unit += 0.5 / double(k + 1);
    const double base_amp = detail::kBaselineRms / std::sqrt(rms_unit);

    EEGEpoch e;
    e.data = Tensor({C, T});
    e.sampling_rate = detail::kRateHz;
    e.t0_offset_ms = 0;
    e.channel_names = montage.channels;
    e.subject_id = prof.subject_id;
    e.stimulus_id = stim.stimulus_id;

    Rng rng(mix_seed(0xee6f0, seed));
    for (int ch = 0; ch < C; ++ch) {
        double* row = &e.data.v[size_t(ch * T)];
        for (int k = 0; k < K; ++k) {
            double a = base_amp / std::sqrt(double(k + 1));
            double cphi = rng.gaussian() * a;
            double sphi = rng.gaussian() * a;
            const double* ct = &cos_tab[size_t(k * T)];
            const double* st = &sin_tab[size_t(k * T)];
            for (int i = 0; i < T; ++i) row[i] += cphi * ct[i] + sphi * st[i];
        }
        double cat_w = detail::kCatAmp * cat_scale * P[size_t(int(perceived) * C + ch)];
        double loc_w = detail::kLocalAmp * local_drive[size_t(ch)];
        for (int i = 0; i < T; ++i) {
            double ms = double(i) * 1000.0 / detail::kRateHz;
            row[i] += loc_w * detail::hann(ms, 100.0, 250.0);
            row[i] += cat_w * detail::hann(ms, 350.0, 650.0);
        }
        if (prof.noise_sigma > 0)
            for (int i = 0; i < T; ++i) row[i] += prof.noise_sigma * rng.gaussian();
        double g = prof.response_gain[size_t(ch)];
        for (int i = 0; i < T; ++i) row[i] = double(float(row[i] * g));
    }
    e.validate();
    return e;
}

struct SynthConfig {
    int n_stimuli = 50;
    int n_subjects = 2;
    double noise_sigma = 0.5;
    double remap_prob = 0.15;
    int64_t img_size = 64;
    uint64_t seed = 1;
};

inline Dataset make_synth_dataset(const SynthConfig& cfg) {
    require(cfg.n_stimuli > 0 && cfg.n_subjects > 0, "make_synth: counts must be positive");
    Dataset ds;
    ds.tag = DatasetTag::synthetic;
    ds.montage = default_montage();

    for (int i = 0; i < cfg.n_stimuli; ++i) {
        int n_pieces = 3 + (i % 5);
        auto [spec, rec] = make_tangram(mix_seed(cfg.seed, uint64_t(i)), n_pieces, cfg.img_size);
        ds.stimuli.push_back(std::move(rec));
    }

    std::vector<SubjectProfile> profiles;
    for (int s = 0; s < cfg.n_subjects; ++s) {
        char id[16];
        std::snprintf(id, sizeof id, "sub%02d", s + 1);
        profiles.push_back(make_subject_profile(id, mix_seed(cfg.seed, 0x500 + uint64_t(s)),
                                                size_t(detail::kChannels), cfg.noise_sigma,
                                                cfg.remap_prob));
    }

    for (const auto& prof : profiles)
        for (const auto& stim : ds.stimuli) {
            uint64_t epoch_seed =
                mix_seed(cfg.seed, mix_seed(fnv1a64(prof.subject_id), fnv1a64(stim.stimulus_id)));
            ds.epochs.push_back(simulate_eeg(stim, prof, epoch_seed));
        }
    return ds;
}

}  // namespace sgdm::synth
