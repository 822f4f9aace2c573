#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "sgdm/common.hpp"
#include "sgdm/png_io.hpp"
#include "sgdm/serialize.hpp"
#include "sgdm/tensor.hpp"

namespace sgdm {

enum class DatasetTag { kilogram, things, synthetic };

inline std::string to_string(DatasetTag t) {
    switch (t) {
        case DatasetTag::kilogram: return "kilogram";
        case DatasetTag::things: return "things";
        default: return "synthetic";
    }
}
inline DatasetTag dataset_tag_from(const std::string& s) {
    if (s == "kilogram") return DatasetTag::kilogram;
    if (s == "things") return DatasetTag::things;
    if (s == "synthetic") return DatasetTag::synthetic;
    fail_invalid("unknown dataset tag: " + s);
}

enum class Category { human, animal, object };

inline std::string to_string(Category c) {
    switch (c) {
        case Category::human: return "human";
        case Category::animal: return "animal";
        default: return "object";
    }
}
inline Category category_from(const std::string& s) {
    if (s == "human") return Category::human;
    if (s == "animal") return Category::animal;
    if (s == "object") return Category::object;
    fail_invalid("unknown category: " + s);
}

// One trial's multichannel time series, stimulus onset at 0 ms.
struct EEGEpoch {
    Tensor data;  // [C, T] microvolts
    double sampling_rate = 0;
    double t0_offset_ms = 0;
    std::vector<std::string> channel_names;
    std::string subject_id;
    std::string stimulus_id;

    int64_t channels() const { return data.dim(0); }
    int64_t samples() const { return data.dim(1); }
    double duration_ms() const { return double(samples()) * 1000.0 / sampling_rate; }
    double end_ms() const { return t0_offset_ms + duration_ms(); }

    void validate() const {
        require(data.rank() == 2, "epoch data must be [C,T]");
        require(channels() >= 1 && samples() >= 2, "epoch needs C >= 1, T >= 2");
        require(sampling_rate > 0, "epoch sampling rate must be positive");
        require(int64_t(channel_names.size()) == channels(), "channel name count mismatch");
        std::set<std::string> uniq(channel_names.begin(), channel_names.end());
        require(int64_t(uniq.size()) == channels(), "duplicate channel names");
        require(data.all_finite(), "epoch contains NaN/Inf");
    }
};

struct StimulusRecord {
    std::string stimulus_id;
    Tensor image;  // [3,H,W] in [0,1]
    std::vector<std::string> annotations;
    Tensor cognitive_code;  // [7,7]
    double abstraction_level = 0;
    Category category = Category::object;
    DatasetTag dataset_tag = DatasetTag::synthetic;

    void validate() const {
        require(image.rank() == 3 && image.dim(0) == 3, "image must be [3,H,W]");
        require(image.dim(1) >= 16 && image.dim(2) >= 16, "image must be at least 16x16");
        require(cognitive_code.shape == std::vector<int64_t>{7, 7}, "cognitive code must be 7x7");
        require(std::isfinite(abstraction_level), "abstraction level must be finite");
    }
};

struct SplitAssignment {
    std::vector<std::string> train, val, test;

    enum class Part { train, val, test, none };

    Part part_of(const std::string& id) const {
        auto has = [&](const std::vector<std::string>& v) {
            return std::find(v.begin(), v.end(), id) != v.end();
        };
        if (has(train)) return Part::train;
        if (has(val)) return Part::val;
        if (has(test)) return Part::test;
        return Part::none;
    }

    void validate(const std::vector<std::string>& all_ids) const {
        std::set<std::string> seen;
        for (const auto* part : {&train, &val, &test})
            for (const auto& id : *part)
                if (!seen.insert(id).second) fail_integrity("split overlap on id: " + id);
        require(seen.size() == all_ids.size() &&
                    std::all_of(all_ids.begin(), all_ids.end(),
                                [&](const std::string& id) { return seen.count(id) > 0; }),
                "split does not cover the stimulus set exactly");
    }
};

// Image-level split: sort ids, seeded shuffle, floor(n*ratio) for val/test
// with the remainder assigned to train.
inline SplitAssignment split_dataset(std::vector<std::string> ids,
                                     std::array<double, 3> ratios, uint64_t seed) {
    require(!ids.empty(), "split_dataset: empty id list");
    {
        auto sorted = ids;
        std::sort(sorted.begin(), sorted.end());
        require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
                "split_dataset: duplicate ids");
    }
    for (double r : ratios) require(r >= 0, "split_dataset: negative ratio");
    require(std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) <= 1e-9,
            "split_dataset: ratios must sum to 1");

    std::sort(ids.begin(), ids.end());
    Rng rng(seed);
    rng.shuffle(ids);

    int64_t n = int64_t(ids.size());
    int64_t n_val = int64_t(std::floor(double(n) * ratios[1] + 1e-9));
    int64_t n_test = int64_t(std::floor(double(n) * ratios[2] + 1e-9));
    int64_t n_train = n - n_val - n_test;

    SplitAssignment s;
    s.train.assign(ids.begin(), ids.begin() + n_train);
    s.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
    s.test.assign(ids.begin() + n_train + n_val, ids.end());
    return s;
}

inline json split_to_json(const SplitAssignment& s) {
    return json{{"train", s.train}, {"val", s.val}, {"test", s.test}};
}
inline SplitAssignment split_from_json(const json& j) {
    SplitAssignment s;
    s.train = j.at("train").get<std::vector<std::string>>();
    s.val = j.at("val").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
    return s;
}

// five-region montage; doubles as the RegionMap for spatial analysis
struct Montage {
    std::vector<std::string> channels;
    std::map<std::string, std::vector<std::string>> regions;

    void validate() const {
        std::set<std::string> all(channels.begin(), channels.end());
        std::set<std::string> used;
        for (const auto& [name, chs] : regions) {
            require(!chs.empty(), "montage region is empty: " + name);
            for (const auto& ch : chs) {
                require(all.count(ch) > 0, "montage region channel unknown: " + ch);
                require(used.insert(ch).second, "montage regions overlap on: " + ch);
            }
        }
    }

    std::string region_of(const std::string& ch) const {
        for (const auto& [name, chs] : regions)
            if (std::find(chs.begin(), chs.end(), ch) != chs.end()) return name;
        return "";
    }
};

inline json montage_to_json(const Montage& m) {
    return json{{"channels", m.channels}, {"regions", m.regions}};
}
inline Montage montage_from_json(const json& j) {
    Montage m;
    m.channels = j.at("channels").get<std::vector<std::string>>();
    m.regions = j.at("regions").get<std::map<std::string, std::vector<std::string>>>();
    return m;
}

struct Dataset {
    DatasetTag tag = DatasetTag::synthetic;
    std::vector<StimulusRecord> stimuli;
    std::vector<EEGEpoch> epochs;
    Montage montage;

    const StimulusRecord& stimulus(const std::string& id) const {
        for (const auto& s : stimuli)
            if (s.stimulus_id == id) return s;
        fail_integrity("unknown stimulus_id: " + id);
    }
    bool has_stimulus(const std::string& id) const {
        return std::any_of(stimuli.begin(), stimuli.end(),
                           [&](const StimulusRecord& s) { return s.stimulus_id == id; });
    }
    std::vector<std::string> stimulus_ids() const {
        std::vector<std::string> ids;
        ids.reserve(stimuli.size());
        for (const auto& s : stimuli) ids.push_back(s.stimulus_id);
        return ids;
    }
    std::vector<std::string> subject_ids() const {
        std::set<std::string> s;
        for (const auto& e : epochs) s.insert(e.subject_id);
        return {s.begin(), s.end()};
    }
};

inline void save_dataset(const std::string& root, const Dataset& ds) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(root) / "images");
    fs::create_directories(fs::path(root) / "epochs");

    json stimuli = json::array();
    for (size_t i = 0; i < ds.stimuli.size(); ++i) {
        const auto& s = ds.stimuli[i];
        char img[64];
        std::snprintf(img, sizeof img, "images/s%05zu.png", i);
        png::write_png((fs::path(root) / img).string(), s.image);
        json code = json::array();
        for (int64_t r = 0; r < 7; ++r) {
            json row = json::array();
            for (int64_t c = 0; c < 7; ++c) row.push_back(s.cognitive_code.at({r, c}));
            code.push_back(row);
        }
        stimuli.push_back({{"id", s.stimulus_id},
                           {"image", img},
                           {"annotations", s.annotations},
                           {"abstraction_level", s.abstraction_level},
                           {"cognitive_code", code},
                           {"category", to_string(s.category)}});
    }

    json epochs = json::array();
    for (size_t i = 0; i < ds.epochs.size(); ++i) {
        const auto& e = ds.epochs[i];
        char arr[64];
        std::snprintf(arr, sizeof arr, "epochs/e%06zu.arr", i);
        save_array((fs::path(root) / arr).string(), e.data);
        json entry = {{"subject_id", e.subject_id},
                      {"stimulus_id", e.stimulus_id},
                      {"array", arr},
                      {"sampling_rate", e.sampling_rate},
                      {"t0_offset_ms", e.t0_offset_ms}};
        if (e.channel_names != ds.montage.channels) entry["channels"] = e.channel_names;
        epochs.push_back(entry);
    }

    json manifest = {{"dataset_tag", to_string(ds.tag)},
                     {"montage_file", "montage.json"},
                     {"stimuli", stimuli},
                     {"epochs", epochs}};
    write_file_bytes((fs::path(root) / "montage.json").string(), [&] {
        auto s = montage_to_json(ds.montage).dump(2);
        return std::vector<unsigned char>(s.begin(), s.end());
    }());
    write_file_bytes((fs::path(root) / "manifest.json").string(), [&] {
        auto s = manifest.dump(2);
        return std::vector<unsigned char>(s.begin(), s.end());
    }());
}

inline Dataset load_dataset(const std::string& root, DatasetTag expected_tag) {
    namespace fs = std::filesystem;
    auto manifest_path = (fs::path(root) / "manifest.json").string();
    if (!fs::exists(manifest_path)) fail_io("missing manifest: " + manifest_path);

    json manifest = json::parse(read_file_bytes(manifest_path));
    Dataset ds;
    ds.tag = dataset_tag_from(manifest.at("dataset_tag").get<std::string>());
    require(ds.tag == expected_tag, "dataset tag mismatch: manifest says " + to_string(ds.tag));

    ds.montage = montage_from_json(
        json::parse(read_file_bytes((fs::path(root) / manifest.value("montage_file", "montage.json")).string())));
    ds.montage.validate();

    std::set<std::string> known_ids;
    for (const auto& entry : manifest.at("stimuli")) {
        StimulusRecord s;
        s.stimulus_id = entry.at("id").get<std::string>();
        s.image = png::read_png((fs::path(root) / entry.at("image").get<std::string>()).string());
        s.annotations = entry.at("annotations").get<std::vector<std::string>>();
        s.abstraction_level = entry.at("abstraction_level").get<double>();
        s.category = category_from(entry.value("category", "object"));
        s.dataset_tag = ds.tag;
        s.cognitive_code = Tensor({7, 7});
        const auto& code = entry.at("cognitive_code");
        for (int64_t r = 0; r < 7; ++r)
            for (int64_t c = 0; c < 7; ++c)
                s.cognitive_code.at({r, c}) = code.at(size_t(r)).at(size_t(c)).get<double>();
        s.validate();
        known_ids.insert(s.stimulus_id);
        ds.stimuli.push_back(std::move(s));
    }

    for (const auto& entry : manifest.at("epochs")) {
        EEGEpoch e;
        e.subject_id = entry.at("subject_id").get<std::string>();
        e.stimulus_id = entry.at("stimulus_id").get<std::string>();
        if (known_ids.count(e.stimulus_id) == 0)
            fail_integrity("epoch references unknown stimulus_id: " + e.stimulus_id);
        e.data = load_array((fs::path(root) / entry.at("array").get<std::string>()).string());
        e.sampling_rate = entry.at("sampling_rate").get<double>();
        e.t0_offset_ms = entry.value("t0_offset_ms", 0.0);
        e.channel_names = entry.contains("channels")
                              ? entry.at("channels").get<std::vector<std::string>>()
                              : ds.montage.channels;
        e.validate();
        ds.epochs.push_back(std::move(e));
    }

    require(ds.stimuli.size() == manifest.at("stimuli").size() &&
                ds.epochs.size() == manifest.at("epochs").size(),
            "manifest count mismatch");
    return ds;
}

}  // namespace sgdm
