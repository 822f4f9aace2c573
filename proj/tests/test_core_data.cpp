#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "sgdm/data.hpp"
#include "sgdm/synthgen.hpp"

using namespace sgdm;
namespace fs = std::filesystem;

namespace {
std::vector<std::string> make_ids(int n) {
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back("id" + std::to_string(1000 + i));
    return ids;
}
}  // namespace

TEST_CASE("split sizes follow floor + remainder-to-train rule") {
    auto s = split_dataset(make_ids(100), {0.8, 0.1, 0.1}, 42);
    CHECK(s.train.size() == 80);
    CHECK(s.val.size() == 10);
    CHECK(s.test.size() == 10);

    auto s2 = split_dataset(make_ids(75), {0.8, 0.1, 0.1}, 42);
    CHECK(s2.train.size() == 61);
    CHECK(s2.val.size() == 7);
    CHECK(s2.test.size() == 7);
}

TEST_CASE("splits are disjoint and exhaustive for many seeds and ratios") {
    for (uint64_t seed : {0ull, 1ull, 99ull, 123456789ull}) {
        for (auto ratios : std::vector<std::array<double, 3>>{
                 {0.8, 0.1, 0.1}, {0.5, 0.25, 0.25}, {1.0, 0.0, 0.0}, {0.34, 0.33, 0.33}}) {
            auto ids = make_ids(53);
            auto s = split_dataset(ids, ratios, seed);
            REQUIRE_NOTHROW(s.validate(ids));
            std::set<std::string> train(s.train.begin(), s.train.end());
            for (const auto& id : s.test) CHECK(train.count(id) == 0);
        }
    }
}

TEST_CASE("split assignment is invariant under input permutation") {
    auto ids = make_ids(40);
    auto a = split_dataset(ids, {0.8, 0.1, 0.1}, 7);
    Rng rng(5);
    rng.shuffle(ids);
    auto b = split_dataset(ids, {0.8, 0.1, 0.1}, 7);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    CHECK(a.test == b.test);
}

TEST_CASE("split input validation") {
    CHECK_THROWS_AS(split_dataset({}, {0.8, 0.1, 0.1}, 1), Error);
    CHECK_THROWS_AS(split_dataset({"a", "a"}, {0.8, 0.1, 0.1}, 1), Error);
    CHECK_THROWS_AS(split_dataset(make_ids(10), {0.8, 0.1, 0.2}, 1), Error);
    CHECK_THROWS_AS(split_dataset(make_ids(10), {1.2, -0.1, -0.1}, 1), Error);
    try {
        split_dataset({}, {0.8, 0.1, 0.1}, 1);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::invalid_input);
    }
}

TEST_CASE("dataset save/load round-trips arrays bit-exactly") {
    synth::SynthConfig cfg;
    cfg.n_stimuli = 10;
    cfg.n_subjects = 3;
    cfg.noise_sigma = 0.3;
    cfg.seed = 11;
    auto ds = synth::make_synth_dataset(cfg);
    REQUIRE(ds.stimuli.size() == 10);
    REQUIRE(ds.epochs.size() == 30);

    auto root = (fs::temp_directory_path() / "sgdm_test_roundtrip").string();
    fs::remove_all(root);
    save_dataset(root, ds);
    auto loaded = load_dataset(root, DatasetTag::synthetic);

    REQUIRE(loaded.stimuli.size() == ds.stimuli.size());
    REQUIRE(loaded.epochs.size() == ds.epochs.size());
    for (size_t i = 0; i < ds.epochs.size(); ++i) {
        CHECK(loaded.epochs[i].data.v == ds.epochs[i].data.v);
        CHECK(loaded.epochs[i].stimulus_id == ds.epochs[i].stimulus_id);
        CHECK(loaded.epochs[i].channel_names == ds.epochs[i].channel_names);
    }
    for (size_t i = 0; i < ds.stimuli.size(); ++i) {
        CHECK(loaded.stimuli[i].image.v == ds.stimuli[i].image.v);
        CHECK(loaded.stimuli[i].cognitive_code.v == ds.stimuli[i].cognitive_code.v);
        CHECK(loaded.stimuli[i].abstraction_level == ds.stimuli[i].abstraction_level);
        CHECK(loaded.stimuli[i].annotations == ds.stimuli[i].annotations);
    }
    fs::remove_all(root);
}

TEST_CASE("loader reports dangling stimulus ids and missing manifests") {
    synth::SynthConfig cfg;
    cfg.n_stimuli = 3;
    cfg.n_subjects = 1;
    cfg.seed = 5;
    auto ds = synth::make_synth_dataset(cfg);
    ds.epochs[1].stimulus_id = "ghost-stimulus";

    auto root = (fs::temp_directory_path() / "sgdm_test_dangling").string();
    fs::remove_all(root);
    save_dataset(root, ds);
    try {
        load_dataset(root, DatasetTag::synthetic);
        FAIL("expected integrity error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::integrity);
        CHECK(std::string(e.what()).find("ghost-stimulus") != std::string::npos);
    }
    fs::remove_all(root);

    try {
        load_dataset("/nonexistent/sgdm/root", DatasetTag::synthetic);
        FAIL("expected io error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::io);
    }
}

TEST_CASE("every epoch resolves to a stimulus record after load") {
    synth::SynthConfig cfg;
    cfg.n_stimuli = 6;
    cfg.n_subjects = 2;
    cfg.seed = 21;
    auto ds = synth::make_synth_dataset(cfg);
    auto root = (fs::temp_directory_path() / "sgdm_test_resolve").string();
    fs::remove_all(root);
    save_dataset(root, ds);
    auto loaded = load_dataset(root, DatasetTag::synthetic);
    for (const auto& e : loaded.epochs) REQUIRE_NOTHROW(loaded.stimulus(e.stimulus_id));
    fs::remove_all(root);
}

TEST_CASE("array file round-trip preserves shape and payload") {
    Tensor t({3, 5});
    Rng rng(3);
    for (auto& x : t.v) x = double(float(rng.gaussian()));
    auto path = (fs::temp_directory_path() / "sgdm_arr_test.arr").string();
    save_array(path, t);
    auto u = load_array(path);
    CHECK(u.shape == t.shape);
    CHECK(u.v == t.v);
    fs::remove(path);
}
