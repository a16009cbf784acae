#include <cstdio>

#include <torch/torch.h>

#include "doctest.h"
#include "smolder/errors.hpp"
#include "smolder/image_io.hpp"
#include "smolder/inference.hpp"
#include "temp_dir.hpp"

using namespace smolder;

namespace {

ModelConfig tiny_model() {
    ModelConfig cfg;
    cfg.backbone = make_backbone_spec(BackboneFamily::MobileNet);
    cfg.decoder.part1_channels = {32, 16, 8, 8, 4};
    cfg.decoder.attention_reduction = 4;
    cfg.decoder.seq_len = 5;
    cfg.decoder.time_kernel = 2;
    cfg.decoder.n_time_blocks = 3;
    return cfg;
}

InferenceConfig window5() {
    InferenceConfig ic;
    ic.window = 5;
    return ic;
}

// Writes one clip of constant frames; the gt is optional.
ManifestEntry write_clip(const fs::path& root, const std::string& id, bool with_gt) {
    ManifestEntry e;
    e.clip_id = id;
    e.split = Split::Test;
    fs::create_directories(root / id);
    for (int t = 0; t < 5; ++t) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%05d.png", t);
        write_rgb(root / id / name, RgbFrame(64, 64, Rgb{0.3f, 0.3f, 0.2f + 0.1f * t}));
        e.frame_paths.push_back(root / id / name);
    }
    e.gt_path = root / (id + "_gt.png");
    if (with_gt) {
        BinaryMask gt(64, 64);
        for (int r = 20; r < 40; ++r)
            for (int c = 20; c < 40; ++c) gt(r, c) = 1;
        write_mask(e.gt_path, gt);
    }
    return e;
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("window counts") {
    CHECK(sliding_window_count(50, 20, 1) == 31);
    CHECK(sliding_window_count(20, 20, 1) == 1);
    CHECK(sliding_window_count(100, 20, 5) == 17);
    try {
        sliding_window_count(19, 20, 1);
        FAIL("expected InputError");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("at least 20") != std::string::npos);
    }
    CHECK_THROWS_AS(sliding_window_count(50, 20, 0), ConfigError);
}

TEST_CASE("config validation") {
    InferenceConfig ic;
    CHECK_NOTHROW(ic.validate());
    ic.device = "cuda";
    CHECK_THROWS_AS(ic.validate(), ConfigError);
    ic = InferenceConfig{};
    ic.binarize_threshold = 1.5;
    CHECK_THROWS_AS(ic.validate(), ConfigError);
}

TEST_CASE("frames_to_tensor layout") {
    std::vector<RgbFrame> frames(2, RgbFrame(32, 64));
    frames[1](3, 7) = {0.1f, 0.2f, 0.3f};
    const auto t = frames_to_tensor(frames);
    CHECK(t.sizes() == torch::IntArrayRef({2, 3, 32, 64}));
    CHECK(t[1][2][3][7].item<float>() == doctest::Approx(0.3f));
}

TEST_CASE("predict_clip gives deterministic probabilities") {
    torch::manual_seed(0);
    FireSegNet model(tiny_model());
    model->eval();
    const auto clip = torch::rand({5, 3, 64, 96});
    const auto a = predict_clip(model, clip, window5());
    const auto b = predict_clip(model, clip, window5());
    CHECK(a.rows() == 64);
    CHECK(a.cols() == 96);
    CHECK(a.frame_index == 4);
    CHECK(torch::equal(a.probs, b.probs));
    CHECK(a.probs.min().item<float>() >= 0.0f);
    CHECK(a.probs.max().item<float>() <= 1.0f);
    CHECK(torch::allclose(a.probs, torch::sigmoid(a.logits)));

    const BinaryMask m = a.binarize(0.5);
    const Grid<float> g = a.probability_grid();
    for (int r = 0; r < 64; r += 7)
        for (int c = 0; c < 96; c += 11) CHECK(m(r, c) == (g(r, c) >= 0.5f ? 1 : 0));
}

TEST_CASE("predict_clip rejects bad input and training mode") {
    FireSegNet model(tiny_model());
    model->eval();
    CHECK_THROWS_AS(predict_clip(model, torch::rand({4, 3, 64, 64}), window5()), ShapeError);
    CHECK_THROWS_AS(predict_clip(model, torch::rand({5, 64, 64}), window5()), ShapeError);
    model->train();
    CHECK_THROWS_AS(predict_clip(model, torch::rand({5, 3, 64, 64}), window5()), InputError);
}

TEST_CASE("sliding window maps equal per-window predictions") {
    torch::manual_seed(1);
    FireSegNet model(tiny_model());
    model->eval();
    const auto video = torch::rand({9, 3, 64, 64});
    auto ic = window5();
    ic.stride = 2;
    const auto maps = sliding_window_infer(model, video, ic);
    REQUIRE(maps.size() == 3);
    for (int k = 0; k < 3; ++k) {
        CHECK(maps[k].frame_index == 2 * k + 4);
        const auto direct = predict_clip(model, video.narrow(0, 2 * k, 5).clone(), ic);
        CHECK(torch::allclose(maps[k].probs, direct.probs, 1e-6, 1e-7));
    }
    CHECK_THROWS_AS(sliding_window_infer(model, torch::rand({4, 3, 64, 64}), window5()), InputError);
}

TEST_CASE("dataset evaluation scores each clip") {
    TempDir dir("evalds");
    DatasetManifest m;
    m.seq_len = 5;
    m.clips = {write_clip(dir.path(), "a", true), write_clip(dir.path(), "b", true)};
    FireSegNet model(tiny_model());
    int hooked = 0;
    const auto report = evaluate_dataset(m, Split::Test, model, window5(), {},
                                         [&](const Clip&, const SegmentationMap&) { ++hooked; });
    CHECK(hooked == 2);
    REQUIRE(report.clips.size() == 2);
    CHECK(report.clips[0].clip_id == "a");
    CHECK(report.aggregate == aggregate_metrics(report.clips));
    CHECK_THROWS_AS(evaluate_dataset(m, Split::Train, model, window5(), {}), InputError);
    CHECK_THROWS_AS(evaluate_dataset(m, Split::Test, model, InferenceConfig{}, {}), ConfigError);
}

TEST_CASE("missing ground truth names the clip") {
    TempDir dir("nogt");
    DatasetManifest m;
    m.seq_len = 5;
    m.clips = {write_clip(dir.path(), "lonely", false)};
    FireSegNet model(tiny_model());
    try {
        evaluate_dataset(m, Split::Test, model, window5(), {});
        FAIL("expected InputError");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("lonely") != std::string::npos);
    }
}

}
