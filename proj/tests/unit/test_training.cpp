#include <cmath>
#include <fstream>
#include <limits>

#include <torch/torch.h>

#include "doctest.h"
#include "smolder/errors.hpp"
#include "smolder/training.hpp"
#include "temp_dir.hpp"

using namespace smolder;

namespace {

ModelConfig tiny_model(BackboneFamily fam = BackboneFamily::MobileNet) {
    ModelConfig cfg;
    cfg.backbone = make_backbone_spec(fam);
    cfg.decoder.part1_channels = {32, 16, 8, 8, 4};
    cfg.decoder.attention_reduction = 4;
    cfg.decoder.seq_len = 5;
    cfg.decoder.time_kernel = 2;
    cfg.decoder.n_time_blocks = 3;
    return cfg;
}

std::vector<Clip> synth_clips(int n, std::uint64_t seed = 0) {
    SynthSceneConfig base;
    base.n_frames = 5;
    base.seed = seed;
    std::vector<Clip> out;
    for (int i = 0; i < n; ++i) {
        const auto scene = generate_synthetic_scene(scene_variant(base, i));
        std::vector<Grid<float>> ir;
        for (const auto& f : scene.ir) ir.push_back(f.pixels);
        auto res = build_clips(ingest_frames(scene.rgb, ir, {}), 5, {}, "s" + std::to_string(i), ClipSource::Synthetic);
        out.push_back(std::move(res.clips.at(0)));
    }
    return out;
}

TrainConfig quick(int epochs) {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = 2;
    tc.lr_init = 1e-3;
    return tc;
}

bool same_parameters(FireSegNet& a, FireSegNet& b) {
    const auto pa = a->named_parameters();
    const auto pb = b->named_parameters();
    if (pa.size() != pb.size()) return false;
    for (const auto& item : pa)
        if (!torch::equal(item.value(), pb[item.key()])) return false;
    for (const auto& item : a->named_buffers())
        if (!torch::equal(item.value(), b->named_buffers()[item.key()])) return false;
    return true;
}

class NanSource : public SampleSource {
public:
    explicit NanSource(std::vector<Clip> clips) : inner_(clips) {}
    std::size_t size() const override { return inner_.size(); }
    Sample get(std::size_t i) override {
        Sample s = inner_.get(i);
        if (++calls_ > static_cast<int>(inner_.size())) s.frames = s.frames.clone().fill_(std::nanf(""));
        return s;
    }

private:
    InMemorySource inner_;
    int calls_ = 0;
};

}  // namespace

TEST_SUITE("training") {

TEST_CASE("dice loss on hand examples") {
    const auto g = torch::tensor({1.0, 1.0, 0.0, 0.0}).view({1, 2, 2});
    CHECK(dice_loss(g, g, 1e-6).item<double>() == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(dice_loss(1 - g, g, 1e-6).item<double>() == doctest::Approx(1.0).epsilon(1e-6));
    const auto z = torch::zeros({1, 2, 2});
    CHECK(dice_loss(z, z, 1e-6).item<double>() == doctest::Approx(0.0));
    const auto half = torch::full({1, 2, 2}, 0.5);
    // 1 - 2 / (1 + 2) with both sums computed directly.
    CHECK(dice_loss(half, g, 1e-6).item<double>() == doctest::Approx(1.0 - (2.0 + 1e-6) / (1.0 + 2.0 + 1e-6)));
}

TEST_CASE("dice loss is bounded, symmetric and averages samples") {
    torch::manual_seed(0);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = torch::rand({3, 8, 8}, torch::kDouble);
        const auto g = (torch::rand({3, 8, 8}, torch::kDouble) > 0.5).to(torch::kDouble);
        const double l = dice_loss(p, g, 1e-6).item<double>();
        CHECK(l >= 0.0);
        CHECK(l <= 1.0);
        CHECK(l == doctest::Approx(dice_loss(g, p, 1e-6).item<double>()));
        double mean = 0.0;
        for (int i = 0; i < 3; ++i) mean += dice_loss(p[i], g[i], 1e-6).item<double>() / 3.0;
        CHECK(l == doctest::Approx(mean));
    }
}

TEST_CASE("step learning rate schedule") {
    TrainConfig tc;
    CHECK(lr_at_epoch(tc, 0) == doctest::Approx(1e-2));
    CHECK(lr_at_epoch(tc, 99) == doctest::Approx(1e-2));
    CHECK(lr_at_epoch(tc, 100) == doctest::Approx(1e-3));
    CHECK(lr_at_epoch(tc, 299) == doctest::Approx(1e-4));
    tc.lr_gamma = 1.0;
    for (int e : {0, 100, 250}) CHECK(lr_at_epoch(tc, e) == doctest::Approx(1e-2));
    TrainState s;
    s.epoch = 150;
    CHECK(lr_schedule_step(s, TrainConfig{}).lr_current == doctest::Approx(1e-3));
}

TEST_CASE("config validation") {
    TrainConfig tc;
    CHECK_NOTHROW(tc.validate());
    tc.batch_size = 0;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
    tc = TrainConfig{};
    tc.optimizer = "sgd";
    CHECK_THROWS_AS(tc.validate(), ConfigError);
    tc = TrainConfig{};
    tc.lr_init = 0.0;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
    tc = TrainConfig{};
    tc.lr_step_size = 0;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
}

TEST_CASE("zero epochs leaves the initialization untouched") {
    TempDir dir("zero");
    seed_everything(0);
    FireSegNet model(tiny_model());
    FireSegNet copy(tiny_model());
    {
        torch::NoGradGuard ng;
        for (auto& item : copy->named_parameters()) item.value().copy_(model->named_parameters()[item.key()]);
        for (auto& item : copy->named_buffers()) item.value().copy_(model->named_buffers()[item.key()]);
    }
    InMemorySource src(synth_clips(2));
    TrainOptions opt;
    opt.run_dir = dir.path();
    const auto res = train_on_sources(model, src, nullptr, quick(0), opt);
    CHECK(res.step_losses.empty());
    REQUIRE(res.history.size() == 1);
    CHECK(res.history[0].epoch == 0);
    auto loaded = load_checkpoint(res.last_checkpoint);
    CHECK(same_parameters(loaded.model, copy));
}

TEST_CASE("seeded runs are reproducible") {
    const auto clips = synth_clips(3);
    auto run = [&] {
        seed_everything(5);
        FireSegNet model(tiny_model());
        InMemorySource src(clips);
        TrainConfig tc = quick(2);
        tc.seed = 5;
        return train_on_sources(model, src, nullptr, tc, {}).step_losses;
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.size() == 4);
    CHECK(a == b);
}

TEST_CASE("history records epoch 0 and both splits") {
    seed_everything(1);
    FireSegNet model(tiny_model());
    auto clips = synth_clips(3);
    InMemorySource train(std::vector<Clip>(clips.begin(), clips.begin() + 2));
    InMemorySource test(std::vector<Clip>(clips.begin() + 2, clips.end()));
    const auto res = train_on_sources(model, train, &test, quick(2), {});
    REQUIRE(res.history.size() == 6);
    CHECK(res.history[0].epoch == 0);
    CHECK(res.history[1].split == Split::Test);
    CHECK(res.history[5].epoch == 2);
    for (const auto& r : res.history) {
        CHECK(r.dice >= 0.0);
        CHECK(r.dice <= 1.0);
    }
    CHECK(to_jsonl(res.history[1]).find("\"split\":\"test\"") != std::string::npos);
}

TEST_CASE("max_steps caps training") {
    seed_everything(2);
    FireSegNet model(tiny_model());
    InMemorySource src(synth_clips(4));
    TrainConfig tc = quick(10);
    tc.max_steps = 3;
    CHECK(train_on_sources(model, src, nullptr, tc, {}).step_losses.size() == 3);
}

TEST_CASE("non-finite loss raises a divergence error naming the step") {
    seed_everything(3);
    FireSegNet model(tiny_model());
    NanSource src(synth_clips(2));
    TrainConfig tc = quick(3);
    tc.batch_size = 1;
    try {
        train_on_sources(model, src, nullptr, tc, {});
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(std::string(e.what()).find("step 0") != std::string::npos);
    }
}

TEST_CASE("loss falls over the first steps of full-batch training") {
    const auto clips = synth_clips(4);
    int monotone = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        seed_everything(seed);
        FireSegNet model(tiny_model());
        InMemorySource src(clips);
        TrainConfig tc = quick(10);
        tc.batch_size = 4;
        tc.seed = seed;
        const auto losses = train_on_sources(model, src, nullptr, tc, {}).step_losses;
        bool ok = true;
        for (std::size_t i = 1; i < losses.size(); ++i) ok = ok && losses[i] < losses[i - 1];
        monotone += ok;
    }
    CHECK(monotone >= 4);
}

TEST_CASE("checkpoint round trip is exact") {
    TempDir dir("ckpt");
    seed_everything(4);
    FireSegNet model(tiny_model());
    TrainState st;
    st.epoch = 7;
    st.global_step = 42;
    st.best_test_dice = 0.5;
    save_checkpoint(dir / "c", model, st, "abc");
    const ModelConfig expected = tiny_model();
    auto loaded = load_checkpoint(dir / "c", &expected, "abc");
    CHECK(same_parameters(loaded.model, model));
    CHECK(loaded.state.epoch == 7);
    CHECK(loaded.state.global_step == 42);
    CHECK(loaded.labeling_hash == "abc");
    CHECK(loaded.config == expected);

    const ModelConfig other = tiny_model(BackboneFamily::ResNet18);
    CHECK_THROWS_AS(load_checkpoint(dir / "c", &other), LoadError);
    CHECK_THROWS_AS(load_checkpoint(dir / "c", nullptr, "xyz"), LoadError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing"), LoadError);

    std::ofstream(dir / "junk") << "junk";
    CHECK_THROWS_AS(load_checkpoint(dir / "junk"), LoadError);
}

TEST_CASE("manifest source matches in-memory samples") {
    const auto clips = synth_clips(1);
    const Sample s = clip_to_sample(clips[0]);
    CHECK(s.frames.sizes() == torch::IntArrayRef({3, 5, 64, 64}));
    CHECK(s.gt.sizes() == torch::IntArrayRef({64, 64}));
    CHECK(s.gt.sum().item<double>() == doctest::Approx(static_cast<double>(count_foreground(clips[0].gt_mask))));
}

}
