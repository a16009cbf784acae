#include <torch/torch.h>

#include "doctest.h"
#include "smolder/backbone.hpp"
#include "smolder/errors.hpp"
#include "temp_dir.hpp"

using namespace smolder;

namespace {

const BackboneFamily kFamilies[] = {BackboneFamily::Vgg16, BackboneFamily::ResNet18, BackboneFamily::EfficientNetB0,
                                    BackboneFamily::EfficientNetB1, BackboneFamily::MobileNet};

void check_pyramid(const Pyramid& p, const BackboneSpec& spec, int64_t n, int64_t h, int64_t w) {
    for (int l = 0; l < kPyramidLevels; ++l) {
        const auto& t = p[static_cast<std::size_t>(l)];
        REQUIRE(t.dim() == 4);
        CHECK(t.size(0) == n);
        CHECK(t.size(1) == spec.level_channels[static_cast<std::size_t>(l)]);
        CHECK(t.size(2) == h >> (l + 1));
        CHECK(t.size(3) == w >> (l + 1));
    }
}

}  // namespace

TEST_SUITE("backbone") {

TEST_CASE("every family yields five stride taps") {
    torch::manual_seed(0);
    torch::NoGradGuard ng;
    for (auto fam : kFamilies) {
        CAPTURE(to_string(fam));
        const auto spec = make_backbone_spec(fam);
        auto enc = make_encoder(spec);
        enc->eval();
        check_pyramid(enc->extract_pyramid(torch::rand({1, 3, 64, 96})), spec, 1, 64, 96);
    }
}

TEST_CASE("full-size input for the default family") {
    torch::NoGradGuard ng;
    const auto spec = make_backbone_spec(BackboneFamily::EfficientNetB0);
    auto enc = make_encoder(spec);
    enc->eval();
    check_pyramid(enc->extract_pyramid(torch::rand({1, 3, 224, 224})), spec, 1, 224, 224);
}

TEST_CASE("published channel layouts") {
    CHECK(make_backbone_spec(BackboneFamily::Vgg16).level_channels == std::array<int64_t, 5>{64, 128, 256, 512, 512});
    CHECK(make_backbone_spec(BackboneFamily::ResNet18).level_channels == std::array<int64_t, 5>{64, 64, 128, 256, 512});
    CHECK(make_backbone_spec(BackboneFamily::EfficientNetB0).level_channels.back() == 320);
    CHECK(backbone_variant(BackboneFamily::MobileNet) == "mobilenet_v3_small");
}

TEST_CASE("family names round trip") {
    for (auto fam : kFamilies) CHECK(parse_backbone(to_string(fam)) == fam);
    CHECK_THROWS_AS(parse_backbone("alexnet"), ConfigError);
}

TEST_CASE("input not divisible by 32 is a shape error") {
    auto enc = make_encoder(make_backbone_spec(BackboneFamily::MobileNet));
    CHECK_THROWS_AS(enc->extract_pyramid(torch::rand({1, 3, 100, 96})), ShapeError);
    CHECK_THROWS_AS(enc->extract_pyramid(torch::rand({3, 64, 64})), ShapeError);
}

TEST_CASE("pretrained without a weights file is a load error") {
    CHECK_THROWS_AS(make_encoder(make_backbone_spec(BackboneFamily::ResNet18, true, "/nonexistent/w.pt")), LoadError);
}

TEST_CASE("encoder weights round trip through a file") {
    TempDir dir("weights");
    torch::manual_seed(1);
    auto a = make_encoder(make_backbone_spec(BackboneFamily::MobileNet));
    torch::serialize::OutputArchive out;
    a->save(out);
    out.save_to((dir / "w.pt").string());

    torch::manual_seed(2);
    auto b = make_encoder(make_backbone_spec(BackboneFamily::MobileNet, true, (dir / "w.pt").string()));
    const auto pa = a->named_parameters();
    const auto pb = b->named_parameters();
    REQUIRE(pa.size() == pb.size());
    for (const auto& item : pa) CHECK(torch::equal(item.value(), pb[item.key()]));
}

TEST_CASE("stack_temporal preserves order and shapes") {
    std::vector<Pyramid> frames;
    for (int t = 0; t < 4; ++t) {
        Pyramid p;
        for (int l = 0; l < kPyramidLevels; ++l)
            p[static_cast<std::size_t>(l)] = torch::full({2, l + 1, 8 >> l, 8 >> l}, static_cast<float>(t));
        frames.push_back(p);
    }
    const auto seq = stack_temporal(frames);
    for (int l = 0; l < kPyramidLevels; ++l) {
        const auto& t = seq.levels[static_cast<std::size_t>(l)];
        CHECK(t.sizes() == torch::IntArrayRef({2, l + 1, 4, 8 >> l, 8 >> l}));
        for (int k = 0; k < 4; ++k) CHECK(t.select(2, k).eq(static_cast<float>(k)).all().item<bool>());
    }

    const auto single = stack_temporal(std::span(frames).first(1));
    CHECK(single.levels[0].size(2) == 1);

    frames[2][1] = torch::zeros({2, 2, 5, 5});
    CHECK_THROWS_AS(stack_temporal(frames), InputError);
    CHECK_THROWS_AS(stack_temporal(std::span<const Pyramid>{}), InputError);
}

TEST_CASE("evaluation mode is deterministic and frames are independent") {
    torch::NoGradGuard ng;
    torch::manual_seed(3);
    auto enc = make_encoder(make_backbone_spec(BackboneFamily::ResNet18));
    enc->eval();
    const auto x = torch::rand({3, 3, 64, 64});
    const auto a = enc->extract_pyramid(x);
    const auto b = enc->extract_pyramid(x);
    for (int l = 0; l < kPyramidLevels; ++l) CHECK(torch::equal(a[l], b[l]));
    const auto one = enc->extract_pyramid(x.narrow(0, 1, 1));
    for (int l = 0; l < kPyramidLevels; ++l)
        CHECK(torch::allclose(one[l], a[l].narrow(0, 1, 1), 1e-5, 1e-6));
}

TEST_CASE("encode_clips folds time into the batch") {
    torch::NoGradGuard ng;
    auto enc = make_encoder(make_backbone_spec(BackboneFamily::MobileNet));
    enc->eval();
    const auto clips = torch::rand({2, 3, 3, 64, 64});
    const auto seq = encode_clips(*enc, clips);
    const auto spec = enc->spec();
    for (int l = 0; l < kPyramidLevels; ++l)
        CHECK(seq.levels[l].sizes() ==
              torch::IntArrayRef({2, spec.level_channels[l], 3, 64 >> (l + 1), 64 >> (l + 1)}));
    const auto frame = enc->extract_pyramid(clips.select(0, 1).select(1, 2).unsqueeze(0));
    CHECK(torch::allclose(seq.levels[4].select(0, 1).select(1, 2), frame[4][0], 1e-5, 1e-6));
    CHECK_THROWS_AS(encode_clips(*enc, torch::rand({3, 3, 64, 64})), ShapeError);
}

}
