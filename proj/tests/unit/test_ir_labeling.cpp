#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "smolder/components.hpp"
#include "smolder/errors.hpp"
#include "smolder/ir_labeling.hpp"

using namespace smolder;

namespace {

IRFrame frame_of(int rows, int cols, float fill) { return IRFrame{Grid<float>(rows, cols, fill), 0}; }

IRFrame random_frame(std::mt19937_64& rng, int rows, int cols) {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    IRFrame f = frame_of(rows, cols, 0.0f);
    for (auto& v : f.pixels.pixels()) v = u(rng);
    return f;
}

// Box mean with clamped (replicated) borders, straight from the definition.
double box_mean_at(const IRFrame& f, int r, int c, int k) {
    const int h = k / 2;
    double sum = 0.0;
    for (int dr = -h; dr <= h; ++dr)
        for (int dc = -h; dc <= h; ++dc) {
            const int rr = std::clamp(r + dr, 0, f.pixels.rows() - 1);
            const int cc = std::clamp(c + dc, 0, f.pixels.cols() - 1);
            sum += f.pixels(rr, cc);
        }
    return sum / (k * k);
}

bool subset(const BinaryMask& a, const BinaryMask& b) {
    for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < a.cols(); ++c)
            if (a(r, c) && !b(r, c)) return false;
    return true;
}

}  // namespace

TEST_SUITE("ir_labeling") {

TEST_CASE("smoothing a constant frame is the identity") {
    const IRFrame f = frame_of(12, 12, 0.7f);
    CHECK(smooth_frame(f, 5).pixels == f.pixels);
}

TEST_CASE("smoothing a centred impulse gives a 5x5 patch of 1/25") {
    IRFrame f = frame_of(9, 9, 0.0f);
    f.pixels(4, 4) = 1.0f;
    const IRFrame s = smooth_frame(f, 5);
    for (int r = 0; r < 9; ++r)
        for (int c = 0; c < 9; ++c) {
            const bool inside = std::abs(r - 4) <= 2 && std::abs(c - 4) <= 2;
            CHECK(s.pixels(r, c) == doctest::Approx(inside ? 0.04 : 0.0).epsilon(1e-6));
        }
}

TEST_CASE("smoothing matches the box-mean definition with edge replication") {
    std::mt19937_64 rng(3);
    for (int k : {1, 3, 5, 7}) {
        const IRFrame f = random_frame(rng, 11, 13);
        const IRFrame s = smooth_frame(f, k);
        for (int r = 0; r < 11; ++r)
            for (int c = 0; c < 13; ++c) CHECK(s.pixels(r, c) == doctest::Approx(box_mean_at(f, r, c, k)).epsilon(1e-6));
    }
}

TEST_CASE("smoothed values stay within the input range") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const IRFrame f = random_frame(rng, 16, 16);
        const auto [lo, hi] = std::minmax_element(f.pixels.pixels().begin(), f.pixels.pixels().end());
        const IRFrame s = smooth_frame(f, 5);
        for (float v : s.pixels.pixels()) {
            CHECK(v >= *lo);
            CHECK(v <= *hi);
        }
    }
}

TEST_CASE("even or oversized smoothing kernels are rejected") {
    const IRFrame f = frame_of(9, 9, 0.5f);
    CHECK_THROWS_AS(smooth_frame(f, 4), ConfigError);
    CHECK_THROWS_AS(smooth_frame(f, 11), ConfigError);
}

TEST_CASE("threshold keeps pixels at or above the fraction of the frame max") {
    IRFrame f = frame_of(1, 4, 0.1f);
    f.pixels(0, 0) = 0.9f;
    f.pixels(0, 1) = 0.77f;
    f.pixels(0, 2) = 0.76f;
    const BinaryMask m = threshold_frame(f, 0.85);
    CHECK(m(0, 0) == 1);
    CHECK(m(0, 1) == 1);
    CHECK(m(0, 2) == 0);
    CHECK(m(0, 3) == 0);

    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const IRFrame g = random_frame(rng, 8, 8);
        const double mx = *std::max_element(g.pixels.pixels().begin(), g.pixels.pixels().end());
        const BinaryMask t = threshold_frame(g, 0.85);
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c) CHECK(t(r, c) == (static_cast<double>(g.pixels(r, c)) >= 0.85 * mx ? 1 : 0));
    }
}

TEST_CASE("threshold degenerate frames") {
    CHECK(count_foreground(threshold_frame(frame_of(8, 8, 0.0f), 0.85)) == 0);
    CHECK(count_foreground(threshold_frame(frame_of(8, 8, 0.5f), 1.0)) == 64);
    CHECK_THROWS_AS(threshold_frame(frame_of(8, 8, 0.5f), 0.0), ConfigError);
    CHECK_THROWS_AS(threshold_frame(frame_of(8, 8, 0.5f), 1.5), ConfigError);
}

TEST_CASE("threshold is idempotent on binary masks") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const BinaryMask m = oracle::random_mask(rng, 10, 10, 0.4);
        IRFrame f = frame_of(10, 10, 0.0f);
        for (int r = 0; r < 10; ++r)
            for (int c = 0; c < 10; ++c) f.pixels(r, c) = m(r, c);
        for (double frac : {0.3, 0.85, 1.0}) CHECK(threshold_frame(f, frac) == m);
    }
}

TEST_CASE("single pixel through the refinement stages") {
    BinaryMask m(15, 15);
    m(7, 7) = 1;
    const BinaryMask d = dilate(m, 5, 2);
    CHECK(count_foreground(d) == 81);
    CHECK(d(3, 3) == 1);
    CHECK(d(11, 11) == 1);
    CHECK(d(2, 7) == 0);
    const BinaryMask e = erode(fill_holes(d), 5, 1);
    CHECK(count_foreground(e) == 25);
    CHECK(e(5, 5) == 1);
    CHECK(e(9, 9) == 1);
    CHECK(count_foreground(remove_small_objects(e, 200)) == 0);
    CHECK(count_foreground(refine_mask(m, LabelingConfig{})) == 0);
}

TEST_CASE("a hollow ring is filled solid") {
    BinaryMask ring(40, 40);
    for (int r = 5; r < 35; ++r)
        for (int c = 5; c < 35; ++c)
            if (r < 7 || r >= 33 || c < 7 || c >= 33) ring(r, c) = 1;
    const BinaryMask filled = fill_holes(ring);
    CHECK(count_foreground(filled) == 900);
    CHECK(filled == oracle::to_mask(oracle::fill_holes(oracle::to_set(ring), 40, 40), 40, 40));
}

TEST_CASE("hole filling uses 4-connectivity to the border") {
    // A diagonal gap does not let the background inside escape.
    BinaryMask m(5, 5);
    m(1, 2) = m(2, 1) = m(2, 3) = m(3, 2) = 1;
    const BinaryMask f = fill_holes(m);
    CHECK(f(2, 2) == 1);
    CHECK(f(0, 0) == 0);
}

TEST_CASE("empty mask stays empty") {
    CHECK(count_foreground(refine_mask(BinaryMask(20, 20), LabelingConfig{})) == 0);
}

TEST_CASE("small objects are removed strictly below the minimum area") {
    BinaryMask m(40, 40);
    for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 20; ++c) m(r, c) = 1;  // 200 px
    for (int r = 20; r < 30; ++r)
        for (int c = 0; c < 19; ++c) m(r, c) = 1;  // 190 px
    const BinaryMask out = remove_small_objects(m, 200);
    CHECK(count_foreground(out) == 200);
    CHECK(out(0, 0) == 1);
    CHECK(out(20, 0) == 0);
}

TEST_CASE("refinement stages agree with set morphology on random masks") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 40; ++trial) {
        const BinaryMask m = oracle::random_mask(rng, 14, 12, 0.1);
        auto s = oracle::to_set(m);
        s = oracle::dilate(oracle::dilate(s, 14, 12, 3), 14, 12, 3);
        CHECK(dilate(m, 3, 2) == oracle::to_mask(s, 14, 12));
        CHECK(erode(m, 3, 1) == oracle::to_mask(oracle::erode(oracle::to_set(m), 14, 12, 3), 14, 12));
    }
}

TEST_CASE("dilation and erosion are monotone") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const BinaryMask b = oracle::random_mask(rng, 16, 16, 0.5);
        BinaryMask a = b;
        std::bernoulli_distribution drop(0.3);
        for (auto& v : a.pixels())
            if (drop(rng)) v = 0;
        CHECK(subset(dilate(a, 5, 2), dilate(b, 5, 2)));
        CHECK(subset(erode(a, 5, 1), erode(b, 5, 1)));
    }
}

TEST_CASE("a hot square survives labeling as one blob") {
    IRFrame f = frame_of(64, 64, 0.1f);
    for (int r = 20; r < 40; ++r)
        for (int c = 22; c < 42; ++c) f.pixels(r, c) = 1.0f;
    const BinaryMask m = label_ir_frame(f, LabelingConfig{});
    const auto blobs = connected_components(m, Connectivity::Eight);
    REQUIRE(blobs.size() == 1);
    CHECK(blobs[0].area() >= 400);
    for (int r = 20; r < 40; ++r)
        for (int c = 22; c < 42; ++c) CHECK(m(r, c) == 1);
}

TEST_CASE("a uniform frame keeps its full mask") {
    CHECK(count_foreground(label_ir_frame(frame_of(32, 32, 0.6f), LabelingConfig{})) == 32 * 32);
    CHECK(count_foreground(label_ir_frame(frame_of(32, 32, 0.0f), LabelingConfig{})) == 0);
}

TEST_CASE("labeling output equals the composed stages and keeps only large blobs") {
    std::mt19937_64 rng(10);
    const LabelingConfig cfg;
    for (int trial = 0; trial < 10; ++trial) {
        IRFrame f = frame_of(48, 48, 0.1f);
        std::uniform_int_distribution<int> pos(0, 40);
        for (int k = 0; k < 4; ++k) {
            const int r0 = pos(rng), c0 = pos(rng), size = 2 + k * 3;
            for (int r = r0; r < std::min(48, r0 + size); ++r)
                for (int c = c0; c < std::min(48, c0 + size); ++c) f.pixels(r, c) = 0.9f + 0.02f * k;
        }
        const BinaryMask m = label_ir_frame(f, cfg);
        CHECK(m == refine_mask(threshold_frame(smooth_frame(f, cfg.smooth_kernel), cfg.threshold_fraction), cfg));
        for (const auto& b : connected_components(m, Connectivity::Eight)) CHECK(b.area() >= cfg.min_blob_area);
        for (auto v : m.pixels()) CHECK((v == 0 || v == 1));
    }
}

TEST_CASE("majority vote examples") {
    const int t = 20;
    for (int ones : {20, 11, 10, 9}) {
        std::vector<BinaryMask> stack(t, BinaryMask(2, 2));
        for (int k = 0; k < ones; ++k) stack[static_cast<std::size_t>(k)](0, 0) = 1;
        CHECK(majority_vote(stack)(0, 0) == (ones >= 10 ? 1 : 0));
        CHECK(majority_vote(stack, TiePolicy::Background)(0, 0) == (ones >= 11 ? 1 : 0));
        CHECK(majority_vote(stack)(1, 1) == 0);
    }
}

TEST_CASE("majority vote of identical masks is that mask") {
    std::mt19937_64 rng(11);
    const BinaryMask m = oracle::random_mask(rng, 8, 8, 0.5);
    for (int t : {1, 2, 5}) CHECK(majority_vote(std::vector<BinaryMask>(static_cast<std::size_t>(t), m)) == m);
}

TEST_CASE("majority vote matches per-pixel counting") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<BinaryMask> stack;
        for (int k = 0; k < 5; ++k) stack.push_back(oracle::random_mask(rng, 8, 8, 0.5));
        CHECK(majority_vote(stack) == oracle::majority(stack, true));
    }
}

TEST_CASE("majority vote rejects mismatched shapes and empty stacks") {
    std::vector<BinaryMask> stack{BinaryMask(4, 4), BinaryMask(4, 5)};
    CHECK_THROWS_AS(majority_vote(stack), InputError);
    CHECK_THROWS_AS(majority_vote(std::vector<BinaryMask>{}), InputError);
}

TEST_CASE("labeling config validation") {
    LabelingConfig c;
    CHECK_NOTHROW(c.validate());
    c.dilate_kernel = 4;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = LabelingConfig{};
    c.erode_iters = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = LabelingConfig{};
    c.min_blob_area = -5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("labeling config hash tracks every field") {
    const LabelingConfig a;
    LabelingConfig b;
    CHECK(labeling_config_hash(a) == labeling_config_hash(b));
    b.majority_tie = TiePolicy::Background;
    CHECK(labeling_config_hash(a) != labeling_config_hash(b));
    b = LabelingConfig{};
    b.threshold_fraction = 0.8;
    CHECK(labeling_config_hash(a) != labeling_config_hash(b));
}

}  // TEST_SUITE
