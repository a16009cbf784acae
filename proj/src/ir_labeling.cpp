#include "smolder/ir_labeling.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>
#include <string>

#include "smolder/components.hpp"
#include "smolder/hashing.hpp"

namespace smolder {
namespace {

void require_odd_kernel(int kernel, const char* name) {
    if (kernel < 3 || kernel % 2 == 0)
        throw ConfigError(std::string("labeling.") + name + " must be an odd integer >= 3, got " +
                          std::to_string(kernel));
}

// One pass of square dilation, separable into a row pass and a column pass.
BinaryMask dilate_once(const BinaryMask& in, int radius) {
    const int rows = in.rows(), cols = in.cols();
    BinaryMask horiz(rows, cols, 0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const int lo = std::max(0, c - radius), hi = std::min(cols - 1, c + radius);
            for (int k = lo; k <= hi; ++k)
                if (in(r, k)) {
                    horiz(r, c) = 1;
                    break;
                }
        }
    BinaryMask out(rows, cols, 0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const int lo = std::max(0, r - radius), hi = std::min(rows - 1, r + radius);
            for (int k = lo; k <= hi; ++k)
                if (horiz(k, c)) {
                    out(r, c) = 1;
                    break;
                }
        }
    return out;
}

// Square erosion over in-image pixels only.
BinaryMask erode_once(const BinaryMask& in, int radius) {
    const int rows = in.rows(), cols = in.cols();
    BinaryMask horiz(rows, cols, 1);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const int lo = std::max(0, c - radius), hi = std::min(cols - 1, c + radius);
            for (int k = lo; k <= hi; ++k)
                if (!in(r, k)) {
                    horiz(r, c) = 0;
                    break;
                }
        }
    BinaryMask out(rows, cols, 1);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const int lo = std::max(0, r - radius), hi = std::min(rows - 1, r + radius);
            for (int k = lo; k <= hi; ++k)
                if (!horiz(k, c)) {
                    out(r, c) = 0;
                    break;
                }
        }
    return out;
}

}  // namespace

void LabelingConfig::validate() const {
    require_odd_kernel(smooth_kernel, "smooth_kernel");
    require_odd_kernel(dilate_kernel, "dilate_kernel");
    require_odd_kernel(erode_kernel, "erode_kernel");
    if (!(threshold_fraction > 0.0 && threshold_fraction <= 1.0))
        throw ConfigError("labeling.threshold_fraction must lie in (0, 1]");
    if (dilate_iters < 0) throw ConfigError("labeling.dilate_iters must be >= 0");
    if (erode_iters < 0) throw ConfigError("labeling.erode_iters must be >= 0");
    if (min_blob_area < 0) throw ConfigError("labeling.min_blob_area must be >= 0");
}

std::string labeling_config_hash(const LabelingConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "smooth_kernel=" << cfg.smooth_kernel << ";threshold_fraction=" << cfg.threshold_fraction
       << ";dilate_kernel=" << cfg.dilate_kernel << ";dilate_iters=" << cfg.dilate_iters
       << ";erode_kernel=" << cfg.erode_kernel << ";erode_iters=" << cfg.erode_iters
       << ";min_blob_area=" << cfg.min_blob_area
       << ";majority_tie=" << (cfg.majority_tie == TiePolicy::Fire ? "fire" : "background");
    return sha256_hex(os.str());
}

IRFrame smooth_frame(const IRFrame& frame, int kernel) {
    const int rows = frame.pixels.rows(), cols = frame.pixels.cols();
    if (kernel < 1 || kernel % 2 == 0)
        throw ConfigError("smoothing kernel must be odd, got " + std::to_string(kernel));
    if (kernel > std::min(rows, cols))
        throw ConfigError("smoothing kernel " + std::to_string(kernel) + " exceeds frame size " +
                          std::to_string(rows) + "x" + std::to_string(cols));
    const int radius = kernel / 2;
    const auto& src = frame.pixels;
    const auto [lo_it, hi_it] = std::minmax_element(src.pixels().begin(), src.pixels().end());
    const float lo = *lo_it, hi = *hi_it;

    // Row pass then column pass with clamped (replicated) indices; together
    // they equal the k x k window mean over the replicate-padded frame.
    Grid<double> horiz(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double s = 0.0;
            for (int k = -radius; k <= radius; ++k) s += src(r, std::clamp(c + k, 0, cols - 1));
            horiz(r, c) = s / kernel;
        }
    IRFrame out{Grid<float>(rows, cols), frame.frame_index};
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double s = 0.0;
            for (int k = -radius; k <= radius; ++k) s += horiz(std::clamp(r + k, 0, rows - 1), c);
            out.pixels(r, c) = std::clamp(static_cast<float>(s / kernel), lo, hi);
        }
    return out;
}

BinaryMask threshold_frame(const IRFrame& frame, double threshold_fraction) {
    if (!(threshold_fraction > 0.0 && threshold_fraction <= 1.0))
        throw ConfigError("threshold_fraction must lie in (0, 1], got " + std::to_string(threshold_fraction));
    const auto& px = frame.pixels;
    if (px.empty()) throw InputError("threshold_frame: empty frame");
    BinaryMask mask(px.rows(), px.cols(), 0);
    const float peak = *std::max_element(px.pixels().begin(), px.pixels().end());
    if (!(peak > 0.0f)) return mask;
    const double cut = threshold_fraction * static_cast<double>(peak);
    auto out = mask.pixels();
    auto in = px.pixels();
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = static_cast<double>(in[i]) >= cut ? 1 : 0;
    return mask;
}

BinaryMask dilate(const BinaryMask& mask, int kernel, int iterations) {
    require_odd_kernel(kernel, "dilate_kernel");
    BinaryMask out = mask;
    for (int i = 0; i < iterations; ++i) out = dilate_once(out, kernel / 2);
    return out;
}

BinaryMask erode(const BinaryMask& mask, int kernel, int iterations) {
    require_odd_kernel(kernel, "erode_kernel");
    BinaryMask out = mask;
    for (int i = 0; i < iterations; ++i) out = erode_once(out, kernel / 2);
    return out;
}

BinaryMask fill_holes(const BinaryMask& mask) {
    const int rows = mask.rows(), cols = mask.cols();
    BinaryMask outside(rows, cols, 0);
    std::deque<Pixel> queue;
    auto seed = [&](int r, int c) {
        if (!mask(r, c) && !outside(r, c)) {
            outside(r, c) = 1;
            queue.push_back({r, c});
        }
    };
    for (int r = 0; r < rows; ++r) {
        seed(r, 0);
        seed(r, cols - 1);
    }
    for (int c = 0; c < cols; ++c) {
        seed(0, c);
        seed(rows - 1, c);
    }
    static constexpr int kDr[] = {-1, 1, 0, 0};
    static constexpr int kDc[] = {0, 0, -1, 1};
    while (!queue.empty()) {
        const Pixel p = queue.front();
        queue.pop_front();
        for (int k = 0; k < 4; ++k) {
            const int nr = p.row + kDr[k], nc = p.col + kDc[k];
            if (mask.in_bounds(nr, nc)) seed(nr, nc);
        }
    }
    BinaryMask out(rows, cols, 0);
    for (std::size_t i = 0; i < out.size(); ++i) out.pixels()[i] = outside.pixels()[i] ? 0 : 1;
    return out;
}

BinaryMask remove_small_objects(const BinaryMask& mask, int min_area) {
    if (min_area < 0) throw ConfigError("min_blob_area must be >= 0");
    auto blobs = connected_components(mask, Connectivity::Eight);
    std::erase_if(blobs, [min_area](const Blob& b) { return b.area() < min_area; });
    return blobs_to_mask(blobs, mask.rows(), mask.cols());
}

BinaryMask refine_mask(const BinaryMask& mask, const LabelingConfig& cfg) {
    cfg.validate();
    BinaryMask m = dilate(mask, cfg.dilate_kernel, cfg.dilate_iters);
    m = fill_holes(m);
    m = erode(m, cfg.erode_kernel, cfg.erode_iters);
    return remove_small_objects(m, cfg.min_blob_area);
}

BinaryMask label_ir_frame(const IRFrame& frame, const LabelingConfig& cfg) {
    cfg.validate();
    return refine_mask(threshold_frame(smooth_frame(frame, cfg.smooth_kernel), cfg.threshold_fraction), cfg);
}

BinaryMask majority_vote(std::span<const BinaryMask> masks, TiePolicy tie) {
    if (masks.empty()) throw InputError("majority_vote: need at least one mask");
    const auto& first = masks.front();
    for (std::size_t k = 1; k < masks.size(); ++k)
        if (!masks[k].same_shape(first))
            throw InputError("majority_vote: mask " + std::to_string(k) + " has shape " +
                             std::to_string(masks[k].rows()) + "x" + std::to_string(masks[k].cols()) +
                             ", expected " + std::to_string(first.rows()) + "x" + std::to_string(first.cols()));

    std::vector<int> votes(first.size(), 0);
    for (const auto& m : masks) {
        auto px = m.pixels();
        for (std::size_t i = 0; i < px.size(); ++i) votes[i] += px[i] != 0;
    }
    const int total = static_cast<int>(masks.size());
    BinaryMask out(first.rows(), first.cols(), 0);
    auto px = out.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) {
        const int twice = 2 * votes[i];
        px[i] = (twice > total || (twice == total && tie == TiePolicy::Fire)) ? 1 : 0;
    }
    return out;
}

}  // namespace smolder
