#pragma once

#include <span>
#include <string>

#include "smolder/grid.hpp"

namespace smolder {

enum class TiePolicy { Fire, Background };

/// Parameters of the IR-to-mask chain.
/// Defaults: 5x5 smoothing, 5x5 dilation twice, 5x5 erosion once, 200 px objects.
struct LabelingConfig {
    int smooth_kernel = 5;
    double threshold_fraction = 0.85;  // of the per-frame maximum
    int dilate_kernel = 5;
    int dilate_iters = 2;
    int erode_kernel = 5;
    int erode_iters = 1;
    int min_blob_area = 200;
    TiePolicy majority_tie = TiePolicy::Fire;

    void validate() const;
    bool operator==(const LabelingConfig&) const = default;
};

/// Hex SHA-256 of the canonical serialization; stored in checkpoints.
std::string labeling_config_hash(const LabelingConfig& cfg);

/// Box mean filter with edge replication. Kernel must be odd and fit the frame.
IRFrame smooth_frame(const IRFrame& frame, int kernel);

/// 1 where intensity >= fraction * max(frame). An all-zero frame yields an empty mask.
BinaryMask threshold_frame(const IRFrame& frame, double threshold_fraction);

// Square-kernel morphology. Pixels outside the image are background for
// dilation; erosion only inspects in-image pixels.
BinaryMask dilate(const BinaryMask& mask, int kernel, int iterations = 1);
BinaryMask erode(const BinaryMask& mask, int kernel, int iterations = 1);

/// Sets background regions that are not 4-connected to the image border.
BinaryMask fill_holes(const BinaryMask& mask);

/// Drops 8-connected foreground components with area < min_area.
BinaryMask remove_small_objects(const BinaryMask& mask, int min_area);

/// dilate -> fill -> erode -> remove small objects.
BinaryMask refine_mask(const BinaryMask& mask, const LabelingConfig& cfg);

/// smooth -> threshold -> refine.
BinaryMask label_ir_frame(const IRFrame& frame, const LabelingConfig& cfg);

/// Per-pixel majority over a clip's masks. With an even count an exact tie
/// resolves according to `tie`.
BinaryMask majority_vote(std::span<const BinaryMask> masks, TiePolicy tie = TiePolicy::Fire);

}  // namespace smolder
