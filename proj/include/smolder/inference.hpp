#pragma once

#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "smolder/clip_dataset.hpp"
#include "smolder/evaluation.hpp"
#include "smolder/grid.hpp"
#include "smolder/model.hpp"

namespace smolder {

struct InferenceConfig {
    int window = 20;  // must equal the model's seq_len
    int stride = 1;
    double binarize_threshold = 0.5;
    std::string device = "cpu";
    bool overlay = false;

    void validate() const;
};

/// Fire probability for one frame at input resolution.
struct SegmentationMap {
    torch::Tensor logits;  // (H, W) float
    torch::Tensor probs;   // sigmoid(logits)
    int frame_index = -1;  // frame the map labels (last frame of its window)

    int rows() const { return static_cast<int>(probs.size(0)); }
    int cols() const { return static_cast<int>(probs.size(1)); }
    BinaryMask binarize(double threshold = 0.5) const;
    Grid<float> probability_grid() const;
};

/// (T, 3, H, W) float tensor from RGB frames in [0,1].
torch::Tensor frames_to_tensor(std::span<const RgbFrame> frames);

/// One clip (T, 3, H, W) -> map. The model must be in evaluation mode and T must equal window.
SegmentationMap predict_clip(FireSegNet& model, const torch::Tensor& clip, const InferenceConfig& cfg);

/// floor((n_total - window) / stride) + 1; throws InputError when n_total < window.
int sliding_window_count(int n_total, int window, int stride);

/// One map per window over a (N_total, 3, H, W) video; map k labels frame k*stride + window - 1.
std::vector<SegmentationMap> sliding_window_infer(FireSegNet& model, const torch::Tensor& video,
                                                  const InferenceConfig& cfg);

using ClipPredictionHook = std::function<void(const Clip& clip, const SegmentationMap& map)>;

/// Runs the model over every clip of a manifest split and scores it against the stored gt.
MetricsReport evaluate_dataset(const DatasetManifest& manifest, Split split, FireSegNet& model,
                               const InferenceConfig& infer, const MatchConfig& match,
                               const ClipPredictionHook& on_clip = {});

}  // namespace smolder
