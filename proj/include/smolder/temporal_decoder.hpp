#pragma once

#include <array>
#include <vector>

#include <torch/torch.h>

#include "smolder/attention.hpp"
#include "smolder/backbone.hpp"

namespace smolder {

struct DecoderConfig {
    AttentionType attention = AttentionType::Scse;
    int64_t n_classes = 1;
    // Output widths of the five 3x3x3 conv blocks, coarsest first. Empty means
    // start at the bottleneck width and halve at every stage.
    std::vector<int64_t> part1_channels;
    int64_t time_kernel = 4;
    int64_t n_time_blocks = 6;
    int64_t seq_len = 20;
    int64_t attention_reduction = 16;

    /// Requires seq_len - n_time_blocks * (time_kernel - 1) == 2.
    void validate() const;
    std::array<int64_t, kPyramidLevels> stage_channels(int64_t bottleneck_channels) const;

    bool operator==(const DecoderConfig&) const = default;
};

/// Time length after each Part-2 layer, starting with the input length.
/// Defaults give 20, 17, 14, 11, 8, 5, 2, 1.
std::vector<int64_t> part2_time_lengths(const DecoderConfig& cfg);

/// Shapes seen inside the decoder, filled when a trace is passed to forward.
struct DecoderTrace {
    std::vector<std::vector<int64_t>> part1_shapes;  // after each conv/attention/upsample step
    std::vector<int64_t> part2_time_lengths;         // input, after each time block, after final conv
};

/// Restores full resolution from the stacked pyramid while keeping the time
/// axis: per stage 3x3x3 conv block -> attention -> 1x2x2 transposed conv,
/// concatenating the next finer skip level after each upsample.
class DecoderPart1Impl : public torch::nn::Module {
public:
    DecoderPart1Impl(const DecoderConfig& cfg, const BackboneSpec& backbone);

    /// -> (N, n_classes, T, H, W)
    torch::Tensor forward(const FeaturePyramidSequence& features, DecoderTrace* trace = nullptr);

private:
    std::array<int64_t, kPyramidLevels> level_channels_;
    std::vector<torch::nn::Sequential> conv_blocks_;
    std::vector<Attention3d> attention_;
    std::vector<torch::nn::ConvTranspose3d> upsample_;
    torch::nn::Conv3d head_{nullptr};
};
TORCH_MODULE(DecoderPart1);

/// Collapses time: n_time_blocks x (time_kernel x 1 x 1 conv -> BN -> ReLU),
/// then a final conv spanning the remaining frames.
class DecoderPart2Impl : public torch::nn::Module {
public:
    explicit DecoderPart2Impl(const DecoderConfig& cfg);

    /// (N, n_classes, seq_len, H, W) -> (N, n_classes, 1, H, W)
    torch::Tensor forward(const torch::Tensor& x, DecoderTrace* trace = nullptr);

private:
    int64_t seq_len_;
    std::vector<torch::nn::Sequential> time_blocks_;
    torch::nn::Conv3d final_{nullptr};
};
TORCH_MODULE(DecoderPart2);

}  // namespace smolder
