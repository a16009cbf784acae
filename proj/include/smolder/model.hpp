#pragma once

#include <memory>
#include <string>

#include <torch/torch.h>

#include "smolder/backbone.hpp"
#include "smolder/temporal_decoder.hpp"

namespace smolder {

struct ModelConfig {
    BackboneSpec backbone = make_backbone_spec(BackboneFamily::EfficientNetB0);
    DecoderConfig decoder;
    bool freeze_encoder = false;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

/// Per-frame 2D encoder, temporal stacking, 3D decoder (Part 1 then Part 2).
class FireSegNetImpl : public torch::nn::Module {
public:
    explicit FireSegNetImpl(ModelConfig cfg);

    /// (N, 3, T, H, W) RGB in [0,1] -> logits (N, n_classes, H, W).
    torch::Tensor forward(const torch::Tensor& clips, DecoderTrace* trace = nullptr);

    const ModelConfig& config() const { return cfg_; }
    Encoder& encoder() { return *encoder_; }

    /// Parameters the optimizer should update (excludes the encoder when frozen).
    std::vector<torch::Tensor> trainable_parameters();

private:
    ModelConfig cfg_;
    std::shared_ptr<Encoder> encoder_;
    DecoderPart1 part1_{nullptr};
    DecoderPart2 part2_{nullptr};
};
TORCH_MODULE(FireSegNet);

}  // namespace smolder
