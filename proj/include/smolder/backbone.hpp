#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>

#include <torch/torch.h>

namespace smolder {

enum class BackboneFamily { Vgg16, ResNet18, EfficientNetB0, EfficientNetB1, MobileNet };

std::string to_string(BackboneFamily family);
BackboneFamily parse_backbone(const std::string& name);
/// Concrete architecture behind a family name, e.g. "mobilenet_v3_small".
std::string backbone_variant(BackboneFamily family);

inline constexpr int kPyramidLevels = 5;

struct BackboneSpec {
    BackboneFamily family = BackboneFamily::EfficientNetB0;
    bool pretrained = false;
    std::string weights_path;  // required when pretrained
    std::array<std::int64_t, kPyramidLevels> level_channels{};  // strides 2, 4, 8, 16, 32

    bool operator==(const BackboneSpec&) const = default;
};

/// Spec with the standard channel widths of `family`.
BackboneSpec make_backbone_spec(BackboneFamily family, bool pretrained = false, std::string weights_path = {});

/// Per-frame features; level l (0-based) is (N, C_l, H / 2^(l+1), W / 2^(l+1)).
using Pyramid = std::array<torch::Tensor, kPyramidLevels>;

/// Per-clip features; level l is (N, C_l, T, H / 2^(l+1), W / 2^(l+1)).
struct FeaturePyramidSequence {
    std::array<torch::Tensor, kPyramidLevels> levels;
};

/// 2D classification backbone truncated to its five stride taps. Inputs are
/// RGB in [0,1]; ImageNet normalization happens inside.
class Encoder : public torch::nn::Module {
public:
    explicit Encoder(BackboneSpec spec);
    const BackboneSpec& spec() const { return spec_; }

    /// (N, 3, H, W) -> five levels. H and W must be multiples of 32.
    Pyramid extract_pyramid(const torch::Tensor& frames);

protected:
    virtual Pyramid forward_features(const torch::Tensor& normalized) = 0;

private:
    BackboneSpec spec_;
    torch::Tensor mean_;
    torch::Tensor std_;
};

/// Builds the encoder and, if spec.pretrained, loads weights from spec.weights_path.
std::shared_ptr<Encoder> make_encoder(const BackboneSpec& spec);

/// Stacks T per-frame pyramids along a new time axis (dim 2), preserving frame order.
FeaturePyramidSequence stack_temporal(std::span<const Pyramid> per_frame);

/// Encodes a clip batch (N, 3, T, H, W) by folding time into the batch axis.
FeaturePyramidSequence encode_clips(Encoder& encoder, const torch::Tensor& clips);

}  // namespace smolder
