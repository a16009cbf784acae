#include "smolder/model.hpp"

#include "smolder/errors.hpp"

namespace smolder {

void ModelConfig::validate() const {
    decoder.validate();
    if (backbone != make_backbone_spec(backbone.family, backbone.pretrained, backbone.weights_path))
        throw ConfigError("backbone level channels do not match the " + to_string(backbone.family) + " layout");
    if (backbone.pretrained && backbone.weights_path.empty())
        throw ConfigError("model.weights expects a weights file path when model.pretrained is true");
}

FireSegNetImpl::FireSegNetImpl(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    encoder_ = register_module("encoder", make_encoder(cfg_.backbone));
    part1_ = register_module("part1", DecoderPart1(cfg_.decoder, cfg_.backbone));
    part2_ = register_module("part2", DecoderPart2(cfg_.decoder));
    if (cfg_.freeze_encoder)
        for (auto& p : encoder_->parameters()) p.set_requires_grad(false);
}

torch::Tensor FireSegNetImpl::forward(const torch::Tensor& clips, DecoderTrace* trace) {
    if (clips.dim() != 5 || clips.size(1) != 3)
        throw ShapeError("model expects clips (N, 3, T, H, W), got " + c10::str(clips.sizes()));
    if (clips.size(2) != cfg_.decoder.seq_len)
        throw ShapeError("model expects " + std::to_string(cfg_.decoder.seq_len) + " frames per clip, got " +
                         std::to_string(clips.size(2)));
    auto stage = [](const char* name, auto&& fn) {
        try {
            return fn();
        } catch (const ShapeError& e) {
            throw ShapeError(std::string(name) + ": " + e.what());
        } catch (const c10::Error& e) {
            throw ShapeError(std::string(name) + ": " + e.what_without_backtrace());
        }
    };
    const FeaturePyramidSequence features = stage("encoder", [&] { return encode_clips(*encoder_, clips); });
    const torch::Tensor volume = stage("decoder part 1", [&] { return part1_->forward(features, trace); });
    const torch::Tensor collapsed = stage("decoder part 2", [&] { return part2_->forward(volume, trace); });
    return collapsed.squeeze(2);
}

std::vector<torch::Tensor> FireSegNetImpl::trainable_parameters() {
    std::vector<torch::Tensor> out;
    for (auto& p : parameters())
        if (p.requires_grad()) out.push_back(p);
    return out;
}

}  // namespace smolder
