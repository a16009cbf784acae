#include "smolder/temporal_decoder.hpp"

#include "smolder/errors.hpp"

namespace smolder {
namespace nn = torch::nn;

void DecoderConfig::validate() const {
    if (n_classes < 1) throw ConfigError("model.n_classes must be >= 1");
    if (time_kernel < 2) throw ConfigError("model.time_kernel must be >= 2");
    if (n_time_blocks < 0) throw ConfigError("model.n_time_blocks must be >= 0");
    if (attention_reduction < 1) throw ConfigError("model.attention_reduction must be >= 1");
    if (seq_len - n_time_blocks * (time_kernel - 1) != 2)
        throw ConfigError("time arithmetic violated: seq_len " + std::to_string(seq_len) + " - n_time_blocks " +
                          std::to_string(n_time_blocks) + " * (time_kernel " + std::to_string(time_kernel) +
                          " - 1) must equal 2");
    if (!part1_channels.empty()) {
        if (part1_channels.size() != kPyramidLevels)
            throw ConfigError("model.part1_channels must list exactly 5 widths");
        for (auto c : part1_channels)
            if (c < 2) throw ConfigError("model.part1_channels entries must be >= 2");
    }
}

std::array<int64_t, kPyramidLevels> DecoderConfig::stage_channels(int64_t bottleneck_channels) const {
    std::array<int64_t, kPyramidLevels> out{};
    for (std::size_t s = 0; s < out.size(); ++s)
        out[s] = part1_channels.empty() ? std::max<int64_t>(bottleneck_channels >> s, 2) : part1_channels[s];
    return out;
}

std::vector<int64_t> part2_time_lengths(const DecoderConfig& cfg) {
    std::vector<int64_t> out{cfg.seq_len};
    for (int64_t b = 0; b < cfg.n_time_blocks; ++b) out.push_back(out.back() - (cfg.time_kernel - 1));
    out.push_back(1);
    return out;
}

DecoderPart1Impl::DecoderPart1Impl(const DecoderConfig& cfg, const BackboneSpec& backbone)
    : level_channels_(backbone.level_channels) {
    cfg.validate();
    const auto widths = cfg.stage_channels(level_channels_.back());
    int64_t in = level_channels_.back();
    for (int s = 0; s < kPyramidLevels; ++s) {
        const auto su = static_cast<std::size_t>(s);
        const int64_t out = widths[su];
        conv_blocks_.push_back(register_module(
            "conv" + std::to_string(s),
            nn::Sequential(nn::Conv3d(nn::Conv3dOptions(in, out, 3).padding(1).bias(false)), nn::BatchNorm3d(out),
                           nn::ReLU(nn::ReLUOptions(true)))));
        attention_.push_back(
            register_module("attention" + std::to_string(s), Attention3d(cfg.attention, out, cfg.attention_reduction)));
        upsample_.push_back(register_module(
            "up" + std::to_string(s),
            nn::ConvTranspose3d(nn::ConvTranspose3dOptions(out, out, {1, 2, 2}).stride({1, 2, 2}))));
        // The skip joining after this upsample is the next finer pyramid level.
        const int skip = kPyramidLevels - 2 - s;
        in = out + (skip >= 0 ? level_channels_[static_cast<std::size_t>(skip)] : 0);
    }
    head_ = register_module("head", nn::Conv3d(nn::Conv3dOptions(in, cfg.n_classes, 1)));
}

torch::Tensor DecoderPart1Impl::forward(const FeaturePyramidSequence& features, DecoderTrace* trace) {
    for (int l = 0; l < kPyramidLevels; ++l) {
        const auto& x = features.levels[static_cast<std::size_t>(l)];
        if (!x.defined() || x.dim() != 5 || x.size(1) != level_channels_[static_cast<std::size_t>(l)])
            throw ShapeError("decoder part 1: pyramid level " + std::to_string(l + 1) + " does not match the backbone");
    }
    const int64_t t = features.levels[0].size(2);
    auto note = [&](const torch::Tensor& x) {
        if (x.size(2) != t) throw ShapeError("decoder part 1 changed the time axis");
        if (trace) trace->part1_shapes.push_back(x.sizes().vec());
    };
    torch::Tensor x = features.levels.back();
    for (int s = 0; s < kPyramidLevels; ++s) {
        const auto su = static_cast<std::size_t>(s);
        x = conv_blocks_[su]->forward(x);
        note(x);
        x = attention_[su]->forward(x);
        note(x);
        x = upsample_[su]->forward(x);
        note(x);
        const int skip = kPyramidLevels - 2 - s;
        if (skip >= 0) {
            const auto& sk = features.levels[static_cast<std::size_t>(skip)];
            if (sk.size(2) != t || sk.size(3) != x.size(3) || sk.size(4) != x.size(4))
                throw ShapeError("decoder part 1: skip level " + std::to_string(skip + 1) + " has shape " +
                                 c10::str(sk.sizes()) + ", upsampled path has " + c10::str(x.sizes()));
            x = torch::cat({x, sk}, 1);
        }
    }
    x = head_(x);
    note(x);
    return x;
}

DecoderPart2Impl::DecoderPart2Impl(const DecoderConfig& cfg) : seq_len_(cfg.seq_len) {
    cfg.validate();
    const int64_t c = cfg.n_classes;
    for (int64_t b = 0; b < cfg.n_time_blocks; ++b) {
        time_blocks_.push_back(register_module(
            "time_block" + std::to_string(b),
            nn::Sequential(nn::Conv3d(nn::Conv3dOptions(c, c, {cfg.time_kernel, 1, 1})), nn::BatchNorm3d(c),
                           nn::ReLU())));
    }
    const int64_t remaining = cfg.seq_len - cfg.n_time_blocks * (cfg.time_kernel - 1);
    final_ = register_module("final", nn::Conv3d(nn::Conv3dOptions(c, c, {remaining, 1, 1})));
}

torch::Tensor DecoderPart2Impl::forward(const torch::Tensor& input, DecoderTrace* trace) {
    if (input.dim() != 5 || input.size(2) != seq_len_)
        throw ShapeError("decoder part 2 expects time length " + std::to_string(seq_len_) + ", got input " +
                         c10::str(input.sizes()));
    torch::Tensor x = input;
    if (trace) trace->part2_time_lengths.push_back(x.size(2));
    for (auto& block : time_blocks_) {
        x = block->forward(x);
        if (trace) trace->part2_time_lengths.push_back(x.size(2));
    }
    x = final_(x);
    if (trace) trace->part2_time_lengths.push_back(x.size(2));
    return x;
}

}  // namespace smolder
