#include "smolder/backbone.hpp"

#include <cmath>
#include <filesystem>
#include <vector>

#include "smolder/errors.hpp"

namespace smolder {
namespace nn = torch::nn;

namespace {

nn::Conv2dOptions conv_opts(int64_t in, int64_t out, int64_t k, int64_t stride = 1, int64_t groups = 1,
                            bool bias = false) {
    return nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2).groups(groups).bias(bias);
}

// Keeps the last feature map seen at each of the strides 2..32.
class StrideTaps {
public:
    void record(int stride, const torch::Tensor& x) {
        for (int l = 0; l < kPyramidLevels; ++l)
            if (stride == (2 << l)) taps_[static_cast<std::size_t>(l)] = x;
    }
    Pyramid take() { return taps_; }

private:
    Pyramid taps_;
};

// ---------------------------------------------------------------- VGG16

class Vgg16Encoder : public Encoder {
public:
    explicit Vgg16Encoder(BackboneSpec spec) : Encoder(std::move(spec)) {
        const int cfg[] = {64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512, 0};
        int64_t in = 3;
        for (int v : cfg) {
            if (v == 0) {
                features_->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2).stride(2)));
            } else {
                features_->push_back(nn::Conv2d(nn::Conv2dOptions(in, v, 3).padding(1)));
                features_->push_back(nn::ReLU(nn::ReLUOptions(true)));
                in = v;
            }
        }
        register_module("features", features_);
    }

protected:
    // Taps sit after each pooling layer: 64, 128, 256, 512, 512 channels.
    Pyramid forward_features(const torch::Tensor& input) override {
        StrideTaps taps;
        torch::Tensor x = input;
        int stride = 1;
        for (auto& layer : *features_) {
            x = layer.forward(x);
            if (layer.ptr()->as<nn::MaxPool2d>()) {
                stride *= 2;
                taps.record(stride, x);
            }
        }
        return taps.take();
    }

private:
    nn::Sequential features_;
};

// ---------------------------------------------------------------- ResNet18

class BasicBlockImpl : public nn::Module {
public:
    BasicBlockImpl(int64_t in, int64_t out, int64_t stride)
        : conv1(register_module("conv1", nn::Conv2d(conv_opts(in, out, 3, stride)))),
          bn1(register_module("bn1", nn::BatchNorm2d(out))),
          conv2(register_module("conv2", nn::Conv2d(conv_opts(out, out, 3)))),
          bn2(register_module("bn2", nn::BatchNorm2d(out))) {
        if (stride != 1 || in != out) {
            downsample = register_module(
                "downsample", nn::Sequential(nn::Conv2d(conv_opts(in, out, 1, stride)), nn::BatchNorm2d(out)));
        }
    }

    torch::Tensor forward(const torch::Tensor& x) {
        torch::Tensor y = torch::relu(bn1(conv1(x)));
        y = bn2(conv2(y));
        return torch::relu(y + (downsample ? downsample->forward(x) : x));
    }

    nn::Conv2d conv1;
    nn::BatchNorm2d bn1;
    nn::Conv2d conv2;
    nn::BatchNorm2d bn2;
    nn::Sequential downsample{nullptr};
};
TORCH_MODULE(BasicBlock);

class ResNet18Encoder : public Encoder {
public:
    explicit ResNet18Encoder(BackboneSpec spec) : Encoder(std::move(spec)) {
        conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(3, 64, 7).stride(2).padding(3).bias(false)));
        bn1_ = register_module("bn1", nn::BatchNorm2d(64));
        const int64_t widths[] = {64, 128, 256, 512};
        int64_t in = 64;
        for (int i = 0; i < 4; ++i) {
            nn::Sequential layer;
            layer->push_back(BasicBlock(in, widths[i], i == 0 ? 1 : 2));
            layer->push_back(BasicBlock(widths[i], widths[i], 1));
            layers_.push_back(register_module("layer" + std::to_string(i + 1), layer));
            in = widths[i];
        }
    }

protected:
    Pyramid forward_features(const torch::Tensor& input) override {
        Pyramid out;
        torch::Tensor x = torch::relu(bn1_(conv1_(input)));
        out[0] = x;
        x = torch::max_pool2d(x, 3, 2, 1);
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            x = layers_[i]->forward(x);
            out[i + 1] = x;
        }
        return out;
    }

private:
    nn::Conv2d conv1_{nullptr};
    nn::BatchNorm2d bn1_{nullptr};
    std::vector<nn::Sequential> layers_;
};

// ---------------------------------------------------------------- EfficientNet

torch::Tensor swish(const torch::Tensor& x) { return x * torch::sigmoid(x); }

class MBConvImpl : public nn::Module {
public:
    MBConvImpl(int64_t in, int64_t out, int64_t kernel, int64_t stride, int64_t expand)
        : stride_(stride), residual_(stride == 1 && in == out) {
        const int64_t mid = in * expand;
        const auto bn = [](int64_t c) { return nn::BatchNorm2d(nn::BatchNorm2dOptions(c).eps(1e-3).momentum(0.01)); };
        if (expand != 1) {
            expand_conv = register_module("expand_conv", nn::Conv2d(conv_opts(in, mid, 1)));
            bn0 = register_module("bn0", bn(mid));
        }
        depthwise_conv = register_module("depthwise_conv", nn::Conv2d(conv_opts(mid, mid, kernel, stride, mid)));
        bn1 = register_module("bn1", bn(mid));
        const int64_t squeezed = std::max<int64_t>(1, in / 4);
        se_reduce = register_module("se_reduce", nn::Conv2d(nn::Conv2dOptions(mid, squeezed, 1)));
        se_expand = register_module("se_expand", nn::Conv2d(nn::Conv2dOptions(squeezed, mid, 1)));
        project_conv = register_module("project_conv", nn::Conv2d(conv_opts(mid, out, 1)));
        bn2 = register_module("bn2", bn(out));
    }

    torch::Tensor forward(const torch::Tensor& input) {
        torch::Tensor x = input;
        if (expand_conv) x = swish(bn0(expand_conv(x)));
        x = swish(bn1(depthwise_conv(x)));
        torch::Tensor s = torch::adaptive_avg_pool2d(x, {1, 1});
        s = se_expand(swish(se_reduce(s)));
        x = x * torch::sigmoid(s);
        x = bn2(project_conv(x));
        return residual_ ? x + input : x;
    }

    int64_t stride() const { return stride_; }

    nn::Conv2d expand_conv{nullptr};
    nn::BatchNorm2d bn0{nullptr};
    nn::Conv2d depthwise_conv{nullptr};
    nn::BatchNorm2d bn1{nullptr};
    nn::Conv2d se_reduce{nullptr};
    nn::Conv2d se_expand{nullptr};
    nn::Conv2d project_conv{nullptr};
    nn::BatchNorm2d bn2{nullptr};

private:
    int64_t stride_;
    bool residual_;
};
TORCH_MODULE(MBConv);

class EfficientNetEncoder : public Encoder {
public:
    EfficientNetEncoder(BackboneSpec spec, double depth_coefficient) : Encoder(std::move(spec)) {
        struct Stage {
            int64_t kernel, stride, expand, out;
            int repeats;
        };
        const Stage stages[] = {{3, 1, 1, 16, 1}, {3, 2, 6, 24, 2}, {5, 2, 6, 40, 2}, {3, 2, 6, 80, 3},
                                {5, 1, 6, 112, 3}, {5, 2, 6, 192, 4}, {3, 1, 6, 320, 1}};
        stem_conv_ = register_module("stem_conv", nn::Conv2d(conv_opts(3, 32, 3, 2)));
        stem_bn_ = register_module("stem_bn", nn::BatchNorm2d(nn::BatchNorm2dOptions(32).eps(1e-3).momentum(0.01)));
        int64_t in = 32;
        for (const Stage& s : stages) {
            const int repeats = static_cast<int>(std::ceil(depth_coefficient * s.repeats));
            for (int r = 0; r < repeats; ++r) {
                blocks_.push_back(register_module("blocks_" + std::to_string(blocks_.size()),
                                                  MBConv(in, s.out, s.kernel, r == 0 ? s.stride : 1, s.expand)));
                in = s.out;
            }
        }
    }

protected:
    Pyramid forward_features(const torch::Tensor& input) override {
        StrideTaps taps;
        torch::Tensor x = swish(stem_bn_(stem_conv_(input)));
        int stride = 2;
        taps.record(stride, x);
        for (auto& block : blocks_) {
            x = block->forward(x);
            stride *= static_cast<int>(block->stride());
            taps.record(stride, x);
        }
        return taps.take();
    }

private:
    nn::Conv2d stem_conv_{nullptr};
    nn::BatchNorm2d stem_bn_{nullptr};
    std::vector<MBConv> blocks_;
};

// ---------------------------------------------------------------- MobileNetV3-Small

int64_t make_divisible(double v, int64_t divisor = 8) {
    int64_t out = std::max<int64_t>(divisor, static_cast<int64_t>(v + divisor / 2.0) / divisor * divisor);
    if (static_cast<double>(out) < 0.9 * v) out += divisor;
    return out;
}

class InvertedResidualImpl : public nn::Module {
public:
    InvertedResidualImpl(int64_t in, int64_t kernel, int64_t expanded, int64_t out, bool use_se, bool hardswish,
                         int64_t stride)
        : hardswish_(hardswish), stride_(stride), residual_(stride == 1 && in == out) {
        if (expanded != in) {
            expand = register_module("expand", nn::Conv2d(conv_opts(in, expanded, 1)));
            expand_bn = register_module("expand_bn", nn::BatchNorm2d(nn::BatchNorm2dOptions(expanded).eps(1e-3)));
        }
        depthwise = register_module("depthwise", nn::Conv2d(conv_opts(expanded, expanded, kernel, stride, expanded)));
        depthwise_bn = register_module("depthwise_bn", nn::BatchNorm2d(nn::BatchNorm2dOptions(expanded).eps(1e-3)));
        if (use_se) {
            const int64_t squeezed = make_divisible(expanded / 4.0);
            se_fc1 = register_module("se_fc1", nn::Conv2d(nn::Conv2dOptions(expanded, squeezed, 1)));
            se_fc2 = register_module("se_fc2", nn::Conv2d(nn::Conv2dOptions(squeezed, expanded, 1)));
        }
        project = register_module("project", nn::Conv2d(conv_opts(expanded, out, 1)));
        project_bn = register_module("project_bn", nn::BatchNorm2d(nn::BatchNorm2dOptions(out).eps(1e-3)));
    }

    torch::Tensor forward(const torch::Tensor& input) {
        auto act = [this](const torch::Tensor& t) { return hardswish_ ? torch::hardswish(t) : torch::relu(t); };
        torch::Tensor x = input;
        if (expand) x = act(expand_bn(expand(x)));
        x = act(depthwise_bn(depthwise(x)));
        if (se_fc1) {
            torch::Tensor s = torch::adaptive_avg_pool2d(x, {1, 1});
            s = se_fc2(torch::relu(se_fc1(s)));
            x = x * torch::hardsigmoid(s);
        }
        x = project_bn(project(x));
        return residual_ ? x + input : x;
    }

    int64_t stride() const { return stride_; }

    nn::Conv2d expand{nullptr};
    nn::BatchNorm2d expand_bn{nullptr};
    nn::Conv2d depthwise{nullptr};
    nn::BatchNorm2d depthwise_bn{nullptr};
    nn::Conv2d se_fc1{nullptr};
    nn::Conv2d se_fc2{nullptr};
    nn::Conv2d project{nullptr};
    nn::BatchNorm2d project_bn{nullptr};

private:
    bool hardswish_;
    int64_t stride_;
    bool residual_;
};
TORCH_MODULE(InvertedResidual);

class MobileNetV3SmallEncoder : public Encoder {
public:
    explicit MobileNetV3SmallEncoder(BackboneSpec spec) : Encoder(std::move(spec)) {
        struct Row {
            int64_t kernel, expanded, out;
            bool se, hs;
            int64_t stride;
        };
        const Row rows[] = {{3, 16, 16, true, false, 2},   {3, 72, 24, false, false, 2}, {3, 88, 24, false, false, 1},
                            {5, 96, 40, true, true, 2},    {5, 240, 40, true, true, 1},  {5, 240, 40, true, true, 1},
                            {5, 120, 48, true, true, 1},   {5, 144, 48, true, true, 1},  {5, 288, 96, true, true, 2},
                            {5, 576, 96, true, true, 1},   {5, 576, 96, true, true, 1}};
        stem_ = register_module("stem", nn::Conv2d(conv_opts(3, 16, 3, 2)));
        stem_bn_ = register_module("stem_bn", nn::BatchNorm2d(nn::BatchNorm2dOptions(16).eps(1e-3)));
        int64_t in = 16;
        for (const Row& r : rows) {
            blocks_.push_back(register_module("blocks_" + std::to_string(blocks_.size()),
                                              InvertedResidual(in, r.kernel, r.expanded, r.out, r.se, r.hs, r.stride)));
            in = r.out;
        }
        head_ = register_module("head", nn::Conv2d(conv_opts(in, 576, 1)));
        head_bn_ = register_module("head_bn", nn::BatchNorm2d(nn::BatchNorm2dOptions(576).eps(1e-3)));
    }

protected:
    Pyramid forward_features(const torch::Tensor& input) override {
        StrideTaps taps;
        torch::Tensor x = torch::hardswish(stem_bn_(stem_(input)));
        int stride = 2;
        taps.record(stride, x);
        for (auto& block : blocks_) {
            x = block->forward(x);
            stride *= static_cast<int>(block->stride());
            taps.record(stride, x);
        }
        taps.record(stride, torch::hardswish(head_bn_(head_(x))));
        return taps.take();
    }

private:
    nn::Conv2d stem_{nullptr};
    nn::BatchNorm2d stem_bn_{nullptr};
    std::vector<InvertedResidual> blocks_;
    nn::Conv2d head_{nullptr};
    nn::BatchNorm2d head_bn_{nullptr};
};

}  // namespace

std::string to_string(BackboneFamily family) {
    switch (family) {
        case BackboneFamily::Vgg16: return "vgg16";
        case BackboneFamily::ResNet18: return "resnet18";
        case BackboneFamily::EfficientNetB0: return "efficientnet_b0";
        case BackboneFamily::EfficientNetB1: return "efficientnet_b1";
        case BackboneFamily::MobileNet: return "mobilenet";
    }
    return "unknown";
}

std::string backbone_variant(BackboneFamily family) {
    return family == BackboneFamily::MobileNet ? "mobilenet_v3_small" : to_string(family);
}

BackboneFamily parse_backbone(const std::string& name) {
    for (auto f : {BackboneFamily::Vgg16, BackboneFamily::ResNet18, BackboneFamily::EfficientNetB0,
                   BackboneFamily::EfficientNetB1, BackboneFamily::MobileNet})
        if (to_string(f) == name) return f;
    throw ConfigError("unknown backbone '" + name +
                      "' (expected vgg16, resnet18, efficientnet_b0, efficientnet_b1 or mobilenet)");
}

BackboneSpec make_backbone_spec(BackboneFamily family, bool pretrained, std::string weights_path) {
    BackboneSpec s;
    s.family = family;
    s.pretrained = pretrained;
    s.weights_path = std::move(weights_path);
    switch (family) {
        case BackboneFamily::Vgg16: s.level_channels = {64, 128, 256, 512, 512}; break;
        case BackboneFamily::ResNet18: s.level_channels = {64, 64, 128, 256, 512}; break;
        case BackboneFamily::EfficientNetB0:
        case BackboneFamily::EfficientNetB1: s.level_channels = {16, 24, 40, 112, 320}; break;
        case BackboneFamily::MobileNet: s.level_channels = {16, 16, 24, 48, 576}; break;
    }
    return s;
}

Encoder::Encoder(BackboneSpec spec) : spec_(std::move(spec)) {
    mean_ = register_buffer("rgb_mean", torch::tensor({0.485f, 0.456f, 0.406f}).view({1, 3, 1, 1}));
    std_ = register_buffer("rgb_std", torch::tensor({0.229f, 0.224f, 0.225f}).view({1, 3, 1, 1}));
}

Pyramid Encoder::extract_pyramid(const torch::Tensor& frames) {
    if (frames.dim() != 4 || frames.size(1) != 3)
        throw ShapeError("encoder expects (N, 3, H, W) frames, got " + c10::str(frames.sizes()));
    const int64_t h = frames.size(2), w = frames.size(3);
    if (h % 32 != 0 || w % 32 != 0 || h == 0 || w == 0)
        throw ShapeError("encoder input " + std::to_string(h) + "x" + std::to_string(w) +
                         " is not a multiple of 32 in both dimensions");
    Pyramid p = forward_features((frames - mean_) / std_);
    for (int l = 0; l < kPyramidLevels; ++l) {
        const int64_t factor = int64_t{2} << l;
        const auto& t = p[static_cast<std::size_t>(l)];
        if (!t.defined() || t.size(1) != spec_.level_channels[static_cast<std::size_t>(l)] ||
            t.size(2) != h / factor || t.size(3) != w / factor)
            throw ShapeError("backbone " + to_string(spec_.family) + " produced an unexpected level " +
                             std::to_string(l + 1) + " shape");
    }
    return p;
}

std::shared_ptr<Encoder> make_encoder(const BackboneSpec& spec) {
    std::shared_ptr<Encoder> enc;
    switch (spec.family) {
        case BackboneFamily::Vgg16: enc = std::make_shared<Vgg16Encoder>(spec); break;
        case BackboneFamily::ResNet18: enc = std::make_shared<ResNet18Encoder>(spec); break;
        case BackboneFamily::EfficientNetB0: enc = std::make_shared<EfficientNetEncoder>(spec, 1.0); break;
        case BackboneFamily::EfficientNetB1: enc = std::make_shared<EfficientNetEncoder>(spec, 1.1); break;
        case BackboneFamily::MobileNet: enc = std::make_shared<MobileNetV3SmallEncoder>(spec); break;
    }
    if (spec.pretrained) {
        if (spec.weights_path.empty() || !std::filesystem::exists(spec.weights_path))
            throw LoadError("pretrained " + to_string(spec.family) + " weights not found at '" + spec.weights_path + "'");
        try {
            torch::serialize::InputArchive archive;
            archive.load_from(spec.weights_path);
            enc->load(archive);
        } catch (const c10::Error& e) {
            throw LoadError("cannot load " + to_string(spec.family) + " weights from " + spec.weights_path + ": " +
                            e.what_without_backtrace());
        }
    }
    return enc;
}

FeaturePyramidSequence stack_temporal(std::span<const Pyramid> per_frame) {
    if (per_frame.empty()) throw InputError("stack_temporal: no frames");
    FeaturePyramidSequence seq;
    for (int l = 0; l < kPyramidLevels; ++l) {
        std::vector<torch::Tensor> frames;
        frames.reserve(per_frame.size());
        for (std::size_t t = 0; t < per_frame.size(); ++t) {
            const auto& x = per_frame[t][static_cast<std::size_t>(l)];
            if (!x.sizes().equals(per_frame[0][static_cast<std::size_t>(l)].sizes()))
                throw InputError("stack_temporal: frame " + std::to_string(t) + " level " + std::to_string(l + 1) +
                                 " has shape " + c10::str(x.sizes()));
            frames.push_back(x);
        }
        seq.levels[static_cast<std::size_t>(l)] = torch::stack(frames, 2);
    }
    return seq;
}

FeaturePyramidSequence encode_clips(Encoder& encoder, const torch::Tensor& clips) {
    if (clips.dim() != 5 || clips.size(1) != 3)
        throw ShapeError("expected clips (N, 3, T, H, W), got " + c10::str(clips.sizes()));
    const int64_t n = clips.size(0), t = clips.size(2);
    const torch::Tensor folded = clips.permute({0, 2, 1, 3, 4}).reshape({n * t, 3, clips.size(3), clips.size(4)});
    const Pyramid p = encoder.extract_pyramid(folded);
    FeaturePyramidSequence seq;
    for (int l = 0; l < kPyramidLevels; ++l) {
        const auto& x = p[static_cast<std::size_t>(l)];
        seq.levels[static_cast<std::size_t>(l)] =
            x.view({n, t, x.size(1), x.size(2), x.size(3)}).permute({0, 2, 1, 3, 4}).contiguous();
    }
    return seq;
}

}  // namespace smolder
