#include "smolder/attention.hpp"

#include "smolder/errors.hpp"

namespace smolder {
namespace nn = torch::nn;

namespace {

int64_t hidden_width(int64_t channels, int64_t reduction) { return std::max<int64_t>(1, channels / reduction); }

void require_channels(int64_t channels) {
    if (channels < 2) throw ConfigError("attention blocks need at least 2 channels, got " + std::to_string(channels));
}

}  // namespace

std::string to_string(AttentionType type) { return type == AttentionType::Scse ? "scse" : "cbam"; }

AttentionType parse_attention(const std::string& name) {
    if (name == "scse") return AttentionType::Scse;
    if (name == "cbam") return AttentionType::Cbam;
    throw ConfigError("unknown attention '" + name + "' (expected scse or cbam)");
}

Scse3dImpl::Scse3dImpl(int64_t channels, int64_t reduction) {
    require_channels(channels);
    const int64_t hidden = hidden_width(channels, reduction);
    fc1_ = register_module("fc1", nn::Conv3d(nn::Conv3dOptions(channels, hidden, 1)));
    fc2_ = register_module("fc2", nn::Conv3d(nn::Conv3dOptions(hidden, channels, 1)));
    spatial_ = register_module("spatial", nn::Conv3d(nn::Conv3dOptions(channels, 1, 1)));
}

torch::Tensor Scse3dImpl::channel_gate(const torch::Tensor& x) {
    return torch::sigmoid(fc2_(torch::relu(fc1_(torch::adaptive_avg_pool3d(x, {1, 1, 1})))));
}

torch::Tensor Scse3dImpl::spatial_gate(const torch::Tensor& x) { return torch::sigmoid(spatial_(x)); }

torch::Tensor Scse3dImpl::forward(const torch::Tensor& x) {
    return torch::max(x * channel_gate(x), x * spatial_gate(x));
}

Cbam3dImpl::Cbam3dImpl(int64_t channels, int64_t reduction) {
    require_channels(channels);
    const int64_t hidden = hidden_width(channels, reduction);
    fc1_ = register_module("fc1", nn::Conv3d(nn::Conv3dOptions(channels, hidden, 1).bias(false)));
    fc2_ = register_module("fc2", nn::Conv3d(nn::Conv3dOptions(hidden, channels, 1).bias(false)));
    spatial_ = register_module(
        "spatial", nn::Conv3d(nn::Conv3dOptions(2, 1, {1, 7, 7}).padding({0, 3, 3}).bias(false)));
}

torch::Tensor Cbam3dImpl::channel_gate(const torch::Tensor& x) {
    auto mlp = [this](const torch::Tensor& d) { return fc2_(torch::relu(fc1_(d))); };
    return torch::sigmoid(mlp(torch::adaptive_avg_pool3d(x, {1, 1, 1})) + mlp(std::get<0>(torch::adaptive_max_pool3d(x, {1, 1, 1}))));
}

torch::Tensor Cbam3dImpl::spatial_gate(const torch::Tensor& x) {
    const torch::Tensor pooled = torch::cat({x.mean(1, true), std::get<0>(x.max(1, true))}, 1);
    return torch::sigmoid(spatial_(pooled));
}

torch::Tensor Cbam3dImpl::forward(const torch::Tensor& x) {
    const torch::Tensor refined = x * channel_gate(x);
    return refined * spatial_gate(refined);
}

Attention3dImpl::Attention3dImpl(AttentionType type, int64_t channels, int64_t reduction) {
    if (type == AttentionType::Scse) scse_ = register_module("scse", Scse3d(channels, reduction));
    else cbam_ = register_module("cbam", Cbam3d(channels, reduction));
}

torch::Tensor Attention3dImpl::forward(const torch::Tensor& x) { return scse_ ? scse_(x) : cbam_(x); }

}  // namespace smolder
