#pragma once

#include <string>

#include <torch/torch.h>

namespace smolder {

enum class AttentionType { Scse, Cbam };

std::string to_string(AttentionType type);
AttentionType parse_attention(const std::string& name);

// Both modules act on (N, C, T, h, w) volumes. Channel gates pool over
// (T, h, w); spatial gates are computed per (t, y, x) location.

/// Concurrent spatial and channel squeeze-and-excitation; the two gated copies
/// are fused by an elementwise max.
class Scse3dImpl : public torch::nn::Module {
public:
    explicit Scse3dImpl(int64_t channels, int64_t reduction = 16);

    torch::Tensor forward(const torch::Tensor& x);
    torch::Tensor channel_gate(const torch::Tensor& x);  // (N, C, 1, 1, 1)
    torch::Tensor spatial_gate(const torch::Tensor& x);  // (N, 1, T, h, w)

private:
    torch::nn::Conv3d fc1_{nullptr};
    torch::nn::Conv3d fc2_{nullptr};
    torch::nn::Conv3d spatial_{nullptr};
};
TORCH_MODULE(Scse3d);

/// Channel attention (shared MLP over avg- and max-pooled descriptors)
/// followed by spatial attention (1x7x7 conv over channel mean and max).
class Cbam3dImpl : public torch::nn::Module {
public:
    explicit Cbam3dImpl(int64_t channels, int64_t reduction = 16);

    torch::Tensor forward(const torch::Tensor& x);
    torch::Tensor channel_gate(const torch::Tensor& x);  // (N, C, 1, 1, 1)
    torch::Tensor spatial_gate(const torch::Tensor& x);  // (N, 1, T, h, w)

private:
    torch::nn::Conv3d fc1_{nullptr};
    torch::nn::Conv3d fc2_{nullptr};
    torch::nn::Conv3d spatial_{nullptr};
};
TORCH_MODULE(Cbam3d);

/// Holds whichever attention module the decoder is configured with.
class Attention3dImpl : public torch::nn::Module {
public:
    Attention3dImpl(AttentionType type, int64_t channels, int64_t reduction = 16);
    torch::Tensor forward(const torch::Tensor& x);

private:
    Scse3d scse_{nullptr};
    Cbam3d cbam_{nullptr};
};
TORCH_MODULE(Attention3d);

}  // namespace smolder
