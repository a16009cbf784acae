#include "smolder/inference.hpp"

#include "smolder/errors.hpp"

namespace smolder {

void InferenceConfig::validate() const {
    if (window < 1) throw ConfigError("infer.window must be >= 1");
    if (stride < 1) throw ConfigError("infer.stride must be >= 1");
    if (!(binarize_threshold >= 0.0 && binarize_threshold <= 1.0))
        throw ConfigError("infer.binarize_threshold must lie in [0, 1]");
    if (device != "cpu") throw ConfigError("infer.device: only 'cpu' is supported, got '" + device + "'");
}

BinaryMask SegmentationMap::binarize(double threshold) const {
    const torch::Tensor p = probs.to(torch::kFloat64).contiguous();
    BinaryMask out(rows(), cols());
    auto a = p.accessor<double, 2>();
    for (int r = 0; r < out.rows(); ++r)
        for (int c = 0; c < out.cols(); ++c) out(r, c) = a[r][c] >= threshold ? 1 : 0;
    return out;
}

Grid<float> SegmentationMap::probability_grid() const {
    const torch::Tensor p = probs.to(torch::kFloat32).contiguous();
    Grid<float> out(rows(), cols());
    auto a = p.accessor<float, 2>();
    for (int r = 0; r < out.rows(); ++r)
        for (int c = 0; c < out.cols(); ++c) out(r, c) = a[r][c];
    return out;
}

torch::Tensor frames_to_tensor(std::span<const RgbFrame> frames) {
    if (frames.empty()) throw InputError("no frames given");
    const int t = static_cast<int>(frames.size());
    const int h = frames[0].rows(), w = frames[0].cols();
    torch::Tensor out = torch::empty({t, 3, h, w}, torch::kFloat32);
    auto a = out.accessor<float, 4>();
    for (int k = 0; k < t; ++k) {
        const RgbFrame& f = frames[static_cast<std::size_t>(k)];
        if (!f.same_shape(frames[0])) throw ShapeError("frame " + std::to_string(k) + " changes resolution");
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                a[k][0][r][c] = f(r, c).r;
                a[k][1][r][c] = f(r, c).g;
                a[k][2][r][c] = f(r, c).b;
            }
    }
    return out;
}

SegmentationMap predict_clip(FireSegNet& model, const torch::Tensor& clip, const InferenceConfig& cfg) {
    if (clip.dim() != 4 || clip.size(1) != 3)
        throw ShapeError("predict_clip expects (T, 3, H, W), got " + c10::str(clip.sizes()));
    if (clip.size(0) != cfg.window)
        throw ShapeError("predict_clip expects " + std::to_string(cfg.window) + " frames, got " +
                         std::to_string(clip.size(0)));
    if (model->is_training()) throw InputError("predict_clip requires the model in evaluation mode");
    torch::NoGradGuard no_grad;
    const torch::Tensor logits = model->forward(clip.permute({1, 0, 2, 3}).unsqueeze(0)).select(0, 0).select(0, 0);
    SegmentationMap out;
    out.logits = logits;
    out.probs = torch::sigmoid(logits);
    out.frame_index = cfg.window - 1;
    return out;
}

int sliding_window_count(int n_total, int window, int stride) {
    if (window < 1 || stride < 1) throw ConfigError("window and stride must be >= 1");
    if (n_total < window)
        throw InputError("video has " + std::to_string(n_total) + " frames; at least " + std::to_string(window) +
                         " are needed for one window");
    return (n_total - window) / stride + 1;
}

std::vector<SegmentationMap> sliding_window_infer(FireSegNet& model, const torch::Tensor& video,
                                                  const InferenceConfig& cfg) {
    cfg.validate();
    if (video.dim() != 4 || video.size(1) != 3)
        throw ShapeError("sliding_window_infer expects (N, 3, H, W), got " + c10::str(video.sizes()));
    const int n = sliding_window_count(static_cast<int>(video.size(0)), cfg.window, cfg.stride);
    std::vector<SegmentationMap> maps;
    maps.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        SegmentationMap m = predict_clip(model, video.narrow(0, static_cast<int64_t>(k) * cfg.stride, cfg.window), cfg);
        m.frame_index = k * cfg.stride + cfg.window - 1;
        maps.push_back(std::move(m));
    }
    return maps;
}

MetricsReport evaluate_dataset(const DatasetManifest& manifest, Split split, FireSegNet& model,
                               const InferenceConfig& infer, const MatchConfig& match,
                               const ClipPredictionHook& on_clip) {
    infer.validate();
    match.validate();
    if (manifest.seq_len != infer.window)
        throw ConfigError("manifest seq_len " + std::to_string(manifest.seq_len) + " differs from infer.window " +
                          std::to_string(infer.window));
    const auto entries = manifest.entries(split);
    if (entries.empty()) throw InputError("the " + to_string(split) + " split is empty");
    model->eval();
    std::vector<ClipMetrics> clips;
    for (const auto& e : entries) {
        const Clip clip = load_clip(e);
        if (clip.frames.size() != static_cast<std::size_t>(infer.window))
            throw InputError("clip " + e.clip_id + " has " + std::to_string(clip.frames.size()) + " frames");
        const SegmentationMap m = predict_clip(model, frames_to_tensor(clip.frames), infer);
        clips.push_back(evaluate_clip(e.clip_id, m.binarize(infer.binarize_threshold), clip.gt_mask, match));
        if (on_clip) on_clip(clip, m);
    }
    return make_report(std::move(clips));
}

}  // namespace smolder
