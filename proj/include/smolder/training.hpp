#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "smolder/clip_dataset.hpp"
#include "smolder/model.hpp"

namespace smolder {

namespace fs = std::filesystem;

struct TrainConfig {
    double lr_init = 1e-2;
    std::string optimizer = "adam";
    int epochs = 300;
    int batch_size = 5;
    int lr_step_size = 100;
    double lr_gamma = 0.1;
    double epsilon_dice = 1e-6;
    std::uint64_t seed = 0;
    bool deterministic = true;
    int eval_every = 1;      // epochs between test-split evaluations
    bool cache_clips = true;  // keep decoded clips in memory
    std::int64_t max_steps = 0;  // 0 = no cap

    void validate() const;
};

struct TrainState {
    int epoch = 0;  // index of the epoch being (or next to be) trained
    std::int64_t global_step = 0;
    double best_test_dice = -1.0;
    double lr_current = 0.0;
    std::string rng_state;  // serialized shuffle engine
};

/// Mean over samples of 1 - (2 sum p g + eps) / (sum p^2 + sum g^2 + eps).
/// probs and gt are (N, H, W) (or (H, W) for a single sample).
torch::Tensor dice_loss(const torch::Tensor& probs, const torch::Tensor& gt, double epsilon);

/// lr_init * lr_gamma ^ floor(epoch / lr_step_size)
double lr_at_epoch(const TrainConfig& cfg, int epoch);
/// Sets state.lr_current for state.epoch.
TrainState lr_schedule_step(TrainState state, const TrainConfig& cfg);

/// Seeds torch and, when requested, switches torch to deterministic kernels.
void seed_everything(std::uint64_t seed, bool deterministic = true);

struct Sample {
    std::string clip_id;
    torch::Tensor frames;  // (3, T, H, W) float in [0,1]
    torch::Tensor gt;      // (H, W) float in {0,1}
};

/// Random access to training samples.
class SampleSource {
public:
    virtual ~SampleSource() = default;
    virtual std::size_t size() const = 0;
    virtual Sample get(std::size_t index) = 0;
};

Sample clip_to_sample(const Clip& clip);

class InMemorySource : public SampleSource {
public:
    explicit InMemorySource(const std::vector<Clip>& clips);
    std::size_t size() const override { return samples_.size(); }
    Sample get(std::size_t index) override { return samples_.at(index); }

private:
    std::vector<Sample> samples_;
};

class ManifestSource : public SampleSource {
public:
    ManifestSource(std::vector<ManifestEntry> entries, bool cache);
    std::size_t size() const override { return entries_.size(); }
    Sample get(std::size_t index) override;

private:
    std::vector<ManifestEntry> entries_;
    bool cache_;
    std::vector<std::optional<Sample>> cached_;
};

struct EpochRecord {
    int epoch = 0;  // 0 = before training, k = after k epochs
    Split split = Split::Train;
    double dice = 0.0;
    double loss = 0.0;
    double lr = 0.0;
};

std::string to_jsonl(const EpochRecord& record);

struct TrainOptions {
    fs::path run_dir;  // empty: no checkpoint files are written
    std::string labeling_hash;
    double binarize_threshold = 0.5;
    std::function<void(const EpochRecord&)> on_record;
};

struct TrainResult {
    TrainState state;
    std::vector<EpochRecord> history;
    std::vector<double> step_losses;
    fs::path best_checkpoint;
    fs::path last_checkpoint;
};

/// Adam with step learning rate on Dice loss. Writes ckpt_best (best test Dice,
/// or train Dice without a test split) and ckpt_last under run_dir.
TrainResult train_on_sources(FireSegNet& model, SampleSource& train, SampleSource* test, const TrainConfig& cfg,
                             const TrainOptions& options);

TrainResult train_model(const DatasetManifest& manifest, FireSegNet& model, const TrainConfig& cfg,
                        const TrainOptions& options);

struct EvalSummary {
    double mean_dice = 0.0;
    double mean_loss = 0.0;
};

/// Evaluation-mode Dice of binarized predictions and mean Dice loss.
EvalSummary evaluate_source(FireSegNet& model, SampleSource& source, double epsilon, double binarize_threshold);

// Checkpoints hold the weights, model config, labeling hash and train state.
inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const fs::path& path, FireSegNet& model, const TrainState& state,
                     const std::string& labeling_hash);

struct LoadedCheckpoint {
    FireSegNet model{nullptr};
    ModelConfig config;
    TrainState state;
    std::string labeling_hash;
};

/// Rebuilds the model stored at path. When `expected` is given the stored
/// architecture must match it; when `expected_labeling_hash` is non-empty it
/// must match too. Mismatches raise LoadError.
LoadedCheckpoint load_checkpoint(const fs::path& path, const ModelConfig* expected = nullptr,
                                 const std::string& expected_labeling_hash = {});

}  // namespace smolder
