#include "smolder/training.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "smolder/errors.hpp"
#include "smolder/evaluation.hpp"

namespace smolder {
namespace {

using nlohmann::json;

constexpr const char* kMetaKey = "smolder_meta";

json model_config_json(const ModelConfig& cfg) {
    const auto& d = cfg.decoder;
    return {{"backbone",
             {{"family", to_string(cfg.backbone.family)},
              {"pretrained", cfg.backbone.pretrained},
              {"weights_path", cfg.backbone.weights_path},
              {"level_channels", cfg.backbone.level_channels}}},
            {"decoder",
             {{"attention", to_string(d.attention)},
              {"n_classes", d.n_classes},
              {"part1_channels", d.part1_channels},
              {"time_kernel", d.time_kernel},
              {"n_time_blocks", d.n_time_blocks},
              {"seq_len", d.seq_len},
              {"attention_reduction", d.attention_reduction}}},
            {"freeze_encoder", cfg.freeze_encoder}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    const auto& b = j.at("backbone");
    cfg.backbone = make_backbone_spec(parse_backbone(b.at("family").get<std::string>()), b.at("pretrained").get<bool>(),
                                      b.at("weights_path").get<std::string>());
    const auto& d = j.at("decoder");
    cfg.decoder.attention = parse_attention(d.at("attention").get<std::string>());
    cfg.decoder.n_classes = d.at("n_classes").get<int64_t>();
    cfg.decoder.part1_channels = d.at("part1_channels").get<std::vector<int64_t>>();
    cfg.decoder.time_kernel = d.at("time_kernel").get<int64_t>();
    cfg.decoder.n_time_blocks = d.at("n_time_blocks").get<int64_t>();
    cfg.decoder.seq_len = d.at("seq_len").get<int64_t>();
    cfg.decoder.attention_reduction = d.at("attention_reduction").get<int64_t>();
    cfg.freeze_encoder = j.at("freeze_encoder").get<bool>();
    return cfg;
}

// Architecture identity: everything that determines the parameter layout and forward.
bool same_architecture(const ModelConfig& a, const ModelConfig& b) {
    return a.backbone.family == b.backbone.family && a.backbone.level_channels == b.backbone.level_channels &&
           a.decoder == b.decoder;
}

std::string describe_mismatch(const ModelConfig& stored, const ModelConfig& expected) {
    if (stored.backbone.family != expected.backbone.family)
        return "backbone " + to_string(stored.backbone.family) + " in checkpoint, expected " +
               to_string(expected.backbone.family);
    return "decoder configuration differs: checkpoint " + model_config_json(stored)["decoder"].dump() + ", expected " +
           model_config_json(expected)["decoder"].dump();
}

torch::Tensor stack_frames(const std::vector<Sample>& batch) {
    std::vector<torch::Tensor> f, g;
    for (const auto& s : batch) f.push_back(s.frames);
    return torch::stack(f, 0);
}

torch::Tensor stack_gt(const std::vector<Sample>& batch) {
    std::vector<torch::Tensor> g;
    for (const auto& s : batch) g.push_back(s.gt);
    return torch::stack(g, 0);
}

double hard_dice(const torch::Tensor& probs, const torch::Tensor& gt, double threshold) {
    // Same definition as dice_score: both-empty scores 1.
    const torch::Tensor p = (probs >= threshold).to(torch::kFloat64);
    const torch::Tensor g = (gt > 0.5).to(torch::kFloat64);
    const double denom = (p.sum() + g.sum()).item<double>();
    if (denom == 0.0) return 1.0;
    return 2.0 * (p * g).sum().item<double>() / denom;
}

void set_lr(torch::optim::Adam& opt, double lr) {
    for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

}  // namespace

void TrainConfig::validate() const {
    if (!(lr_init > 0.0)) throw ConfigError("train.lr_init must be > 0");
    if (optimizer != "adam") throw ConfigError("train.optimizer must be 'adam'");
    if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (lr_step_size < 1) throw ConfigError("train.lr_step_size must be >= 1");
    if (!(lr_gamma > 0.0 && lr_gamma <= 1.0)) throw ConfigError("train.lr_gamma must lie in (0, 1]");
    if (!(epsilon_dice > 0.0)) throw ConfigError("train.epsilon_dice must be > 0");
    if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
    if (max_steps < 0) throw ConfigError("train.max_steps must be >= 0");
}

torch::Tensor dice_loss(const torch::Tensor& probs, const torch::Tensor& gt, double epsilon) {
    if (!probs.sizes().equals(gt.sizes()))
        throw InputError("dice_loss: prediction shape " + c10::str(probs.sizes()) + " differs from ground truth " +
                         c10::str(gt.sizes()));
    const torch::Tensor p = probs.dim() == 2 ? probs.unsqueeze(0) : probs;
    const torch::Tensor g = (gt.dim() == 2 ? gt.unsqueeze(0) : gt).to(p.dtype());
    const torch::Tensor p_flat = p.flatten(1);
    const torch::Tensor g_flat = g.flatten(1);
    const torch::Tensor intersection = (p_flat * g_flat).sum(1);
    const torch::Tensor denom = p_flat.pow(2).sum(1) + g_flat.pow(2).sum(1);
    const torch::Tensor per_sample = 1.0 - (2.0 * intersection + epsilon) / (denom + epsilon);
    return per_sample.mean();
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    return cfg.lr_init * std::pow(cfg.lr_gamma, epoch / cfg.lr_step_size);
}

TrainState lr_schedule_step(TrainState state, const TrainConfig& cfg) {
    state.lr_current = lr_at_epoch(cfg, state.epoch);
    return state;
}

void seed_everything(std::uint64_t seed, bool deterministic) {
    torch::manual_seed(seed);
    at::globalContext().setDeterministicAlgorithms(deterministic, false);
}

Sample clip_to_sample(const Clip& clip) {
    if (clip.frames.empty()) throw InputError("clip " + clip.clip_id + " has no frames");
    const int t = static_cast<int>(clip.frames.size());
    const int h = clip.frames[0].rows(), w = clip.frames[0].cols();
    if (!clip.gt_mask.same_shape(clip.frames[0]))
        throw ShapeError("clip " + clip.clip_id + ": ground truth shape differs from frame shape");
    torch::Tensor frames = torch::empty({3, t, h, w}, torch::kFloat32);
    auto acc = frames.accessor<float, 4>();
    for (int k = 0; k < t; ++k) {
        if (!clip.frames[static_cast<std::size_t>(k)].same_shape(clip.frames[0]))
            throw ShapeError("clip " + clip.clip_id + ": frame " + std::to_string(k) + " changes resolution");
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const Rgb& p = clip.frames[static_cast<std::size_t>(k)](r, c);
                acc[0][k][r][c] = p.r;
                acc[1][k][r][c] = p.g;
                acc[2][k][r][c] = p.b;
            }
    }
    torch::Tensor gt = torch::empty({h, w}, torch::kFloat32);
    auto g = gt.accessor<float, 2>();
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) g[r][c] = clip.gt_mask(r, c) ? 1.0f : 0.0f;
    return {clip.clip_id, frames, gt};
}

InMemorySource::InMemorySource(const std::vector<Clip>& clips) {
    samples_.reserve(clips.size());
    for (const auto& c : clips) samples_.push_back(clip_to_sample(c));
}

ManifestSource::ManifestSource(std::vector<ManifestEntry> entries, bool cache)
    : entries_(std::move(entries)), cache_(cache), cached_(entries_.size()) {}

Sample ManifestSource::get(std::size_t index) {
    if (cache_ && cached_.at(index)) return *cached_[index];
    Sample s = clip_to_sample(load_clip(entries_.at(index)));
    if (cache_) cached_[index] = s;
    return s;
}

std::string to_jsonl(const EpochRecord& r) {
    return json{{"epoch", r.epoch}, {"split", to_string(r.split)}, {"dice", r.dice}, {"loss", r.loss}, {"lr", r.lr}}
        .dump();
}

EvalSummary evaluate_source(FireSegNet& model, SampleSource& source, double epsilon, double binarize_threshold) {
    EvalSummary out;
    if (source.size() == 0) return out;
    torch::NoGradGuard no_grad;
    const bool was_training = model->is_training();
    model->eval();
    for (std::size_t i = 0; i < source.size(); ++i) {
        const Sample s = source.get(i);
        const torch::Tensor probs = torch::sigmoid(model->forward(s.frames.unsqueeze(0))).select(1, 0);
        out.mean_loss += dice_loss(probs, s.gt.unsqueeze(0), epsilon).item<double>();
        out.mean_dice += hard_dice(probs, s.gt.unsqueeze(0), binarize_threshold);
    }
    out.mean_loss /= static_cast<double>(source.size());
    out.mean_dice /= static_cast<double>(source.size());
    model->train(was_training);
    return out;
}

TrainResult train_on_sources(FireSegNet& model, SampleSource& train, SampleSource* test, const TrainConfig& cfg,
                             const TrainOptions& options) {
    cfg.validate();
    if (train.size() == 0) throw InputError("training split is empty");
    if (model->config().decoder.n_classes != 1)
        throw ConfigError("training supports n_classes = 1 (binary fire masks)");
    at::globalContext().setDeterministicAlgorithms(cfg.deterministic, false);

    TrainResult result;
    TrainState& state = result.state;
    state = lr_schedule_step(state, cfg);
    std::mt19937_64 rng(cfg.seed);

    torch::optim::Adam optimizer(model->trainable_parameters(), torch::optim::AdamOptions(cfg.lr_init));
    const bool write = !options.run_dir.empty();
    if (write) {
        fs::create_directories(options.run_dir);
        result.best_checkpoint = options.run_dir / "ckpt_best";
        result.last_checkpoint = options.run_dir / "ckpt_last";
    }
    auto emit = [&](const EpochRecord& r) {
        result.history.push_back(r);
        if (options.on_record) options.on_record(r);
    };
    auto snapshot_rng = [&] {
        std::ostringstream os;
        os << rng;
        state.rng_state = os.str();
    };
    auto consider_best = [&](double dice) {
        if (dice > state.best_test_dice) {
            state.best_test_dice = dice;
            snapshot_rng();
            if (write) save_checkpoint(result.best_checkpoint, model, state, options.labeling_hash);
        }
    };

    // Epoch 0: the initialization itself.
    {
        const auto tr = evaluate_source(model, train, cfg.epsilon_dice, options.binarize_threshold);
        emit({0, Split::Train, tr.mean_dice, tr.mean_loss, state.lr_current});
        if (test && test->size() > 0) {
            const auto te = evaluate_source(model, *test, cfg.epsilon_dice, options.binarize_threshold);
            emit({0, Split::Test, te.mean_dice, te.mean_loss, state.lr_current});
            consider_best(te.mean_dice);
        } else {
            consider_best(tr.mean_dice);
        }
    }

    std::vector<std::size_t> order(train.size());
    bool stop = false;
    for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
        state.epoch = epoch;
        state = lr_schedule_step(state, cfg);
        set_lr(optimizer, state.lr_current);
        model->train();
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0, dice_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<Sample> batch;
            for (std::size_t k = start; k < end; ++k) batch.push_back(train.get(order[k]));
            const torch::Tensor x = stack_frames(batch);
            const torch::Tensor gt = stack_gt(batch);

            const torch::Tensor probs = torch::sigmoid(model->forward(x)).select(1, 0);
            const torch::Tensor loss = dice_loss(probs, gt, cfg.epsilon_dice);
            const double loss_value = loss.item<double>();
            if (!std::isfinite(loss_value))
                throw DivergenceError("non-finite loss at step " + std::to_string(state.global_step) + " (epoch " +
                                      std::to_string(epoch + 1) + ")");
            optimizer.zero_grad();
            loss.backward();
            optimizer.step();
            ++state.global_step;
            result.step_losses.push_back(loss_value);

            const auto n = static_cast<double>(batch.size());
            loss_sum += loss_value * n;
            {
                torch::NoGradGuard no_grad;
                for (std::size_t b = 0; b < batch.size(); ++b)
                    dice_sum += hard_dice(probs[static_cast<int64_t>(b)].detach(), gt[static_cast<int64_t>(b)],
                                          options.binarize_threshold);
            }
            seen += batch.size();
            if (cfg.max_steps > 0 && state.global_step >= cfg.max_steps) {
                stop = true;
                break;
            }
        }
        const bool last = stop || epoch + 1 == cfg.epochs;
        emit({epoch + 1, Split::Train, dice_sum / seen, loss_sum / seen, state.lr_current});
        if (test && test->size() > 0) {
            if ((epoch + 1) % cfg.eval_every == 0 || last) {
                const auto te = evaluate_source(model, *test, cfg.epsilon_dice, options.binarize_threshold);
                emit({epoch + 1, Split::Test, te.mean_dice, te.mean_loss, state.lr_current});
                state.epoch = epoch + 1;
                consider_best(te.mean_dice);
            }
        } else {
            state.epoch = epoch + 1;
            consider_best(dice_sum / seen);
        }
    }
    state.epoch = result.history.empty() ? 0 : result.history.back().epoch;
    state = lr_schedule_step(state, cfg);
    snapshot_rng();
    model->eval();
    if (write) save_checkpoint(result.last_checkpoint, model, state, options.labeling_hash);
    return result;
}

TrainResult train_model(const DatasetManifest& manifest, FireSegNet& model, const TrainConfig& cfg,
                        const TrainOptions& options) {
    if (manifest.seq_len != model->config().decoder.seq_len)
        throw ConfigError("manifest seq_len " + std::to_string(manifest.seq_len) + " differs from model seq_len " +
                          std::to_string(model->config().decoder.seq_len));
    ManifestSource train(manifest.entries(Split::Train), cfg.cache_clips);
    ManifestSource test(manifest.entries(Split::Test), cfg.cache_clips);
    if (train.size() == 0) throw InputError("manifest has no training clips");
    return train_on_sources(model, train, &test, cfg, options);
}

void save_checkpoint(const fs::path& path, FireSegNet& model, const TrainState& state,
                     const std::string& labeling_hash) {
    json meta = {{"format", "smolder-checkpoint"},
                 {"version", kCheckpointVersion},
                 {"model", model_config_json(model->config())},
                 {"labeling_hash", labeling_hash},
                 {"state",
                  {{"epoch", state.epoch},
                   {"global_step", state.global_step},
                   {"best_test_dice", state.best_test_dice},
                   {"lr_current", state.lr_current},
                   {"rng_state", state.rng_state}}}};
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    torch::serialize::OutputArchive archive;
    archive.write(kMetaKey, c10::IValue(meta.dump()));
    model->save(archive);
    archive.save_to(path.string());
}

LoadedCheckpoint load_checkpoint(const fs::path& path, const ModelConfig* expected,
                                 const std::string& expected_labeling_hash) {
    if (!fs::exists(path)) throw LoadError("checkpoint not found: " + path.string());
    torch::serialize::InputArchive archive;
    json meta;
    try {
        archive.load_from(path.string());
        c10::IValue value;
        if (!archive.try_read(kMetaKey, value) || !value.isString())
            throw LoadError(path.string() + " is not a smolder checkpoint");
        meta = json::parse(value.toStringRef());
    } catch (const c10::Error& e) {
        throw LoadError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
    } catch (const json::exception& e) {
        throw LoadError("corrupt checkpoint metadata in " + path.string() + ": " + e.what());
    }
    if (meta.value("version", -1) != kCheckpointVersion)
        throw LoadError("checkpoint " + path.string() + " has version " + meta.value("version", json(-1)).dump() +
                        ", this build reads version " + std::to_string(kCheckpointVersion));

    LoadedCheckpoint out;
    try {
        out.config = model_config_from_json(meta.at("model"));
        out.labeling_hash = meta.at("labeling_hash").get<std::string>();
        const auto& s = meta.at("state");
        out.state.epoch = s.at("epoch").get<int>();
        out.state.global_step = s.at("global_step").get<std::int64_t>();
        out.state.best_test_dice = s.at("best_test_dice").get<double>();
        out.state.lr_current = s.at("lr_current").get<double>();
        out.state.rng_state = s.at("rng_state").get<std::string>();
    } catch (const json::exception& e) {
        throw LoadError("corrupt checkpoint metadata in " + path.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw LoadError("checkpoint " + path.string() + ": " + e.what());
    }
    if (expected && !same_architecture(out.config, *expected))
        throw LoadError("checkpoint " + path.string() + " does not match the requested model: " +
                        describe_mismatch(out.config, *expected));
    if (!expected_labeling_hash.empty() && expected_labeling_hash != out.labeling_hash)
        throw LoadError("checkpoint " + path.string() + " was trained with a different labeling configuration");

    // Weights come from the checkpoint, not from the pretrained file.
    ModelConfig build = out.config;
    build.backbone.pretrained = false;
    build.backbone.weights_path.clear();
    out.model = FireSegNet(build);
    try {
        out.model->load(archive);
    } catch (const c10::Error& e) {
        throw LoadError("cannot restore weights from " + path.string() + ": " + e.what_without_backtrace());
    }
    out.model->eval();
    return out;
}

}  // namespace smolder
