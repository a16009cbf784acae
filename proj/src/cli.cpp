#include "smolder/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <opencv2/core/version.hpp>

#include "CLI11.hpp"
#include "json.hpp"
#include "smolder/clip_dataset.hpp"
#include "smolder/config.hpp"
#include "smolder/errors.hpp"
#include "smolder/evaluation.hpp"
#include "smolder/hashing.hpp"
#include "smolder/image_io.hpp"
#include "smolder/inference.hpp"
#include "smolder/ir_labeling.hpp"
#include "smolder/training.hpp"

#ifndef SMOLDER_VERSION
#define SMOLDER_VERSION "0.0.0"
#endif

namespace smolder {
namespace {

using nlohmann::json;

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string run_id;
};

struct Input {
    std::string role;
    fs::path path;
};

std::string torch_version() {
    return std::to_string(TORCH_VERSION_MAJOR) + "." + std::to_string(TORCH_VERSION_MINOR) + "." +
           std::to_string(TORCH_VERSION_PATCH);
}

std::string frame_name(const std::string& stem, int index, const std::string& ext = ".png") {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_%05d", index);
    return stem + buf + ext;
}

// Content hash of a file, or of every regular file below a directory.
std::string hash_input(const fs::path& p) {
    if (fs::is_regular_file(p)) return sha256_file(p);
    if (!fs::is_directory(p)) throw InputError("input not found: " + p.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string listing;
    for (const auto& f : files) listing += f.lexically_relative(p).generic_string() + " " + sha256_file(f) + "\n";
    return sha256_hex(listing);
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

class Run {
public:
    Run(std::string command, RunConfig cfg, std::uint64_t seed)
        : command_(std::move(command)), cfg_(std::move(cfg)), seed_(seed) {
        hash_ = config_hash(cfg_);
        if (cfg_.run_id.empty()) cfg_.run_id = command_ + "-" + hash_.substr(0, 12);
        dir_ = runs_root(cfg_) / cfg_.run_id;
    }

    const RunConfig& config() const { return cfg_; }
    const fs::path& dir() const { return dir_; }

    void add_input(const std::string& role, const fs::path& path) { inputs_.push_back({role, path}); }

    // Writes config.json and the run manifest; called once inputs are known.
    void begin() {
        fs::create_directories(dir_);
        write_text(dir_ / "config.json", to_json(cfg_).dump(2) + "\n");
        json inputs = json::array();
        for (const auto& in : inputs_)
            inputs.push_back({{"role", in.role}, {"path", in.path.generic_string()}, {"sha256", hash_input(in.path)}});
        const json manifest = {{"command", command_},
                               {"run_id", cfg_.run_id},
                               {"config_sha256", hash_},
                               {"seed", seed_},
                               {"deterministic", cfg_.train.deterministic},
                               {"model",
                                {{"backbone", to_string(cfg_.model.backbone.family)},
                                 {"backbone_variant", backbone_variant(cfg_.model.backbone.family)},
                                 {"attention", to_string(cfg_.model.decoder.attention)}}},
                               {"versions",
                                {{"smolder", SMOLDER_VERSION}, {"torch", torch_version()}, {"opencv", CV_VERSION}}},
                               {"inputs", inputs}};
        write_text(dir_ / (command_ + "_manifest.json"), manifest.dump(2) + "\n");
    }

private:
    std::string command_;
    RunConfig cfg_;
    std::uint64_t seed_;
    std::string hash_;
    fs::path dir_;
    std::vector<Input> inputs_;
};

void add_common(CLI::App& app, CommonOptions& o) {
    app.add_option("--config", o.config_path, "JSON config file");
    app.add_option("--set", o.overrides, "Override a config value, section.key=value")->take_all();
    app.add_option("--run-id", o.run_id, "Run directory name under the runs root");
}

RunConfig resolve(const CommonOptions& o, std::vector<std::string> extra) {
    std::vector<std::string> overrides = o.overrides;
    overrides.insert(overrides.end(), extra.begin(), extra.end());
    if (!o.run_id.empty()) overrides.push_back("run_id=\"" + o.run_id + "\"");
    return parse_config(o.config_path, overrides);
}

void require_exists(const fs::path& p, const std::string& what) {
    if (p.empty() || !fs::exists(p)) throw InputError(what + " not found: '" + p.string() + "'");
}

// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& cfg, const fs::path& out_arg, std::ostream& out) {
    Run run("synth", cfg, cfg.synth.scene.seed);
    const fs::path dest = out_arg.empty() ? run.dir() / "synth" : out_arg;
    run.begin();
    for (int i = 0; i < cfg.synth.n_scenes; ++i) {
        const SynthSceneConfig sc = scene_variant(cfg.synth.scene, i);
        const SynthScene scene = generate_synthetic_scene(sc);
        char name[32];
        std::snprintf(name, sizeof name, "scene_%03d", i);
        const fs::path dir = dest / name;
        fs::create_directories(dir / "rgb");
        fs::create_directories(dir / "ir");
        for (std::size_t t = 0; t < scene.rgb.size(); ++t) {
            write_rgb(dir / "rgb" / frame_name("frame", static_cast<int>(t)), scene.rgb[t]);
            write_intensity(dir / "ir" / frame_name("frame", static_cast<int>(t)), scene.ir[t].pixels);
        }
        write_text(dir / "scene.json", json{{"origin_row", sc.origin_row},
                                            {"origin_col", sc.origin_col},
                                            {"hotspot_radius", sc.hotspot_radius},
                                            {"seed", sc.seed}}
                                               .dump(2) +
                                           "\n");
        out << "scene " << name << ": " << scene.rgb.size() << " frames, hotspot (" << sc.origin_row << ", "
            << sc.origin_col << ")\n";
    }
    out << "wrote " << cfg.synth.n_scenes << " scenes to " << dest.string() << "\n";
    return 0;
}

int cmd_label_ir(const RunConfig& cfg, const fs::path& input, const fs::path& out_arg, const std::string& clip_id,
                 std::ostream& out) {
    require_exists(input, "IR input");
    Run run("label-ir", cfg, 0);
    run.add_input("ir", input);
    const fs::path dest = out_arg.empty() ? run.dir() / "labels" : out_arg;
    run.begin();
    const auto frames = read_ir_frames(input);
    if (frames.empty()) throw InputError("no IR frames in " + input.string());
    std::vector<BinaryMask> masks;
    masks.reserve(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
        masks.push_back(label_ir_frame(IRFrame{frames[i], static_cast<int>(i)}, cfg.labeling));
        write_mask(dest / frame_name("mask", static_cast<int>(i)), masks.back());
    }
    const BinaryMask fused = majority_vote(masks, cfg.labeling.majority_tie);
    write_mask(dest / (clip_id + "_gt.png"), fused);
    out << "labeled " << masks.size() << " frames; fused mask has " << count_foreground(fused)
        << " foreground pixels in " << extract_blobs(fused).size() << " blob(s)\n";
    out << "wrote " << dest.string() << "\n";
    return 0;
}

struct SourcePair {
    std::string name;
    fs::path rgb;
    fs::path ir;
};

fs::path find_source(const fs::path& dir, const std::string& stem) {
    if (fs::is_directory(dir / stem)) return dir / stem;
    if (fs::is_directory(dir)) {
        for (const auto& e : fs::directory_iterator(dir))
            if (e.path().stem() == stem && is_video_file(e.path())) return e.path();
    }
    return {};
}

std::vector<SourcePair> discover_sources(const fs::path& root) {
    std::vector<SourcePair> out;
    auto try_dir = [&](const fs::path& d) {
        const fs::path rgb = find_source(d, "rgb"), ir = find_source(d, "ir");
        if (!rgb.empty() && !ir.empty()) out.push_back({d.filename().string(), rgb, ir});
        return !rgb.empty() && !ir.empty();
    };
    if (try_dir(root)) return out;
    std::vector<fs::path> subdirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) subdirs.push_back(e.path());
    std::sort(subdirs.begin(), subdirs.end());
    for (const auto& d : subdirs) try_dir(d);
    if (out.empty()) throw InputError("no rgb/ + ir/ source pairs found under " + root.string());
    return out;
}

int cmd_build_dataset(const RunConfig& cfg, const fs::path& input, const fs::path& out_arg, std::ostream& out,
                      std::ostream& err) {
    require_exists(input, "dataset input");
    Run run("build-dataset", cfg, cfg.dataset.seed);
    run.add_input("sources", input);
    const fs::path dest = out_arg.empty() ? run.dir() / "dataset" : out_arg;
    const auto sources = discover_sources(input);
    run.begin();

    std::vector<ManifestEntry> entries;
    for (const auto& src : sources) {
        const auto pairs = ingest_video(src.rgb, src.ir, IngestConfig{cfg.dataset.align});
        const ClipBuildResult built = build_clips(pairs, cfg.dataset.seq_len, cfg.labeling, src.name);
        for (const auto& w : built.warnings) err << "warning: " << w << "\n";
        for (const auto& clip : built.clips) {
            const fs::path clip_dir = dest / "clips" / clip.clip_id;
            fs::create_directories(clip_dir);
            ManifestEntry e;
            e.clip_id = clip.clip_id;
            e.gt_path = clip_dir / (clip.clip_id + "_gt.png");
            write_mask(e.gt_path, clip.gt_mask);
            for (std::size_t t = 0; t < clip.frames.size(); ++t) {
                e.frame_paths.push_back(clip_dir / frame_name("frame", clip.first_frame + static_cast<int>(t)));
                write_rgb(e.frame_paths.back(), clip.frames[t]);
            }
            entries.push_back(std::move(e));
        }
        out << src.name << ": " << pairs.size() << " frames -> " << built.clips.size() << " clips\n";
    }
    if (entries.empty()) throw InputError("no clips produced; sources are shorter than seq_len");
    const DatasetManifest manifest =
        split_dataset(std::move(entries), cfg.dataset.test_fraction, cfg.dataset.seed, cfg.dataset.seq_len);
    write_manifest(dest / "manifest.txt", manifest);
    out << "train " << manifest.count(Split::Train) << ", test " << manifest.count(Split::Test) << "\n";
    out << "wrote " << (dest / "manifest.txt").string() << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const fs::path& manifest_path, std::ostream& out) {
    require_exists(manifest_path, "manifest");
    Run run("train", cfg, cfg.train.seed);
    run.add_input("manifest", manifest_path);
    const DatasetManifest manifest = read_manifest(manifest_path);
    run.begin();

    seed_everything(cfg.train.seed, cfg.train.deterministic);
    FireSegNet model(cfg.model);
    std::ofstream metrics(run.dir() / "metrics.jsonl");
    if (!metrics) throw Error("cannot write metrics to " + run.dir().string());

    TrainOptions opts;
    opts.run_dir = run.dir();
    opts.labeling_hash = labeling_config_hash(cfg.labeling);
    opts.binarize_threshold = cfg.infer.binarize_threshold;
    opts.on_record = [&](const EpochRecord& r) {
        metrics << to_jsonl(r) << "\n";
        metrics.flush();
        out << "epoch " << r.epoch << " " << to_string(r.split) << " dice " << r.dice << " loss " << r.loss
            << " lr " << r.lr << "\n";
    };
    const TrainResult result = train_model(manifest, model, cfg.train, opts);
    out << "steps " << result.state.global_step << ", best dice " << result.state.best_test_dice << "\n";
    out << "wrote " << result.best_checkpoint.string() << " and " << result.last_checkpoint.string() << "\n";
    return 0;
}

LoadedCheckpoint load_for_inference(const fs::path& ckpt, const RunConfig& cfg, bool check_labeling) {
    require_exists(ckpt, "checkpoint");
    LoadedCheckpoint loaded =
        load_checkpoint(ckpt, nullptr, check_labeling ? labeling_config_hash(cfg.labeling) : std::string{});
    if (loaded.config.decoder.seq_len != cfg.infer.window)
        throw ConfigError("checkpoint expects windows of " + std::to_string(loaded.config.decoder.seq_len) +
                          " frames but infer.window is " + std::to_string(cfg.infer.window));
    return loaded;
}

int cmd_infer(const RunConfig& cfg, const fs::path& ckpt, const fs::path& input, const fs::path& gt_path,
              std::ostream& out) {
    require_exists(input, "video input");
    Run run("infer", cfg, cfg.train.seed);
    run.add_input("checkpoint", ckpt);
    run.add_input("video", input);
    if (!gt_path.empty()) {
        require_exists(gt_path, "ground-truth mask");
        run.add_input("gt", gt_path);
    }
    LoadedCheckpoint loaded = load_for_inference(ckpt, cfg, false);
    run.begin();

    std::vector<RgbFrame> frames = read_rgb_frames(input);
    for (auto& f : frames) f = align_rgb(f, cfg.dataset.align);
    std::optional<BinaryMask> gt;
    if (!gt_path.empty()) {
        gt = read_mask(gt_path);
        if (!frames.empty() && !gt->same_shape(frames.front()))
            throw ShapeError("ground-truth mask " + gt_path.string() + " does not match the aligned frame size");
    }
    const auto maps = sliding_window_infer(loaded.model, frames_to_tensor(frames), cfg.infer);
    const fs::path dest = run.dir() / "infer";
    fs::create_directories(dest);
    for (const auto& m : maps) {
        const BinaryMask mask = m.binarize(cfg.infer.binarize_threshold);
        write_probability(dest / frame_name("prob", m.frame_index), m.probability_grid());
        write_mask(dest / frame_name("mask", m.frame_index), mask);
        if (cfg.infer.overlay)
            write_overlay(dest / frame_name("overlay", m.frame_index), frames[static_cast<std::size_t>(m.frame_index)],
                          mask, gt ? &*gt : nullptr);
    }
    out << frames.size() << " frames -> " << maps.size() << " maps (first labels frame "
        << (maps.empty() ? -1 : maps.front().frame_index) << ")\n";
    out << "wrote " << dest.string() << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const fs::path& ckpt, const fs::path& manifest_path, std::ostream& out) {
    require_exists(ckpt, "checkpoint");
    require_exists(manifest_path, "manifest");
    Run run("eval", cfg, cfg.train.seed);
    run.add_input("checkpoint", ckpt);
    run.add_input("manifest", manifest_path);
    LoadedCheckpoint loaded = load_for_inference(ckpt, cfg, true);
    const DatasetManifest manifest = read_manifest(manifest_path);
    run.begin();

    const fs::path overlay_dir = run.dir() / "overlays";
    ClipPredictionHook hook;
    if (cfg.infer.overlay) {
        fs::create_directories(overlay_dir);
        hook = [&](const Clip& clip, const SegmentationMap& m) {
            write_overlay(overlay_dir / (clip.clip_id + ".png"), clip.frames.back(),
                          m.binarize(cfg.infer.binarize_threshold), &clip.gt_mask);
        };
    }
    const MetricsReport report =
        evaluate_dataset(manifest, cfg.eval.split, loaded.model, cfg.infer, cfg.eval.match, hook);
    const std::string table = format_report_table(report);
    write_text(run.dir() / "report.txt", table);
    std::ofstream jsonl(run.dir() / "report.jsonl");
    write_report_jsonl(report, jsonl);
    out << table;
    out << "wrote " << (run.dir() / "report.jsonl").string() << "\n";
    return 0;
}

int cmd_report(const RunConfig& cfg, const fs::path& input, std::ostream& out, std::ostream& err) {
    require_exists(input, "report");
    Run run("report", cfg, 0);
    run.add_input("report", input);
    run.begin();
    std::ifstream in(input);
    const MetricsReport stored = read_report_jsonl(in);
    const AggregateMetrics recomputed = aggregate_metrics(stored.clips);
    const std::string table = format_report_table(make_report(stored.clips));
    write_text(run.dir() / "report.txt", table);
    out << table;
    if (!(recomputed == stored.aggregate)) {
        err << "error: stored aggregate does not match the aggregate recomputed from " << stored.clips.size()
            << " clip records\n";
        return 1;
    }
    out << "aggregate recomputed from " << stored.clips.size() << " clip records: match\n";
    return 0;
}

}  // namespace

std::string usage_text() {
    return "usage: smolder <command> [options]\n"
           "\n"
           "commands:\n"
           "  synth          generate synthetic RGB/IR scenes        --out DIR [--seed N]\n"
           "  label-ir       label IR frames and fuse them           --input DIR|VIDEO [--out DIR]\n"
           "  build-dataset  cut sources into labeled clips + split  --input DIR [--out DIR] [--seed N]\n"
           "  train          train on a dataset manifest             --manifest FILE [--seed N]\n"
           "  infer          sliding-window inference on a video     --checkpoint FILE --input DIR|VIDEO\n"
           "  eval           score a checkpoint on a manifest split  --checkpoint FILE --manifest FILE\n"
           "  report         re-check and print a report.jsonl       --input FILE\n"
           "\n"
           "common options: --config FILE, --set section.key=value (repeatable), --run-id ID\n"
           "outputs go to <runs root>/<run id>/; SMOLDER_RUNS_DIR overrides the runs root\n";
}

int dispatch_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    if (args.empty() || args[0] == "-h" || args[0] == "--help") {
        (args.empty() ? err : out) << usage_text();
        return args.empty() ? 2 : 0;
    }
    const std::string command = args[0];
    if (std::find(std::begin(kCommands), std::end(kCommands), command) == std::end(kCommands)) {
        err << "unknown command '" << command << "'\n\n" << usage_text();
        return 2;
    }

    CLI::App app("smolder " + command, "smolder " + command);
    CommonOptions common;
    add_common(app, common);
    std::string input, out_dir, manifest, checkpoint, gt, split, clip_id = "fused";
    std::optional<std::int64_t> seed;
    bool overlay = false;

    if (command == "synth") {
        app.add_option("--out", out_dir, "Output directory");
        app.add_option("--seed", seed, "Scene seed");
    } else if (command == "label-ir") {
        app.add_option("--input", input, "IR frame directory or video")->required();
        app.add_option("--out", out_dir, "Output directory");
        app.add_option("--clip-id", clip_id, "Name of the fused mask, <clip-id>_gt.png");
    } else if (command == "build-dataset") {
        app.add_option("--input", input, "Source root with rgb/ and ir/ pairs")->required();
        app.add_option("--out", out_dir, "Output directory");
        app.add_option("--seed", seed, "Split seed");
    } else if (command == "train") {
        app.add_option("--manifest", manifest, "Dataset manifest")->required();
        app.add_option("--seed", seed, "Training seed");
    } else if (command == "infer") {
        app.add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
        app.add_option("--input", input, "RGB frame directory or video")->required();
        app.add_option("--gt", gt, "Ground-truth mask drawn on overlays");
        app.add_flag("--overlay", overlay, "Write overlay images");
    } else if (command == "eval") {
        app.add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
        app.add_option("--manifest", manifest, "Dataset manifest")->required();
        app.add_option("--split", split, "train or test");
        app.add_flag("--overlay", overlay, "Write overlay images");
    } else if (command == "report") {
        app.add_option("--input", input, "report.jsonl to check")->required();
    }

    std::vector<std::string> rest(args.rbegin(), args.rend() - 1);
    try {
        app.parse(rest);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        std::vector<std::string> extra;
        const std::string section = command == "synth" ? "synth" : command == "build-dataset" ? "dataset" : "train";
        if (seed) extra.push_back(section + ".seed=" + std::to_string(*seed));
        if (overlay) extra.push_back("infer.overlay=true");
        if (!split.empty()) extra.push_back("eval.split=\"" + split + "\"");
        const RunConfig cfg = resolve(common, extra);

        if (command == "synth") return cmd_synth(cfg, out_dir, out);
        if (command == "label-ir") return cmd_label_ir(cfg, input, out_dir, clip_id, out);
        if (command == "build-dataset") return cmd_build_dataset(cfg, input, out_dir, out, err);
        if (command == "train") return cmd_train(cfg, manifest, out);
        if (command == "infer") return cmd_infer(cfg, checkpoint, input, gt, out);
        if (command == "eval") return cmd_eval(cfg, checkpoint, manifest, out);
        return cmd_report(cfg, input, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const c10::Error& e) {
        err << "error: " << e.what_without_backtrace() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace smolder
