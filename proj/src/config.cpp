#include "smolder/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "smolder/errors.hpp"
#include "smolder/hashing.hpp"

namespace smolder {
namespace {

using nlohmann::json;

std::string join_key(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

std::string expected_kind(const json& ref) {
    switch (ref.type()) {
        case json::value_t::boolean: return "boolean";
        case json::value_t::number_integer:
        case json::value_t::number_unsigned: return "integer";
        case json::value_t::number_float: return "number";
        case json::value_t::string: return "string";
        case json::value_t::array: return "list of integers";
        case json::value_t::object: return "section";
        default: return "value";
    }
}

bool compatible(const json& ref, const json& value) {
    switch (ref.type()) {
        case json::value_t::boolean: return value.is_boolean();
        case json::value_t::number_integer:
        case json::value_t::number_unsigned: return value.is_number_integer();
        case json::value_t::number_float: return value.is_number();
        case json::value_t::string: return value.is_string();
        case json::value_t::array:
            if (!value.is_array()) return false;
            for (const auto& v : value)
                if (!v.is_number_integer()) return false;
            return true;
        case json::value_t::object: return value.is_object();
        default: return false;
    }
}

// Copies `patch` onto `base`, rejecting keys and types that base does not have.
void merge_checked(json& base, const json& patch, const std::string& prefix) {
    if (!patch.is_object())
        throw ConfigError((prefix.empty() ? std::string("config") : "key '" + prefix + "'") +
                          " expects a section (JSON object)");
    for (const auto& [key, value] : patch.items()) {
        const std::string full = join_key(prefix, key);
        if (!base.contains(key)) throw ConfigError("unknown key '" + full + "'");
        json& slot = base[key];
        if (!compatible(slot, value))
            throw ConfigError("key '" + full + "' expects " + expected_kind(slot) + ", got " + value.dump());
        if (slot.is_object())
            merge_checked(slot, value, full);
        else
            slot = value;
    }
}

template <typename T>
T get_key(const json& j, const std::string& section, const std::string& key) {
    return j.at(section).at(key).get<T>();
}

std::uint64_t get_seed(const json& j, const std::string& section) {
    const auto v = j.at(section).at("seed").get<std::int64_t>();
    if (v < 0) throw ConfigError("key '" + section + ".seed' expects a non-negative integer");
    return static_cast<std::uint64_t>(v);
}

template <typename Fn>
auto parse_enum(const std::string& key, Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        throw ConfigError("key '" + key + "': " + e.what());
    }
}

std::string tie_name(TiePolicy t) { return t == TiePolicy::Fire ? "fire" : "background"; }
TiePolicy parse_tie(const std::string& s) {
    if (s == "fire") return TiePolicy::Fire;
    if (s == "background") return TiePolicy::Background;
    throw ConfigError("expected 'fire' or 'background', got '" + s + "'");
}

std::string align_name(AlignPolicy p) { return p == AlignPolicy::Crop ? "crop" : "resize"; }
AlignPolicy parse_align(const std::string& s) {
    if (s == "crop") return AlignPolicy::Crop;
    if (s == "resize") return AlignPolicy::Resize;
    throw ConfigError("expected 'crop' or 'resize', got '" + s + "'");
}

std::string rule_name(OverlapRule r) { return r == OverlapRule::GtFraction ? "gt_fraction" : "iou"; }
OverlapRule parse_rule(const std::string& s) {
    if (s == "gt_fraction") return OverlapRule::GtFraction;
    if (s == "iou") return OverlapRule::IoU;
    throw ConfigError("expected 'gt_fraction' or 'iou', got '" + s + "'");
}

json parse_override(const std::string& item) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override '" + item + "' expects the form section.key=value");
    const std::string path = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;
    }
    json patch = value;
    std::vector<std::string> parts;
    std::stringstream ss(path);
    for (std::string p; std::getline(ss, p, '.');) {
        if (p.empty()) throw ConfigError("override '" + item + "' has an empty key segment");
        parts.push_back(p);
    }
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
    return patch;
}

bool safe_run_id(const std::string& id) {
    if (id == "." || id == "..") return false;
    for (char c : id)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) return false;
    return true;
}

}  // namespace

json to_json(const RunConfig& cfg) {
    const auto& l = cfg.labeling;
    const auto& m = cfg.model;
    const auto& t = cfg.train;
    const auto& s = cfg.synth.scene;
    return {
        {"labeling",
         {{"smooth_kernel", l.smooth_kernel},
          {"threshold_fraction", l.threshold_fraction},
          {"dilate_kernel", l.dilate_kernel},
          {"dilate_iters", l.dilate_iters},
          {"erode_kernel", l.erode_kernel},
          {"erode_iters", l.erode_iters},
          {"min_blob_area", l.min_blob_area},
          {"majority_tie", tie_name(l.majority_tie)}}},
        {"dataset",
         {{"seq_len", cfg.dataset.seq_len},
          {"test_fraction", cfg.dataset.test_fraction},
          {"seed", static_cast<std::int64_t>(cfg.dataset.seed)},
          {"align", align_name(cfg.dataset.align)}}},
        {"model",
         {{"backbone", to_string(m.backbone.family)},
          {"pretrained", m.backbone.pretrained},
          {"weights", m.backbone.weights_path},
          {"attention", to_string(m.decoder.attention)},
          {"attention_reduction", m.decoder.attention_reduction},
          {"n_classes", m.decoder.n_classes},
          {"seq_len", m.decoder.seq_len},
          {"part1_channels", m.decoder.part1_channels},
          {"time_kernel", m.decoder.time_kernel},
          {"n_time_blocks", m.decoder.n_time_blocks}}},
        {"encoder", {{"freeze", m.freeze_encoder}}},
        {"train",
         {{"lr_init", t.lr_init},
          {"optimizer", t.optimizer},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"lr_step_size", t.lr_step_size},
          {"lr_gamma", t.lr_gamma},
          {"epsilon_dice", t.epsilon_dice},
          {"seed", static_cast<std::int64_t>(t.seed)},
          {"deterministic", t.deterministic},
          {"eval_every", t.eval_every},
          {"cache_clips", t.cache_clips},
          {"max_steps", t.max_steps}}},
        {"infer",
         {{"window", cfg.infer.window},
          {"stride", cfg.infer.stride},
          {"binarize_threshold", cfg.infer.binarize_threshold},
          {"device", cfg.infer.device},
          {"overlay", cfg.infer.overlay}}},
        {"eval",
         {{"overlap_rule", rule_name(cfg.eval.match.rule)},
          {"overlap_threshold", cfg.eval.match.overlap_threshold},
          {"spot_fraction", cfg.eval.match.spot_fraction},
          {"split", to_string(cfg.eval.split)}}},
        {"synth",
         {{"n_scenes", cfg.synth.n_scenes},
          {"height", s.height},
          {"width", s.width},
          {"n_frames", s.n_frames},
          {"origin_row", s.origin_row},
          {"origin_col", s.origin_col},
          {"drift_row", s.drift_row},
          {"drift_col", s.drift_col},
          {"plume_growth", s.plume_growth},
          {"plume_radius", s.plume_radius},
          {"plume_opacity", s.plume_opacity},
          {"plume_period", s.plume_period},
          {"hotspot_radius", s.hotspot_radius},
          {"noise_std", s.noise_std},
          {"seed", static_cast<std::int64_t>(s.seed)}}},
        {"run_id", cfg.run_id},
        {"paths", {{"runs_root", cfg.paths.runs_root}}},
    };
}

RunConfig run_config_from_json(const json& patch) {
    json j = to_json(RunConfig{});
    merge_checked(j, patch, "");

    RunConfig cfg;
    auto& l = cfg.labeling;
    l.smooth_kernel = get_key<int>(j, "labeling", "smooth_kernel");
    l.threshold_fraction = get_key<double>(j, "labeling", "threshold_fraction");
    l.dilate_kernel = get_key<int>(j, "labeling", "dilate_kernel");
    l.dilate_iters = get_key<int>(j, "labeling", "dilate_iters");
    l.erode_kernel = get_key<int>(j, "labeling", "erode_kernel");
    l.erode_iters = get_key<int>(j, "labeling", "erode_iters");
    l.min_blob_area = get_key<int>(j, "labeling", "min_blob_area");
    l.majority_tie = parse_enum("labeling.majority_tie",
                                [&] { return parse_tie(get_key<std::string>(j, "labeling", "majority_tie")); });

    cfg.dataset.seq_len = get_key<int>(j, "dataset", "seq_len");
    cfg.dataset.test_fraction = get_key<double>(j, "dataset", "test_fraction");
    cfg.dataset.seed = get_seed(j, "dataset");
    cfg.dataset.align =
        parse_enum("dataset.align", [&] { return parse_align(get_key<std::string>(j, "dataset", "align")); });

    const auto family =
        parse_enum("model.backbone", [&] { return parse_backbone(get_key<std::string>(j, "model", "backbone")); });
    cfg.model.backbone = make_backbone_spec(family, get_key<bool>(j, "model", "pretrained"),
                                            get_key<std::string>(j, "model", "weights"));
    cfg.model.freeze_encoder = get_key<bool>(j, "encoder", "freeze");
    auto& d = cfg.model.decoder;
    d.attention = parse_enum("model.attention",
                             [&] { return parse_attention(get_key<std::string>(j, "model", "attention")); });
    d.attention_reduction = get_key<int64_t>(j, "model", "attention_reduction");
    d.n_classes = get_key<int64_t>(j, "model", "n_classes");
    d.seq_len = get_key<int64_t>(j, "model", "seq_len");
    d.part1_channels = get_key<std::vector<int64_t>>(j, "model", "part1_channels");
    d.time_kernel = get_key<int64_t>(j, "model", "time_kernel");
    d.n_time_blocks = get_key<int64_t>(j, "model", "n_time_blocks");

    auto& t = cfg.train;
    t.lr_init = get_key<double>(j, "train", "lr_init");
    t.optimizer = get_key<std::string>(j, "train", "optimizer");
    t.epochs = get_key<int>(j, "train", "epochs");
    t.batch_size = get_key<int>(j, "train", "batch_size");
    t.lr_step_size = get_key<int>(j, "train", "lr_step_size");
    t.lr_gamma = get_key<double>(j, "train", "lr_gamma");
    t.epsilon_dice = get_key<double>(j, "train", "epsilon_dice");
    t.seed = get_seed(j, "train");
    t.deterministic = get_key<bool>(j, "train", "deterministic");
    t.eval_every = get_key<int>(j, "train", "eval_every");
    t.cache_clips = get_key<bool>(j, "train", "cache_clips");
    t.max_steps = get_key<std::int64_t>(j, "train", "max_steps");

    cfg.infer.window = get_key<int>(j, "infer", "window");
    cfg.infer.stride = get_key<int>(j, "infer", "stride");
    cfg.infer.binarize_threshold = get_key<double>(j, "infer", "binarize_threshold");
    cfg.infer.device = get_key<std::string>(j, "infer", "device");
    cfg.infer.overlay = get_key<bool>(j, "infer", "overlay");

    cfg.eval.match.rule =
        parse_enum("eval.overlap_rule", [&] { return parse_rule(get_key<std::string>(j, "eval", "overlap_rule")); });
    cfg.eval.match.overlap_threshold = get_key<double>(j, "eval", "overlap_threshold");
    cfg.eval.match.spot_fraction = get_key<double>(j, "eval", "spot_fraction");
    cfg.eval.split = parse_enum("eval.split", [&] { return parse_split(get_key<std::string>(j, "eval", "split")); });

    auto& s = cfg.synth.scene;
    cfg.synth.n_scenes = get_key<int>(j, "synth", "n_scenes");
    s.height = get_key<int>(j, "synth", "height");
    s.width = get_key<int>(j, "synth", "width");
    s.n_frames = get_key<int>(j, "synth", "n_frames");
    s.origin_row = get_key<double>(j, "synth", "origin_row");
    s.origin_col = get_key<double>(j, "synth", "origin_col");
    s.drift_row = get_key<double>(j, "synth", "drift_row");
    s.drift_col = get_key<double>(j, "synth", "drift_col");
    s.plume_growth = get_key<double>(j, "synth", "plume_growth");
    s.plume_radius = get_key<double>(j, "synth", "plume_radius");
    s.plume_opacity = get_key<double>(j, "synth", "plume_opacity");
    s.plume_period = get_key<int>(j, "synth", "plume_period");
    s.hotspot_radius = get_key<double>(j, "synth", "hotspot_radius");
    s.noise_std = get_key<double>(j, "synth", "noise_std");
    s.seed = get_seed(j, "synth");

    cfg.run_id = j.at("run_id").get<std::string>();
    cfg.paths.runs_root = j.at("paths").at("runs_root").get<std::string>();
    cfg.validate();
    return cfg;
}

void RunConfig::validate() const {
    labeling.validate();
    if (dataset.seq_len < 1) throw ConfigError("key 'dataset.seq_len' expects an integer >= 1");
    if (!(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0))
        throw ConfigError("key 'dataset.test_fraction' expects a number in (0, 1)");
    model.validate();
    train.validate();
    infer.validate();
    eval.match.validate();
    synth.scene.validate();
    if (synth.n_scenes < 1) throw ConfigError("key 'synth.n_scenes' expects an integer >= 1");
    if (model.decoder.seq_len != dataset.seq_len || infer.window != dataset.seq_len)
        throw ConfigError("keys 'dataset.seq_len' (" + std::to_string(dataset.seq_len) + "), 'model.seq_len' (" +
                          std::to_string(model.decoder.seq_len) + ") and 'infer.window' (" +
                          std::to_string(infer.window) + ") must be equal");
    if (!safe_run_id(run_id))
        throw ConfigError("key 'run_id' expects letters, digits, '-', '_' or '.', got '" + run_id + "'");
    if (paths.runs_root.empty()) throw ConfigError("key 'paths.runs_root' expects a non-empty path");
}

RunConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides) {
    json patch = json::object();
    if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
        try {
            patch = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
    }
    // Overrides are merged onto the file before conversion so both pass the same checks.
    json base = to_json(RunConfig{});
    merge_checked(base, patch, "");
    for (const auto& item : overrides) merge_checked(base, parse_override(item), "");
    return run_config_from_json(base);
}

RunConfig parse_config(const fs::path& path, const std::vector<std::string>& overrides) {
    std::string text;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read config file " + path.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }
    return parse_config_text(text, overrides);
}

std::string config_hash(const RunConfig& cfg) {
    json j = to_json(cfg);
    j.erase("run_id");
    j.erase("paths");
    return sha256_hex(j.dump());
}

fs::path runs_root(const RunConfig& cfg) {
    if (const char* env = std::getenv("SMOLDER_RUNS_DIR"); env && *env) return fs::path(env);
    return fs::path(cfg.paths.runs_root);
}

}  // namespace smolder
