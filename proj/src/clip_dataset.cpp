#include "smolder/clip_dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include "smolder/image_io.hpp"

namespace smolder {
namespace {

cv::Mat rgb_to_mat(const RgbFrame& f) {
    cv::Mat m(f.rows(), f.cols(), CV_32FC3);
    for (int r = 0; r < f.rows(); ++r)
        for (int c = 0; c < f.cols(); ++c) m.at<cv::Vec3f>(r, c) = {f(r, c).r, f(r, c).g, f(r, c).b};
    return m;
}

RgbFrame mat_to_rgb(const cv::Mat& m) {
    RgbFrame f(m.rows, m.cols);
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) {
            const auto& v = m.at<cv::Vec3f>(r, c);
            f(r, c) = {std::clamp(v[0], 0.0f, 1.0f), std::clamp(v[1], 0.0f, 1.0f), std::clamp(v[2], 0.0f, 1.0f)};
        }
    return f;
}

cv::Mat grid_to_mat(const Grid<float>& g) {
    cv::Mat m(g.rows(), g.cols(), CV_32FC1);
    for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < g.cols(); ++c) m.at<float>(r, c) = g(r, c);
    return m;
}

Grid<float> mat_to_grid(const cv::Mat& m) {
    Grid<float> g(m.rows, m.cols);
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) g(r, c) = std::clamp(m.at<float>(r, c), 0.0f, 1.0f);
    return g;
}

template <typename T>
Grid<T> crop_top_left(const Grid<T>& g, int rows, int cols) {
    Grid<T> out(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out(r, c) = g(r, c);
    return out;
}

}  // namespace

std::vector<RgbFrame> read_rgb_frames(const fs::path& source) {
    std::vector<RgbFrame> frames;
    if (is_video_file(source)) {
        cv::VideoCapture cap(source.string());
        if (!cap.isOpened()) throw IngestionError("cannot open RGB video " + source.string());
        cv::Mat bgr, f;
        while (cap.read(bgr)) {
            bgr.convertTo(f, CV_32FC3, 1.0 / 255.0);
            cv::cvtColor(f, f, cv::COLOR_BGR2RGB);
            frames.push_back(mat_to_rgb(f));
        }
        return frames;
    }
    const auto files = list_frame_files(source);
    for (std::size_t i = 0; i < files.size(); ++i) {
        try {
            frames.push_back(read_rgb(files[i]));
        } catch (const Error& e) {
            throw IngestionError("unreadable RGB frame at index " + std::to_string(i) + ": " + e.what());
        }
    }
    return frames;
}

std::vector<Grid<float>> read_ir_frames(const fs::path& source) {
    std::vector<Grid<float>> frames;
    if (is_video_file(source)) {
        cv::VideoCapture cap(source.string());
        if (!cap.isOpened()) throw IngestionError("cannot open IR video " + source.string());
        cv::Mat bgr, gray, f;
        while (cap.read(bgr)) {
            cv::cvtColor(bgr, gray, cv::COLOR_BGR2GRAY);
            gray.convertTo(f, CV_32F, 1.0 / 255.0);
            frames.push_back(mat_to_grid(f));
        }
        return frames;
    }
    const auto files = list_frame_files(source);
    for (std::size_t i = 0; i < files.size(); ++i) {
        try {
            frames.push_back(read_intensity(files[i]));
        } catch (const Error& e) {
            throw IngestionError("unreadable IR frame at index " + std::to_string(i) + ": " + e.what());
        }
    }
    return frames;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::pair<int, int> aligned_size(int rows, int cols) {
    const int r = rows - rows % kSpatialMultiple;
    const int c = cols - cols % kSpatialMultiple;
    if (r < kSpatialMultiple || c < kSpatialMultiple)
        throw ShapeError("frame " + std::to_string(rows) + "x" + std::to_string(cols) + " is smaller than " +
                         std::to_string(kSpatialMultiple) + "x" + std::to_string(kSpatialMultiple));
    return {r, c};
}

RgbFrame align_rgb(const RgbFrame& frame, AlignPolicy policy) {
    const auto [rows, cols] = aligned_size(frame.rows(), frame.cols());
    if (rows == frame.rows() && cols == frame.cols()) return frame;
    if (policy == AlignPolicy::Crop) return crop_top_left(frame, rows, cols);
    cv::Mat out;
    cv::resize(rgb_to_mat(frame), out, cv::Size(cols, rows), 0, 0, cv::INTER_AREA);
    return mat_to_rgb(out);
}

Grid<float> align_ir(const Grid<float>& ir, int rgb_rows, int rgb_cols, AlignPolicy policy) {
    Grid<float> native = ir;
    if (ir.rows() != rgb_rows || ir.cols() != rgb_cols) {
        cv::Mat out;
        cv::resize(grid_to_mat(ir), out, cv::Size(rgb_cols, rgb_rows), 0, 0, cv::INTER_LINEAR);
        native = mat_to_grid(out);
    }
    const auto [rows, cols] = aligned_size(rgb_rows, rgb_cols);
    if (rows == rgb_rows && cols == rgb_cols) return native;
    if (policy == AlignPolicy::Crop) return crop_top_left(native, rows, cols);
    cv::Mat out;
    cv::resize(grid_to_mat(native), out, cv::Size(cols, rows), 0, 0, cv::INTER_LINEAR);
    return mat_to_grid(out);
}

std::vector<FramePair> ingest_frames(std::span<const RgbFrame> rgb, std::span<const Grid<float>> ir,
                                     const IngestConfig& cfg) {
    if (rgb.size() != ir.size())
        throw IngestionError("frame count mismatch: " + std::to_string(rgb.size()) + " RGB vs " +
                             std::to_string(ir.size()) + " IR frames");
    std::vector<FramePair> pairs;
    pairs.reserve(rgb.size());
    for (std::size_t i = 0; i < rgb.size(); ++i) {
        if (i > 0 && !rgb[i].same_shape(rgb[0]))
            throw IngestionError("RGB frame " + std::to_string(i) + " changes resolution");
        if (i > 0 && !ir[i].same_shape(ir[0]))
            throw IngestionError("IR frame " + std::to_string(i) + " changes resolution");
        for (float v : ir[i].pixels())
            if (!(v >= 0.0f && v <= 1.0f))
                throw IngestionError("IR frame " + std::to_string(i) + " has intensities outside [0, 1]");
        FramePair p;
        p.rgb = align_rgb(rgb[i], cfg.policy);
        p.ir.pixels = align_ir(ir[i], rgb[i].rows(), rgb[i].cols(), cfg.policy);
        p.ir.frame_index = static_cast<int>(i);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

std::vector<FramePair> ingest_video(const fs::path& rgb_source, const fs::path& ir_source, const IngestConfig& cfg) {
    const auto rgb = read_rgb_frames(rgb_source);
    const auto ir = read_ir_frames(ir_source);
    return ingest_frames(rgb, ir, cfg);
}

std::string clip_id_for(const std::string& prefix, int clip_index) {
    std::ostringstream os;
    os << prefix << "_c" << std::setw(4) << std::setfill('0') << clip_index;
    return os.str();
}

ClipBuildResult build_clips(std::span<const FramePair> pairs, int seq_len, const LabelingConfig& labeling,
                            const std::string& clip_prefix, ClipSource source) {
    if (seq_len < 1) throw ConfigError("dataset.seq_len must be >= 1");
    labeling.validate();
    ClipBuildResult result;
    const int n = static_cast<int>(pairs.size());
    if (n < seq_len) {
        result.warnings.push_back(clip_prefix + ": " + std::to_string(n) + " frames is shorter than seq_len " +
                                  std::to_string(seq_len) + "; no clips produced");
        result.dropped_frames = n;
        return result;
    }
    const int n_clips = n / seq_len;
    result.dropped_frames = n - n_clips * seq_len;
    for (int k = 0; k < n_clips; ++k) {
        Clip clip;
        clip.clip_id = clip_id_for(clip_prefix, k);
        clip.source = source;
        clip.first_frame = k * seq_len;
        std::vector<BinaryMask> labels;
        labels.reserve(seq_len);
        for (int t = 0; t < seq_len; ++t) {
            const FramePair& p = pairs[k * seq_len + t];
            clip.frames.push_back(p.rgb);
            labels.push_back(label_ir_frame(p.ir, labeling));
        }
        clip.gt_mask = majority_vote(labels, labeling.majority_tie);
        result.clips.push_back(std::move(clip));
    }
    if (result.dropped_frames > 0)
        result.warnings.push_back(clip_prefix + ": dropped " + std::to_string(result.dropped_frames) +
                                  " trailing frames");
    return result;
}

std::string to_string(Split split) { return split == Split::Train ? "train" : "test"; }

Split parse_split(const std::string& text) {
    if (text == "train") return Split::Train;
    if (text == "test") return Split::Test;
    throw InputError("unknown split '" + text + "' (expected train or test)");
}

int DatasetManifest::count(Split split) const {
    return static_cast<int>(std::count_if(clips.begin(), clips.end(), [split](const auto& e) { return e.split == split; }));
}

std::vector<ManifestEntry> DatasetManifest::entries(Split split) const {
    std::vector<ManifestEntry> out;
    std::copy_if(clips.begin(), clips.end(), std::back_inserter(out), [split](const auto& e) { return e.split == split; });
    return out;
}

void DatasetManifest::validate() const {
    std::set<std::string> ids;
    std::unordered_map<std::string, Split> frame_owner;
    for (const auto& e : clips) {
        if (!ids.insert(e.clip_id).second) throw InputError("duplicate clip id " + e.clip_id);
        if (static_cast<int>(e.frame_paths.size()) != seq_len)
            throw InputError("clip " + e.clip_id + " has " + std::to_string(e.frame_paths.size()) +
                             " frames, manifest seq_len is " + std::to_string(seq_len));
        for (const auto& f : e.frame_paths) {
            const auto key = f.lexically_normal().string();
            auto [it, inserted] = frame_owner.emplace(key, e.split);
            if (!inserted && it->second != e.split)
                throw InputError("frame " + key + " appears in both train and test splits");
        }
    }
}

DatasetManifest split_dataset(std::vector<ManifestEntry> clips, double test_fraction, std::uint64_t seed, int seq_len) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("dataset.test_fraction must lie in (0, 1)");
    if (clips.empty()) throw InputError("split_dataset: no clips to split");
    std::vector<std::size_t> order(clips.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(clips.size())));
    DatasetManifest m;
    m.seq_len = seq_len;
    for (std::size_t k = 0; k < order.size(); ++k) {
        ManifestEntry e = std::move(clips[order[k]]);
        e.split = k < n_test ? Split::Test : Split::Train;
        m.clips.push_back(std::move(e));
    }
    // Keep manifest order stable and readable: sort by clip id.
    std::sort(m.clips.begin(), m.clips.end(), [](const auto& a, const auto& b) { return a.clip_id < b.clip_id; });
    m.validate();
    return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
    manifest.validate();
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    auto rel = [&](const fs::path& p) {
        const std::string s = fs::absolute(p).lexically_normal().lexically_relative(fs::absolute(base).lexically_normal()).generic_string();
        if (s.find(',') != std::string::npos) throw InputError("manifest paths may not contain commas: " + s);
        return s;
    };
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write manifest " + path.string());
    out << "# smolder-manifest v1\n# seq_len " << manifest.seq_len << "\n";
    for (const auto& e : manifest.clips) {
        out << e.clip_id << ',' << to_string(e.split) << ',' << rel(e.gt_path);
        for (const auto& f : e.frame_paths) out << ',' << rel(f);
        out << '\n';
    }
}

DatasetManifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open manifest " + path.string());
    const fs::path base = fs::absolute(path).parent_path();
    auto resolve = [&](const std::string& s) {
        fs::path p(s);
        return p.is_absolute() ? p : (base / p).lexically_normal();
    };
    DatasetManifest m;
    bool have_seq_len = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream hs(line.substr(1));
            std::string key;
            hs >> key;
            if (key == "seq_len") {
                if (!(hs >> m.seq_len)) throw InputError("manifest line " + std::to_string(lineno) + ": bad seq_len");
                have_seq_len = true;
            }
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(trim(field));
        if (fields.size() < 4)
            throw InputError("manifest line " + std::to_string(lineno) + ": expected clip_id,split,gt,frames...");
        ManifestEntry e;
        e.clip_id = fields[0];
        e.split = parse_split(fields[1]);
        e.gt_path = resolve(fields[2]);
        for (std::size_t k = 3; k < fields.size(); ++k) e.frame_paths.push_back(resolve(fields[k]));
        m.clips.push_back(std::move(e));
    }
    if (!have_seq_len) throw InputError("manifest " + path.string() + " lacks a '# seq_len' header");
    m.validate();
    return m;
}

Clip load_clip(const ManifestEntry& entry) {
    Clip clip;
    clip.clip_id = entry.clip_id;
    if (!fs::exists(entry.gt_path)) throw InputError("clip " + entry.clip_id + ": missing ground truth " + entry.gt_path.string());
    clip.gt_mask = read_mask(entry.gt_path);
    for (const auto& f : entry.frame_paths) {
        if (!fs::exists(f)) throw InputError("clip " + entry.clip_id + ": missing frame " + f.string());
        clip.frames.push_back(read_rgb(f));
        if (!clip.frames.back().same_shape(clip.gt_mask))
            throw ShapeError("clip " + entry.clip_id + ": frame " + f.string() + " does not match ground truth shape");
    }
    return clip;
}

void SynthSceneConfig::validate() const {
    if (height < kSpatialMultiple || width < kSpatialMultiple || height % kSpatialMultiple || width % kSpatialMultiple)
        throw ConfigError("synth canvas must be a positive multiple of 32 in both dimensions");
    if (n_frames < 1) throw ConfigError("synth.n_frames must be >= 1");
    if (hotspot_radius <= 0.0) throw ConfigError("synth.hotspot_radius must be > 0");
    if (origin_row - hotspot_radius < 0.0 || origin_row + hotspot_radius > height - 1 ||
        origin_col - hotspot_radius < 0.0 || origin_col + hotspot_radius > width - 1)
        throw ConfigError("synth hotspot of radius " + std::to_string(hotspot_radius) + " at (" +
                          std::to_string(origin_row) + ", " + std::to_string(origin_col) + ") leaves the canvas");
    if (plume_radius <= 0.0 || plume_growth < 0.0) throw ConfigError("synth plume radius must be > 0 and growth >= 0");
    if (plume_opacity < 0.0 || plume_opacity > 1.0) throw ConfigError("synth.plume_opacity must lie in [0, 1]");
    if (plume_period < 0) throw ConfigError("synth.plume_period must be >= 0");
    if (noise_std < 0.0) throw ConfigError("synth.noise_std must be >= 0");
}

SynthScene generate_synthetic_scene(const SynthSceneConfig& cfg) {
    cfg.validate();
    const int rows = cfg.height, cols = cfg.width;
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // Static background: coarse value noise blended between green and brown,
    // plus fine per-pixel texture.
    constexpr int kCell = 16;
    const int grid_r = rows / kCell + 2, grid_c = cols / kCell + 2;
    std::vector<double> coarse(static_cast<std::size_t>(grid_r * grid_c));
    for (auto& v : coarse) v = unit(rng);
    const Rgb green{0.20f, 0.42f, 0.16f};
    const Rgb brown{0.45f, 0.33f, 0.20f};
    RgbFrame background(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const double fr = static_cast<double>(r) / kCell, fc = static_cast<double>(c) / kCell;
            const int r0 = static_cast<int>(fr), c0 = static_cast<int>(fc);
            const double ar = fr - r0, ac = fc - c0;
            auto at = [&](int i, int j) { return coarse[static_cast<std::size_t>(i * grid_c + j)]; };
            const double v = (1 - ar) * ((1 - ac) * at(r0, c0) + ac * at(r0, c0 + 1)) +
                             ar * ((1 - ac) * at(r0 + 1, c0) + ac * at(r0 + 1, c0 + 1));
            const double texture = 0.06 * (unit(rng) - 0.5);
            auto mix = [&](float a, float b) {
                return static_cast<float>(std::clamp((1 - v) * a + v * b + texture, 0.0, 1.0));
            };
            background(r, c) = {mix(green.r, brown.r), mix(green.g, brown.g), mix(green.b, brown.b)};
        }

    std::normal_distribution<double> noise(0.0, cfg.noise_std > 0.0 ? cfg.noise_std : 1.0);
    constexpr double kSmokeWhite = 0.95;
    SynthScene scene;
    scene.rgb.reserve(static_cast<std::size_t>(cfg.n_frames));
    scene.ir.reserve(static_cast<std::size_t>(cfg.n_frames));
    for (int t = 0; t < cfg.n_frames; ++t) {
        const int age = cfg.plume_period > 0 ? t % cfg.plume_period : t;
        const double cr = cfg.origin_row + cfg.drift_row * age;
        const double cc = cfg.origin_col + cfg.drift_col * age;
        const double sigma = cfg.plume_radius + cfg.plume_growth * age;
        RgbFrame frame(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                const double d2 = (r - cr) * (r - cr) + (c - cc) * (c - cc);
                const double alpha = cfg.plume_opacity * std::exp(-d2 / (2.0 * sigma * sigma));
                const Rgb& bg = background(r, c);
                auto px = [&](float base) {
                    double v = (1.0 - alpha) * base + alpha * kSmokeWhite;
                    if (cfg.noise_std > 0.0) v += noise(rng);
                    return static_cast<float>(std::clamp(v, 0.0, 1.0));
                };
                frame(r, c) = {px(bg.r), px(bg.g), px(bg.b)};
            }
        scene.rgb.push_back(std::move(frame));

        IRFrame ir{Grid<float>(rows, cols, 0.1f), t};
        const double rad2 = cfg.hotspot_radius * cfg.hotspot_radius;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                if ((r - cfg.origin_row) * (r - cfg.origin_row) + (c - cfg.origin_col) * (c - cfg.origin_col) <= rad2)
                    ir.pixels(r, c) = 1.0f;
        scene.ir.push_back(std::move(ir));
    }
    return scene;
}

SynthSceneConfig scene_variant(const SynthSceneConfig& base, int scene_index) {
    SynthSceneConfig cfg = base;
    cfg.seed = base.seed * 1000003ULL + static_cast<std::uint64_t>(scene_index);
    std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
    const double margin = base.hotspot_radius + 2.0;
    auto pick = [&](int extent) {
        const double lo = margin, hi = extent - 1 - margin;
        if (hi <= lo) return (extent - 1) / 2.0;
        return std::floor(std::uniform_real_distribution<double>(lo, hi)(rng));
    };
    cfg.origin_row = pick(base.height);
    cfg.origin_col = pick(base.width);
    return cfg;
}

}  // namespace smolder
