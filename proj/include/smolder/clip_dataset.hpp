#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "smolder/grid.hpp"
#include "smolder/ir_labeling.hpp"

namespace smolder {

namespace fs = std::filesystem;

/// Encoder downsampling factor; clip frames must be a multiple of it.
inline constexpr int kSpatialMultiple = 32;

enum class AlignPolicy { Crop, Resize };

struct IngestConfig {
    AlignPolicy policy = AlignPolicy::Crop;  // bottom/right crop by default
};

struct FramePair {
    RgbFrame rgb;
    IRFrame ir;  // same geometry as rgb
};

/// Largest multiple-of-32 size not exceeding (rows, cols).
std::pair<int, int> aligned_size(int rows, int cols);

RgbFrame align_rgb(const RgbFrame& frame, AlignPolicy policy);
/// Brings an IR frame onto the aligned RGB grid of an rgb_rows x rgb_cols frame.
Grid<float> align_ir(const Grid<float>& ir, int rgb_rows, int rgb_cols, AlignPolicy policy);

/// All frames of a directory (sorted by name) or a video file.
std::vector<RgbFrame> read_rgb_frames(const fs::path& source);
std::vector<Grid<float>> read_ir_frames(const fs::path& source);

/// Pair RGB and IR frames by index. Sources are frame directories or video files.
std::vector<FramePair> ingest_video(const fs::path& rgb_source, const fs::path& ir_source, const IngestConfig& cfg);
/// In-memory variant used by the synthetic generator and tests.
std::vector<FramePair> ingest_frames(std::span<const RgbFrame> rgb, std::span<const Grid<float>> ir,
                                     const IngestConfig& cfg);

enum class ClipSource { Real, Synthetic };

/// seq_len consecutive RGB frames with one fused ground-truth mask.
struct Clip {
    std::string clip_id;
    ClipSource source = ClipSource::Real;
    std::vector<RgbFrame> frames;
    BinaryMask gt_mask;
    int first_frame = 0;  // index of frames[0] in the source video
};

struct ClipBuildResult {
    std::vector<Clip> clips;
    std::vector<std::string> warnings;
    int dropped_frames = 0;
};

/// Non-overlapping windows of seq_len frames; each window's ground truth is the
/// majority vote of its per-frame IR labels. A trailing remainder is dropped.
ClipBuildResult build_clips(std::span<const FramePair> pairs, int seq_len, const LabelingConfig& labeling,
                            const std::string& clip_prefix, ClipSource source = ClipSource::Real);

std::string clip_id_for(const std::string& prefix, int clip_index);

enum class Split { Train, Test };
std::string to_string(Split split);
Split parse_split(const std::string& text);

struct ManifestEntry {
    std::string clip_id;
    Split split = Split::Train;
    fs::path gt_path;
    std::vector<fs::path> frame_paths;
};

struct DatasetManifest {
    int seq_len = 20;
    std::vector<ManifestEntry> clips;

    int count(Split split) const;
    std::vector<ManifestEntry> entries(Split split) const;
    /// Throws InputError on duplicate ids, wrong frame counts, or frames shared across splits.
    void validate() const;
};

/// Deterministic seeded shuffle, then the first round(test_fraction * n) clips become the test split.
DatasetManifest split_dataset(std::vector<ManifestEntry> clips, double test_fraction, std::uint64_t seed, int seq_len);

// Text format, one clip per line:
//   # smolder-manifest v1
//   # seq_len <T>
//   <clip_id>,<train|test>,<gt_path>,<frame_path_1>,...,<frame_path_T>
// Relative paths are resolved against the manifest's directory.
void write_manifest(const fs::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const fs::path& path);

/// Reads frames and gt of one manifest record.
Clip load_clip(const ManifestEntry& entry);

/// Desk-scale scene: a plume of smoke emitted from a static hotspot.
struct SynthSceneConfig {
    int height = 64;
    int width = 64;
    int n_frames = 20;
    double origin_row = 32.0;  // hotspot and plume source
    double origin_col = 32.0;
    double drift_row = 0.0;  // px / frame
    double drift_col = 1.0;
    double plume_growth = 0.5;  // sigma increase, px / frame
    double plume_radius = 4.0;  // sigma at emission
    double plume_opacity = 0.85;
    int plume_period = 20;  // frames between re-emissions; 0 = single plume
    double hotspot_radius = 12.0;
    double noise_std = 0.02;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SynthScene {
    std::vector<RgbFrame> rgb;
    std::vector<IRFrame> ir;
};

/// Pure function of cfg (including seed).
SynthScene generate_synthetic_scene(const SynthSceneConfig& cfg);

/// Copy of `base` with a seed-derived hotspot position that keeps the hotspot
/// inside the canvas, for multi-scene datasets.
SynthSceneConfig scene_variant(const SynthSceneConfig& base, int scene_index);

}  // namespace smolder
