#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "smolder/grid.hpp"

namespace smolder {

namespace fs = std::filesystem;

/// Image files in `dir` sorted by name (zero-padded frame indices sort naturally).
std::vector<fs::path> list_frame_files(const fs::path& dir);

bool is_video_file(const fs::path& path);

/// Decode an RGB image to [0,1] floats.
RgbFrame read_rgb(const fs::path& path);
void write_rgb(const fs::path& path, const RgbFrame& frame);

/// Decode a single-channel intensity frame. 8-bit is divided by 255, 16-bit by
/// 65535, floating point is min-max normalized per frame.
Grid<float> read_intensity(const fs::path& path);

/// 16-bit PNG with value round(65535 * v), v clamped to [0,1].
void write_intensity(const fs::path& path, const Grid<float>& frame);

BinaryMask read_mask(const fs::path& path);
/// 8-bit PNG with values {0, 255}.
void write_mask(const fs::path& path, const BinaryMask& mask);

/// 8-bit PNG with value round(255 * p).
void write_probability(const fs::path& path, const Grid<float>& probs);

/// Frame with the prediction contour in red and, when given, the ground-truth
/// contour in green.
void write_overlay(const fs::path& path, const RgbFrame& frame, const BinaryMask& prediction,
                   const BinaryMask* ground_truth = nullptr);

}  // namespace smolder
