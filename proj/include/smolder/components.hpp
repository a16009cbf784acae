#pragma once

#include <vector>

#include "smolder/grid.hpp"

namespace smolder {

enum class Connectivity { Four, Eight };

struct Pixel {
    int row = 0;
    int col = 0;
    bool operator==(const Pixel&) const = default;
};

struct BoundingBox {
    int top = 0;
    int left = 0;
    int bottom = 0;  // inclusive
    int right = 0;   // inclusive
};

/// A connected foreground component ("fire spot").
struct Blob {
    std::vector<Pixel> pixels;  // raster order
    BoundingBox bbox;
    double centroid_row = 0.0;
    double centroid_col = 0.0;

    int area() const { return static_cast<int>(pixels.size()); }
};

/// Connected components of the foreground, ordered by (bbox.top, bbox.left),
/// ties broken by the raster position of the first pixel.
std::vector<Blob> connected_components(const BinaryMask& mask, Connectivity connectivity);

/// Paint blob pixels into an empty mask of the given shape.
BinaryMask blobs_to_mask(const std::vector<Blob>& blobs, int rows, int cols);

}  // namespace smolder
