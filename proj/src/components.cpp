#include "smolder/components.hpp"

#include <algorithm>
#include <deque>
#include <tuple>

namespace smolder {

std::vector<Blob> connected_components(const BinaryMask& mask, Connectivity connectivity) {
    static constexpr int kDr[] = {-1, 1, 0, 0, -1, -1, 1, 1};
    static constexpr int kDc[] = {0, 0, -1, 1, -1, 1, -1, 1};
    const int n_neighbors = connectivity == Connectivity::Eight ? 8 : 4;

    Grid<std::uint8_t> visited(mask.rows(), mask.cols(), 0);
    std::vector<Blob> blobs;
    std::deque<Pixel> queue;

    for (int r = 0; r < mask.rows(); ++r) {
        for (int c = 0; c < mask.cols(); ++c) {
            if (!mask(r, c) || visited(r, c)) continue;
            Blob blob;
            blob.bbox = {r, c, r, c};
            visited(r, c) = 1;
            queue.push_back({r, c});
            while (!queue.empty()) {
                const Pixel p = queue.front();
                queue.pop_front();
                blob.pixels.push_back(p);
                for (int k = 0; k < n_neighbors; ++k) {
                    const int nr = p.row + kDr[k];
                    const int nc = p.col + kDc[k];
                    if (!mask.in_bounds(nr, nc) || !mask(nr, nc) || visited(nr, nc)) continue;
                    visited(nr, nc) = 1;
                    queue.push_back({nr, nc});
                }
            }
            std::sort(blob.pixels.begin(), blob.pixels.end(), [](const Pixel& a, const Pixel& b) {
                return std::tie(a.row, a.col) < std::tie(b.row, b.col);
            });
            double sr = 0.0, sc = 0.0;
            for (const Pixel& p : blob.pixels) {
                blob.bbox.top = std::min(blob.bbox.top, p.row);
                blob.bbox.bottom = std::max(blob.bbox.bottom, p.row);
                blob.bbox.left = std::min(blob.bbox.left, p.col);
                blob.bbox.right = std::max(blob.bbox.right, p.col);
                sr += p.row;
                sc += p.col;
            }
            blob.centroid_row = sr / blob.area();
            blob.centroid_col = sc / blob.area();
            blobs.push_back(std::move(blob));
        }
    }

    // Discovery order is raster order of each blob's first pixel, so a stable
    // sort on (top, left) gives the documented tie-break.
    std::stable_sort(blobs.begin(), blobs.end(), [](const Blob& a, const Blob& b) {
        return std::tie(a.bbox.top, a.bbox.left) < std::tie(b.bbox.top, b.bbox.left);
    });
    return blobs;
}

BinaryMask blobs_to_mask(const std::vector<Blob>& blobs, int rows, int cols) {
    BinaryMask out(rows, cols, 0);
    for (const Blob& b : blobs)
        for (const Pixel& p : b.pixels) out(p.row, p.col) = 1;
    return out;
}

}  // namespace smolder
