#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "smolder/errors.hpp"

namespace smolder {

/// Dense row-major 2D grid.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int rows, int cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(checked_size(rows, cols), fill) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator()(int r, int c) { return data_[index(r, c)]; }
    const T& operator()(int r, int c) const { return data_[index(r, c)]; }

    bool in_bounds(int r, int c) const { return r >= 0 && r < rows_ && c >= 0 && c < cols_; }
    bool same_shape(const Grid& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }
    template <typename U>
    bool same_shape(const Grid<U>& other) const { return rows_ == other.rows() && cols_ == other.cols(); }

    std::span<T> pixels() { return data_; }
    std::span<const T> pixels() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    bool operator==(const Grid&) const = default;

private:
    static std::size_t checked_size(int rows, int cols) {
        if (rows < 0 || cols < 0) throw ShapeError("grid dimensions must be non-negative");
        return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    }
    std::size_t index(int r, int c) const {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
    }

    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> data_;
};

struct Rgb {
    float r = 0.0f;
    float g = 0.0f;
    float b = 0.0f;
    bool operator==(const Rgb&) const = default;
};

/// Binary label grid; every value is exactly 0 or 1.
using BinaryMask = Grid<std::uint8_t>;
using RgbFrame = Grid<Rgb>;

/// Single-channel IR intensity frame, values in [0,1] after ingestion.
struct IRFrame {
    Grid<float> pixels;
    int frame_index = 0;
};

inline std::size_t count_foreground(const BinaryMask& mask) {
    std::size_t n = 0;
    for (auto v : mask.pixels()) n += v != 0;
    return n;
}

}  // namespace smolder
