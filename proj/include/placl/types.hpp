#pragma once

#include <cstddef>
#include <vector>

namespace placl {

// Pixel coordinates: x is the column, y the row. Pixel (i, j) covers
// [i, i + 1) x [j, j + 1), so its center sits at (i + 0.5, j + 0.5).
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

using Keypoints = std::vector<Point>;

// Square single-channel image, row-major, values in [0, 1].
struct Image {
  int size = 0;
  std::vector<double> pixels;

  Image() = default;
  explicit Image(int side) : size(side), pixels(static_cast<std::size_t>(side) * side, 0.0) {}

  double& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * size + col]; }
  double at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * size + col]; }

  friend bool operator==(const Image&, const Image&) = default;
};

// K square confidence grids, stored map-major then row-major.
struct HeatmapStack {
  int num_maps = 0;
  int size = 0;
  std::vector<double> values;

  HeatmapStack() = default;
  HeatmapStack(int maps, int side)
      : num_maps(maps), size(side), values(static_cast<std::size_t>(maps) * side * side, 0.0) {}

  std::size_t cells_per_map() const { return static_cast<std::size_t>(size) * size; }

  double& at(int map, int row, int col) {
    return values[map * cells_per_map() + static_cast<std::size_t>(row) * size + col];
  }
  double at(int map, int row, int col) const {
    return values[map * cells_per_map() + static_cast<std::size_t>(row) * size + col];
  }

  friend bool operator==(const HeatmapStack&, const HeatmapStack&) = default;
};

}  // namespace placl
