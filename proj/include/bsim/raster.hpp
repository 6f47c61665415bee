#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "bsim/state.hpp"

namespace bsim {

/// Layer indices of a SemanticGrid.
enum SemanticLayer : int {
  kDrivable = 0,
  kCenterline = 1,
  kLaneDirCos = 2,  // (1 + cos(dir)) / 2 on lane pixels, 0 elsewhere
  kLaneDirSin = 3,  // (1 + sin(dir)) / 2 on lane pixels, 0 elsewhere
  kNumSemanticLayers = 4,
};

/// Multi-layer birds-eye raster in the world frame. Pixel (row, col) covers
/// [origin_x + col*ps, origin_x + (col+1)*ps) x [origin_y + row*ps, ...).
struct SemanticGrid {
  int rows = 0;
  int cols = 0;
  double pixel_size = 0.5;
  double origin_x = 0.0;
  double origin_y = 0.0;
  std::vector<float> data;  // layer-major: [layer][row][col]

  float at(int layer, int row, int col) const {
    return data[(static_cast<std::size_t>(layer) * rows + row) * cols + col];
  }
  float& at(int layer, int row, int col) {
    return data[(static_cast<std::size_t>(layer) * rows + row) * cols + col];
  }
  /// World coordinates of a pixel center.
  Vec2 world_from_pixel(int row, int col) const;
  /// Continuous pixel coordinates (col, row) where integers are pixel centers.
  Vec2 pixel_from_world(Vec2 world) const;
  /// Pixel containing a world point, or false when outside the grid.
  bool cell_of(Vec2 world, int& row, int& col) const;
  bool drivable_at(Vec2 world) const;
  std::vector<std::uint8_t> drivable_mask() const;

  bool operator==(const SemanticGrid&) const = default;
};

/// Saturated Manhattan distance (in pixels) to the drivable area.
struct DistanceMap {
  int rows = 0;
  int cols = 0;
  int saturation = 20;
  std::vector<int> values;
  bool empty_mask = false;  // no drivable pixel; every value equals saturation

  int at(int row, int col) const { return values[static_cast<std::size_t>(row) * cols + col]; }
};

/// D synchronous min-update sweeps over the 4-neighbourhood. Pixels outside
/// the grid behave as non-drivable neighbours holding D.
DistanceMap distance_map(std::span<const std::uint8_t> drivable, int rows, int cols, int saturation);

/// Heading-aligned sampling window for roi_crop, in grid pixel units.
struct RoiWindow {
  double cx = 0.0;       // column coordinate of the window centre (pixel centres are integers)
  double cy = 0.0;       // row coordinate
  double heading = 0.0;  // window +x axis angle, measured in (col, row) coordinates
  double length = 7.0;   // extent along heading
  double width = 7.0;    // extent across heading
};

/// Sample positions of an n x n lattice over the window (bin centres);
/// output order is [across][along].
std::vector<Vec2> roi_lattice(const RoiWindow& window, int n);

/// Bilinear sampling with border clamping. Returns n*n values per channel,
/// channel-major.
std::vector<double> roi_crop(std::span<const double> grid, int channels, int rows, int cols,
                             const RoiWindow& window, int n = 7);

/// Bilinear interpolation weights for one sample point (border-clamped).
struct BilinearTap {
  int idx[4];
  double w[4];
};
BilinearTap bilinear_tap(double col, double row, int rows, int cols);

struct RasterConfig {
  int size = 96;              // square raster, pixels per side
  double pixel_size = 0.5;    // metres per pixel
  double ego_col_frac = 0.25; // ego position as a fraction of the raster width
  int history = 10;           // past steps (frames = history + 1)

  int channels() const { return kNumSemanticLayers + history + 1; }
  int ego_col() const { return static_cast<int>(ego_col_frac * size); }
  int ego_row() const { return size / 2; }
  /// Ego-frame coordinates of a raster pixel centre.
  Vec2 local_from_pixel(int row, int col) const;
  /// Continuous raster coordinates (col, row) of an ego-frame point.
  Vec2 pixel_from_local(Vec2 local) const;
  bool local_in_window(Vec2 local) const;
  void validate() const;
};

/// Ego-centred, ego-aligned context tensor: semantic layers followed by
/// history+1 occupancy frames (oldest first).
struct RasterContext {
  int channels = 0;
  int size = 0;
  Pose2 ego_pose;
  double ego_speed = 0.0;
  std::vector<double> data;  // [channel][row][col]

  double at(int c, int r, int col) const {
    return data[(static_cast<std::size_t>(c) * size + r) * size + col];
  }
};

/// Source of frames for rasterization: frames[t] is the state set at step t.
/// Steps before 0 are treated as empty.
RasterContext rasterize_context(std::span<const Frame> frames, const SemanticGrid& grid, AgentId ego,
                                int t, const RasterConfig& cfg);

/// Same, writing into a caller-provided buffer of channels*size*size values.
Pose2 rasterize_into(std::span<double> out, std::span<const Frame> frames, const SemanticGrid& grid,
                     AgentId ego, int t, const RasterConfig& cfg);

/// Fills an oriented rectangle (ego-frame centre/heading/extent) into one
/// raster plane using half-open pixel-centre containment.
void fill_box(std::span<double> plane, const RasterConfig& cfg, const Pose2& local, double length,
              double width);

}  // namespace bsim
