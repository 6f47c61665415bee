#include "bsim/raster.hpp"

#include <algorithm>
#include <cmath>

namespace bsim {

Vec2 SemanticGrid::world_from_pixel(int row, int col) const {
  return {origin_x + (col + 0.5) * pixel_size, origin_y + (row + 0.5) * pixel_size};
}

Vec2 SemanticGrid::pixel_from_world(Vec2 w) const {
  return {(w.x - origin_x) / pixel_size - 0.5, (w.y - origin_y) / pixel_size - 0.5};
}

bool SemanticGrid::cell_of(Vec2 w, int& row, int& col) const {
  const double fc = std::floor((w.x - origin_x) / pixel_size);
  const double fr = std::floor((w.y - origin_y) / pixel_size);
  if (!(fc >= 0.0 && fc < cols && fr >= 0.0 && fr < rows)) return false;
  col = static_cast<int>(fc);
  row = static_cast<int>(fr);
  return true;
}

bool SemanticGrid::drivable_at(Vec2 w) const {
  int r = 0, c = 0;
  if (!cell_of(w, r, c)) return false;
  return at(kDrivable, r, c) > 0.5f;
}

std::vector<std::uint8_t> SemanticGrid::drivable_mask() const {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      mask[static_cast<std::size_t>(r) * cols + c] = at(kDrivable, r, c) > 0.5f ? 1 : 0;
    }
  }
  return mask;
}

DistanceMap distance_map(std::span<const std::uint8_t> drivable, int rows, int cols, int saturation) {
  if (saturation < 1) throw Error("distance_map: saturation D must be >= 1");
  if (rows <= 0 || cols <= 0 || drivable.size() != static_cast<std::size_t>(rows) * cols) {
    throw Error("distance_map: mask shape mismatch");
  }
  DistanceMap out;
  out.rows = rows;
  out.cols = cols;
  out.saturation = saturation;
  out.values.resize(drivable.size());
  bool any = false;
  for (std::size_t i = 0; i < drivable.size(); ++i) {
    out.values[i] = drivable[i] ? 0 : saturation;
    any = any || drivable[i];
  }
  if (!any) {
    out.empty_mask = true;
    log_warn("distance_map: mask has no drivable pixel; every value saturates");
    return out;
  }
  std::vector<int> next(out.values.size());
  const auto idx = [cols](int r, int c) { return static_cast<std::size_t>(r) * cols + c; };
  for (int sweep = 0; sweep < saturation; ++sweep) {
    bool changed = false;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        int v = out.values[idx(r, c)];
        const int up = r > 0 ? out.values[idx(r - 1, c)] : saturation;
        const int down = r + 1 < rows ? out.values[idx(r + 1, c)] : saturation;
        const int left = c > 0 ? out.values[idx(r, c - 1)] : saturation;
        const int right = c + 1 < cols ? out.values[idx(r, c + 1)] : saturation;
        v = std::min({v, up + 1, down + 1, left + 1, right + 1});
        changed = changed || v != out.values[idx(r, c)];
        next[idx(r, c)] = v;
      }
    }
    out.values.swap(next);
    if (!changed) break;
  }
  return out;
}

BilinearTap bilinear_tap(double col, double row, int rows, int cols) {
  col = std::clamp(col, 0.0, static_cast<double>(cols - 1));
  row = std::clamp(row, 0.0, static_cast<double>(rows - 1));
  const int c0 = std::min(static_cast<int>(std::floor(col)), cols - 1);
  const int r0 = std::min(static_cast<int>(std::floor(row)), rows - 1);
  const int c1 = std::min(c0 + 1, cols - 1);
  const int r1 = std::min(r0 + 1, rows - 1);
  const double fc = col - c0;
  const double fr = row - r0;
  BilinearTap t;
  t.idx[0] = r0 * cols + c0;
  t.idx[1] = r0 * cols + c1;
  t.idx[2] = r1 * cols + c0;
  t.idx[3] = r1 * cols + c1;
  t.w[0] = (1.0 - fr) * (1.0 - fc);
  t.w[1] = (1.0 - fr) * fc;
  t.w[2] = fr * (1.0 - fc);
  t.w[3] = fr * fc;
  return t;
}

std::vector<Vec2> roi_lattice(const RoiWindow& win, int n) {
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(n) * n);
  const double c = std::cos(win.heading);
  const double s = std::sin(win.heading);
  for (int b = 0; b < n; ++b) {
    const double across = ((b + 0.5) / n - 0.5) * win.width;
    for (int a = 0; a < n; ++a) {
      const double along = ((a + 0.5) / n - 0.5) * win.length;
      pts.push_back({win.cx + along * c - across * s, win.cy + along * s + across * c});
    }
  }
  return pts;
}

std::vector<double> roi_crop(std::span<const double> grid, int channels, int rows, int cols,
                             const RoiWindow& win, int n) {
  if (!std::isfinite(win.cx) || !std::isfinite(win.cy) || !std::isfinite(win.heading) ||
      !std::isfinite(win.length) || !std::isfinite(win.width)) {
    throw Error("roi_crop: non-finite pose");
  }
  if (grid.size() != static_cast<std::size_t>(channels) * rows * cols) {
    throw Error("roi_crop: grid shape mismatch");
  }
  const auto pts = roi_lattice(win, n);
  std::vector<double> out(static_cast<std::size_t>(channels) * pts.size());
  const std::size_t plane = static_cast<std::size_t>(rows) * cols;
  for (std::size_t p = 0; p < pts.size(); ++p) {
    const BilinearTap t = bilinear_tap(pts[p].x, pts[p].y, rows, cols);
    for (int ch = 0; ch < channels; ++ch) {
      const double* g = grid.data() + ch * plane;
      out[ch * pts.size() + p] =
          t.w[0] * g[t.idx[0]] + t.w[1] * g[t.idx[1]] + t.w[2] * g[t.idx[2]] + t.w[3] * g[t.idx[3]];
    }
  }
  return out;
}

Vec2 RasterConfig::local_from_pixel(int row, int col) const {
  return {(col + 0.5 - ego_col()) * pixel_size, (row + 0.5 - ego_row()) * pixel_size};
}

Vec2 RasterConfig::pixel_from_local(Vec2 local) const {
  return {local.x / pixel_size + ego_col() - 0.5, local.y / pixel_size + ego_row() - 0.5};
}

bool RasterConfig::local_in_window(Vec2 local) const {
  const double c = local.x / pixel_size + ego_col();
  const double r = local.y / pixel_size + ego_row();
  return c >= 0.0 && c < size && r >= 0.0 && r < size;
}

void RasterConfig::validate() const {
  if (size < 16 || size % 16 != 0) throw Error("raster size must be a positive multiple of 16");
  if (!(pixel_size > 0.0)) throw Error("raster pixel size must be positive");
  if (!(ego_col_frac >= 0.0 && ego_col_frac < 1.0)) throw Error("ego_col_frac must lie in [0, 1)");
  if (history < 0) throw Error("history must be >= 0");
}

void fill_box(std::span<double> plane, const RasterConfig& cfg, const Pose2& local, double length,
              double width) {
  const double c = std::cos(local.heading);
  const double s = std::sin(local.heading);
  const double hl = 0.5 * length;
  const double hw = 0.5 * width;
  // Bounding box of the rectangle in continuous pixel coordinates.
  double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
  for (int i = 0; i < 4; ++i) {
    const double u = (i & 1) ? hl : -hl;
    const double v = (i & 2) ? hw : -hw;
    const Vec2 p = cfg.pixel_from_local({local.x + u * c - v * s, local.y + u * s + v * c});
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const int c0 = std::max(0, static_cast<int>(std::floor(min_x)));
  const int c1 = std::min(cfg.size - 1, static_cast<int>(std::ceil(max_x)));
  const int r0 = std::max(0, static_cast<int>(std::floor(min_y)));
  const int r1 = std::min(cfg.size - 1, static_cast<int>(std::ceil(max_y)));
  for (int r = r0; r <= r1; ++r) {
    for (int col = c0; col <= c1; ++col) {
      const Vec2 q = cfg.local_from_pixel(r, col);
      const double dx = q.x - local.x;
      const double dy = q.y - local.y;
      const double u = c * dx + s * dy;
      const double v = -s * dx + c * dy;
      if (u >= -hl && u < hl && v >= -hw && v < hw) {
        plane[static_cast<std::size_t>(r) * cfg.size + col] = 1.0;
      }
    }
  }
}

Pose2 rasterize_into(std::span<double> out, std::span<const Frame> frames, const SemanticGrid& grid,
                     AgentId ego, int t, const RasterConfig& cfg) {
  const std::size_t plane = static_cast<std::size_t>(cfg.size) * cfg.size;
  if (out.size() != plane * cfg.channels()) throw Error("rasterize: output buffer size mismatch");
  if (t < 0 || t >= static_cast<int>(frames.size())) {
    throw Error("rasterize: step " + std::to_string(t) + " out of range");
  }
  const AgentState* e = find_agent(frames[t], ego);
  if (!e) {
    throw Error("rasterize: ego " + std::to_string(ego) + " missing at step " + std::to_string(t));
  }
  const Pose2 ego_pose = e->pose();
  std::fill(out.begin(), out.end(), 0.0);

  const double c = std::cos(ego_pose.heading);
  const double s = std::sin(ego_pose.heading);
  for (int r = 0; r < cfg.size; ++r) {
    for (int col = 0; col < cfg.size; ++col) {
      const Vec2 l = cfg.local_from_pixel(r, col);
      const Vec2 w{ego_pose.x + c * l.x - s * l.y, ego_pose.y + s * l.x + c * l.y};
      int gr = 0, gc = 0;
      if (!grid.cell_of(w, gr, gc)) continue;
      const std::size_t o = static_cast<std::size_t>(r) * cfg.size + col;
      out[kDrivable * plane + o] = grid.at(kDrivable, gr, gc);
      out[kCenterline * plane + o] = grid.at(kCenterline, gr, gc);
      const float ec = grid.at(kLaneDirCos, gr, gc);
      const float es = grid.at(kLaneDirSin, gr, gc);
      if (ec != 0.0f || es != 0.0f) {
        const double dir = std::atan2(2.0 * es - 1.0, 2.0 * ec - 1.0);
        const double rel = dir - ego_pose.heading;
        out[kLaneDirCos * plane + o] = 0.5 * (1.0 + std::cos(rel));
        out[kLaneDirSin * plane + o] = 0.5 * (1.0 + std::sin(rel));
      }
    }
  }

  for (int f = 0; f <= cfg.history; ++f) {
    const int tau = t - cfg.history + f;
    if (tau < 0) continue;
    std::span<double> occ = out.subspan((kNumSemanticLayers + f) * plane, plane);
    for (const AgentState& a : frames[tau]) {
      const Pose2 local = to_local(ego_pose, a.pose());
      // Cheap reject: boxes entirely outside the window.
      const double reach = 0.5 * std::hypot(a.length, a.width);
      const Vec2 p = cfg.pixel_from_local({local.x, local.y});
      const double rp = reach / cfg.pixel_size + 1.0;
      if (p.x < -rp || p.y < -rp || p.x > cfg.size + rp || p.y > cfg.size + rp) continue;
      fill_box(occ, cfg, local, a.length, a.width);
    }
  }
  return ego_pose;
}

RasterContext rasterize_context(std::span<const Frame> frames, const SemanticGrid& grid, AgentId ego,
                                int t, const RasterConfig& cfg) {
  RasterContext ctx;
  ctx.channels = cfg.channels();
  ctx.size = cfg.size;
  ctx.data.resize(static_cast<std::size_t>(ctx.channels) * cfg.size * cfg.size);
  ctx.ego_pose = rasterize_into(ctx.data, frames, grid, ego, t, cfg);
  ctx.ego_speed = find_agent(frames[t], ego)->speed;
  return ctx;
}

}  // namespace bsim
