#include "bsim/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "bsim/common.hpp"

namespace bsim::nn {

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(what);
}

void im2col(const double* x, int C, int H, int W, int stride, int Ho, int Wo, double* cols) {
  const int P = Ho * Wo;
  for (int c = 0; c < C; ++c) {
    const double* xc = x + static_cast<std::size_t>(c) * H * W;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* row = cols + static_cast<std::size_t>((c * 3 + ky) * 3 + kx) * P;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride + ky - 1;
          double* dst = row + oy * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + Wo, 0.0);
            continue;
          }
          const double* src = xc + static_cast<std::size_t>(iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride + kx - 1;
            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, int C, int H, int W, int stride, int Ho, int Wo, double* dx) {
  const int P = Ho * Wo;
  for (int c = 0; c < C; ++c) {
    double* xc = dx + static_cast<std::size_t>(c) * H * W;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = cols + static_cast<std::size_t>((c * 3 + ky) * 3 + kx) * P;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= H) continue;
          double* dst = xc + static_cast<std::size_t>(iy) * W;
          const double* src = row + oy * Wo;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride + kx - 1;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Graph& g, Var x, Var w, Var b, int stride) {
  const Tensor& X = g.value(x);
  const Tensor& Wt = g.value(w);
  const Tensor& B = g.value(b);
  require(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
  require(X.ndim() == 4, "conv2d: input must be [N,C,H,W], got " + X.shape_str());
  require(Wt.ndim() == 4 && Wt.dim(2) == 3 && Wt.dim(3) == 3, "conv2d: weight must be [O,C,3,3], got " + Wt.shape_str());
  require(Wt.dim(1) == X.dim(1), "conv2d: input " + X.shape_str() + " does not match weight " + Wt.shape_str());
  require(B.size() == static_cast<std::size_t>(Wt.dim(0)), "conv2d: bias size mismatch");
  const int N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3), O = Wt.dim(0);
  const int Ho = (H - 1) / stride + 1, Wo = (W - 1) / stride + 1;
  const int P = Ho * Wo, K = C * 9;
  Tensor out({N, O, Ho, Wo});
  std::vector<double> cols(static_cast<std::size_t>(K) * P);
  CMapR Wm(Wt.data.data(), O, K);
  for (int n = 0; n < N; ++n) {
    im2col(X.data.data() + static_cast<std::size_t>(n) * C * H * W, C, H, W, stride, Ho, Wo, cols.data());
    MapR On(out.data.data() + static_cast<std::size_t>(n) * O * P, O, P);
    On.noalias() = Wm * CMapR(cols.data(), K, P);
    for (int o = 0; o < O; ++o) On.row(o).array() += B.data[o];
  }
  return g.push(std::move(out), {x, w, b}, [x, w, b, stride, N, C, H, W, O, Ho, Wo](Graph& gr, Var self) {
    const int P = Ho * Wo, K = C * 9;
    const Tensor& X = gr.value(x);
    const Tensor& Wt = gr.value(w);
    const Tensor& dOut = gr.grad(self);
    const bool need_x = gr.requires_grad(x);
    const bool need_w = gr.requires_grad(w);
    const bool need_b = gr.requires_grad(b);
    std::vector<double> cols(static_cast<std::size_t>(K) * P);
    std::vector<double> dcols(need_x ? static_cast<std::size_t>(K) * P : 0);
    CMapR Wm(Wt.data.data(), O, K);
    for (int n = 0; n < N; ++n) {
      CMapR dOn(dOut.data.data() + static_cast<std::size_t>(n) * O * P, O, P);
      if (need_w) {
        im2col(X.data.data() + static_cast<std::size_t>(n) * C * H * W, C, H, W, stride, Ho, Wo, cols.data());
        MapR dW(gr.grad(w).data.data(), O, K);
        dW.noalias() += dOn * CMapR(cols.data(), K, P).transpose();
      }
      if (need_b) {
        auto& db = gr.grad(b).data;
        for (int o = 0; o < O; ++o) db[o] += dOn.row(o).sum();
      }
      if (need_x) {
        MapR dC(dcols.data(), K, P);
        dC.noalias() = Wm.transpose() * dOn;
        col2im(dcols.data(), C, H, W, stride, Ho, Wo, gr.grad(x).data.data() + static_cast<std::size_t>(n) * C * H * W);
      }
    }
  });
}

Var relu(Graph& g, Var x) {
  Tensor out = g.value(x);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return g.push(std::move(out), {x}, [x](Graph& gr, Var self) {
    const auto& y = gr.value(self).data;
    const auto& dy = gr.grad(self).data;
    auto& dx = gr.grad(x).data;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] > 0.0) dx[i] += dy[i];
    }
  });
}

Var add(Graph& g, Var a, Var b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  require(A.shape == B.shape, "add: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += B.data[i];
  return g.push(std::move(out), {a, b}, [a, b](Graph& gr, Var self) {
    const auto& dy = gr.grad(self).data;
    for (Var v : {a, b}) {
      if (!gr.requires_grad(v)) continue;
      auto& d = gr.grad(v).data;
      for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
    }
  });
}

Var scale(Graph& g, Var x, double s) {
  Tensor out = g.value(x);
  for (double& v : out.data) v *= s;
  return g.push(std::move(out), {x}, [x, s](Graph& gr, Var self) {
    const auto& dy = gr.grad(self).data;
    auto& dx = gr.grad(x).data;
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += s * dy[i];
  });
}

Var upsample2x(Graph& g, Var x) {
  const Tensor& X = g.value(x);
  require(X.ndim() == 4, "upsample2x: input must be [N,C,H,W], got " + X.shape_str());
  const int NC = X.dim(0) * X.dim(1), H = X.dim(2), W = X.dim(3);
  Tensor out({X.dim(0), X.dim(1), 2 * H, 2 * W});
  for (int p = 0; p < NC; ++p) {
    const double* src = X.data.data() + static_cast<std::size_t>(p) * H * W;
    double* dst = out.data.data() + static_cast<std::size_t>(p) * 4 * H * W;
    for (int r = 0; r < 2 * H; ++r) {
      for (int c = 0; c < 2 * W; ++c) dst[r * 2 * W + c] = src[(r / 2) * W + c / 2];
    }
  }
  return g.push(std::move(out), {x}, [x, NC, H, W](Graph& gr, Var self) {
    const auto& dy = gr.grad(self).data;
    auto& dx = gr.grad(x).data;
    for (int p = 0; p < NC; ++p) {
      const double* src = dy.data() + static_cast<std::size_t>(p) * 4 * H * W;
      double* dst = dx.data() + static_cast<std::size_t>(p) * H * W;
      for (int r = 0; r < 2 * H; ++r) {
        for (int c = 0; c < 2 * W; ++c) dst[(r / 2) * W + c / 2] += src[r * 2 * W + c];
      }
    }
  });
}

Var concat_channels(Graph& g, const std::vector<Var>& xs) {
  require(!xs.empty(), "concat_channels: no inputs");
  const Tensor& first = g.value(xs[0]);
  require(first.ndim() == 4, "concat_channels: inputs must be [N,C,H,W]");
  const int N = first.dim(0), H = first.dim(2), W = first.dim(3);
  std::vector<int> chans;
  int total = 0;
  for (Var v : xs) {
    const Tensor& t = g.value(v);
    require(t.ndim() == 4 && t.dim(0) == N && t.dim(2) == H && t.dim(3) == W,
            "concat_channels: " + t.shape_str() + " incompatible with " + first.shape_str());
    chans.push_back(t.dim(1));
    total += t.dim(1);
  }
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  Tensor out({N, total, H, W});
  for (int n = 0; n < N; ++n) {
    std::size_t off = static_cast<std::size_t>(n) * total * plane;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const auto& src = g.value(xs[i]).data;
      const std::size_t len = chans[i] * plane;
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(n * len), len, out.data.begin() + static_cast<std::ptrdiff_t>(off));
      off += len;
    }
  }
  return g.push(std::move(out), xs, [xs, chans, N, total, plane](Graph& gr, Var self) {
    const auto& dy = gr.grad(self).data;
    for (int n = 0; n < N; ++n) {
      std::size_t off = static_cast<std::size_t>(n) * total * plane;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const std::size_t len = chans[i] * plane;
        if (gr.requires_grad(xs[i])) {
          auto& dx = gr.grad(xs[i]).data;
          for (std::size_t k = 0; k < len; ++k) dx[n * len + k] += dy[off + k];
        }
        off += len;
      }
    }
  });
}

Var global_avg_pool(Graph& g, Var x) {
  const Tensor& X = g.value(x);
  require(X.ndim() == 4, "global_avg_pool: input must be [N,C,H,W], got " + X.shape_str());
  const int NC = X.dim(0) * X.dim(1);
  const std::size_t plane = static_cast<std::size_t>(X.dim(2)) * X.dim(3);
  Tensor out({X.dim(0), X.dim(1)});
  for (int p = 0; p < NC; ++p) {
    double s = 0.0;
    for (std::size_t k = 0; k < plane; ++k) s += X.data[p * plane + k];
    out.data[p] = s / static_cast<double>(plane);
  }
  return g.push(std::move(out), {x}, [x, NC, plane](Graph& gr, Var self) {
    const auto& dy = gr.grad(self).data;
    auto& dx = gr.grad(x).data;
    for (int p = 0; p < NC; ++p) {
      const double v = dy[p] / static_cast<double>(plane);
      for (std::size_t k = 0; k < plane; ++k) dx[p * plane + k] += v;
    }
  });
}

Var linear(Graph& g, Var x, Var w, Var b) {
  const Tensor& X = g.value(x);
  const Tensor& Wt = g.value(w);
  const Tensor& B = g.value(b);
  require(X.ndim() == 2, "linear: input must be [N,F], got " + X.shape_str());
  require(Wt.ndim() == 2 && Wt.dim(1) == X.dim(1), "linear: input " + X.shape_str() + " does not match weight " + Wt.shape_str());
  require(B.size() == static_cast<std::size_t>(Wt.dim(0)), "linear: bias size mismatch");
  const int N = X.dim(0), F = X.dim(1), O = Wt.dim(0);
  Tensor out({N, O});
  MapR Y(out.data.data(), N, O);
  Y.noalias() = CMapR(X.data.data(), N, F) * CMapR(Wt.data.data(), O, F).transpose();
  for (int n = 0; n < N; ++n) {
    for (int o = 0; o < O; ++o) Y(n, o) += B.data[o];
  }
  return g.push(std::move(out), {x, w, b}, [x, w, b, N, F, O](Graph& gr, Var self) {
    CMapR dY(gr.grad(self).data.data(), N, O);
    if (gr.requires_grad(x)) {
      MapR dX(gr.grad(x).data.data(), N, F);
      dX.noalias() += dY * CMapR(gr.value(w).data.data(), O, F);
    }
    if (gr.requires_grad(w)) {
      MapR dW(gr.grad(w).data.data(), O, F);
      dW.noalias() += dY.transpose() * CMapR(gr.value(x).data.data(), N, F);
    }
    if (gr.requires_grad(b)) {
      auto& db = gr.grad(b).data;
      for (int o = 0; o < O; ++o) db[o] += dY.col(o).sum();
    }
  });
}

Var concat_cols(Graph& g, const std::vector<Var>& xs) {
  require(!xs.empty(), "concat_cols: no inputs");
  const int N = g.value(xs[0]).dim(0);
  std::vector<int> widths;
  int total = 0;
  for (Var v : xs) {
    const Tensor& t = g.value(v);
    require(t.ndim() == 2 && t.dim(0) == N, "concat_cols: " + t.shape_str() + " incompatible row count");
    widths.push_back(t.dim(1));
    total += t.dim(1);
  }
  Tensor out({N, total});
  for (int n = 0; n < N; ++n) {
    int off = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const auto& src = g.value(xs[i]).data;
      for (int k = 0; k < widths[i]; ++k) out.data[static_cast<std::size_t>(n) * total + off + k] = src[static_cast<std::size_t>(n) * widths[i] + k];
      off += widths[i];
    }
  }
  return g.push(std::move(out), xs, [xs, widths, N, total](Graph& gr, Var self) {
    const auto& dy = gr.grad(self).data;
    int off = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (gr.requires_grad(xs[i])) {
        auto& dx = gr.grad(xs[i]).data;
        for (int n = 0; n < N; ++n) {
          for (int k = 0; k < widths[i]; ++k) dx[static_cast<std::size_t>(n) * widths[i] + k] += dy[static_cast<std::size_t>(n) * total + off + k];
        }
      }
      off += widths[i];
    }
  });
}

Var gather_rows(Graph& g, Var x, std::span<const int> rows) {
  const Tensor& X = g.value(x);
  require(X.ndim() >= 1, "gather_rows: scalar input");
  const std::size_t row = X.size() / static_cast<std::size_t>(std::max(1, X.dim(0)));
  std::vector<int> shape = X.shape;
  shape[0] = static_cast<int>(rows.size());
  Tensor out(shape);
  std::vector<int> idx(rows.begin(), rows.end());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    require(idx[r] >= 0 && idx[r] < X.dim(0), "gather_rows: index out of range");
    std::copy_n(X.data.begin() + static_cast<std::ptrdiff_t>(idx[r] * row), row, out.data.begin() + static_cast<std::ptrdiff_t>(r * row));
  }
  return g.push(std::move(out), {x}, [x, idx, row](Graph& gr, Var self) {
    const auto& dy = gr.grad(self).data;
    auto& dx = gr.grad(x).data;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t k = 0; k < row; ++k) dx[idx[r] * row + k] += dy[r * row + k];
    }
  });
}

Var sum(Graph& g, Var x) {
  double s = 0.0;
  for (double v : g.value(x).data) s += v;
  return g.push(Tensor({1}, s), {x}, [x](Graph& gr, Var self) {
    const double d = gr.grad(self).data[0];
    for (double& v : gr.grad(x).data) v += d;
  });
}

Var weighted_sum(Graph& g, const std::vector<Var>& xs, const std::vector<double>& w) {
  require(xs.size() == w.size(), "weighted_sum: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    require(g.value(xs[i]).size() == 1, "weighted_sum: inputs must be scalars");
    s += w[i] * g.value(xs[i]).data[0];
  }
  return g.push(Tensor({1}, s), xs, [xs, w](Graph& gr, Var self) {
    const double d = gr.grad(self).data[0];
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (gr.requires_grad(xs[i])) gr.grad(xs[i]).data[0] += w[i] * d;
    }
  });
}

Var roi_align(Graph& g, Var feat, std::span<const RoiRequest> rois, int n) {
  const Tensor& F = g.value(feat);
  require(F.ndim() == 4, "roi_align: features must be [N,C,H,W], got " + F.shape_str());
  const int C = F.dim(1), H = F.dim(2), W = F.dim(3);
  const int R = static_cast<int>(rois.size());
  const int nn = n * n;
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  std::vector<BilinearTap> taps;
  std::vector<int> batch;
  taps.reserve(static_cast<std::size_t>(R) * nn);
  for (const RoiRequest& r : rois) {
    const RoiWindow& win = r.window;
    require(std::isfinite(win.cx) && std::isfinite(win.cy) && std::isfinite(win.heading), "roi_align: non-finite pose");
    require(r.batch >= 0 && r.batch < F.dim(0), "roi_align: batch index out of range");
    batch.push_back(r.batch);
    for (const Vec2& p : roi_lattice(win, n)) taps.push_back(bilinear_tap(p.x, p.y, H, W));
  }
  Tensor out({R, C * nn});
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) {
      const double* f = F.data.data() + (static_cast<std::size_t>(batch[r]) * C + c) * plane;
      for (int k = 0; k < nn; ++k) {
        const BilinearTap& t = taps[static_cast<std::size_t>(r) * nn + k];
        out.data[static_cast<std::size_t>(r) * C * nn + c * nn + k] =
            t.w[0] * f[t.idx[0]] + t.w[1] * f[t.idx[1]] + t.w[2] * f[t.idx[2]] + t.w[3] * f[t.idx[3]];
      }
    }
  }
  return g.push(std::move(out), {feat}, [feat, taps, batch, C, nn, plane, R](Graph& gr, Var self) {
    const auto& dy = gr.grad(self).data;
    auto& df = gr.grad(feat).data;
    for (int r = 0; r < R; ++r) {
      for (int c = 0; c < C; ++c) {
        double* f = df.data() + (static_cast<std::size_t>(batch[r]) * C + c) * plane;
        for (int k = 0; k < nn; ++k) {
          const BilinearTap& t = taps[static_cast<std::size_t>(r) * nn + k];
          const double d = dy[static_cast<std::size_t>(r) * C * nn + c * nn + k];
          for (int q = 0; q < 4; ++q) f[t.idx[q]] += t.w[q] * d;
        }
      }
    }
  });
}

std::vector<Control> decode_controls(std::span<const double> raw, double start_speed, const ControlScaling& s) {
  std::vector<Control> u(raw.size() / 2);
  for (std::size_t k = 0; k < u.size(); ++k) {
    u[k].speed_cmd = start_speed + s.speed * raw[2 * k];
    u[k].yaw_rate = s.yaw * raw[2 * k + 1];
  }
  return u;
}

Var control_rollout(Graph& g, Var raw, std::span<const AgentState> starts, const Limits& limits,
                    const ControlScaling& scaling) {
  const Tensor& U = g.value(raw);
  require(U.ndim() == 2 && U.dim(1) % 2 == 0 && U.dim(1) >= 2, "control_rollout: raw must be [R, 2H], got " + U.shape_str());
  require(static_cast<std::size_t>(U.dim(0)) == starts.size(), "control_rollout: one start state per row required");
  const int R = U.dim(0), Hh = U.dim(1) / 2;
  Tensor out({R, 3 * Hh});
  for (int r = 0; r < R; ++r) {
    const auto u = decode_controls(std::span<const double>(U.data.data() + static_cast<std::size_t>(r) * 2 * Hh, 2 * Hh),
                                   starts[r].speed, scaling);
    const auto traj = rollout_controls(starts[r], u, limits);
    for (int k = 0; k < Hh; ++k) {
      double* o = out.data.data() + static_cast<std::size_t>(r) * 3 * Hh + 3 * k;
      o[0] = traj[k].x;
      o[1] = traj[k].y;
      o[2] = traj[k].heading;
    }
  }
  std::vector<AgentState> st(starts.begin(), starts.end());
  return g.push(std::move(out), {raw}, [raw, st, limits, scaling, R, Hh](Graph& gr, Var self) {
    const auto& U = gr.value(raw).data;
    const auto& dy = gr.grad(self).data;
    auto& du = gr.grad(raw).data;
    std::vector<StateAdjoint> adj(Hh);
    for (int r = 0; r < R; ++r) {
      const auto u = decode_controls(std::span<const double>(U.data() + static_cast<std::size_t>(r) * 2 * Hh, 2 * Hh),
                                     st[r].speed, scaling);
      for (int k = 0; k < Hh; ++k) {
        const double* d = dy.data() + static_cast<std::size_t>(r) * 3 * Hh + 3 * k;
        adj[k] = {d[0], d[1], d[2], 0.0};
      }
      const auto dc = rollout_vjp(st[r], u, limits, adj);
      for (int k = 0; k < Hh; ++k) {
        du[static_cast<std::size_t>(r) * 2 * Hh + 2 * k] += scaling.speed * dc[k].speed_cmd;
        du[static_cast<std::size_t>(r) * 2 * Hh + 2 * k + 1] += scaling.yaw * dc[k].yaw_rate;
      }
    }
  });
}

}  // namespace bsim::nn
