#include "bsim/nn/losses.hpp"

#include <algorithm>
#include <cmath>

#include "bsim/common.hpp"

namespace bsim::nn {

std::vector<double> spatial_softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw Error("softmax temperature must be positive");
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp((logits[i] - mx) / temperature);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

Var spatial_cross_entropy(Graph& g, Var x, std::span<const int> targets) {
  const Tensor& X = g.value(x);
  if (X.ndim() != 4) throw Error("spatial_cross_entropy: logits must be [N,C,H,W], got " + X.shape_str());
  const int planes = X.dim(0) * X.dim(1);
  const std::size_t cells = static_cast<std::size_t>(X.dim(2)) * X.dim(3);
  if (targets.size() != static_cast<std::size_t>(planes)) {
    throw Error("spatial_cross_entropy: expected " + std::to_string(planes) + " targets");
  }
  std::vector<int> tg(targets.begin(), targets.end());
  int valid = 0;
  double loss = 0.0;
  for (int p = 0; p < planes; ++p) {
    if (tg[p] < 0) continue;
    if (static_cast<std::size_t>(tg[p]) >= cells) throw Error("spatial_cross_entropy: target cell outside grid");
    const double* l = X.data.data() + p * cells;
    const double mx = *std::max_element(l, l + cells);
    double z = 0.0;
    for (std::size_t k = 0; k < cells; ++k) z += std::exp(l[k] - mx);
    loss += -(l[tg[p]] - mx - std::log(z));
    ++valid;
  }
  if (valid == 0) throw Error("spatial_cross_entropy: no valid targets");
  loss /= valid;
  return g.push(Tensor({1}, loss), {x}, [x, tg, planes, cells, valid](Graph& gr, Var self) {
    const double d = gr.grad(self).data[0] / valid;
    const auto& X = gr.value(x).data;
    auto& dx = gr.grad(x).data;
    for (int p = 0; p < planes; ++p) {
      if (tg[p] < 0) continue;
      const std::span<const double> l(X.data() + p * cells, cells);
      const auto prob = spatial_softmax(l);
      for (std::size_t k = 0; k < cells; ++k) dx[p * cells + k] += d * prob[k];
      dx[p * cells + tg[p]] -= d;
    }
  });
}

Var masked_residual_loss(Graph& g, Var x, std::span<const int> cells,
                         std::span<const std::array<double, 3>> targets) {
  const Tensor& X = g.value(x);
  if (X.ndim() != 4 || X.dim(1) < 4) throw Error("masked_residual_loss: map must be [N,4,H,W], got " + X.shape_str());
  const int N = X.dim(0), C = X.dim(1);
  const std::size_t plane = static_cast<std::size_t>(X.dim(2)) * X.dim(3);
  if (cells.size() != static_cast<std::size_t>(N) || targets.size() != static_cast<std::size_t>(N)) {
    throw Error("masked_residual_loss: one cell and target per sample required");
  }
  std::vector<int> cl(cells.begin(), cells.end());
  std::vector<std::array<double, 3>> tg(targets.begin(), targets.end());
  auto index = [C, plane](int n, int ch, int cell) {
    return (static_cast<std::size_t>(n) * C + ch) * plane + static_cast<std::size_t>(cell);
  };
  std::vector<double> err(static_cast<std::size_t>(N) * 3);
  double loss = 0.0;
  for (int n = 0; n < N; ++n) {
    if (cl[n] < 0 || static_cast<std::size_t>(cl[n]) >= plane) throw Error("masked_residual_loss: cell outside grid");
    for (int k = 0; k < 3; ++k) {
      double e = X.data[index(n, 1 + k, cl[n])] - tg[n][k];
      if (k == 2) e = wrap_angle(e);
      err[n * 3 + k] = e;
      loss += e * e;
    }
  }
  loss /= N;
  return g.push(Tensor({1}, loss), {x}, [x, cl, err, N, index](Graph& gr, Var self) {
    const double d = gr.grad(self).data[0] / N;
    auto& dx = gr.grad(x).data;
    for (int n = 0; n < N; ++n) {
      for (int k = 0; k < 3; ++k) dx[index(n, 1 + k, cl[n])] += 2.0 * err[n * 3 + k] * d;
    }
  });
}

Var l2_traj_loss(Graph& g, Var pred, const Tensor& ref) {
  const Tensor& P = g.value(pred);
  if (P.shape != ref.shape) {
    throw Error("l2_traj_loss: length mismatch " + P.shape_str() + " vs " + ref.shape_str());
  }
  if (P.ndim() != 2 || P.dim(1) % 3 != 0 || P.dim(1) == 0) throw Error("l2_traj_loss: trajectories must be [R, 3H]");
  const int R = P.dim(0), Hh = P.dim(1) / 3;
  if (R == 0) throw Error("l2_traj_loss: no trajectories");
  std::vector<double> err(P.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    double e = P.data[i] - ref.data[i];
    if (i % 3 == 2) e = wrap_angle(e);
    err[i] = e;
    loss += e * e;
  }
  const double denom = static_cast<double>(R) * Hh;
  loss /= denom;
  return g.push(Tensor({1}, loss), {pred}, [pred, err, denom](Graph& gr, Var self) {
    const double d = gr.grad(self).data[0] / denom;
    auto& dx = gr.grad(pred).data;
    for (std::size_t i = 0; i < err.size(); ++i) dx[i] += 2.0 * err[i] * d;
  });
}

}  // namespace bsim::nn
