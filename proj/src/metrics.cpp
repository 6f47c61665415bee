#include "bsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include "bsim/geometry.hpp"

namespace bsim {

FailureRates failure_rates(const EventSummary& ev) {
  FailureRates fr;
  fr.agents = static_cast<int>(ev.agents.size());
  if (fr.agents == 0) return fr;
  std::map<AgentId, std::array<bool, 6>> flags;  // any, coll, off, front, rear, side
  for (const FailureEvent& e : ev.events) {
    auto& f = flags[e.agent];
    f[0] = true;
    if (e.kind == "collision") {
      f[1] = true;
      if (e.type) f[3 + static_cast<int>(*e.type)] = true;
    } else {
      f[2] = true;
    }
  }
  std::array<int, 6> counts{};
  for (const auto& [id, f] : flags) {
    for (int k = 0; k < 6; ++k) counts[k] += f[k] ? 1 : 0;
  }
  const double n = fr.agents;
  fr.fr = 100.0 * counts[0] / n;
  fr.coll_fr = 100.0 * counts[1] / n;
  fr.offroad_fr = 100.0 * counts[2] / n;
  fr.coll_front = 100.0 * counts[3] / n;
  fr.coll_rear = 100.0 * counts[4] / n;
  fr.coll_side = 100.0 * counts[5] / n;
  double frac = 0.0;
  for (const AgentSummary& a : ev.agents) frac += a.steps > 0 ? static_cast<double>(a.offroad_steps) / a.steps : 0.0;
  fr.offroad_fraction = 100.0 * frac / n;
  return fr;
}

FailureRates failure_rates(std::span<const Rollout> rollouts) {
  if (rollouts.empty()) throw Error("failure_rates: no rollouts");
  FailureRates acc;
  for (const Rollout& r : rollouts) {
    const FailureRates f = failure_rates(r.events);
    acc.fr += f.fr;
    acc.coll_fr += f.coll_fr;
    acc.offroad_fr += f.offroad_fr;
    acc.coll_front += f.coll_front;
    acc.coll_rear += f.coll_rear;
    acc.coll_side += f.coll_side;
    acc.offroad_fraction += f.offroad_fraction;
    acc.agents += f.agents;
  }
  const double n = static_cast<double>(rollouts.size());
  acc.fr /= n;
  acc.coll_fr /= n;
  acc.offroad_fr /= n;
  acc.coll_front /= n;
  acc.coll_rear /= n;
  acc.coll_side /= n;
  acc.offroad_fraction /= n;
  return acc;
}

DensityGrid density_grid_for(const SemanticGrid& map, double cell) {
  if (!(cell > 0.0)) throw Error("density grid cell must be positive");
  DensityGrid g;
  g.origin_x = map.origin_x;
  g.origin_y = map.origin_y;
  g.cell = cell;
  g.cols = static_cast<int>(std::ceil(map.cols * map.pixel_size / cell - 1e-9));
  g.rows = static_cast<int>(std::ceil(map.rows * map.pixel_size / cell - 1e-9));
  return g;
}

double DensityProfile::total() const {
  double s = 0.0;
  for (double m : mass) s += m;
  return s;
}

DensityProfile kde_density(std::span<const Vec2> positions, const DensityGrid& grid, double bandwidth,
                           double truncate) {
  if (!(bandwidth > 0.0)) throw Error("kde: bandwidth must be positive");
  DensityProfile p;
  p.grid = grid;
  if (positions.empty()) return p;
  p.mass.assign(static_cast<std::size_t>(grid.rows) * grid.cols, 0.0);
  const double reach = truncate * bandwidth;
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  for (const Vec2& q : positions) {
    const int c0 = std::max(0, static_cast<int>(std::floor((q.x - reach - grid.origin_x) / grid.cell)));
    const int c1 = std::min(grid.cols - 1, static_cast<int>(std::floor((q.x + reach - grid.origin_x) / grid.cell)));
    const int r0 = std::max(0, static_cast<int>(std::floor((q.y - reach - grid.origin_y) / grid.cell)));
    const int r1 = std::min(grid.rows - 1, static_cast<int>(std::floor((q.y + reach - grid.origin_y) / grid.cell)));
    for (int r = r0; r <= r1; ++r) {
      const double dy = grid.origin_y + (r + 0.5) * grid.cell - q.y;
      for (int c = c0; c <= c1; ++c) {
        const double dx = grid.origin_x + (c + 0.5) * grid.cell - q.x;
        const double d2 = dx * dx + dy * dy;
        if (d2 > reach * reach) continue;
        p.mass[static_cast<std::size_t>(r) * grid.cols + c] += std::exp(-d2 * inv);
      }
    }
  }
  const double z = p.total();
  if (!(z > 0.0)) {
    p.mass.clear();
    return p;
  }
  for (double& m : p.mass) m /= z;
  p.normalized = true;
  return p;
}

std::vector<Vec2> rollout_positions(const Rollout& r) {
  std::vector<Vec2> out;
  for (std::size_t t = static_cast<std::size_t>(std::max(r.first_step, 0)); t < r.frames.size(); ++t) {
    for (const AgentState& a : r.frames[t]) out.push_back({a.x, a.y});
  }
  return out;
}

CoverageCounts coverage(std::span<const DensityProfile> profiles, const SemanticGrid& map, double threshold) {
  CoverageCounts out;
  const DensityProfile* ref = nullptr;
  for (const auto& p : profiles) {
    if (p.empty()) continue;
    if (ref && !(ref->grid == p.grid)) throw Error("coverage: profiles use different grids");
    if (!ref) ref = &p;
  }
  if (!ref) return out;
  for (std::size_t i = 0; i < ref->mass.size(); ++i) {
    double m = 0.0;
    for (const auto& p : profiles) {
      if (!p.empty()) m = std::max(m, p.mass[i]);
    }
    if (m <= threshold) continue;
    if (map.drivable_at(ref->grid.center(static_cast<int>(i)))) {
      ++out.drivable;
    } else {
      ++out.non_drivable;
    }
  }
  return out;
}

namespace {

/// Transportation simplex on a spanning-tree basis with block pricing.
class TransportSimplex {
 public:
  TransportSimplex(std::span<const Vec2> xs, std::span<const double> a, std::span<const Vec2> ys,
                   std::span<const double> b)
      : xs_(xs), ys_(ys), m_(static_cast<int>(xs.size())), n_(static_cast<int>(ys.size())) {
    adj_.resize(static_cast<std::size_t>(m_ + n_));
    pot_.resize(adj_.size());
    parent_.resize(adj_.size());
    depth_.resize(adj_.size());
    north_west(a, b);
  }

  double solve() {
    const long long cells = static_cast<long long>(m_) * n_;
    const long long block = std::max<long long>(16, static_cast<long long>(std::sqrt(static_cast<double>(cells))));
    const long long max_iter = 100LL * (m_ + n_) + 10000;
    long long next = 0;
    for (long long iter = 0;; ++iter) {
      if (iter > max_iter) throw Error("emd: transportation simplex did not converge");
      build_tree();
      long long best = -1;
      double best_r = -1e-10;
      long long scanned = 0;
      while (scanned < cells) {
        const long long stop = std::min(cells, scanned + block);
        for (; scanned < stop; ++scanned) {
          const long long k = next;
          next = next + 1 == cells ? 0 : next + 1;
          const int i = static_cast<int>(k / n_), j = static_cast<int>(k % n_);
          const double r = cost(i, j) - pot_[i] - pot_[m_ + j];
          if (r < best_r) {
            best_r = r;
            best = k;
          }
        }
        if (best >= 0) break;
      }
      if (best < 0) break;
      pivot(static_cast<int>(best / n_), static_cast<int>(best % n_));
    }
    double total = 0.0;
    for (const Cell& c : basis_) total += c.flow * cost(c.i, c.j);
    return total;
  }

 private:
  struct Cell {
    int i, j;
    double flow;
  };

  double cost(int i, int j) const {
    const double dx = xs_[i].x - ys_[j].x, dy = xs_[i].y - ys_[j].y;
    return std::sqrt(dx * dx + dy * dy);
  }

  void add_cell(int i, int j, double f) {
    adj_[i].push_back(static_cast<int>(basis_.size()));
    adj_[m_ + j].push_back(static_cast<int>(basis_.size()));
    basis_.push_back({i, j, f});
  }

  void north_west(std::span<const double> a, std::span<const double> b) {
    int i = 0, j = 0;
    double ra = a[0], rb = b[0];
    while (true) {
      const double f = std::max(0.0, std::min(ra, rb));
      add_cell(i, j, f);
      ra -= f;
      rb -= f;
      if (i == m_ - 1 && j == n_ - 1) break;
      if (j == n_ - 1 || (i < m_ - 1 && ra <= rb)) {
        ra = a[++i];
      } else {
        rb = b[++j];
      }
    }
  }

  int other_end(const Cell& c, int node) const { return node < m_ ? m_ + c.j : c.i; }

  void build_tree() {
    std::fill(parent_.begin(), parent_.end(), -2);
    std::deque<int> q{0};
    parent_[0] = -1;
    depth_[0] = 0;
    pot_[0] = 0.0;
    while (!q.empty()) {
      const int u = q.front();
      q.pop_front();
      for (int e : adj_[u]) {
        const int v = other_end(basis_[e], u);
        if (parent_[v] != -2) continue;
        parent_[v] = e;
        depth_[v] = depth_[u] + 1;
        const double c = cost(basis_[e].i, basis_[e].j);
        pot_[v] = c - pot_[u];
        q.push_back(v);
      }
    }
  }

  void pivot(int i, int j) {
    // Path from demand node (m+j) to supply node i through the tree.
    std::vector<int> from_a, from_b;
    int a = m_ + j, b = i;
    while (a != b) {
      if (depth_[a] >= depth_[b]) {
        const int e = parent_[a];
        from_a.push_back(e);
        a = other_end(basis_[e], a);
      } else {
        const int e = parent_[b];
        from_b.push_back(e);
        b = other_end(basis_[e], b);
      }
    }
    std::vector<int> path = std::move(from_a);
    path.insert(path.end(), from_b.rbegin(), from_b.rend());
    int leave = -1;
    double theta = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < path.size(); k += 2) {
      if (basis_[path[k]].flow < theta) {
        theta = basis_[path[k]].flow;
        leave = path[k];
      }
    }
    for (std::size_t k = 0; k < path.size(); ++k) {
      Cell& c = basis_[path[k]];
      c.flow = k % 2 == 0 ? std::max(0.0, c.flow - theta) : c.flow + theta;
    }
    Cell& out = basis_[leave];
    auto drop = [&](int node) {
      auto& v = adj_[node];
      v.erase(std::find(v.begin(), v.end(), leave));
    };
    drop(out.i);
    drop(m_ + out.j);
    out = {i, j, theta};
    adj_[i].push_back(leave);
    adj_[m_ + j].push_back(leave);
  }

  std::span<const Vec2> xs_, ys_;
  int m_, n_;
  std::vector<Cell> basis_;
  std::vector<std::vector<int>> adj_;
  std::vector<double> pot_;
  std::vector<int> parent_, depth_;
};

}  // namespace

double emd_points(std::span<const Vec2> xs, std::span<const double> a, std::span<const Vec2> ys,
                  std::span<const double> b) {
  if (xs.size() != a.size() || ys.size() != b.size()) throw Error("emd: point/mass size mismatch");
  if (xs.empty() || ys.empty()) throw Error("emd: empty support");
  double sa = 0.0, sb = 0.0;
  for (double v : a) {
    if (!(v >= 0.0)) throw Error("emd: negative mass");
    sa += v;
  }
  for (double v : b) {
    if (!(v >= 0.0)) throw Error("emd: negative mass");
    sb += v;
  }
  if (std::abs(sa - sb) > 1e-9 * std::max(1.0, sa)) throw Error("emd: totals differ");
  return TransportSimplex(xs, a, ys, b).solve();
}

double emd(const DensityProfile& p, const DensityProfile& q) {
  if (!p.normalized || !q.normalized || std::abs(p.total() - 1.0) > 1e-9 || std::abs(q.total() - 1.0) > 1e-9) {
    throw Error("emd: profiles must be normalized");
  }
  if (!(p.grid == q.grid) || p.mass.size() != q.mass.size()) throw Error("emd: profiles use different grids");
  if (p.mass == q.mass) return 0.0;
  // Mass shared by both profiles stays in place.
  std::vector<Vec2> xs, ys;
  std::vector<double> a, b;
  for (std::size_t i = 0; i < p.mass.size(); ++i) {
    const double d = p.mass[i] - q.mass[i];
    if (d > 0.0) {
      xs.push_back(p.grid.center(static_cast<int>(i)));
      a.push_back(d);
    } else if (d < 0.0) {
      ys.push_back(p.grid.center(static_cast<int>(i)));
      b.push_back(-d);
    }
  }
  if (xs.empty() || ys.empty()) return 0.0;
  double sa = 0.0, sb = 0.0;
  for (double v : a) sa += v;
  for (double v : b) sb += v;
  // Rebalance rounding so both sides carry the same total.
  const double target = 0.5 * (sa + sb);
  for (double& v : a) v *= target / sa;
  for (double& v : b) v *= target / sb;
  return emd_points(xs, a, ys, b);
}

double diversity(std::span<const DensityProfile> profiles) {
  std::vector<const DensityProfile*> ps;
  for (const auto& p : profiles) {
    if (!p.empty()) ps.push_back(&p);
  }
  if (ps.size() < 2) return 0.0;
  double sum = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    for (std::size_t j = i + 1; j < ps.size(); ++j) {
      sum += emd(*ps[i], *ps[j]);
      ++pairs;
    }
  }
  return sum / pairs;
}

void Histogram::add(double v) {
  if (!std::isfinite(v)) return;
  const int n = static_cast<int>(counts.size());
  const int k = std::clamp(static_cast<int>(std::floor((v - lo) / bin_width())), 0, n - 1);
  counts[static_cast<std::size_t>(k)] += 1.0;
}

double wasserstein_1d(const Histogram& a, const Histogram& b) {
  if (a.counts.size() != b.counts.size() || a.lo != b.lo || a.hi != b.hi) throw Error("histogram layouts differ");
  double ta = 0.0, tb = 0.0;
  for (double v : a.counts) ta += v;
  for (double v : b.counts) tb += v;
  if (ta == 0.0 && tb == 0.0) return 0.0;
  if (ta == 0.0 || tb == 0.0) throw Error("wasserstein_1d: one histogram is empty");
  double ca = 0.0, cb = 0.0, w = 0.0;
  for (std::size_t i = 0; i < a.counts.size(); ++i) {
    ca += a.counts[i] / ta;
    cb += b.counts[i] / tb;
    w += std::abs(ca - cb);
  }
  return w * a.bin_width();
}

void accumulate_profile(DrivingProfile& p, std::span<const Frame> frames, int first, int last, double dt) {
  std::map<AgentId, std::vector<std::pair<int, AgentState>>> tracks;
  for (int t = std::max(first, 0); t <= last && t < static_cast<int>(frames.size()); ++t) {
    for (const AgentState& a : frames[t]) tracks[a.id].push_back({t, a});
  }
  for (const auto& [id, tr] : tracks) {
    for (std::size_t k = 0; k < tr.size(); ++k) {
      const AgentState& s0 = tr[k].second;
      p.speed.add(s0.speed);
      if (k + 1 < tr.size() && tr[k + 1].first == tr[k].first + 1) {
        const AgentState& s1 = tr[k + 1].second;
        p.lon_acc.add(std::abs(s1.speed - s0.speed) / dt);
        p.lat_acc.add(std::abs(s0.speed * wrap_angle(s1.heading - s0.heading) / dt));
        if (k + 2 < tr.size() && tr[k + 2].first == tr[k].first + 2) {
          const AgentState& s2 = tr[k + 2].second;
          p.jerk.add(std::abs(s2.speed - 2.0 * s1.speed + s0.speed) / (dt * dt));
        }
      }
    }
  }
}

DatasetMetrics dataset_metrics(std::span<const Rollout> rollouts, std::span<const SceneLog* const> logs) {
  if (rollouts.size() != logs.size()) throw Error("dataset_metrics: one log per rollout required");
  if (rollouts.empty()) throw Error("dataset_metrics: no rollouts");
  DrivingProfile sim, ref;
  DatasetMetrics out;
  double ade_sum = 0.0, fde_sum = 0.0;
  int scenes = 0;
  for (std::size_t s = 0; s < rollouts.size(); ++s) {
    const Rollout& r = rollouts[s];
    const SceneLog& log = *logs[s];
    const int r_end = static_cast<int>(r.frames.size()) - 1;
    const int l_end = static_cast<int>(log.frames.size()) - 1;
    if (r_end > l_end) out.horizon_mismatch = true;
    const int last = std::min(r_end, l_end);
    accumulate_profile(sim, r.frames, r.first_step, last, log.dt);
    accumulate_profile(ref, log.frames, r.first_step, last, log.dt);
    double ade = 0.0, fde = 0.0;
    int agents = 0;
    if (r.first_step >= static_cast<int>(r.frames.size())) continue;
    for (const AgentState& a0 : r.frames[r.first_step]) {
      double sum = 0.0, final_gap = 0.0;
      int n = 0;
      for (int t = r.first_step + 1; t <= last; ++t) {
        const AgentState* x = find_agent(r.frames[t], a0.id);
        const AgentState* y = find_agent(log.frames[t], a0.id);
        if (!x || !y) continue;
        final_gap = std::hypot(x->x - y->x, x->y - y->y);
        sum += final_gap;
        ++n;
      }
      if (n == 0) continue;
      ade += sum / n;
      fde += final_gap;
      ++agents;
    }
    if (agents == 0) continue;
    ade_sum += ade / agents;
    fde_sum += fde / agents;
    ++scenes;
  }
  auto norm = [](const Histogram& a, const Histogram& b) {
    return wasserstein_1d(a, b) / (a.bin_width() * static_cast<double>(a.counts.size()));
  };
  out.speed = norm(sim.speed, ref.speed);
  out.lon_acc = norm(sim.lon_acc, ref.lon_acc);
  out.lat_acc = norm(sim.lat_acc, ref.lat_acc);
  out.jerk = norm(sim.jerk, ref.jerk);
  if (scenes > 0) {
    out.sade = ade_sum / scenes;
    out.sfde = fde_sum / scenes;
  }
  return out;
}

std::vector<AgentState> ou_perturb(std::span<const AgentState> traj, double theta, double sigma, double dt,
                                   std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw Error("ou_perturb: sigma must be >= 0");
  std::vector<AgentState> out(traj.begin(), traj.end());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  double nx = 0.0, ny = 0.0;
  const double s = sigma * std::sqrt(dt);
  for (std::size_t k = 1; k < out.size(); ++k) {
    const double ex = normal(rng), ey = normal(rng);
    nx = nx - theta * nx * dt + s * ex;
    ny = ny - theta * ny * dt + s * ey;
    out[k].x += nx;
    out[k].y += ny;
  }
  return out;
}

std::vector<Frame> ou_perturb_frames(std::span<const Frame> frames, int first, double theta, double sigma, double dt,
                                     std::uint64_t seed) {
  std::vector<Frame> out(frames.begin(), frames.end());
  std::map<AgentId, std::vector<std::pair<int, std::size_t>>> where;
  for (int t = std::max(first, 0); t < static_cast<int>(out.size()); ++t) {
    for (std::size_t i = 0; i < out[t].size(); ++i) where[out[t][i].id].push_back({t, i});
  }
  for (const auto& [id, refs] : where) {
    std::vector<AgentState> tr;
    for (const auto& [t, i] : refs) tr.push_back(out[t][i]);
    const auto p = ou_perturb(tr, theta, sigma, dt, mix_seed(seed, id));
    for (std::size_t k = 0; k < refs.size(); ++k) out[refs[k].first][refs[k].second] = p[k];
  }
  return out;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["label"] = label;
  j["policy"] = policy;
  j["status"] = status;
  j["scenes"] = scenes;
  j["trials"] = trials;
  j["failure"] = {{"fr", failures.fr},
                  {"coll_fr", failures.coll_fr},
                  {"offroad_fr", failures.offroad_fr},
                  {"coll_front", failures.coll_front},
                  {"coll_rear", failures.coll_rear},
                  {"coll_side", failures.coll_side},
                  {"offroad_fraction", failures.offroad_fraction},
                  {"agents", failures.agents}};
  j["coverage"] = {{"drivable", coverage_drivable}, {"non_drivable", coverage_non_drivable}};
  j["diversity"] = diversity;
  j["dataset"] = {{"speed", dataset.speed},     {"lon_acc", dataset.lon_acc}, {"lat_acc", dataset.lat_acc},
                  {"jerk", dataset.jerk},       {"sade", dataset.sade},       {"sfde", dataset.sfde},
                  {"horizon_mismatch", dataset.horizon_mismatch}};
  j["likelihood"] = likelihood ? nlohmann::json(*likelihood) : nlohmann::json(nullptr);
  return j;
}

std::string MetricReport::csv_header() {
  return "label,policy,status,scenes,trials,fr,coll_fr,offroad_fr,coll_front,coll_rear,coll_side,offroad_fraction,"
         "coverage_drivable,coverage_non_drivable,diversity,speed,lon_acc,lat_acc,jerk,sade,sfde,likelihood";
}

std::string MetricReport::csv_row() const {
  std::ostringstream o;
  const auto d = [](double v) { return format_double(v); };
  o << label << ',' << policy << ',' << status << ',' << scenes << ',' << trials << ',' << d(failures.fr) << ','
    << d(failures.coll_fr) << ',' << d(failures.offroad_fr) << ',' << d(failures.coll_front) << ','
    << d(failures.coll_rear) << ',' << d(failures.coll_side) << ',' << d(failures.offroad_fraction) << ','
    << d(coverage_drivable) << ',' << d(coverage_non_drivable) << ',' << d(diversity) << ',' << d(dataset.speed)
    << ',' << d(dataset.lon_acc) << ',' << d(dataset.lat_acc) << ',' << d(dataset.jerk) << ',' << d(dataset.sade)
    << ',' << d(dataset.sfde) << ',' << (likelihood ? d(*likelihood) : std::string());
  return o.str();
}

MetricReport evaluate_rollouts(const std::vector<std::vector<Rollout>>& trials,
                               std::span<const SceneLog* const> logs, std::span<const MapData* const> maps,
                               const EvalOptions& opt) {
  if (trials.size() != logs.size() || trials.size() != maps.size()) throw Error("evaluate: scene count mismatch");
  MetricReport rep;
  rep.scenes = static_cast<int>(trials.size());
  std::vector<Rollout> all;
  std::vector<const SceneLog*> all_logs;
  double cov_d = 0.0, cov_n = 0.0, div = 0.0;
  for (std::size_t s = 0; s < trials.size(); ++s) {
    if (trials[s].empty()) throw Error("evaluate: scene without rollouts");
    rep.trials = std::max(rep.trials, static_cast<int>(trials[s].size()));
    if (rep.policy.empty()) rep.policy = trials[s].front().policy;
    const DensityGrid grid = density_grid_for(maps[s]->grid, opt.kde_cell);
    std::vector<DensityProfile> profiles;
    for (const Rollout& r : trials[s]) {
      profiles.push_back(kde_density(rollout_positions(r), grid, opt.kde_bandwidth));
      all.push_back(r);
      all_logs.push_back(logs[s]);
    }
    const CoverageCounts c = coverage(profiles, maps[s]->grid, opt.coverage_threshold);
    cov_d += c.drivable;
    cov_n += c.non_drivable;
    div += diversity(profiles);
  }
  const double n = static_cast<double>(trials.size());
  rep.coverage_drivable = cov_d / n;
  rep.coverage_non_drivable = cov_n / n;
  rep.diversity = div / n;
  rep.failures = failure_rates(all);
  rep.dataset = dataset_metrics(all, all_logs);
  return rep;
}

namespace {

std::string time_color(double f) {
  f = std::clamp(f, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(40 + 215 * f));
  const int g = static_cast<int>(std::lround(80 + 60 * (1.0 - std::abs(2.0 * f - 1.0))));
  const int b = static_cast<int>(std::lround(255 - 215 * f));
  std::ostringstream o;
  o << '#' << std::hex << std::setfill('0') << std::setw(2) << r << std::setw(2) << g << std::setw(2) << b;
  return o.str();
}

}  // namespace

std::string plot_rollout_svg(const Rollout& r, const SemanticGrid& grid) {
  const double scale = 4.0;  // svg units per metre
  const double W = grid.cols * grid.pixel_size * scale;
  const double H = grid.rows * grid.pixel_size * scale;
  std::ostringstream o;
  o << std::fixed << std::setprecision(2);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"#f4f1ea\"/>\n<g fill=\"#bfbfbf\">\n";
  const double px = grid.pixel_size * scale;
  for (int row = 0; row < grid.rows; ++row) {
    int col = 0;
    while (col < grid.cols) {
      if (grid.at(kDrivable, row, col) <= 0.5f) {
        ++col;
        continue;
      }
      int end = col;
      while (end < grid.cols && grid.at(kDrivable, row, end) > 0.5f) ++end;
      o << "<rect x=\"" << col * px << "\" y=\"" << H - (row + 1) * px << "\" width=\"" << (end - col) * px
        << "\" height=\"" << px << "\"/>\n";
      col = end;
    }
  }
  o << "</g>\n<g stroke-width=\"1.5\" fill=\"none\">\n";
  const auto sx = [&](double x) { return (x - grid.origin_x) * scale; };
  const auto sy = [&](double y) { return H - (y - grid.origin_y) * scale; };
  const int first = std::max(r.first_step, 0);
  const int last = static_cast<int>(r.frames.size()) - 1;
  const double span = std::max(1, last - first);
  for (int t = first; t < last; ++t) {
    const std::string color = time_color((t - first) / span);
    for (const AgentState& a : r.frames[t]) {
      const AgentState* b = find_agent(r.frames[t + 1], a.id);
      if (!b) continue;
      o << "<line x1=\"" << sx(a.x) << "\" y1=\"" << sy(a.y) << "\" x2=\"" << sx(b->x) << "\" y2=\"" << sy(b->y)
        << "\" stroke=\"" << color << "\"/>\n";
    }
  }
  o << "</g>\n<g fill=\"none\" stroke=\"#202020\" stroke-width=\"1\">\n";
  if (first <= last) {
    for (const AgentState& a : r.frames[first]) {
      const auto c = box_corners(a);
      o << "<polygon points=\"";
      for (const Vec2& p : c) o << sx(p.x) << ',' << sy(p.y) << ' ';
      o << "\"/>\n";
    }
  }
  o << "</g>\n</svg>\n";
  return o.str();
}

std::string plot_series_svg(const std::string& title, const std::vector<double>& x,
                            const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  const double W = 640, H = 400, L = 60, R = 150, T = 40, B = 40;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!x.empty()) {
    x0 = *std::min_element(x.begin(), x.end());
    x1 = *std::max_element(x.begin(), x.end());
  }
  bool any = false;
  for (const auto& [name, ys] : series) {
    for (double v : ys) {
      if (!std::isfinite(v)) continue;
      y0 = any ? std::min(y0, v) : v;
      y1 = any ? std::max(y1, v) : v;
      any = true;
    }
  }
  if (x1 <= x0) x1 = x0 + 1.0;
  if (y1 <= y0) y1 = y0 + 1.0;
  const auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
  const auto py = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ostringstream o;
  o << std::setprecision(6);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << L << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<g font-family=\"sans-serif\" font-size=\"10\">\n";
  o << "<text x=\"" << L << "\" y=\"" << H - B + 14 << "\">" << x0 << "</text>\n";
  o << "<text x=\"" << W - R << "\" y=\"" << H - B + 14 << "\" text-anchor=\"end\">" << x1 << "</text>\n";
  o << "<text x=\"" << L - 4 << "\" y=\"" << H - B << "\" text-anchor=\"end\">" << y0 << "</text>\n";
  o << "<text x=\"" << L - 4 << "\" y=\"" << T + 4 << "\" text-anchor=\"end\">" << y1 << "</text>\n</g>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % 6];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    const auto& ys = series[s].second;
    for (std::size_t i = 0; i < std::min(x.size(), ys.size()); ++i) {
      if (std::isfinite(ys[i])) o << px(x[i]) << ',' << py(ys[i]) << ' ';
    }
    o << "\"/>\n";
    o << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * (s + 1) << "\" font-family=\"sans-serif\" "
      << "font-size=\"11\" fill=\"" << color << "\">" << series[s].first << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace bsim
