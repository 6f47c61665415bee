#include "bsim/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "bsim/log_format.hpp"
#include "bsim/nn/losses.hpp"
#include "bsim/nn/optim.hpp"

namespace bsim {

using nn::Graph;
using nn::Tensor;
using nn::Var;

Dataset build_dataset(std::vector<SceneLog> logs, int stride, int horizon, const RasterConfig& raster) {
  Dataset d;
  d.logs = std::move(logs);
  std::map<std::string, int> map_index;
  for (std::size_t i = 0; i < d.logs.size(); ++i) {
    const std::string key = serialize_map_spec(d.logs[i].map);
    auto it = map_index.find(key);
    if (it == map_index.end()) {
      it = map_index.emplace(key, static_cast<int>(d.maps.size())).first;
      d.maps.push_back(gen_map(d.logs[i].map));
    }
    d.map_of_log.push_back(it->second);
    SampleStats st;
    auto s = extract_samples(d.logs[i], stride, horizon, raster, &st, static_cast<int>(i));
    d.stats.anchors += st.anchors;
    d.stats.kept += st.kept;
    d.stats.dropped_outside += st.dropped_outside;
    d.stats.too_short = d.stats.too_short || st.too_short;
    d.samples.insert(d.samples.end(), s.begin(), s.end());
  }
  return d;
}

Dataset take_samples(const Dataset& d, std::size_t n) {
  Dataset out = d;
  if (out.samples.size() > n) out.samples.resize(n);
  return out;
}

std::string LossCurves::to_csv() const {
  std::ostringstream o;
  o << "split,iteration";
  std::vector<std::string> names;
  for (const auto& [k, v] : train) names.push_back(k);
  for (const auto& n : names) o << ',' << n;
  o << '\n';
  for (std::size_t i = 0; i < train_iter.size(); ++i) {
    o << "train," << train_iter[i];
    for (const auto& n : names) o << ',' << format_double(train.at(n)[i]);
    o << '\n';
  }
  for (std::size_t i = 0; i < val_iter.size(); ++i) {
    o << "val," << val_iter[i];
    for (const auto& n : names) {
      const auto it = val.find(n);
      o << ',' << (it != val.end() && i < it->second.size() ? format_double(it->second[i]) : "");
    }
    o << '\n';
  }
  return o.str();
}

namespace {

struct Batch {
  Tensor x;
  std::vector<double> speeds;
  std::vector<int> goal_targets;  // N*4, channel 0 only
  std::vector<int> goal_cells;
  std::vector<std::array<double, 3>> goal_res;
  std::vector<GoalPose> goals;
  std::vector<AgentState> ego_starts;
  Tensor ego_ref;
  std::vector<int> nb_rows;
  std::vector<AgentState> nb_local;
  Tensor nb_ref;
  std::vector<int> occ_targets;  // N*T
};

Batch make_batch(const Dataset& d, std::span<const int> idx, const ModelConfig& cfg, int max_nb) {
  const RasterConfig& rc = cfg.raster;
  const int N = static_cast<int>(idx.size());
  const int S = rc.size, C = rc.channels(), H = cfg.horizon, T = cfg.occ_steps;
  const std::size_t per = static_cast<std::size_t>(C) * S * S;
  Batch b;
  b.x = Tensor({N, C, S, S});
  b.ego_ref = Tensor({N, 3 * H});
  std::vector<double> nb_ref;
  GoalMap geom;
  geom.raster = rc;
  OccupancyPrediction occ_geom;
  occ_geom.raster = rc;
  occ_geom.size = cfg.occ_size();
  for (int n = 0; n < N; ++n) {
    const Sample& s = d.samples.at(static_cast<std::size_t>(idx[n]));
    const SceneLog& log = d.logs[s.log_index];
    const MapData& map = d.maps[d.map_of_log[s.log_index]];
    rasterize_into(std::span<double>(b.x.data.data() + n * per, per), log.frames, map.grid, s.ego, s.t, rc);
    b.speeds.push_back(s.ego_state.speed);
    const int hz = std::min<int>(H, static_cast<int>(s.future.size()));
    const AgentState& gp = s.future[hz - 1];
    const int cell = geom.cell_of(gp.x, gp.y);
    const int row = cell / S, col = cell % S;
    const Vec2 c = rc.local_from_pixel(row, col);
    b.goal_cells.push_back(cell);
    b.goal_res.push_back({gp.x - c.x, gp.y - c.y, gp.heading});
    for (int ch = 0; ch < 4; ++ch) b.goal_targets.push_back(ch == 0 ? cell : -1);
    GoalPose goal;
    goal.x = gp.x;
    goal.y = gp.y;
    goal.heading = gp.heading;
    goal.cell = cell;
    b.goals.push_back(goal);
    AgentState start = s.ego_state;
    start.x = start.y = start.heading = 0.0;
    b.ego_starts.push_back(start);
    for (int k = 0; k < H; ++k) {
      const AgentState& f = s.future[std::min<std::size_t>(k, s.future.size() - 1)];
      b.ego_ref.data[static_cast<std::size_t>(n) * 3 * H + 3 * k] = f.x;
      b.ego_ref.data[static_cast<std::size_t>(n) * 3 * H + 3 * k + 1] = f.y;
      b.ego_ref.data[static_cast<std::size_t>(n) * 3 * H + 3 * k + 2] = f.heading;
    }
    for (int k = 0; k < T; ++k) {
      if (k < static_cast<int>(s.future.size())) {
        b.occ_targets.push_back(occ_geom.cell_of(s.future[k].x, s.future[k].y));
      } else {
        b.occ_targets.push_back(-1);
      }
    }
    // Neighbours visible at t with a full future.
    if (max_nb > 0) {
      const Pose2 ego = s.ego_state.pose();
      std::vector<std::pair<double, AgentState>> cand;
      for (const AgentState& a : log.frames[s.t]) {
        if (a.id == s.ego) continue;
        if (s.t + H >= static_cast<int>(log.frames.size())) break;
        if (!find_agent(log.frames[s.t + H], a.id)) continue;
        const Pose2 l = to_local(ego, a.pose());
        if (!rc.local_in_window({l.x, l.y})) continue;
        cand.push_back({std::hypot(l.x, l.y), a});
      }
      std::sort(cand.begin(), cand.end(), [](const auto& p, const auto& q) {
        return p.first < q.first || (p.first == q.first && p.second.id < q.second.id);
      });
      if (static_cast<int>(cand.size()) > max_nb) cand.resize(static_cast<std::size_t>(max_nb));
      for (const auto& [dist, a] : cand) {
        AgentState loc = a;
        const Pose2 l = to_local(ego, a.pose());
        loc.x = l.x;
        loc.y = l.y;
        loc.heading = l.heading;
        b.nb_rows.push_back(n);
        b.nb_local.push_back(loc);
        for (int k = 1; k <= H; ++k) {
          const AgentState* f = find_agent(log.frames[s.t + k], a.id);
          const Pose2 fl = to_local(ego, f->pose());
          nb_ref.push_back(fl.x);
          nb_ref.push_back(fl.y);
          nb_ref.push_back(fl.heading);
        }
      }
    }
  }
  b.nb_ref = Tensor({static_cast<int>(b.nb_local.size()), 3 * H}, std::move(nb_ref));
  return b;
}

struct BitsLosses {
  Var goal, policy, predictor;
  bool has_predictor = false;
};

BitsLosses bits_losses(Graph& gg, Graph& gp, const BitsModels& m, const Batch& b) {
  BitsLosses L;
  const Var xg = gg.input(b.x);
  const Var y = m.goal.forward(gg, xg, b.speeds);
  const Var ce = nn::spatial_cross_entropy(gg, y, b.goal_targets);
  const Var res = nn::masked_residual_loss(gg, y, b.goal_cells, b.goal_res);
  L.goal = nn::weighted_sum(gg, {ce, res}, {1.0, 1.0});

  const Var xp = gp.input(b.x);
  const EncoderOut e = m.policy.encode(gp, xp);
  std::vector<int> rows(b.goals.size());
  std::iota(rows.begin(), rows.end(), 0);
  const Var raw = m.policy.policy_head(gp, e, rows, b.goals, b.speeds);
  const Var traj = nn::control_rollout(gp, raw, b.ego_starts, m.policy.cfg.limits, m.policy.cfg.scaling);
  L.policy = nn::l2_traj_loss(gp, traj, b.ego_ref);
  if (!b.nb_local.empty()) {
    const Var rawn = m.policy.predictor_head(gp, e, b.nb_rows, b.nb_local);
    const Var trajn = nn::control_rollout(gp, rawn, b.nb_local, m.policy.cfg.limits, m.policy.cfg.scaling);
    L.predictor = nn::l2_traj_loss(gp, trajn, b.nb_ref);
    L.has_predictor = true;
  }
  return L;
}

void check_finite(double v, const std::string& what, int iter) {
  if (!std::isfinite(v)) {
    throw Error("training diverged: " + what + " loss is " + format_double(v) + " at iteration " +
                std::to_string(iter));
  }
}

/// Epoch-shuffled index stream.
class Sampler {
 public:
  Sampler(std::size_t n, std::uint64_t seed) : rng_(seed), order_(n) { std::iota(order_.begin(), order_.end(), 0); }
  std::vector<int> next(int batch) {
    std::vector<int> out;
    const int want = std::min<int>(batch, static_cast<int>(order_.size()));
    while (static_cast<int>(out.size()) < want) {
      if (pos_ == 0) std::shuffle(order_.begin(), order_.end(), rng_);
      out.push_back(order_[pos_]);
      pos_ = (pos_ + 1) % order_.size();
    }
    return out;
  }

 private:
  std::mt19937_64 rng_;
  std::vector<int> order_;
  std::size_t pos_ = 0;
};

std::vector<std::vector<int>> val_chunks(const Dataset& d, int max_samples, int batch) {
  std::vector<std::vector<int>> chunks;
  const int n = std::min<int>(max_samples, static_cast<int>(d.samples.size()));
  for (int i = 0; i < n; i += batch) {
    std::vector<int> c;
    for (int k = i; k < std::min(n, i + batch); ++k) c.push_back(k);
    chunks.push_back(std::move(c));
  }
  return chunks;
}

bool all_below(const std::map<std::string, double>& cur, const std::map<std::string, double>& init, double ratio) {
  for (const auto& [k, v] : init) {
    const auto it = cur.find(k);
    if (it == cur.end() || !(it->second < ratio * v)) return false;
  }
  return true;
}

void require_data(const Dataset& train, const Dataset& val) {
  if (train.samples.empty()) throw Error("training: empty train split");
  if (val.samples.empty()) throw Error("training: empty validation split");
}

/// Shared loop: `step` performs one update and returns named train losses,
/// `evaluate` returns named validation losses, `snapshot(name)` stores the
/// parameters that own loss `name`.
template <typename Step, typename Eval, typename Snap>
void run_loop(const TrainConfig& tc, Step step, Eval evaluate, Snap snapshot, TrainReport& rep,
              const std::string& label) {
  auto record_val = [&](int it) {
    const auto v = evaluate();
    rep.curves.val_iter.push_back(it);
    for (const auto& [k, x] : v) {
      check_finite(x, "validation " + k, it);
      rep.curves.val[k].push_back(x);
      if (!rep.best_val.count(k) || x < rep.best_val[k]) {
        rep.best_val[k] = x;
        rep.best_iter[k] = it;
        snapshot(k);
      }
    }
    return v;
  };
  rep.initial_val = record_val(0);
  for (int it = 1; it <= tc.iterations; ++it) {
    const auto tl = step(it);
    rep.curves.train_iter.push_back(it);
    for (const auto& [k, x] : tl) {
      check_finite(x, k, it);
      rep.curves.train[k].push_back(x);
    }
    rep.iterations_run = it;
    if (it % tc.val_every == 0 || it == tc.iterations) {
      const auto v = record_val(it);
      if (tc.verbose) {
        std::ostringstream o;
        o << label << " iter " << it;
        for (const auto& [k, x] : v) o << ' ' << k << '=' << x;
        log_info(o.str());
      }
      if (tc.stop_ratio > 0.0 && all_below(v, rep.initial_val, tc.stop_ratio)) break;
    }
  }
}

}  // namespace

std::map<std::string, double> evaluate_bits(const BitsModels& m, const Dataset& d, int max_samples, int max_nb) {
  double goal = 0, pol = 0, pred = 0;
  int n = 0, np = 0;
  for (const auto& chunk : val_chunks(d, max_samples, 50)) {
    const Batch b = make_batch(d, chunk, m.goal.cfg, max_nb);
    Graph gg(m.goal.params), gp(m.policy.params);
    const BitsLosses L = bits_losses(gg, gp, m, b);
    const double w = static_cast<double>(chunk.size());
    goal += w * gg.value(L.goal).data[0];
    pol += w * gp.value(L.policy).data[0];
    n += static_cast<int>(chunk.size());
    if (L.has_predictor) {
      pred += static_cast<double>(b.nb_local.size()) * gp.value(L.predictor).data[0];
      np += static_cast<int>(b.nb_local.size());
    }
  }
  std::map<std::string, double> out{{"goal", goal / n}, {"policy", pol / n}};
  if (np > 0) out["predictor"] = pred / np;
  return out;
}

BitsModels train_bits(const Dataset& train, const Dataset& val, const ModelConfig& cfg, const TrainConfig& tc,
                      TrainReport* report) {
  require_data(train, val);
  BitsModels m{GoalNet(cfg), PolicyPredictorNet(cfg)};
  BitsModels best = m;
  nn::AdamState ag, ap;
  ag.lr = ap.lr = tc.lr;
  Sampler sampler(train.samples.size(), mix_seed(tc.seed, 11));
  TrainReport rep;
  log_info("train_bits: " + std::to_string(train.samples.size()) + " samples, goal net " +
           std::to_string(m.goal.params.count()) + " params, policy/predictor " +
           std::to_string(m.policy.params.count()) + " params");
  auto step = [&](int) {
    const auto idx = sampler.next(tc.batch);
    const Batch b = make_batch(train, idx, cfg, tc.max_neighbours);
    m.goal.params.zero_grad();
    m.policy.params.zero_grad();
    Graph gg(&m.goal.params), gp(&m.policy.params);
    const BitsLosses L = bits_losses(gg, gp, m, b);
    std::map<std::string, double> out{{"goal", gg.value(L.goal).data[0]}, {"policy", gp.value(L.policy).data[0]}};
    for (const auto& [k, v] : out) check_finite(v, k, static_cast<int>(ag.step));
    gg.backward(L.goal);
    Var total = L.policy;
    if (L.has_predictor) {
      out["predictor"] = gp.value(L.predictor).data[0];
      total = nn::weighted_sum(gp, {L.policy, L.predictor}, {1.0, 1.0});
    }
    gp.backward(total);
    nn::adam_step(m.goal.params, ag);
    nn::adam_step(m.policy.params, ap);
    return out;
  };
  auto evaluate = [&]() { return evaluate_bits(m, val, tc.max_val_samples, tc.max_neighbours); };
  // The policy and predictor share one parameter set, so they are selected
  // on their summed validation loss.
  double best_pp = std::numeric_limits<double>::infinity();
  auto snapshot = [&](const std::string& k) {
    if (k == "goal") best.goal.params.copy_values_from(m.goal.params);
  };
  auto evaluate_pp = [&]() {
    auto v = evaluate();
    const double pp = v["policy"] + (v.count("predictor") ? v["predictor"] : 0.0);
    if (pp < best_pp) {
      best_pp = pp;
      best.policy.params.copy_values_from(m.policy.params);
    }
    return v;
  };
  run_loop(tc, step, evaluate_pp, snapshot, rep, "train_bits");
  rep.skipped_steps = ag.skipped + ap.skipped;
  if (report) *report = std::move(rep);
  return best;
}

double evaluate_occupancy(const OccupancyNet& m, const Dataset& d, int max_samples) {
  double total = 0.0;
  int n = 0;
  for (const auto& chunk : val_chunks(d, max_samples, 50)) {
    const Batch b = make_batch(d, chunk, m.cfg, 0);
    if (std::all_of(b.occ_targets.begin(), b.occ_targets.end(), [](int t) { return t < 0; })) continue;
    Graph g(m.params);
    const Var y = m.forward(g, g.input(b.x), b.speeds);
    total += static_cast<double>(chunk.size()) * g.value(nn::spatial_cross_entropy(g, y, b.occ_targets)).data[0];
    n += static_cast<int>(chunk.size());
  }
  if (n == 0) throw Error("evaluate_occupancy: no sample has a future cell inside the grid");
  return total / n;
}

OccupancyNet train_occupancy(const Dataset& train, const Dataset& val, const ModelConfig& cfg, const TrainConfig& tc,
                             TrainReport* report) {
  require_data(train, val);
  OccupancyNet m(cfg);
  OccupancyNet best = m;
  nn::AdamState st;
  st.lr = tc.lr;
  Sampler sampler(train.samples.size(), mix_seed(tc.seed, 12));
  TrainReport rep;
  log_info("train_occupancy: " + std::to_string(train.samples.size()) + " samples, " +
           std::to_string(m.params.count()) + " params");
  auto step = [&](int) {
    const Batch b = make_batch(train, sampler.next(tc.batch), cfg, 0);
    m.params.zero_grad();
    Graph g(&m.params);
    const Var y = m.forward(g, g.input(b.x), b.speeds);
    const Var loss = nn::spatial_cross_entropy(g, y, b.occ_targets);
    const double v = g.value(loss).data[0];
    check_finite(v, "occupancy", static_cast<int>(st.step));
    g.backward(loss);
    nn::adam_step(m.params, st);
    return std::map<std::string, double>{{"occupancy", v}};
  };
  auto evaluate = [&]() {
    return std::map<std::string, double>{{"occupancy", evaluate_occupancy(m, val, tc.max_val_samples)}};
  };
  auto snapshot = [&](const std::string&) { best.params.copy_values_from(m.params); };
  run_loop(tc, step, evaluate, snapshot, rep, "train_occupancy");
  rep.skipped_steps = st.skipped;
  if (report) *report = std::move(rep);
  return best;
}

namespace {

double bc_loss_value(Graph& g, const BcNet& m, const Batch& b, Var* out) {
  const Var raw = m.forward(g, g.input(b.x), b.speeds);
  const Var traj = nn::control_rollout(g, raw, b.ego_starts, m.cfg.limits, m.cfg.scaling);
  const Var loss = nn::l2_traj_loss(g, traj, b.ego_ref);
  if (out) *out = loss;
  return g.value(loss).data[0];
}

}  // namespace

BcNet train_bc(const Dataset& train, const Dataset& val, const ModelConfig& cfg, const TrainConfig& tc,
               TrainReport* report) {
  require_data(train, val);
  BcNet m(cfg);
  BcNet best = m;
  nn::AdamState st;
  st.lr = tc.lr;
  Sampler sampler(train.samples.size(), mix_seed(tc.seed, 13));
  TrainReport rep;
  auto step = [&](int) {
    const Batch b = make_batch(train, sampler.next(tc.batch), cfg, 0);
    m.params.zero_grad();
    Graph g(&m.params);
    Var loss;
    const double v = bc_loss_value(g, m, b, &loss);
    check_finite(v, "bc", static_cast<int>(st.step));
    g.backward(loss);
    nn::adam_step(m.params, st);
    return std::map<std::string, double>{{"bc", v}};
  };
  auto evaluate = [&]() {
    double total = 0.0;
    int n = 0;
    for (const auto& chunk : val_chunks(val, tc.max_val_samples, 50)) {
      const Batch b = make_batch(val, chunk, cfg, 0);
      Graph g(m.params);
      total += static_cast<double>(chunk.size()) * bc_loss_value(g, m, b, nullptr);
      n += static_cast<int>(chunk.size());
    }
    return std::map<std::string, double>{{"bc", total / n}};
  };
  auto snapshot = [&](const std::string&) { best.params.copy_values_from(m.params); };
  run_loop(tc, step, evaluate, snapshot, rep, "train_bc");
  rep.skipped_steps = st.skipped;
  if (report) *report = std::move(rep);
  return best;
}

LikelihoodResult likelihood_score(std::span<const Frame> frames, const SemanticGrid& grid, const OccupancyNet& net,
                                  int anchor_stride) {
  if (anchor_stride < 1) throw Error("likelihood_score: anchor stride must be >= 1");
  const RasterConfig& rc = net.cfg.raster;
  const int T = net.cfg.occ_steps;
  std::map<AgentId, std::pair<int, int>> life;
  for (int t = 0; t < static_cast<int>(frames.size()); ++t) {
    for (const AgentState& a : frames[t]) {
      auto [it, fresh] = life.try_emplace(a.id, t, t);
      if (!fresh) it->second.second = t;
    }
  }
  LikelihoodResult res;
  double agent_sum = 0.0;
  for (const auto& [id, span] : life) {
    const auto [first, last] = span;
    const int start = std::max(first, rc.history);
    if (last - start < 1) continue;
    std::vector<int> anchors;
    for (int t = start; t + T <= last; t += anchor_stride) anchors.push_back(t);
    if (anchors.empty()) {
      anchors.push_back(start);
      res.truncated = true;
    }
    std::vector<RasterContext> ctx;
    ctx.reserve(anchors.size());
    for (int t : anchors) ctx.push_back(rasterize_context(frames, grid, id, t, rc));
    std::vector<const RasterContext*> ptrs;
    for (const auto& c : ctx) ptrs.push_back(&c);
    const auto pred = occupancy_forward(net, ptrs);
    double anchor_sum = 0.0;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      const int t = anchors[i];
      const int K = std::min(T, last - t);
      double s = 0.0;
      for (int k = 1; k <= K; ++k) {
        const AgentState* a = find_agent(frames[t + k], id);
        const Pose2 l = to_local(ctx[i].ego_pose, a->pose());
        const int cell = pred[i].cell_of(l.x, l.y);
        if (cell >= 0) s += pred[i].at(k - 1, cell);
      }
      anchor_sum += s / K;
      ++res.anchors;
    }
    agent_sum += anchor_sum / static_cast<double>(anchors.size());
    ++res.agents;
  }
  res.score = res.agents > 0 ? agent_sum / res.agents : 0.0;
  return res;
}

}  // namespace bsim
