#include "bsim/models.hpp"

#include <algorithm>
#include <cmath>

#include "bsim/nn/losses.hpp"

namespace bsim {

using nn::Graph;
using nn::Tensor;
using nn::Var;

void ModelConfig::validate() const {
  raster.validate();
  if (enc_channels.size() != 4) throw Error("model: enc_channels needs 4 entries");
  if (dec_channels.size() != 4) throw Error("model: dec_channels needs 4 entries");
  for (int c : enc_channels) {
    if (c < 1) throw Error("model: channel counts must be positive");
  }
  for (int c : dec_channels) {
    if (c < 1) throw Error("model: channel counts must be positive");
  }
  if (feature_dim < 1 || hidden < 1) throw Error("model: feature_dim and hidden must be positive");
  if (horizon < 1) throw Error("model: horizon must be >= 1");
  if (occ_steps < 1) throw Error("model: occ_steps must be >= 1");
  if (roi_size < 1) throw Error("model: roi_size must be >= 1");
  if (!(roi_extent > 0.0)) throw Error("model: roi_extent must be positive");
  limits.validate();
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"raster",
           {{"size", c.raster.size},
            {"pixel_size", c.raster.pixel_size},
            {"ego_col_frac", c.raster.ego_col_frac},
            {"history", c.raster.history}}},
          {"enc_channels", c.enc_channels},
          {"dec_channels", c.dec_channels},
          {"feature_dim", c.feature_dim},
          {"hidden", c.hidden},
          {"horizon", c.horizon},
          {"occ_steps", c.occ_steps},
          {"roi_size", c.roi_size},
          {"roi_extent", c.roi_extent},
          {"scaling", {{"speed", c.scaling.speed}, {"yaw", c.scaling.yaw}}},
          {"limits",
           {{"v_max", c.limits.v_max}, {"a_max", c.limits.a_max}, {"omega_max", c.limits.omega_max}, {"dt", c.limits.dt}}},
          {"init_seed", c.init_seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    const auto& r = j.at("raster");
    c.raster.size = r.at("size");
    c.raster.pixel_size = r.at("pixel_size");
    c.raster.ego_col_frac = r.at("ego_col_frac");
    c.raster.history = r.at("history");
    c.enc_channels = j.at("enc_channels").get<std::vector<int>>();
    c.dec_channels = j.at("dec_channels").get<std::vector<int>>();
    c.feature_dim = j.at("feature_dim");
    c.hidden = j.at("hidden");
    c.horizon = j.at("horizon");
    c.occ_steps = j.at("occ_steps");
    c.roi_size = j.at("roi_size");
    c.roi_extent = j.at("roi_extent");
    c.scaling.speed = j.at("scaling").at("speed");
    c.scaling.yaw = j.at("scaling").at("yaw");
    const auto& l = j.at("limits");
    c.limits.v_max = l.at("v_max");
    c.limits.a_max = l.at("a_max");
    c.limits.omega_max = l.at("omega_max");
    c.limits.dt = l.at("dt");
    c.init_seed = j.at("init_seed");
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

double log_sum_exp(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double x : v) z += std::exp(x - mx);
  return mx + std::log(z);
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

GoalPose decode_with(const GoalMap& m, int cell, double lse) {
  const int S = m.raster.size;
  const std::size_t plane = static_cast<std::size_t>(S) * S;
  if (cell < 0 || static_cast<std::size_t>(cell) >= plane) throw Error("goal map: cell out of range");
  const int row = cell / S, col = cell % S;
  const Vec2 c = m.raster.local_from_pixel(row, col);
  const double half = 0.5 * m.raster.pixel_size * (1.0 - 1e-9);
  GoalPose g;
  g.cell = cell;
  g.x = c.x + std::clamp(m.data[plane + cell], -half, half);
  g.y = c.y + std::clamp(m.data[2 * plane + cell], -half, half);
  g.heading = wrap_angle(m.data[3 * plane + cell]);
  g.log_likelihood = m.data[cell] - lse;
  return g;
}

EncoderParams build_encoder(nn::ParamStore& ps, const ModelConfig& c, int in_ch, bool with_fc, std::mt19937_64& rng) {
  EncoderParams e;
  int prev = in_ch;
  for (int i = 0; i < 4; ++i) {
    const int ch = c.enc_channels[i];
    e.w.push_back(ps.add_kaiming("enc" + std::to_string(i + 1) + ".w", {ch, prev, 3, 3}, prev * 9, rng));
    e.b.push_back(ps.add_zeros("enc" + std::to_string(i + 1) + ".b", {ch}));
    prev = ch;
  }
  if (with_fc) {
    e.fc_w = ps.add_kaiming("enc.fc.w", {c.feature_dim, prev}, prev, rng);
    e.fc_b = ps.add_zeros("enc.fc.b", {c.feature_dim});
  }
  return e;
}

void check_input(const Graph& g, Var x, const ModelConfig& c, const std::string& layer) {
  const Tensor& t = g.value(x);
  const int S = c.raster.size;
  if (t.ndim() != 4 || t.dim(1) != c.raster.channels() || t.dim(2) != S || t.dim(3) != S) {
    throw Error(layer + ": expected input [N," + std::to_string(c.raster.channels()) + "," + std::to_string(S) + "," +
                std::to_string(S) + "], got " + t.shape_str());
  }
}

EncoderOut run_encoder(Graph& g, const EncoderParams& e, Var x) {
  EncoderOut out;
  Var h = x;
  for (std::size_t i = 0; i < e.w.size(); ++i) {
    h = nn::relu(g, nn::conv2d(g, h, g.param(e.w[i]), g.param(e.b[i]), 2));
    out.stages.push_back(h);
  }
  if (e.fc_w >= 0) {
    out.global = nn::relu(g, nn::linear(g, nn::global_avg_pool(g, h), g.param(e.fc_w), g.param(e.fc_b)));
  }
  return out;
}

Var speed_plane(Graph& g, Var like, std::span<const double> speeds) {
  const Tensor& t = g.value(like);
  const int N = t.dim(0), H = t.dim(2), W = t.dim(3);
  if (speeds.size() != static_cast<std::size_t>(N)) throw Error("speed input: one value per batch entry required");
  Tensor s({N, 1, H, W});
  for (int n = 0; n < N; ++n) {
    std::fill_n(s.data.begin() + static_cast<std::ptrdiff_t>(n) * H * W, H * W, speeds[n] / 10.0);
  }
  return g.input(std::move(s));
}

void build_mlp(nn::ParamStore& ps, const std::string& prefix, std::vector<int>& w, std::vector<int>& b,
               const std::vector<int>& dims, std::mt19937_64& rng) {
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const std::string name = prefix + std::to_string(i + 1);
    const bool last = i + 2 == dims.size();
    if (last) {
      w.push_back(ps.add_zeros(name + ".w", {dims[i + 1], dims[i]}));
    } else {
      w.push_back(ps.add_kaiming(name + ".w", {dims[i + 1], dims[i]}, dims[i], rng));
    }
    b.push_back(ps.add_zeros(name + ".b", {dims[i + 1]}));
  }
}

Var run_mlp(Graph& g, const std::vector<int>& w, const std::vector<int>& b, Var x) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    x = nn::linear(g, x, g.param(w[i]), g.param(b[i]));
    if (i + 1 < w.size()) x = nn::relu(g, x);
  }
  return x;
}

Tensor stack_contexts(std::span<const RasterContext* const> ctx, const ModelConfig& c) {
  const int S = c.raster.size, C = c.raster.channels();
  const std::size_t per = static_cast<std::size_t>(C) * S * S;
  Tensor x({static_cast<int>(ctx.size()), C, S, S});
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    if (ctx[i]->channels != C || ctx[i]->size != S) {
      throw Error("context shape [" + std::to_string(ctx[i]->channels) + "," + std::to_string(ctx[i]->size) +
                  "] does not match the model raster [" + std::to_string(C) + "," + std::to_string(S) + "]");
    }
    std::copy(ctx[i]->data.begin(), ctx[i]->data.end(), x.data.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return x;
}

}  // namespace

GoalPose GoalMap::decode(int cell) const { return decode_with(*this, cell, log_sum_exp(logits())); }

int GoalMap::cell_of(double x, double y) const {
  if (!raster.local_in_window({x, y})) return -1;
  const Vec2 p = raster.pixel_from_local({x, y});
  const int col = std::clamp(static_cast<int>(std::floor(p.x + 0.5)), 0, raster.size - 1);
  const int row = std::clamp(static_cast<int>(std::floor(p.y + 0.5)), 0, raster.size - 1);
  return row * raster.size + col;
}

std::vector<GoalPose> sample_goals(const GoalMap& map, int K, double temperature, std::mt19937_64& rng,
                                   GoalMode mode) {
  if (K < 1) throw Error("sample_goals: K must be >= 1");
  if (!(temperature > 0.0)) throw Error("sample_goals: temperature must be positive");
  const auto logits = map.logits();
  const double lse = log_sum_exp(logits);
  if (mode == GoalMode::kMax) {
    const int best = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    return {decode_with(map, best, lse)};
  }
  const auto p = nn::spatial_softmax(logits, temperature);
  std::vector<double> cdf(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    cdf[i] = acc;
  }
  std::vector<GoalPose> out;
  out.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const double u = uniform01(rng) * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    int cell = static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
    while (p[cell] == 0.0 && cell > 0) --cell;  // never land on a zero-probability cell
    out.push_back(decode_with(map, cell, lse));
  }
  return out;
}

nn::Checkpoint Model::to_checkpoint() const {
  nn::Checkpoint ck;
  ck.kind = kind;
  ck.meta = to_json(cfg);
  ck.params = params;
  return ck;
}

GoalNet::GoalNet(const ModelConfig& c) {
  c.validate();
  kind = "goal_net";
  cfg = c;
  std::mt19937_64 rng(mix_seed(c.init_seed, 1));
  enc = build_encoder(params, c, c.raster.channels(), false, rng);
  const auto& e = c.enc_channels;
  const auto& d = c.dec_channels;
  const int ins[4] = {e[3] + 1, d[0] + e[2], d[1] + e[1], d[2] + e[0]};
  for (int i = 0; i < 4; ++i) {
    dec_w.push_back(params.add_kaiming("dec" + std::to_string(i + 1) + ".w", {d[i], ins[i], 3, 3}, ins[i] * 9, rng));
    dec_b.push_back(params.add_zeros("dec" + std::to_string(i + 1) + ".b", {d[i]}));
  }
  head_w = params.add_zeros("head.w", {4, d[3], 3, 3});
  head_b = params.add_zeros("head.b", {4});
}

Var GoalNet::forward(Graph& g, Var x, std::span<const double> speeds) const {
  check_input(g, x, cfg, "goal_net.enc1");
  const EncoderOut e = run_encoder(g, enc, x);
  Var h = nn::concat_channels(g, {e.stages[3], speed_plane(g, e.stages[3], speeds)});
  h = nn::relu(g, nn::conv2d(g, h, g.param(dec_w[0]), g.param(dec_b[0]), 1));
  for (int i = 1; i < 4; ++i) {
    h = nn::concat_channels(g, {nn::upsample2x(g, h), e.stages[3 - i]});
    h = nn::relu(g, nn::conv2d(g, h, g.param(dec_w[i]), g.param(dec_b[i]), 1));
  }
  h = nn::upsample2x(g, h);
  return nn::conv2d(g, h, g.param(head_w), g.param(head_b), 1);
}

PolicyPredictorNet::PolicyPredictorNet(const ModelConfig& c) {
  c.validate();
  kind = "policy_predictor";
  cfg = c;
  std::mt19937_64 rng(mix_seed(c.init_seed, 2));
  enc = build_encoder(params, c, c.raster.channels(), true, rng);
  build_mlp(params, "policy.fc", pol_w, pol_b, {c.feature_dim + 5, c.hidden, c.hidden, 2 * c.horizon}, rng);
  const int roi = c.enc_channels[1] * c.roi_size * c.roi_size;
  build_mlp(params, "predictor.fc", pred_w, pred_b, {roi + c.feature_dim + 5, c.hidden, c.hidden, 2 * c.horizon},
            rng);
}

EncoderOut PolicyPredictorNet::encode(Graph& g, Var x) const {
  check_input(g, x, cfg, "policy_predictor.enc1");
  return run_encoder(g, enc, x);
}

Var PolicyPredictorNet::policy_head(Graph& g, const EncoderOut& e, std::span<const int> batch_of_row,
                                    std::span<const GoalPose> goals, std::span<const double> ego_speeds) const {
  const int M = static_cast<int>(goals.size());
  if (batch_of_row.size() != goals.size() || ego_speeds.size() != goals.size()) {
    throw Error("policy_head: goals, rows and speeds must align");
  }
  Tensor gf({M, 5});
  for (int m = 0; m < M; ++m) {
    gf.data[m * 5 + 0] = goals[m].x / 10.0;
    gf.data[m * 5 + 1] = goals[m].y / 10.0;
    gf.data[m * 5 + 2] = std::cos(goals[m].heading);
    gf.data[m * 5 + 3] = std::sin(goals[m].heading);
    gf.data[m * 5 + 4] = ego_speeds[m] / 10.0;
  }
  Var in = nn::concat_cols(g, {nn::gather_rows(g, e.global, batch_of_row), g.input(std::move(gf))});
  return run_mlp(g, pol_w, pol_b, in);
}

Var PolicyPredictorNet::predictor_head(Graph& g, const EncoderOut& e, std::span<const int> batch_of_row,
                                       std::span<const AgentState> nb) const {
  const int M = static_cast<int>(nb.size());
  if (batch_of_row.size() != nb.size()) throw Error("predictor_head: rows and neighbours must align");
  std::vector<nn::RoiRequest> rois(static_cast<std::size_t>(M));
  Tensor nf({M, 5});
  const double extent = cfg.roi_extent / (4.0 * cfg.raster.pixel_size);
  for (int m = 0; m < M; ++m) {
    const Vec2 p = cfg.raster.pixel_from_local({nb[m].x, nb[m].y});
    rois[m].batch = batch_of_row[m];
    rois[m].window = {(p.x - 1.5) / 4.0, (p.y - 1.5) / 4.0, nb[m].heading, extent, extent};
    nf.data[m * 5 + 0] = nb[m].x / 10.0;
    nf.data[m * 5 + 1] = nb[m].y / 10.0;
    nf.data[m * 5 + 2] = std::cos(nb[m].heading);
    nf.data[m * 5 + 3] = std::sin(nb[m].heading);
    nf.data[m * 5 + 4] = nb[m].speed / 10.0;
  }
  Var crop = nn::roi_align(g, e.stages[1], rois, cfg.roi_size);
  Var in = nn::concat_cols(g, {crop, nn::gather_rows(g, e.global, batch_of_row), g.input(std::move(nf))});
  return run_mlp(g, pred_w, pred_b, in);
}

OccupancyNet::OccupancyNet(const ModelConfig& c) {
  c.validate();
  kind = "occupancy";
  cfg = c;
  std::mt19937_64 rng(mix_seed(c.init_seed, 3));
  enc = build_encoder(params, c, c.raster.channels(), false, rng);
  const auto& e = c.enc_channels;
  const auto& d = c.dec_channels;
  const int ins[3] = {e[3] + 1, d[0] + e[2], d[1] + e[1]};
  for (int i = 0; i < 3; ++i) {
    dec_w.push_back(params.add_kaiming("dec" + std::to_string(i + 1) + ".w", {d[i], ins[i], 3, 3}, ins[i] * 9, rng));
    dec_b.push_back(params.add_zeros("dec" + std::to_string(i + 1) + ".b", {d[i]}));
  }
  head_w = params.add_zeros("head.w", {c.occ_steps, d[2], 3, 3});
  head_b = params.add_zeros("head.b", {c.occ_steps});
}

Var OccupancyNet::forward(Graph& g, Var x, std::span<const double> speeds) const {
  check_input(g, x, cfg, "occupancy.enc1");
  const EncoderOut e = run_encoder(g, enc, x);
  Var h = nn::concat_channels(g, {e.stages[3], speed_plane(g, e.stages[3], speeds)});
  h = nn::relu(g, nn::conv2d(g, h, g.param(dec_w[0]), g.param(dec_b[0]), 1));
  for (int i = 1; i < 3; ++i) {
    h = nn::concat_channels(g, {nn::upsample2x(g, h), e.stages[3 - i]});
    h = nn::relu(g, nn::conv2d(g, h, g.param(dec_w[i]), g.param(dec_b[i]), 1));
  }
  return nn::conv2d(g, h, g.param(head_w), g.param(head_b), 1);
}

BcNet::BcNet(const ModelConfig& c) {
  c.validate();
  kind = "bc";
  cfg = c;
  std::mt19937_64 rng(mix_seed(c.init_seed, 4));
  enc = build_encoder(params, c, c.raster.channels(), true, rng);
  build_mlp(params, "bc.fc", mlp_w, mlp_b, {c.feature_dim + 1, c.hidden, c.hidden, 2 * c.horizon}, rng);
}

Var BcNet::forward(Graph& g, Var x, std::span<const double> speeds) const {
  check_input(g, x, cfg, "bc.enc1");
  const EncoderOut e = run_encoder(g, enc, x);
  const int N = g.value(x).dim(0);
  Tensor s({N, 1});
  for (int n = 0; n < N; ++n) s.data[n] = speeds[n] / 10.0;
  return run_mlp(g, mlp_w, mlp_b, nn::concat_cols(g, {e.global, g.input(std::move(s))}));
}

namespace {

template <typename Net>
Net load_model(const std::string& path, const std::string& kind) {
  nn::Checkpoint ck = nn::load_checkpoint(path);
  if (ck.kind != kind) throw Error(path + ": checkpoint holds a '" + ck.kind + "' model, expected '" + kind + "'");
  Net net(model_config_from_json(ck.meta));
  net.params.copy_values_from(ck.params);
  return net;
}

}  // namespace

GoalNet load_goal_net(const std::string& path) { return load_model<GoalNet>(path, "goal_net"); }
PolicyPredictorNet load_policy_net(const std::string& path) {
  return load_model<PolicyPredictorNet>(path, "policy_predictor");
}
OccupancyNet load_occupancy_net(const std::string& path) { return load_model<OccupancyNet>(path, "occupancy"); }
BcNet load_bc_net(const std::string& path) { return load_model<BcNet>(path, "bc"); }
void save_model(const std::string& path, const Model& m) { nn::save_checkpoint(path, m.to_checkpoint()); }

std::vector<GoalMap> goalnet_forward(const GoalNet& net, std::span<const RasterContext* const> ctx) {
  if (ctx.empty()) return {};
  Graph g(net.params);
  std::vector<double> speeds;
  for (const auto* c : ctx) speeds.push_back(c->ego_speed);
  const Var y = net.forward(g, g.input(stack_contexts(ctx, net.cfg)), speeds);
  const Tensor& out = g.value(y);
  const std::size_t per = out.size() / ctx.size();
  std::vector<GoalMap> maps(ctx.size());
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    maps[i].raster = net.cfg.raster;
    maps[i].data.assign(out.data.begin() + static_cast<std::ptrdiff_t>(i * per),
                        out.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
  }
  return maps;
}

GoalMap goalnet_forward(const GoalNet& net, const RasterContext& ctx) {
  const RasterContext* p = &ctx;
  return goalnet_forward(net, std::span<const RasterContext* const>(&p, 1)).front();
}

bool visible_in(const RasterContext& ctx, const RasterConfig& raster, const AgentState& s) {
  const Vec2 l = to_local(ctx.ego_pose, Vec2{s.x, s.y});
  return raster.local_in_window(l);
}

PlanForward plan_forward(const PolicyPredictorNet& net, const RasterContext& ctx, std::span<const GoalPose> goals,
                         std::span<const AgentState> neighbours) {
  PlanForward out;
  out.neighbour_paths.resize(neighbours.size());
  if (goals.empty() && neighbours.empty()) return out;
  Graph g(net.params);
  const RasterContext* p = &ctx;
  const EncoderOut e = net.encode(g, g.input(stack_contexts(std::span<const RasterContext* const>(&p, 1), net.cfg)));
  const int H = net.cfg.horizon;
  if (!goals.empty()) {
    std::vector<int> rows(goals.size(), 0);
    std::vector<double> speeds(goals.size(), ctx.ego_speed);
    const Var raw = net.policy_head(g, e, rows, goals, speeds);
    const auto& r = g.value(raw).data;
    for (std::size_t k = 0; k < goals.size(); ++k) {
      out.controls.push_back(nn::decode_controls(std::span<const double>(r.data() + k * 2 * H, 2 * H), ctx.ego_speed,
                                                 net.cfg.scaling));
    }
  }
  std::vector<AgentState> local;
  std::vector<std::size_t> which;
  for (std::size_t i = 0; i < neighbours.size(); ++i) {
    if (!visible_in(ctx, net.cfg.raster, neighbours[i])) continue;
    AgentState s = neighbours[i];
    const Pose2 lp = to_local(ctx.ego_pose, s.pose());
    s.x = lp.x;
    s.y = lp.y;
    s.heading = lp.heading;
    local.push_back(s);
    which.push_back(i);
  }
  if (!local.empty()) {
    std::vector<int> rows(local.size(), 0);
    const Var raw = net.predictor_head(g, e, rows, local);
    const auto& r = g.value(raw).data;
    for (std::size_t k = 0; k < local.size(); ++k) {
      const auto u = nn::decode_controls(std::span<const double>(r.data() + k * 2 * H, 2 * H), local[k].speed,
                                         net.cfg.scaling);
      auto traj = rollout_controls(local[k], u, net.cfg.limits);
      for (AgentState& s : traj) {
        const Pose2 w = to_world(ctx.ego_pose, s.pose());
        s.x = w.x;
        s.y = w.y;
        s.heading = w.heading;
      }
      out.neighbour_paths[which[k]] = std::move(traj);
    }
  }
  return out;
}

std::vector<std::vector<Control>> policy_forward(const PolicyPredictorNet& net, const RasterContext& ctx,
                                                 std::span<const GoalPose> goals) {
  return plan_forward(net, ctx, goals, {}).controls;
}

std::vector<Control> policy_forward(const PolicyPredictorNet& net, const RasterContext& ctx, const GoalPose& goal) {
  return plan_forward(net, ctx, std::span<const GoalPose>(&goal, 1), {}).controls.front();
}

std::vector<std::vector<AgentState>> predictor_forward(const PolicyPredictorNet& net, const RasterContext& ctx,
                                                       std::span<const AgentState> neighbours) {
  return plan_forward(net, ctx, {}, neighbours).neighbour_paths;
}

std::vector<Control> bc_forward(const BcNet& net, const RasterContext& ctx) {
  Graph g(net.params);
  const RasterContext* p = &ctx;
  const double speed = ctx.ego_speed;
  const Var raw = net.forward(g, g.input(stack_contexts(std::span<const RasterContext* const>(&p, 1), net.cfg)),
                              std::span<const double>(&speed, 1));
  return nn::decode_controls(g.value(raw).data, ctx.ego_speed, net.cfg.scaling);
}

int OccupancyPrediction::cell_of(double x, double y) const {
  if (!raster.local_in_window({x, y})) return -1;
  const Vec2 p = raster.pixel_from_local({x, y});
  const int col = std::clamp(static_cast<int>(std::floor(p.x + 0.5)), 0, raster.size - 1) / 4;
  const int row = std::clamp(static_cast<int>(std::floor(p.y + 0.5)), 0, raster.size - 1) / 4;
  return row * size + col;
}

std::vector<OccupancyPrediction> occupancy_forward(const OccupancyNet& net,
                                                   std::span<const RasterContext* const> ctx) {
  if (ctx.empty()) return {};
  Graph g(net.params);
  std::vector<double> speeds;
  for (const auto* c : ctx) speeds.push_back(c->ego_speed);
  const Var y = net.forward(g, g.input(stack_contexts(ctx, net.cfg)), speeds);
  const Tensor& out = g.value(y);
  const int T = net.cfg.occ_steps, S = net.cfg.occ_size();
  const std::size_t plane = static_cast<std::size_t>(S) * S;
  std::vector<OccupancyPrediction> res(ctx.size());
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    auto& r = res[i];
    r.steps = T;
    r.size = S;
    r.cell = net.cfg.occ_cell();
    r.raster = net.cfg.raster;
    r.prob.resize(static_cast<std::size_t>(T) * plane);
    for (int k = 0; k < T; ++k) {
      const std::size_t off = (i * T + k) * plane;
      const auto p = nn::spatial_softmax(std::span<const double>(out.data.data() + off, plane));
      std::copy(p.begin(), p.end(), r.prob.begin() + static_cast<std::ptrdiff_t>(k * plane));
    }
  }
  return res;
}

OccupancyPrediction occupancy_forward(const OccupancyNet& net, const RasterContext& ctx) {
  const RasterContext* p = &ctx;
  return occupancy_forward(net, std::span<const RasterContext* const>(&p, 1)).front();
}

}  // namespace bsim
