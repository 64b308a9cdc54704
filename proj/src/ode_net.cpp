#include "odemri/ode_net.hpp"

#include <cmath>
#include <utility>

namespace odemri {

namespace {

FeatureMap pack_planes(const ComplexImage& x) {
  FeatureMap m(2, x.height(), x.width());
  const Index n = x.re.size();
  m.data.flat().segment(0, n) = x.re.flat();
  m.data.flat().segment(n, n) = x.im.flat();
  return m;
}

ComplexImage unpack_planes(const FeatureMap& m) {
  if (m.channels() != 2) throw ShapeError("expected a 2-channel map to unpack");
  ComplexImage x(m.height(), m.width());
  const Index n = x.re.size();
  x.re.flat() = m.data.flat().segment(0, n);
  x.im.flat() = m.data.flat().segment(n, n);
  return x;
}

void fill_uniform(Tensor& weights, Index fan_in, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (Index i = 0; i < weights.size(); ++i) weights(i) = rng.uniform(-s, s);
}

Index conv_fan_in(const ConvParams& p) { return p.in_channels * p.kernel_h * p.kernel_w; }

}  // namespace

void IntegratorConfig::validate() const {
  if (steps < 1) throw ConfigError("integrator needs at least one step");
  if (!(std::isfinite(t0) && std::isfinite(t1) && t1 > t0))
    throw ConfigError("integrator interval must be finite with t1 > t0");
}

Tensor weight_dynamics_w(const Tensor& theta, const DynamicsParams& p) {
  return Tensor(theta.shape(), p.a_scale * theta.flat() + p.b_shift);
}

NetworkMode network_mode_from_string(const std::string& name) {
  if (name == "ode") return NetworkMode::kOde;
  if (name == "residual_baseline") return NetworkMode::kResidualBaseline;
  throw ConfigError("unknown network mode: " + name);
}

std::string to_string(NetworkMode mode) {
  return mode == NetworkMode::kOde ? "ode" : "residual_baseline";
}

NetworkConfig NetworkConfig::resolved() const {
  NetworkConfig c = *this;
  if (mode == NetworkMode::kResidualBaseline) {
    c.augment_channels = 0;
    c.integrator = IntegratorConfig{1, 0.0, 1.0};
  }
  return c;
}

Index NetworkConfig::state_channels() const {
  const NetworkConfig c = resolved();
  return c.feature_channels + c.augment_channels;
}

void NetworkConfig::validate() const {
  if (num_blocks < 1) throw ConfigError("network needs at least one block");
  if (feature_channels < 1) throw ConfigError("network needs at least one feature channel");
  if (augment_channels < 0) throw ConfigError("augmented channel count cannot be negative");
  integrator.validate();
}

bool same_network_shape(const NetworkConfig& a, const NetworkConfig& b) {
  return a.num_blocks == b.num_blocks && a.feature_channels == b.feature_channels &&
         a.augment_channels == b.augment_channels && a.integrator.steps == b.integrator.steps &&
         a.integrator.t0 == b.integrator.t0 && a.integrator.t1 == b.integrator.t1 &&
         a.activation == b.activation && a.mode == b.mode;
}

FeatureMap euler_step(const FeatureMap& L, const BlockWeights& theta, double h, Activation kind) {
  const FeatureMap f = dynamics_forward(L, theta, kind);
  return FeatureMap(Tensor(L.data.shape(), L.data.flat() + h * f.data.flat()));
}

FeatureMap block_forward(const FeatureMap& L_in, const WeightState& ws,
                         const IntegratorConfig& integ, Activation kind, BlockTape* tape) {
  integ.validate();
  if (ws.theta0.channels() != L_in.channels())
    throw ShapeError("block weights do not match the state channel count");
  const double h = integ.step();
  const Index K = integ.steps;

  if (tape) {
    tape->h = h;
    tape->kind = kind;
    tape->p = ws.p;
    tape->states.clear();
    tape->thetas.clear();
    tape->states.reserve(static_cast<std::size_t>(K + 1));
    tape->thetas.reserve(static_cast<std::size_t>(K + 1));
    tape->traces.assign(static_cast<std::size_t>(K), DynamicsTrace{});
  }

  FeatureMap L = L_in;
  Tensor theta = ws.theta0.flatten();
  for (Index k = 0; k < K; ++k) {
    const BlockWeights wk = BlockWeights::unflatten(theta, ws.theta0);
    DynamicsTrace* trace = tape ? &tape->traces[static_cast<std::size_t>(k)] : nullptr;
    if (tape) {
      tape->states.push_back(L);
      tape->thetas.push_back(wk);
    }
    const FeatureMap f = dynamics_forward(L, wk, kind, trace);
    L = FeatureMap(Tensor(L.data.shape(), L.data.flat() + h * f.data.flat()));
    theta = Tensor(theta.shape(), theta.flat() + h * (ws.p.a_scale * theta.flat() + ws.p.b_shift));
  }
  if (tape) {
    tape->states.push_back(L);
    tape->thetas.push_back(BlockWeights::unflatten(theta, ws.theta0));
  }
  return L;
}

BlockGrads block_backward(const BlockTape& tape, const FeatureMap& grad_Lout) {
  const Index K = static_cast<Index>(tape.traces.size());
  if (K < 1 || tape.states.size() != static_cast<std::size_t>(K + 1) ||
      tape.thetas.size() != static_cast<std::size_t>(K + 1))
    throw ShapeError("block tape is incomplete");
  require_same_shape(tape.states.back().data, grad_Lout.data, "block upstream gradient");

  const double h = tape.h;
  const double a = tape.p.a_scale;

  FeatureMap gL = grad_Lout;
  Tensor gtheta(tape.thetas.front().flatten().shape());  // cotangent of theta_{k+1}, zero at k = K-1
  double grad_a = 0.0, grad_b = 0.0;

  for (Index k = K - 1; k >= 0; --k) {
    const FeatureMap& Lk = tape.states[static_cast<std::size_t>(k)];
    const BlockWeights& wk = tape.thetas[static_cast<std::size_t>(k)];
    // Weight-flow path: theta_{k+1} = (1 + h a) theta_k + h b.
    grad_a += h * dot(wk.flatten(), gtheta);
    grad_b += h * gtheta.flat().sum();
    const Eigen::ArrayXd gtheta_flow = (1.0 + h * a) * gtheta.flat();
    // Feature path: L_{k+1} = L_k + h f(L_k, theta_k).
    const DynamicsGrads dg =
        dynamics_backward(Lk, wk, tape.kind, tape.traces[static_cast<std::size_t>(k)], gL);
    gL = FeatureMap(Tensor(gL.data.shape(), gL.data.flat() + h * dg.input.data.flat()));
    gtheta = Tensor(gtheta.shape(), gtheta_flow + h * dg.weights.flatten().flat());
  }

  BlockGrads out;
  out.input = std::move(gL);
  out.theta0 = BlockWeights::unflatten(gtheta, tape.thetas.front());
  out.p = DynamicsParams{grad_a, grad_b};
  return out;
}

ReconNetParams init_params(const NetworkConfig& config, Rng& rng) {
  config.validate();
  const NetworkConfig c = config.resolved();
  const Index width = c.feature_channels + c.augment_channels;

  ReconNetParams params;
  params.lift = ConvParams::zeros(c.feature_channels, 2);
  fill_uniform(params.lift.weights, conv_fan_in(params.lift), rng);
  params.blocks.resize(static_cast<std::size_t>(c.num_blocks));
  for (auto& ws : params.blocks) {
    ws.theta0 = BlockWeights::zeros(width);
    fill_uniform(ws.theta0.conv1.weights, conv_fan_in(ws.theta0.conv1), rng);
    fill_uniform(ws.theta0.conv2.weights, conv_fan_in(ws.theta0.conv2), rng);
    ws.p = DynamicsParams{};
  }
  params.project = ConvParams::zeros(2, width);
  fill_uniform(params.project.weights, conv_fan_in(params.project), rng);
  return params;
}

ReconNetParams zero_params(const NetworkConfig& config) {
  config.validate();
  const NetworkConfig c = config.resolved();
  const Index width = c.feature_channels + c.augment_channels;

  ReconNetParams params;
  params.lift = ConvParams::zeros(c.feature_channels, 2);
  params.blocks.resize(static_cast<std::size_t>(c.num_blocks));
  for (auto& ws : params.blocks) {
    ws.theta0 = BlockWeights::zeros(width);
    ws.p = DynamicsParams{};
  }
  params.project = ConvParams::zeros(2, width);
  return params;
}

ComplexImage network_forward(const ComplexImage& x0, const ReconNetParams& params,
                             const NetworkConfig& config, NetworkTape* tape) {
  config.validate();
  const NetworkConfig c = config.resolved();
  const Index width = c.feature_channels + c.augment_channels;
  if (params.lift.out_channels != c.feature_channels || params.lift.in_channels != 2 ||
      params.project.out_channels != 2 || params.project.in_channels != width ||
      static_cast<Index>(params.blocks.size()) != c.num_blocks)
    throw ShapeError("network parameters do not match the configuration");

  FeatureMap packed = pack_planes(x0);
  const FeatureMap lifted = conv2d_forward(packed, params.lift);

  // Augmentation happens once, here: the extra channels start as exact zeros.
  FeatureMap state(width, lifted.height(), lifted.width());
  state.data.flat().segment(0, lifted.data.size()) = lifted.data.flat();

  if (tape) {
    tape->packed = packed;
    tape->blocks.assign(static_cast<std::size_t>(c.num_blocks), BlockTape{});
  }
  for (Index i = 0; i < c.num_blocks; ++i) {
    BlockTape* bt = tape ? &tape->blocks[static_cast<std::size_t>(i)] : nullptr;
    state = block_forward(state, params.blocks[static_cast<std::size_t>(i)], c.integrator,
                          c.activation, bt);
  }

  const FeatureMap projected = conv2d_forward(state, params.project);
  return unpack_planes(
      FeatureMap(Tensor(projected.data.shape(), projected.data.flat() + packed.data.flat())));
}

NetworkGrads network_backward(const NetworkTape& tape, const ReconNetParams& params,
                              const NetworkConfig& config, const ComplexImage& grad_recon) {
  const NetworkConfig c = config.resolved();
  if (static_cast<Index>(tape.blocks.size()) != c.num_blocks || tape.blocks.empty())
    throw ShapeError("network tape does not match the configuration");

  const FeatureMap g_out = pack_planes(grad_recon);

  // Projection conv consumed the last block's final state.
  const FeatureMap& proj_in = tape.blocks.back().states.back();
  ConvGrads proj = conv2d_backward(proj_in, params.project, g_out);

  NetworkGrads grads;
  grads.project = std::move(proj.params);
  grads.blocks.resize(tape.blocks.size());

  FeatureMap gstate = std::move(proj.input);
  for (Index i = c.num_blocks - 1; i >= 0; --i) {
    BlockGrads bg = block_backward(tape.blocks[static_cast<std::size_t>(i)], gstate);
    grads.blocks[static_cast<std::size_t>(i)].theta0 = std::move(bg.theta0);
    grads.blocks[static_cast<std::size_t>(i)].p = bg.p;
    gstate = std::move(bg.input);
  }

  // Only the first F_ch channels flow back into the lift conv; the augmented
  // channels were appended as fresh zeros with no parameters upstream.
  FeatureMap g_lift_out(c.feature_channels, gstate.height(), gstate.width());
  g_lift_out.data.flat() = gstate.data.flat().segment(0, g_lift_out.data.size());
  ConvGrads lift = conv2d_backward(tape.packed, params.lift, g_lift_out);
  grads.lift = std::move(lift.params);

  // Global residual: the packed input also reaches the output directly.
  grads.input = unpack_planes(
      FeatureMap(Tensor(g_out.data.shape(), lift.input.data.flat() + g_out.data.flat())));
  return grads;
}

std::vector<ParamSlot> param_slots(ReconNetParams& params, const NetworkConfig& config) {
  const NetworkConfig c = config.resolved();
  if (static_cast<Index>(params.blocks.size()) != c.num_blocks)
    throw ShapeError("parameter block count does not match the configuration");

  std::vector<ParamSlot> slots;
  const auto add = [&slots](std::string name, Tensor& t, bool regularized) {
    slots.push_back(ParamSlot{std::move(name), t.data(), t.size(), regularized});
  };
  add("lift.weights", params.lift.weights, true);
  add("lift.bias", params.lift.bias, false);
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    const std::string prefix = "block" + std::to_string(i);
    WeightState& ws = params.blocks[i];
    add(prefix + ".conv1.weights", ws.theta0.conv1.weights, true);
    add(prefix + ".conv1.bias", ws.theta0.conv1.bias, false);
    add(prefix + ".conv2.weights", ws.theta0.conv2.weights, true);
    add(prefix + ".conv2.bias", ws.theta0.conv2.bias, false);
    if (c.mode == NetworkMode::kOde) {
      slots.push_back(ParamSlot{prefix + ".p.a_scale", &ws.p.a_scale, 1, true});
      slots.push_back(ParamSlot{prefix + ".p.b_shift", &ws.p.b_shift, 1, true});
    }
  }
  add("project.weights", params.project.weights, true);
  add("project.bias", params.project.bias, false);
  return slots;
}

Index total_param_count(ReconNetParams& params, const NetworkConfig& config) {
  Index total = 0;
  for (const ParamSlot& slot : param_slots(params, config)) total += slot.size;
  return total;
}

}  // namespace odemri
