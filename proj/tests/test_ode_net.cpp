#include <doctest.h>

#include <cmath>

#include "odemri/ode_net.hpp"
#include "odemri/rng.hpp"
#include "oracles.hpp"

using namespace odemri;

namespace {

FeatureMap random_map(Index c, Index h, Index w, Rng& rng) {
  FeatureMap m(c, h, w);
  m.data = oracles::random_tensor(m.data.shape(), rng);
  return m;
}

WeightState random_weight_state(Index channels, Rng& rng, double scale = 0.3) {
  WeightState ws;
  ws.theta0 = BlockWeights::zeros(channels);
  ws.theta0.conv1.weights = oracles::random_tensor(ws.theta0.conv1.weights.shape(), rng, scale);
  ws.theta0.conv1.bias = oracles::random_tensor(ws.theta0.conv1.bias.shape(), rng, scale);
  ws.theta0.conv2.weights = oracles::random_tensor(ws.theta0.conv2.weights.shape(), rng, scale);
  ws.theta0.conv2.bias = oracles::random_tensor(ws.theta0.conv2.bias.shape(), rng, scale);
  ws.p = DynamicsParams{0.0, 0.0};
  return ws;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) && (a.flat() == b.flat()).all();
}

NetworkConfig tiny_config() {
  NetworkConfig c;
  c.num_blocks = 2;
  c.feature_channels = 4;
  c.augment_channels = 1;
  c.integrator.steps = 2;
  c.activation = Activation::kTanh;
  return c;
}

}  // namespace

TEST_CASE("weight flow examples") {
  Rng rng(70);
  Tensor theta = oracles::random_tensor({7}, rng);
  auto frozen = weight_dynamics_w(theta, DynamicsParams{0.0, 0.0});
  CHECK(frozen.flat().abs().maxCoeff() == 0.0);
  auto shift = weight_dynamics_w(theta, DynamicsParams{0.0, 1.0});
  CHECK((shift.flat() == 1.0).all());
  auto affine = weight_dynamics_w(theta, DynamicsParams{-0.5, 2.0});
  for (Index i = 0; i < 7; ++i) CHECK(affine(i) == doctest::Approx(-0.5 * theta(i) + 2.0));
}

TEST_CASE("integrator config validates") {
  CHECK_THROWS_AS(IntegratorConfig{0}.validate(), ConfigError);
  IntegratorConfig c;
  c.t1 = c.t0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  IntegratorConfig ok{4, 0.0, 1.0};
  ok.validate();
  CHECK(std::abs(ok.step() * 4 - 1.0) < 1e-15);
}

TEST_CASE("euler driver on dL/dt = L halves the endpoint error when K doubles") {
  const auto growth = [](double L, double) { return L; };
  double prev_err = 0.0;
  for (Index K : {4, 8, 16, 32}) {
    const double end = euler_integrate(1.0, IntegratorConfig{K, 0.0, 1.0}, growth);
    const double err = std::abs(end - std::exp(1.0));
    if (K > 4) {
      const double ratio = prev_err / err;
      CHECK(ratio > 1.8);
      CHECK(ratio < 2.2);
    }
    prev_err = err;
  }
}

TEST_CASE("euler driver with tensor state reproduces the hand recursion") {
  Rng rng(71);
  Tensor L0 = oracles::random_tensor({3, 4}, rng);
  const auto growth = [](const Tensor& L, double) { return L; };
  Tensor L1 = euler_integrate(L0, IntegratorConfig{4, 0.0, 1.0}, growth);
  CHECK(oracles::max_abs_diff(L1, Tensor(L0.shape(), 2.44140625 * L0.flat())) < 1e-14);
}

TEST_CASE("euler_step examples") {
  Rng rng(72);
  auto L = random_map(3, 5, 5, rng);
  auto zero_theta = BlockWeights::zeros(3);
  CHECK(bitwise_equal(euler_step(L, zero_theta, 0.25, Activation::kTanh).data, L.data));

  auto ws = random_weight_state(3, rng);
  CHECK(bitwise_equal(euler_step(L, ws.theta0, 0.0, Activation::kTanh).data, L.data));

  const double h = 0.3;
  auto out = euler_step(L, ws.theta0, h, Activation::kTanh);
  auto f = dynamics_forward(L, ws.theta0, Activation::kTanh);
  CHECK((out.data.flat() - L.data.flat() - h * f.data.flat()).abs().maxCoeff() < 1e-14);
}

TEST_CASE("weight trajectory: p = (1, 0) over four quarter steps compounds to 1.25^4") {
  Rng rng(73);
  auto ws = random_weight_state(3, rng);
  ws.p = DynamicsParams{1.0, 0.0};
  auto L = random_map(3, 4, 4, rng);
  BlockTape tape;
  block_forward(L, ws, IntegratorConfig{4, 0.0, 1.0}, Activation::kTanh, &tape);
  auto theta0 = ws.theta0.flatten();
  auto thetaK = tape.thetas.back().flatten();
  CHECK(oracles::max_abs_diff(thetaK, Tensor(theta0.shape(), 2.44140625 * theta0.flat())) < 1e-14);
}

TEST_CASE("weight trajectory: p = (0, 1) shifts theta by t") {
  Rng rng(74);
  auto ws = random_weight_state(2, rng);
  ws.p = DynamicsParams{0.0, 1.0};
  auto L = random_map(2, 4, 4, rng);
  BlockTape tape;
  block_forward(L, ws, IntegratorConfig{4, 0.0, 1.0}, Activation::kTanh, &tape);
  auto theta0 = ws.theta0.flatten();
  auto thetaK = tape.thetas.back().flatten();
  CHECK(oracles::max_abs_diff(thetaK, Tensor(theta0.shape(), theta0.flat() + 1.0)) < 1e-14);
}

TEST_CASE("block with frozen zero weights is the identity flow") {
  Rng rng(75);
  auto L = random_map(4, 6, 6, rng);
  WeightState ws;
  ws.theta0 = BlockWeights::zeros(4);
  auto out = block_forward(L, ws, IntegratorConfig{4, 0.0, 1.0}, Activation::kRelu);
  CHECK(bitwise_equal(out.data, L.data));
}

TEST_CASE("K = 1, h = 1, frozen p reduces to the plain residual update bitwise") {
  Rng rng(76);
  auto L = random_map(4, 6, 6, rng);
  auto ws = random_weight_state(4, rng);
  BlockTape tape;
  auto out = block_forward(L, ws, IntegratorConfig{1, 0.0, 1.0}, Activation::kRelu, &tape);

  auto f = dynamics_forward(L, ws.theta0, Activation::kRelu);
  CHECK(bitwise_equal(out.data, Tensor(L.data.shape(), L.data.flat() + f.data.flat())));

  // Backward likewise collapses to one residual-block backprop.
  auto upstream = random_map(4, 6, 6, rng);
  auto bg = block_backward(tape, upstream);
  DynamicsTrace trace;
  dynamics_forward(L, ws.theta0, Activation::kRelu, &trace);
  auto dg = dynamics_backward(L, ws.theta0, Activation::kRelu, trace, upstream);
  CHECK(bitwise_equal(bg.input.data,
                      Tensor(upstream.data.shape(), upstream.data.flat() + dg.input.data.flat())));
  CHECK(bitwise_equal(bg.theta0.flatten(), dg.weights.flatten()));
  CHECK(bg.p.a_scale == 0.0);
  CHECK(bg.p.b_shift == 0.0);
}

TEST_CASE("block backward: zero upstream gradient zeroes everything") {
  Rng rng(77);
  auto L = random_map(3, 5, 5, rng);
  auto ws = random_weight_state(3, rng);
  ws.p = DynamicsParams{0.4, -0.2};
  BlockTape tape;
  block_forward(L, ws, IntegratorConfig{3, 0.0, 1.0}, Activation::kTanh, &tape);
  auto bg = block_backward(tape, FeatureMap(3, 5, 5));
  CHECK(bg.input.data.flat().abs().maxCoeff() == 0.0);
  CHECK(bg.theta0.flatten().flat().abs().maxCoeff() == 0.0);
  CHECK(bg.p.a_scale == 0.0);
  CHECK(bg.p.b_shift == 0.0);
}

TEST_CASE("block gradients match finite differences on a tiny coupled system") {
  Rng rng(78);
  auto L = random_map(4, 6, 6, rng);
  auto ws = random_weight_state(4, rng);
  ws.p = DynamicsParams{0.3, -0.1};
  const IntegratorConfig integ{2, 0.0, 1.0};
  auto projection = random_map(4, 6, 6, rng);

  const auto value = [&] {
    return dot(block_forward(L, ws, integ, Activation::kTanh).data, projection.data);
  };
  BlockTape tape;
  block_forward(L, ws, integ, Activation::kTanh, &tape);
  auto bg = block_backward(tape, projection);

  CHECK(oracles::fd_sweep(L.data.data(), bg.input.data.data(), L.data.size(), value) < 1e-6);
  CHECK(oracles::fd_sweep(ws.theta0.conv1.weights.data(), bg.theta0.conv1.weights.data(),
                          ws.theta0.conv1.weights.size(), value) < 1e-6);
  CHECK(oracles::fd_sweep(ws.theta0.conv1.bias.data(), bg.theta0.conv1.bias.data(),
                          ws.theta0.conv1.bias.size(), value) < 1e-6);
  CHECK(oracles::fd_sweep(ws.theta0.conv2.weights.data(), bg.theta0.conv2.weights.data(),
                          ws.theta0.conv2.weights.size(), value) < 1e-6);
  CHECK(oracles::fd_sweep(ws.theta0.conv2.bias.data(), bg.theta0.conv2.bias.data(),
                          ws.theta0.conv2.bias.size(), value) < 1e-6);
  CHECK(oracles::fd_sweep(&ws.p.a_scale, &bg.p.a_scale, 1, value) < 1e-6);
  CHECK(oracles::fd_sweep(&ws.p.b_shift, &bg.p.b_shift, 1, value) < 1e-6);
}

TEST_CASE("block rejects mismatched shapes") {
  Rng rng(79);
  auto ws = random_weight_state(3, rng);
  CHECK_THROWS_AS(block_forward(FeatureMap(2, 4, 4), ws, IntegratorConfig{2, 0.0, 1.0},
                                Activation::kRelu),
                  ShapeError);
  BlockTape tape;
  block_forward(random_map(3, 4, 4, rng), ws, IntegratorConfig{2, 0.0, 1.0}, Activation::kRelu,
                &tape);
  CHECK_THROWS_AS(block_backward(tape, FeatureMap(3, 5, 5)), ShapeError);
  CHECK_THROWS_AS(block_backward(BlockTape{}, FeatureMap(3, 4, 4)), ShapeError);
}

TEST_CASE("init draws bounded weights, zero biases, frozen dynamics, deterministically") {
  NetworkConfig config = tiny_config();
  Rng rng_a(5);
  Rng rng_b(5);
  auto pa = init_params(config, rng_a);
  auto pb = init_params(config, rng_b);
  CHECK(bitwise_equal(pa.lift.weights, pb.lift.weights));
  CHECK(bitwise_equal(pa.blocks[1].theta0.conv2.weights, pb.blocks[1].theta0.conv2.weights));
  CHECK(bitwise_equal(pa.project.weights, pb.project.weights));

  const double lift_bound = 1.0 / std::sqrt(2.0 * 9.0);
  CHECK(pa.lift.weights.flat().abs().maxCoeff() <= lift_bound);
  const double block_bound = 1.0 / std::sqrt(5.0 * 9.0);
  CHECK(pa.blocks[0].theta0.conv1.weights.flat().abs().maxCoeff() <= block_bound);
  CHECK(pa.lift.bias.flat().abs().maxCoeff() == 0.0);
  CHECK(pa.blocks[0].theta0.conv1.bias.flat().abs().maxCoeff() == 0.0);
  for (const auto& ws : pa.blocks) {
    CHECK(ws.p.a_scale == 0.0);
    CHECK(ws.p.b_shift == 0.0);
  }

  Rng rng_c(6);
  auto pc = init_params(config, rng_c);
  CHECK_FALSE(bitwise_equal(pa.lift.weights, pc.lift.weights));
}

TEST_CASE("network with zeroed projection conv returns the input untouched") {
  NetworkConfig config = tiny_config();
  Rng rng(80);
  auto params = init_params(config, rng);
  params.project.weights.flat().setZero();
  params.project.bias.flat().setZero();
  auto x = oracles::random_image(8, 8, rng);
  auto recon = network_forward(x, params, config);
  CHECK(bitwise_equal(recon.re, x.re));
  CHECK(bitwise_equal(recon.im, x.im));
}

TEST_CASE("network output matches input shape") {
  NetworkConfig config = tiny_config();
  Rng rng(81);
  auto params = init_params(config, rng);
  for (Index n : {16, 32}) {
    auto x = oracles::random_image(n, n, rng);
    auto recon = network_forward(x, params, config);
    CHECK(recon.height() == n);
    CHECK(recon.width() == n);
    CHECK(recon.re.all_finite());
    CHECK(recon.im.all_finite());
  }
}

TEST_CASE("augmented channels are zero at lift output and stay zero under frozen flow") {
  NetworkConfig config = tiny_config();
  Rng rng(82);
  auto params = init_params(config, rng);
  for (auto& ws : params.blocks) {
    ws.theta0.conv1.weights.flat().setZero();
    ws.theta0.conv1.bias.flat().setZero();
    ws.theta0.conv2.weights.flat().setZero();
    ws.theta0.conv2.bias.flat().setZero();
  }
  auto x = oracles::random_image(8, 8, rng);
  NetworkTape tape;
  network_forward(x, params, config, &tape);

  const Index f_ch = config.feature_channels;
  const Index width = config.state_channels();
  for (const auto& bt : tape.blocks) {
    for (const auto& state : bt.states) {
      for (Index c = f_ch; c < width; ++c) {
        Tensor plane({state.height(), state.width()});
        for (Index yy = 0; yy < state.height(); ++yy)
          for (Index xx = 0; xx < state.width(); ++xx) plane(yy, xx) = state.data(c, yy, xx);
        CHECK(plane.flat().abs().maxCoeff() == 0.0);
      }
    }
  }
}

TEST_CASE("whole-network gradients match finite differences") {
  NetworkConfig config = tiny_config();
  Rng rng(83);
  auto params = init_params(config, rng);
  auto x = oracles::random_image(8, 8, rng);
  auto proj = oracles::random_image(8, 8, rng);

  const auto value = [&] {
    auto recon = network_forward(x, params, config);
    return dot(recon.re, proj.re) + dot(recon.im, proj.im);
  };
  NetworkTape tape;
  network_forward(x, params, config, &tape);
  auto grads = network_backward(tape, params, config, proj);

  // Analytic gradient buffers in the same slot order as the parameters.
  ReconNetParams grad_params;
  grad_params.lift = grads.lift;
  grad_params.blocks = grads.blocks;
  grad_params.project = grads.project;
  auto slots = param_slots(params, config);
  auto grad_slots = param_slots(grad_params, config);
  REQUIRE(slots.size() == grad_slots.size());

  // 200 randomly chosen parameter coordinates.
  Index total = 0;
  for (const auto& s : slots) total += s.size;
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    Index flat = rng.uniform_index(total);
    std::size_t si = 0;
    while (flat >= slots[si].size) {
      flat -= slots[si].size;
      ++si;
    }
    CHECK(slots[si].name == grad_slots[si].name);
    worst = std::max(worst, oracles::fd_sweep(slots[si].data + flat, grad_slots[si].data + flat,
                                              1, value));
  }
  CHECK(worst < 1e-6);

  // Full sweep over the complex input.
  CHECK(oracles::fd_sweep(x.re.data(), grads.input.re.data(), x.re.size(), value) < 1e-6);
  CHECK(oracles::fd_sweep(x.im.data(), grads.input.im.data(), x.im.size(), value) < 1e-6);
}

TEST_CASE("baseline mode equals a directly coded residual pipeline bitwise") {
  NetworkConfig config = tiny_config();
  config.mode = NetworkMode::kResidualBaseline;
  config.augment_channels = 2;  // ignored in baseline mode
  config.integrator.steps = 4;  // likewise pinned to one step
  Rng rng(84);
  auto params = init_params(config, rng);
  auto x = oracles::random_image(8, 8, rng);
  auto recon = network_forward(x, params, config);

  // Plain ResNet: lift, N residual updates, project, global residual.
  const Index n = x.re.size();
  FeatureMap packed(2, 8, 8);
  packed.data.flat().segment(0, n) = x.re.flat();
  packed.data.flat().segment(n, n) = x.im.flat();
  FeatureMap L = conv2d_forward(packed, params.lift);
  for (const auto& ws : params.blocks) {
    auto f = dynamics_forward(L, ws.theta0, config.activation);
    L = FeatureMap(Tensor(L.data.shape(), L.data.flat() + f.data.flat()));
  }
  FeatureMap out = conv2d_forward(L, params.project);
  out.data = out.data + packed.data;
  CHECK((recon.re.flat() == out.data.flat().segment(0, n)).all());
  CHECK((recon.im.flat() == out.data.flat().segment(n, n)).all());
}

TEST_CASE("baseline gradients match finite differences") {
  NetworkConfig config = tiny_config();
  config.mode = NetworkMode::kResidualBaseline;
  Rng rng(85);
  auto params = init_params(config, rng);
  auto x = oracles::random_image(8, 8, rng);
  auto proj = oracles::random_image(8, 8, rng);
  const auto value = [&] {
    auto recon = network_forward(x, params, config);
    return dot(recon.re, proj.re) + dot(recon.im, proj.im);
  };
  NetworkTape tape;
  network_forward(x, params, config, &tape);
  auto grads = network_backward(tape, params, config, proj);
  CHECK(oracles::fd_sweep(params.blocks[0].theta0.conv1.weights.data(),
                          grads.blocks[0].theta0.conv1.weights.data(),
                          params.blocks[0].theta0.conv1.weights.size(), value) < 1e-6);
  CHECK(oracles::fd_sweep(params.lift.weights.data(), grads.lift.weights.data(),
                          params.lift.weights.size(), value) < 1e-6);
  CHECK(oracles::fd_sweep(x.re.data(), grads.input.re.data(), x.re.size(), value) < 1e-6);
}

TEST_CASE("baseline parameter count is smaller by the dynamics scalars and augmented columns") {
  NetworkConfig ode = tiny_config();
  NetworkConfig base = ode;
  base.mode = NetworkMode::kResidualBaseline;
  Rng rng(86);
  auto ode_params = init_params(ode, rng);
  auto base_params = init_params(base, rng);
  const Index ode_total = total_param_count(ode_params, ode);
  const Index base_total = total_param_count(base_params, base);

  const Index N = ode.num_blocks, A = ode.augment_channels;
  const Index C = ode.feature_channels + A, F = ode.feature_channels;
  // Per block: two C^2 3x3 convs + biases + two dynamics scalars vs the F^2
  // versions; projection widens by A input channels.
  const Index expected = N * (18 * (C * C - F * F) + 2 * A + 2) + 18 * A;
  CHECK(ode_total - base_total == expected);
  CHECK(base_total < ode_total);
}

TEST_CASE("parameter slots enumerate uniquely, alias storage, and skip p in baseline mode") {
  NetworkConfig config = tiny_config();
  Rng rng(87);
  auto params = init_params(config, rng);
  auto slots = param_slots(params, config);

  Index total = 0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    CHECK(slots[i].size > 0);
    total += slots[i].size;
    for (std::size_t j = i + 1; j < slots.size(); ++j) CHECK(slots[i].name != slots[j].name);
  }
  CHECK(total == total_param_count(params, config));

  // Writing through a slot mutates the underlying parameter.
  auto it = std::find_if(slots.begin(), slots.end(),
                         [](const ParamSlot& s) { return s.name == "block1.p.a_scale"; });
  REQUIRE(it != slots.end());
  CHECK(it->regularized);
  *it->data = 0.75;
  CHECK(params.blocks[1].p.a_scale == 0.75);

  // Biases are present but not regularized.
  auto bias = std::find_if(slots.begin(), slots.end(),
                           [](const ParamSlot& s) { return s.name == "lift.bias"; });
  REQUIRE(bias != slots.end());
  CHECK_FALSE(bias->regularized);

  NetworkConfig base = config;
  base.mode = NetworkMode::kResidualBaseline;
  auto base_params = init_params(base, rng);
  for (const auto& s : param_slots(base_params, base)) CHECK(s.name.find(".p.") == std::string::npos);
}

TEST_CASE("network validates configuration and parameter agreement") {
  NetworkConfig config = tiny_config();
  Rng rng(88);
  auto params = init_params(config, rng);
  auto x = oracles::random_image(8, 8, rng);

  NetworkConfig bad = config;
  bad.num_blocks = 0;
  CHECK_THROWS_AS(network_forward(x, params, bad), ConfigError);

  NetworkConfig wider = config;
  wider.feature_channels = 6;
  CHECK_THROWS_AS(network_forward(x, params, wider), ShapeError);

  CHECK_THROWS_AS(network_mode_from_string("resnet"), ConfigError);
  CHECK(network_mode_from_string(to_string(NetworkMode::kOde)) == NetworkMode::kOde);
  CHECK(network_mode_from_string(to_string(NetworkMode::kResidualBaseline)) ==
        NetworkMode::kResidualBaseline);
}
