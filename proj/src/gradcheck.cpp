#include "odemri/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "odemri/trainer.hpp"

namespace odemri {

namespace {

constexpr double kEps = 1e-5;
constexpr double kTolerance = 1e-6;

double rel_err(double analytic, double fd) {
  return std::abs(analytic - fd) / std::max({1.0, std::abs(analytic), std::abs(fd)});
}

}  // namespace

GradcheckResult run_gradcheck(Index size, std::uint64_t seed, bool perturb) {
  if (size < 2) throw ConfigError("gradcheck size must be at least 2");

  NetworkConfig net;
  net.num_blocks = 2;
  net.feature_channels = 4;
  net.augment_channels = 1;
  net.integrator.steps = 2;
  // tanh keeps the objective smooth; relu kinks would poison the finite
  // differences at coordinates near activation boundaries.
  net.activation = Activation::kTanh;

  Rng rng(seed);
  ComplexImage x0(size, size);
  ComplexImage truth(size, size);
  for (Index i = 0; i < x0.re.size(); ++i) {
    x0.re(i) = rng.gaussian();
    x0.im(i) = rng.gaussian();
    truth.re(i) = rng.gaussian();
    truth.im(i) = rng.gaussian();
  }
  Rng init_rng = rng.stream(1);
  ReconNetParams params = init_params(net, init_rng);

  const auto loss_value = [&]() {
    return mse_loss(network_forward(x0, params, net), truth);
  };

  NetworkTape tape;
  const ComplexImage recon = network_forward(x0, params, net, &tape);
  NetworkGrads analytic = network_backward(tape, params, net, mse_loss_gradient(recon, truth));
  ReconNetParams grads{std::move(analytic.lift), std::move(analytic.blocks),
                       std::move(analytic.project)};
  const auto pslots = param_slots(params, net);
  const auto gslots = param_slots(grads, net);
  if (perturb && !gslots.empty() && gslots.front().size > 0) gslots.front().data[0] += 1e-4;

  const auto start = std::chrono::steady_clock::now();
  GradcheckResult result;
  const auto sweep = [&](double* buf, const double* grad, Index n) {
    for (Index i = 0; i < n; ++i) {
      const double saved = buf[i];
      buf[i] = saved + kEps;
      const double up = loss_value();
      buf[i] = saved - kEps;
      const double down = loss_value();
      buf[i] = saved;
      const double fd = (up - down) / (2.0 * kEps);
      result.max_rel_err = std::max(result.max_rel_err, rel_err(grad[i], fd));
      result.coords += 1;
    }
  };
  for (std::size_t k = 0; k < pslots.size(); ++k)
    sweep(pslots[k].data, gslots[k].data, pslots[k].size);
  sweep(x0.re.data(), analytic.input.re.data(), x0.re.size());
  sweep(x0.im.data(), analytic.input.im.data(), x0.im.size());

  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.passed = result.max_rel_err < kTolerance;
  return result;
}

}  // namespace odemri
