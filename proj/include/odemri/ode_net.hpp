#pragma once

#include <string>
#include <vector>

#include "odemri/nn_blocks.hpp"
#include "odemri/rng.hpp"
#include "odemri/tensor.hpp"

namespace odemri {

// Uniform forward-Euler grid on [t0, t1].
struct IntegratorConfig {
  Index steps = 4;
  double t0 = 0.0;
  double t1 = 1.0;

  double step() const { return (t1 - t0) / static_cast<double>(steps); }
  void validate() const;
};

// Generic explicit Euler driver: state += h * f(state, t). Works for any
// state with value semantics, operator+ and double* (doubles, Tensors, ...).
template <typename State, typename Dynamics>
State euler_integrate(State state, const IntegratorConfig& integ, Dynamics&& f) {
  integ.validate();
  const double h = integ.step();
  for (Index k = 0; k < integ.steps; ++k) {
    const double t = integ.t0 + h * static_cast<double>(k);
    state = state + h * f(state, t);
  }
  return state;
}

// Two scalars driving the affine weight flow dtheta/dt = a*theta + b.
struct DynamicsParams {
  double a_scale = 0.0;
  double b_shift = 0.0;
};

// Learnable state of one block: initial weights plus their flow parameters.
struct WeightState {
  BlockWeights theta0;
  DynamicsParams p;
};

// Right-hand side of the weight flow, applied to the flattened theta vector.
Tensor weight_dynamics_w(const Tensor& theta, const DynamicsParams& p);

enum class NetworkMode { kOde, kResidualBaseline };

NetworkMode network_mode_from_string(const std::string& name);
std::string to_string(NetworkMode mode);

struct NetworkConfig {
  Index num_blocks = 5;
  Index feature_channels = 16;
  Index augment_channels = 2;
  IntegratorConfig integrator;
  Activation activation = Activation::kRelu;
  NetworkMode mode = NetworkMode::kOde;

  // The baseline is the same pipeline pinned to one plain residual update per
  // block: no augmented channels, a single unit step, weights held constant.
  NetworkConfig resolved() const;
  // Channel width the blocks operate on, after baseline resolution.
  Index state_channels() const;
  void validate() const;
};

// True when both configs describe the same parameter layout and dynamics.
bool same_network_shape(const NetworkConfig& a, const NetworkConfig& b);

// One forward-Euler update of the feature state: L + h * f(L, theta).
FeatureMap euler_step(const FeatureMap& L, const BlockWeights& theta, double h, Activation kind);

// Everything the backward pass needs from one block's forward integration:
// the state and weight trajectories plus each step's inner conv intermediates.
struct BlockTape {
  double h = 0.0;
  Activation kind = Activation::kRelu;
  DynamicsParams p;
  std::vector<FeatureMap> states;     // L_0 .. L_K
  std::vector<BlockWeights> thetas;   // theta_0 .. theta_K
  std::vector<DynamicsTrace> traces;  // one per step
};

// Jointly integrates the coupled system over [t0, t1]:
//   theta_{k+1} = theta_k + h * w(theta_k, p)
//   L_{k+1}     = L_k     + h * f(L_k, theta_k)
// Returns L_K; fills `tape` when given (required for the backward pass).
FeatureMap block_forward(const FeatureMap& L_in, const WeightState& ws,
                         const IntegratorConfig& integ, Activation kind,
                         BlockTape* tape = nullptr);

struct BlockGrads {
  FeatureMap input;
  BlockWeights theta0;
  DynamicsParams p;
};

// Exact reverse-mode gradient of the unrolled recursion above. Walking
// k = K-1 .. 0 with running cotangents gL (of L_{k+1}) and gtheta (of
// theta_{k+1}):
//   grad_a  += h * <theta_k, gtheta>          grad_b += h * sum(gtheta)
//   gtheta   = (1 + h*a) * gtheta + h * df/dtheta_k^T gL
//   gL       = gL + h * df/dL_k^T gL
BlockGrads block_backward(const BlockTape& tape, const FeatureMap& grad_Lout);

// All learnable parameters of the reconstruction network.
struct ReconNetParams {
  ConvParams lift;                  // 2 -> F_ch
  std::vector<WeightState> blocks;  // N blocks on F_ch + A channels
  ConvParams project;               // F_ch + A -> 2
};

// Uniform [-s, s] init with s = 1/sqrt(fan_in) per conv, zero biases, frozen
// dynamics (p = 0). Consumes `rng` in a fixed parameter order.
ReconNetParams init_params(const NetworkConfig& config, Rng& rng);

// Same shapes as init_params, every value zero. Handy as a gradient
// accumulator or as the target of a checkpoint load.
ReconNetParams zero_params(const NetworkConfig& config);

struct NetworkTape {
  FeatureMap packed;            // 2-channel real/imag input
  std::vector<BlockTape> blocks;
};

// Full pipeline: pack complex input as two real channels, lift conv, append
// zero-initialized augmented channels, N blocks in sequence, projection conv,
// global residual add of the packed input, unpack. `tape` enables backward.
ComplexImage network_forward(const ComplexImage& x0, const ReconNetParams& params,
                             const NetworkConfig& config, NetworkTape* tape = nullptr);

struct NetworkGrads {
  ConvParams lift;
  std::vector<WeightState> blocks;
  ConvParams project;
  ComplexImage input;
};

NetworkGrads network_backward(const NetworkTape& tape, const ReconNetParams& params,
                              const NetworkConfig& config, const ComplexImage& grad_recon);

// Named view into one contiguous run of learnable doubles. `regularized`
// marks slots that enter the L2 penalty (conv weights and dynamics scalars;
// biases stay out).
struct ParamSlot {
  std::string name;
  double* data = nullptr;
  Index size = 0;
  bool regularized = false;
};

// Deterministic enumeration of every learnable slot. In baseline mode the
// dynamics scalars are omitted (they are frozen at zero, not learned).
std::vector<ParamSlot> param_slots(ReconNetParams& params, const NetworkConfig& config);

Index total_param_count(ReconNetParams& params, const NetworkConfig& config);

}  // namespace odemri
