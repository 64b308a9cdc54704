#pragma once

#include <string>

#include "odemri/tensor.hpp"

namespace odemri {

// Real [C, H, W] feature map flowing through the network.
struct FeatureMap {
  Tensor data;

  FeatureMap() = default;
  FeatureMap(Index channels, Index height, Index width) : data({channels, height, width}) {}
  explicit FeatureMap(Tensor t) : data(std::move(t)) {
    if (data.ndim() != 3) throw ShapeError("feature map tensor must be [C, H, W]");
  }

  Index channels() const { return data.dim(0); }
  Index height() const { return data.dim(1); }
  Index width() const { return data.dim(2); }
};

struct ConvParams {
  Index out_channels = 0;
  Index in_channels = 0;
  Index kernel_h = 3;
  Index kernel_w = 3;
  Tensor weights;  // [out, in, kh, kw]
  Tensor bias;     // [out]

  static ConvParams zeros(Index out, Index in, Index kh = 3, Index kw = 3);
  Index param_count() const { return weights.size() + bias.size(); }
};

// Same-spatial-size convolution in the cross-correlation convention, zero
// padded by half the (odd) kernel, plus a per-output-channel bias.
FeatureMap conv2d_forward(const FeatureMap& input, const ConvParams& params);

struct ConvGrads {
  FeatureMap input;
  ConvParams params;
};

// Exact gradients of conv2d_forward with respect to input, weights and bias.
ConvGrads conv2d_backward(const FeatureMap& input, const ConvParams& params,
                          const FeatureMap& grad_out);

enum class Activation { kRelu, kTanh, kSoftplus };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation kind);

FeatureMap activate(const FeatureMap& x, Activation kind);
// Upstream gradient times the elementwise derivative at pre-activation x.
// The relu derivative at exactly 0 is taken as 0.
FeatureMap activate_backward(const FeatureMap& x, const FeatureMap& grad_out, Activation kind);

// Parameters of one dynamics evaluation: two channel-preserving convolutions
// around the activation. The flat view is the theta vector the weight ODE
// evolves; flatten/unflatten is a bitwise bijection.
struct BlockWeights {
  ConvParams conv1;
  ConvParams conv2;

  static BlockWeights zeros(Index channels, Index kh = 3, Index kw = 3);
  Index param_count() const { return conv1.param_count() + conv2.param_count(); }
  Index channels() const { return conv1.in_channels; }
  Tensor flatten() const;
  static BlockWeights unflatten(const Tensor& theta, const BlockWeights& like);
};

// Intermediates of one dynamics evaluation, retained for the backward pass.
struct DynamicsTrace {
  FeatureMap conv1_out;
  FeatureMap hidden;
};

// The ODE right-hand side f(L, theta) = conv2(act(conv1(L))); preserves the
// full channel count and spatial size.
FeatureMap dynamics_forward(const FeatureMap& L, const BlockWeights& w, Activation kind,
                            DynamicsTrace* trace = nullptr);

struct DynamicsGrads {
  FeatureMap input;
  BlockWeights weights;
};

DynamicsGrads dynamics_backward(const FeatureMap& L, const BlockWeights& w, Activation kind,
                                const DynamicsTrace& trace, const FeatureMap& grad_out);

}  // namespace odemri
