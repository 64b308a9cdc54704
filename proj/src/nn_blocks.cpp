#include "odemri/nn_blocks.hpp"

#include <Eigen/Dense>
#include <algorithm>

namespace odemri {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRowMat = Eigen::Map<RowMat>;
using ConstMapRowMat = Eigen::Map<const RowMat>;

void require_conv_shapes(const FeatureMap& input, const ConvParams& p) {
  if (input.channels() != p.in_channels)
    throw ShapeError("conv input channels do not match params");
  if (p.kernel_h % 2 == 0 || p.kernel_w % 2 == 0)
    throw ShapeError("conv kernels must have odd extents");
  if (p.weights.ndim() != 4 || p.weights.dim(0) != p.out_channels ||
      p.weights.dim(1) != p.in_channels || p.weights.dim(2) != p.kernel_h ||
      p.weights.dim(3) != p.kernel_w || p.bias.size() != p.out_channels)
    throw ShapeError("conv parameter tensors are inconsistent");
}

// Patch matrix: row (c, ky, kx), column (y, x); zero padding folded in.
RowMat im2col(const FeatureMap& input, Index kh, Index kw) {
  const Index C = input.channels(), H = input.height(), W = input.width();
  const Index ph = kh / 2, pw = kw / 2;
  RowMat patches(C * kh * kw, H * W);
  Index row = 0;
  for (Index c = 0; c < C; ++c) {
    const double* plane = input.data.data() + c * H * W;
    for (Index ky = 0; ky < kh; ++ky) {
      for (Index kx = 0; kx < kw; ++kx, ++row) {
        const Index dy = ky - ph, dx = kx - pw;
        const Index x0 = std::max<Index>(0, -dx);
        const Index x1 = std::min<Index>(W, W - dx);
        double* dst = patches.data() + row * H * W;
        for (Index y = 0; y < H; ++y, dst += W) {
          const Index sy = y + dy;
          if (sy < 0 || sy >= H) {
            std::fill_n(dst, W, 0.0);
            continue;
          }
          const double* src = plane + sy * W + dx;
          std::fill(dst, dst + x0, 0.0);
          std::copy(src + x0, src + x1, dst + x0);
          std::fill(dst + x1, dst + W, 0.0);
        }
      }
    }
  }
  return patches;
}

// Transpose of im2col: scatter-add patch-space gradients back onto the image.
void col2im_add(const RowMat& cols, Index kh, Index kw, FeatureMap& grad_input) {
  const Index C = grad_input.channels(), H = grad_input.height(), W = grad_input.width();
  const Index ph = kh / 2, pw = kw / 2;
  Index row = 0;
  for (Index c = 0; c < C; ++c) {
    double* plane = grad_input.data.data() + c * H * W;
    for (Index ky = 0; ky < kh; ++ky) {
      for (Index kx = 0; kx < kw; ++kx, ++row) {
        const Index dy = ky - ph, dx = kx - pw;
        const Index x0 = std::max<Index>(0, -dx);
        const Index x1 = std::min<Index>(W, W - dx);
        const double* src = cols.data() + row * H * W;
        for (Index y = 0; y < H; ++y, src += W) {
          const Index sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          double* dst = plane + sy * W + dx;
          for (Index x = x0; x < x1; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

}  // namespace

ConvParams ConvParams::zeros(Index out, Index in, Index kh, Index kw) {
  ConvParams p;
  p.out_channels = out;
  p.in_channels = in;
  p.kernel_h = kh;
  p.kernel_w = kw;
  p.weights = Tensor({out, in, kh, kw});
  p.bias = Tensor({out});
  return p;
}

FeatureMap conv2d_forward(const FeatureMap& input, const ConvParams& p) {
  require_conv_shapes(input, p);
  const Index H = input.height(), W = input.width();
  const RowMat patches = im2col(input, p.kernel_h, p.kernel_w);
  FeatureMap out(p.out_channels, H, W);
  MapRowMat om(out.data.data(), p.out_channels, H * W);
  ConstMapRowMat wm(p.weights.data(), p.out_channels, patches.rows());
  om.noalias() = wm * patches;
  for (Index o = 0; o < p.out_channels; ++o) om.row(o).array() += p.bias(o);
  return out;
}

ConvGrads conv2d_backward(const FeatureMap& input, const ConvParams& p,
                          const FeatureMap& grad_out) {
  require_conv_shapes(input, p);
  if (grad_out.channels() != p.out_channels || grad_out.height() != input.height() ||
      grad_out.width() != input.width())
    throw ShapeError("conv grad_out shape does not match the forward call");
  const Index H = input.height(), W = input.width();
  const RowMat patches = im2col(input, p.kernel_h, p.kernel_w);

  ConvGrads g{FeatureMap(p.in_channels, H, W),
              ConvParams::zeros(p.out_channels, p.in_channels, p.kernel_h, p.kernel_w)};
  ConstMapRowMat gm(grad_out.data.data(), p.out_channels, H * W);
  MapRowMat gwm(g.params.weights.data(), p.out_channels, patches.rows());
  gwm.noalias() = gm * patches.transpose();
  for (Index o = 0; o < p.out_channels; ++o) g.params.bias(o) = gm.row(o).sum();

  ConstMapRowMat wm(p.weights.data(), p.out_channels, patches.rows());
  const RowMat grad_patches = wm.transpose() * gm;
  col2im_add(grad_patches, p.kernel_h, p.kernel_w, g.input);
  return g;
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "softplus") return Activation::kSoftplus;
  throw ConfigError("unknown activation: " + name);
}

std::string to_string(Activation kind) {
  switch (kind) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSoftplus: return "softplus";
  }
  return "relu";
}

FeatureMap activate(const FeatureMap& x, Activation kind) {
  FeatureMap out(x.channels(), x.height(), x.width());
  const auto& v = x.data.flat();
  switch (kind) {
    case Activation::kRelu:
      out.data.flat() = v.max(0.0);
      break;
    case Activation::kTanh:
      out.data.flat() = v.tanh();
      break;
    case Activation::kSoftplus:
      // max(x, 0) + log1p(exp(-|x|)) is overflow-safe on both tails.
      out.data.flat() = v.max(0.0) + (-v.abs()).exp().log1p();
      break;
  }
  return out;
}

FeatureMap activate_backward(const FeatureMap& x, const FeatureMap& grad_out, Activation kind) {
  require_same_shape(x.data, grad_out.data, "activation backward");
  FeatureMap out(x.channels(), x.height(), x.width());
  const auto& v = x.data.flat();
  const auto& g = grad_out.data.flat();
  switch (kind) {
    case Activation::kRelu:
      out.data.flat() = (v > 0.0).select(g, 0.0);
      break;
    case Activation::kTanh:
      out.data.flat() = g * (1.0 - v.tanh().square());
      break;
    case Activation::kSoftplus:
      out.data.flat() = g / (1.0 + (-v).exp());
      break;
  }
  return out;
}

BlockWeights BlockWeights::zeros(Index channels, Index kh, Index kw) {
  return {ConvParams::zeros(channels, channels, kh, kw),
          ConvParams::zeros(channels, channels, kh, kw)};
}

Tensor BlockWeights::flatten() const {
  Tensor theta({param_count()});
  double* dst = theta.data();
  for (const Tensor* part : {&conv1.weights, &conv1.bias, &conv2.weights, &conv2.bias}) {
    std::copy_n(part->data(), part->size(), dst);
    dst += part->size();
  }
  return theta;
}

BlockWeights BlockWeights::unflatten(const Tensor& theta, const BlockWeights& like) {
  if (theta.size() != like.param_count())
    throw ShapeError("theta length does not match block parameter count");
  BlockWeights w = like;
  const double* src = theta.data();
  for (Tensor* part : {&w.conv1.weights, &w.conv1.bias, &w.conv2.weights, &w.conv2.bias}) {
    std::copy_n(src, part->size(), part->data());
    src += part->size();
  }
  return w;
}

FeatureMap dynamics_forward(const FeatureMap& L, const BlockWeights& w, Activation kind,
                            DynamicsTrace* trace) {
  FeatureMap z1 = conv2d_forward(L, w.conv1);
  FeatureMap hidden = activate(z1, kind);
  FeatureMap out = conv2d_forward(hidden, w.conv2);
  if (trace) {
    trace->conv1_out = std::move(z1);
    trace->hidden = std::move(hidden);
  }
  return out;
}

DynamicsGrads dynamics_backward(const FeatureMap& L, const BlockWeights& w, Activation kind,
                                const DynamicsTrace& trace, const FeatureMap& grad_out) {
  ConvGrads g2 = conv2d_backward(trace.hidden, w.conv2, grad_out);
  FeatureMap grad_z1 = activate_backward(trace.conv1_out, g2.input, kind);
  ConvGrads g1 = conv2d_backward(L, w.conv1, grad_z1);
  return {std::move(g1.input), {std::move(g1.params), std::move(g2.params)}};
}

}  // namespace odemri
