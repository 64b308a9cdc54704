#include "odemri/mri_model.hpp"

#include <string>

namespace odemri {

namespace {

void require_geometry(const ComplexImage& x, const CoilSensitivities& sens,
                      const SamplingMask& mask) {
  if (sens.maps.empty()) throw ShapeError("sensitivities must have at least one coil");
  for (const auto& s : sens.maps) require_same_shape(s, x, "coil map vs image");
  if (mask.height() != x.height() || mask.width() != x.width())
    throw ShapeError("mask shape does not match image");
}

}  // namespace

SamplingMask make_mask(Index height, Index width, Index accel_row, Index accel_col,
                       Index acs_size) {
  if (accel_row < 1 || accel_col < 1)
    throw ShapeError("acceleration factors must be >= 1");
  if (acs_size < 0 || acs_size > std::min(height, width))
    throw ShapeError("acs_size must lie in [0, min(H, W)], got " + std::to_string(acs_size));
  SamplingMask mask{Tensor({height, width}), acs_size};
  const Index r0 = (height - acs_size) / 2;
  const Index c0 = (width - acs_size) / 2;
  for (Index r = 0; r < height; ++r) {
    for (Index c = 0; c < width; ++c) {
      const bool lattice = (r % accel_row == 0) && (c % accel_col == 0);
      const bool acs = acs_size > 0 && r >= r0 && r < r0 + acs_size && c >= c0 && c < c0 + acs_size;
      if (lattice || acs) mask.keep(r, c) = 1.0;
    }
  }
  return mask;
}

ComplexImage apply_mask(const ComplexImage& img, const SamplingMask& mask) {
  if (mask.height() != img.height() || mask.width() != img.width())
    throw ShapeError("mask shape does not match image");
  const auto on = mask.keep.flat() != 0.0;
  return {Tensor(img.re.shape(), on.select(img.re.flat(), 0.0)),
          Tensor(img.im.shape(), on.select(img.im.flat(), 0.0))};
}

std::vector<ComplexImage> forward_encoding(const ComplexImage& x, const CoilSensitivities& sens,
                                           const SamplingMask& mask) {
  require_geometry(x, sens, mask);
  std::vector<ComplexImage> out;
  out.reserve(sens.maps.size());
  for (const auto& coil : sens.maps)
    out.push_back(apply_mask(fft2_centered(cmul(coil, x)), mask));
  return out;
}

ComplexImage adjoint_encoding(const std::vector<ComplexImage>& d, const CoilSensitivities& sens,
                              const SamplingMask& mask) {
  if (d.size() != sens.maps.size()) throw ShapeError("coil count mismatch between data and maps");
  if (d.empty()) throw ShapeError("adjoint needs at least one coil");
  require_geometry(d.front(), sens, mask);
  ComplexImage acc(d.front().height(), d.front().width());
  for (std::size_t c = 0; c < d.size(); ++c) {
    const auto img = ifft2_centered(apply_mask(d[c], mask));
    const auto weighted = cmul_conj(img, sens.maps[c]);
    acc.re.flat() += weighted.re.flat();
    acc.im.flat() += weighted.im.flat();
  }
  return acc;
}

double data_objective(const ComplexImage& x, const KSpaceSample& sample) {
  const auto predicted = forward_encoding(x, sample.sens, sample.mask);
  if (predicted.size() != sample.kspace.size())
    throw ShapeError("sample coil count mismatch");
  double total = 0.0;
  for (std::size_t c = 0; c < predicted.size(); ++c)
    total += squared_norm(csub(sample.kspace[c], predicted[c]));
  return total;
}

ComplexImage zero_filled(const KSpaceSample& sample) {
  return adjoint_encoding(sample.kspace, sample.sens, sample.mask);
}

}  // namespace odemri
