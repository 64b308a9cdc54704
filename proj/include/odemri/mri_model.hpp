#pragma once

#include <vector>

#include "odemri/fft.hpp"
#include "odemri/tensor.hpp"

namespace odemri {

// Binary k-space sampling pattern in the centered layout. `acs_size` is the
// side of the fully sampled central calibration square (0 = none).
struct SamplingMask {
  Tensor keep;  // [H, W], entries 0.0 or 1.0
  Index acs_size = 0;

  Index height() const { return keep.dim(0); }
  Index width() const { return keep.dim(1); }
};

// Regular lattice undersampling: keep (r, c) iff r % accel_row == 0 and
// c % accel_col == 0, plus the centered acs_size x acs_size block.
SamplingMask make_mask(Index height, Index width, Index accel_row, Index accel_col,
                       Index acs_size);

// Per-coil complex spatial weightings, sum-of-squares normalized by datagen.
struct CoilSensitivities {
  std::vector<ComplexImage> maps;

  Index num_coils() const { return static_cast<Index>(maps.size()); }
  Index height() const { return maps.front().height(); }
  Index width() const { return maps.front().width(); }
};

// One acquisition: undersampled multicoil k-space, the mask and coil maps
// that produced it, and the fully sampled ground-truth image.
struct KSpaceSample {
  std::vector<ComplexImage> kspace;
  SamplingMask mask;
  CoilSensitivities sens;
  ComplexImage truth;
};

// Copies img where the mask keeps samples; masked-out entries are exactly 0.0.
ComplexImage apply_mask(const ComplexImage& img, const SamplingMask& mask);

// Encoding operator: per coil, mask o fft2_centered(S_c o x).
std::vector<ComplexImage> forward_encoding(const ComplexImage& x, const CoilSensitivities& sens,
                                           const SamplingMask& mask);

// Adjoint: sum_c conj(S_c) o ifft2_centered(mask o d_c).
ComplexImage adjoint_encoding(const std::vector<ComplexImage>& d, const CoilSensitivities& sens,
                              const SamplingMask& mask);

// Least-squares data fit sum_c ||d_c - (Ex)_c||^2.
double data_objective(const ComplexImage& x, const KSpaceSample& sample);

// Adjoint applied to the measured data; the network's input image.
ComplexImage zero_filled(const KSpaceSample& sample);

}  // namespace odemri
