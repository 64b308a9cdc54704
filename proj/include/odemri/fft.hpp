#pragma once

#include <complex>
#include <vector>

#include "odemri/tensor.hpp"

namespace odemri {

// Centered orthonormal 2-D DFT: ifftshift, forward DFT scaled by 1/sqrt(H*W),
// fftshift. DC ends up at (H/2, W/2) with floor division, and the transform is
// unitary, so ifft2_centered is both the inverse and the adjoint.
ComplexImage fft2_centered(const ComplexImage& img);
ComplexImage ifft2_centered(const ComplexImage& img);

namespace detail {

// Unscaled 1-D DFT, in place. Radix-2 Cooley-Tukey for power-of-two lengths,
// direct summation otherwise (fine at the sizes this project runs).
void dft1d(std::vector<std::complex<double>>& a, bool inverse);

}  // namespace detail

}  // namespace odemri
