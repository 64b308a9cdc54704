#include "odemri/fft.hpp"

#include <cmath>

namespace odemri {

namespace detail {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j |= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        // Twiddles from std::polar each time: slower than a recurrence but
        // keeps rounding error at the few-ulp level the tolerances assume.
        const std::complex<double> w = std::polar(1.0, ang * static_cast<double>(k));
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

void dft_direct(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  const double base = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(n);
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      acc += a[j] * std::polar(1.0, base * static_cast<double>((k * j) % n));
    out[k] = acc;
  }
  a = std::move(out);
}

}  // namespace

void dft1d(std::vector<std::complex<double>>& a, bool inverse) {
  if (a.size() < 2) return;
  if (is_pow2(a.size()))
    fft_radix2(a, inverse);
  else
    dft_direct(a, inverse);
}

}  // namespace detail

namespace {

ComplexImage transform2d(const ComplexImage& img, bool inverse) {
  const Index h = img.height();
  const Index w = img.width();
  if (h < 1 || w < 1) throw ShapeError("fft2 requires a non-empty image");

  // Gather with ifftshift: centered DC moves to (0, 0).
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(h * w));
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c)
      buf[static_cast<std::size_t>(r * w + c)] = img.at((r + h / 2) % h, (c + w / 2) % w);

  std::vector<std::complex<double>> line;
  line.resize(static_cast<std::size_t>(w));
  for (Index r = 0; r < h; ++r) {
    std::copy_n(buf.begin() + r * w, w, line.begin());
    detail::dft1d(line, inverse);
    std::copy_n(line.begin(), w, buf.begin() + r * w);
  }
  line.resize(static_cast<std::size_t>(h));
  for (Index c = 0; c < w; ++c) {
    for (Index r = 0; r < h; ++r) line[static_cast<std::size_t>(r)] = buf[static_cast<std::size_t>(r * w + c)];
    detail::dft1d(line, inverse);
    for (Index r = 0; r < h; ++r) buf[static_cast<std::size_t>(r * w + c)] = line[static_cast<std::size_t>(r)];
  }

  // Scatter with fftshift and apply the orthonormal scale.
  const double scale = 1.0 / std::sqrt(static_cast<double>(h) * static_cast<double>(w));
  ComplexImage out(h, w);
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c)
      out.set((r + h / 2) % h, (c + w / 2) % w, buf[static_cast<std::size_t>(r * w + c)] * scale);
  return out;
}

}  // namespace

ComplexImage fft2_centered(const ComplexImage& img) { return transform2d(img, false); }

ComplexImage ifft2_centered(const ComplexImage& img) { return transform2d(img, true); }

}  // namespace odemri
