#include <doctest.h>

#include "odemri/fft.hpp"
#include "odemri/rng.hpp"
#include "oracles.hpp"

using namespace odemri;

TEST_CASE("fft2_centered of zeros is zeros") {
  ComplexImage z(4, 4);
  auto out = fft2_centered(z);
  CHECK(out.re.flat().abs().maxCoeff() == 0.0);
  CHECK(out.im.flat().abs().maxCoeff() == 0.0);
}

TEST_CASE("fft2_centered of a centered delta has flat magnitude 1/sqrt(HW)") {
  ComplexImage x(4, 4);
  x.re(2, 2) = 1.0;  // centered DC position
  auto out = fft2_centered(x);
  for (Index r = 0; r < 4; ++r)
    for (Index c = 0; c < 4; ++c) CHECK(std::abs(out.at(r, c)) == doctest::Approx(0.25).epsilon(1e-12));
  // And the inverse restores the delta.
  auto back = ifft2_centered(out);
  CHECK(oracles::max_abs_diff(back, x) < 1e-13);
}

TEST_CASE("fft2_centered matches the direct-summation oracle") {
  Rng rng(7);
  for (Index n : {4, 5, 7, 8, 16}) {
    auto x = oracles::random_image(n, n, rng);
    auto fast = fft2_centered(x);
    auto ref = oracles::dft2_centered_direct(x, false);
    CHECK(oracles::max_abs_diff(fast, ref) < 1e-11);
    auto ifast = ifft2_centered(x);
    auto iref = oracles::dft2_centered_direct(x, true);
    CHECK(oracles::max_abs_diff(ifast, iref) < 1e-11);
  }
  // Non-square, mixed pow2/non-pow2 dims.
  auto x = oracles::random_image(8, 6, rng);
  CHECK(oracles::max_abs_diff(fft2_centered(x), oracles::dft2_centered_direct(x, false)) < 1e-11);
}

TEST_CASE("fft2_centered norm preservation on a random 8x8 image") {
  Rng rng(11);
  auto x = oracles::random_image(8, 8, rng);
  const double nx = std::sqrt(squared_norm(x));
  const double nf = std::sqrt(squared_norm(fft2_centered(x)));
  CHECK(std::abs(nf - nx) < 1e-12 * nx);
}

TEST_CASE("unitarity and roundtrip across sizes including odd") {
  Rng rng(3);
  for (Index n : {4, 5, 7, 8, 16, 32}) {
    auto x = oracles::random_image(n, n, rng);
    const double nx = std::sqrt(squared_norm(x));
    auto f = fft2_centered(x);
    CHECK(std::abs(std::sqrt(squared_norm(f)) - nx) < 1e-12 * nx);
    auto back = ifft2_centered(f);
    CHECK(oracles::max_abs_diff(back, x) < 1e-12 * nx);
  }
}

TEST_CASE("roundtrip on random 16x16 image") {
  Rng rng(5);
  auto x = oracles::random_image(16, 16, rng);
  CHECK(oracles::max_abs_diff(ifft2_centered(fft2_centered(x)), x) < 1e-12);
}

TEST_CASE("fft2 linearity") {
  Rng rng(13);
  auto x = oracles::random_image(8, 8, rng);
  auto y = oracles::random_image(8, 8, rng);
  const double alpha = rng.uniform(-2.0, 2.0);
  const double beta = rng.uniform(-2.0, 2.0);
  auto lhs = fft2_centered(cadd(scaled(x, alpha), scaled(y, beta)));
  auto rhs = cadd(scaled(fft2_centered(x), alpha), scaled(fft2_centered(y), beta));
  CHECK(oracles::max_abs_diff(lhs, rhs) < 1e-12);
}

TEST_CASE("fft2 rejects empty images") {
  ComplexImage empty;
  CHECK_THROWS_AS(fft2_centered(empty), ShapeError);
  CHECK_THROWS_AS(ifft2_centered(empty), ShapeError);
}
