#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "odemri/datagen.hpp"
#include "odemri/metrics.hpp"
#include "oracles.hpp"

using namespace odemri;

namespace {

ComplexImage constant_image(Index h, Index w, double re_value) {
  ComplexImage img(h, w);
  img.re.flat().setConstant(re_value);
  return img;
}

ComplexImage with_global_phase(const ComplexImage& img, double angle) {
  ComplexImage out(img.height(), img.width());
  const double c = std::cos(angle), s = std::sin(angle);
  out.re.flat() = c * img.re.flat() - s * img.im.flat();
  out.im.flat() = s * img.re.flat() + c * img.im.flat();
  return out;
}

}  // namespace

TEST_CASE("psnr formula arithmetic and exact-match marker") {
  auto truth = constant_image(12, 12, 1.0);
  CHECK(std::isinf(psnr(truth, truth)));

  auto recon = constant_image(12, 12, 1.1);  // magnitude error 0.1 everywhere
  CHECK(psnr(recon, truth) == doctest::Approx(20.0).epsilon(1e-10));
}

TEST_CASE("psnr matches an independent formula evaluation") {
  Rng rng(30);
  auto truth = oracles::random_image(16, 16, rng);
  auto recon = oracles::random_image(16, 16, rng);

  double peak = 0.0, se = 0.0;
  for (Index i = 0; i < truth.re.size(); ++i) {
    const double mt = std::hypot(truth.re(i), truth.im(i));
    const double mr = std::hypot(recon.re(i), recon.im(i));
    peak = std::max(peak, mt);
    se += (mr - mt) * (mr - mt);
  }
  const double expected = 10.0 * std::log10(peak * peak / (se / 256.0));
  CHECK(std::abs(psnr(recon, truth) - expected) < 1e-10);
}

TEST_CASE("psnr rejects degenerate inputs") {
  ComplexImage zero(12, 12);
  auto recon = constant_image(12, 12, 0.5);
  CHECK_THROWS_AS(psnr(recon, zero), ConfigError);
  CHECK_THROWS_AS(psnr(constant_image(10, 12, 1.0), constant_image(12, 12, 1.0)), ShapeError);
}

TEST_CASE("psnr strictly decreases as recon noise doubles") {
  Rng rng(31);
  PhantomSpec spec;
  spec.seed = 4;
  auto truth = make_phantom(spec, 0);
  ComplexImage unit_noise = oracles::random_image(32, 32, rng);

  double prev = std::numeric_limits<double>::infinity();
  for (double sigma : {0.01, 0.02, 0.04, 0.08}) {
    ComplexImage recon(32, 32);
    recon.re.flat() = truth.re.flat() + sigma * unit_noise.re.flat();
    recon.im.flat() = truth.im.flat() + sigma * unit_noise.im.flat();
    const double p = psnr(recon, truth);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("ssim is 1 for identical images and respects the window minimum") {
  Rng rng(32);
  auto x = oracles::random_image(16, 20, rng);
  CHECK(std::abs(ssim(x, x) - 1.0) < 1e-12);
  auto small = oracles::random_image(10, 16, rng);
  CHECK_THROWS_AS(ssim(small, small), ShapeError);
}

TEST_CASE("constant-image ssim reduces to the closed-form luminance term") {
  const double c = 0.8, d = 0.1;
  auto truth = constant_image(16, 16, c);
  auto recon = constant_image(16, 16, c + d);
  // Zero dynamic range makes C1 = C2 = 0; the contrast-structure factor is a
  // 0/0 between identical constants and degenerates to 1.
  const double expected = 2.0 * c * (c + d) / (c * c + (c + d) * (c + d));
  CHECK(std::abs(ssim(recon, truth) - expected) < 1e-12);
}

TEST_CASE("ssim core is symmetric once the dynamic range is pinned") {
  Rng rng(33);
  auto a = oracles::random_image(16, 16, rng);
  auto b = oracles::random_image(16, 16, rng);
  auto ma = magnitude(a);
  const double range = ma.flat().maxCoeff() - ma.flat().minCoeff();
  CHECK(std::abs(ssim(a, b, range) - ssim(b, a, range)) < 1e-12);
}

TEST_CASE("metrics see magnitudes only: global phase changes nothing") {
  Rng rng(34);
  PhantomSpec spec;
  spec.seed = 8;
  auto truth = make_phantom(spec, 1);
  auto recon = oracles::random_image(32, 32, rng);
  recon.re.flat() = truth.re.flat() + 0.05 * recon.re.flat();
  recon.im.flat() = truth.im.flat() + 0.05 * recon.im.flat();

  const double angle = 1.234;
  auto recon_rot = with_global_phase(recon, angle);
  auto truth_rot = with_global_phase(truth, angle);
  CHECK(std::abs(psnr(recon, truth) - psnr(recon_rot, truth_rot)) < 1e-12);
  CHECK(std::abs(ssim(recon, truth) - ssim(recon_rot, truth_rot)) < 1e-12);
}

TEST_CASE("error map examples") {
  Rng rng(35);
  auto truth = oracles::random_image(12, 12, rng);
  auto zero_map = error_map(truth, truth);
  CHECK(zero_map.flat().abs().maxCoeff() == 0.0);

  // One magnitude bumped by exactly 0.5 (on a real-valued pixel).
  auto truth_r = constant_image(12, 12, 1.0);
  auto recon_r = constant_image(12, 12, 1.0);
  recon_r.re(3, 4) = 1.5;
  auto one = error_map(recon_r, truth_r);
  CHECK(one(3, 4) == 0.5);
  CHECK(one.flat().sum() == 0.5);

  // Sum equals the L1 distance of the magnitudes.
  auto recon = oracles::random_image(12, 12, rng);
  double l1 = 0.0;
  for (Index i = 0; i < truth.re.size(); ++i)
    l1 += std::abs(std::hypot(recon.re(i), recon.im(i)) - std::hypot(truth.re(i), truth.im(i)));
  CHECK(std::abs(error_map(recon, truth).flat().sum() - l1) < 1e-12);
}

TEST_CASE("evaluate aggregates, flags n = 1, and survives per-sample failures") {
  DataGenConfig config;
  config.train_count = 1;
  config.test_count = 3;
  config.height = 16;
  config.width = 16;
  config.coils = 2;
  config.acs_size = 4;
  config.seed = 19;
  auto ds = generate_dataset(config);

  // Truth as reconstruction: perfect scores.
  auto perfect = evaluate(ds.test, [](const KSpaceSample& s) { return s.truth; });
  CHECK(std::isinf(perfect.psnr_stats.mean));
  CHECK(perfect.ssim_stats.mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(perfect.single_sample);

  // Single-sample report is flagged and has zero stddev by convention.
  std::vector<KSpaceSample> one(ds.test.begin(), ds.test.begin() + 1);
  auto single = evaluate(one, [](const KSpaceSample& s) { return s.truth; });
  CHECK(single.single_sample);
  CHECK(single.psnr_stats.stddev == 0.0);

  // A sample whose reconstruction throws is reported and skipped.
  int call = 0;
  auto flaky = evaluate(ds.test, [&call](const KSpaceSample& s) -> ComplexImage {
    if (call++ == 1) throw std::runtime_error("simulated reconstruction failure");
    return zero_filled(s);
  });
  CHECK(flaky.psnr_db.size() == 2);
  REQUIRE(flaky.sample_errors.size() == 1);
  CHECK(flaky.sample_errors[0].find("simulated reconstruction failure") != std::string::npos);
  CHECK(flaky.sample_indices[0] == 0);
  CHECK(flaky.sample_indices[1] == 2);

  // All-fail surfaces an error.
  CHECK_THROWS_AS(
      evaluate(ds.test, [](const KSpaceSample&) -> ComplexImage { throw std::runtime_error("x"); }),
      ConfigError);
}

TEST_CASE("csv round trip reproduces the aggregate to 1e-12") {
  DataGenConfig config;
  config.train_count = 1;
  config.test_count = 4;
  config.height = 16;
  config.width = 16;
  config.coils = 2;
  config.acs_size = 4;
  config.seed = 23;
  auto ds = generate_dataset(config);
  auto report = evaluate(ds.test, [](const KSpaceSample& s) { return zero_filled(s); });

  auto dir = std::filesystem::temp_directory_path() / "odemri_metrics_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "metrics.csv").string();
  write_metric_csv(path, report);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "sample,psnr_db,ssim");
  std::vector<double> psnr_back, ssim_back;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    std::getline(row, cell, ',');
    psnr_back.push_back(std::stod(cell));
    std::getline(row, cell, ',');
    ssim_back.push_back(std::stod(cell));
  }
  REQUIRE(psnr_back.size() == report.psnr_db.size());

  auto p = summarize(psnr_back);
  auto s = summarize(ssim_back);
  CHECK(std::abs(p.mean - report.psnr_stats.mean) < 1e-12);
  CHECK(std::abs(p.stddev - report.psnr_stats.stddev) < 1e-12);
  CHECK(std::abs(s.mean - report.ssim_stats.mean) < 1e-12);
  CHECK(std::abs(s.stddev - report.ssim_stats.stddev) < 1e-12);
}
