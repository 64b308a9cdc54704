#include "odemri/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "odemri/errors.hpp"

namespace odemri {

namespace {

constexpr Index kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;

const Eigen::ArrayXd& ssim_window() {
  static const Eigen::ArrayXd w = [] {
    Eigen::ArrayXd win(kWindow * kWindow);
    const double c = (kWindow - 1) / 2.0;
    for (Index i = 0; i < kWindow; ++i)
      for (Index j = 0; j < kWindow; ++j) {
        const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
        win[i * kWindow + j] = std::exp(-(di * di + dj * dj) / (2.0 * kSigma * kSigma));
      }
    win /= win.sum();
    return win;
  }();
  return w;
}

// 0/0 terms arise only when a window is exactly constant and the dynamic
// range is zero; both factors then degenerate to "identical", i.e. 1.
double ratio(double num, double den) {
  if (den == 0.0) return num == 0.0 ? 1.0 : num / den;
  return num / den;
}

}  // namespace

double psnr(const ComplexImage& recon, const ComplexImage& truth) {
  require_same_shape(recon.re, truth.re, "psnr");
  const Tensor mr = magnitude(recon);
  const Tensor mt = magnitude(truth);
  const double peak = mt.flat().maxCoeff();
  if (peak == 0.0) throw ConfigError("psnr needs a reference image that is not identically zero");
  const double mse = (mr.flat() - mt.flat()).square().mean();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const ComplexImage& recon, const ComplexImage& truth) {
  const Tensor mt = magnitude(truth);
  return ssim(recon, truth, mt.flat().maxCoeff() - mt.flat().minCoeff());
}

double ssim(const ComplexImage& recon, const ComplexImage& truth, double dynamic_range) {
  require_same_shape(recon.re, truth.re, "ssim");
  const Index h = truth.height(), w = truth.width();
  if (h < kWindow || w < kWindow)
    throw ShapeError("ssim needs images at least as large as its 11x11 window");

  const Tensor x = magnitude(recon);
  const Tensor y = magnitude(truth);
  const Eigen::ArrayXd& win = ssim_window();
  const double c1 = (kK1 * dynamic_range) * (kK1 * dynamic_range);
  const double c2 = (kK2 * dynamic_range) * (kK2 * dynamic_range);

  double acc = 0.0;
  for (Index i0 = 0; i0 + kWindow <= h; ++i0) {
    for (Index j0 = 0; j0 + kWindow <= w; ++j0) {
      // Moments of the deviations from the window's corner pixel. The shift
      // leaves variances and covariance unchanged but makes exactly constant
      // windows produce exact zeros, so the degenerate terms reduce cleanly.
      const double x0 = x(i0, j0), y0 = y(i0, j0);
      double mx = 0.0, my = 0.0, mxx = 0.0, myy = 0.0, mxy = 0.0;
      for (Index i = 0; i < kWindow; ++i) {
        for (Index j = 0; j < kWindow; ++j) {
          const double wv = win[i * kWindow + j];
          const double xv = x(i0 + i, j0 + j) - x0;
          const double yv = y(i0 + i, j0 + j) - y0;
          mx += wv * xv;
          my += wv * yv;
          mxx += wv * xv * xv;
          myy += wv * yv * yv;
          mxy += wv * xv * yv;
        }
      }
      const double vx = mxx - mx * mx;
      const double vy = myy - my * my;
      const double cxy = mxy - mx * my;
      const double ux = x0 + mx, uy = y0 + my;
      const double lum = ratio(2.0 * ux * uy + c1, ux * ux + uy * uy + c1);
      const double cs = ratio(2.0 * cxy + c2, vx + vy + c2);
      acc += lum * cs;
    }
  }
  const double positions = static_cast<double>((h - kWindow + 1) * (w - kWindow + 1));
  return acc / positions;
}

Tensor error_map(const ComplexImage& recon, const ComplexImage& truth) {
  require_same_shape(recon.re, truth.re, "error map");
  const Tensor mr = magnitude(recon);
  const Tensor mt = magnitude(truth);
  return Tensor(mr.shape(), (mr.flat() - mt.flat()).abs());
}

MetricSummary summarize(const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("cannot summarize an empty metric list");
  const Index n = static_cast<Index>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  MetricSummary s;
  s.mean = mean;
  if (n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    s.stddev = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return s;
}

MetricReport evaluate(const std::vector<KSpaceSample>& samples, const ReconstructFn& reconstruct) {
  if (samples.empty()) throw ConfigError("evaluation needs at least one sample");
  MetricReport report;
  for (std::size_t idx = 0; idx < samples.size(); ++idx) {
    try {
      const ComplexImage recon = reconstruct(samples[idx]);
      const double p = psnr(recon, samples[idx].truth);
      const double s = ssim(recon, samples[idx].truth);
      report.sample_indices.push_back(static_cast<Index>(idx));
      report.psnr_db.push_back(p);
      report.ssim.push_back(s);
    } catch (const std::exception& e) {
      report.sample_errors.push_back(std::to_string(idx) + ": " + e.what());
    }
  }
  if (report.psnr_db.empty())
    throw ConfigError("every sample failed to evaluate: " +
                      (report.sample_errors.empty() ? std::string("no samples")
                                                    : report.sample_errors.front()));
  report.psnr_stats = summarize(report.psnr_db);
  report.ssim_stats = summarize(report.ssim);
  report.single_sample = report.psnr_db.size() == 1;
  return report;
}

void write_metric_csv(const std::string& path, const MetricReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write metrics CSV: " + path);
  out << "sample,psnr_db,ssim\n";
  char line[128];
  for (std::size_t i = 0; i < report.psnr_db.size(); ++i) {
    std::snprintf(line, sizeof line, "%lld,%.17g,%.17g\n",
                  static_cast<long long>(report.sample_indices[i]), report.psnr_db[i],
                  report.ssim[i]);
    out << line;
  }
  if (!out) throw IoError("failed while writing metrics CSV: " + path);
}

}  // namespace odemri
