#pragma once

#include <functional>
#include <string>
#include <vector>

#include "odemri/mri_model.hpp"
#include "odemri/tensor.hpp"

namespace odemri {

// Peak signal-to-noise ratio in dB between magnitude images, with the peak
// taken from the reference. Returns +infinity when the images agree exactly.
double psnr(const ComplexImage& recon, const ComplexImage& truth);

// Mean local SSIM between magnitude images: 11x11 Gaussian window with
// sigma 1.5, K1 = 0.01, K2 = 0.03, full-window ("valid") coverage. The
// two-argument form takes the dynamic range from the truth magnitude.
double ssim(const ComplexImage& recon, const ComplexImage& truth);
double ssim(const ComplexImage& recon, const ComplexImage& truth, double dynamic_range);

// Pixelwise absolute difference of the magnitudes.
Tensor error_map(const ComplexImage& recon, const ComplexImage& truth);

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 by convention when n = 1
};

struct MetricReport {
  std::vector<Index> sample_indices;       // which samples the rows below describe
  std::vector<double> psnr_db;             // per evaluated sample
  std::vector<double> ssim;                // per evaluated sample
  std::vector<std::string> sample_errors;  // "index: why" for skipped samples
  MetricSummary psnr_stats;
  MetricSummary ssim_stats;
  bool single_sample = false;  // n = 1, so the zero stddev is a convention
};

MetricSummary summarize(const std::vector<double>& values);

using ReconstructFn = std::function<ComplexImage(const KSpaceSample&)>;

// Runs `reconstruct` over every sample and scores it against the stored
// truth. A failing sample is recorded in `sample_errors` and evaluation
// moves on; at least one sample must succeed.
MetricReport evaluate(const std::vector<KSpaceSample>& samples, const ReconstructFn& reconstruct);

// One row per evaluated sample: "sample,psnr_db,ssim" with full precision.
void write_metric_csv(const std::string& path, const MetricReport& report);

}  // namespace odemri
