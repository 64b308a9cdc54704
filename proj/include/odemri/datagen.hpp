#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "odemri/mri_model.hpp"
#include "odemri/tensor.hpp"

namespace odemri {

// Recipe for one family of random ellipse phantoms.
struct PhantomSpec {
  Index height = 32;
  Index width = 32;
  Index min_ellipses = 3;
  Index max_ellipses = 8;
  double min_intensity = 0.2;
  double max_intensity = 1.0;
  int phase_order = 2;  // degree of the smooth polynomial phase, 0..2
  std::uint64_t seed = 0;

  void validate() const;
};

// Deterministic phantom for (spec.seed, index): a sum of random rotated
// ellipse indicators, magnitude clipped to [0, 1.2], times exp(i*phi) with
// phi a random polynomial of degree <= phase_order bounded by |phi| <= pi/4.
ComplexImage make_phantom(const PhantomSpec& spec, Index index);

// C Gaussian-magnitude profiles centered at equally spaced angles on a circle
// of radius 0.55 * min(H, W) / 2 around the image center, each with its own
// linear phase, then pixelwise divided by the sum-of-squares magnitude so
// that sum_c |S_c|^2 = 1 at every pixel.
CoilSensitivities make_sensitivities(Index height, Index width, Index coils, std::uint64_t seed);

namespace detail {

// Pre-normalization profiles; exposed so tests can check the geometry.
std::vector<ComplexImage> raw_sensitivities(Index height, Index width, Index coils,
                                            std::uint64_t seed);
// Continuous (row, col) position of one coil's profile peak.
std::pair<double, double> coil_center(Index height, Index width, Index coils, Index coil);

}  // namespace detail

// Measures truth through the encoding operator: d = mask o (F(S_c o x) + n_c)
// with i.i.d. complex Gaussian noise of std `noise_sigma` per component.
// Masked-out entries are exact zeros.
KSpaceSample simulate_kspace(const ComplexImage& truth, const CoilSensitivities& sens,
                             const SamplingMask& mask, double noise_sigma, std::uint64_t seed);

struct DataGenConfig {
  Index train_count = 64;
  Index test_count = 16;
  Index height = 32;
  Index width = 32;
  Index coils = 4;
  Index accel_row = 2;
  Index accel_col = 2;
  Index acs_size = 8;
  double noise_sigma = 0.005;
  Index min_ellipses = 3;
  Index max_ellipses = 8;
  double min_intensity = 0.2;
  double max_intensity = 1.0;
  int phase_order = 2;
  std::uint64_t seed = 0;

  void validate() const;
  PhantomSpec phantom_spec() const;
};

// File names of one stored sample, relative to the dataset directory.
struct SampleFiles {
  std::string truth;
  std::string sens;
  std::string kspace;
  std::string mask;
};

struct DatasetManifest {
  int version = 1;
  Index train_count = 0;
  Index test_count = 0;
  Index height = 0;
  Index width = 0;
  Index coils = 0;
  Index accel_row = 1;
  Index accel_col = 1;
  Index acs_size = 0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::string config_digest;  // ties the files back to the generating config
  std::vector<SampleFiles> train_files;
  std::vector<SampleFiles> test_files;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<KSpaceSample> train;
  std::vector<KSpaceSample> test;
};

// Pure function of the config: train samples use phantom indices
// 0..train_count-1, test samples continue from train_count. All samples share
// the coil maps and sampling mask; per-sample noise streams are independent.
Dataset generate_dataset(const DataGenConfig& config);

// manifest.json plus one ODET file per tensor; read(write(d)) == d bitwise.
void write_dataset(const Dataset& dataset, const std::string& dir);
Dataset read_dataset(const std::string& dir);

}  // namespace odemri
