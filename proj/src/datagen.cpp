#include "odemri/datagen.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <utility>

#include "odemri/errors.hpp"
#include "odemri/rng.hpp"
#include "odemri/tensor_io.hpp"

namespace odemri {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Disjoint stream ids: phantom streams use the raw sample index, which stays
// far below these bases.
constexpr std::uint64_t kSensStream = 1ULL << 32;
constexpr std::uint64_t kNoiseStreamBase = 2ULL << 32;

struct Ellipse {
  double center_r, center_c, axis_a, axis_b, angle, intensity;
};

}  // namespace

void PhantomSpec::validate() const {
  if (height < 16 || width < 16) throw ConfigError("phantom images must be at least 16x16");
  if (min_ellipses < 1 || max_ellipses < min_ellipses)
    throw ConfigError("phantom ellipse count range is invalid");
  if (!(min_intensity > 0.0) || max_intensity < min_intensity)
    throw ConfigError("phantom intensity range is invalid");
  if (phase_order < 0 || phase_order > 2)
    throw ConfigError("phantom phase order must be 0, 1 or 2");
}

ComplexImage make_phantom(const PhantomSpec& spec, Index index) {
  spec.validate();
  Rng rng = Rng(spec.seed).stream(static_cast<std::uint64_t>(index));
  const Index h = spec.height, w = spec.width;
  const double extent = static_cast<double>(std::min(h, w));

  const Index count = spec.min_ellipses + rng.uniform_index(spec.max_ellipses - spec.min_ellipses + 1);
  std::vector<Ellipse> ellipses;
  ellipses.reserve(static_cast<std::size_t>(count));
  for (Index e = 0; e < count; ++e) {
    Ellipse el;
    el.center_r = rng.uniform(0.2, 0.8) * static_cast<double>(h - 1);
    el.center_c = rng.uniform(0.2, 0.8) * static_cast<double>(w - 1);
    el.axis_a = rng.uniform(0.08, 0.3) * extent;
    el.axis_b = rng.uniform(0.08, 0.3) * extent;
    el.angle = rng.uniform(0.0, kPi);
    el.intensity = rng.uniform(spec.min_intensity, spec.max_intensity);
    ellipses.push_back(el);
  }

  // Polynomial phase coefficients, one per monomial u^i v^j with i+j <= order.
  // Normalized coordinates keep |u|, |v| <= 1, so dividing the uniform(-1,1)
  // draws by the term count bounds |phi| by pi/4.
  const int nterms = (spec.phase_order + 1) * (spec.phase_order + 2) / 2;
  std::vector<double> coeffs(static_cast<std::size_t>(nterms));
  for (double& c : coeffs) c = rng.uniform(-1.0, 1.0) * (kPi / 4.0) / nterms;

  ComplexImage img(h, w);
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) {
      double mag = 0.0;
      for (const Ellipse& el : ellipses) {
        const double dr = static_cast<double>(r) - el.center_r;
        const double dc = static_cast<double>(c) - el.center_c;
        const double xr = dr * std::cos(el.angle) + dc * std::sin(el.angle);
        const double yr = -dr * std::sin(el.angle) + dc * std::cos(el.angle);
        const double q = (xr / el.axis_a) * (xr / el.axis_a) + (yr / el.axis_b) * (yr / el.axis_b);
        if (q <= 1.0) mag += el.intensity;
      }
      mag = std::min(mag, 1.2);

      const double u = h > 1 ? 2.0 * static_cast<double>(r) / static_cast<double>(h - 1) - 1.0 : 0.0;
      const double v = w > 1 ? 2.0 * static_cast<double>(c) / static_cast<double>(w - 1) - 1.0 : 0.0;
      double phi = 0.0;
      std::size_t t = 0;
      for (int total = 0; total <= spec.phase_order; ++total)
        for (int i = total; i >= 0; --i)
          phi += coeffs[t++] * std::pow(u, i) * std::pow(v, total - i);
      img.re(r, c) = mag * std::cos(phi);
      img.im(r, c) = mag * std::sin(phi);
    }
  }
  return img;
}

namespace detail {

std::pair<double, double> coil_center(Index height, Index width, Index coils, Index coil) {
  const double center_r = static_cast<double>(height - 1) / 2.0;
  const double center_c = static_cast<double>(width - 1) / 2.0;
  const double radius = 0.55 * static_cast<double>(std::min(height, width)) / 2.0;
  const double angle = 2.0 * kPi * static_cast<double>(coil) / static_cast<double>(coils);
  return {center_r + radius * std::sin(angle), center_c + radius * std::cos(angle)};
}

std::vector<ComplexImage> raw_sensitivities(Index height, Index width, Index coils,
                                            std::uint64_t seed) {
  if (coils < 1) throw ConfigError("need at least one coil");
  if (height < 1 || width < 1) throw ConfigError("coil maps need a positive image size");
  Rng rng(seed);
  const double sigma = 0.35 * static_cast<double>(std::min(height, width));
  const double center_r = static_cast<double>(height - 1) / 2.0;
  const double center_c = static_cast<double>(width - 1) / 2.0;

  std::vector<ComplexImage> maps;
  maps.reserve(static_cast<std::size_t>(coils));
  for (Index c = 0; c < coils; ++c) {
    const auto [peak_r, peak_c] = coil_center(height, width, coils, c);
    const double slope_r = rng.uniform(-1.0, 1.0) * kPi / static_cast<double>(std::max(height, width));
    const double slope_c = rng.uniform(-1.0, 1.0) * kPi / static_cast<double>(std::max(height, width));
    ComplexImage m(height, width);
    for (Index r = 0; r < height; ++r) {
      for (Index x = 0; x < width; ++x) {
        const double dr = static_cast<double>(r) - peak_r;
        const double dx = static_cast<double>(x) - peak_c;
        const double mag = std::exp(-(dr * dr + dx * dx) / (2.0 * sigma * sigma));
        const double phi = slope_r * (static_cast<double>(r) - center_r) +
                           slope_c * (static_cast<double>(x) - center_c);
        m.re(r, x) = mag * std::cos(phi);
        m.im(r, x) = mag * std::sin(phi);
      }
    }
    maps.push_back(std::move(m));
  }
  return maps;
}

}  // namespace detail

CoilSensitivities make_sensitivities(Index height, Index width, Index coils, std::uint64_t seed) {
  CoilSensitivities sens;
  sens.maps = detail::raw_sensitivities(height, width, coils, seed);
  for (Index i = 0; i < height * width; ++i) {
    double sos = 0.0;
    for (const ComplexImage& m : sens.maps) sos += m.re(i) * m.re(i) + m.im(i) * m.im(i);
    const double inv = 1.0 / std::sqrt(sos);
    for (ComplexImage& m : sens.maps) {
      m.re(i) *= inv;
      m.im(i) *= inv;
    }
  }
  return sens;
}

KSpaceSample simulate_kspace(const ComplexImage& truth, const CoilSensitivities& sens,
                             const SamplingMask& mask, double noise_sigma, std::uint64_t seed) {
  if (sens.num_coils() < 1) throw ConfigError("need at least one coil");
  require_same_shape(truth.re, sens.maps.front().re, "k-space simulation");
  require_same_shape(truth.re, mask.keep, "k-space simulation");
  if (noise_sigma < 0.0) throw ConfigError("noise sigma cannot be negative");

  Rng rng(seed);
  KSpaceSample sample;
  sample.mask = mask;
  sample.sens = sens;
  sample.truth = truth;
  sample.kspace.reserve(static_cast<std::size_t>(sens.num_coils()));
  for (const ComplexImage& coil_map : sens.maps) {
    ComplexImage k = fft2_centered(cmul(truth, coil_map));
    if (noise_sigma > 0.0) {
      for (Index i = 0; i < k.re.size(); ++i) {
        k.re(i) += noise_sigma * rng.gaussian();
        k.im(i) += noise_sigma * rng.gaussian();
      }
    }
    sample.kspace.push_back(apply_mask(k, mask));
  }
  return sample;
}

void DataGenConfig::validate() const {
  if (train_count < 1) throw ConfigError("dataset needs at least one training sample");
  if (test_count < 0) throw ConfigError("test sample count cannot be negative");
  if (coils < 1) throw ConfigError("need at least one coil");
  if (accel_row < 1) throw ConfigError("accel_row must be at least 1");
  if (accel_col < 1) throw ConfigError("accel_col must be at least 1");
  if (acs_size < 0 || acs_size > std::min(height, width))
    throw ConfigError("calibration region does not fit the image");
  if (noise_sigma < 0.0) throw ConfigError("noise sigma cannot be negative");
  phantom_spec().validate();
}

PhantomSpec DataGenConfig::phantom_spec() const {
  PhantomSpec spec;
  spec.height = height;
  spec.width = width;
  spec.min_ellipses = min_ellipses;
  spec.max_ellipses = max_ellipses;
  spec.min_intensity = min_intensity;
  spec.max_intensity = max_intensity;
  spec.phase_order = phase_order;
  spec.seed = seed;
  return spec;
}

Dataset generate_dataset(const DataGenConfig& config) {
  config.validate();
  const PhantomSpec spec = config.phantom_spec();
  const CoilSensitivities sens =
      make_sensitivities(config.height, config.width, config.coils, mix_seed(config.seed, kSensStream));
  const SamplingMask mask =
      make_mask(config.height, config.width, config.accel_row, config.accel_col, config.acs_size);

  Dataset ds;
  ds.manifest.version = 1;
  ds.manifest.train_count = config.train_count;
  ds.manifest.test_count = config.test_count;
  ds.manifest.height = config.height;
  ds.manifest.width = config.width;
  ds.manifest.coils = config.coils;
  ds.manifest.accel_row = config.accel_row;
  ds.manifest.accel_col = config.accel_col;
  ds.manifest.acs_size = config.acs_size;
  ds.manifest.noise_sigma = config.noise_sigma;
  ds.manifest.seed = config.seed;

  const auto make_sample = [&](Index index) {
    const ComplexImage truth = make_phantom(spec, index);
    return simulate_kspace(truth, sens, mask, config.noise_sigma,
                           mix_seed(config.seed, kNoiseStreamBase + static_cast<std::uint64_t>(index)));
  };
  const auto names_for = [](Index index) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "sample_%04lld", static_cast<long long>(index));
    SampleFiles f;
    f.truth = std::string(stem) + ".truth.odet";
    f.sens = std::string(stem) + ".sens.odet";
    f.kspace = std::string(stem) + ".kspace.odet";
    f.mask = std::string(stem) + ".mask.odet";
    return f;
  };

  for (Index i = 0; i < config.train_count; ++i) {
    ds.train.push_back(make_sample(i));
    ds.manifest.train_files.push_back(names_for(i));
  }
  for (Index j = 0; j < config.test_count; ++j) {
    const Index index = config.train_count + j;
    ds.test.push_back(make_sample(index));
    ds.manifest.test_files.push_back(names_for(index));
  }
  return ds;
}

namespace {

nlohmann::json files_to_json(const SampleFiles& f) {
  return {{"truth", f.truth}, {"sens", f.sens}, {"kspace", f.kspace}, {"mask", f.mask}};
}

SampleFiles files_from_json(const nlohmann::json& j) {
  SampleFiles f;
  f.truth = j.at("truth").get<std::string>();
  f.sens = j.at("sens").get<std::string>();
  f.kspace = j.at("kspace").get<std::string>();
  f.mask = j.at("mask").get<std::string>();
  return f;
}

void write_sample(const KSpaceSample& s, const SampleFiles& f, const std::filesystem::path& dir) {
  write_complex((dir / f.truth).string(), s.truth);
  write_complex_stack((dir / f.sens).string(), s.sens.maps);
  write_complex_stack((dir / f.kspace).string(), s.kspace);
  write_tensor((dir / f.mask).string(), s.mask.keep);
}

KSpaceSample read_sample(const SampleFiles& f, const std::filesystem::path& dir,
                         const DatasetManifest& m) {
  KSpaceSample s;
  s.truth = read_complex((dir / f.truth).string());
  s.sens.maps = read_complex_stack((dir / f.sens).string());
  s.kspace = read_complex_stack((dir / f.kspace).string());
  s.mask.keep = read_tensor((dir / f.mask).string());
  s.mask.acs_size = m.acs_size;
  if (s.truth.height() != m.height || s.truth.width() != m.width ||
      s.sens.num_coils() != m.coils || static_cast<Index>(s.kspace.size()) != m.coils ||
      s.mask.keep.ndim() != 2 || s.mask.keep.dim(0) != m.height || s.mask.keep.dim(1) != m.width)
    throw IoError("sample " + f.truth + " does not match the manifest dimensions");
  return s;
}

}  // namespace

void write_dataset(const Dataset& dataset, const std::string& dir) {
  const DatasetManifest& m = dataset.manifest;
  if (static_cast<Index>(dataset.train.size()) != m.train_count ||
      static_cast<Index>(dataset.test.size()) != m.test_count ||
      dataset.train.size() != m.train_files.size() || dataset.test.size() != m.test_files.size())
    throw IoError("dataset sample lists do not match the manifest");

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory: " + dir);
  const std::filesystem::path base(dir);

  for (std::size_t i = 0; i < dataset.train.size(); ++i)
    write_sample(dataset.train[i], m.train_files[i], base);
  for (std::size_t i = 0; i < dataset.test.size(); ++i)
    write_sample(dataset.test[i], m.test_files[i], base);

  nlohmann::json j;
  j["version"] = m.version;
  j["train_count"] = m.train_count;
  j["test_count"] = m.test_count;
  j["height"] = m.height;
  j["width"] = m.width;
  j["coils"] = m.coils;
  j["accel_row"] = m.accel_row;
  j["accel_col"] = m.accel_col;
  j["acs_size"] = m.acs_size;
  j["noise_sigma"] = m.noise_sigma;
  j["seed"] = m.seed;
  j["config_digest"] = m.config_digest;
  j["train_files"] = nlohmann::json::array();
  for (const SampleFiles& f : m.train_files) j["train_files"].push_back(files_to_json(f));
  j["test_files"] = nlohmann::json::array();
  for (const SampleFiles& f : m.test_files) j["test_files"].push_back(files_to_json(f));

  const std::string manifest_path = (base / "manifest.json").string();
  std::ofstream out(manifest_path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest: " + manifest_path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed while writing manifest: " + manifest_path);
}

Dataset read_dataset(const std::string& dir) {
  const std::filesystem::path base(dir);
  const std::string manifest_path = (base / "manifest.json").string();
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest: " + manifest_path);

  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest is not valid JSON: " + manifest_path + ": " + e.what());
  }

  Dataset ds;
  DatasetManifest& m = ds.manifest;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != 1)
      throw IoError("unsupported dataset version in " + manifest_path + ": " +
                    std::to_string(m.version));
    m.train_count = j.at("train_count").get<Index>();
    m.test_count = j.at("test_count").get<Index>();
    m.height = j.at("height").get<Index>();
    m.width = j.at("width").get<Index>();
    m.coils = j.at("coils").get<Index>();
    m.accel_row = j.at("accel_row").get<Index>();
    m.accel_col = j.at("accel_col").get<Index>();
    m.acs_size = j.at("acs_size").get<Index>();
    m.noise_sigma = j.at("noise_sigma").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config_digest = j.at("config_digest").get<std::string>();
    for (const auto& f : j.at("train_files")) m.train_files.push_back(files_from_json(f));
    for (const auto& f : j.at("test_files")) m.test_files.push_back(files_from_json(f));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest is missing required fields: " + manifest_path + ": " + e.what());
  }
  if (static_cast<Index>(m.train_files.size()) != m.train_count ||
      static_cast<Index>(m.test_files.size()) != m.test_count)
    throw IoError("manifest sample lists do not match the counts: " + manifest_path);

  for (const SampleFiles& f : m.train_files) ds.train.push_back(read_sample(f, base, m));
  for (const SampleFiles& f : m.test_files) ds.test.push_back(read_sample(f, base, m));
  return ds;
}

}  // namespace odemri
