// odemri: generate synthetic multicoil MRI data, train the ODE reconstruction
// network (or its plain residual baseline), reconstruct samples, evaluate
// PSNR/SSIM, and run the gradient self-check.
//
// Exit codes: 0 success, 1 failed check or runtime failure, 2 configuration
// error, 3 I/O error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>

#include "odemri/datagen.hpp"
#include "odemri/gradcheck.hpp"
#include "odemri/metrics.hpp"
#include "odemri/run_config.hpp"
#include "odemri/tensor_io.hpp"
#include "odemri/trainer.hpp"

namespace {

using namespace odemri;
using nlohmann::json;

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("ODEMRI_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
      throw ConfigError("ODEMRI_THREADS must be a positive integer");
    return static_cast<int>(v);
  }
  return 1;
}

RunConfig load_or_default(const std::string& config_path) {
  if (config_path.empty()) {
    RunConfig config;
    config.validate();
    return config;
  }
  return load_run_config(config_path);
}

json json_num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

int cmd_gen_data(const std::string& config_path, std::string out_dir) {
  const RunConfig config = load_or_default(config_path);
  if (out_dir.empty()) out_dir = config.paths.data_dir;
  if (out_dir.empty()) throw ConfigError("gen-data needs --out-dir or paths.data_dir");

  Dataset dataset = generate_dataset(config.data);
  dataset.manifest.config_digest = config_digest(config);
  write_dataset(dataset, out_dir);

  const DatasetManifest& m = dataset.manifest;
  std::printf("wrote %lld train + %lld test samples (%lldx%lld, %lld coils, %lldx%lld accel, acs %lld, sigma %g) to %s\n",
              static_cast<long long>(m.train_count), static_cast<long long>(m.test_count),
              static_cast<long long>(m.height), static_cast<long long>(m.width),
              static_cast<long long>(m.coils), static_cast<long long>(m.accel_row),
              static_cast<long long>(m.accel_col), static_cast<long long>(m.acs_size),
              m.noise_sigma, out_dir.c_str());
  std::printf("config digest: %s\n", m.config_digest.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, std::string data_dir, std::string out,
              std::string log_csv, const std::string& mode, bool resume, int threads) {
  RunConfig config = load_or_default(config_path);
  if (!mode.empty()) config.train.network.mode = network_mode_from_string(mode);
  if (data_dir.empty()) data_dir = config.paths.data_dir;
  if (out.empty()) out = config.paths.checkpoint;
  if (data_dir.empty()) throw ConfigError("train needs --data or paths.data_dir");
  if (out.empty()) throw ConfigError("train needs --out or paths.checkpoint");
  if (log_csv.empty()) log_csv = config.paths.log_csv.empty() ? out + ".csv" : config.paths.log_csv;

  config.train.checkpoint_path = out;
  config.train.log_csv = log_csv;
  config.train.threads = threads;
  config.validate();

  const Dataset dataset = read_dataset(data_dir);
  config.train.on_epoch = [](const HistoryRow& row) {
    std::printf("epoch %4lld  train loss %.6e  test psnr %8.3f dB\n",
                static_cast<long long>(row.epoch), row.train_loss, row.test_psnr);
    std::fflush(stdout);
  };

  Checkpoint result;
  if (resume && std::filesystem::exists(out)) {
    std::printf("resuming from %s\n", out.c_str());
    result = train(config.train, dataset, load_checkpoint(out));
  } else {
    result = train(config.train, dataset);
  }
  // Covers the epochs == 0 case, where the epoch loop never writes.
  save_checkpoint(result, out);
  write_history_csv(log_csv, result.history);

  std::printf("done: %lld epochs (%s mode), train loss %.6e -> %.6e, test psnr %.3f dB\n",
              static_cast<long long>(result.epoch), to_string(config.train.network.mode).c_str(),
              result.history.front().train_loss, result.history.back().train_loss,
              result.history.back().test_psnr);
  std::printf("checkpoint: %s\nlog: %s\ndataset digest: %s\n", out.c_str(), log_csv.c_str(),
              result.dataset_digest.c_str());
  return 0;
}

int cmd_reconstruct(const std::string& checkpoint, const std::string& data_dir,
                    const std::string& split, Index sample, const std::string& out_dir,
                    const std::string& config_path) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  if (!config_path.empty()) {
    const RunConfig config = load_run_config(config_path);
    if (!same_network_shape(config.train.network, ckpt.config.network))
      throw ConfigError("checkpoint network shape does not match the config network");
  }
  if (split != "train" && split != "test") throw ConfigError("--split must be train or test");

  const Dataset dataset = read_dataset(data_dir);
  const std::vector<KSpaceSample>& list = split == "train" ? dataset.train : dataset.test;
  if (sample < 0 || sample >= static_cast<Index>(list.size()))
    throw ConfigError("--sample " + std::to_string(sample) + " is out of range for the " + split +
                      " split (" + std::to_string(list.size()) + " samples)");

  const KSpaceSample& s = list[static_cast<std::size_t>(sample)];
  const ComplexImage recon = reconstruct_sample(s, ckpt.params, ckpt.config.network);

  std::filesystem::create_directories(out_dir);
  char stem[64];
  std::snprintf(stem, sizeof(stem), "recon_%s_%04lld", split.c_str(),
                static_cast<long long>(sample));
  const std::string odet_path = out_dir + "/" + stem + ".odet";
  const std::string mag_path = out_dir + "/" + stem + ".pgm";
  const std::string err_path = out_dir + "/" + std::string("error_") + (stem + 6) + ".pgm";

  write_complex(odet_path, recon);
  const Tensor mag = magnitude(recon);
  const double mag_scale = std::max(mag.flat().maxCoeff(), 1e-12);
  write_pgm(mag_path, mag, mag_scale);
  const Tensor err = error_map(recon, s.truth);
  const double err_scale = std::max(err.flat().maxCoeff(), 1e-12);
  write_pgm(err_path, err, err_scale);

  std::printf("sample %lld (%s split): psnr %.3f dB, ssim %.5f vs stored truth\n",
              static_cast<long long>(sample), split.c_str(), psnr(recon, s.truth),
              ssim(recon, s.truth));
  std::printf("recon: %s\nmagnitude: %s (pgm full scale = %.6g)\nerror map: %s (pgm full scale = %.6g)\n",
              odet_path.c_str(), mag_path.c_str(), mag_scale, err_path.c_str(), err_scale);
  return 0;
}

int cmd_eval(const std::string& checkpoint, std::string data_dir, std::string out_dir, bool force,
             bool identity, int threads) {
  (void)threads;  // evaluation is cheap; kept serial for reproducibility
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const RunConfig defaults;
  if (data_dir.empty()) data_dir = defaults.paths.data_dir;
  if (out_dir.empty()) out_dir = defaults.paths.out_dir;
  const Dataset dataset = read_dataset(data_dir);

  if (!identity && !force && !ckpt.dataset_digest.empty() &&
      !dataset.manifest.config_digest.empty() &&
      ckpt.dataset_digest != dataset.manifest.config_digest)
    throw ConfigError("dataset digest " + dataset.manifest.config_digest +
                      " does not match checkpoint digest " + ckpt.dataset_digest +
                      " (pass --force to evaluate anyway)");

  ReconstructFn reconstruct;
  if (identity)
    reconstruct = [](const KSpaceSample& s) { return s.truth; };
  else
    reconstruct = [&](const KSpaceSample& s) {
      return reconstruct_sample(s, ckpt.params, ckpt.config.network);
    };

  const MetricReport report = evaluate(dataset.test, reconstruct);
  std::filesystem::create_directories(out_dir);
  const std::string csv_path = out_dir + "/metrics.csv";
  write_metric_csv(csv_path, report);

  double zf_mean = std::numeric_limits<double>::quiet_NaN();
  if (!identity && !dataset.test.empty()) {
    double sum = 0.0;
    for (const KSpaceSample& s : dataset.test) sum += psnr(zero_filled(s), s.truth);
    zf_mean = sum / static_cast<double>(dataset.test.size());
  }

  json summary;
  summary["mode"] = identity ? "identity" : to_string(ckpt.config.network.mode);
  summary["samples_evaluated"] = report.sample_indices.size();
  summary["psnr_mean"] = json_num(report.psnr_stats.mean);
  summary["psnr_stddev"] = json_num(report.psnr_stats.stddev);
  summary["ssim_mean"] = json_num(report.ssim_stats.mean);
  summary["ssim_stddev"] = json_num(report.ssim_stats.stddev);
  summary["single_sample"] = report.single_sample;
  summary["sample_errors"] = report.sample_errors;
  summary["zero_filled_psnr_mean"] = json_num(zf_mean);
  summary["dataset_digest"] = dataset.manifest.config_digest;
  summary["checkpoint_digest"] = ckpt.dataset_digest;
  const std::string summary_path = out_dir + "/summary.json";
  {
    std::ofstream out(summary_path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + summary_path + "' for writing");
    out << summary.dump(2) << "\n";
  }

  std::printf("evaluated %zu samples: psnr %.3f +- %.3f dB, ssim %.5f +- %.5f\n",
              report.sample_indices.size(), report.psnr_stats.mean, report.psnr_stats.stddev,
              report.ssim_stats.mean, report.ssim_stats.stddev);
  if (!identity) std::printf("zero-filled reference: %.3f dB\n", zf_mean);
  for (const std::string& err : report.sample_errors)
    std::printf("skipped sample %s\n", err.c_str());
  std::printf("metrics: %s\nsummary: %s\n", csv_path.c_str(), summary_path.c_str());
  return 0;
}

int cmd_gradcheck(Index size, std::uint64_t seed, bool perturb) {
  const GradcheckResult r = run_gradcheck(size, seed, perturb);
  std::printf("gradcheck: %lld coordinates, max relative error %.3e (tolerance 1e-6) in %.2fs\n",
              static_cast<long long>(r.coords), r.max_rel_err, r.seconds);
  std::printf("%s\n", r.passed ? "OK" : "FAILED");
  return r.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ODE-network toolkit for undersampled multicoil MRI reconstruction"};
  app.require_subcommand(1);
  int threads_flag = 0;
  app.add_option("--threads", threads_flag, "Worker threads (default: ODEMRI_THREADS env or 1)");

  std::string gen_config, gen_out;
  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic multicoil dataset");
  gen->fallthrough();
  gen->add_option("--config", gen_config, "JSON run config file");
  gen->add_option("--out-dir", gen_out, "Dataset directory to write");

  std::string tr_config, tr_data, tr_out, tr_log, tr_mode;
  bool tr_resume = false;
  CLI::App* tr = app.add_subcommand("train", "Train the reconstruction network");
  tr->fallthrough();
  tr->add_option("--config", tr_config, "JSON run config file");
  tr->add_option("--data", tr_data, "Dataset directory");
  tr->add_option("--out", tr_out, "Checkpoint file to write");
  tr->add_option("--log", tr_log, "Training CSV log (default: <out>.csv)");
  tr->add_option("--mode", tr_mode, "Network mode: ode or residual_baseline");
  tr->add_flag("--resume", tr_resume, "Continue from the checkpoint if it exists");

  std::string rc_ckpt, rc_data, rc_split = "test", rc_out, rc_config;
  Index rc_sample = 0;
  CLI::App* rc = app.add_subcommand("reconstruct", "Reconstruct one stored sample");
  rc->fallthrough();
  rc->add_option("--checkpoint", rc_ckpt, "Trained checkpoint file")->required();
  rc->add_option("--data", rc_data, "Dataset directory")->required();
  rc->add_option("--split", rc_split, "Sample split: train or test");
  rc->add_option("--sample", rc_sample, "Sample index within the split");
  rc->add_option("--out", rc_out, "Output directory")->required();
  rc->add_option("--config", rc_config, "Optional config to cross-check the network shape");

  std::string ev_ckpt, ev_data, ev_out;
  bool ev_force = false, ev_identity = false;
  CLI::App* ev = app.add_subcommand("eval", "Evaluate PSNR/SSIM over the test split");
  ev->fallthrough();
  ev->add_option("--checkpoint", ev_ckpt, "Trained checkpoint file")->required();
  ev->add_option("--data", ev_data, "Dataset directory");
  ev->add_option("--out", ev_out, "Output directory for metrics.csv and summary.json");
  ev->add_flag("--force", ev_force, "Evaluate even if config digests disagree");
  ev->add_flag("--identity", ev_identity, "Score the stored truth against itself (metrics sanity)");

  Index gc_size = 8;
  std::uint64_t gc_seed = 0;
  bool gc_perturb = false;
  CLI::App* gc = app.add_subcommand("gradcheck", "Finite-difference check of the backward pass");
  gc->fallthrough();
  gc->add_option("--size", gc_size, "Image side length (default 8)");
  gc->add_option("--seed", gc_seed, "Seed for the random instance");
  gc->add_flag("--perturb", gc_perturb, "Deliberately corrupt one gradient (debug failure path)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad flags are config errors; --help is success
  }

  try {
    const int threads = resolve_threads(threads_flag);
    if (*gen) return cmd_gen_data(gen_config, gen_out);
    if (*tr) return cmd_train(tr_config, tr_data, tr_out, tr_log, tr_mode, tr_resume, threads);
    if (*rc) return cmd_reconstruct(rc_ckpt, rc_data, rc_split, rc_sample, rc_out, rc_config);
    if (*ev) return cmd_eval(ev_ckpt, ev_data, ev_out, ev_force, ev_identity, threads);
    if (*gc) return cmd_gradcheck(gc_size, gc_seed, gc_perturb);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const TrainError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
