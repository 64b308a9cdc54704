#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "odemri/datagen.hpp"
#include "odemri/mri_model.hpp"
#include "odemri/ode_net.hpp"

namespace odemri {

// Mean squared complex error, (1/(2HW)) * sum |recon - truth|^2. The factor
// 1/2 makes the gradient the plain residual divided by the pixel count.
double mse_loss(const ComplexImage& recon, const ComplexImage& truth);
ComplexImage mse_loss_gradient(const ComplexImage& recon, const ComplexImage& truth);

// L2 penalty weight_decay * sum ||slot||^2 over the regularized slots only
// (conv weights and dynamics scalars; biases are exempt).
double regularizer(const std::vector<ParamSlot>& slots, double weight_decay);
// Adds d/dparam of the penalty (2 * weight_decay * param) into `grads`,
// which must enumerate the same slots in the same order as `params`.
void add_regularizer_gradient(const std::vector<ParamSlot>& params,
                              const std::vector<ParamSlot>& grads, double weight_decay);

enum class Optimizer { kSgd, kAdam };

Optimizer optimizer_from_string(const std::string& name);
std::string to_string(Optimizer kind);

// First and second moment accumulators, one entry per parameter slot, plus
// the shared step counter. Empty vectors mean "not yet initialized".
struct AdamState {
  long long t = 0;
  std::vector<Eigen::ArrayXd> m;
  std::vector<Eigen::ArrayXd> v;
};

void sgd_step(const std::vector<ParamSlot>& params, const std::vector<ParamSlot>& grads,
              double learning_rate);
// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8 and bias correction.
// Sizes `state` to the slots on first use.
void adam_step(const std::vector<ParamSlot>& params, const std::vector<ParamSlot>& grads,
               AdamState& state, double learning_rate);

struct HistoryRow {
  Index epoch = 0;          // 0 is the pre-training evaluation
  double train_loss = 0.0;  // mean data loss over the train split
  double test_psnr = 0.0;   // mean PSNR over the test split, NaN if empty
};

struct TrainConfig {
  Index epochs = 200;
  Index batch_size = 8;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::kAdam;
  double weight_decay = 1e-6;
  std::uint64_t seed = 0;
  int threads = 1;
  NetworkConfig network;
  std::string checkpoint_path;  // rewritten after every epoch when non-empty
  std::string log_csv;          // per-epoch CSV log when non-empty
  std::function<void(const HistoryRow&)> on_epoch;  // progress hook, may be empty

  void validate() const;
};

// Mean data loss + L2 penalty over the given sample indices, with the exact
// gradient of that objective. The per-sample backward passes may run in
// parallel; the reduction order is fixed, so results do not depend on the
// thread count.
struct ObjectiveResult {
  double value = 0.0;           // mean data loss + regularizer
  double mean_data_loss = 0.0;  // without the penalty term
  ReconNetParams gradient;
};

ObjectiveResult training_objective(const std::vector<KSpaceSample>& samples,
                                   const std::vector<Index>& indices,
                                   const ReconNetParams& params, const TrainConfig& config);

// Zero-filled adjoint followed by the network.
ComplexImage reconstruct_sample(const KSpaceSample& sample, const ReconNetParams& params,
                                const NetworkConfig& config);

// Mean PSNR of reconstruct_sample over `samples`; NaN for an empty list.
double mean_test_psnr(const std::vector<KSpaceSample>& samples, const ReconNetParams& params,
                      const NetworkConfig& config, int threads);

struct Checkpoint {
  TrainConfig config;          // paths and thread count are not serialized
  std::string dataset_digest;  // config digest of the dataset trained on
  Index epoch = 0;             // completed epochs
  std::vector<HistoryRow> history;
  ReconNetParams params;
  AdamState adam;  // unused when optimizer == kSgd
};

// Fresh run: seeded init, epoch-0 evaluation row, then `epochs` epochs of
// seeded-shuffle mini-batch updates on mean loss + penalty. Each epoch logs
// mean train loss and test PSNR, and rewrites the checkpoint file. Aborts
// with TrainError if the loss stops being finite.
Checkpoint train(const TrainConfig& config, const Dataset& dataset);

// Continues from `start` through epoch `config.epochs`. Identical seeds give
// a run bitwise equal to training straight through without the stop.
Checkpoint train(const TrainConfig& config, const Dataset& dataset, const Checkpoint& start);

// Single file: u64 header length, JSON header (config, progress, history,
// name -> offset index), then one ODET record per parameter and optimizer
// slot. The write goes to a temp file first and is renamed into place.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history);

}  // namespace odemri
