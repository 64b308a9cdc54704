#include "odemri/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <utility>

#include "odemri/errors.hpp"
#include "odemri/metrics.hpp"
#include "odemri/parallel.hpp"
#include "odemri/tensor_io.hpp"

namespace odemri {

namespace {

using nlohmann::json;

// Stream ids for the trainer's own draws. Disjoint from the datagen bases so
// sharing one seed across generation and training never reuses a stream.
constexpr std::uint64_t kInitStream = 3ULL << 32;
constexpr std::uint64_t kShuffleStreamBase = 4ULL << 32;

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

constexpr char kCheckpointMagic[] = "odemri-checkpoint";
constexpr int kCheckpointVersion = 1;

Eigen::Map<Eigen::ArrayXd> slot_view(const ParamSlot& slot) {
  return {slot.data, slot.size};
}

Eigen::Map<const Eigen::ArrayXd> slot_cview(const ParamSlot& slot) {
  return {slot.data, slot.size};
}

void require_matching_slots(const std::vector<ParamSlot>& a, const std::vector<ParamSlot>& b,
                            const char* what) {
  if (a.size() != b.size()) throw ShapeError(std::string(what) + ": slot counts differ");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].name != b[i].name || a[i].size != b[i].size)
      throw ShapeError(std::string(what) + ": slot '" + a[i].name + "' does not line up");
}

// param_slots wants a mutable reference; these callers only read through it.
std::vector<ParamSlot> slots_of(const ReconNetParams& params, const NetworkConfig& config) {
  return param_slots(const_cast<ReconNetParams&>(params), config);
}

// JSON has no encoding for non-finite numbers, so those become strings.
json json_from_double(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double json_to_double(const json& j, const std::string& context) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw IoError("checkpoint field '" + context + "' is not a number");
}

const json& require_field(const json& j, const char* key, const std::string& context) {
  const auto it = j.find(key);
  if (it == j.end())
    throw IoError("checkpoint header of '" + context + "' is missing field '" + key + "'");
  return *it;
}

HistoryRow evaluation_row(Index epoch, const Dataset& dataset, const ReconNetParams& params,
                          const TrainConfig& config) {
  const Index n = static_cast<Index>(dataset.train.size());
  std::vector<double> losses(static_cast<std::size_t>(n));
  parallel_for(n, config.threads, [&](Index i) {
    const KSpaceSample& s = dataset.train[static_cast<std::size_t>(i)];
    losses[static_cast<std::size_t>(i)] =
        mse_loss(reconstruct_sample(s, params, config.network), s.truth);
  });
  double sum = 0.0;
  for (double l : losses) sum += l;
  return {epoch, sum / static_cast<double>(n),
          mean_test_psnr(dataset.test, params, config.network, config.threads)};
}

}  // namespace

double mse_loss(const ComplexImage& recon, const ComplexImage& truth) {
  require_same_shape(recon, truth, "mse_loss");
  const double pixels = static_cast<double>(recon.re.size());
  if (pixels == 0.0) throw ShapeError("mse_loss: empty image");
  const double sq = (recon.re.flat() - truth.re.flat()).square().sum() +
                    (recon.im.flat() - truth.im.flat()).square().sum();
  return sq / (2.0 * pixels);
}

ComplexImage mse_loss_gradient(const ComplexImage& recon, const ComplexImage& truth) {
  require_same_shape(recon, truth, "mse_loss_gradient");
  const double pixels = static_cast<double>(recon.re.size());
  if (pixels == 0.0) throw ShapeError("mse_loss_gradient: empty image");
  return {Tensor(recon.re.shape(), (recon.re.flat() - truth.re.flat()) / pixels),
          Tensor(recon.im.shape(), (recon.im.flat() - truth.im.flat()) / pixels)};
}

double regularizer(const std::vector<ParamSlot>& slots, double weight_decay) {
  double sum = 0.0;
  for (const ParamSlot& slot : slots)
    if (slot.regularized) sum += slot_cview(slot).square().sum();
  return weight_decay * sum;
}

void add_regularizer_gradient(const std::vector<ParamSlot>& params,
                              const std::vector<ParamSlot>& grads, double weight_decay) {
  require_matching_slots(params, grads, "add_regularizer_gradient");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].regularized)
      slot_view(grads[i]) += (2.0 * weight_decay) * slot_cview(params[i]);
}

Optimizer optimizer_from_string(const std::string& name) {
  if (name == "sgd") return Optimizer::kSgd;
  if (name == "adam") return Optimizer::kAdam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

std::string to_string(Optimizer kind) {
  return kind == Optimizer::kSgd ? "sgd" : "adam";
}

void sgd_step(const std::vector<ParamSlot>& params, const std::vector<ParamSlot>& grads,
              double learning_rate) {
  require_matching_slots(params, grads, "sgd_step");
  for (std::size_t i = 0; i < params.size(); ++i)
    slot_view(params[i]) -= learning_rate * slot_cview(grads[i]);
}

void adam_step(const std::vector<ParamSlot>& params, const std::vector<ParamSlot>& grads,
               AdamState& state, double learning_rate) {
  require_matching_slots(params, grads, "adam_step");
  if (state.m.empty() && state.v.empty()) {
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const ParamSlot& slot : params) {
      state.m.push_back(Eigen::ArrayXd::Zero(slot.size));
      state.v.push_back(Eigen::ArrayXd::Zero(slot.size));
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("adam_step: optimizer state does not match the parameter slots");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::ArrayXd& m = state.m[i];
    Eigen::ArrayXd& v = state.v[i];
    if (m.size() != params[i].size || v.size() != params[i].size)
      throw ShapeError("adam_step: optimizer state does not match slot '" + params[i].name + "'");
    const auto g = slot_cview(grads[i]);
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    v = kBeta2 * v + (1.0 - kBeta2) * g.square();
    slot_view(params[i]) -= learning_rate * (m / bc1) / ((v / bc2).sqrt() + kAdamEps);
  }
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning_rate must be finite and non-negative");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
    throw ConfigError("weight_decay must be finite and non-negative");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  network.validate();
}

ObjectiveResult training_objective(const std::vector<KSpaceSample>& samples,
                                   const std::vector<Index>& indices,
                                   const ReconNetParams& params, const TrainConfig& config) {
  config.validate();
  const Index n = static_cast<Index>(indices.size());
  if (n == 0) throw ConfigError("training_objective needs at least one sample");
  for (Index idx : indices)
    if (idx < 0 || idx >= static_cast<Index>(samples.size()))
      throw ConfigError("training_objective: sample index out of range");

  std::vector<ReconNetParams> grads(static_cast<std::size_t>(n));
  std::vector<double> losses(static_cast<std::size_t>(n));
  parallel_for(n, config.threads, [&](Index i) {
    const KSpaceSample& s = samples[static_cast<std::size_t>(indices[static_cast<std::size_t>(i)])];
    NetworkTape tape;
    const ComplexImage recon = network_forward(zero_filled(s), params, config.network, &tape);
    losses[static_cast<std::size_t>(i)] = mse_loss(recon, s.truth);
    NetworkGrads g =
        network_backward(tape, params, config.network, mse_loss_gradient(recon, s.truth));
    grads[static_cast<std::size_t>(i)] =
        ReconNetParams{std::move(g.lift), std::move(g.blocks), std::move(g.project)};
  });

  ObjectiveResult out;
  out.gradient = zero_params(config.network);
  const auto acc = slots_of(out.gradient, config.network);
  double loss_sum = 0.0;
  // Fixed reduction order: sample i's contribution lands before sample i+1's
  // regardless of which thread produced it.
  for (Index i = 0; i < n; ++i) {
    loss_sum += losses[static_cast<std::size_t>(i)];
    const auto gs = slots_of(grads[static_cast<std::size_t>(i)], config.network);
    for (std::size_t k = 0; k < acc.size(); ++k) slot_view(acc[k]) += slot_cview(gs[k]);
  }
  const double scale = 1.0 / static_cast<double>(n);
  for (const ParamSlot& slot : acc) slot_view(slot) *= scale;

  const auto pslots = slots_of(params, config.network);
  out.mean_data_loss = loss_sum / static_cast<double>(n);
  out.value = out.mean_data_loss + regularizer(pslots, config.weight_decay);
  add_regularizer_gradient(pslots, acc, config.weight_decay);
  return out;
}

ComplexImage reconstruct_sample(const KSpaceSample& sample, const ReconNetParams& params,
                                const NetworkConfig& config) {
  return network_forward(zero_filled(sample), params, config);
}

double mean_test_psnr(const std::vector<KSpaceSample>& samples, const ReconNetParams& params,
                      const NetworkConfig& config, int threads) {
  const Index n = static_cast<Index>(samples.size());
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> vals(static_cast<std::size_t>(n));
  parallel_for(n, threads, [&](Index i) {
    const KSpaceSample& s = samples[static_cast<std::size_t>(i)];
    vals[static_cast<std::size_t>(i)] = psnr(reconstruct_sample(s, params, config), s.truth);
  });
  double sum = 0.0;
  for (double v : vals) sum += v;
  return sum / static_cast<double>(n);
}

Checkpoint train(const TrainConfig& config, const Dataset& dataset) {
  config.validate();
  if (dataset.train.empty()) throw ConfigError("training requires a non-empty train split");
  Checkpoint start;
  start.config = config;
  start.dataset_digest = dataset.manifest.config_digest;
  Rng init_rng = Rng(config.seed).stream(kInitStream);
  start.params = init_params(config.network, init_rng);
  start.epoch = 0;
  // Pre-training evaluation, so later epochs have a fixed reference point.
  start.history.push_back(evaluation_row(0, dataset, start.params, config));
  return train(config, dataset, start);
}

Checkpoint train(const TrainConfig& config, const Dataset& dataset, const Checkpoint& start) {
  config.validate();
  if (dataset.train.empty()) throw ConfigError("training requires a non-empty train split");
  if (!same_network_shape(config.network, start.config.network))
    throw ConfigError("checkpoint network shape does not match the requested configuration");
  if (config.optimizer != start.config.optimizer)
    throw ConfigError("checkpoint optimizer does not match the requested optimizer");
  if (!start.dataset_digest.empty() && !dataset.manifest.config_digest.empty() &&
      start.dataset_digest != dataset.manifest.config_digest)
    throw ConfigError("checkpoint was trained on a different dataset (digest " +
                      start.dataset_digest + " vs " + dataset.manifest.config_digest + ")");

  Checkpoint ckpt = start;
  ckpt.config = config;
  if (!dataset.manifest.config_digest.empty()) ckpt.dataset_digest = dataset.manifest.config_digest;

  const Index M = static_cast<Index>(dataset.train.size());
  const auto slots = param_slots(ckpt.params, config.network);

  for (Index epoch = ckpt.epoch + 1; epoch <= config.epochs; ++epoch) {
    // The permutation depends only on (seed, epoch), so a resumed run shuffles
    // exactly like an uninterrupted one.
    const std::vector<Index> perm =
        Rng(config.seed).stream(kShuffleStreamBase + static_cast<std::uint64_t>(epoch))
            .permutation(M);
    double loss_sum = 0.0;
    for (Index begin = 0; begin < M; begin += config.batch_size) {
      const Index end = std::min(M, begin + config.batch_size);
      std::vector<Index> batch(perm.begin() + begin, perm.begin() + end);
      // The shuffle decides membership; accumulation order stays ascending.
      std::sort(batch.begin(), batch.end());

      ObjectiveResult r = training_objective(dataset.train, batch, ckpt.params, config);
      if (!std::isfinite(r.value)) {
        char msg[160];
        std::snprintf(msg, sizeof(msg),
                      "training diverged: objective %g at epoch %lld, batch starting at %lld",
                      r.value, static_cast<long long>(epoch), static_cast<long long>(begin));
        throw TrainError(msg);
      }
      loss_sum += r.mean_data_loss * static_cast<double>(end - begin);

      const auto gslots = param_slots(r.gradient, config.network);
      if (config.optimizer == Optimizer::kSgd)
        sgd_step(slots, gslots, config.learning_rate);
      else
        adam_step(slots, gslots, ckpt.adam, config.learning_rate);
    }

    HistoryRow row{epoch, loss_sum / static_cast<double>(M),
                   mean_test_psnr(dataset.test, ckpt.params, config.network, config.threads)};
    ckpt.history.push_back(row);
    ckpt.epoch = epoch;
    if (!config.checkpoint_path.empty()) save_checkpoint(ckpt, config.checkpoint_path);
    if (!config.log_csv.empty()) write_history_csv(config.log_csv, ckpt.history);
    if (config.on_epoch) config.on_epoch(row);
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto slots = slots_of(ckpt.params, ckpt.config.network);
  const bool with_adam = ckpt.config.optimizer == Optimizer::kAdam && !ckpt.adam.m.empty();
  if (with_adam && (ckpt.adam.m.size() != slots.size() || ckpt.adam.v.size() != slots.size()))
    throw ShapeError("save_checkpoint: optimizer state does not match the parameter slots");

  std::ostringstream blobs(std::ios::binary);
  json index = json::object();
  const auto append_blob = [&](const std::string& name, const double* data, Index size) {
    index[name] = static_cast<std::uint64_t>(blobs.tellp());
    odet::Record rec;
    rec.dtype = 0;
    rec.dims = {size};
    rec.payload.assign(data, data + size);
    odet::write_record(blobs, rec);
  };
  for (const ParamSlot& slot : slots) append_blob(slot.name, slot.data, slot.size);
  if (with_adam)
    for (std::size_t i = 0; i < slots.size(); ++i) {
      append_blob("adam.m." + slots[i].name, ckpt.adam.m[i].data(), ckpt.adam.m[i].size());
      append_blob("adam.v." + slots[i].name, ckpt.adam.v[i].data(), ckpt.adam.v[i].size());
    }

  const NetworkConfig& net = ckpt.config.network;
  json header;
  header["magic"] = kCheckpointMagic;
  header["version"] = kCheckpointVersion;
  header["epoch"] = ckpt.epoch;
  header["dataset_digest"] = ckpt.dataset_digest;
  header["train"] = {{"epochs", ckpt.config.epochs},
                     {"batch_size", ckpt.config.batch_size},
                     {"learning_rate", ckpt.config.learning_rate},
                     {"optimizer", to_string(ckpt.config.optimizer)},
                     {"weight_decay", ckpt.config.weight_decay},
                     {"seed", ckpt.config.seed}};
  header["network"] = {{"num_blocks", net.num_blocks},
                       {"feature_channels", net.feature_channels},
                       {"augment_channels", net.augment_channels},
                       {"steps", net.integrator.steps},
                       {"t0", net.integrator.t0},
                       {"t1", net.integrator.t1},
                       {"activation", to_string(net.activation)},
                       {"mode", to_string(net.mode)}};
  if (ckpt.config.optimizer == Optimizer::kAdam) header["adam"] = {{"t", ckpt.adam.t}};
  json history = json::array();
  for (const HistoryRow& row : ckpt.history)
    history.push_back({{"epoch", row.epoch},
                       {"train_loss", json_from_double(row.train_loss)},
                       {"test_psnr", json_from_double(row.test_psnr)}});
  header["history"] = std::move(history);
  header["index"] = std::move(index);

  const std::string header_bytes = header.dump();
  const std::string blob_bytes = blobs.str();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    const std::uint64_t len = header_bytes.size();
    char lenbuf[8];
    for (int b = 0; b < 8; ++b) lenbuf[b] = static_cast<char>((len >> (8 * b)) & 0xFF);
    out.write(lenbuf, 8);
    out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
    out.write(blob_bytes.data(), static_cast<std::streamsize>(blob_bytes.size()));
    out.flush();
    if (!out) throw IoError("failed while writing '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp + "' into place: " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  char lenbuf[8];
  in.read(lenbuf, 8);
  if (!in) throw IoError("checkpoint '" + path + "' is truncated");
  std::uint64_t len = 0;
  for (int b = 0; b < 8; ++b)
    len |= static_cast<std::uint64_t>(static_cast<unsigned char>(lenbuf[b])) << (8 * b);
  if (len == 0 || len > (1ULL << 30))
    throw IoError("checkpoint '" + path + "' has an implausible header length");
  std::string header_bytes(len, '\0');
  in.read(header_bytes.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("checkpoint header of '" + path + "' is truncated");

  const json header = json::parse(header_bytes, nullptr, false);
  if (header.is_discarded() || !header.is_object())
    throw IoError("checkpoint header of '" + path + "' is not valid JSON");
  if (header.value("magic", std::string()) != kCheckpointMagic)
    throw IoError("'" + path + "' is not a checkpoint file");
  if (header.value("version", -1) != kCheckpointVersion)
    throw IoError("checkpoint '" + path + "' has an unsupported version");

  Checkpoint ckpt;
  const json& tsec = require_field(header, "train", path);
  ckpt.config.epochs = require_field(tsec, "epochs", path).get<Index>();
  ckpt.config.batch_size = require_field(tsec, "batch_size", path).get<Index>();
  ckpt.config.learning_rate = require_field(tsec, "learning_rate", path).get<double>();
  ckpt.config.optimizer =
      optimizer_from_string(require_field(tsec, "optimizer", path).get<std::string>());
  ckpt.config.weight_decay = require_field(tsec, "weight_decay", path).get<double>();
  ckpt.config.seed = require_field(tsec, "seed", path).get<std::uint64_t>();

  const json& net = require_field(header, "network", path);
  NetworkConfig& network = ckpt.config.network;
  network.num_blocks = require_field(net, "num_blocks", path).get<Index>();
  network.feature_channels = require_field(net, "feature_channels", path).get<Index>();
  network.augment_channels = require_field(net, "augment_channels", path).get<Index>();
  network.integrator.steps = require_field(net, "steps", path).get<Index>();
  network.integrator.t0 = require_field(net, "t0", path).get<double>();
  network.integrator.t1 = require_field(net, "t1", path).get<double>();
  network.activation =
      activation_from_string(require_field(net, "activation", path).get<std::string>());
  network.mode = network_mode_from_string(require_field(net, "mode", path).get<std::string>());
  network.validate();

  ckpt.epoch = require_field(header, "epoch", path).get<Index>();
  ckpt.dataset_digest = require_field(header, "dataset_digest", path).get<std::string>();
  for (const json& row : require_field(header, "history", path)) {
    HistoryRow h;
    h.epoch = require_field(row, "epoch", path).get<Index>();
    h.train_loss = json_to_double(require_field(row, "train_loss", path), "history.train_loss");
    h.test_psnr = json_to_double(require_field(row, "test_psnr", path), "history.test_psnr");
    ckpt.history.push_back(h);
  }

  const json& index = require_field(header, "index", path);
  const std::uint64_t blob_base = 8 + len;
  const auto read_blob = [&](const std::string& name, double* dest, Index size) {
    const auto it = index.find(name);
    if (it == index.end())
      throw IoError("checkpoint '" + path + "' is missing parameter '" + name + "'");
    in.clear();
    in.seekg(static_cast<std::streamoff>(blob_base + it->get<std::uint64_t>()));
    const odet::Record rec = odet::read_record(in, path + " [" + name + "]");
    if (rec.dtype != 0 || static_cast<Index>(rec.payload.size()) != size)
      throw IoError("checkpoint parameter '" + name + "' in '" + path + "' has " +
                    std::to_string(rec.payload.size()) + " values where " + std::to_string(size) +
                    " were expected (network shape mismatch)");
    std::memcpy(dest, rec.payload.data(), static_cast<std::size_t>(size) * sizeof(double));
  };

  ckpt.params = zero_params(network);
  const auto slots = param_slots(ckpt.params, network);
  for (const ParamSlot& slot : slots) read_blob(slot.name, slot.data, slot.size);

  if (ckpt.config.optimizer == Optimizer::kAdam) {
    const json& adam = require_field(header, "adam", path);
    ckpt.adam.t = require_field(adam, "t", path).get<long long>();
    if (!slots.empty() && index.contains("adam.m." + slots.front().name)) {
      for (const ParamSlot& slot : slots) {
        Eigen::ArrayXd m = Eigen::ArrayXd::Zero(slot.size);
        Eigen::ArrayXd v = Eigen::ArrayXd::Zero(slot.size);
        read_blob("adam.m." + slot.name, m.data(), slot.size);
        read_blob("adam.v." + slot.name, v.data(), slot.size);
        ckpt.adam.m.push_back(std::move(m));
        ckpt.adam.v.push_back(std::move(v));
      }
    }
  }
  return ckpt;
}

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "epoch,train_loss,test_psnr_mean\n";
  char line[128];
  for (const HistoryRow& row : history) {
    std::snprintf(line, sizeof(line), "%lld,%.17g,%.17g\n", static_cast<long long>(row.epoch),
                  row.train_loss, row.test_psnr);
    out << line;
  }
  if (!out) throw IoError("failed while writing '" + path + "'");
}

}  // namespace odemri
