#pragma once

#include <cstdint>
#include <string>

#include "odemri/datagen.hpp"
#include "odemri/trainer.hpp"

namespace odemri {

// Default artifact locations, so the whole pipeline runs with zero flags.
// Command-line flags override these; they never enter the config digest.
struct RunPaths {
  std::string data_dir = "data";
  std::string checkpoint = "checkpoint.ckpt";
  std::string log_csv;  // empty: derived from the checkpoint path
  std::string out_dir = "out";
};

// One JSON file drives every command. Sections: "data", "network", "train",
// "paths", plus a top-level "seed" that the parser copies into both the data
// and train sections. Every field has a default; unknown keys are rejected.
struct RunConfig {
  DataGenConfig data;
  TrainConfig train;  // carries the NetworkConfig
  std::uint64_t seed = 0;
  RunPaths paths;

  void seed_all(std::uint64_t s);
  void validate() const;
};

RunConfig parse_run_config_text(const std::string& text, const std::string& context);
RunConfig load_run_config(const std::string& path);

// Canonical JSON of the experiment-defining fields (data, network, train;
// sorted keys, compact). Paths are locations, not identity, and stay out.
std::string canonical_config_json(const RunConfig& config);

// FNV-1a 64-bit hash of the canonical JSON, as 16 hex digits. Recorded in
// dataset manifests and checkpoints to tie artifacts to their config.
std::string config_digest(const RunConfig& config);

}  // namespace odemri
