#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "swd/evaldata.hpp"
#include "swd/stiefel.hpp"

namespace swd {

enum class ModelKind { kSwae, kSwgan, kWganGp, kIdtBaseline };

ModelKind parse_model_kind(const std::string& name);  // ConfigError if unknown
const char* model_kind_name(ModelKind kind);

struct TrainConfig {
  ModelKind model = ModelKind::kSwgan;
  DatasetId dataset = DatasetId::kSwissRoll;
  std::size_t batch = 256;      // b
  std::size_t steps = 32000;    // h
  double lr = 3e-4;
  double lr_final = 3e-5;       // linear ramp target; 0 = constant lr
  std::size_t disc_iters = 5;
  std::size_t r = 64;           // projection count / transport latent width
  std::size_t m = 1;            // dual blocks / transport blocks / idt rounds
  std::size_t bins = 32;        // l
  double alpha = 1.0;
  double lambda1 = 20.0;
  double lambda2 = 10.0;
  double k = 1e-3;
  double k_prime = 0.0;
  std::uint64_t seed = 1;
  std::size_t z_dim = 2;        // generator input dimension
  std::size_t hidden = 64;      // mlp width
  std::size_t hidden_layers = 2;
  AdamConfig adam;              // lr copied from `lr` when running
};

// Learning rate at a given step: linear from `lr` at step 0 to `lr_final`
// at the last step (lr_final == 0 means constant). Pure function of the
// step counter, so resumed runs see the same schedule.
double scheduled_lr(const TrainConfig& cfg, std::size_t step);

struct RunConfig {
  TrainConfig train;
  std::string out_dir = "out";
  std::size_t log_every = 100;
  std::size_t eval_every = 0;  // 0 = only on demand
  std::size_t checkpoint_every = 1000;
  std::size_t eval_n = 2048;
  std::size_t grid = 128;      // surface export resolution
};

// `key = value` lines; '#' starts a comment; [section] headers group lines
// but keys are global (a later duplicate overrides). Returns the flat map.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> load_config_file(const std::string& path);

// Applies recognized keys; unknown keys or unparsable values are ConfigError.
void apply_config(RunConfig& rc, const std::map<std::string, std::string>& kv);

// Tuned per-model defaults (the toy presets).
TrainConfig default_train_config(ModelKind kind);

// Canonical `key = value` dump of the model-defining fields only. This is
// what checkpoints embed: it pins the architecture without tying the file
// to a particular output directory or logging cadence.
std::string train_config_to_text(const TrainConfig& tc);

// Full dump including the run plumbing (out-dir, intervals); echoed into
// the run directory as config.txt.
std::string config_to_text(const RunConfig& rc);

}  // namespace swd
