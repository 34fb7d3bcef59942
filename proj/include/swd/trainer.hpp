#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "swd/config.hpp"
#include "swd/models.hpp"

namespace swd {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;      // runtime / io / format failures
inline constexpr int kExitConfig = 2;     // bad config or inapplicable request
inline constexpr int kExitNonFinite = 3;  // training diverged

inline constexpr const char* kMetricsHeader =
    "step,loss_g,loss_d,penalty1,penalty2,fid,fid_latent,swd,wall_ms";
inline constexpr const char* kCheckpointFile = "checkpoint.swd1";

// Trains rc.train.steps steps into rc.out_dir (metrics.csv, config.txt,
// checkpoint.swd1). Resumes from an existing checkpoint in the directory;
// the continuation is bit-identical to an uninterrupted run.
int run_train(RunConfig rc);

// Rebuilds the model a checkpoint describes: its embedded config is applied
// to `rc` first, then `overrides` on top.
std::unique_ptr<Model> load_checkpoint_model(
    const std::string& path, RunConfig& rc,
    const std::map<std::string, std::string>& overrides);

struct EvalRequest {
  std::string checkpoint;
  std::vector<std::string> metrics;  // subset of fid / fid-latent / swd;
                                     // empty = everything applicable
  std::size_t n = 2048;              // >= 100
  std::string out_dir;               // "" = print only, no eval.csv
};
// Config comes from the checkpoint's embedded echo; `overrides` (e.g. a
// --config file or --seed) are applied on top.
int run_eval(const EvalRequest& req,
             const std::map<std::string, std::string>& overrides);

struct SurfaceRequest {
  std::string checkpoint;
  std::size_t grid = 128;
  double lo = -2.0;
  double hi = 2.0;
  std::string out_path;
};
int run_surface(const SurfaceRequest& req);

struct IdtRequest {
  std::string dataset = "swiss-roll";
  std::size_t iters = 100;
  std::size_t n = 2048;
  std::uint64_t seed = 1;
  std::string out_path;  // optional CSV of transferred samples
};
int run_idt(const IdtRequest& req);

struct DkwRequest {
  std::size_t b = 1000;
  double eps = 0.05;
  std::size_t trials = 10000;
  std::uint64_t seed = 1;
};
int run_dkw(const DkwRequest& req);

}  // namespace swd
