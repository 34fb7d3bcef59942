// Command-line front end: train / eval / surface / dkw / idt.
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "swd/config.hpp"
#include "swd/errors.hpp"
#include "swd/trainer.hpp"

namespace {

std::map<std::string, std::string> parse_sets(
    const std::vector<std::string>& sets) {
  std::map<std::string, std::string> kv;
  for (const std::string& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw swd::ConfigError("--set expects key=value, got: " + s);
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return kv;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sliced-Wasserstein transport lab"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out;
  std::vector<std::string> sets;
  auto* config_opt =
      app.add_option("--config", config_path, "key = value config file");
  auto* seed_opt = app.add_option("--seed", seed, "RNG seed override");
  auto* out_opt = app.add_option(
      "--out", out, "output directory (train/eval) or file (surface/idt)");
  app.add_option("--set", sets, "config override, key=value (repeatable)");

  auto* train = app.add_subcommand("train", "train a model");
  train->fallthrough();

  auto* eval = app.add_subcommand("eval", "score a checkpoint");
  eval->fallthrough();
  swd::EvalRequest ereq;
  eval->add_option("--checkpoint", ereq.checkpoint, "trained checkpoint")
      ->required();
  eval->add_option("--metrics", ereq.metrics,
                   "subset of fid, fid-latent, swd (default: all that apply)")
      ->delimiter(',');
  eval->add_option("--n", ereq.n, "evaluation sample count (>= 100)");

  auto* surface = app.add_subcommand("surface", "export the critic surface");
  surface->fallthrough();
  swd::SurfaceRequest sreq;
  surface->add_option("--checkpoint", sreq.checkpoint, "trained checkpoint")
      ->required();
  surface->add_option("--grid", sreq.grid, "lattice resolution (default 128)");
  surface->add_option("--lo", sreq.lo, "lattice lower corner (default -2)");
  surface->add_option("--hi", sreq.hi, "lattice upper corner (default 2)");

  auto* dkw = app.add_subcommand("dkw", "empirical one-sided CDF tail check");
  dkw->fallthrough();
  swd::DkwRequest dreq;
  dkw->add_option("--b", dreq.b, "sample size per trial");
  dkw->add_option("--eps", dreq.eps, "deviation threshold");
  dkw->add_option("--trials", dreq.trials, "number of trials (>= 1000)");

  auto* idt = app.add_subcommand("idt", "iterative distribution transfer");
  idt->fallthrough();
  swd::IdtRequest ireq;
  idt->add_option("--dataset", ireq.dataset,
                  "swiss-roll, ring-8 or grid-25 source");
  idt->add_option("--iters", ireq.iters, "transfer rounds (default 100)");
  idt->add_option("--n", ireq.n, "sample count per side");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? swd::kExitOk : swd::kExitConfig;
  }

  try {
    std::map<std::string, std::string> overrides = parse_sets(sets);
    if (seed_opt->count() > 0) overrides["seed"] = std::to_string(seed);

    if (train->parsed()) {
      swd::RunConfig rc;
      if (config_opt->count() > 0)
        swd::apply_config(rc, swd::load_config_file(config_path));
      if (!overrides.empty()) swd::apply_config(rc, overrides);
      if (out_opt->count() > 0) rc.out_dir = out;
      return swd::run_train(rc);
    }
    if (eval->parsed()) {
      if (config_opt->count() > 0) {
        auto file_kv = swd::load_config_file(config_path);
        for (const auto& [k, v] : overrides) file_kv[k] = v;
        overrides = std::move(file_kv);
      }
      if (out_opt->count() > 0) ereq.out_dir = out;
      return swd::run_eval(ereq, overrides);
    }
    if (surface->parsed()) {
      if (out_opt->count() == 0)
        throw swd::ConfigError("surface needs --out <csv path>");
      sreq.out_path = out;
      return swd::run_surface(sreq);
    }
    if (dkw->parsed()) {
      if (seed_opt->count() > 0) dreq.seed = seed;
      return swd::run_dkw(dreq);
    }
    if (idt->parsed()) {
      if (seed_opt->count() > 0) ireq.seed = seed;
      if (out_opt->count() > 0) ireq.out_path = out;
      return swd::run_idt(ireq);
    }
    return swd::kExitConfig;  // unreachable: a subcommand is required
  } catch (const swd::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return swd::kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return swd::kExitError;
  }
}
