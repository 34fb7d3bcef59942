#include "swd/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "swd/checkpoint.hpp"
#include "swd/errors.hpp"
#include "swd/evaldata.hpp"
#include "swd/models.hpp"
#include "swd/sliced_ot.hpp"

namespace fs = std::filesystem;

namespace swd {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string cell(double v) {
  if (!std::isfinite(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct EvalMetrics {
  double fid = kNan;
  double fid_latent = kNan;
  double swd = kNan;
};

// Evaluation draws from streams keyed by (seed, step), far away from the
// small ids the models derive at init, so eval cadence cannot perturb the
// training stream.
EvalMetrics compute_metrics(const Model& model, const RunConfig& rc,
                            std::size_t step, bool want_fid, bool want_latent,
                            bool want_swd) {
  RngStream rng = RngStream(rc.train.seed).derive((1ull << 32) + step);
  const std::size_t n = rc.eval_n;
  EvalMetrics em;
  DenseMatrix gen = model.generate(n, rng);
  DenseMatrix ref = sample_dataset(rc.train.dataset, n, rng);
  if (want_fid) em.fid = fid_score(gen, ref);
  if (want_latent && model.latent_dim() > 0) {
    DenseMatrix lat = model.encode(ref, rng);
    DenseMatrix prior = rng.gaussian_matrix(model.latent_dim(), n);
    em.fid_latent = frechet_gaussian(gaussian_fit(lat), gaussian_fit(prior));
  }
  if (want_swd) em.swd = mc_swd(gen, ref, 512, 1.0, rng).value;
  return em;
}

void write_row(std::ofstream& out, std::size_t step, const StepStats& s,
               const EvalMetrics& em, long long wall_ms) {
  out << step << ',' << cell(s.loss_g) << ',' << cell(s.loss_d) << ','
      << cell(s.penalty1) << ',' << cell(s.penalty2) << ',' << cell(em.fid)
      << ',' << cell(em.fid_latent) << ',' << cell(em.swd) << ',' << wall_ms
      << '\n';
  out.flush();
}

// Opens for append, adding the header when the file is new or empty.
std::ofstream open_csv(const fs::path& path) {
  bool need_header = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw ConfigError("cannot open for writing: " + path.string());
  if (need_header) out << kMetricsHeader << '\n';
  return out;
}

std::string take_config_text(std::vector<NamedArray>& arrays) {
  for (auto it = arrays.begin(); it != arrays.end(); ++it) {
    if (it->name == "meta.config") {
      auto bytes = bytes_from_array(*it);
      arrays.erase(it);
      return std::string(bytes.begin(), bytes.end());
    }
  }
  throw FormatError("checkpoint has no embedded config (meta.config)");
}

int report_error(const std::exception& e, int code) {
  std::fprintf(stderr, "error: %s\n", e.what());
  return code;
}

}  // namespace

std::unique_ptr<Model> load_checkpoint_model(
    const std::string& path, RunConfig& rc,
    const std::map<std::string, std::string>& overrides) {
  std::vector<NamedArray> arrays = read_checkpoint(path);
  const std::string cfg_text = take_config_text(arrays);
  apply_config(rc, parse_config_text(cfg_text));
  if (!overrides.empty()) apply_config(rc, overrides);
  auto model = make_model(rc.train);
  model->load_state(arrays);
  return model;
}

int run_train(RunConfig rc) {
  try {
    fs::create_directories(rc.out_dir);
    {
      std::ofstream cfg(fs::path(rc.out_dir) / "config.txt",
                        std::ios::trunc);
      if (!cfg)
        throw ConfigError("cannot write into out-dir: " + rc.out_dir);
      cfg << config_to_text(rc);
    }
    std::unique_ptr<Model> model = make_model(rc.train);
    const fs::path ckpt = fs::path(rc.out_dir) / kCheckpointFile;
    if (fs::exists(ckpt)) {
      std::vector<NamedArray> arrays = read_checkpoint(ckpt.string());
      take_config_text(arrays);  // trainer-owned; models don't consume it
      model->load_state(arrays);
      std::fprintf(stderr, "resuming from step %zu\n", model->step());
    }
    std::ofstream metrics = open_csv(fs::path(rc.out_dir) / "metrics.csv");

    auto save = [&]() {
      std::vector<NamedArray> arrays = model->state_arrays();
      const std::string text = train_config_to_text(rc.train);
      arrays.push_back(array_from_bytes(
          "meta.config", std::vector<std::uint8_t>(text.begin(),
                                                   text.end())));
      write_checkpoint(ckpt.string(), arrays);
    };

    const auto t0 = std::chrono::steady_clock::now();
    while (model->step() < rc.train.steps) {
      StepStats s = model->train_step();
      const bool eval_step =
          rc.eval_every != 0 && s.step % rc.eval_every == 0;
      const bool log_step = s.step % rc.log_every == 0 || eval_step ||
                            s.step == rc.train.steps;
      if (log_step) {
        EvalMetrics em;
        if (eval_step) em = compute_metrics(*model, rc, s.step, true,
                                            model->latent_dim() > 0, true);
        const auto wall =
            std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count();
        write_row(metrics, s.step, s, em, wall);
      }
      if (s.step % rc.checkpoint_every == 0 && s.step < rc.train.steps)
        save();
    }
    save();
    return kExitOk;
  } catch (const ConfigError& e) {
    return report_error(e, kExitConfig);
  } catch (const NonFiniteLoss& e) {
    return report_error(e, kExitNonFinite);
  } catch (const std::exception& e) {
    return report_error(e, kExitError);
  }
}

int run_eval(const EvalRequest& req,
             const std::map<std::string, std::string>& overrides) {
  try {
    if (req.n < 100)
      throw ConfigError("eval needs n >= 100, got " + std::to_string(req.n));
    RunConfig rc;
    std::unique_ptr<Model> model =
        load_checkpoint_model(req.checkpoint, rc, overrides);
    rc.eval_n = req.n;

    bool want_fid = false, want_latent = false, want_swd = false;
    if (req.metrics.empty()) {
      want_fid = want_swd = true;
      want_latent = model->latent_dim() > 0;
    } else {
      for (const std::string& m : req.metrics) {
        if (m == "fid") {
          want_fid = true;
        } else if (m == "fid-latent") {
          if (model->latent_dim() == 0)
            throw ConfigError(
                "fid-latent needs a latent model, checkpoint holds " +
                std::string(model_kind_name(rc.train.model)));
          want_latent = true;
        } else if (m == "swd") {
          want_swd = true;
        } else {
          throw ConfigError("unknown metric '" + m +
                            "' (expected fid, fid-latent or swd)");
        }
      }
    }

    const EvalMetrics em = compute_metrics(*model, rc, model->step(),
                                           want_fid, want_latent, want_swd);
    std::printf("step = %zu\n", model->step());
    if (want_fid) std::printf("fid = %.17g\n", em.fid);
    if (want_latent) std::printf("fid-latent = %.17g\n", em.fid_latent);
    if (want_swd) std::printf("swd = %.17g\n", em.swd);
    if (!req.out_dir.empty()) {
      fs::create_directories(req.out_dir);
      std::ofstream out = open_csv(fs::path(req.out_dir) / "eval.csv");
      StepStats none;
      const auto wall = 0LL;
      write_row(out, model->step(), none, em, wall);
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    return report_error(e, kExitConfig);
  } catch (const std::exception& e) {
    return report_error(e, kExitError);
  }
}

int run_surface(const SurfaceRequest& req) {
  try {
    RunConfig rc;
    std::unique_ptr<Model> model =
        load_checkpoint_model(req.checkpoint, rc, {});
    if (!model->has_critic())
      throw ConfigError(std::string(model_kind_name(rc.train.model)) +
                        " has no critic surface to export");
    SurfaceGrid grid = value_surface(
        req.grid,
        [&](const DenseMatrix& pts) { return model->critic_values(pts); },
        req.lo, req.hi);
    std::ofstream out(req.out_path, std::ios::trunc);
    if (!out)
      throw ConfigError("cannot open for writing: " + req.out_path);
    out << "x,y,value\n";
    char buf[128];
    for (std::size_t iy = 0; iy < grid.g; ++iy)
      for (std::size_t ix = 0; ix < grid.g; ++ix) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", grid.xs[ix],
                      grid.ys[iy], grid.values[iy * grid.g + ix]);
        out << buf;
      }
    return kExitOk;
  } catch (const ConfigError& e) {
    return report_error(e, kExitConfig);
  } catch (const std::exception& e) {
    return report_error(e, kExitError);
  }
}

int run_idt(const IdtRequest& req) {
  try {
    const DatasetId ds = parse_dataset(req.dataset);
    if (req.n < 2) throw ConfigError("idt needs n >= 2");
    RngStream rng(req.seed);
    DenseMatrix src = sample_dataset(ds, req.n, rng);
    DenseMatrix dst = rng.gaussian_matrix(2, req.n);
    RngStream dir_rng = rng.derive(7);
    const double before = mc_swd(src, dst, 512, 1.0, dir_rng).value;
    DenseMatrix moved = idt_transfer(src, dst, req.iters, rng);
    RngStream dir_rng2 = rng.derive(7);  // same directions as `before`
    const double after = mc_swd(moved, dst, 512, 1.0, dir_rng2).value;
    std::printf("swd before = %.17g\n", before);
    std::printf("swd after  = %.17g\n", after);
    std::printf("reduction  = %.2f%%\n",
                before > 0.0 ? 100.0 * (1.0 - after / before) : 0.0);
    if (!req.out_path.empty()) {
      std::ofstream out(req.out_path, std::ios::trunc);
      if (!out)
        throw ConfigError("cannot open for writing: " + req.out_path);
      out << "x,y\n";
      char buf[80];
      for (std::size_t j = 0; j < moved.cols; ++j) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", moved(0, j),
                      moved(1, j));
        out << buf;
      }
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    return report_error(e, kExitConfig);
  } catch (const std::exception& e) {
    return report_error(e, kExitError);
  }
}

int run_dkw(const DkwRequest& req) {
  try {
    RngStream rng(req.seed);
    const DkwReport rep = dkw_check(req.b, req.eps, req.trials, rng);
    std::printf("frequency = %.6g\n", rep.frequency);
    std::printf("bound     = %.6g\n", rep.bound);
    std::printf("stderr    = %.3g\n", rep.std_error);
    std::printf("within    = %s\n", rep.within ? "yes" : "no");
    return rep.within ? kExitOk : kExitError;
  } catch (const PreconditionError& e) {
    return report_error(e, kExitConfig);
  } catch (const std::exception& e) {
    return report_error(e, kExitError);
  }
}

}  // namespace swd
