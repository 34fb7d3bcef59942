#pragma once

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "swd/checkpoint.hpp"
#include "swd/config.hpp"
#include "swd/matrix.hpp"
#include "swd/rng.hpp"
#include "swd/stiefel.hpp"
#include "swd/tape.hpp"

namespace swd {

enum class Act { kLinear, kLeakyRelu, kElu, kTanh };

struct MlpParams {
  std::vector<DenseMatrix> w;  // layer i: widths[i+1] x widths[i]
  std::vector<DenseMatrix> b;  // widths[i+1] x 1
};

// He-style init: w ~ N(0, sqrt(2 / fan_in)), biases zero.
MlpParams mlp_init(const std::vector<std::size_t>& widths, RngStream& rng);

// Columns are samples. Applies `hidden` after every layer but the last and
// `output` after the last. Runs the same kernels as the tape build so the
// two agree bit for bit.
DenseMatrix mlp_forward(const MlpParams& p, const DenseMatrix& x, Act hidden,
                        Act output, double leaky_slope = 0.2);

struct MlpNodes {
  std::vector<NodeId> w, b;  // parameter leaves
  NodeId out = kNoNode;
};

// Parameter leaves only (out stays kNoNode); apply() can then reuse them on
// several inputs within the same tape.
MlpNodes append_mlp_params(Tape& t, const std::vector<std::size_t>& widths,
                           const std::string& label);
NodeId append_mlp_apply(Tape& t, const MlpNodes& params, NodeId input,
                        Act hidden, Act output, double leaky_slope = 0.2);

MlpNodes append_mlp(Tape& t, NodeId input,
                    const std::vector<std::size_t>& widths, Act hidden,
                    Act output, const std::string& label,
                    double leaky_slope = 0.2);

struct StepStats {
  std::size_t step = 0;  // completed steps after this one
  double loss_g = std::numeric_limits<double>::quiet_NaN();
  double loss_d = std::numeric_limits<double>::quiet_NaN();
  double penalty1 = std::numeric_limits<double>::quiet_NaN();
  double penalty2 = std::numeric_limits<double>::quiet_NaN();
};

// Common face the trainer sees. Every train_step consumes the model's own
// stream in a fixed order, so saving {params, moments, rng, step} and
// reloading resumes bit for bit.
class Model {
 public:
  explicit Model(const TrainConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {}
  virtual ~Model() = default;

  const TrainConfig& config() const { return cfg_; }
  std::size_t step() const { return step_; }

  virtual StepStats train_step() = 0;

  // Data-space samples (2 x n) from the generator / decoder.
  virtual DenseMatrix generate(std::size_t n, RngStream& rng) const = 0;

  virtual std::size_t latent_dim() const { return 0; }  // 0: no latent space
  virtual DenseMatrix encode(const DenseMatrix& x, RngStream& rng) const;

  virtual bool has_critic() const { return false; }
  // Per-column critic value at the given data-space points (2 x n).
  virtual std::vector<double> critic_values(const DenseMatrix& points) const;

  // Full training state (params, optimizer moments, rng, step counter).
  virtual std::vector<NamedArray> state_arrays() const = 0;
  // Restores from state_arrays output. Missing arrays are FormatError;
  // unknown extras get a warning on stderr and are ignored.
  virtual void load_state(const std::vector<NamedArray>& arrays) = 0;

 protected:
  TrainConfig cfg_;
  RngStream rng_;
  std::size_t step_ = 0;
};

// Instantiates the trainable kinds; ConfigError for idt-baseline (it has no
// parameters to train -- the `idt` subcommand runs it directly).
std::unique_ptr<Model> make_model(const TrainConfig& cfg);

class SwaeModel : public Model {
 public:
  explicit SwaeModel(const TrainConfig& cfg);

  StepStats train_step() override;
  DenseMatrix generate(std::size_t n, RngStream& rng) const override;
  std::size_t latent_dim() const override { return cfg_.r; }
  // E(x) pushed through the m transport blocks against fresh prior batches.
  DenseMatrix encode(const DenseMatrix& x, RngStream& rng) const override;
  std::vector<NamedArray> state_arrays() const override;
  void load_state(const std::vector<NamedArray>& arrays) override;

  MlpParams enc, dec;

 private:
  void build_tape();

  std::vector<AdamState> enc_w_adam_, enc_b_adam_, dec_w_adam_, dec_b_adam_;
  Tape tape_;
  EvalContext ctx_;
  NodeId x_ = kNoNode, z_ = kNoNode, loss_ = kNoNode;
  std::vector<NodeId> o_;
  MlpNodes enc_nodes_, dec_nodes_;
};

class SwganModel : public Model {
 public:
  explicit SwganModel(const TrainConfig& cfg);

  StepStats train_step() override;
  DenseMatrix generate(std::size_t n, RngStream& rng) const override;
  bool has_critic() const override { return true; }
  std::vector<double> critic_values(const DenseMatrix& points) const override;
  std::vector<NamedArray> state_arrays() const override;
  void load_state(const std::vector<NamedArray>& arrays) override;

  MlpParams gen, enc;                  // generator, feature extractor
  std::vector<DenseMatrix> theta;      // m orthogonal r x r projections
  std::vector<DenseMatrix> hu, hw, hv; // head params, r x 1 each

 private:
  void build_tapes();
  void disc_update();
  void gen_update();

  std::vector<AdamState> gen_w_adam_, gen_b_adam_, enc_w_adam_, enc_b_adam_;
  std::vector<AdamState> hu_adam_, hw_adam_, hv_adam_;
  std::vector<StiefelAdamState> theta_adam_;

  Tape d_tape_;
  EvalContext d_ctx_;
  NodeId d_x_ = kNoNode, d_gx_ = kNoNode, d_xhat_ = kNoNode,
         d_yhat_ = kNoNode;
  MlpNodes d_enc_;  // parameter leaves shared by the x / gx / xhat branches
  std::vector<NodeId> d_theta_;
  std::vector<NodeId> d_hu_, d_hw_, d_hv_;
  NodeId d_loss_ = kNoNode, d_pen1_ = kNoNode, d_pen2_ = kNoNode,
         d_cx_ = kNoNode, d_cg_ = kNoNode;

  Tape g_tape_;
  EvalContext g_ctx_;
  NodeId g_z_ = kNoNode, g_loss_ = kNoNode;
  MlpNodes g_gen_, g_enc_;
  std::vector<NodeId> g_theta_, g_hu_, g_hw_, g_hv_;

  StepStats last_{};
};

class WganGpModel : public Model {
 public:
  explicit WganGpModel(const TrainConfig& cfg);

  StepStats train_step() override;
  DenseMatrix generate(std::size_t n, RngStream& rng) const override;
  bool has_critic() const override { return true; }
  std::vector<double> critic_values(const DenseMatrix& points) const override;
  std::vector<NamedArray> state_arrays() const override;
  void load_state(const std::vector<NamedArray>& arrays) override;

  MlpParams gen, critic;

 private:
  void build_tapes();
  void disc_update();
  void gen_update();

  std::vector<AdamState> gen_w_adam_, gen_b_adam_, cr_w_adam_, cr_b_adam_;

  Tape d_tape_;
  EvalContext d_ctx_;
  NodeId d_x_ = kNoNode, d_gx_ = kNoNode, d_xhat_ = kNoNode;
  MlpNodes d_cr_;  // parameter leaves shared by all three branches
  NodeId d_loss_ = kNoNode, d_pen_ = kNoNode, d_cx_ = kNoNode,
         d_cg_ = kNoNode;

  Tape g_tape_;
  EvalContext g_ctx_;
  NodeId g_z_ = kNoNode, g_loss_ = kNoNode;
  MlpNodes g_gen_, g_cr_;

  StepStats last_{};
};

}  // namespace swd
