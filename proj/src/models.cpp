#include "swd/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <utility>

#include "swd/dual_swd.hpp"
#include "swd/errors.hpp"
#include "swd/evaldata.hpp"
#include "swd/kernels.hpp"
#include "swd/linalg.hpp"
#include "swd/sliced_ot.hpp"

namespace swd {

namespace {

void apply_act(DenseMatrix& m, Act act, double slope) {
  switch (act) {
    case Act::kLinear:
      break;
    case Act::kLeakyRelu:
      for (auto& x : m.a) x = x > 0.0 ? x : slope * x;
      break;
    case Act::kElu:
      for (auto& x : m.a) x = x > 0.0 ? x : std::expm1(x);
      break;
    case Act::kTanh:
      for (auto& x : m.a) x = std::tanh(x);
      break;
  }
}

NodeId append_act(Tape& t, NodeId a, Act act, double slope) {
  switch (act) {
    case Act::kLinear: return a;
    case Act::kLeakyRelu: return t.leaky_relu(a, slope);
    case Act::kElu: return t.elu(a);
    case Act::kTanh: return t.tanh(a);
  }
  return a;
}

std::vector<std::size_t> stack_widths(std::size_t in, std::size_t hidden,
                                      std::size_t layers, std::size_t out) {
  std::vector<std::size_t> w;
  w.reserve(layers + 2);
  w.push_back(in);
  for (std::size_t i = 0; i < layers; ++i) w.push_back(hidden);
  w.push_back(out);
  return w;
}

AdamConfig opt_config(const TrainConfig& cfg) {
  AdamConfig a = cfg.adam;
  a.lr = cfg.lr;
  return a;
}

std::vector<AdamState> zero_states(const std::vector<DenseMatrix>& mats) {
  std::vector<AdamState> s(mats.size());
  for (std::size_t i = 0; i < mats.size(); ++i) {
    s[i].m = DenseMatrix(mats[i].rows, mats[i].cols);
    s[i].v = DenseMatrix(mats[i].rows, mats[i].cols);
  }
  return s;
}

void set_mlp(const Tape& t, EvalContext& ctx, const MlpNodes& n,
             const MlpParams& p) {
  for (std::size_t i = 0; i < p.w.size(); ++i) {
    ctx.set_leaf(t, n.w[i], p.w[i]);
    ctx.set_leaf(t, n.b[i], p.b[i]);
  }
}

void update_mlp(std::vector<AdamState>& sw, std::vector<AdamState>& sb,
                MlpParams& p, const MlpNodes& n, const EvalContext& ctx,
                const AdamConfig& acfg) {
  for (std::size_t i = 0; i < p.w.size(); ++i) {
    adam_step(sw[i], p.w[i], ctx.grad(n.w[i]), acfg);
    adam_step(sb[i], p.b[i], ctx.grad(n.b[i]), acfg);
  }
}

std::string idx_name(const std::string& prefix, const char* kind,
                     std::size_t i) {
  return prefix + "." + kind + std::to_string(i);
}

void push_adam(std::vector<NamedArray>& out, const std::string& name,
               const AdamState& s) {
  out.push_back(array_from_matrix(name + ".m", s.m));
  out.push_back(array_from_matrix(name + ".v", s.v));
  out.push_back(array_from_scalar(name + ".t", static_cast<double>(s.step)));
}

void push_mlp(std::vector<NamedArray>& out, const std::string& prefix,
              const MlpParams& p, const std::vector<AdamState>& sw,
              const std::vector<AdamState>& sb) {
  for (std::size_t i = 0; i < p.w.size(); ++i) {
    out.push_back(array_from_matrix(idx_name(prefix, "w", i), p.w[i]));
    push_adam(out, idx_name(prefix, "w", i), sw[i]);
    out.push_back(array_from_matrix(idx_name(prefix, "b", i), p.b[i]));
    push_adam(out, idx_name(prefix, "b", i), sb[i]);
  }
}

// Pull-by-name view over a checkpoint's arrays. Everything a model expects
// must be present; whatever is left over afterwards only earns a warning.
class ArrayBag {
 public:
  explicit ArrayBag(const std::vector<NamedArray>& arrays) {
    for (const auto& a : arrays) map_[a.name] = &a;
  }

  const NamedArray& take(const std::string& name) {
    auto it = map_.find(name);
    if (it == map_.end())
      throw FormatError("checkpoint missing array: " + name);
    const NamedArray* p = it->second;
    map_.erase(it);
    return *p;
  }

  DenseMatrix mat(const std::string& name, std::size_t rows,
                  std::size_t cols) {
    DenseMatrix m = matrix_from_array(take(name));
    if (m.rows != rows || m.cols != cols)
      throw FormatError("checkpoint array '" + name +
                        "' has unexpected shape");
    return m;
  }

  double scalar(const std::string& name) {
    return scalar_from_array(take(name));
  }

  std::vector<std::uint8_t> bytes(const std::string& name) {
    return bytes_from_array(take(name));
  }

  void adam(const std::string& name, AdamState& s, std::size_t rows,
            std::size_t cols) {
    s.m = mat(name + ".m", rows, cols);
    s.v = mat(name + ".v", rows, cols);
    s.step = static_cast<std::size_t>(scalar(name + ".t"));
  }

  void mlp(const std::string& prefix, MlpParams& p,
           std::vector<AdamState>& sw, std::vector<AdamState>& sb) {
    for (std::size_t i = 0; i < p.w.size(); ++i) {
      p.w[i] = mat(idx_name(prefix, "w", i), p.w[i].rows, p.w[i].cols);
      adam(idx_name(prefix, "w", i), sw[i], p.w[i].rows, p.w[i].cols);
      p.b[i] = mat(idx_name(prefix, "b", i), p.b[i].rows, p.b[i].cols);
      adam(idx_name(prefix, "b", i), sb[i], p.b[i].rows, p.b[i].cols);
    }
  }

  void finish() const {
    for (const auto& [name, a] : map_) {
      (void)a;
      std::fprintf(stderr, "warning: ignoring unknown checkpoint array '%s'\n",
                   name.c_str());
    }
  }

 private:
  std::map<std::string, const NamedArray*> map_;
};

void push_meta(std::vector<NamedArray>& out, const TrainConfig& cfg,
               const RngStream& rng, std::size_t step) {
  const std::string kind = model_kind_name(cfg.model);
  out.push_back(array_from_bytes(
      "meta.model", std::vector<std::uint8_t>(kind.begin(), kind.end())));
  out.push_back(array_from_scalar("meta.step", static_cast<double>(step)));
  out.push_back(array_from_bytes("meta.rng", rng.serialize()));
}

void take_meta(ArrayBag& bag, const TrainConfig& cfg, RngStream& rng,
               std::size_t& step) {
  const auto kb = bag.bytes("meta.model");
  const std::string kind(kb.begin(), kb.end());
  if (kind != model_kind_name(cfg.model))
    throw FormatError("checkpoint holds a '" + kind +
                      "' model but the config asks for '" +
                      model_kind_name(cfg.model) + "'");
  step = static_cast<std::size_t>(bag.scalar("meta.step"));
  rng = RngStream::deserialize(bag.bytes("meta.rng"));
}

}  // namespace

MlpParams mlp_init(const std::vector<std::size_t>& widths, RngStream& rng) {
  if (widths.size() < 2)
    throw ShapeError("mlp_init: need input and output widths");
  MlpParams p;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    if (widths[i] == 0 || widths[i + 1] == 0)
      throw ShapeError("mlp_init: zero layer width");
    DenseMatrix w(widths[i + 1], widths[i]);
    rng.fill_gaussian(w);
    const double s = std::sqrt(2.0 / static_cast<double>(widths[i]));
    for (auto& x : w.a) x *= s;
    p.w.push_back(std::move(w));
    p.b.emplace_back(widths[i + 1], 1);
  }
  return p;
}

DenseMatrix mlp_forward(const MlpParams& p, const DenseMatrix& x, Act hidden,
                        Act output, double leaky_slope) {
  if (p.w.empty()) throw ShapeError("mlp_forward: no layers");
  DenseMatrix cur = x;
  DenseMatrix nxt;
  for (std::size_t i = 0; i < p.w.size(); ++i) {
    if (p.w[i].cols != cur.rows)
      throw ShapeError("mlp_forward: layer width mismatch");
    kernels::gemm(p.w[i], false, cur, false, nxt);
    for (std::size_t r = 0; r < nxt.rows; ++r)
      for (std::size_t c = 0; c < nxt.cols; ++c) nxt(r, c) += p.b[i](r, 0);
    apply_act(nxt, i + 1 < p.w.size() ? hidden : output, leaky_slope);
    std::swap(cur, nxt);
  }
  return cur;
}

MlpNodes append_mlp_params(Tape& t, const std::vector<std::size_t>& widths,
                           const std::string& label) {
  if (widths.size() < 2)
    throw ShapeError("append_mlp_params: need input and output widths");
  MlpNodes n;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    n.w.push_back(
        t.leaf(widths[i + 1], widths[i], idx_name(label, "w", i)));
    n.b.push_back(t.leaf(widths[i + 1], 1, idx_name(label, "b", i)));
  }
  return n;
}

NodeId append_mlp_apply(Tape& t, const MlpNodes& params, NodeId input,
                        Act hidden, Act output, double leaky_slope) {
  if (params.w.empty()) throw ShapeError("append_mlp_apply: no layers");
  NodeId cur = input;
  for (std::size_t i = 0; i < params.w.size(); ++i) {
    const std::size_t cols = t.node(cur).cols;
    NodeId z = t.add(t.matmul(params.w[i], cur),
                     t.broadcast_col(params.b[i], cols));
    cur = append_act(t, z, i + 1 < params.w.size() ? hidden : output,
                     leaky_slope);
  }
  return cur;
}

MlpNodes append_mlp(Tape& t, NodeId input,
                    const std::vector<std::size_t>& widths, Act hidden,
                    Act output, const std::string& label, double leaky_slope) {
  MlpNodes n = append_mlp_params(t, widths, label);
  n.out = append_mlp_apply(t, n, input, hidden, output, leaky_slope);
  return n;
}

DenseMatrix Model::encode(const DenseMatrix&, RngStream&) const {
  throw DomainError(std::string(model_kind_name(cfg_.model)) +
                    " has no latent encoder");
}

std::vector<double> Model::critic_values(const DenseMatrix&) const {
  throw DomainError(std::string(model_kind_name(cfg_.model)) +
                    " has no critic");
}

std::unique_ptr<Model> make_model(const TrainConfig& cfg) {
  switch (cfg.model) {
    case ModelKind::kSwae: return std::make_unique<SwaeModel>(cfg);
    case ModelKind::kSwgan: return std::make_unique<SwganModel>(cfg);
    case ModelKind::kWganGp: return std::make_unique<WganGpModel>(cfg);
    case ModelKind::kIdtBaseline:
      throw ConfigError(
          "idt-baseline has no trainable parameters; use the idt subcommand");
  }
  throw ConfigError("unknown model kind");
}

// ---------------------------------------------------------------------------
// SWAE: encoder -> m transport blocks against the prior batch -> decoder,
// trained on plain reconstruction error. The blocks have no parameters; the
// gradient that leaks through them is what nudges the encoder output toward
// the prior.

SwaeModel::SwaeModel(const TrainConfig& cfg) : Model(cfg) {
  RngStream init = rng_.derive(1);
  enc = mlp_init({2, cfg_.r}, init);
  dec = mlp_init(stack_widths(cfg_.r, cfg_.hidden, cfg_.hidden_layers, 2),
                 init);
  enc_w_adam_ = zero_states(enc.w);
  enc_b_adam_ = zero_states(enc.b);
  dec_w_adam_ = zero_states(dec.w);
  dec_b_adam_ = zero_states(dec.b);
  build_tape();
}

void SwaeModel::build_tape() {
  Tape& t = tape_;
  const std::size_t b = cfg_.batch;
  const std::size_t r = cfg_.r;
  x_ = t.leaf(2, b, "x");
  z_ = t.leaf(r, b, "z");
  enc_nodes_ = append_mlp(t, x_, {2, r}, Act::kLinear, Act::kLinear, "enc");
  NodeId y = enc_nodes_.out;
  o_.clear();
  for (std::size_t k = 0; k < cfg_.m; ++k) {
    NodeId o = t.leaf(r, r, "o" + std::to_string(k));
    o_.push_back(o);
    y = append_transport_block(t, y, z_, o, cfg_.bins, cfg_.alpha);
  }
  dec_nodes_ =
      append_mlp(t, y, stack_widths(r, cfg_.hidden, cfg_.hidden_layers, 2),
                 Act::kElu, Act::kLinear, "dec");
  loss_ = t.scalar_mul(t.sum(t.square(t.sub(x_, dec_nodes_.out))),
                       1.0 / static_cast<double>(b));
}

StepStats SwaeModel::train_step() {
  // Fixed draw order per step: data batch, prior batch, one rotation per
  // block. Resume replays the identical sequence.
  DenseMatrix x = sample_dataset(cfg_.dataset, cfg_.batch, rng_);
  DenseMatrix z = rng_.gaussian_matrix(cfg_.r, cfg_.batch);
  ctx_.set_leaf(tape_, x_, x);
  ctx_.set_leaf(tape_, z_, z);
  for (std::size_t k = 0; k < cfg_.m; ++k)
    ctx_.set_leaf(tape_, o_[k], random_orthogonal(rng_, cfg_.r));
  set_mlp(tape_, ctx_, enc_nodes_, enc);
  set_mlp(tape_, ctx_, dec_nodes_, dec);
  forward(tape_, ctx_);
  const double loss = ctx_.value(loss_)(0, 0);
  if (!std::isfinite(loss))
    throw NonFiniteLoss("swae: non-finite loss at step " +
                        std::to_string(step_ + 1));
  backward(tape_, ctx_, loss_);
  const AdamConfig acfg = opt_config(cfg_);
  update_mlp(enc_w_adam_, enc_b_adam_, enc, enc_nodes_, ctx_, acfg);
  update_mlp(dec_w_adam_, dec_b_adam_, dec, dec_nodes_, ctx_, acfg);
  ++step_;
  StepStats s;
  s.step = step_;
  s.loss_g = loss;
  return s;
}

DenseMatrix SwaeModel::generate(std::size_t n, RngStream& rng) const {
  DenseMatrix z = rng.gaussian_matrix(cfg_.r, n);
  return mlp_forward(dec, z, Act::kElu, Act::kLinear);
}

DenseMatrix SwaeModel::encode(const DenseMatrix& x, RngStream& rng) const {
  if (x.rows != 2) throw ShapeError("encode: expected 2 x n input");
  DenseMatrix y = mlp_forward(enc, x, Act::kLinear, Act::kLinear);
  for (std::size_t k = 0; k < cfg_.m; ++k) {
    DenseMatrix z = rng.gaussian_matrix(cfg_.r, x.cols);
    DenseMatrix o = random_orthogonal(rng, cfg_.r);
    y = primal_block_forward(y, z, o, cfg_.bins, cfg_.alpha);
  }
  return y;
}

std::vector<NamedArray> SwaeModel::state_arrays() const {
  std::vector<NamedArray> out;
  push_meta(out, cfg_, rng_, step_);
  push_mlp(out, "enc", enc, enc_w_adam_, enc_b_adam_);
  push_mlp(out, "dec", dec, dec_w_adam_, dec_b_adam_);
  return out;
}

void SwaeModel::load_state(const std::vector<NamedArray>& arrays) {
  ArrayBag bag(arrays);
  take_meta(bag, cfg_, rng_, step_);
  bag.mlp("enc", enc, enc_w_adam_, enc_b_adam_);
  bag.mlp("dec", dec, dec_w_adam_, dec_b_adam_);
  bag.finish();
}

// ---------------------------------------------------------------------------
// SWGAN: generator against a critic made of a feature extractor, m learned
// orthogonal projections and elementwise leaky heads. Both players descend;
// the critic loss carries two penalties, one on the data-space gradient of
// the critic at mixed points, one pinning the head slopes at mixed features.

SwganModel::SwganModel(const TrainConfig& cfg) : Model(cfg) {
  const std::size_t r = cfg_.r;
  RngStream ginit = rng_.derive(1);
  RngStream einit = rng_.derive(2);
  gen = mlp_init(stack_widths(cfg_.z_dim, cfg_.hidden, cfg_.hidden_layers, 2),
                 ginit);
  enc = mlp_init(stack_widths(2, cfg_.hidden, cfg_.hidden_layers, r), einit);
  for (std::size_t k = 0; k < cfg_.m; ++k) {
    RngStream tinit = rng_.derive(10 + k);
    theta.push_back(random_orthogonal(tinit, r));
    DenseMatrix u(r, 1), w(r, 1), v(r, 1);
    std::fill(u.a.begin(), u.a.end(), 1.0);
    std::fill(w.a.begin(), w.a.end(), 1.0);
    hu.push_back(std::move(u));
    hw.push_back(std::move(w));
    hv.push_back(std::move(v));
  }
  gen_w_adam_ = zero_states(gen.w);
  gen_b_adam_ = zero_states(gen.b);
  enc_w_adam_ = zero_states(enc.w);
  enc_b_adam_ = zero_states(enc.b);
  hu_adam_ = zero_states(hu);
  hw_adam_ = zero_states(hw);
  hv_adam_ = zero_states(hv);
  theta_adam_.resize(cfg_.m);
  for (auto& s : theta_adam_) {
    s.moments.m = DenseMatrix(r, r);
    s.moments.v = DenseMatrix(r, r);
  }
  build_tapes();
}

void SwganModel::build_tapes() {
  const std::size_t b = cfg_.batch;
  const std::size_t r = cfg_.r;
  const std::size_t m = cfg_.m;
  const double mr = static_cast<double>(m) * static_cast<double>(r);
  const auto enc_widths = stack_widths(2, cfg_.hidden, cfg_.hidden_layers, r);
  const auto gen_widths =
      stack_widths(cfg_.z_dim, cfg_.hidden, cfg_.hidden_layers, 2);

  {
    Tape& t = d_tape_;
    d_x_ = t.leaf(2, b, "x");
    d_gx_ = t.leaf(2, b, "gx");
    d_xhat_ = t.leaf(2, b, "xhat");
    d_yhat_ = t.leaf(r, b, "yhat");
    d_enc_ = append_mlp_params(t, enc_widths, "enc");
    for (std::size_t k = 0; k < m; ++k) {
      const std::string ks = std::to_string(k);
      d_theta_.push_back(t.leaf(r, r, "theta" + ks));
      d_hu_.push_back(t.leaf(r, 1, "head" + ks + ".u"));
      d_hw_.push_back(t.leaf(r, 1, "head" + ks + ".w"));
      d_hv_.push_back(t.leaf(r, 1, "head" + ks + ".v"));
    }
    auto critic_total = [&](NodeId feat) {
      NodeId acc = kNoNode;
      for (std::size_t k = 0; k < m; ++k) {
        NodeId proj = t.matmul(d_theta_[k], feat, true, false);
        DualHeads h =
            append_dual_heads(t, proj, d_hu_[k], d_hw_[k], d_hv_[k]);
        NodeId s = t.sum(h.values);
        acc = acc == kNoNode ? s : t.add(acc, s);
      }
      return acc;
    };
    NodeId fx = append_mlp_apply(t, d_enc_, d_x_, Act::kLeakyRelu,
                                 Act::kLinear);
    NodeId fg = append_mlp_apply(t, d_enc_, d_gx_, Act::kLeakyRelu,
                                 Act::kLinear);
    NodeId fh = append_mlp_apply(t, d_enc_, d_xhat_, Act::kLeakyRelu,
                                 Act::kLinear);
    d_cx_ = t.scalar_mul(critic_total(fx), 1.0 / (mr * b));
    d_cg_ = t.scalar_mul(critic_total(fg), 1.0 / (mr * b));
    // Batch-summed critic at the mixed points; its gradient w.r.t. the
    // mixed batch stacks the per-sample critic gradients column by column.
    NodeId sum_hat = t.scalar_mul(critic_total(fh), 1.0 / mr);
    NodeId gradx = append_grad_nodes(t, sum_hat, {d_xhat_})[0];
    DenseMatrix kp(2, b);
    std::fill(kp.a.begin(), kp.a.end(), cfg_.k_prime);
    d_pen1_ = t.scalar_mul(
        t.sum(t.square(t.sub(gradx, t.constant(std::move(kp))))),
        cfg_.lambda1 / static_cast<double>(b));
    DenseMatrix kt(r, b);
    std::fill(kt.a.begin(), kt.a.end(), cfg_.k);
    NodeId ktn = t.constant(std::move(kt));
    NodeId acc2 = kNoNode;
    for (std::size_t k = 0; k < m; ++k) {
      NodeId proj = t.matmul(d_theta_[k], d_yhat_, true, false);
      DualHeads h = append_dual_heads(t, proj, d_hu_[k], d_hw_[k], d_hv_[k]);
      NodeId s = t.sum(t.square(t.sub(h.derivs, ktn)));
      acc2 = acc2 == kNoNode ? s : t.add(acc2, s);
    }
    d_pen2_ = t.scalar_mul(acc2, cfg_.lambda2 / static_cast<double>(b));
    d_loss_ = t.add(t.add(t.sub(d_cx_, d_cg_), d_pen1_), d_pen2_);
  }

  {
    Tape& t = g_tape_;
    g_z_ = t.leaf(cfg_.z_dim, b, "z");
    g_gen_ = append_mlp(t, g_z_, gen_widths, Act::kElu, Act::kLinear, "gen");
    g_enc_ = append_mlp_params(t, enc_widths, "enc");
    NodeId fg = append_mlp_apply(t, g_enc_, g_gen_.out, Act::kLeakyRelu,
                                 Act::kLinear);
    NodeId acc = kNoNode;
    for (std::size_t k = 0; k < m; ++k) {
      const std::string ks = std::to_string(k);
      g_theta_.push_back(t.leaf(r, r, "theta" + ks));
      g_hu_.push_back(t.leaf(r, 1, "head" + ks + ".u"));
      g_hw_.push_back(t.leaf(r, 1, "head" + ks + ".w"));
      g_hv_.push_back(t.leaf(r, 1, "head" + ks + ".v"));
      NodeId proj = t.matmul(g_theta_[k], fg, true, false);
      DualHeads h = append_dual_heads(t, proj, g_hu_[k], g_hw_[k], g_hv_[k]);
      NodeId s = t.sum(h.values);
      acc = acc == kNoNode ? s : t.add(acc, s);
    }
    g_loss_ = t.scalar_mul(acc, 1.0 / (mr * b));
  }
}

void SwganModel::disc_update() {
  const std::size_t b = cfg_.batch;
  const std::size_t r = cfg_.r;
  // Fixed draw order: data batch, prior batch, data-space mix weights,
  // feature-space mix weights.
  DenseMatrix x = sample_dataset(cfg_.dataset, b, rng_);
  DenseMatrix z = rng_.gaussian_matrix(cfg_.z_dim, b);
  const std::vector<double> mu1 = rng_.sample_uniform01(b);
  const std::vector<double> mu2 = rng_.sample_uniform01(b);

  DenseMatrix gx = mlp_forward(gen, z, Act::kElu, Act::kLinear);
  DenseMatrix xhat(2, b);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t l = 0; l < b; ++l)
      xhat(i, l) = (1.0 - mu1[l]) * x(i, l) + mu1[l] * gx(i, l);
  DenseMatrix fx = mlp_forward(enc, x, Act::kLeakyRelu, Act::kLinear);
  DenseMatrix fg = mlp_forward(enc, gx, Act::kLeakyRelu, Act::kLinear);
  DenseMatrix yhat(r, b);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t l = 0; l < b; ++l)
      yhat(i, l) = (1.0 - mu2[l]) * fx(i, l) + mu2[l] * fg(i, l);

  d_ctx_.set_leaf(d_tape_, d_x_, x);
  d_ctx_.set_leaf(d_tape_, d_gx_, gx);
  d_ctx_.set_leaf(d_tape_, d_xhat_, xhat);
  d_ctx_.set_leaf(d_tape_, d_yhat_, yhat);
  set_mlp(d_tape_, d_ctx_, d_enc_, enc);
  for (std::size_t k = 0; k < cfg_.m; ++k) {
    d_ctx_.set_leaf(d_tape_, d_theta_[k], theta[k]);
    d_ctx_.set_leaf(d_tape_, d_hu_[k], hu[k]);
    d_ctx_.set_leaf(d_tape_, d_hw_[k], hw[k]);
    d_ctx_.set_leaf(d_tape_, d_hv_[k], hv[k]);
  }
  forward(d_tape_, d_ctx_);
  last_.loss_d = d_ctx_.value(d_loss_)(0, 0);
  last_.penalty1 = d_ctx_.value(d_pen1_)(0, 0);
  last_.penalty2 = d_ctx_.value(d_pen2_)(0, 0);
  if (!std::isfinite(last_.loss_d))
    throw NonFiniteLoss("swgan: non-finite critic loss at step " +
                        std::to_string(step_ + 1));
  backward(d_tape_, d_ctx_, d_loss_);
  const AdamConfig acfg = opt_config(cfg_);
  update_mlp(enc_w_adam_, enc_b_adam_, enc, d_enc_, d_ctx_, acfg);
  for (std::size_t k = 0; k < cfg_.m; ++k) {
    adam_step(hu_adam_[k], hu[k], d_ctx_.grad(d_hu_[k]), acfg);
    adam_step(hw_adam_[k], hw[k], d_ctx_.grad(d_hw_[k]), acfg);
    adam_step(hv_adam_[k], hv[k], d_ctx_.grad(d_hv_[k]), acfg);
    stiefel_adam_step(theta_adam_[k], theta[k], d_ctx_.grad(d_theta_[k]),
                      acfg);
  }
}

void SwganModel::gen_update() {
  DenseMatrix z = rng_.gaussian_matrix(cfg_.z_dim, cfg_.batch);
  g_ctx_.set_leaf(g_tape_, g_z_, z);
  set_mlp(g_tape_, g_ctx_, g_gen_, gen);
  set_mlp(g_tape_, g_ctx_, g_enc_, enc);
  for (std::size_t k = 0; k < cfg_.m; ++k) {
    g_ctx_.set_leaf(g_tape_, g_theta_[k], theta[k]);
    g_ctx_.set_leaf(g_tape_, g_hu_[k], hu[k]);
    g_ctx_.set_leaf(g_tape_, g_hw_[k], hw[k]);
    g_ctx_.set_leaf(g_tape_, g_hv_[k], hv[k]);
  }
  forward(g_tape_, g_ctx_);
  last_.loss_g = g_ctx_.value(g_loss_)(0, 0);
  if (!std::isfinite(last_.loss_g))
    throw NonFiniteLoss("swgan: non-finite generator loss at step " +
                        std::to_string(step_ + 1));
  backward(g_tape_, g_ctx_, g_loss_);
  const AdamConfig acfg = opt_config(cfg_);
  update_mlp(gen_w_adam_, gen_b_adam_, gen, g_gen_, g_ctx_, acfg);
}

StepStats SwganModel::train_step() {
  for (std::size_t i = 0; i < cfg_.disc_iters; ++i) disc_update();
  gen_update();
  ++step_;
  last_.step = step_;
  return last_;
}

DenseMatrix SwganModel::generate(std::size_t n, RngStream& rng) const {
  DenseMatrix z = rng.gaussian_matrix(cfg_.z_dim, n);
  return mlp_forward(gen, z, Act::kElu, Act::kLinear);
}

std::vector<double> SwganModel::critic_values(
    const DenseMatrix& points) const {
  if (points.rows != 2) throw ShapeError("critic_values: expected 2 x n");
  DenseMatrix f = mlp_forward(enc, points, Act::kLeakyRelu, Act::kLinear);
  const std::size_t n = points.cols;
  const std::size_t r = cfg_.r;
  std::vector<double> vals(n, 0.0);
  DenseMatrix proj;
  for (std::size_t k = 0; k < cfg_.m; ++k) {
    kernels::gemm(theta[k], true, f, false, proj);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double pre = hw[k](i, 0) * proj(i, j) + hv[k](i, 0);
        vals[j] += hu[k](i, 0) * (pre > 0.0 ? pre : 0.2 * pre);
      }
  }
  const double mr = static_cast<double>(cfg_.m) * static_cast<double>(r);
  for (auto& v : vals) v /= mr;
  return vals;
}

std::vector<NamedArray> SwganModel::state_arrays() const {
  std::vector<NamedArray> out;
  push_meta(out, cfg_, rng_, step_);
  push_mlp(out, "gen", gen, gen_w_adam_, gen_b_adam_);
  push_mlp(out, "enc", enc, enc_w_adam_, enc_b_adam_);
  for (std::size_t k = 0; k < cfg_.m; ++k) {
    const std::string tn = "theta" + std::to_string(k);
    out.push_back(array_from_matrix(tn, theta[k]));
    push_adam(out, tn, theta_adam_[k].moments);
    const std::string hn = "head" + std::to_string(k);
    out.push_back(array_from_matrix(hn + ".u", hu[k]));
    push_adam(out, hn + ".u", hu_adam_[k]);
    out.push_back(array_from_matrix(hn + ".w", hw[k]));
    push_adam(out, hn + ".w", hw_adam_[k]);
    out.push_back(array_from_matrix(hn + ".v", hv[k]));
    push_adam(out, hn + ".v", hv_adam_[k]);
  }
  return out;
}

void SwganModel::load_state(const std::vector<NamedArray>& arrays) {
  ArrayBag bag(arrays);
  take_meta(bag, cfg_, rng_, step_);
  bag.mlp("gen", gen, gen_w_adam_, gen_b_adam_);
  bag.mlp("enc", enc, enc_w_adam_, enc_b_adam_);
  const std::size_t r = cfg_.r;
  for (std::size_t k = 0; k < cfg_.m; ++k) {
    const std::string tn = "theta" + std::to_string(k);
    theta[k] = bag.mat(tn, r, r);
    bag.adam(tn, theta_adam_[k].moments, r, r);
    const std::string hn = "head" + std::to_string(k);
    hu[k] = bag.mat(hn + ".u", r, 1);
    bag.adam(hn + ".u", hu_adam_[k], r, 1);
    hw[k] = bag.mat(hn + ".w", r, 1);
    bag.adam(hn + ".w", hw_adam_[k], r, 1);
    hv[k] = bag.mat(hn + ".v", r, 1);
    bag.adam(hn + ".v", hv_adam_[k], r, 1);
  }
  bag.finish();
}

// ---------------------------------------------------------------------------
// WGAN-GP baseline: scalar critic, two-sided unit-norm gradient penalty,
// conventional signs (critic ascends real-minus-fake, here written as
// descending fake-minus-real).

WganGpModel::WganGpModel(const TrainConfig& cfg) : Model(cfg) {
  RngStream ginit = rng_.derive(1);
  RngStream cinit = rng_.derive(2);
  gen = mlp_init(stack_widths(cfg_.z_dim, cfg_.hidden, cfg_.hidden_layers, 2),
                 ginit);
  critic = mlp_init(stack_widths(2, cfg_.hidden, cfg_.hidden_layers, 1),
                    cinit);
  gen_w_adam_ = zero_states(gen.w);
  gen_b_adam_ = zero_states(gen.b);
  cr_w_adam_ = zero_states(critic.w);
  cr_b_adam_ = zero_states(critic.b);
  build_tapes();
}

void WganGpModel::build_tapes() {
  const std::size_t b = cfg_.batch;
  const auto cr_widths = stack_widths(2, cfg_.hidden, cfg_.hidden_layers, 1);
  const auto gen_widths =
      stack_widths(cfg_.z_dim, cfg_.hidden, cfg_.hidden_layers, 2);

  {
    Tape& t = d_tape_;
    d_x_ = t.leaf(2, b, "x");
    d_gx_ = t.leaf(2, b, "gx");
    d_xhat_ = t.leaf(2, b, "xhat");
    d_cr_ = append_mlp_params(t, cr_widths, "critic");
    d_cx_ = t.mean(
        append_mlp_apply(t, d_cr_, d_x_, Act::kLeakyRelu, Act::kLinear));
    d_cg_ = t.mean(
        append_mlp_apply(t, d_cr_, d_gx_, Act::kLeakyRelu, Act::kLinear));
    NodeId sum_hat = t.sum(
        append_mlp_apply(t, d_cr_, d_xhat_, Act::kLeakyRelu, Act::kLinear));
    NodeId gradx = append_grad_nodes(t, sum_hat, {d_xhat_})[0];  // 2 x b
    DenseMatrix ones12(1, 2);
    std::fill(ones12.a.begin(), ones12.a.end(), 1.0);
    NodeId colsq = t.matmul(t.constant(std::move(ones12)), t.square(gradx));
    NodeId norm = t.sqrt(colsq);  // per-sample gradient norms, 1 x b
    DenseMatrix ones1b(1, b);
    std::fill(ones1b.a.begin(), ones1b.a.end(), 1.0);
    d_pen_ = t.scalar_mul(
        t.sum(t.square(t.sub(norm, t.constant(std::move(ones1b))))),
        cfg_.lambda1 / static_cast<double>(b));
    d_loss_ = t.add(t.sub(d_cg_, d_cx_), d_pen_);
  }

  {
    Tape& t = g_tape_;
    g_z_ = t.leaf(cfg_.z_dim, b, "z");
    g_gen_ = append_mlp(t, g_z_, gen_widths, Act::kElu, Act::kLinear, "gen");
    g_cr_ = append_mlp_params(t, cr_widths, "critic");
    NodeId c = append_mlp_apply(t, g_cr_, g_gen_.out, Act::kLeakyRelu,
                                Act::kLinear);
    g_loss_ = t.scalar_mul(t.mean(c), -1.0);
  }
}

void WganGpModel::disc_update() {
  const std::size_t b = cfg_.batch;
  DenseMatrix x = sample_dataset(cfg_.dataset, b, rng_);
  DenseMatrix z = rng_.gaussian_matrix(cfg_.z_dim, b);
  const std::vector<double> mu = rng_.sample_uniform01(b);
  DenseMatrix gx = mlp_forward(gen, z, Act::kElu, Act::kLinear);
  DenseMatrix xhat(2, b);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t l = 0; l < b; ++l)
      xhat(i, l) = (1.0 - mu[l]) * x(i, l) + mu[l] * gx(i, l);
  d_ctx_.set_leaf(d_tape_, d_x_, x);
  d_ctx_.set_leaf(d_tape_, d_gx_, gx);
  d_ctx_.set_leaf(d_tape_, d_xhat_, xhat);
  set_mlp(d_tape_, d_ctx_, d_cr_, critic);
  forward(d_tape_, d_ctx_);
  last_.loss_d = d_ctx_.value(d_loss_)(0, 0);
  last_.penalty1 = d_ctx_.value(d_pen_)(0, 0);
  if (!std::isfinite(last_.loss_d))
    throw NonFiniteLoss("wgan-gp: non-finite critic loss at step " +
                        std::to_string(step_ + 1));
  backward(d_tape_, d_ctx_, d_loss_);
  const AdamConfig acfg = opt_config(cfg_);
  update_mlp(cr_w_adam_, cr_b_adam_, critic, d_cr_, d_ctx_, acfg);
}

void WganGpModel::gen_update() {
  DenseMatrix z = rng_.gaussian_matrix(cfg_.z_dim, cfg_.batch);
  g_ctx_.set_leaf(g_tape_, g_z_, z);
  set_mlp(g_tape_, g_ctx_, g_gen_, gen);
  set_mlp(g_tape_, g_ctx_, g_cr_, critic);
  forward(g_tape_, g_ctx_);
  last_.loss_g = g_ctx_.value(g_loss_)(0, 0);
  if (!std::isfinite(last_.loss_g))
    throw NonFiniteLoss("wgan-gp: non-finite generator loss at step " +
                        std::to_string(step_ + 1));
  backward(g_tape_, g_ctx_, g_loss_);
  const AdamConfig acfg = opt_config(cfg_);
  update_mlp(gen_w_adam_, gen_b_adam_, gen, g_gen_, g_ctx_, acfg);
}

StepStats WganGpModel::train_step() {
  for (std::size_t i = 0; i < cfg_.disc_iters; ++i) disc_update();
  gen_update();
  ++step_;
  last_.step = step_;
  return last_;
}

DenseMatrix WganGpModel::generate(std::size_t n, RngStream& rng) const {
  DenseMatrix z = rng.gaussian_matrix(cfg_.z_dim, n);
  return mlp_forward(gen, z, Act::kElu, Act::kLinear);
}

std::vector<double> WganGpModel::critic_values(
    const DenseMatrix& points) const {
  if (points.rows != 2) throw ShapeError("critic_values: expected 2 x n");
  DenseMatrix c = mlp_forward(critic, points, Act::kLeakyRelu, Act::kLinear);
  return std::vector<double>(c.a.begin(), c.a.end());
}

std::vector<NamedArray> WganGpModel::state_arrays() const {
  std::vector<NamedArray> out;
  push_meta(out, cfg_, rng_, step_);
  push_mlp(out, "gen", gen, gen_w_adam_, gen_b_adam_);
  push_mlp(out, "critic", critic, cr_w_adam_, cr_b_adam_);
  return out;
}

void WganGpModel::load_state(const std::vector<NamedArray>& arrays) {
  ArrayBag bag(arrays);
  take_meta(bag, cfg_, rng_, step_);
  bag.mlp("gen", gen, gen_w_adam_, gen_b_adam_);
  bag.mlp("critic", critic, cr_w_adam_, cr_b_adam_);
  bag.finish();
}

}  // namespace swd
