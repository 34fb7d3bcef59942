#include "swd/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "swd/errors.hpp"

namespace swd {

ModelKind parse_model_kind(const std::string& name) {
  if (name == "swae") return ModelKind::kSwae;
  if (name == "swgan") return ModelKind::kSwgan;
  if (name == "wgan-gp-baseline") return ModelKind::kWganGp;
  if (name == "idt-baseline") return ModelKind::kIdtBaseline;
  throw ConfigError("unknown model '" + name +
                    "' (expected swae, swgan, wgan-gp-baseline or idt-baseline)");
}

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kSwae: return "swae";
    case ModelKind::kSwgan: return "swgan";
    case ModelKind::kWganGp: return "wgan-gp-baseline";
    case ModelKind::kIdtBaseline: return "idt-baseline";
  }
  return "?";
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value for '" + key + "': " + v);
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<std::uint64_t>(x);
  } catch (const std::exception&) {
    throw ConfigError("bad integer value for '" + key + "': " + v);
  }
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(parse_u64(key, v));
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
      continue;  // sections only organize the file
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    kv[key] = val;  // later duplicates win
  }
  return kv;
}

std::map<std::string, std::string> load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void apply_config(RunConfig& rc, const std::map<std::string, std::string>& kv) {
  TrainConfig& tc = rc.train;
  for (const auto& [key, val] : kv) {
    if (key == "model") {
      ModelKind kind = parse_model_kind(val);
      if (kind != tc.model) tc = default_train_config(kind);
    }
  }
  for (const auto& [key, val] : kv) {
    if (key == "model") continue;  // handled above
    else if (key == "dataset") tc.dataset = parse_dataset(val);
    else if (key == "batch") tc.batch = parse_size(key, val);
    else if (key == "steps") tc.steps = parse_size(key, val);
    else if (key == "lr") tc.lr = parse_double(key, val);
    else if (key == "lr-final") tc.lr_final = parse_double(key, val);
    else if (key == "disc-iters") tc.disc_iters = parse_size(key, val);
    else if (key == "r") tc.r = parse_size(key, val);
    else if (key == "m") tc.m = parse_size(key, val);
    else if (key == "bins" || key == "l") tc.bins = parse_size(key, val);
    else if (key == "alpha") tc.alpha = parse_double(key, val);
    else if (key == "lambda1") tc.lambda1 = parse_double(key, val);
    else if (key == "lambda2") tc.lambda2 = parse_double(key, val);
    else if (key == "k") tc.k = parse_double(key, val);
    else if (key == "k-prime") tc.k_prime = parse_double(key, val);
    else if (key == "seed") tc.seed = parse_u64(key, val);
    else if (key == "z-dim") tc.z_dim = parse_size(key, val);
    else if (key == "hidden") tc.hidden = parse_size(key, val);
    else if (key == "hidden-layers") tc.hidden_layers = parse_size(key, val);
    else if (key == "beta1") tc.adam.beta1 = parse_double(key, val);
    else if (key == "beta2") tc.adam.beta2 = parse_double(key, val);
    else if (key == "out-dir") rc.out_dir = val;
    else if (key == "log-every") rc.log_every = parse_size(key, val);
    else if (key == "eval-every") rc.eval_every = parse_size(key, val);
    else if (key == "checkpoint-every") rc.checkpoint_every = parse_size(key, val);
    else if (key == "eval-n") rc.eval_n = parse_size(key, val);
    else if (key == "grid") rc.grid = parse_size(key, val);
    else throw ConfigError("unknown config key: " + key);
  }
  if (tc.batch == 0) throw ConfigError("batch must be positive");
  if (tc.bins == 0) throw ConfigError("bins must be positive");
  if (tc.r == 0) throw ConfigError("r must be positive");
  if (tc.m == 0) throw ConfigError("m must be positive");
  if (tc.z_dim == 0) throw ConfigError("z-dim must be positive");
  if (tc.disc_iters == 0) throw ConfigError("disc-iters must be positive");
  if (!(tc.lr > 0.0)) throw ConfigError("lr must be positive");
  if (tc.lr_final < 0.0) throw ConfigError("lr-final must be non-negative");
  if (!(tc.alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (tc.lambda1 < 0.0 || tc.lambda2 < 0.0)
    throw ConfigError("penalty weights must be non-negative");
  if (rc.log_every == 0) throw ConfigError("log-every must be positive");
  if (rc.checkpoint_every == 0)
    throw ConfigError("checkpoint-every must be positive");
  if (rc.eval_n < 2) throw ConfigError("eval-n must be at least 2");
  if (rc.grid < 2) throw ConfigError("grid must be at least 2");
}

TrainConfig default_train_config(ModelKind kind) {
  TrainConfig tc;
  tc.model = kind;
  switch (kind) {
    case ModelKind::kSwae:
      tc.dataset = DatasetId::kSwissRoll;
      tc.batch = 256;
      tc.steps = 12000;
      tc.lr = 1e-3;
      tc.lr_final = 0.0;
      tc.r = 2;
      tc.m = 2;
      tc.bins = 32;
      tc.alpha = 1024.0;  // bins^2: soft histogram width matched to bin size
      tc.z_dim = 2;       // latent prior dimension (= r)
      tc.hidden = 128;
      tc.hidden_layers = 2;
      break;
    case ModelKind::kSwgan:
      tc.dataset = DatasetId::kSwissRoll;
      tc.batch = 256;
      tc.steps = 4000;
      tc.lr = 3e-4;
      tc.disc_iters = 5;
      tc.r = 64;   // feature width; projection matrices are r x r
      tc.m = 1;
      tc.z_dim = 2;
      tc.hidden = 128;
      tc.hidden_layers = 2;
      tc.lambda1 = 20.0;
      tc.lambda2 = 10.0;
      tc.k = 1e-3;
      tc.k_prime = 0.0;
      break;
    case ModelKind::kWganGp:
      tc.dataset = DatasetId::kSwissRoll;
      tc.batch = 256;
      tc.steps = 4000;
      tc.lr = 3e-4;
      tc.disc_iters = 5;
      tc.z_dim = 2;
      tc.hidden = 128;
      tc.hidden_layers = 2;
      tc.lambda1 = 10.0;
      break;
    case ModelKind::kIdtBaseline:
      tc.dataset = DatasetId::kSwissRoll;
      tc.batch = 2048;
      tc.m = 100;  // transport rounds
      tc.z_dim = 2;
      break;
  }
  return tc;
}

std::string train_config_to_text(const TrainConfig& tc) {
  std::ostringstream out;
  out.precision(17);
  out << "[model]\n";
  out << "model = " << model_kind_name(tc.model) << "\n";
  out << "dataset = " << dataset_name(tc.dataset) << "\n";
  out << "seed = " << tc.seed << "\n";
  out << "[train]\n";
  out << "batch = " << tc.batch << "\n";
  out << "steps = " << tc.steps << "\n";
  out << "lr = " << tc.lr << "\n";
  out << "disc-iters = " << tc.disc_iters << "\n";
  out << "r = " << tc.r << "\n";
  out << "m = " << tc.m << "\n";
  out << "bins = " << tc.bins << "\n";
  out << "alpha = " << tc.alpha << "\n";
  out << "lambda1 = " << tc.lambda1 << "\n";
  out << "lambda2 = " << tc.lambda2 << "\n";
  out << "k = " << tc.k << "\n";
  out << "k-prime = " << tc.k_prime << "\n";
  out << "z-dim = " << tc.z_dim << "\n";
  out << "hidden = " << tc.hidden << "\n";
  out << "hidden-layers = " << tc.hidden_layers << "\n";
  out << "beta1 = " << tc.adam.beta1 << "\n";
  out << "beta2 = " << tc.adam.beta2 << "\n";
  return out.str();
}

std::string config_to_text(const RunConfig& rc) {
  std::ostringstream out;
  out << train_config_to_text(rc.train);
  out << "[run]\n";
  out << "out-dir = " << rc.out_dir << "\n";
  out << "log-every = " << rc.log_every << "\n";
  out << "eval-every = " << rc.eval_every << "\n";
  out << "checkpoint-every = " << rc.checkpoint_every << "\n";
  out << "eval-n = " << rc.eval_n << "\n";
  out << "grid = " << rc.grid << "\n";
  return out.str();
}

}  // namespace swd
