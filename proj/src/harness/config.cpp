#include <cmath>
#include <fstream>
#include <sstream>

#include "fuzzyseg/errors.hpp"
#include "fuzzyseg/harness.hpp"

namespace fuzzyseg {
namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size() && std::isfinite(d)) return d;
  } catch (const std::logic_error&) {
  }
  throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] != '-') {
      const unsigned long long u = std::stoull(v, &used);
      if (used == v.size()) return u;
    }
  } catch (const std::logic_error&) {
  }
  throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

SegNetConfig TrainConfig::net() const {
  SegNetConfig n;
  n.in_channels = 3;
  n.base_width = base_width;
  n.depth = depth;
  n.num_classes = num_classes;
  n.embed_dim = embed_dim;
  return n;
}

SceneConfig TrainConfig::scenes() const {
  SceneConfig s;
  s.num_classes = num_classes;
  s.height = s.width = image_size;
  s.occurrence = occurrence;
  s.color_jitter = color_jitter;
  return s;
}

void TrainConfig::validate() const {
  auto nonneg = [](double v, const char* what) {
    if (!(v >= 0.0)) throw ConfigError(std::string("config: ") + what + " must be non-negative");
  };
  nonneg(lr, "lr");
  nonneg(lambda_u, "lambda_u");
  nonneg(lambda_c, "lambda_c");
  nonneg(momentum, "momentum");
  nonneg(weight_decay, "weight_decay");
  nonneg(class_weight_cap, "class_weight_cap");
  if (momentum >= 1.0) throw ConfigError("config: momentum must be below 1");
  if (!(poly_power > 0.0)) throw ConfigError("config: poly_power must be positive");
  if (!(epsilon > 0.0)) throw ConfigError("config: epsilon must be positive");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("config: tau must lie in (0,1]");
  if (!(ema_alpha > 0.0 && ema_alpha < 1.0)) throw ConfigError("config: ema_alpha must lie in (0,1)");
  if (!(select_threshold >= 0.0 && select_threshold < 1.0)) {
    throw ConfigError("config: select_threshold must lie in [0,1)");
  }
  if (!(label_fraction > 0.0 && label_fraction <= 1.0)) {
    throw ConfigError("config: label_fraction must lie in (0,1]");
  }
  if (!(mask_keep_prob > 0.0 && mask_keep_prob < 1.0)) {
    throw ConfigError("config: mask_keep_prob must lie in (0,1)");
  }
  if (k == 0 || k > num_classes) throw ConfigError("config: k must lie in [1, num_classes]");
  if (occurrence.size() != num_classes) {
    throw ConfigError("config: occurrence needs one entry per class");
  }
  if (train_scenes == 0 || eval_scenes == 0) throw ConfigError("config: scene counts must be positive");
  if (batch_labeled == 0) throw ConfigError("config: batch_labeled must be positive");
  if (use_unlabeled && batch_unlabeled == 0) {
    throw ConfigError("config: batch_unlabeled must be positive when unlabeled data is used");
  }
  if (epochs == 0 && iterations == 0) throw ConfigError("config: need epochs or iterations");
  if (seeds.empty()) throw ConfigError("config: seeds must not be empty");
  try {
    net().validate();
    scenes().validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const std::size_t factor = std::size_t{1} << depth;
  if (image_size % factor || (strong_crop && strong_crop % factor)) {
    throw ConfigError("config: image_size and strong_crop must be divisible by 2^depth");
  }
  if (strong_crop > image_size) throw ConfigError("config: strong_crop exceeds image_size");
}

std::size_t TrainConfig::total_iterations(const DatasetSplit& split) const {
  if (iterations > 0) return iterations;
  // Same length for every ablation arm: the unlabeled pool defines an epoch
  // whenever the split has one.
  const bool unl = !split.unlabeled.empty();
  const std::size_t pool = unl ? split.unlabeled.size() : split.labeled.size();
  const std::size_t batch = unl ? batch_unlabeled : batch_labeled;
  const std::size_t b = std::max<std::size_t>(1, batch);
  return epochs * ((pool + b - 1) / b);
}

void apply_config_entry(TrainConfig& c, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  auto sz = [&](std::size_t& dst) { dst = static_cast<std::size_t>(to_uint(key, v)); };
  auto dbl = [&](double& dst) { dst = to_double(key, v); };
  auto bl = [&](bool& dst) { dst = to_bool(key, v); };
  if (key == "seed") c.seed = to_uint(key, v);
  else if (key == "seeds") {
    c.seeds.clear();
    for (const auto& s : split_list(v)) c.seeds.push_back(to_uint(key, s));
  }
  else if (key == "data_seed") c.data_seed = to_uint(key, v);
  else if (key == "num_classes") sz(c.num_classes);
  else if (key == "image_size") sz(c.image_size);
  else if (key == "train_scenes") sz(c.train_scenes);
  else if (key == "eval_scenes") sz(c.eval_scenes);
  else if (key == "label_fraction") c.label_fraction = parse_fraction(v);
  else if (key == "occurrence") {
    c.occurrence.clear();
    for (const auto& s : split_list(v)) c.occurrence.push_back(to_double(key, s));
  }
  else if (key == "color_jitter") dbl(c.color_jitter);
  else if (key == "base_width") sz(c.base_width);
  else if (key == "depth") sz(c.depth);
  else if (key == "embed_dim") sz(c.embed_dim);
  else if (key == "k") sz(c.k);
  else if (key == "tau") dbl(c.tau);
  else if (key == "epsilon") dbl(c.epsilon);
  else if (key == "class_weight_cap") dbl(c.class_weight_cap);
  else if (key == "lambda_u") dbl(c.lambda_u);
  else if (key == "lambda_c") dbl(c.lambda_c);
  else if (key == "select_threshold") dbl(c.select_threshold);
  else if (key == "kl_form") {
    if (v == "generalized") c.kl_form = KlForm::kGeneralized;
    else if (v == "plain") c.kl_form = KlForm::kPlain;
    else throw ConfigError("config: kl_form must be 'generalized' or 'plain', got '" + v + "'");
  }
  else if (key == "ema_alpha") dbl(c.ema_alpha);
  else if (key == "lr") dbl(c.lr);
  else if (key == "poly_power") dbl(c.poly_power);
  else if (key == "momentum") dbl(c.momentum);
  else if (key == "weight_decay") dbl(c.weight_decay);
  else if (key == "epochs") sz(c.epochs);
  else if (key == "iterations") sz(c.iterations);
  else if (key == "batch_labeled") sz(c.batch_labeled);
  else if (key == "batch_unlabeled") sz(c.batch_unlabeled);
  else if (key == "strong_crop") sz(c.strong_crop);
  else if (key == "mask_keep_prob") dbl(c.mask_keep_prob);
  else if (key == "use_unlabeled") bl(c.use_unlabeled);
  else if (key == "use_fuzzy") bl(c.use_fuzzy);
  else if (key == "use_pixel_weight") bl(c.use_pixel_weight);
  else if (key == "use_class_weight") bl(c.use_class_weight);
  else if (key == "use_contrastive") bl(c.use_contrastive);
  else if (key == "eval_every") sz(c.eval_every);
  else if (key == "verbose") bl(c.verbose);
  else throw ConfigError("config: unknown key '" + key + "'");
}

TrainConfig parse_config(std::istream& in, TrainConfig base) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    apply_config_entry(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  base.validate();
  return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  return parse_config(in, std::move(base));
}

std::string format_config(const TrainConfig& c) {
  std::ostringstream os;
  auto list = [](const auto& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i) s += ",";
      if constexpr (std::is_floating_point_v<std::decay_t<decltype(xs[i])>>) s += fmt(xs[i]);
      else s += std::to_string(xs[i]);
    }
    return s;
  };
  os << "seed=" << c.seed << "\n"
     << "seeds=" << list(c.seeds) << "\n"
     << "data_seed=" << c.data_seed << "\n"
     << "num_classes=" << c.num_classes << "\n"
     << "image_size=" << c.image_size << "\n"
     << "train_scenes=" << c.train_scenes << "\n"
     << "eval_scenes=" << c.eval_scenes << "\n"
     << "label_fraction=" << fmt(c.label_fraction) << "\n"
     << "occurrence=" << list(c.occurrence) << "\n"
     << "color_jitter=" << fmt(c.color_jitter) << "\n"
     << "base_width=" << c.base_width << "\n"
     << "depth=" << c.depth << "\n"
     << "embed_dim=" << c.embed_dim << "\n"
     << "k=" << c.k << "\n"
     << "tau=" << fmt(c.tau) << "\n"
     << "epsilon=" << fmt(c.epsilon) << "\n"
     << "class_weight_cap=" << fmt(c.class_weight_cap) << "\n"
     << "lambda_u=" << fmt(c.lambda_u) << "\n"
     << "lambda_c=" << fmt(c.lambda_c) << "\n"
     << "select_threshold=" << fmt(c.select_threshold) << "\n"
     << "kl_form=" << (c.kl_form == KlForm::kPlain ? "plain" : "generalized") << "\n"
     << "ema_alpha=" << fmt(c.ema_alpha) << "\n"
     << "lr=" << fmt(c.lr) << "\n"
     << "poly_power=" << fmt(c.poly_power) << "\n"
     << "momentum=" << fmt(c.momentum) << "\n"
     << "weight_decay=" << fmt(c.weight_decay) << "\n"
     << "epochs=" << c.epochs << "\n"
     << "iterations=" << c.iterations << "\n"
     << "batch_labeled=" << c.batch_labeled << "\n"
     << "batch_unlabeled=" << c.batch_unlabeled << "\n"
     << "strong_crop=" << c.strong_crop << "\n"
     << "mask_keep_prob=" << fmt(c.mask_keep_prob) << "\n"
     << "use_unlabeled=" << c.use_unlabeled << "\n"
     << "use_fuzzy=" << c.use_fuzzy << "\n"
     << "use_pixel_weight=" << c.use_pixel_weight << "\n"
     << "use_class_weight=" << c.use_class_weight << "\n"
     << "use_contrastive=" << c.use_contrastive << "\n"
     << "eval_every=" << c.eval_every << "\n"
     << "verbose=" << c.verbose << "\n";
  return os.str();
}

double poly_lr(double eta0, std::size_t i, std::size_t i_max, double power) {
  if (i_max == 0 || i >= i_max) return 0.0;
  return eta0 * std::pow(1.0 - static_cast<double>(i) / static_cast<double>(i_max), power);
}

void SgdMomentum::step(ParameterStore& params, const ParameterStore& grads, double lr) {
  if (params.role() == StoreRole::kTeacher) {
    throw StateError("optimizer: teacher parameters are updated by EMA only");
  }
  for (const auto& [name, g] : grads.entries()) {
    Tensor& theta = params.mutable_at(name);
    require_same_shape(theta, g, "optimizer step");
    Tensor& v = velocity_.try_emplace(name, Tensor(theta.shape(), 0.0)).first->second;
    for (std::size_t i = 0; i < theta.numel(); ++i) {
      const double gi = g[i] + decay_ * theta[i];
      v[i] = momentum_ * v[i] + gi;
      theta[i] -= lr * v[i];
    }
  }
}

}  // namespace fuzzyseg
