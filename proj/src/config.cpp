/* Copyright 2026 The rlsdeconv Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "rlsd/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "rlsd/errors.hpp"

namespace rlsd {

namespace pt = boost::property_tree;

namespace {

// Reads keys from one section and remembers which ones were consumed.
class Section {
 public:
  Section(const pt::ptree& root, std::string name, std::string origin)
      : name_(std::move(name)), origin_(std::move(origin)) {
    if (auto child = root.get_child_optional(name_)) tree_ = *child;
  }

  template <typename T>
  void read(const char* key, T& out) {
    used_.insert(key);
    auto v = tree_.get_optional<std::string>(key);
    if (!v) return;
    out = convert<T>(*v, key);
  }

  void finish() const {
    for (const auto& [key, value] : tree_) {
      if (!used_.count(key)) throw ParameterError(origin_ + ": unknown key '" + key + "' in [" + name_ + "]");
    }
  }

 private:
  template <typename T>
  T convert(const std::string& text, const char* key) const {
    const std::string where = origin_ + ": [" + name_ + "] " + key + " = '" + text + "'";
    if constexpr (std::is_same_v<T, bool>) {
      if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
      if (text == "false" || text == "0" || text == "no" || text == "off") return false;
      throw ParameterError(where + " is not a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      return text;
    } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
      return std::filesystem::path(text);
    } else {
      std::istringstream in(text);
      T value{};
      if constexpr (std::is_unsigned_v<T>) {
        if (!text.empty() && text[0] == '-') throw ParameterError(where + " must be nonnegative");
      }
      if (!(in >> value) || !(in >> std::ws).eof()) throw ParameterError(where + " is not a valid number");
      return value;
    }
  }

  pt::ptree tree_;
  std::string name_, origin_;
  std::set<std::string> used_;
};

void read_model(const pt::ptree& root, const std::string& origin, ModelConfig& m) {
  Section s(root, "model", origin);
  s.read("channels", m.channels);
  s.read("steps", m.steps);
  s.read("reg_filters", m.reg_filters);
  s.read("reg_size", m.reg_size);
  s.read("wiener_filters", m.wiener_filters);
  s.read("wiener_size", m.wiener_size);
  s.read("share_weights", m.share_weights);
  s.read("share_beta", m.share_beta);
  s.read("normalize_reg", m.normalize_reg);
  std::string reg_init = m.reg_init == RegInit::kGradient ? "gradient" : "gradient_dct";
  s.read("reg_init", reg_init);
  if (reg_init == "gradient") m.reg_init = RegInit::kGradient;
  else if (reg_init == "gradient_dct") m.reg_init = RegInit::kGradientDct;
  else throw ParameterError(origin + ": reg_init must be 'gradient' or 'gradient_dct', got '" + reg_init + "'");

  PotentialPredictor pp;
  ConvPredictor cp;
  std::string kind = "conv";
  if (const auto* p = std::get_if<PotentialPredictor>(&m.predictor)) {
    pp = *p;
    kind = to_string(p->family);
  } else {
    cp = std::get<ConvPredictor>(m.predictor);
  }
  s.read("predictor", kind);
  s.read("potential_p", pp.p);
  s.read("potential_scale", pp.scale);
  s.read("potential_epsilon", pp.epsilon);
  s.read("potential_weight", pp.weight);
  s.read("conv_epsilon", cp.epsilon);
  s.read("conv_leak", cp.leak);
  if (kind == "conv") {
    m.predictor = cp;
  } else {
    pp.family = potential_family_from_string(kind);
    m.predictor = pp;
  }
  s.read("init_beta", m.init_beta);
  s.read("init_reg_scale", m.init_reg_scale);
  s.read("init_wiener_scale", m.init_wiener_scale);
  s.read("init_log_gain", m.init_log_gain);
  s.read("init_gradient_bias", m.init_gradient_bias);
  s.read("init_other_bias", m.init_other_bias);
  s.finish();

  Section v(root, "solver", origin);
  v.read("forward_max_iters", m.cg_forward.max_iters);
  v.read("forward_rel_tol", m.cg_forward.rel_tol);
  v.read("backward_max_iters", m.cg_backward.max_iters);
  v.read("backward_rel_tol", m.cg_backward.rel_tol);
  v.read("warm_start_backward", m.warm_start_backward);
  v.finish();
  if (auto* c = std::get_if<ConvPredictor>(&m.predictor)) c->channels = m.reg_filters;
  m.validate();
}

pt::ptree parse_tree(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  pt::ptree root;
  try {
    pt::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw ParameterError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [section, body] : root) {
    if (section != "model" && section != "solver" && section != "data" && section != "train") {
      if (body.empty()) throw ParameterError(origin + ": key '" + section + "' outside any section");
      throw ParameterError(origin + ": unknown section [" + section + "]");
    }
  }
  return root;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& origin) {
  const pt::ptree root = parse_tree(text, origin);
  RunConfig rc;
  read_model(root, origin, rc.model);

  Section d(root, "data", origin);
  std::string regime;
  d.read("regime", regime);
  if (regime == "high") {
    rc.data.noise_min = 0.1175;
    rc.data.noise_max = 0.1375;
  } else if (!regime.empty() && regime != "low") {
    throw ParameterError(origin + ": [data] regime must be 'low' or 'high', got '" + regime + "'");
  }
  d.read("source_dir", rc.data.source_dir);
  d.read("crop", rc.data.crop);
  d.read("kernel_min", rc.data.kernel_min);
  d.read("kernel_max", rc.data.kernel_max);
  d.read("noise_min", rc.data.noise_min);
  d.read("noise_max", rc.data.noise_max);
  d.read("candidates", rc.data.candidates);
  d.read("walk_smoothness", rc.data.walk_smoothness);
  d.read("walk_min_ratio", rc.data.walk_min_ratio);
  d.read("seed", rc.data.seed);
  d.finish();
  rc.data.channels = rc.model.channels;
  rc.data.validate();

  Section t(root, "train", origin);
  t.read("batch", rc.train.batch);
  t.read("epochs", rc.train.epochs);
  t.read("batches_per_epoch", rc.train.batches_per_epoch);
  t.read("lr", rc.train.lr);
  t.read("decay", rc.train.decay);
  t.read("warmup_epochs", rc.train.warmup_epochs);
  t.read("beta1", rc.train.beta1);
  t.read("beta2", rc.train.beta2);
  t.read("eps", rc.train.eps);
  t.read("workers", rc.train.workers);
  t.read("val_images", rc.train.val_images);
  t.read("val_size", rc.train.val_size);
  t.read("seed", rc.train.seed);
  std::string loss_region = to_string(rc.train.loss_region);
  t.read("loss_region", loss_region);
  try {
    rc.train.loss_region = loss_region_from_string(loss_region);
  } catch (const ParameterError& e) {
    throw ParameterError(origin + ": [train] " + e.what());
  }
  t.finish();
  rc.train.validate();
  return rc;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

std::string model_config_to_ini(const ModelConfig& m) {
  std::ostringstream s;
  s << "[model]\n"
    << "channels = " << m.channels << "\n"
    << "steps = " << m.steps << "\n"
    << "reg_filters = " << m.reg_filters << "\n"
    << "reg_size = " << m.reg_size << "\n"
    << "wiener_filters = " << m.wiener_filters << "\n"
    << "wiener_size = " << m.wiener_size << "\n"
    << "share_weights = " << (m.share_weights ? "true" : "false") << "\n"
    << "share_beta = " << (m.share_beta ? "true" : "false") << "\n"
    << "normalize_reg = " << (m.normalize_reg ? "true" : "false") << "\n"
    << "reg_init = " << (m.reg_init == RegInit::kGradient ? "gradient" : "gradient_dct") << "\n";
  if (const auto* pp = std::get_if<PotentialPredictor>(&m.predictor)) {
    s << "predictor = " << to_string(pp->family) << "\n"
      << "potential_p = " << num(pp->p) << "\n"
      << "potential_scale = " << num(pp->scale) << "\n"
      << "potential_epsilon = " << num(pp->epsilon) << "\n"
      << "potential_weight = " << num(pp->weight) << "\n";
  } else {
    const auto& cp = std::get<ConvPredictor>(m.predictor);
    s << "predictor = conv\n"
      << "conv_epsilon = " << num(cp.epsilon) << "\n"
      << "conv_leak = " << num(cp.leak) << "\n";
  }
  s << "init_beta = " << num(m.init_beta) << "\n"
    << "init_reg_scale = " << num(m.init_reg_scale) << "\n"
    << "init_wiener_scale = " << num(m.init_wiener_scale) << "\n"
    << "init_log_gain = " << num(m.init_log_gain) << "\n"
    << "init_gradient_bias = " << num(m.init_gradient_bias) << "\n"
    << "init_other_bias = " << num(m.init_other_bias) << "\n"
    << "\n[solver]\n"
    << "forward_max_iters = " << m.cg_forward.max_iters << "\n"
    << "forward_rel_tol = " << num(m.cg_forward.rel_tol) << "\n"
    << "backward_max_iters = " << m.cg_backward.max_iters << "\n"
    << "backward_rel_tol = " << num(m.cg_backward.rel_tol) << "\n"
    << "warm_start_backward = " << (m.warm_start_backward ? "true" : "false") << "\n";
  return s.str();
}

ModelConfig model_config_from_ini(const std::string& text) {
  const pt::ptree root = parse_tree(text, "<model description>");
  ModelConfig m;
  read_model(root, "<model description>", m);
  return m;
}

}  // namespace rlsd
