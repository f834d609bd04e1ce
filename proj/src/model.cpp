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

#include "rlsd/model.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <numbers>
#include <sstream>
#include <utility>

#include "rlsd/errors.hpp"
#include "rlsd/metrics.hpp"

namespace rlsd {
namespace {

constexpr const char* kWienerName = "wiener.filters";
constexpr const char* kBetaName = "beta";

// Writes a unit-norm horizontal (axis 1) or vertical (axis 0) forward
// difference into filter `f`, shared by all channels.
void put_gradient(Tensor& bank, std::size_t f, int axis, double scale) {
  const std::size_t channels = bank.dim(1), kh = bank.dim(2), kw = bank.dim(3);
  const std::size_t ci = (kh - 1) / 2, cj = (kw - 1) / 2;
  for (std::size_t c = 0; c < channels; ++c) {
    double* p = bank.data() + (f * channels + c) * kh * kw;
    p[ci * kw + cj] = -scale;
    if (axis == 1) p[ci * kw + cj + 1] = scale;
    else p[(ci + 1) * kw + cj] = scale;
  }
}

void put_dct(Tensor& bank, std::size_t f, std::size_t u, std::size_t v) {
  const std::size_t channels = bank.dim(1), kh = bank.dim(2), kw = bank.dim(3);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < kh; ++i)
      for (std::size_t j = 0; j < kw; ++j)
        bank[((f * channels + c) * kh + i) * kw + j] =
            std::cos(std::numbers::pi * (i + 0.5) * u / kh) * std::cos(std::numbers::pi * (j + 0.5) * v / kw);
}

void normalize_filters(Tensor& bank, double target) {
  const std::size_t per = bank.size() / bank.dim(0);
  for (std::size_t f = 0; f < bank.dim(0); ++f) {
    double* p = bank.data() + f * per;
    double s = 0.0;
    for (std::size_t i = 0; i < per; ++i) s += p[i] * p[i];
    if (s == 0.0) continue;
    const double k = target / std::sqrt(s);
    for (std::size_t i = 0; i < per; ++i) p[i] *= k;
  }
}

// Gradients first, then DCT atoms by increasing frequency, then noise.
Tensor gradient_dct_bank(std::size_t count, std::size_t channels, std::size_t size, Rng& rng) {
  Tensor bank({count, channels, size, size});
  std::vector<std::pair<std::size_t, std::size_t>> atoms;
  for (std::size_t s = 1; s <= 2 * (size - 1); ++s)
    for (std::size_t u = 0; u < size; ++u)
      if (s >= u && s - u < size) atoms.emplace_back(u, s - u);
  for (std::size_t f = 0; f < count; ++f) {
    if (f < 2) {
      put_gradient(bank, f, f == 0 ? 1 : 0, 1.0);
    } else if (f - 2 < atoms.size()) {
      put_dct(bank, f, atoms[f - 2].first, atoms[f - 2].second);
    } else {
      const std::size_t per = channels * size * size;
      for (std::size_t i = 0; i < per; ++i) bank[f * per + i] = rng.normal();
    }
  }
  normalize_filters(bank, 1.0);
  return bank;
}

double relative_change(const Tensor& now, const Tensor& before) {
  const double d = norm2(now - before), n = norm2(now);
  if (d == 0.0) return 0.0;
  return n > 0.0 ? d / n : std::numeric_limits<double>::infinity();
}

void record(StepTrace& trace, std::shared_ptr<const Tensor> x, const Tensor& before, const CgReport& report,
            const Tensor* gt, const BlurKernel& kernel, const Shape& obs) {
  trace.tol.push_back(relative_change(*x, before));
  trace.cg_iterations.push_back(report.iterations);
  trace.cg_residual.push_back(report.final_rel_residual);
  trace.cg_converged.push_back(report.converged);
  trace.psnr.push_back(gt ? psnr(observed_region(*x, kernel, obs), observed_region(*gt, kernel, obs))
                          : std::numeric_limits<double>::quiet_NaN());
  trace.outputs.push_back(std::move(x));
}

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace

void ModelConfig::validate() const {
  if (channels == 0) throw ParameterError("model needs at least one channel");
  if (reg_filters == 0) throw ParameterError("regularization bank needs at least one filter");
  if (reg_size < 2 || wiener_size < 2) throw ParameterError("filter sizes must be at least 2");
  if (reg_init == RegInit::kGradient && reg_filters != 2)
    throw ParameterError("gradient initialization needs exactly 2 regularization filters");
  cg_forward.validate();
  cg_backward.validate();
  std::visit([](const auto& p) { p.validate(); }, predictor);
}

std::string ModelConfig::canonical() const {
  std::ostringstream s;
  s << "c=" << channels << ";F=" << reg_filters << "x" << reg_size << ";Fw=" << wiener_filters << "x" << wiener_size
    << ";K=" << steps << ";share=" << share_weights << ";share_beta=" << share_beta;
  if (const auto* pp = std::get_if<PotentialPredictor>(&predictor)) {
    s << ";potential=" << to_string(pp->family) << "," << pp->p << "," << pp->scale << "," << pp->epsilon << ","
      << pp->weight;
  } else {
    const auto& cp = std::get<ConvPredictor>(predictor);
    s << ";conv=" << cp.channels << "," << cp.epsilon << "," << cp.leak;
  }
  return s.str();
}

std::uint64_t fnv1a64(const std::string& text) noexcept {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

int StepTrace::total_cg_iterations() const noexcept {
  int total = 0;
  for (int it : cg_iterations) total += it;
  return total;
}

std::string to_json(const StepTrace& trace) {
  nlohmann::json j;
  j["steps"] = trace.size();
  auto& psnrs = j["psnr"] = nlohmann::json::array();
  for (double v : trace.psnr) psnrs.push_back(finite_or_null(v));
  auto& tols = j["tol"] = nlohmann::json::array();
  for (double v : trace.tol) tols.push_back(finite_or_null(v));
  j["cg_iterations"] = trace.cg_iterations;
  j["cg_residual"] = trace.cg_residual;
  auto& conv = j["cg_converged"] = nlohmann::json::array();
  for (bool b : trace.cg_converged) conv.push_back(b);
  return j.dump();
}

Tensor observed_region(const Tensor& latent, const BlurKernel& kernel, const Shape& observation_shape) {
  const Tensor img = as_image(latent);
  const Shape obs = observation_shape.size() == 2 ? Shape{1, observation_shape[0], observation_shape[1]}
                                                  : observation_shape;
  if (obs.size() != 3) throw DimensionError("observation shape must be rank 2 or 3");
  return crop(img, (kernel.height() - 1) / 2, (kernel.width() - 1) / 2, obs[1], obs[2]);
}

LossTerms loss_sum_mse(const StepTrace& trace, const Tensor& x_gt) {
  LossTerms out;
  const double n = static_cast<double>(x_gt.size());
  for (const auto& x : trace.outputs) {
    require_same_shape(*x, x_gt, "loss_sum_mse");
    Tensor diff = *x - x_gt;
    const double mse = dot(diff, diff) / n;
    out.loss += mse;
    out.step_mse.push_back(mse);
    diff *= 2.0 / n;
    out.cotangents.push_back(std::move(diff));
  }
  return out;
}

LossTerms loss_sum_mse(const StepTrace& trace, const Tensor& x_gt, const BlurKernel& kernel,
                       const Shape& observation_shape) {
  const Tensor gt = as_image(x_gt);
  const Shape obs = observation_shape.size() == 2 ? Shape{gt.dim(0), observation_shape[0], observation_shape[1]}
                                                  : observation_shape;
  const std::size_t r0 = (kernel.height() - 1) / 2, c0 = (kernel.width() - 1) / 2;
  if (obs.size() != 3 || obs[0] != gt.dim(0) || obs[1] + kernel.height() - 1 != gt.dim(1) ||
      obs[2] + kernel.width() - 1 != gt.dim(2))
    throw DimensionError("loss_sum_mse: observation " + shape_string(observation_shape) + " does not fit latent " +
                         shape_string(x_gt.shape()));
  LossTerms out;
  const double n = static_cast<double>(obs[0] * obs[1] * obs[2]);
  for (const auto& x : trace.outputs) {
    require_same_shape(*x, gt, "loss_sum_mse");
    Tensor cot(gt.shape());
    double sq = 0.0;
    for (std::size_t ch = 0; ch < obs[0]; ++ch)
      for (std::size_t i = r0; i < r0 + obs[1]; ++i)
        for (std::size_t j = c0; j < c0 + obs[2]; ++j) {
          const double d = (*x)(ch, i, j) - gt(ch, i, j);
          sq += d * d;
          cot(ch, i, j) = 2.0 * d / n;
        }
    out.loss += sq / n;
    out.step_mse.push_back(sq / n);
    out.cotangents.push_back(std::move(cot));
  }
  return out;
}

std::string to_string(LossRegion region) { return region == LossRegion::kLatent ? "latent" : "observed"; }

LossRegion loss_region_from_string(const std::string& s) {
  if (s == "latent") return LossRegion::kLatent;
  if (s == "observed") return LossRegion::kObserved;
  throw ParameterError("loss region must be 'latent' or 'observed', got '" + s + "'");
}

RlsdnModel::RlsdnModel(ModelConfig cfg, ParamSet params) : cfg_(std::move(cfg)), params_(std::move(params)) {
  if (auto* cp = std::get_if<ConvPredictor>(&cfg_.predictor)) cp->channels = cfg_.reg_filters;
  cfg_.validate();
  auto expect = [&](const std::string& name, const Shape& shape) {
    if (!params_.contains(name)) throw ParameterError("model parameter '" + name + "' is missing");
    if (params_.at(name).shape() != shape) {
      throw DimensionError("model parameter '" + name + "' has shape " + shape_string(params_.at(name).shape()) +
                           ", expected " + shape_string(shape));
    }
  };
  expect(kWienerName, {cfg_.wiener_filters, cfg_.channels, cfg_.wiener_size, cfg_.wiener_size});
  if (cfg_.steps == 0) return;  // Wiener only
  expect(kBetaName, {cfg_.share_beta ? std::size_t{1} : cfg_.steps});
  const std::size_t banks = cfg_.share_weights ? 1 : cfg_.steps;
  for (std::size_t a = 0; a < banks; ++a)
    expect(reg_name(a), {cfg_.reg_filters, cfg_.channels, cfg_.reg_size, cfg_.reg_size});
}

RlsdnModel RlsdnModel::initialize(const ModelConfig& cfg_in, std::uint64_t seed) {
  ModelConfig cfg = cfg_in;
  if (auto* cp = std::get_if<ConvPredictor>(&cfg.predictor)) cp->channels = cfg.reg_filters;
  cfg.validate();
  Rng rng(seed);
  ParamSet params;

  Tensor wiener({cfg.wiener_filters, cfg.channels, cfg.wiener_size, cfg.wiener_size});
  if (cfg.wiener_filters > 0) {
    Rng wrng = rng.split(1);
    wiener = gradient_dct_bank(cfg.wiener_filters, cfg.channels, cfg.wiener_size, wrng);
    const std::size_t per = wiener.size() / cfg.wiener_filters;
    for (std::size_t i = 0; i < wiener.size(); ++i)
      wiener[i] *= (i / per < 2 ? 1.0 : 0.25) * cfg.init_wiener_scale;
  }
  params.add(kWienerName, std::move(wiener));
  if (cfg.steps > 0) {
    params.add(kBetaName, Tensor({cfg.share_beta ? std::size_t{1} : cfg.steps}, cfg.init_beta));
    const std::size_t banks = cfg.share_weights ? 1 : cfg.steps;
    for (std::size_t a = 0; a < banks; ++a) {
      Tensor bank;
      if (cfg.reg_init == RegInit::kGradient) {
        bank = Tensor({2, cfg.channels, cfg.reg_size, cfg.reg_size});
        put_gradient(bank, 0, 1, 1.0);
        put_gradient(bank, 1, 0, 1.0);
      } else {
        Rng grng = rng.split(100 + a);
        bank = gradient_dct_bank(cfg.reg_filters, cfg.channels, cfg.reg_size, grng);
      }
      bank *= cfg.init_reg_scale;
      const std::string name = cfg.share_weights ? "reg.filters" : "reg." + std::to_string(a) + ".filters";
      params.add(name, std::move(bank));
      if (const auto* cp = std::get_if<ConvPredictor>(&cfg.predictor)) {
        ConvPredictor step_pred = *cp;
        step_pred.prefix = cfg.share_weights ? cp->prefix : cp->prefix + std::to_string(a) + ".";
        Rng prng = rng.split(200 + a);
        step_pred.init_params(params, prng, cfg.init_log_gain, cfg.init_other_bias);
        Tensor& bias = params.at(step_pred.prefix + "c3.b");
        for (std::size_t f = 0; f < std::min<std::size_t>(2, bias.size()); ++f) bias[f] = cfg.init_gradient_bias;
      }
    }
  }
  return RlsdnModel(cfg, std::move(params));
}

std::string RlsdnModel::reg_name(std::size_t step) const {
  if (cfg_.share_weights) return "reg.filters";
  return "reg." + std::to_string(std::min(step, cfg_.steps - 1)) + ".filters";
}

std::string RlsdnModel::predictor_prefix(std::size_t step) const {
  const auto* cp = std::get_if<ConvPredictor>(&cfg_.predictor);
  const std::string base = cp ? cp->prefix : "pred.";
  if (cfg_.share_weights) return base;
  return base + std::to_string(std::min(step, cfg_.steps - 1)) + ".";
}

std::size_t RlsdnModel::beta_index(std::size_t step) const {
  return cfg_.share_beta ? 0 : std::min(step, cfg_.steps - 1);
}

WeightPredictor RlsdnModel::predictor_for(std::size_t step) const {
  if (auto cp = std::get_if<ConvPredictor>(&cfg_.predictor)) {
    ConvPredictor p = *cp;
    p.prefix = predictor_prefix(step);
    return p;
  }
  return cfg_.predictor;
}

namespace {

struct Pass {
  StepTrace trace;
  std::optional<LayerForward> wiener;
  std::vector<NnlsLayer> layers;
  std::vector<SavedForward> saved;
};

}  // namespace

static Pass run_forward(const RlsdnModel& model, const Tensor& y_in, const BlurKernel& kernel, double sigma,
                        std::size_t total_steps, const Tensor* gt, bool keep_saved) {
  const auto& cfg = model.config();
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ParameterError("noise sigma must be positive and finite");
  if (total_steps == 0) throw ParameterError("step count must be at least 1");
  if (total_steps > 1 && cfg.steps == 0) throw ParameterError("a Wiener-only model runs exactly one step");
  const Tensor y = as_image(y_in);
  if (y.dim(0) != cfg.channels) {
    throw DimensionError("model expects " + std::to_string(cfg.channels) + " channel(s), observation has shape " +
                         shape_string(y_in.shape()));
  }
  const BlurOperator blur = BlurOperator::for_observation(kernel, y.shape());
  std::optional<Tensor> gt_img;
  if (gt) {
    gt_img = as_image(*gt);
    if (gt_img->shape() != blur.input_shape()) {
      throw DimensionError("ground truth has shape " + shape_string(gt->shape()) + ", expected " +
                           shape_string(blur.input_shape()));
    }
  }
  const double sigma2 = sigma * sigma;
  const ParamSet& params = model.params();

  Pass pass;
  WienerLayer wl{params.at(kWienerName), cfg.cg_forward, cfg.cg_backward};
  LayerForward w = wiener_forward(wl, blur, y, sigma2);
  record(pass.trace, w.x, wiener_start(blur, y), w.report, gt_img ? &*gt_img : nullptr, kernel, y.shape());
  std::shared_ptr<const Tensor> x = w.x;
  if (keep_saved) pass.wiener = std::move(w);

  for (std::size_t a = 0; a + 1 < total_steps; ++a) {
    NnlsLayer layer{params.at(model.reg_name(a)), params.at(kBetaName)[model.beta_index(a)], cfg.cg_forward,
                    cfg.cg_backward, cfg.warm_start_backward};
    const FilterBank bank(layer.reg_filters, x->shape());
    Tensor z = bank.apply(*x);
    Tensor weights = predict_weights(model.predictor_for(a), params, z);
    if (!all_finite(weights)) throw NumericalError("predicted weights are not finite at step " + std::to_string(a + 2));
    LayerForward f = nnls_forward(layer, blur, y, x, DiagonalWeights(std::move(weights)), sigma2);
    record(pass.trace, f.x, *x, f.report, gt_img ? &*gt_img : nullptr, kernel, y.shape());
    x = f.x;
    if (keep_saved) {
      f.saved.features = std::move(z);
      pass.layers.push_back(std::move(layer));
      pass.saved.push_back(std::move(f.saved));
    }
  }
  return pass;
}

RlsdnModel::Restored RlsdnModel::restore(const Tensor& y, const BlurKernel& kernel, double sigma,
                                         std::optional<std::size_t> total_steps, const Tensor* ground_truth) const {
  Pass pass = run_forward(*this, y, kernel, sigma, total_steps.value_or(cfg_.steps + 1), ground_truth, false);
  Restored out;
  out.x = *pass.trace.outputs.back();
  out.trace = std::move(pass.trace);
  return out;
}

RlsdnModel::Gradient RlsdnModel::loss_and_gradient(const Sample& sample, LossRegion region) const {
  Pass pass = run_forward(*this, sample.y, sample.kernel, sample.sigma, cfg_.steps + 1, nullptr, true);
  const Tensor gt = as_image(sample.x_gt);
  Gradient out;
  out.loss = region == LossRegion::kLatent ? loss_sum_mse(pass.trace, gt)
                                           : loss_sum_mse(pass.trace, gt, sample.kernel, as_image(sample.y).shape());
  out.grads = params_.zeros_like();

  Tensor carry;
  for (std::size_t a = pass.layers.size(); a-- > 0;) {
    Tensor rho = out.loss.cotangents[a + 1];
    if (!carry.empty()) rho += carry;
    const SavedForward& saved = pass.saved[a];
    NnlsGradients g = nnls_backward(pass.layers[a], saved, rho);
    out.backward_cg_iterations += g.report.iterations;
    const std::string reg = reg_name(a);
    out.grads.accumulate(reg, g.d_filters);
    out.grads.at(kBetaName)[beta_index(a)] += g.d_beta;

    PredictorVjp pv = predictor_vjp(predictor_for(a), params_, saved.features, g.d_weights);
    out.grads.accumulate(pv.d_params);
    const FilterBank bank(saved.filters, saved.x_prev->shape());
    out.grads.accumulate(reg, bank.filter_grad(*saved.x_prev, pv.d_z));
    carry = std::move(g.d_x_prev);
    carry += bank.adjoint(pv.d_z);
  }
  Tensor rho = out.loss.cotangents[0];
  if (!carry.empty()) rho += carry;
  WienerLayer wl{params_.at(kWienerName), cfg_.cg_forward, cfg_.cg_backward};
  WienerGradients wg = wiener_backward(wl, pass.wiener->saved, rho);
  out.backward_cg_iterations += wg.report.iterations;
  out.grads.accumulate(kWienerName, wg.d_filters);
  out.trace = std::move(pass.trace);
  return out;
}

void RlsdnModel::project() {
  if (!cfg_.normalize_reg || cfg_.steps == 0) return;
  const std::size_t banks = cfg_.share_weights ? 1 : cfg_.steps;
  for (std::size_t a = 0; a < banks; ++a) normalize_filters(params_.at(reg_name(a)), 1.0);
}

std::vector<ConvergenceRow> convergence_study(const RlsdnModel& model, const std::vector<Sample>& dataset,
                                              const std::vector<std::size_t>& step_counts,
                                              const std::vector<int>& cg_caps) {
  std::vector<ConvergenceRow> rows;
  if (dataset.empty() || step_counts.empty()) return rows;
  const std::size_t max_steps = *std::max_element(step_counts.begin(), step_counts.end());
  for (int cap : cg_caps) {
    RlsdnModel capped = model;
    capped.config().cg_forward.max_iters = cap;
    std::vector<double> psnr_sum(max_steps, 0.0), iter_sum(max_steps, 0.0);
    for (const Sample& s : dataset) {
      const auto r = capped.restore(s.y, s.kernel, s.sigma, max_steps, &s.x_gt);
      double cumulative = 0.0;
      for (std::size_t i = 0; i < max_steps; ++i) {
        cumulative += r.trace.cg_iterations[i];
        psnr_sum[i] += r.trace.psnr[i];
        iter_sum[i] += cumulative;
      }
    }
    const double n = static_cast<double>(dataset.size());
    for (std::size_t steps : step_counts) {
      if (steps == 0) continue;
      rows.push_back({steps, cap, psnr_sum[steps - 1] / n, iter_sum[steps - 1] / n});
    }
  }
  return rows;
}

std::string convergence_csv(const std::vector<ConvergenceRow>& rows) {
  std::ostringstream s;
  s.precision(10);
  s << "steps,cg_cap,psnr,mean_cg_iters\n";
  for (const auto& r : rows) s << r.steps << "," << r.cg_cap << "," << r.psnr << "," << r.mean_cg_iters << "\n";
  return s.str();
}

}  // namespace rlsd
