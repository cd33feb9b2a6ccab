#include "dualls/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dualls/errors.hpp"

namespace dualls {

namespace {

// Log-softmax and softmax of z.
void normalize_logits(std::span<const double> z, std::vector<double>& prob, std::vector<double>& log_prob) {
  const double peak = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - peak);
  const double log_total = peak + std::log(total);
  prob.resize(z.size());
  log_prob.resize(z.size());
  for (std::size_t c = 0; c < z.size(); ++c) {
    log_prob[c] = z[c] - log_total;
    prob[c] = std::exp(log_prob[c]);
  }
}

// (1 - p)^gamma with the common integer exponents done by multiplication.
double focal_power(double rest, double gamma) {
  if (gamma == 0.0) return 1.0;
  if (gamma == 1.0) return rest;
  if (gamma == 2.0) return rest * rest;
  return std::pow(rest, gamma);
}

double focal_cell(double target, double p, double log_p, double gamma) {
  if (target == 0.0) return 0.0;
  const double modulation = focal_power(1.0 - p, gamma);
  return -target * modulation * log_p;
}

// p_c * dL/dp_c for one focal cell; the softmax chain rule needs only this.
double focal_cell_scaled_derivative(double target, double p, double log_p, double gamma) {
  if (target == 0.0) return 0.0;
  const double rest = 1.0 - p;
  double value = focal_power(rest, gamma);
  if (gamma != 0.0 && rest > 0.0) value -= gamma * focal_power(rest, gamma - 1.0) * p * log_p;
  return -target * value;
}

// Eight interleaved partial sums in a fixed order, so results do not depend
// on whether the compiler vectorizes.
#if defined(__GNUC__) && defined(__x86_64__) && !defined(__clang__)
#define DUALLS_KERNEL __attribute__((target_clones("avx2", "default")))
#else
#define DUALLS_KERNEL
#endif

DUALLS_KERNEL double dot_kernel(const double* a, const double* b, std::size_t n) {
  double s[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) s[j] += a[i + j] * b[i + j];
  }
  for (; i < n; ++i) s[i % 8] += a[i] * b[i];
  return ((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7]));
}

// y += alpha * x
DUALLS_KERNEL void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// Softmax backward: dz_j = a_j - p_j * sum(a).
void softmax_backward(std::span<const double> scaled, std::span<const double> prob, double weight,
                      std::vector<double>& dz) {
  double total = 0.0;
  for (double a : scaled) total += a;
  for (std::size_t j = 0; j < dz.size(); ++j) dz[j] += weight * (scaled[j] - prob[j] * total);
}

}  // namespace

void PredictorConfig::validate() const {
  if (grid.rows < 2 || grid.cols < 2) throw ConfigError("grid must be at least 2x2");
  if (!(grid.cell_size > 0.0)) throw ConfigError("grid cell size must be positive");
  if (layout.agents < 1 || layout.agent_features < 1 || layout.static_features < 1) {
    throw ConfigError("feature dimensions must be at least 1");
  }
  for (std::size_t width : hidden) {
    if (width == 0) throw ConfigError("hidden layer width must be positive");
  }
  if (!(focal_gamma >= 0.0)) throw ConfigError("focal gamma must be >= 0");
  if (!(target_sigma > 0.0)) throw ConfigError("target sigma must be > 0");
  if (!(kl_floor > 0.0 && kl_floor <= 1e-3)) throw ConfigError("KL floor must lie in (0, 1e-3]");
}

std::vector<double> splat_target(const GridSpec& grid, Vec2 goal, double sigma) {
  if (!grid.contains(goal)) throw InputError("goal lies outside the heatmap grid");
  const Vec2 uv = grid.to_cell_coords(goal);
  // The Gaussian factorizes over rows and columns. Each axis is shifted by its
  // nearest offset so the peak stays at exp(0) even as sigma -> 0.
  const auto axis = [sigma](std::size_t n, double centre) {
    std::vector<double> d(n);
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const double off = static_cast<double>(i) + 0.5 - centre;
      d[i] = off * off;
      nearest = std::min(nearest, d[i]);
    }
    for (double& v : d) v = std::exp(-(v - nearest) / (2.0 * sigma * sigma));
    return d;
  };
  const std::vector<double> wx = axis(grid.cols, uv.x);
  const std::vector<double> wy = axis(grid.rows, uv.y);
  std::vector<double> out(grid.cells());
  double total = 0.0;
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      out[r * grid.cols + c] = wy[r] * wx[c];
      total += out[r * grid.cols + c];
    }
  }
  for (double& v : out) v /= total;
  return out;
}

double focal_loss(const Heatmap& pred, Vec2 goal, double gamma, double sigma) {
  const std::vector<double> target = splat_target(pred.grid(), goal, sigma);
  double loss = 0.0;
  for (std::size_t c = 0; c < target.size(); ++c) {
    loss += focal_cell(target[c], pred[c], std::log(pred[c]), gamma);
  }
  return loss;
}

double kl_divergence(const Heatmap& teacher, const Heatmap& student, double eps) {
  if (!(teacher.grid() == student.grid())) throw InputError("KL divergence: heatmap shapes differ");
  double kl = 0.0;
  for (std::size_t c = 0; c < teacher.size(); ++c) {
    const double t = std::max(teacher[c], eps);
    const double s = std::max(student[c], eps);
    kl += t * std::log(t / s);
  }
  return kl;
}

Predictor::Predictor(PredictorConfig config) : config_(std::move(config)) {
  config_.validate();
  std::size_t in = config_.layout.input_size();
  std::size_t offset = 0;
  auto add_layer = [&](std::size_t out) {
    layers_.push_back({in, out, offset, offset + in * out});
    offset += in * out + out;
    in = out;
  };
  for (std::size_t width : config_.hidden) add_layer(width);
  add_layer(config_.grid.cells());
  param_count_ = offset;
}

std::size_t Predictor::output_bias_offset() const { return layers_.back().bias_offset; }

ParamVector Predictor::init_params(Rng& rng) const {
  ParamVector params(param_count_);
  for (const Layer& layer : layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    for (std::size_t i = 0; i < layer.in * layer.out; ++i) {
      params[layer.weight_offset + i] = rng.uniform(-limit, limit);
    }
  }
  return params;
}

void Predictor::check(const ParamVector& params, const Sample& sample) const {
  if (params.size() != param_count_) {
    throw ConfigError("parameter vector has length " + std::to_string(params.size()) + ", model expects " +
                      std::to_string(param_count_));
  }
  const FeatureLayout& layout = config_.layout;
  if (sample.dynamic_features.size() != layout.agents * layout.agent_features ||
      sample.static_features.size() != layout.static_features) {
    throw ConfigError("sample feature dimensions do not match the predictor configuration");
  }
}

void Predictor::fill_input(const Sample& sample, std::vector<double>& input) const {
  input.clear();
  input.insert(input.end(), sample.dynamic_features.begin(), sample.dynamic_features.end());
  input.insert(input.end(), sample.static_features.begin(), sample.static_features.end());
}

void Predictor::run(const ParamVector& params, const Sample& sample,
                    std::vector<std::vector<double>>& activations) const {
  check(params, sample);
  activations.resize(layers_.size() + 1);
  fill_input(sample, activations[0]);
  const double* w = params.values().data();
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const Layer& layer = layers_[k];
    const std::vector<double>& x = activations[k];
    std::vector<double>& y = activations[k + 1];
    y.assign(w + layer.bias_offset, w + layer.bias_offset + layer.out);
    for (std::size_t o = 0; o < layer.out; ++o) {
      y[o] += dot_kernel(w + layer.weight_offset + o * layer.in, x.data(), layer.in);
    }
    if (k + 1 < layers_.size()) {
      for (double& v : y) v = std::tanh(v);
    }
  }
}

std::vector<double> Predictor::logits(const ParamVector& params, const Sample& sample) const {
  std::vector<std::vector<double>> activations;
  run(params, sample, activations);
  return std::move(activations.back());
}

Heatmap Predictor::forward(const ParamVector& params, const Sample& sample) const {
  return Heatmap::from_logits(config_.grid, logits(params, sample));
}

double Predictor::sample_loss(const ParamVector& params, const Sample& sample) const {
  const LossTerm term{&sample, nullptr, 1.0, 0.0};
  return loss(params, std::span<const LossTerm>(&term, 1));
}

double Predictor::output_delta(const LossTerm& term, std::span<const double> logits, Scratch& scratch,
                               double* focal_out, double* kl_out, bool with_delta) const {
  normalize_logits(logits, scratch.prob, scratch.log_prob);
  const std::vector<double>& prob = scratch.prob;
  const std::vector<double>& log_prob = scratch.log_prob;
  if (with_delta) {
    scratch.delta.assign(prob.size(), 0.0);
    scratch.scaled.resize(prob.size());
  }
  double total = 0.0;

  if (term.focal_weight != 0.0) {
    const std::vector<double> target = splat_target(config_.grid, term.sample->goal, config_.target_sigma);
    double focal = 0.0;
    for (std::size_t c = 0; c < prob.size(); ++c) {
      focal += focal_cell(target[c], prob[c], log_prob[c], config_.focal_gamma);
      if (with_delta) {
        scratch.scaled[c] = focal_cell_scaled_derivative(target[c], prob[c], log_prob[c], config_.focal_gamma);
      }
    }
    if (focal_out != nullptr) *focal_out += term.focal_weight * focal;
    total += term.focal_weight * focal;
    if (with_delta) softmax_backward(scratch.scaled, prob, term.focal_weight, scratch.delta);
  }
  if (term.kl_weight != 0.0) {
    if (term.teacher == nullptr) throw InternalError("KL term without a teacher heatmap");
    if (!(term.teacher->grid() == config_.grid)) throw InputError("teacher heatmap shape mismatch");
    const double eps = config_.kl_floor;
    double kl = 0.0;
    for (std::size_t c = 0; c < prob.size(); ++c) {
      const double t = std::max((*term.teacher)[c], eps);
      const double s = std::max(prob[c], eps);
      kl += t * std::log(t / s);
      if (with_delta) scratch.scaled[c] = prob[c] > eps ? -t : 0.0;
    }
    if (kl_out != nullptr) *kl_out += term.kl_weight * kl;
    total += term.kl_weight * kl;
    if (with_delta) softmax_backward(scratch.scaled, prob, term.kl_weight, scratch.delta);
  }
  return total;
}

double Predictor::loss(const ParamVector& params, std::span<const LossTerm> terms) const {
  Scratch scratch;
  double total = 0.0;
  for (const LossTerm& term : terms) {
    if (term.focal_weight == 0.0 && term.kl_weight == 0.0) continue;
    run(params, *term.sample, scratch.activations);
    total += output_delta(term, scratch.activations.back(), scratch, nullptr, nullptr, false);
  }
  return total;
}

template <typename LayerFn>
void Predictor::backprop(const ParamVector& params, Scratch& scratch, LayerFn&& on_layer) const {
  const double* w = params.values().data();
  std::vector<double>& delta = scratch.delta;
  std::vector<double>& upstream = scratch.upstream;
  // delta holds dL/d(pre-activation) of layer k on entry to each iteration.
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const Layer& layer = layers_[k];
    const std::vector<double>& x = scratch.activations[k];
    on_layer(k, layer, std::span<const double>(delta), std::span<const double>(x));
    if (k == 0) break;
    upstream.assign(layer.in, 0.0);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      axpy(d, w + layer.weight_offset + o * layer.in, upstream.data(), layer.in);
    }
    // x = tanh(pre) for hidden layers.
    for (std::size_t i = 0; i < layer.in; ++i) upstream[i] *= 1.0 - x[i] * x[i];
    delta.swap(upstream);
  }
}

LossAndGrad Predictor::loss_and_grad(const ParamVector& params, std::span<const LossTerm> terms) const {
  LossAndGrad result{0.0, 0.0, 0.0, ParamVector(param_count_)};
  double* g = result.grad.values().data();
  Scratch scratch;
  for (const LossTerm& term : terms) {
    if (term.focal_weight == 0.0 && term.kl_weight == 0.0) continue;
    run(params, *term.sample, scratch.activations);
    output_delta(term, scratch.activations.back(), scratch, &result.focal, &result.kl);
    backprop(params, scratch, [&](std::size_t, const Layer& layer, std::span<const double> delta,
                                  std::span<const double> x) {
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double d = delta[o];
        g[layer.bias_offset + o] += d;
        if (d == 0.0) continue;
        axpy(d, x.data(), g + layer.weight_offset + o * layer.in, layer.in);
      }
    });
  }
  result.loss = result.focal + result.kl;
  return result;
}

FactoredGradient Predictor::factored_grad(const ParamVector& params, const Sample& sample) const {
  Scratch scratch;
  run(params, sample, scratch.activations);
  const LossTerm term{&sample, nullptr, 1.0, 0.0};
  output_delta(term, scratch.activations.back(), scratch, nullptr, nullptr);
  FactoredGradient out;
  out.deltas.resize(layers_.size());
  out.inputs.resize(layers_.size());
  backprop(params, scratch, [&](std::size_t k, const Layer&, std::span<const double> delta, std::span<const double> x) {
    out.deltas[k].assign(delta.begin(), delta.end());
    out.inputs[k].assign(x.begin(), x.end());
  });
  return out;
}

ParamVector Predictor::expand(const FactoredGradient& g) const {
  if (g.deltas.size() != layers_.size()) throw InternalError("factored gradient does not match the model");
  ParamVector out(param_count_);
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const Layer& layer = layers_[k];
    for (std::size_t o = 0; o < layer.out; ++o) {
      out[layer.bias_offset + o] = g.deltas[k][o];
      for (std::size_t i = 0; i < layer.in; ++i) out[layer.weight_offset + o * layer.in + i] = g.deltas[k][o] * g.inputs[k][i];
    }
  }
  return out;
}

double dot(const FactoredGradient& a, const FactoredGradient& b) {
  if (a.deltas.size() != b.deltas.size()) throw InternalError("factored gradients of different models");
  // <d a^T, e b^T> = (d . e)(a . b); the bias block adds d . e.
  double sum = 0.0;
  for (std::size_t k = 0; k < a.deltas.size(); ++k) {
    const double dd = dot_kernel(a.deltas[k].data(), b.deltas[k].data(), a.deltas[k].size());
    const double xx = dot_kernel(a.inputs[k].data(), b.inputs[k].data(), a.inputs[k].size());
    sum += dd * (xx + 1.0);
  }
  return sum;
}

ParamVector Predictor::grad(const ParamVector& params, std::span<const Sample> batch) const {
  if (batch.empty()) throw InputError("gradient of an empty batch");
  const double weight = 1.0 / static_cast<double>(batch.size());
  std::vector<LossTerm> terms;
  terms.reserve(batch.size());
  for (const Sample& s : batch) terms.push_back({&s, nullptr, weight, 0.0});
  return loss_and_grad(params, terms).grad;
}

}  // namespace dualls
