#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dualls/heatmap.hpp"
#include "dualls/param_vector.hpp"
#include "dualls/rng.hpp"
#include "dualls/sample.hpp"

namespace dualls {

struct PredictorConfig {
  FeatureLayout layout;
  GridSpec grid;
  std::vector<std::size_t> hidden{64, 64};
  double focal_gamma = 2.0;   // focusing exponent, >= 0
  double target_sigma = 1.0;  // Gaussian target spread, in cells
  double kl_floor = 1e-8;     // probability clamp inside the KL logarithm

  // Throws ConfigError on invalid values.
  void validate() const;
  friend bool operator==(const PredictorConfig&, const PredictorConfig&) = default;
};

// Focal loss between a predicted heatmap and a Gaussian-splatted goal:
//   -sum_c y_c (1 - p_c)^gamma log p_c
// where y is the normalized splat of the goal with spread `sigma` cells.
double focal_loss(const Heatmap& pred, Vec2 goal, double gamma, double sigma);

// Normalized Gaussian target around `goal` on `grid`. Throws InputError when
// the goal is off the grid.
std::vector<double> splat_target(const GridSpec& grid, Vec2 goal, double sigma);

// sum_c max(t_c, eps) log(max(t_c, eps) / max(s_c, eps)).
double kl_divergence(const Heatmap& teacher, const Heatmap& student, double eps = 1e-8);

// One weighted contribution to a training objective. `teacher` is required
// when kl_weight is non-zero. Terms with both weights zero are skipped.
struct LossTerm {
  const Sample* sample = nullptr;
  const Heatmap* teacher = nullptr;
  double focal_weight = 0.0;
  double kl_weight = 0.0;
};

struct LossAndGrad {
  double loss = 0.0;
  double focal = 0.0;  // weighted focal part of `loss`
  double kl = 0.0;     // weighted KL part of `loss`
  ParamVector grad;
};

// Single-sample gradient kept in outer-product form: per layer, the
// pre-activation delta and the layer input. Dot products cost O(widths)
// instead of O(parameters).
struct FactoredGradient {
  std::vector<std::vector<double>> deltas;
  std::vector<std::vector<double>> inputs;
};

double dot(const FactoredGradient& a, const FactoredGradient& b);

// Fully connected heatmap predictor: flattened features -> tanh hidden
// layers -> one logit per grid cell -> softmax. Stateless; every call is a
// pure function of (params, inputs).
class Predictor {
 public:
  explicit Predictor(PredictorConfig config);

  const PredictorConfig& config() const { return config_; }
  std::size_t param_count() const { return param_count_; }

  // Glorot-uniform weights, zero biases.
  ParamVector init_params(Rng& rng) const;

  std::vector<double> logits(const ParamVector& params, const Sample& sample) const;
  Heatmap forward(const ParamVector& params, const Sample& sample) const;

  // Focal loss of the model on one sample.
  double sample_loss(const ParamVector& params, const Sample& sample) const;

  // Weighted sum of focal and KL terms with its gradient.
  LossAndGrad loss_and_grad(const ParamVector& params, std::span<const LossTerm> terms) const;
  double loss(const ParamVector& params, std::span<const LossTerm> terms) const;

  // Gradient of the mean focal loss over a non-empty batch.
  ParamVector grad(const ParamVector& params, std::span<const Sample> batch) const;

  // Focal-loss gradient of one sample, factored per layer.
  FactoredGradient factored_grad(const ParamVector& params, const Sample& sample) const;
  ParamVector expand(const FactoredGradient& g) const;

  // Offset of the output-layer bias block inside a ParamVector.
  std::size_t output_bias_offset() const;

 private:
  struct Layer {
    std::size_t in;
    std::size_t out;
    std::size_t weight_offset;
    std::size_t bias_offset;
  };

  struct Scratch {
    std::vector<std::vector<double>> activations;
    std::vector<double> prob;
    std::vector<double> log_prob;
    std::vector<double> scaled;
    std::vector<double> delta;
    std::vector<double> upstream;
  };

  // Fills scratch.delta with dL/dlogits of one term (unless with_delta is
  // false) and returns its loss.
  double output_delta(const LossTerm& term, std::span<const double> logits, Scratch& scratch, double* focal_out,
                      double* kl_out, bool with_delta = true) const;
  template <typename LayerFn>
  void backprop(const ParamVector& params, Scratch& scratch, LayerFn&& on_layer) const;

  void check(const ParamVector& params, const Sample& sample) const;
  void fill_input(const Sample& sample, std::vector<double>& input) const;
  // Runs the net; activations[k] is the input of layer k, the last entry the logits.
  void run(const ParamVector& params, const Sample& sample,
           std::vector<std::vector<double>>& activations) const;

  PredictorConfig config_;
  std::vector<Layer> layers_;
  std::size_t param_count_ = 0;
};

}  // namespace dualls
