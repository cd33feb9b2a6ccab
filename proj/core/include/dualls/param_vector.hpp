#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace dualls {

// Flat vector of every model weight. The unit of EMA averaging, gradient
// arithmetic and cosine similarity.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t size, double fill = 0.0) : weights_(size, fill) {}
  explicit ParamVector(std::vector<double> weights) : weights_(std::move(weights)) {}
  ParamVector(std::initializer_list<double> weights) : weights_(weights) {}

  std::size_t size() const { return weights_.size(); }
  bool empty() const { return weights_.empty(); }

  double& operator[](std::size_t i) { return weights_[i]; }
  double operator[](std::size_t i) const { return weights_[i]; }

  std::span<double> values() { return weights_; }
  std::span<const double> values() const { return weights_; }
  const std::vector<double>& raw() const { return weights_; }

  bool all_finite() const;

  // Bitwise equality (distinguishes -0.0 from 0.0 and compares NaN payloads).
  bool bitwise_equal(const ParamVector& other) const;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> weights_;
};

double dot(const ParamVector& a, const ParamVector& b);
double norm(const ParamVector& a);

// Cosine similarity; returns 0 when either vector has zero norm.
double cosine(const ParamVector& a, const ParamVector& b);

// params - lr * grad, elementwise.
ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double lr);

// decay * target + (1 - decay) * source, elementwise.
ParamVector ema_update(const ParamVector& target, const ParamVector& source, double decay);

}  // namespace dualls
