#include "dualls/param_vector.hpp"

#include <cmath>
#include <cstring>

#include "dualls/errors.hpp"

namespace dualls {

bool ParamVector::all_finite() const {
  for (double w : weights_) {
    if (!std::isfinite(w)) return false;
  }
  return true;
}

bool ParamVector::bitwise_equal(const ParamVector& other) const {
  return weights_.size() == other.weights_.size() &&
         (weights_.empty() ||
          std::memcmp(weights_.data(), other.weights_.data(), weights_.size() * sizeof(double)) == 0);
}

double dot(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) throw InternalError("dot: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

double norm(const ParamVector& a) { return std::sqrt(dot(a, a)); }

double cosine(const ParamVector& a, const ParamVector& b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double lr) {
  if (params.size() != grad.size()) throw InternalError("sgd_step: length mismatch");
  ParamVector out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) out[i] = params[i] - lr * grad[i];
  return out;
}

ParamVector ema_update(const ParamVector& target, const ParamVector& source, double decay) {
  if (target.size() != source.size()) throw InternalError("ema_update: length mismatch");
  if (!(decay >= 0.0 && decay <= 1.0)) throw InternalError("ema_update: decay outside [0, 1]");
  ParamVector out(target.size());
  const double keep = 1.0 - decay;
  for (std::size_t i = 0; i < target.size(); ++i) out[i] = decay * target[i] + keep * source[i];
  return out;
}

}  // namespace dualls
