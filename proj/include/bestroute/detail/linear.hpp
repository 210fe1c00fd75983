#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "bestroute/detail/rng.hpp"

#include "bestroute/features.hpp"

namespace bestroute::detail {

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// ln(1 + e^x) without overflow.
inline double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Weight vector stored as scale * v so L2 decay is O(1) per SGD step and
/// sparse updates stay O(nnz).
class ScaledWeights {
 public:
  explicit ScaledWeights(std::size_t dim) : v_(dim, 0.0) {}

  double dot(const SparseVector& x) const { return scale_ * x.dot(v_); }

  void decay(double factor) {
    scale_ *= factor;
    if (scale_ < 1e-6) fold();
  }

  void add(const SparseVector& x, double coef) {
    const double c = coef / scale_;
    for (std::size_t i = 0; i < x.nnz(); ++i) v_[x.index[i]] += c * x.value[i];
  }

  std::vector<double> materialize() const {
    std::vector<double> out(v_.size());
    for (std::size_t i = 0; i < v_.size(); ++i) out[i] = scale_ * v_[i];
    return out;
  }

 private:
  void fold() {
    for (double& x : v_) x *= scale_;
    scale_ = 1.0;
  }

  std::vector<double> v_;
  double scale_ = 1.0;
};

struct LogisticFit {
  std::vector<double> weights;
  double bias = 0.0;
};

/// Seeded SGD on mean soft-label cross entropy + (l2/2)|w|^2, starting from
/// zero, reshuffling every epoch.
inline LogisticFit fit_logistic(std::span<const SparseVector> xs, std::span<const double> ys, std::size_t dim,
                                int epochs, double learning_rate, double l2, std::uint64_t seed) {
  ScaledWeights w(dim);
  double b = 0.0;
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  const double decay = 1.0 - learning_rate * l2;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t i : order) {
      const double err = sigmoid(w.dot(xs[i]) + b) - ys[i];
      if (decay != 1.0) w.decay(decay);
      w.add(xs[i], -learning_rate * err);
      b -= learning_rate * err;
    }
  }
  return {w.materialize(), b};
}

}  // namespace bestroute::detail
