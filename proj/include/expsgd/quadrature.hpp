#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace expsgd {

struct QuadratureNode {
  double x;
  double weight;
};

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre recurrence. Nodes are returned in increasing order.
inline std::vector<QuadratureNode> gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: order must be >= 1");
  std::vector<QuadratureNode> nodes(n);
  const double pi = 3.14159265358979323846;
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    // Tricomi initial guess for the i-th root.
    double x = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      // Evaluate P_n and P_n' at x via the three-term recurrence.
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    nodes[i] = {-x, w};              // roots come out in decreasing |x|
    nodes[n - 1 - i] = {x, w};       // symmetric partner
  }
  return nodes;
}

/// Axis-aligned rectangle [x1_lo, x1_hi] x [x2_lo, x2_hi].
struct Rect {
  double x1_lo, x1_hi, x2_lo, x2_hi;

  double area() const { return (x1_hi - x1_lo) * (x2_hi - x2_lo); }

  bool contains(double x1, double x2) const {
    return x1 >= x1_lo && x1 <= x1_hi && x2 >= x2_lo && x2 <= x2_hi;
  }
};

/// Tensor-product Gauss-Legendre rule over a rectangle. Weights sum to the
/// rectangle area; divide by area() for a uniform-distribution expectation.
struct TensorRule {
  std::vector<double> x1, x2, weight;  // parallel arrays, order*order entries

  static TensorRule over(const Rect& box, int order) {
    const auto g = gauss_legendre(order);
    TensorRule rule;
    rule.x1.reserve(static_cast<std::size_t>(order) * order);
    rule.x2.reserve(static_cast<std::size_t>(order) * order);
    rule.weight.reserve(static_cast<std::size_t>(order) * order);
    const double c1 = 0.5 * (box.x1_hi - box.x1_lo), m1 = 0.5 * (box.x1_hi + box.x1_lo);
    const double c2 = 0.5 * (box.x2_hi - box.x2_lo), m2 = 0.5 * (box.x2_hi + box.x2_lo);
    for (const auto& a : g) {
      for (const auto& b : g) {
        rule.x1.push_back(m1 + c1 * a.x);
        rule.x2.push_back(m2 + c2 * b.x);
        rule.weight.push_back(c1 * c2 * a.weight * b.weight);
      }
    }
    return rule;
  }
};

}  // namespace expsgd
