#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string_view>

#include "expsgd/errors.hpp"
#include "expsgd/rng.hpp"

namespace expsgd {

enum class FeatureKind { linear_with_bias, random_fourier };

/// Finite-dimensional feature embedding. Two kinds:
///   - linear_with_bias: x -> (x, 1), for linear models on a bounded support;
///   - random_fourier:   x -> sqrt(2/D) cos(W x + b), approximating the
///     Gaussian kernel exp(-||x-x'||^2 / (2 sigma^2)).
/// The random map is a pure function of (seed, dims, bandwidth). Immutable
/// after construction; concurrent reads are safe.
class FeatureMap {
 public:
  /// max_input_norm is the largest Euclidean norm over the declared support;
  /// it fixes the kernel bound R = sqrt(1 + max||x||^2) for the linear map.
  static FeatureMap linear_with_bias(int input_dim, double max_input_norm) {
    if (input_dim < 1) throw ConfigError("feature map: input_dim must be >= 1");
    if (!(max_input_norm > 0)) throw ConfigError("feature map: max_input_norm must be > 0");
    FeatureMap m;
    m.kind_ = FeatureKind::linear_with_bias;
    m.input_dim_ = input_dim;
    m.output_dim_ = input_dim + 1;
    m.max_input_norm_ = max_input_norm;
    m.kernel_bound_ = std::sqrt(1.0 + max_input_norm * max_input_norm);
    return m;
  }

  static FeatureMap random_fourier(int input_dim, int num_features, double bandwidth_sigma,
                                   std::uint64_t seed) {
    if (input_dim < 1 || num_features < 1) throw ConfigError("feature map: bad dimensions");
    if (!(bandwidth_sigma > 0)) throw ConfigError("feature map: bandwidth must be > 0");
    FeatureMap m;
    m.kind_ = FeatureKind::random_fourier;
    m.input_dim_ = input_dim;
    m.output_dim_ = num_features;
    m.bandwidth_ = bandwidth_sigma;
    m.seed_ = seed;
    m.kernel_bound_ = std::sqrt(2.0);  // ||feature(x)||^2 <= 2 for any x
    m.frequencies_.resize(num_features, input_dim);
    CounterRng freq_rng(seed, CounterRng::kRffFrequencies);
    for (int i = 0; i < num_features; ++i) {
      for (int j = 0; j < input_dim; ++j) {
        m.frequencies_(i, j) = freq_rng.next_gaussian() / bandwidth_sigma;
      }
    }
    m.phases_.resize(num_features);
    CounterRng phase_rng(seed, CounterRng::kRffPhases);
    for (int i = 0; i < num_features; ++i) {
      m.phases_(i) = phase_rng.uniform(0.0, 2.0 * kPi);
    }
    return m;
  }

  FeatureKind kind() const { return kind_; }
  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  double kernel_bound() const { return kernel_bound_; }
  double bandwidth() const { return bandwidth_; }
  double max_input_norm() const { return max_input_norm_; }
  std::uint64_t seed() const { return seed_; }
  const Eigen::MatrixXd& frequencies() const { return frequencies_; }
  const Eigen::VectorXd& phases() const { return phases_; }

  std::string_view kind_name() const {
    return kind_ == FeatureKind::linear_with_bias ? "linear_with_bias" : "random_fourier";
  }

  Eigen::VectorXd featurize(const Eigen::VectorXd& x) const {
    if (x.size() != input_dim_) throw ConfigError("featurize: input dimension mismatch");
    if (kind_ == FeatureKind::linear_with_bias) {
      Eigen::VectorXd f(output_dim_);
      f.head(input_dim_) = x;
      f(input_dim_) = 1.0;
      return f;
    }
    const double scale = std::sqrt(2.0 / output_dim_);
    return (((frequencies_ * x) + phases_).array().cos() * scale).matrix();
  }

  /// Kernel induced by the embedding, k(a, b) = feature(a) . feature(b).
  double kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    return featurize(a).dot(featurize(b));
  }

 private:
  FeatureMap() = default;

  static constexpr double kPi = 3.14159265358979323846;

  FeatureKind kind_ = FeatureKind::linear_with_bias;
  int input_dim_ = 0;
  int output_dim_ = 0;
  double kernel_bound_ = 1.0;
  double bandwidth_ = 0.0;
  double max_input_norm_ = 0.0;
  std::uint64_t seed_ = 0;
  Eigen::MatrixXd frequencies_;
  Eigen::VectorXd phases_;
};

}  // namespace expsgd
