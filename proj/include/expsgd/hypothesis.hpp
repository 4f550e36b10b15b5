#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "expsgd/errors.hpp"
#include "expsgd/feature_map.hpp"

namespace expsgd {

enum class Representation { weights, kernel_expansion };

/// Kernel used by the expansion representation: either the one induced by a
/// feature map (k(a,b) = feature(a).feature(b)) or an exact Gaussian kernel.
struct KernelSpec {
  enum class Kind { feature_dot, gaussian };
  Kind kind = Kind::feature_dot;
  double sigma = 1.0;  // Gaussian bandwidth, used iff kind == gaussian
};

/// A function g in the hypothesis space, in one of two representations:
///
///   weights          g(x) = w . feature(x); the space norm is ||w||_2.
///   kernel_expansion g(x) = lazy_scale * sum_i c_i k(x_i, x); the squared
///                    norm is lazy_scale^2 * c^T K c, maintained incrementally
///                    (one new Gram column per appended center).
///
/// The lazy scale absorbs multiplicative shrinkage so a regularized update
/// costs O(1) scale work plus one appended center. A refold (absorbing the
/// scale into the coefficients) is triggered automatically before it can
/// underflow, and never changes evaluations beyond rounding.
///
/// Single writer; concurrent reads are safe only between updates.
class Hypothesis {
 public:
  static Hypothesis zero_weights(int dim) {
    return from_weights(Eigen::VectorXd::Zero(dim));
  }

  static Hypothesis from_weights(Eigen::VectorXd w) {
    Hypothesis g;
    g.rep_ = Representation::weights;
    g.w_ = std::move(w);
    return g;
  }

  static Hypothesis kernel_expansion(KernelSpec kernel) {
    Hypothesis g;
    g.rep_ = Representation::kernel_expansion;
    g.kernel_ = kernel;
    return g;
  }

  /// Builds an expansion from explicit centers/coefficients (lazy scale 1);
  /// the Gram norm is accumulated column by column.
  static Hypothesis kernel_expansion_from(KernelSpec kernel,
                                          std::vector<Eigen::VectorXd> centers,
                                          const std::vector<double>& coefficients,
                                          const FeatureMap& map) {
    Hypothesis g = kernel_expansion(kernel);
    for (std::size_t i = 0; i < centers.size(); ++i) {
      g.axpy_center(1.0, centers[i], coefficients[i], map);
    }
    return g;
  }

  Representation representation() const { return rep_; }
  const Eigen::VectorXd& weights() const { return w_; }
  Eigen::VectorXd& mutable_weights() { return w_; }
  const std::vector<Eigen::VectorXd>& centers() const { return centers_; }
  const std::vector<double>& raw_coefficients() const { return coefficients_; }
  double lazy_scale() const { return lazy_scale_; }
  const KernelSpec& kernel_spec() const { return kernel_; }

  double evaluate(const FeatureMap& map, const Eigen::VectorXd& x) const {
    if (rep_ == Representation::weights) return w_.dot(map.featurize(x));
    double acc = 0.0;
    if (kernel_.kind == KernelSpec::Kind::feature_dot) {
      const Eigen::VectorXd f = map.featurize(x);
      for (std::size_t i = 0; i < centers_.size(); ++i) {
        acc += coefficients_[i] * featurized_centers_[i].dot(f);
      }
    } else {
      for (std::size_t i = 0; i < centers_.size(); ++i) {
        acc += coefficients_[i] * gaussian_kernel(centers_[i], x);
      }
    }
    return lazy_scale_ * acc;
  }

  /// Fast path for weights mode when the caller already featurized x.
  double evaluate_featurized(const Eigen::VectorXd& f) const { return w_.dot(f); }

  /// g <- scale_old * g + step * direction, where the direction is a feature
  /// vector (weights mode). scale_old must be positive.
  void axpy_feature(double scale_old, const Eigen::VectorXd& f, double step) {
    check_scale(scale_old);
    if (rep_ != Representation::weights) {
      throw ConfigError("axpy_feature: hypothesis is not in weights representation");
    }
    w_ = scale_old * w_ + step * f;
  }

  /// g <- scale_old * g + step * k(x, .) for the kernel expansion: the shrink
  /// folds into the lazy scale and x is appended as a new center. The squared
  /// Gram norm is updated with the single new column.
  void axpy_center(double scale_old, const Eigen::VectorXd& x, double step,
                   const FeatureMap& map) {
    check_scale(scale_old);
    if (rep_ != Representation::kernel_expansion) {
      throw ConfigError("axpy_center: hypothesis is not in kernel expansion representation");
    }
    lazy_scale_ *= scale_old;
    if (lazy_scale_ < kRefoldThreshold) fold_scale();
    const double c_new = step / lazy_scale_;
    double cross = 0.0;  // sum_i c_i k(x_i, x)
    double self;
    if (kernel_.kind == KernelSpec::Kind::feature_dot) {
      const Eigen::VectorXd f = map.featurize(x);
      for (std::size_t i = 0; i < centers_.size(); ++i) {
        cross += coefficients_[i] * featurized_centers_[i].dot(f);
      }
      self = f.squaredNorm();
      featurized_centers_.push_back(f);
    } else {
      for (std::size_t i = 0; i < centers_.size(); ++i) {
        cross += coefficients_[i] * gaussian_kernel(centers_[i], x);
      }
      self = 1.0;
    }
    raw_norm_sq_ += 2.0 * c_new * cross + c_new * c_new * self;
    centers_.push_back(x);
    coefficients_.push_back(c_new);
  }

  /// Multiplies the whole function by s > 0 (radial projection step).
  void scale_by(double s) {
    check_scale(s);
    if (rep_ == Representation::weights) {
      w_ *= s;
    } else {
      lazy_scale_ *= s;
      if (lazy_scale_ < kRefoldThreshold) fold_scale();
    }
  }

  /// Absorbs the lazy scale into the coefficients. Evaluation-invariant.
  void fold_scale() {
    if (rep_ != Representation::kernel_expansion || lazy_scale_ == 1.0) return;
    for (double& c : coefficients_) c *= lazy_scale_;
    raw_norm_sq_ *= lazy_scale_ * lazy_scale_;
    lazy_scale_ = 1.0;
  }

  double norm_sq() const {
    if (rep_ == Representation::weights) return w_.squaredNorm();
    return lazy_scale_ * lazy_scale_ * std::max(0.0, raw_norm_sq_);
  }

  double norm() const { return std::sqrt(norm_sq()); }

 private:
  Hypothesis() = default;

  static constexpr double kRefoldThreshold = 1e-150;

  static void check_scale(double s) {
    if (!(s > 0.0)) throw ConfigError("hypothesis update: scale must be positive");
  }

  double gaussian_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    return std::exp(-(a - b).squaredNorm() / (2.0 * kernel_.sigma * kernel_.sigma));
  }

  Representation rep_ = Representation::weights;
  Eigen::VectorXd w_;

  KernelSpec kernel_;
  std::vector<Eigen::VectorXd> centers_;
  std::vector<Eigen::VectorXd> featurized_centers_;  // cache for feature_dot
  std::vector<double> coefficients_;                 // scaled by lazy_scale_
  double lazy_scale_ = 1.0;
  double raw_norm_sq_ = 0.0;  // c^T K c of the raw coefficients
};

}  // namespace expsgd
