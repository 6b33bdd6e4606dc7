#pragma once

#include "sagopt/core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <utility>
#include <vector>

namespace sagopt {

// Per-example structure of losses of the form f_i(x) = h_i(a_i^T x). Lets SAG store one
// scalar h_i'(a_i^T x) per example instead of a dense gradient.
class LinearStructure {
 public:
  virtual ~LinearStructure() = default;
  // Row i is the feature vector a_i.
  virtual const Matrix& features() const = 0;
  virtual double link_derivative(Index i, double z) const = 0;
};

// g(x) = (1/n) sum_i f_i(x), f_i(x) = l_i(x) + (lambda/2)|x|^2.
//
// Subclasses provide the unregularized per-example loss l_i and its gradient; the
// regularizer is split evenly over the components so that component gradients are an
// unbiased estimate of the full gradient. Component indices are 0-based here; anything
// written to disk uses 1-based indices.
class FiniteSumProblem {
 public:
  virtual ~FiniteSumProblem() = default;

  virtual Index size() const = 0;
  virtual Index dim() const = 0;
  double lambda() const { return lambda_; }

  virtual double loss_value(Index i, const Vector& x) const = 0;
  virtual void loss_gradient(Index i, const Vector& x, Vector& out) const = 0;

  // Average of the unregularized losses / gradients. Subclasses may override with a
  // cheaper closed form as long as it agrees with the component average.
  virtual double mean_loss(const Vector& x) const {
    double acc = 0.0;
    for (Index i = 0; i < size(); ++i) acc += loss_value(i, x);
    return acc / static_cast<double>(size());
  }

  virtual void mean_loss_gradient(const Vector& x, Vector& out) const {
    out.setZero(static_cast<Eigen::Index>(dim()));
    Vector gi(static_cast<Eigen::Index>(dim()));
    for (Index i = 0; i < size(); ++i) {
      loss_gradient(i, x, gi);
      out += gi;
    }
    out /= static_cast<double>(size());
  }

  virtual std::optional<Vector> minimizer() const { return std::nullopt; }
  virtual std::optional<double> optimal_value() const { return std::nullopt; }
  // Upper bound on the Lipschitz constant of every component gradient, if known.
  virtual std::optional<double> lipschitz() const { return std::nullopt; }
  virtual const LinearStructure* linear_structure() const { return nullptr; }

  double component_value(Index i, const Vector& x) const {
    check(i, x);
    return loss_value(i, x) + 0.5 * lambda_ * x.squaredNorm();
  }

  void component_gradient(Index i, const Vector& x, Vector& out) const {
    check(i, x);
    loss_gradient(i, x, out);
    if (lambda_ > 0.0) out += lambda_ * x;
  }

  Vector component_gradient(Index i, const Vector& x) const {
    Vector out(static_cast<Eigen::Index>(dim()));
    component_gradient(i, x, out);
    return out;
  }

  double value(const Vector& x) const {
    require_dim(x, dim(), "value");
    return mean_loss(x) + 0.5 * lambda_ * x.squaredNorm();
  }

  void full_gradient(const Vector& x, Vector& out) const {
    require_dim(x, dim(), "full_gradient");
    mean_loss_gradient(x, out);
    if (lambda_ > 0.0) out += lambda_ * x;
  }

  Vector full_gradient(const Vector& x) const {
    Vector out(static_cast<Eigen::Index>(dim()));
    full_gradient(x, out);
    return out;
  }

 protected:
  explicit FiniteSumProblem(double lambda) : lambda_(lambda) {
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  }

 private:
  void check(Index i, const Vector& x) const {
    if (i >= size()) {
      throw ContractViolation("component index " + std::to_string(i + 1) + " outside 1.." +
                              std::to_string(size()));
    }
    require_dim(x, dim(), "component_gradient");
  }

  double lambda_;
};

// Forwards the losses of another problem under a different regularization strength.
// Typical use: the unregularized view needed by exact-regularization SAG.
class LambdaView final : public FiniteSumProblem {
 public:
  LambdaView(const FiniteSumProblem& inner, double lambda)
      : FiniteSumProblem(lambda), inner_(inner) {}

  Index size() const override { return inner_.size(); }
  Index dim() const override { return inner_.dim(); }
  double loss_value(Index i, const Vector& x) const override { return inner_.loss_value(i, x); }
  void loss_gradient(Index i, const Vector& x, Vector& out) const override {
    inner_.loss_gradient(i, x, out);
  }
  double mean_loss(const Vector& x) const override { return inner_.mean_loss(x); }
  void mean_loss_gradient(const Vector& x, Vector& out) const override {
    inner_.mean_loss_gradient(x, out);
  }
  std::optional<Vector> minimizer() const override {
    return lambda() == inner_.lambda() ? inner_.minimizer() : std::nullopt;
  }
  std::optional<double> optimal_value() const override {
    return lambda() == inner_.lambda() ? inner_.optimal_value() : std::nullopt;
  }
  const LinearStructure* linear_structure() const override { return inner_.linear_structure(); }

 private:
  const FiniteSumProblem& inner_;
};

// f_i(x) = 0.5 x^T H_i x - b_i^T x + c_i, each H_i symmetric positive semidefinite.
class QuadraticSum final : public FiniteSumProblem {
 public:
  QuadraticSum(std::vector<Matrix> hessians, std::vector<Vector> linear, std::vector<double> offsets,
               double lambda = 0.0)
      : FiniteSumProblem(lambda),
        hessians_(std::move(hessians)),
        linear_(std::move(linear)),
        offsets_(std::move(offsets)) {
    if (hessians_.empty()) throw ConfigError("quadratic sum needs at least one component");
    if (linear_.size() != hessians_.size() || offsets_.size() != hessians_.size()) {
      throw ConfigError("quadratic sum: component arrays differ in length");
    }
    const auto p = hessians_.front().rows();
    for (Index i = 0; i < hessians_.size(); ++i) {
      if (hessians_[i].rows() != p || hessians_[i].cols() != p || linear_[i].size() != p) {
        throw ConfigError("quadratic sum: component " + std::to_string(i + 1) + " has wrong shape");
      }
    }
    mean_hessian_ = Matrix::Zero(p, p);
    mean_linear_ = Vector::Zero(p);
    for (Index i = 0; i < hessians_.size(); ++i) {
      mean_hessian_ += hessians_[i];
      mean_linear_ += linear_[i];
    }
    mean_hessian_ /= static_cast<double>(hessians_.size());
    mean_linear_ /= static_cast<double>(hessians_.size());

    const Matrix reg = mean_hessian_ + this->lambda() * Matrix::Identity(p, p);
    Eigen::SelfAdjointEigenSolver<Matrix> mean_eig(reg);
    strong_convexity_ = mean_eig.eigenvalues().minCoeff();
    double lmax = 0.0;
    for (const auto& h : hessians_) {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(h);
      lmax = std::max(lmax, eig.eigenvalues().maxCoeff());
    }
    lipschitz_ = lmax + this->lambda();
    if (strong_convexity_ > 0.0) {
      minimizer_ = reg.ldlt().solve(mean_linear_);
      optimal_value_ = value(*minimizer_);
    }
  }

  // f_i(x) = (x - c_i)^2 / 2 on the real line.
  static QuadraticSum scalar(const std::vector<double>& centers, double lambda = 0.0) {
    std::vector<Matrix> h;
    std::vector<Vector> b;
    std::vector<double> c;
    for (double ci : centers) {
      h.push_back(Matrix::Constant(1, 1, 1.0));
      b.push_back(Vector::Constant(1, ci));
      c.push_back(0.5 * ci * ci);
    }
    return QuadraticSum(std::move(h), std::move(b), std::move(c), lambda);
  }

  // Random least-squares-shaped components f_i(x) = 0.5 (a_i^T x - y_i)^2 with lambda chosen
  // so that mu / L equals target_ratio (when the unregularized ratio is below it).
  static QuadraticSum random_strongly_convex(Index n, Index p, double target_ratio,
                                             std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Matrix> h;
    std::vector<Vector> b;
    std::vector<double> c;
    const auto pp = static_cast<Eigen::Index>(p);
    for (Index i = 0; i < n; ++i) {
      Vector a(pp);
      for (Eigen::Index j = 0; j < pp; ++j) a(j) = normal(rng);
      const double y = normal(rng);
      h.push_back(a * a.transpose());
      b.push_back(y * a);
      c.push_back(0.5 * y * y);
    }
    QuadraticSum unreg(h, b, c, 0.0);
    const double mu0 = unreg.strong_convexity();
    const double l0 = unreg.lipschitz().value();
    double lambda = 0.0;
    if (mu0 / l0 < target_ratio) lambda = (target_ratio * l0 - mu0) / (1.0 - target_ratio);
    return QuadraticSum(std::move(h), std::move(b), std::move(c), lambda);
  }

  Index size() const override { return hessians_.size(); }
  Index dim() const override { return static_cast<Index>(hessians_.front().rows()); }

  double loss_value(Index i, const Vector& x) const override {
    return 0.5 * x.dot(hessians_[i] * x) - linear_[i].dot(x) + offsets_[i];
  }
  void loss_gradient(Index i, const Vector& x, Vector& out) const override {
    out.noalias() = hessians_[i] * x;
    out -= linear_[i];
  }

  std::optional<Vector> minimizer() const override { return minimizer_; }
  std::optional<double> optimal_value() const override { return optimal_value_; }
  std::optional<double> lipschitz() const override { return lipschitz_; }

  // Smallest eigenvalue of the regularized mean Hessian.
  double strong_convexity() const { return strong_convexity_; }
  const Matrix& mean_hessian() const { return mean_hessian_; }

 private:
  std::vector<Matrix> hessians_;
  std::vector<Vector> linear_;
  std::vector<double> offsets_;
  Matrix mean_hessian_;
  Vector mean_linear_;
  double strong_convexity_ = 0.0;
  double lipschitz_ = 0.0;
  std::optional<Vector> minimizer_;
  std::optional<double> optimal_value_;
};

// Uniform on [0, bound) by rejection on the raw engine output. The stream depends on the
// engine alone, so draws are identical across standard library implementations.
inline Index bounded_draw(std::mt19937_64& rng, Index bound) {
  const auto b = static_cast<std::uint64_t>(bound);
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - max % b;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return static_cast<Index>(r % b);
}

enum class SamplingMode { uniform_single, minibatch };

// Seeded index source. Single mode draws one index uniformly; minibatch mode draws b distinct
// indices per call (without replacement inside a batch, with replacement across calls).
class IndexSampler {
 public:
  IndexSampler(Index n, std::uint64_t seed, SamplingMode mode = SamplingMode::uniform_single,
               Index batch = 1)
      : n_(n), mode_(mode), batch_(mode == SamplingMode::uniform_single ? 1 : batch), rng_(seed) {
    if (n_ == 0) throw ConfigError("sampler needs n >= 1");
    if (batch_ == 0) throw ConfigError("batch size must be positive");
    if (batch_ > n_) {
      throw ConfigError("batch size " + std::to_string(batch_) + " exceeds n = " +
                        std::to_string(n_));
    }
    perm_.resize(n_);
    std::iota(perm_.begin(), perm_.end(), Index{0});
    out_.reserve(batch_);
  }

  Index n() const { return n_; }
  Index batch_size() const { return batch_; }
  SamplingMode mode() const { return mode_; }

  // Uniform on [0, n).
  Index next() { return bounded_draw(rng_, n_); }

  const std::vector<Index>& next_batch() {
    out_.clear();
    if (mode_ == SamplingMode::uniform_single) {
      out_.push_back(next());
      return out_;
    }
    for (Index j = 0; j < batch_; ++j) {
      const Index pick = j + bounded_draw(rng_, n_ - j);
      std::swap(perm_[j], perm_[pick]);
      out_.push_back(perm_[j]);
    }
    return out_;
  }

 private:
  Index n_;
  SamplingMode mode_;
  Index batch_;
  std::mt19937_64 rng_;
  std::vector<Index> perm_;
  std::vector<Index> out_;
};

}  // namespace sagopt
