#pragma once

#include "sagopt/problems.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace sagopt::testfns {

struct Evaluation {
  double value = 0.0;
  Vector gradient;
};

enum class Variant { rosenbrock_vanilla, rosenbrock_chained, rastrigin };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::rosenbrock_vanilla: return "rosenbrock_vanilla";
    case Variant::rosenbrock_chained: return "rosenbrock_chained";
    case Variant::rastrigin: return "rastrigin";
  }
  return "unknown";
}

// Vanilla: sum over disjoint pairs (x_{2i-1}, x_{2i}). Chained: sum over consecutive pairs.
inline Evaluation rosenbrock_eval_grad(const Vector& x, Variant variant) {
  const Eigen::Index n = x.size();
  if (n < 2) throw ConfigError("rosenbrock needs dim >= 2");
  Evaluation e{0.0, Vector::Zero(n)};
  auto term = [&](Eigen::Index lo, Eigen::Index hi) {
    const double r = x(hi) - x(lo) * x(lo);
    const double s = x(lo) - 1.0;
    e.value += 100.0 * r * r + s * s;
    e.gradient(hi) += 200.0 * r;
    e.gradient(lo) += -400.0 * x(lo) * r + 2.0 * s;
  };
  if (variant == Variant::rosenbrock_vanilla) {
    if (n % 2 != 0) throw ConfigError("vanilla rosenbrock needs an even dimension");
    for (Eigen::Index i = 0; i < n; i += 2) term(i, i + 1);
  } else if (variant == Variant::rosenbrock_chained) {
    for (Eigen::Index i = 0; i + 1 < n; ++i) term(i, i + 1);
  } else {
    throw ConfigError("rosenbrock_eval_grad called with the rastrigin variant");
  }
  return e;
}

inline Evaluation rastrigin_eval_grad(const Vector& x, double a) {
  if (x.size() < 1) throw ConfigError("rastrigin needs dim >= 1");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  // n a + sum(x^2 - a cos) summed termwise, so the value at 0 is exactly 0.
  Evaluation e{0.0, Vector(x.size())};
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x(i);
    e.value += xi * xi + a * (1.0 - std::cos(two_pi * xi));
    e.gradient(i) = 2.0 * xi + two_pi * a * std::sin(two_pi * xi);
  }
  return e;
}

class TestFunction {
 public:
  TestFunction(Variant variant, Index dim, double a = 10.0) : variant_(variant), dim_(dim), a_(a) {
    if (variant == Variant::rastrigin) {
      if (dim < 1) throw ConfigError("rastrigin needs dim >= 1");
    } else {
      if (dim < 2) throw ConfigError("rosenbrock needs dim >= 2");
      if (variant == Variant::rosenbrock_vanilla && dim % 2 != 0) {
        throw ConfigError("vanilla rosenbrock needs an even dimension");
      }
    }
  }

  static TestFunction rosenbrock(Index dim, bool chained = true) {
    return {chained ? Variant::rosenbrock_chained : Variant::rosenbrock_vanilla, dim};
  }
  static TestFunction rastrigin(Index dim, double a = 10.0) { return {Variant::rastrigin, dim, a}; }

  Variant variant() const { return variant_; }
  Index dim() const { return dim_; }
  double a() const { return a_; }
  std::string name() const { return to_string(variant_); }

  Evaluation eval(const Vector& x) const {
    require_dim(x, dim_, name().c_str());
    return variant_ == Variant::rastrigin ? rastrigin_eval_grad(x, a_)
                                          : rosenbrock_eval_grad(x, variant_);
  }

  // Global minimizers with value 0. (-1, 1, ..., 1) is not listed for either Rosenbrock
  // variant: it is not a zero of the gradient (see testfns tests).
  std::vector<Vector> known_minimizers() const {
    const auto n = static_cast<Eigen::Index>(dim_);
    if (variant_ == Variant::rastrigin) return {Vector::Zero(n)};
    return {Vector::Ones(n)};
  }

 private:
  Variant variant_;
  Index dim_;
  double a_;
};

inline constexpr double kDefaultLogDelta = 1e-8;

// h(x) = log(g(x) + delta). Monotone, so minimizers are shared with the inner function.
class LogScaleWrapper {
 public:
  explicit LogScaleWrapper(TestFunction inner, double delta = kDefaultLogDelta)
      : inner_(std::move(inner)), delta_(delta) {
    if (!(delta > 0.0)) throw ConfigError("log-scale delta must be positive");
  }

  const TestFunction& inner() const { return inner_; }
  double delta() const { return delta_; }
  Index dim() const { return inner_.dim(); }
  std::string name() const { return "log_" + inner_.name(); }
  std::vector<Vector> known_minimizers() const { return inner_.known_minimizers(); }

  Evaluation eval(const Vector& x) const {
    Evaluation e = inner_.eval(x);
    const double shifted = e.value + delta_;
    e.value = std::log(shifted);
    e.gradient /= shifted;
    return e;
  }

 private:
  TestFunction inner_;
  double delta_;
};

// n copies of a deterministic function. With a nonzero noise seed and scale, copy i also gets
// a linear term c_i^T x; the c_i come in +/- pairs (the last one is zero for odd n), so their
// index-order sum is exactly zero and the average objective is unchanged.
template <class Fn>
class ReplicatedSum final : public FiniteSumProblem {
 public:
  ReplicatedSum(Fn fn, Index n_copies, std::uint64_t noise_seed = 0, double noise_scale = 0.0)
      : FiniteSumProblem(0.0), fn_(std::move(fn)), n_(n_copies) {
    if (n_copies < 1) throw ConfigError("n_copies must be >= 1");
    const auto p = static_cast<Eigen::Index>(fn_.dim());
    if (noise_seed != 0 && noise_scale > 0.0) {
      std::mt19937_64 rng(noise_seed);
      std::normal_distribution<double> normal(0.0, noise_scale);
      shifts_.assign(n_, Vector::Zero(p));
      for (Index i = 0; i + 1 < n_; i += 2) {
        for (Eigen::Index j = 0; j < p; ++j) shifts_[i](j) = normal(rng);
        shifts_[i + 1] = -shifts_[i];
      }
    }
  }

  Index size() const override { return n_; }
  Index dim() const override { return fn_.dim(); }
  const Fn& function() const { return fn_; }
  bool perturbed() const { return !shifts_.empty(); }
  const std::vector<Vector>& shifts() const { return shifts_; }

  double loss_value(Index i, const Vector& x) const override {
    double v = fn_.eval(x).value;
    if (perturbed()) v += shifts_[i].dot(x);
    return v;
  }
  void loss_gradient(Index i, const Vector& x, Vector& out) const override {
    out = fn_.eval(x).gradient;
    if (perturbed()) out += shifts_[i];
  }
  double mean_loss(const Vector& x) const override { return fn_.eval(x).value; }
  void mean_loss_gradient(const Vector& x, Vector& out) const override {
    out = fn_.eval(x).gradient;
  }

  // The shifts cancel in the average, so the minimizer is the wrapped function's.
  std::optional<Vector> minimizer() const override { return fn_.known_minimizers().front(); }
  std::optional<double> optimal_value() const override {
    return fn_.eval(fn_.known_minimizers().front()).value;
  }

 private:
  Fn fn_;
  Index n_;
  std::vector<Vector> shifts_;
};

template <class Fn>
ReplicatedSum<Fn> as_finite_sum(Fn fn, Index n_copies, std::uint64_t noise_seed = 0,
                                double noise_scale = 0.0) {
  return ReplicatedSum<Fn>(std::move(fn), n_copies, noise_seed, noise_scale);
}

}  // namespace sagopt::testfns
