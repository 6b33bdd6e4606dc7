#include "sagopt/optimizers.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace sagopt;

namespace {

HyperParams hyper(double alpha) {
  HyperParams h;
  h.alpha = alpha;
  return h;
}

Vector vec(std::initializer_list<double> v) {
  Vector x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index j = 0;
  for (double d : v) x(j++) = d;
  return x;
}

std::vector<Vector> random_gradients(std::uint64_t seed, int count, Eigen::Index p) {
  std::mt19937_64 rng(seed);
  std::vector<Vector> g;
  for (int t = 0; t < count; ++t) g.push_back(sagopt::testing::random_point(rng, p, -2.0, 2.0));
  return g;
}

}  // namespace

// --- sgd ---------------------------------------------------------------------------------------

TEST(Sgd, ZeroGradientKeepsX) {
  auto s = make_state(Algorithm::sgd, hyper(0.3), vec({1, -2}));
  sgd_step(s, Vector::Zero(2));
  EXPECT_EQ(s.x, vec({1, -2}));
  EXPECT_EQ(s.k, 1u);
}

TEST(Sgd, SingleStep) {
  auto s = make_state(Algorithm::sgd, hyper(0.1), Vector::Zero(2));
  sgd_step(s, vec({1, 1}));
  EXPECT_EQ(s.x, vec({-0.1, -0.1}));
}

TEST(Sgd, GeometricRecursionOnQuadratic) {
  auto s = make_state(Algorithm::sgd, hyper(0.1), vec({1.0}));
  for (int k = 0; k < 1000; ++k) sgd_step(s, s.x);
  const double expected = std::pow(0.9, 1000);
  EXPECT_LE(std::abs(s.x(0) - expected), 1e-12 * expected);
}

TEST(Sgd, NonFiniteGradientReportsIteration) {
  auto s = make_state(Algorithm::sgd, hyper(0.1), Vector::Zero(2));
  sgd_step(s, vec({1, 1}));
  try {
    sgd_step(s, vec({std::nan(""), 0}));
    FAIL() << "expected DivergedError";
  } catch (const DivergedError& e) {
    EXPECT_EQ(e.iteration(), 2u);
  }
}

TEST(Sgd, BlowUpIsDiverged) {
  auto s = make_state(Algorithm::sgd, hyper(1e300), vec({1e10}));
  EXPECT_THROW(sgd_step(s, vec({1e300})), DivergedError);
}

TEST(Sgd, WrongDimensionIsContractViolation) {
  auto s = make_state(Algorithm::sgd, hyper(0.1), Vector::Zero(2));
  EXPECT_THROW(sgd_step(s, Vector::Zero(3)), ContractViolation);
}

// --- momentum / nesterov ----------------------------------------------------------------------

TEST(Momentum, BetaZeroEqualsSgd) {
  auto h = hyper(0.05);
  h.beta1 = 0.0;
  auto m = make_state(Algorithm::momentum, h, vec({1, 2, 3}));
  auto s = make_state(Algorithm::sgd, h, vec({1, 2, 3}));
  for (const auto& g : random_gradients(1, 100, 3)) {
    momentum_step(m, g);
    sgd_step(s, g);
    ASSERT_EQ(m.x, s.x);
  }
}

TEST(Momentum, VelocityConvergesUnderConstantGradient) {
  auto h = hyper(0.1);
  h.beta1 = 0.9;
  auto s = make_state(Algorithm::momentum, h, Vector::Zero(1));
  for (int k = 0; k < 200; ++k) momentum_step(s, vec({1.0}));
  EXPECT_NEAR(s.v(0), -0.1 / (1 - 0.9), 1e-8);
  // Closed form of the partial geometric sum as a tighter oracle.
  EXPECT_NEAR(s.v(0), -0.1 * (1 - std::pow(0.9, 200)) / (1 - 0.9), 1e-12);
}

TEST(Momentum, TwoStepUnrolling) {
  auto h = hyper(0.1);
  h.beta1 = 0.7;
  const Vector x0 = vec({0.5, -1});
  const Vector g0 = vec({1, 2});
  const Vector g1 = vec({-3, 0.5});
  auto s = make_state(Algorithm::momentum, h, x0);
  momentum_step(s, g0);
  momentum_step(s, g1);
  const Vector expected = x0 - 0.1 * (g0 + g1) - 0.1 * 0.7 * g0;
  EXPECT_LE((s.x - expected).norm(), 1e-15);
}

TEST(Nesterov, LookaheadPoint) {
  auto h = hyper(0.1);
  h.beta1 = 0.9;
  auto s = make_state(Algorithm::nesterov, h, vec({1.0}));
  EXPECT_EQ(lookahead(s), vec({1.0}));
  momentum_step(s, vec({2.0}), true);
  EXPECT_DOUBLE_EQ(lookahead(s)(0), s.x(0) + 0.9 * s.v(0));
}

TEST(Nesterov, FasterThanHeavyBallOnIllConditionedQuadratic) {
  // f(x) = 0.5 (x1^2 + 100 x2^2); gradient at the lookahead point per the caller contract.
  auto h = hyper(0.009);
  h.beta1 = 0.9;
  const Vector x0 = vec({1, 1});
  auto grad = [](const Vector& x) { return vec({x(0), 100 * x(1)}); };
  auto nes = make_state(Algorithm::nesterov, h, x0);
  auto hb = make_state(Algorithm::momentum, h, x0);
  for (int k = 0; k < 300; ++k) {
    step(nes, grad(lookahead(nes)));
    step(hb, grad(hb.x));
  }
  EXPECT_LT(nes.x.norm(), hb.x.norm());
}

// --- adagrad ------------------------------------------------------------------------------------

TEST(Adagrad, FirstStepIsSignStep) {
  auto h = default_hyper(Algorithm::adagrad);
  auto s = make_state(Algorithm::adagrad, h, Vector::Zero(2));
  adagrad_step(s, vec({3, -0.5}));
  EXPECT_DOUBLE_EQ(s.x(0), -h.alpha * 3 / (3 + h.epsilon));
  EXPECT_DOUBLE_EQ(s.x(1), h.alpha * 0.5 / (0.5 + h.epsilon));
}

TEST(Adagrad, StepShrinksAsInverseSqrt) {
  auto h = hyper(0.5);
  h.epsilon = 1e-10;
  auto s = make_state(Algorithm::adagrad, h, Vector::Zero(1));
  for (int k = 1; k <= 50; ++k) {
    const double before = s.x(0);
    adagrad_step(s, vec({1.0}));
    EXPECT_NEAR(before - s.x(0), 0.5 / (std::sqrt(static_cast<double>(k)) + 1e-10), 1e-15);
  }
}

TEST(Adagrad, SignPatternScaleInvariant) {
  const Vector g = vec({0.3, -2, 5, -1e-3});
  for (double c : {1e-3, 1.0, 1e4}) {
    auto s = make_state(Algorithm::adagrad, default_hyper(Algorithm::adagrad), Vector::Zero(4));
    adagrad_step(s, c * g);
    for (Eigen::Index j = 0; j < 4; ++j) EXPECT_EQ(std::signbit(s.x(j)), !std::signbit(g(j)));
  }
}

// --- rmsprop ------------------------------------------------------------------------------------

TEST(Rmsprop, BetaOneIsDegenerate) {
  auto h = hyper(0.01);
  h.beta2 = 1.0;
  auto s = make_state(Algorithm::rmsprop, h, Vector::Zero(1));
  for (int k = 0; k < 3; ++k) rmsprop_step(s, vec({1e-9}));
  EXPECT_EQ(s.r(0), 0.0);
  EXPECT_NEAR(s.x(0), -3 * 0.01 * 1e-9 / h.epsilon, 1e-12);
}

TEST(Rmsprop, ConstantGradientApproachesSignStep) {
  auto h = hyper(0.01);
  h.beta2 = 0.9;
  auto s = make_state(Algorithm::rmsprop, h, Vector::Zero(1));
  for (int k = 0; k < 499; ++k) rmsprop_step(s, vec({4.0}));
  const double before = s.x(0);
  rmsprop_step(s, vec({4.0}));
  EXPECT_NEAR(before - s.x(0), 0.01 * 4 / (4 + h.epsilon), 1e-6);
}

TEST(Rmsprop, MomentumBetaZeroEqualsPlain) {
  auto h = hyper(0.02);
  h.beta1 = 0.0;
  auto a = make_state(Algorithm::rmsprop_mom, h, vec({1, 1}));
  auto b = make_state(Algorithm::rmsprop, h, vec({1, 1}));
  for (const auto& g : random_gradients(2, 100, 2)) {
    step(a, g);
    step(b, g);
    ASSERT_EQ(a.x, b.x);
  }
}

// --- adadelta -----------------------------------------------------------------------------------

TEST(Adadelta, FirstStepFormula) {
  const auto h = default_hyper(Algorithm::adadelta);
  auto s = make_state(Algorithm::adadelta, h, Vector::Zero(1));
  const double g = 0.7;
  adadelta_step(s, vec({g}));
  const double delta = std::sqrt(h.epsilon) * g / std::sqrt((1 - h.beta2) * g * g + h.epsilon);
  EXPECT_DOUBLE_EQ(s.x(0), -h.alpha * delta);
}

TEST(Adadelta, ZeroGradientKeepsX) {
  auto s = make_state(Algorithm::adadelta, default_hyper(Algorithm::adadelta), vec({2}));
  adadelta_step(s, vec({0}));
  EXPECT_EQ(s.x(0), 2.0);
}

TEST(Adadelta, FirstStepNearlyScaleInvariant) {
  const auto h = default_hyper(Algorithm::adadelta);
  auto first = [&](double g) {
    auto s = make_state(Algorithm::adadelta, h, Vector::Zero(1));
    adadelta_step(s, vec({g}));
    return -s.x(0);
  };
  const double base = first(1.0);
  EXPECT_LT(std::abs(first(1e3) - base) / base, 0.1);
}

// --- adam family --------------------------------------------------------------------------------

TEST(AdamFamily, ZeroGradientFreezesAllModes) {
  for (auto a : {Algorithm::adam, Algorithm::amsgrad, Algorithm::adamax, Algorithm::custom_adam,
                 Algorithm::adam_inverse_sqrt, Algorithm::adam_cosine}) {
    auto s = make_state(a, default_hyper(a), vec({1, -1}));
    for (int k = 0; k < 10; ++k) step(s, Vector::Zero(2));
    EXPECT_EQ(s.x, vec({1, -1})) << to_string(a);
  }
}

TEST(AdamFamily, AdamFirstStep) {
  const auto h = default_hyper(Algorithm::adam);
  auto s = make_state(Algorithm::adam, h, Vector::Zero(1));
  const double g = -0.4;
  adam_family_step(s, vec({g}));
  const double expected = -h.alpha * (1 - h.beta1) * g / (std::sqrt((1 - h.beta2) * g * g) + h.epsilon);
  EXPECT_DOUBLE_EQ(s.x(0), expected);
}

TEST(AdamFamily, AdamaxWithBetaTwoZero) {
  auto h = default_hyper(Algorithm::adamax);
  h.beta2 = 1e-300;  // beta2 must be positive; this is zero for every practical purpose
  auto s = make_state(Algorithm::adamax, h, Vector::Zero(1));
  double m = 0.0;
  double x = 0.0;
  const std::vector<double> gs = {1.0, -2.0, 0.5};
  for (std::size_t k = 0; k < gs.size(); ++k) {
    adam_family_step(s, vec({gs[k]}), AdamMode::adamax);
    m = h.beta1 * m + (1 - h.beta1) * gs[k];
    const double u = std::abs(gs[k]) + h.epsilon;
    x -= h.alpha * m / ((1 - std::pow(h.beta1, static_cast<double>(k + 1))) * u);
    EXPECT_NEAR(s.x(0), x, 1e-15);
    EXPECT_DOUBLE_EQ(s.u(0), u);
  }
}

TEST(AdamFamily, AmsgradMaxIsMonotone) {
  auto s = make_state(Algorithm::amsgrad, default_hyper(Algorithm::amsgrad), Vector::Zero(3));
  Vector prev = s.m_max;
  for (const auto& g : random_gradients(5, 200, 3)) {
    adam_family_step(s, g, AdamMode::amsgrad);
    ASSERT_TRUE((s.m_max.array() >= prev.array()).all());
    ASSERT_TRUE((s.m_max.array() >= s.m.array()).all());
    prev = s.m_max;
  }
}

// Reference Adam with the usual bias corrections, averaged moments.
TEST(CustomAdam, MatchesBiasCorrectedAdam) {
  const auto h = default_hyper(Algorithm::custom_adam);
  auto s = make_state(Algorithm::custom_adam, h, vec({0.1, 0.2, 0.3}));
  Vector x = s.x;
  Vector m = Vector::Zero(3);
  Vector r = Vector::Zero(3);
  int k = 0;
  for (const auto& g : random_gradients(6, 100, 3)) {
    ++k;
    custom_adam_step(s, g);
    m = h.beta1 * m + (1 - h.beta1) * g;
    r = h.beta2 * r + (1 - h.beta2) * g.cwiseAbs2();
    const Vector mhat = m / (1 - std::pow(h.beta1, k));
    const Vector rhat = r / (1 - std::pow(h.beta2, k));
    // Same epsilon as the sum form once mapped into the averaged scale.
    const double eps = h.epsilon * std::sqrt(1 - h.beta2) / std::sqrt(1 - std::pow(h.beta2, k));
    x.array() -= h.alpha * mhat.array() / (rhat.array().sqrt() + eps);
    ASSERT_LT(sagopt::testing::max_rel_diff(s.x, x), 1e-12) << "step " << k;
  }
}

TEST(CustomAdam, AdagradLimitDirection) {
  auto h = default_hyper(Algorithm::custom_adam);
  h.beta1 = 0.0;
  h.beta2 = 1.0 - 1e-9;
  const Vector g = vec({0.3, -1.2, 2.0});
  auto c = make_state(Algorithm::custom_adam, h, Vector::Zero(3));
  auto a = make_state(Algorithm::adagrad, default_hyper(Algorithm::adagrad), Vector::Zero(3));
  custom_adam_step(c, g);
  adagrad_step(a, g);
  const double cosine = c.x.dot(a.x) / (c.x.norm() * a.x.norm());
  EXPECT_GT(cosine, 1 - 1e-6);
}

TEST(CustomAdam, BetaTwoOneIsConfigError) {
  auto h = default_hyper(Algorithm::custom_adam);
  h.beta2 = 1.0;
  EXPECT_THROW(make_state(Algorithm::custom_adam, h, Vector::Zero(1)), ConfigError);
}

TEST(CustomAdam, StepSizeFormula) {
  EXPECT_DOUBLE_EQ(custom_adam_step_size(1.0, 0.9, 0.999, 1), 0.1 / std::sqrt(0.001) * std::sqrt(0.001) / 0.1);
  EXPECT_NEAR(custom_adam_step_size(2.0, 0.5, 0.75, 3),
              2.0 * 0.5 / 0.5 * std::sqrt(1 - 0.75 * 0.75 * 0.75) / (1 - 0.125), 1e-15);
}

// --- rprop --------------------------------------------------------------------------------------

TEST(Rprop, ConstantSignGrowsUntilCap) {
  auto h = hyper(0.1);
  h.rprop_step_max = 1.0;
  auto s = make_state(Algorithm::rprop, h, Vector::Zero(1));
  double expected_step = 0.1;
  double x = 0.0;
  for (int k = 0; k < 30; ++k) {
    if (k > 0) expected_step = std::min(expected_step * 1.2, 1.0);
    rprop_step(s, vec({2.0}));
    x -= expected_step;
    EXPECT_DOUBLE_EQ(s.step_sizes(0), expected_step);
    EXPECT_NEAR(s.x(0), x, 1e-12);
  }
  EXPECT_EQ(s.step_sizes(0), 1.0);
}

TEST(Rprop, AlternatingSignShrinks) {
  auto s = make_state(Algorithm::rprop, hyper(0.4), Vector::Zero(1));
  rprop_step(s, vec({1.0}));
  EXPECT_DOUBLE_EQ(s.step_sizes(0), 0.4);
  rprop_step(s, vec({-1.0}));  // flip: shrink, no move
  EXPECT_DOUBLE_EQ(s.step_sizes(0), 0.2);
  EXPECT_DOUBLE_EQ(s.x(0), -0.4);
  rprop_step(s, vec({1.0}));  // previous gradient was zeroed: no flip, plain step
  EXPECT_DOUBLE_EQ(s.step_sizes(0), 0.2);
  rprop_step(s, vec({-1.0}));
  EXPECT_DOUBLE_EQ(s.step_sizes(0), 0.1);
}

TEST(Rprop, ZeroGradientChangesNothing) {
  auto s = make_state(Algorithm::rprop, hyper(0.3), vec({1, 2}));
  rprop_step(s, Vector::Zero(2));
  EXPECT_EQ(s.x, vec({1, 2}));
  EXPECT_EQ(s.step_sizes, vec({0.3, 0.3}));
}

// --- asgd ---------------------------------------------------------------------------------------

TEST(Asgd, FirstAverageIsFirstIterate) {
  auto s = make_state(Algorithm::asgd, hyper(0.1), vec({1.0}));
  asgd_step(s, vec({2.0}));
  EXPECT_EQ(reported_iterate(s), s.x);
}

TEST(Asgd, MeanOfOneTwoThree) {
  auto s = make_state(Algorithm::asgd, hyper(1.0), Vector::Zero(1));
  for (int k = 0; k < 3; ++k) asgd_step(s, vec({-1.0}));  // x = 1, 2, 3
  EXPECT_DOUBLE_EQ(s.x(0), 3.0);
  EXPECT_DOUBLE_EQ(reported_iterate(s)(0), 2.0);
}

TEST(Asgd, ConstantIteratesAverageToThemselves) {
  auto s = make_state(Algorithm::asgd, hyper(1.0), vec({4.0}));
  for (int k = 0; k < 5; ++k) asgd_step(s, vec({0.0}));
  EXPECT_EQ(reported_iterate(s)(0), 4.0);
}

TEST(Asgd, AveragingStartsAfterT0) {
  auto h = hyper(1.0);
  h.asgd_t0 = 2;
  auto s = make_state(Algorithm::asgd, h, Vector::Zero(1));
  for (int k = 0; k < 5; ++k) asgd_step(s, vec({-1.0}));  // x = 1..5, average of 3, 4, 5
  EXPECT_DOUBLE_EQ(reported_iterate(s)(0), 4.0);
}

// --- schedules ----------------------------------------------------------------------------------

TEST(Schedule, WarmupEndpoints) {
  ScheduleSpec s;
  s.kind = ScheduleKind::inverse_sqrt_warmup;
  s.warmup_init_lr = 1e-7;
  s.lr = 5e-4;
  s.warmup_updates = 400;
  EXPECT_EQ(schedule_lr(s, 0), 1e-7);
  EXPECT_EQ(schedule_lr(s, 400), 5e-4);
  EXPECT_NEAR(schedule_lr(s, 200), 1e-7 + (5e-4 - 1e-7) / 2, 1e-18);
  EXPECT_DOUBLE_EQ(schedule_lr(s, 1600), 2.5e-4);
}

TEST(Schedule, CosineSweepsOnePeriod) {
  ScheduleSpec s;
  s.kind = ScheduleKind::cosine_warmup;
  s.warmup_init_lr = 0.0;
  s.lr = 1.0;
  s.lr_max = 1.0;
  s.lr_min = 0.1;
  s.warmup_updates = 10;
  s.period_updates = 100;
  EXPECT_DOUBLE_EQ(schedule_lr(s, 10), 1.0);
  EXPECT_NEAR(schedule_lr(s, 60), 0.55, 1e-15);
  EXPECT_NEAR(schedule_lr(s, 109), 0.1 + 0.45 * (1 + std::cos(std::numbers::pi * 0.99)), 1e-15);
  EXPECT_DOUBLE_EQ(schedule_lr(s, 110), 1.0);  // restart
}

TEST(Schedule, CosinePeriodsShrinkWithTMul) {
  ScheduleSpec s;
  s.kind = ScheduleKind::cosine_warmup;
  s.lr = 1.0;
  s.lr_min = 0.0;
  s.period_updates = 100;
  s.t_mul = 0.5;
  // Periods 100, 50, 25, ... end at 200 steps.
  EXPECT_DOUBLE_EQ(schedule_lr(s, 100), 1.0);
  EXPECT_NEAR(schedule_lr(s, 125), 0.5, 1e-12);
  EXPECT_EQ(schedule_lr(s, 200), 0.0);
  EXPECT_EQ(schedule_lr(s, 10000), 0.0);
  s.t_mul = 2.0;
  EXPECT_NEAR(schedule_lr(s, 200), 0.5, 1e-12);  // middle of the second, 200-step period
}

TEST(Schedule, InverseLinear) {
  ScheduleSpec s;
  s.kind = ScheduleKind::inverse_linear;
  s.lr = 0.6;
  EXPECT_EQ(schedule_lr(s, 0), 0.6);
  EXPECT_DOUBLE_EQ(schedule_lr(s, 2), 0.2);
}

TEST(Schedule, InvalidSpecsRejected) {
  ScheduleSpec s;
  s.kind = ScheduleKind::cosine_warmup;
  s.lr = 0.1;
  s.lr_min = 1.0;
  s.lr_max = 0.5;
  EXPECT_THROW(validate(s), ConfigError);
}

TEST(Hyper, ValidationRejectsBadValues) {
  auto h = hyper(0.1);
  h.beta1 = 1.0;
  EXPECT_THROW(validate(h), ConfigError);
  h = hyper(-1.0);
  EXPECT_THROW(validate(h), ConfigError);
  h = hyper(0.1);
  h.epsilon = 0.0;
  EXPECT_THROW(validate(h), ConfigError);
}

TEST(Hyper, AlgorithmNamesRoundTrip) {
  for (auto a : kAllAlgorithms) EXPECT_EQ(algorithm_from_string(to_string(a)), a);
  EXPECT_FALSE(algorithm_from_string("lbfgs"));
}

TEST(AllOptimizers, ZeroGradientFixedPoint) {
  for (auto a : kAllAlgorithms) {
    auto s = make_state(a, default_hyper(a), vec({0.25, -4}));
    for (int k = 0; k < 20; ++k) step(s, Vector::Zero(2));
    EXPECT_EQ(reported_iterate(s), vec({0.25, -4})) << to_string(a);
    EXPECT_EQ(s.k, 20u);
  }
}

TEST(AllOptimizers, Deterministic) {
  const auto gs = random_gradients(9, 50, 4);
  for (auto a : kAllAlgorithms) {
    auto s1 = make_state(a, default_hyper(a), Vector::Ones(4));
    auto s2 = make_state(a, default_hyper(a), Vector::Ones(4));
    for (const auto& g : gs) {
      step(s1, g);
      step(s2, g);
    }
    EXPECT_EQ(s1.x, s2.x) << to_string(a);
  }
}
