#include "sagopt/mlmodels.hpp"
#include "sagopt/optimizers.hpp"
#include "sagopt/sag.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace sagopt;
using namespace sagopt::sag;

namespace {

Vector scalar(double v) { return Vector::Constant(1, v); }

QuadraticSum two_centers() { return QuadraticSum::scalar({0.0, 2.0}); }

ml::LogisticProblem random_logistic(Index n, Index p, std::uint64_t seed, double lambda = 0.0) {
  std::mt19937_64 rng(seed);
  Matrix a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  Vector y(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    a.row(i) = sagopt::testing::random_point(rng, a.cols(), -1, 1);
    y(i) = a(i, 0) + 0.3 * a(i, 1) > 0 ? 1.0 : -1.0;
    if (i % 7 == 0) y(i) = -y(i);
  }
  return ml::LogisticProblem(a, y, lambda);
}

}  // namespace

TEST(SagStep, HandTraceTwoComponents) {
  const auto q = two_centers();
  auto t = init_table(q, scalar(0.0));
  Vector x = scalar(0.0);
  sag_step(t, q, x, 0, 1.0);
  EXPECT_EQ(t.y(0, 0), 0.0);
  EXPECT_EQ(t.d(0), 0.0);
  EXPECT_EQ(x(0), 0.0);
  sag_step(t, q, x, 1, 1.0);
  EXPECT_EQ(t.y(0, 1), -2.0);
  EXPECT_EQ(t.d(0), -2.0);
  EXPECT_EQ(x(0), 1.0);
  EXPECT_EQ(t.m_seen, 2u);
}

TEST(SagStep, SingleComponentIsFullGradient) {
  const auto q = QuadraticSum::random_strongly_convex(1, 4, 0.2, 3);
  auto t = init_table(q, Vector::Ones(4));
  Vector x = Vector::Ones(4);
  Vector fg = Vector::Ones(4);
  const double alpha = 0.5 / *q.lipschitz();
  for (int k = 0; k < 100; ++k) {
    sag_step(t, q, x, 0, alpha);
    fg -= alpha * q.full_gradient(fg);
    ASSERT_LE(sagopt::testing::max_rel_diff(x, fg), 1e-12);
  }
}

TEST(SagStep, IndexOutOfRangeIsContractViolation) {
  const auto q = two_centers();
  auto t = init_table(q, scalar(0.0));
  Vector x = scalar(0.0);
  EXPECT_THROW(sag_step(t, q, x, 2, 1.0), ContractViolation);
}

TEST(SagStep, NonFiniteIsDiverged) {
  const auto q = two_centers();
  auto t = init_table(q, scalar(0.0));
  Vector x = scalar(1e308);
  EXPECT_THROW(sag_step(t, q, x, 1, -1e10), DivergedError);
}

TEST(SagStep, SaturationGivesFullGradient) {
  const auto q = QuadraticSum::random_strongly_convex(6, 3, 0.2, 2);
  auto t = init_table(q, Vector::Zero(3));
  const Vector x = Vector::LinSpaced(3, -1, 1);
  Vector frozen = x;
  for (Index i = 0; i < q.size(); ++i) {
    frozen = x;
    sag_step(t, q, frozen, i, 0.0);
  }
  EXPECT_LE((t.d / 6.0 - q.full_gradient(x)).norm(), 1e-12);
}

TEST(SagTable, SumInvariantAndSeenCount) {
  const auto q = QuadraticSum::random_strongly_convex(10, 3, 0.1, 4);
  auto t = init_table(q, Vector::Zero(3));
  Vector x = Vector::Ones(3);
  IndexSampler s(10, 5);
  Index prev_seen = 0;
  for (int k = 0; k < 2000; ++k) {
    sag_step(t, q, x, s.next(), 1.0 / (16 * *q.lipschitz()));
    ASSERT_LE(table_drift(t), 1e-10 * (1 + t.d.norm()));
    ASSERT_GE(t.m_seen, prev_seen);
    ASSERT_LE(t.m_seen, 10u);
    prev_seen = t.m_seen;
  }
  EXPECT_EQ(t.m_seen, 10u);
}

TEST(SagTable, PeriodicRecomputeMatchesSlots) {
  const auto q = QuadraticSum::random_strongly_convex(5, 2, 0.1, 8);
  auto t = init_table(q, Vector::Zero(2));
  Vector x = Vector::Ones(2);
  IndexSampler s(5, 1);
  for (std::uint64_t k = 0; k < kRecomputeEvery; ++k) sag_step(t, q, x, s.next(), 0.01);
  EXPECT_EQ(t.d, slot_sum(t));
}

TEST(InitTable, ZerosAndCentered) {
  const auto q = QuadraticSum::random_strongly_convex(7, 3, 0.1, 9);
  const Vector x0 = Vector::LinSpaced(3, 2, -2);
  const auto z = init_table(q, x0);
  EXPECT_EQ(z.d.norm(), 0.0);
  EXPECT_EQ(z.y.norm(), 0.0);
  EXPECT_EQ(z.m_seen, 0u);
  const auto c = init_table(q, x0, TableInit::centered);
  EXPECT_EQ(c.d.norm(), 0.0);
  EXPECT_LE(slot_sum(c).norm(), 1e-12);
  EXPECT_EQ(c.m_seen, 7u);
  const auto one = QuadraticSum::scalar({3.0});
  EXPECT_EQ(init_table(one, scalar(1.0), TableInit::centered).y(0, 0), 0.0);
}

TEST(SagMinibatch, FullBatchAfterSaturationIsFullGradient) {
  const auto q = QuadraticSum::random_strongly_convex(8, 3, 0.2, 6);
  std::vector<Index> all(8);
  std::iota(all.begin(), all.end(), 0);
  auto t = init_table(q, Vector::Zero(3));
  Vector x = Vector::Ones(3);
  Vector fg = Vector::Ones(3);
  const double alpha = 1.0 / *q.lipschitz();
  for (int k = 0; k < 100; ++k) {
    sag_minibatch_step(t, q, x, all, alpha);
    fg -= alpha * q.full_gradient(fg);
    ASSERT_LE(sagopt::testing::max_rel_diff(x, fg), 1e-12);
  }
}

TEST(SagMinibatch, BatchOfOneIsSagStep) {
  const auto q = QuadraticSum::random_strongly_convex(5, 2, 0.2, 1);
  auto ta = init_table(q, Vector::Zero(2));
  auto tb = init_table(q, Vector::Zero(2));
  Vector xa = Vector::Ones(2);
  Vector xb = Vector::Ones(2);
  IndexSampler s(5, 3);
  for (int k = 0; k < 50; ++k) {
    const Index i = s.next();
    const Index batch[] = {i};
    sag_step(ta, q, xa, i, 0.1);
    sag_minibatch_step(tb, q, xb, batch, 0.1);
    ASSERT_EQ(xa, xb);
  }
}

TEST(SagMinibatch, HandTraceFourComponents) {
  const auto q = QuadraticSum::scalar({1.0, 2.0, 3.0, 4.0});
  auto t = init_table(q, scalar(0.0));
  Vector x = scalar(0.0);
  const Index b1[] = {0, 1};
  const Index b2[] = {2, 3};
  sag_minibatch_step(t, q, x, b1, 1.0);
  EXPECT_EQ(t.d(0), -3.0);  // (0-1) + (0-2)
  EXPECT_EQ(x(0), 0.75);
  sag_minibatch_step(t, q, x, b2, 1.0);
  EXPECT_EQ(t.d(0), -3.0 - 2.25 - 3.25);
  EXPECT_EQ(x(0), 0.75 + 8.5 / 4);
}

TEST(SagMinibatch, DuplicatesAndEmptyRejected) {
  const auto q = QuadraticSum::scalar({1.0, 2.0, 3.0});
  auto t = init_table(q, scalar(0.0));
  Vector x = scalar(0.0);
  const Index dup[] = {0, 2, 0};
  EXPECT_THROW(sag_minibatch_step(t, q, x, dup, 1.0), ContractViolation);
  EXPECT_THROW(sag_minibatch_step(t, q, x, std::span<const Index>{}, 1.0), ContractViolation);
}

TEST(SagReweighted, FirstStepIsSgd) {
  const auto q = QuadraticSum::random_strongly_convex(4, 2, 0.2, 5);
  auto t = init_table(q, Vector::Zero(2));
  Vector x = Vector::Ones(2);
  const Vector expected = x - 0.1 * q.component_gradient(2, x);
  sag_reweighted_step(t, q, x, 2, 0.1);
  EXPECT_LE((x - expected).norm(), 1e-15);
}

TEST(SagReweighted, HandTraceDividesBySeenCount) {
  const auto q = two_centers();
  auto t = init_table(q, scalar(0.0));
  Vector x = scalar(1.0);
  sag_reweighted_step(t, q, x, 0, 0.5);  // y1 = 1, d = 1, x = 1 - 0.5 = 0.5
  EXPECT_EQ(x(0), 0.5);
  sag_reweighted_step(t, q, x, 0, 0.5);  // y1 = 0.5, d = 0.5, x = 0.25
  EXPECT_EQ(x(0), 0.25);
  sag_reweighted_step(t, q, x, 1, 0.5);  // y2 = -1.75, d = -1.25, x = 0.25 + 0.3125
  EXPECT_EQ(x(0), 0.5625);
}

TEST(SagReweighted, AfterSaturationMatchesSag) {
  const auto q = QuadraticSum::random_strongly_convex(5, 2, 0.2, 12);
  auto ta = init_table(q, Vector::Zero(2));
  Vector xa = Vector::Ones(2);
  for (Index i = 0; i < 5; ++i) sag_reweighted_step(ta, q, xa, i, 0.05);
  auto tb = ta;
  Vector xb = xa;
  IndexSampler s(5, 9);
  for (int k = 0; k < 50; ++k) {
    const Index i = s.next();
    sag_reweighted_step(ta, q, xa, i, 0.05);
    sag_step(tb, q, xb, i, 0.05);
    ASSERT_EQ(xa, xb);
  }
}

TEST(SagReweighted, SeenCountUpdatedBeforeStep) {
  const auto q = two_centers();
  auto t = init_table(q, scalar(0.0));
  Vector x = scalar(3.0);
  sag_reweighted_step(t, q, x, 1, 0.5);  // m_seen = 1 already when x moves
  EXPECT_EQ(t.m_seen, 1u);
  EXPECT_EQ(x(0), 2.5);
}

TEST(SagRegularized, LambdaZeroIsReweighted) {
  const auto q = QuadraticSum::random_strongly_convex(5, 3, 0.2, 13);
  const LambdaView plain(q, 0.0);
  auto ta = init_table(plain, Vector::Zero(3));
  auto tb = ta;
  Vector xa = Vector::Ones(3);
  Vector xb = xa;
  IndexSampler s(5, 4);
  for (int k = 0; k < 50; ++k) {
    const Index i = s.next();
    sag_regularized_step(ta, plain, xa, i, 0.05, 0.0);
    sag_reweighted_step(tb, plain, xb, i, 0.05);
    ASSERT_EQ(xa, xb);
  }
}

TEST(SagRegularized, PureShrinkage) {
  // All-zero features: every stored gradient is 0, so only the l2 term moves x.
  const ml::LeastSquaresProblem lin(Matrix::Zero(2, 1), Vector::Zero(2));
  auto t = init_table(lin, scalar(1.0));
  Vector x = scalar(1.0);
  for (int k = 1; k <= 5; ++k) {
    EXPECT_EQ(sag_regularized_step(t, lin, x, static_cast<Index>(k % 2), 0.1, 2.0), StepStatus::ok);
    EXPECT_NEAR(x(0), std::pow(0.8, k), 1e-15);
  }
}

TEST(SagRegularized, NonPositiveContractionIsFlagged) {
  const auto q = two_centers();
  auto t = init_table(q, scalar(0.0));
  Vector x = scalar(1.0);
  EXPECT_EQ(sag_regularized_step(t, q, x, 0, 1.0, 1.0), StepStatus::nonpositive_contraction);
}

TEST(SagRegularized, RejectsRegularizedProblem) {
  const auto q = QuadraticSum::scalar({1.0}, 0.5);
  auto t = init_table(q, scalar(0.0));
  Vector x = scalar(0.0);
  EXPECT_THROW(sag_regularized_step(t, q, x, 0, 0.1, 0.5), ContractViolation);
}

TEST(SagRegularized, MatchesSplitProblemAtSaturation) {
  const double lambda = 0.3;
  const auto reg = random_logistic(12, 4, 21, lambda);
  const auto plain = random_logistic(12, 4, 21, 0.0);
  const Vector x = Vector::LinSpaced(4, -0.5, 0.8);
  auto tr = init_table(reg, x);
  auto tp = init_table(plain, x);
  for (Index i = 0; i < 12; ++i) {
    Vector a = x;
    Vector b = x;
    sag_step(tr, reg, a, i, 0.0);
    sag_regularized_step(tp, plain, b, i, 0.0, lambda);
  }
  const double alpha = 0.7;
  Vector a = x;
  Vector b = x;
  sag_step(tr, reg, a, 5, alpha);
  sag_regularized_step(tp, plain, b, 5, alpha, lambda);
  EXPECT_LE(sagopt::testing::max_rel_diff(a, b), 1e-12);
}

TEST(SagJit, BitIdenticalToDense) {
  const auto prob = random_logistic(40, 5, 3);
  auto dense = init_table(prob, Vector::Zero(5));
  auto jit = init_jit_table(prob);
  Vector xd = Vector::Zero(5);
  Vector xj = Vector::Zero(5);
  IndexSampler s(40, 17);
  for (int k = 0; k < 500; ++k) {
    const Index i = s.next();
    sag_step(dense, prob, xd, i, 0.5);
    sag_jit_step(prob, jit, xj, i, 0.5);
    ASSERT_EQ(xd, xj) << "step " << k;
  }
  EXPECT_EQ(jit.scalars.size(), 40u);
}

TEST(SagJit, LeastSquaresScalarSlot) {
  Matrix a(2, 2);
  a << 1, 2, -1, 0.5;
  Vector y(2);
  y << 3, -1;
  const ml::LeastSquaresProblem prob(a, y);
  auto t = init_jit_table(prob);
  Vector x(2);
  x << 0.5, 0.25;
  sag_jit_step(prob, t, x, 0, 0.0);
  EXPECT_DOUBLE_EQ(t.scalars[0], 2 * (0.5 + 0.5 - 3));
}

TEST(SagJit, RejectsNonLinearAndRegularized) {
  const auto q = two_centers();
  auto t = init_jit_table(q);
  Vector x = scalar(0.0);
  EXPECT_THROW(sag_jit_step(q, t, x, 0, 0.1), ConfigError);
  const auto reg = random_logistic(5, 2, 1, 0.1);
  auto tr = init_jit_table(reg);
  Vector xr = Vector::Zero(2);
  EXPECT_THROW(sag_jit_step(reg, tr, xr, 0, 0.1), ConfigError);
}

TEST(SagSgd, BetaZeroEqualsSag) {
  const auto q = QuadraticSum::random_strongly_convex(6, 3, 0.2, 14);
  auto ta = init_table(q, Vector::Zero(3));
  auto tb = init_table(q, Vector::Zero(3));
  auto mo = init_moments(q, false);
  Vector xa = Vector::Ones(3);
  Vector xb = Vector::Ones(3);
  IndexSampler s(6, 2);
  const double alpha = 1.0 / (16 * *q.lipschitz());
  for (int k = 0; k < 100; ++k) {
    const Index i = s.next();
    sag_step(ta, q, xa, i, alpha);
    sag_sgd_step(tb, mo, q, xb, i, alpha, 0.0);
    ASSERT_LE(sagopt::testing::max_rel_diff(xa, xb), 1e-12);
  }
}

TEST(SagSgd, SingleComponentIsMomentum) {
  const auto q = QuadraticSum::random_strongly_convex(1, 3, 0.3, 15);
  auto t = init_table(q, Vector::Zero(3));
  auto mo = init_moments(q, false);
  Vector x = Vector::Ones(3);
  HyperParams h;
  h.alpha = 0.1 / *q.lipschitz();
  h.beta1 = 0.8;
  auto m = make_state(Algorithm::momentum, h, Vector::Ones(3));
  for (int k = 0; k < 100; ++k) {
    sag_sgd_step(t, mo, q, x, 0, h.alpha, h.beta1);
    momentum_step(m, q.full_gradient(m.x));
    ASSERT_LE(sagopt::testing::max_rel_diff(x, m.x), 1e-12);
  }
}

TEST(SagSgd, HandTraceThreeSteps) {
  const auto q = two_centers();
  auto t = init_table(q, scalar(0.0));
  auto mo = init_moments(q, false);
  Vector x = scalar(0.0);
  // alpha = 1, beta1 = 0.5, samples (2, 1, 2)
  sag_sgd_step(t, mo, q, x, 1, 1.0, 0.5);  // g2 = -2, v2 = 2, d = 2, x = 1
  EXPECT_EQ(t.d(0), 2.0);
  EXPECT_EQ(x(0), 1.0);
  sag_sgd_step(t, mo, q, x, 0, 1.0, 0.5);  // g1 = 1, v1 = -1, d = 1, x = 1.5
  EXPECT_EQ(t.d(0), 1.0);
  EXPECT_EQ(x(0), 1.5);
  sag_sgd_step(t, mo, q, x, 1, 1.0, 0.5);  // g2 = -0.5, v2 = 1 + 0.5 = 1.5, d = 0.5, x = 1.75
  EXPECT_EQ(t.d(0), 0.5);
  EXPECT_EQ(x(0), 1.75);
}

TEST(SagAdam, SingleComponentIsAdam) {
  const auto q = QuadraticSum::random_strongly_convex(1, 3, 0.3, 16);
  auto t = init_table(q, Vector::Zero(3));
  auto mo = init_moments(q, true);
  Vector x = Vector::Ones(3);
  auto h = default_hyper(Algorithm::adam);
  h.alpha = 0.01;
  auto a = make_state(Algorithm::adam, h, Vector::Ones(3));
  for (int k = 0; k < 100; ++k) {
    sag_adam_step(t, mo, q, x, 0, h.alpha, h.beta1, h.beta2, h.epsilon);
    adam_family_step(a, q.full_gradient(a.x));
    ASSERT_LE(sagopt::testing::max_rel_diff(x, a.x), 1e-12);
  }
}

TEST(SagAdam, ZeroGradientLeavesX) {
  const auto q = QuadraticSum::scalar({1.0, 5.0});
  auto t = init_table(q, scalar(1.0));
  auto mo = init_moments(q, true);
  Vector x = scalar(1.0);
  sag_adam_step(t, mo, q, x, 0, 0.1, 0.9, 0.999, 1e-8);
  EXPECT_EQ(t.y(0, 0), 0.0);
  EXPECT_EQ(x(0), 1.0);
}

TEST(SagAdam, HandTraceTwoSteps) {
  const auto q = two_centers();
  auto t = init_table(q, scalar(0.0));
  auto mo = init_moments(q, true);
  Vector x = scalar(1.0);
  const double b1 = 0.5, b2 = 0.75, eps = 1e-8;
  // Step 1, index 1: g = 1, m = 0.5, r = 0.25, y1 = 0.5 / (0.5 + eps), x = 1 - y1 / 2.
  sag_adam_step(t, mo, q, x, 0, 1.0, b1, b2, eps);
  const double y1 = 0.5 / (0.5 + eps);
  EXPECT_DOUBLE_EQ(t.y(0, 0), y1);
  EXPECT_DOUBLE_EQ(x(0), 1 - y1 / 2);
  // Step 2, index 2: g = x - 2, m = 0.5 g, r = 0.25 g^2, y2 = -0.5|g| / (0.5|g| + eps).
  const double g = x(0) - 2;
  sag_adam_step(t, mo, q, x, 1, 1.0, b1, b2, eps);
  const double y2 = 0.5 * g / (0.5 * std::abs(g) + eps);
  EXPECT_DOUBLE_EQ(t.y(0, 1), y2);
  EXPECT_DOUBLE_EQ(t.d(0), y1 + y2);
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto prob = random_logistic(9, 3, 5);
  auto t = init_table(prob, Vector::Zero(3));
  Vector x = Vector::Ones(3);
  IndexSampler s(9, 1);
  for (int k = 0; k < 7; ++k) sag_step(t, prob, x, s.next(), 0.2);
  std::stringstream buf;
  save_table(t, buf);
  const auto back = load_table(buf);
  EXPECT_EQ(back.y, t.y);
  EXPECT_EQ(back.d, t.d);
  EXPECT_EQ(back.seen, t.seen);
  EXPECT_EQ(back.m_seen, t.m_seen);
  EXPECT_EQ(back.updates, t.updates);
  EXPECT_EQ(back.init_mode, t.init_mode);

  // Resuming from the checkpoint continues the same trajectory.
  auto resumed = back;
  Vector xr = x;
  IndexSampler s2 = s;
  for (int k = 0; k < 20; ++k) {
    const Index i = s.next();
    sag_step(t, prob, x, i, 0.2);
    sag_step(resumed, prob, xr, s2.next(), 0.2);
  }
  EXPECT_EQ(x, xr);
}

TEST(Checkpoint, CenteredModeSurvives) {
  const auto q = QuadraticSum::random_strongly_convex(3, 2, 0.3, 1);
  std::stringstream buf;
  save_table(init_table(q, Vector::Ones(2), TableInit::centered), buf);
  EXPECT_EQ(load_table(buf).init_mode, TableInit::centered);
}

TEST(Checkpoint, CorruptInputRejected) {
  const auto q = QuadraticSum::random_strongly_convex(3, 2, 0.3, 1);
  std::stringstream good;
  save_table(init_table(q, Vector::Zero(2)), good);
  const std::string bytes = good.str();

  std::stringstream bad_magic("XXXX" + bytes.substr(4));
  EXPECT_THROW(load_table(bad_magic), IoError);

  std::string v2 = bytes;
  v2[4] = 2;
  std::stringstream bad_version(v2);
  EXPECT_THROW(load_table(bad_version), IoError);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 5));
  EXPECT_THROW(load_table(truncated), IoError);
}
