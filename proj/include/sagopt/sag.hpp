#pragma once

#include "sagopt/problems.hpp"

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace sagopt::sag {

enum class TableInit { zeros, centered };

inline std::string to_string(TableInit m) { return m == TableInit::zeros ? "zeros" : "centered"; }

inline TableInit table_init_from_string(const std::string& s) {
  if (s == "zeros") return TableInit::zeros;
  if (s == "centered") return TableInit::centered;
  throw ConfigError("unknown SAG table init '" + s + "'");
}

// d is recomputed from the slots this often to bound floating-point drift.
inline constexpr std::uint64_t kRecomputeEvery = 10000;

// Stored gradients y_i (column i of y) and their running sum d.
struct GradientTable {
  Matrix y;
  Vector d;
  std::vector<std::uint8_t> seen;
  Index m_seen = 0;
  TableInit init_mode = TableInit::zeros;
  std::uint64_t updates = 0;

  Index n() const { return static_cast<Index>(y.cols()); }
  Index p() const { return static_cast<Index>(y.rows()); }
};

// Sum of the slots in index order.
inline Vector slot_sum(const GradientTable& t) {
  Vector s = Vector::Zero(t.y.rows());
  for (Eigen::Index i = 0; i < t.y.cols(); ++i) s += t.y.col(i);
  return s;
}

inline double table_drift(const GradientTable& t) { return (t.d - slot_sum(t)).norm(); }

inline void recompute_sum(GradientTable& t) { t.d = slot_sum(t); }

// zeros: y_i = 0, nothing seen. centered: y_i = grad f_i(x0) - grad g(x0), d = 0 exactly and
// every index counts as seen.
inline GradientTable init_table(const FiniteSumProblem& problem, const Vector& x0,
                                TableInit mode = TableInit::zeros) {
  require_dim(x0, problem.dim(), "init_table");
  const auto n = static_cast<Eigen::Index>(problem.size());
  const auto p = static_cast<Eigen::Index>(problem.dim());
  GradientTable t;
  t.y = Matrix::Zero(p, n);
  t.d = Vector::Zero(p);
  t.seen.assign(problem.size(), 0);
  t.init_mode = mode;
  if (mode == TableInit::centered) {
    const Vector full = problem.full_gradient(x0);
    Vector gi(p);
    for (Eigen::Index i = 0; i < n; ++i) {
      problem.component_gradient(static_cast<Index>(i), x0, gi);
      t.y.col(i) = gi - full;
    }
    t.seen.assign(problem.size(), 1);
    t.m_seen = problem.size();
  }
  return t;
}

namespace detail {

inline void check_table(const GradientTable& t, const FiniteSumProblem& problem, const Vector& x) {
  if (t.n() != problem.size() || t.p() != problem.dim()) {
    throw ContractViolation("gradient table shape does not match the problem");
  }
  require_dim(x, problem.dim(), "sag iterate");
}

inline void check_index(const GradientTable& t, Index i) {
  if (i >= t.n()) {
    throw ContractViolation("index " + std::to_string(i + 1) + " outside 1.." +
                            std::to_string(t.n()));
  }
}

// Replaces slot i by `fresh` and keeps d in sync.
inline void replace_slot(GradientTable& t, Index i, const Vector& fresh) {
  const auto col = static_cast<Eigen::Index>(i);
  t.d = t.d - t.y.col(col) + fresh;
  t.y.col(col) = fresh;
  if (!t.seen[i]) {
    t.seen[i] = 1;
    ++t.m_seen;
  }
}

inline void finish(GradientTable& t, const Vector& x) {
  ++t.updates;
  require_finite(x, t.updates, "sag iterate");
  require_finite(t.d, t.updates, "sag gradient sum");
  if (t.updates % kRecomputeEvery == 0) recompute_sum(t);
}

}  // namespace detail

// One iteration of basic SAG: refresh slot i at x, then x -= (alpha / n) d.
inline void sag_step(GradientTable& t, const FiniteSumProblem& problem, Vector& x, Index i,
                     double alpha) {
  detail::check_table(t, problem, x);
  detail::check_index(t, i);
  const Vector g = problem.component_gradient(i, x);
  detail::replace_slot(t, i, g);
  x -= (alpha / static_cast<double>(t.n())) * t.d;
  detail::finish(t, x);
}

// Refreshes every slot in the batch at the same x, then takes one step.
inline void sag_minibatch_step(GradientTable& t, const FiniteSumProblem& problem, Vector& x,
                               std::span<const Index> batch, double alpha) {
  detail::check_table(t, problem, x);
  if (batch.empty()) throw ContractViolation("empty SAG batch");
  std::vector<std::uint8_t> mark(t.n(), 0);
  for (Index i : batch) {
    detail::check_index(t, i);
    if (mark[i]) throw ContractViolation("duplicate index " + std::to_string(i + 1) + " in batch");
    mark[i] = 1;
  }
  Vector g(static_cast<Eigen::Index>(problem.dim()));
  for (Index i : batch) {
    problem.component_gradient(i, x, g);
    detail::replace_slot(t, i, g);
  }
  x -= (alpha / static_cast<double>(t.n())) * t.d;
  detail::finish(t, x);
}

// Divides by the number of indices seen so far instead of n.
inline void sag_reweighted_step(GradientTable& t, const FiniteSumProblem& problem, Vector& x,
                                Index i, double alpha) {
  detail::check_table(t, problem, x);
  detail::check_index(t, i);
  const Vector g = problem.component_gradient(i, x);
  detail::replace_slot(t, i, g);
  if (t.m_seen > 0) x -= (alpha / static_cast<double>(t.m_seen)) * t.d;
  detail::finish(t, x);
}

enum class StepStatus { ok, nonpositive_contraction };

// The table holds gradients of the unregularized losses; the l2 term is applied exactly:
// x = (1 - alpha lambda) x - (alpha / m) d.
inline StepStatus sag_regularized_step(GradientTable& t, const FiniteSumProblem& unregularized,
                                       Vector& x, Index i, double alpha, double lambda) {
  if (unregularized.lambda() != 0.0) {
    throw ContractViolation("exact-regularization SAG expects an unregularized problem");
  }
  detail::check_table(t, unregularized, x);
  detail::check_index(t, i);
  const Vector g = unregularized.component_gradient(i, x);
  detail::replace_slot(t, i, g);
  const double shrink = 1.0 - alpha * lambda;
  if (t.m_seen > 0) x = shrink * x - (alpha / static_cast<double>(t.m_seen)) * t.d;
  detail::finish(t, x);
  return shrink > 0.0 ? StepStatus::ok : StepStatus::nonpositive_contraction;
}

// Per-example buffers for the hybrids: velocity (sag_sgd) or first/second moments (sag_adam).
struct ExampleMoments {
  Matrix first;
  Matrix second;
};

inline ExampleMoments init_moments(const FiniteSumProblem& problem, bool with_second) {
  const auto n = static_cast<Eigen::Index>(problem.size());
  const auto p = static_cast<Eigen::Index>(problem.dim());
  ExampleMoments mo;
  mo.first = Matrix::Zero(p, n);
  if (with_second) mo.second = Matrix::Zero(p, n);
  return mo;
}

// SAG over per-example velocities: v_i = beta1 v_i - alpha grad f_i(x), y_i = v_i,
// x += d / n. The step size lives inside the velocity.
inline void sag_sgd_step(GradientTable& t, ExampleMoments& mo, const FiniteSumProblem& problem,
                         Vector& x, Index i, double alpha, double beta1) {
  detail::check_table(t, problem, x);
  detail::check_index(t, i);
  const auto col = static_cast<Eigen::Index>(i);
  const Vector g = problem.component_gradient(i, x);
  mo.first.col(col) = beta1 * mo.first.col(col) - alpha * g;
  const Vector v = mo.first.col(col);
  detail::replace_slot(t, i, v);
  x += t.d / static_cast<double>(t.n());
  detail::finish(t, x);
}

// SAG over per-example Adam directions: y_i = m_i / (sqrt(r_i) + eps), no bias correction.
inline void sag_adam_step(GradientTable& t, ExampleMoments& mo, const FiniteSumProblem& problem,
                          Vector& x, Index i, double alpha, double beta1, double beta2,
                          double eps) {
  detail::check_table(t, problem, x);
  detail::check_index(t, i);
  const auto col = static_cast<Eigen::Index>(i);
  const Vector g = problem.component_gradient(i, x);
  mo.first.col(col) = beta1 * mo.first.col(col) + (1.0 - beta1) * g;
  mo.second.col(col) = beta2 * mo.second.col(col) + (1.0 - beta2) * g.cwiseAbs2();
  const Vector dir =
      (mo.first.col(col).array() / (mo.second.col(col).array().sqrt() + eps)).matrix();
  detail::replace_slot(t, i, dir);
  x -= (alpha / static_cast<double>(t.n())) * t.d;
  detail::finish(t, x);
}

// Scalar-slot table for f_i(x) = h_i(a_i^T x): slot i holds h_i'(a_i^T x) from the last visit.
struct JitTable {
  std::vector<double> scalars;
  Vector d;
  std::vector<std::uint8_t> seen;
  Index m_seen = 0;
  std::uint64_t updates = 0;

  Index n() const { return scalars.size(); }
};

inline JitTable init_jit_table(const FiniteSumProblem& problem) {
  JitTable t;
  t.scalars.assign(problem.size(), 0.0);
  t.d = Vector::Zero(static_cast<Eigen::Index>(problem.dim()));
  t.seen.assign(problem.size(), 0);
  return t;
}

// Rebuilds the dense sum in the same order and with the same products as the dense table.
inline Vector jit_slot_sum(const JitTable& t, const LinearStructure& model) {
  const Matrix& a = model.features();
  Vector s = Vector::Zero(a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const Vector yi = t.scalars[static_cast<Index>(i)] * a.row(i).transpose();
    s += yi;
  }
  return s;
}

// Same iterates as sag_step on the dense table, with O(n) storage.
inline void sag_jit_step(const FiniteSumProblem& problem, JitTable& t, Vector& x, Index i,
                         double alpha) {
  const LinearStructure* model = problem.linear_structure();
  if (model == nullptr) throw ConfigError("just-in-time SAG needs a linearly parameterized model");
  if (problem.lambda() != 0.0) {
    throw ConfigError("just-in-time SAG supports unregularized models only");
  }
  require_dim(x, problem.dim(), "sag iterate");
  if (i >= t.n()) throw ContractViolation("index " + std::to_string(i + 1) + " out of range");
  const auto row = static_cast<Eigen::Index>(i);
  const Matrix& a = model->features();
  const double z = a.row(row).dot(x);
  const double fresh = model->link_derivative(i, z);
  const Vector old_slot = t.scalars[i] * a.row(row).transpose();
  const Vector new_slot = fresh * a.row(row).transpose();
  t.d = t.d - old_slot + new_slot;
  t.scalars[i] = fresh;
  if (!t.seen[i]) {
    t.seen[i] = 1;
    ++t.m_seen;
  }
  x -= (alpha / static_cast<double>(t.n())) * t.d;
  ++t.updates;
  require_finite(x, t.updates, "sag iterate");
  if (t.updates % kRecomputeEvery == 0) t.d = jit_slot_sum(t, *model);
}

// Binary checkpoint of a GradientTable, little-endian host layout:
//   "SAGT" | u32 version (=1) | u64 n | u64 p | u8 init_mode | u64 m_seen | u64 updates |
//   n x u8 seen | p x f64 d | n*p x f64 y (column i = slot i)
inline constexpr std::uint32_t kTableFormatVersion = 1;

namespace detail {
template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated gradient table checkpoint");
  return v;
}
}  // namespace detail

inline void save_table(const GradientTable& t, std::ostream& os) {
  os.write("SAGT", 4);
  detail::put<std::uint32_t>(os, kTableFormatVersion);
  detail::put<std::uint64_t>(os, t.n());
  detail::put<std::uint64_t>(os, t.p());
  detail::put<std::uint8_t>(os, t.init_mode == TableInit::zeros ? 0 : 1);
  detail::put<std::uint64_t>(os, t.m_seen);
  detail::put<std::uint64_t>(os, t.updates);
  os.write(reinterpret_cast<const char*>(t.seen.data()), static_cast<std::streamsize>(t.seen.size()));
  os.write(reinterpret_cast<const char*>(t.d.data()),
           static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.d.size())));
  os.write(reinterpret_cast<const char*>(t.y.data()),
           static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.y.size())));
  if (!os) throw IoError("failed to write gradient table checkpoint");
}

inline GradientTable load_table(std::istream& is) {
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SAGT", 4) != 0) throw IoError("not a gradient table checkpoint");
  const auto version = detail::get<std::uint32_t>(is);
  if (version != kTableFormatVersion) {
    throw IoError("unsupported gradient table version " + std::to_string(version));
  }
  const auto n = detail::get<std::uint64_t>(is);
  const auto p = detail::get<std::uint64_t>(is);
  GradientTable t;
  t.init_mode = detail::get<std::uint8_t>(is) == 0 ? TableInit::zeros : TableInit::centered;
  t.m_seen = detail::get<std::uint64_t>(is);
  t.updates = detail::get<std::uint64_t>(is);
  t.seen.resize(n);
  t.d.resize(static_cast<Eigen::Index>(p));
  t.y.resize(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n));
  is.read(reinterpret_cast<char*>(t.seen.data()), static_cast<std::streamsize>(n));
  is.read(reinterpret_cast<char*>(t.d.data()), static_cast<std::streamsize>(sizeof(double) * p));
  is.read(reinterpret_cast<char*>(t.y.data()),
          static_cast<std::streamsize>(sizeof(double) * n * p));
  if (!is) throw IoError("truncated gradient table checkpoint");
  return t;
}

}  // namespace sagopt::sag
