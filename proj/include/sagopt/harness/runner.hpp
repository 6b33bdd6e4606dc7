#pragma once

#include "sagopt/harness/config.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace sagopt::harness {

inline constexpr double kDivergenceThreshold = 1e12;

struct TrajectoryRow {
  std::uint64_t k = 0;
  double loss = 0.0;
  std::optional<double> dist_to_opt;
  double lr = 0.0;
};

enum class RunStatus { completed, diverged };

inline std::string to_string(RunStatus s) { return s == RunStatus::completed ? "completed" : "diverged"; }

inline RunStatus run_status_from_string(const std::string& s) {
  if (s == "completed") return RunStatus::completed;
  if (s == "diverged") return RunStatus::diverged;
  throw IoError("unknown run status '" + s + "'");
}

struct RunRecord {
  std::string label;
  std::uint64_t seed = 0;
  std::vector<TrajectoryRow> rows;
  RunStatus status = RunStatus::completed;
  std::string message;  // why a run diverged
  Vector x_final;
  std::string config_hash;
  double wall_seconds = 0.0;
  std::optional<double> validation_metric;  // mlp problems only
};

inline Vector initial_point(const ExperimentConfig& c, std::uint64_t seed) {
  const FiniteSumProblem& problem = *c.instance->problem;
  const auto p = static_cast<Eigen::Index>(problem.dim());
  switch (c.init.kind) {
    case InitSpec::Kind::zeros: return Vector::Zero(p);
    case InitSpec::Kind::explicit_point:
      return Eigen::Map<const Vector>(c.init.point.data(), p);
    case InitSpec::Kind::uniform_box: {
      std::mt19937_64 rng(mix_seed(seed, 1));
      Vector x(p);
      // Explicit affine map of the raw draw so the point does not depend on the library's
      // distribution implementation.
      for (Eigen::Index j = 0; j < p; ++j) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        x(j) = c.init.lo + (c.init.hi - c.init.lo) * u;
      }
      return x;
    }
    case InitSpec::Kind::model_default:
      return ml::MlpModel::random(c.instance->mlp->shape(), mix_seed(seed, 1)).flatten();
  }
  throw ConfigError("bad init kind");
}

namespace detail {

// Owns whatever per-run state a method needs and advances it one iteration at a time.
class Stepper {
 public:
  Stepper(const FiniteSumProblem& problem, const MethodConfig& m, const Vector& x0,
          std::uint64_t seed)
      : problem_(problem),
        m_(m),
        unregularized_(problem, 0.0),
        sampler_(problem.size(), mix_seed(seed, 2),
                 m.gradient == GradientMode::minibatch ? SamplingMode::minibatch
                                                       : SamplingMode::uniform_single,
                 m.gradient == GradientMode::minibatch ? m.batch_size : 1) {
    if (m.sag_kind == SagKind::none) {
      state_ = make_state(m.algorithm, m.hyper, x0);
      return;
    }
    x_ = x0;
    if (m.sag.jit) {
      if (m.sag_kind != SagKind::sag || m.sag.reweight || m.sag.exact_regularization ||
          m.gradient != GradientMode::stochastic || m.sag.init != sag::TableInit::zeros) {
        throw ConfigError("jit applies to plain single-index sag with a zero table only");
      }
      if (problem.linear_structure() == nullptr || problem.lambda() != 0.0) {
        throw ConfigError("jit needs an unregularized linear model");
      }
      jit_ = sag::init_jit_table(problem);
      return;
    }
    const FiniteSumProblem& tabled = m.sag.exact_regularization ? unregularized_ : problem;
    table_ = sag::init_table(tabled, x0, m.sag.init);
    if (m.sag_kind == SagKind::sag_sgd) moments_ = sag::init_moments(problem, false);
    if (m.sag_kind == SagKind::sag_adam) moments_ = sag::init_moments(problem, true);
  }

  const Vector& reported() const {
    return m_.sag_kind == SagKind::none ? reported_iterate(state_) : x_;
  }

  double current_lr(std::uint64_t k) const {
    if (m_.sag_kind != SagKind::none) return m_.hyper.alpha;
    return learning_rate(m_.hyper, k);
  }

  void advance() {
    if (m_.sag_kind == SagKind::none) {
      plain();
    } else {
      sag_family();
    }
  }

 private:
  void plain() {
    const bool look = state_.kind == Algorithm::nesterov;
    const Vector at = look ? lookahead(state_) : state_.x;
    switch (m_.gradient) {
      case GradientMode::full: problem_.full_gradient(at, grad_); break;
      case GradientMode::stochastic: problem_.component_gradient(sampler_.next(), at, grad_); break;
      case GradientMode::minibatch: {
        const auto& batch = sampler_.next_batch();
        grad_ = Vector::Zero(at.size());
        Vector gi(at.size());
        for (Index i : batch) {
          problem_.component_gradient(i, at, gi);
          grad_ += gi;
        }
        grad_ /= static_cast<double>(batch.size());
        break;
      }
    }
    step(state_, grad_);
  }

  void sag_family() {
    const auto& h = m_.hyper;
    if (m_.gradient == GradientMode::minibatch) {
      const auto& batch = sampler_.next_batch();
      sag::sag_minibatch_step(table_, problem_, x_, batch, h.alpha);
      return;
    }
    const Index i = sampler_.next();
    switch (m_.sag_kind) {
      case SagKind::sag:
        if (m_.sag.jit) {
          sag::sag_jit_step(problem_, jit_, x_, i, h.alpha);
        } else if (m_.sag.exact_regularization) {
          if (sag::sag_regularized_step(table_, unregularized_, x_, i, h.alpha, problem_.lambda()) !=
              sag::StepStatus::ok) {
            throw ConfigError("alpha * lambda >= 1: the regularized step does not contract");
          }
        } else if (m_.sag.reweight) {
          sag::sag_reweighted_step(table_, problem_, x_, i, h.alpha);
        } else {
          sag::sag_step(table_, problem_, x_, i, h.alpha);
        }
        break;
      case SagKind::sag_sgd:
        sag::sag_sgd_step(table_, moments_, problem_, x_, i, h.alpha, h.beta1);
        break;
      case SagKind::sag_adam:
        sag::sag_adam_step(table_, moments_, problem_, x_, i, h.alpha, h.beta1, h.beta2, h.epsilon);
        break;
      case SagKind::none: break;
    }
  }

  const FiniteSumProblem& problem_;
  const MethodConfig& m_;
  LambdaView unregularized_;
  IndexSampler sampler_;
  OptimizerState state_;
  Vector grad_;
  Vector x_;
  sag::GradientTable table_;
  sag::JitTable jit_;
  sag::ExampleMoments moments_;
};

}  // namespace detail

// Runs one (method, seed) cell. Rows are recorded at k = 0, every record_every iterations and
// at the last iteration. Divergence ends the run early with status diverged; it never throws.
inline RunRecord run_single(const ExperimentConfig& c, const MethodConfig& m, std::uint64_t seed,
                            const std::string& hash) {
  const auto started = std::chrono::steady_clock::now();
  const FiniteSumProblem& problem = *c.instance->problem;
  const auto xstar = problem.minimizer();

  RunRecord rec;
  rec.label = m.label;
  rec.seed = seed;
  rec.config_hash = hash;

  const Vector x0 = initial_point(c, seed);
  detail::Stepper stepper(problem, m, x0, seed);
  const std::uint64_t total = iterations_for(c, m);

  // Returns false when the iterate has left the finite/bounded region.
  auto record = [&](std::uint64_t k, double lr) {
    const Vector& x = stepper.reported();
    const double xnorm = x.norm();
    const double loss = problem.value(x);
    if (!std::isfinite(loss) || !std::isfinite(xnorm) || std::abs(loss) > kDivergenceThreshold ||
        xnorm > kDivergenceThreshold) {
      rec.status = RunStatus::diverged;
      rec.message = "iterate left the bounded region at iteration " + std::to_string(k);
      return false;
    }
    TrajectoryRow row{k, loss, std::nullopt, lr};
    if (xstar) row.dist_to_opt = (x - *xstar).norm();
    rec.rows.push_back(row);
    return true;
  };

  bool alive = record(0, stepper.current_lr(0));
  for (std::uint64_t k = 0; alive && k < total; ++k) {
    const double lr = stepper.current_lr(k);
    try {
      stepper.advance();
    } catch (const DivergedError& e) {
      rec.status = RunStatus::diverged;
      rec.message = e.what();
      break;
    }
    const std::uint64_t done = k + 1;
    if (done % c.record_every == 0 || done == total) alive = record(done, lr);
  }
  rec.x_final = stepper.reported();
  if (c.instance->mlp && c.instance->validation && rec.status == RunStatus::completed) {
    rec.validation_metric = c.instance->mlp->metric(*c.instance->validation, rec.x_final);
  }
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return rec;
}

// Every method against every seed, methods outermost. Cells are independent.
inline std::vector<RunRecord> run_experiment(const ExperimentConfig& c) {
  if (!c.instance) throw ConfigError("config has no built problem");
  const std::string hash = config_hash(c);
  std::vector<RunRecord> out;
  out.reserve(c.methods.size() * c.seeds.size());
  for (const auto& m : c.methods) {
    for (std::uint64_t seed : c.seeds) out.push_back(run_single(c, m, seed, hash));
  }
  return out;
}

inline bool all_diverged(const std::vector<RunRecord>& records) {
  if (records.empty()) return false;
  for (const auto& r : records) {
    if (r.status != RunStatus::diverged) return false;
  }
  return true;
}

}  // namespace sagopt::harness
