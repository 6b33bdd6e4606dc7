#pragma once

#include "sagopt/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

namespace sagopt {

enum class ScheduleKind { constant, inverse_linear, inverse_sqrt_warmup, cosine_warmup };

// Learning-rate schedule. `lr` <= 0 means "use HyperParams::alpha".
struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::constant;
  double warmup_init_lr = 0.0;
  double lr = 0.0;
  std::uint64_t warmup_updates = 0;
  double lr_min = 0.0;
  double lr_max = 0.0;  // <= 0: same as lr
  std::uint64_t period_updates = 1000;
  double t_mul = 1.0;
};

inline std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::inverse_linear: return "inverse_linear";
    case ScheduleKind::inverse_sqrt_warmup: return "inverse_sqrt_warmup";
    case ScheduleKind::cosine_warmup: return "cosine_warmup";
  }
  return "unknown";
}

inline ScheduleKind schedule_kind_from_string(std::string_view s) {
  if (s == "constant") return ScheduleKind::constant;
  if (s == "inverse_linear") return ScheduleKind::inverse_linear;
  if (s == "inverse_sqrt_warmup" || s == "inverse_sqrt") return ScheduleKind::inverse_sqrt_warmup;
  if (s == "cosine_warmup" || s == "cosine") return ScheduleKind::cosine_warmup;
  throw ConfigError("unknown schedule kind '" + std::string(s) + "'");
}

inline void validate(const ScheduleSpec& s) {
  if (s.lr_max > 0.0 && s.lr_min > s.lr_max) throw ConfigError("schedule: lr_min > lr_max");
  if (s.kind == ScheduleKind::cosine_warmup) {
    if (s.period_updates == 0) throw ConfigError("schedule: period_updates must be positive");
    if (!(s.t_mul > 0.0)) throw ConfigError("schedule: t_mul must be positive");
  }
}

// Learning rate at update `step` (0-based). Warmup interpolates linearly from warmup_init_lr
// at step 0 to lr at step warmup_updates. After warmup:
//   inverse_sqrt: lr * sqrt(warmup_updates) / sqrt(step)
//   cosine: lr_min + (lr_max - lr_min) * (1 + cos(pi * t_curr / t_i)) / 2, where t_i is the
//           current period length (multiplied by t_mul after each period) and t_curr the
//           position inside it. With t_mul < 1 the periods sum to a finite horizon; past it the
//           rate stays at lr_min.
inline double schedule_lr(const ScheduleSpec& spec, std::uint64_t step) {
  const double lr = spec.lr;
  switch (spec.kind) {
    case ScheduleKind::constant: return lr;
    case ScheduleKind::inverse_linear: return lr / static_cast<double>(step + 1);
    case ScheduleKind::inverse_sqrt_warmup:
    case ScheduleKind::cosine_warmup: break;
  }
  const auto w = spec.warmup_updates;
  if (step < w) {
    return spec.warmup_init_lr +
           (lr - spec.warmup_init_lr) * static_cast<double>(step) / static_cast<double>(w);
  }
  if (spec.kind == ScheduleKind::inverse_sqrt_warmup) {
    if (w == 0) return lr / std::sqrt(static_cast<double>(std::max<std::uint64_t>(step, 1)));
    return lr * std::sqrt(static_cast<double>(w)) / std::sqrt(static_cast<double>(step));
  }

  const double lr_max = spec.lr_max > 0.0 ? spec.lr_max : lr;
  const double lr_min = spec.lr_min;
  const double since = static_cast<double>(step - w);
  const double period = static_cast<double>(spec.period_updates);
  double t_i = period;
  double t_curr = 0.0;
  if (spec.t_mul == 1.0) {
    const double cycles = std::floor(since / period);
    t_curr = since - cycles * period;
  } else {
    if (spec.t_mul < 1.0 && since >= period / (1.0 - spec.t_mul)) return lr_min;
    const double i =
        std::floor(std::log(1.0 - since / period * (1.0 - spec.t_mul)) / std::log(spec.t_mul));
    t_i = std::pow(spec.t_mul, i) * period;
    t_curr = since - (1.0 - std::pow(spec.t_mul, i)) / (1.0 - spec.t_mul) * period;
  }
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * t_curr / t_i));
}

enum class Algorithm {
  sgd,
  momentum,
  nesterov,
  asgd,
  rmsprop,
  rmsprop_mom,
  rprop,
  adadelta,
  adagrad,
  adam,
  amsgrad,
  adamax,
  custom_adam,
  adam_inverse_sqrt,
  adam_cosine,
};

inline constexpr std::array<Algorithm, 15> kAllAlgorithms = {
    Algorithm::sgd,      Algorithm::momentum,    Algorithm::nesterov,          Algorithm::asgd,
    Algorithm::rmsprop,  Algorithm::rmsprop_mom, Algorithm::rprop,             Algorithm::adadelta,
    Algorithm::adagrad,  Algorithm::adam,        Algorithm::amsgrad,           Algorithm::adamax,
    Algorithm::custom_adam, Algorithm::adam_inverse_sqrt, Algorithm::adam_cosine,
};

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::sgd: return "sgd";
    case Algorithm::momentum: return "momentum";
    case Algorithm::nesterov: return "nesterov";
    case Algorithm::asgd: return "asgd";
    case Algorithm::rmsprop: return "rmsprop";
    case Algorithm::rmsprop_mom: return "rmsprop_mom";
    case Algorithm::rprop: return "rprop";
    case Algorithm::adadelta: return "adadelta";
    case Algorithm::adagrad: return "adagrad";
    case Algorithm::adam: return "adam";
    case Algorithm::amsgrad: return "amsgrad";
    case Algorithm::adamax: return "adamax";
    case Algorithm::custom_adam: return "custom_adam";
    case Algorithm::adam_inverse_sqrt: return "adam_inverse_sqrt";
    case Algorithm::adam_cosine: return "adam_cosine";
  }
  return "unknown";
}

inline std::optional<Algorithm> algorithm_from_string(std::string_view s) {
  for (Algorithm a : kAllAlgorithms) {
    if (to_string(a) == s) return a;
  }
  return std::nullopt;
}

struct HyperParams {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double rprop_eta_plus = 1.2;
  double rprop_eta_minus = 0.5;
  double rprop_step_min = 1e-6;
  double rprop_step_max = 50.0;
  std::uint64_t asgd_t0 = 0;
  ScheduleSpec schedule;
};

// Per-algorithm defaults. Schedules for adam_inverse_sqrt / adam_cosine get a warmup of 100
// updates from 1e-7 and, for cosine, 1000-update periods.
inline HyperParams default_hyper(Algorithm a) {
  HyperParams h;
  switch (a) {
    case Algorithm::sgd:
    case Algorithm::asgd: h.alpha = 1e-2; break;
    case Algorithm::momentum:
    case Algorithm::nesterov: h.alpha = 1e-2; h.beta1 = 0.9; break;
    case Algorithm::rmsprop: h.alpha = 1e-2; h.beta2 = 0.99; break;
    case Algorithm::rmsprop_mom: h.alpha = 1e-2; h.beta1 = 0.9; h.beta2 = 0.99; break;
    case Algorithm::rprop: h.alpha = 1e-2; break;
    case Algorithm::adadelta: h.alpha = 1.0; h.beta2 = 0.9; h.epsilon = 1e-6; break;
    case Algorithm::adagrad: h.alpha = 1e-2; h.epsilon = 1e-10; break;
    case Algorithm::adam:
    case Algorithm::amsgrad:
    case Algorithm::adamax:
    case Algorithm::custom_adam: break;
    case Algorithm::adam_inverse_sqrt:
      h.schedule.kind = ScheduleKind::inverse_sqrt_warmup;
      h.schedule.warmup_updates = 100;
      h.schedule.warmup_init_lr = 1e-7;
      break;
    case Algorithm::adam_cosine:
      h.schedule.kind = ScheduleKind::cosine_warmup;
      h.schedule.warmup_updates = 100;
      h.schedule.warmup_init_lr = 1e-7;
      h.schedule.period_updates = 1000;
      break;
  }
  return h;
}

inline void validate(const HyperParams& h) {
  if (!(h.alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (!(h.beta1 >= 0.0 && h.beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
  if (!(h.beta2 > 0.0 && h.beta2 <= 1.0)) throw ConfigError("beta2 must lie in (0, 1]");
  if (!(h.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(h.rprop_eta_plus >= 1.0 && h.rprop_eta_minus > 0.0 && h.rprop_eta_minus <= 1.0)) {
    throw ConfigError("rprop: need eta_plus >= 1 and 0 < eta_minus <= 1");
  }
  if (!(h.rprop_step_min > 0.0 && h.rprop_step_min <= h.rprop_step_max)) {
    throw ConfigError("rprop: need 0 < step_min <= step_max");
  }
  validate(h.schedule);
}

// Step size used by update number k (0-based).
inline double learning_rate(const HyperParams& h, std::uint64_t k) {
  ScheduleSpec s = h.schedule;
  if (!(s.lr > 0.0)) s.lr = h.alpha;
  return schedule_lr(s, k);
}

// Mutable optimizer state. Buffers an algorithm does not use stay empty.
struct OptimizerState {
  Algorithm kind = Algorithm::sgd;
  HyperParams hyper;
  std::uint64_t k = 0;
  double last_lr = 0.0;
  Vector x;
  Vector v;            // velocity (momentum, nesterov, rmsprop_mom)
  Vector m;            // first moment
  Vector r;            // second moment / squared-gradient accumulator
  Vector u;            // adadelta update accumulator, adamax infinity norm
  Vector m_max;        // amsgrad running max of m
  Vector step_sizes;   // rprop
  Vector prev_grad;    // rprop
  Vector x_avg;        // asgd
};

inline OptimizerState make_state(Algorithm kind, HyperParams hyper, const Vector& x0) {
  validate(hyper);
  if (kind == Algorithm::custom_adam && hyper.beta2 >= 1.0) {
    throw ConfigError("custom_adam needs beta2 < 1 (corrective term undefined)");
  }
  OptimizerState s;
  s.kind = kind;
  s.hyper = hyper;
  s.x = x0;
  const Vector zero = Vector::Zero(x0.size());
  switch (kind) {
    case Algorithm::sgd: break;
    case Algorithm::momentum:
    case Algorithm::nesterov: s.v = zero; break;
    case Algorithm::asgd: s.x_avg = x0; break;
    case Algorithm::rmsprop: s.r = zero; break;
    case Algorithm::rmsprop_mom: s.r = zero; s.v = zero; break;
    case Algorithm::rprop:
      s.step_sizes = Vector::Constant(x0.size(), hyper.alpha);
      s.prev_grad = zero;
      break;
    case Algorithm::adadelta: s.r = zero; s.u = zero; break;
    case Algorithm::adagrad: s.r = zero; break;
    case Algorithm::adam:
    case Algorithm::custom_adam:
    case Algorithm::adam_inverse_sqrt:
    case Algorithm::adam_cosine: s.m = zero; s.r = zero; break;
    case Algorithm::amsgrad: s.m = zero; s.r = zero; s.m_max = zero; break;
    case Algorithm::adamax: s.m = zero; s.u = zero; break;
  }
  return s;
}

namespace detail {

inline double begin_step(OptimizerState& s, const Vector& grad) {
  require_dim(grad, static_cast<Index>(s.x.size()), "gradient");
  require_finite(grad, s.k + 1, "gradient");
  s.last_lr = learning_rate(s.hyper, s.k);
  return s.last_lr;
}

inline void end_step(OptimizerState& s) {
  ++s.k;
  for (const Vector* b : {&s.x, &s.v, &s.m, &s.r, &s.u, &s.m_max, &s.step_sizes, &s.x_avg}) {
    if (b->size() > 0) require_finite(*b, s.k, "optimizer state");
  }
}

}  // namespace detail

inline void sgd_step(OptimizerState& s, const Vector& grad) {
  const double lr = detail::begin_step(s, grad);
  s.x -= lr * grad;
  detail::end_step(s);
}

// Heavy-ball velocity update. For Nesterov the caller must evaluate `grad` at lookahead(s);
// the arithmetic is otherwise identical, so the flag only documents that contract.
inline void momentum_step(OptimizerState& s, const Vector& grad, bool nesterov = false) {
  (void)nesterov;
  const double lr = detail::begin_step(s, grad);
  s.v = s.hyper.beta1 * s.v - lr * grad;
  s.x += s.v;
  detail::end_step(s);
}

// Point at which the next gradient must be evaluated.
inline Vector lookahead(const OptimizerState& s) {
  if (s.kind == Algorithm::nesterov) return s.x + s.hyper.beta1 * s.v;
  return s.x;
}

inline void adagrad_step(OptimizerState& s, const Vector& grad) {
  const double lr = detail::begin_step(s, grad);
  s.r.array() += grad.array().square();
  s.x.array() -= lr / (s.r.array().sqrt() + s.hyper.epsilon) * grad.array();
  detail::end_step(s);
}

// Momentum, when enabled, accumulates the scaled gradient.
inline void rmsprop_step(OptimizerState& s, const Vector& grad, bool with_momentum = false) {
  const double lr = detail::begin_step(s, grad);
  const double b2 = s.hyper.beta2;
  s.r = b2 * s.r + (1.0 - b2) * grad.cwiseAbs2();
  const Vector scaled = (lr / (s.r.array().sqrt() + s.hyper.epsilon) * grad.array()).matrix();
  if (with_momentum) {
    s.v = s.hyper.beta1 * s.v - scaled;
    s.x += s.v;
  } else {
    s.x -= scaled;
  }
  detail::end_step(s);
}

// Epsilon sits inside both square roots here.
inline void adadelta_step(OptimizerState& s, const Vector& grad) {
  const double lr = detail::begin_step(s, grad);
  const double b2 = s.hyper.beta2;
  const double eps = s.hyper.epsilon;
  s.r = b2 * s.r + (1.0 - b2) * grad.cwiseAbs2();
  const Vector delta =
      ((s.u.array() + eps).sqrt() / (s.r.array() + eps).sqrt() * grad.array()).matrix();
  s.u = b2 * s.u + (1.0 - b2) * delta.cwiseAbs2();
  s.x -= lr * delta;
  detail::end_step(s);
}

enum class AdamMode { adam, amsgrad, adamax };

// Averaged moments without bias correction. amsgrad keeps the elementwise running max of the
// first moment (starting from zero) and steps along it; adamax replaces sqrt(r) by an
// infinity-norm accumulator and corrects the first moment only.
inline void adam_family_step(OptimizerState& s, const Vector& grad, AdamMode mode = AdamMode::adam) {
  const double lr = detail::begin_step(s, grad);
  const double b1 = s.hyper.beta1;
  const double b2 = s.hyper.beta2;
  const double eps = s.hyper.epsilon;
  s.m = b1 * s.m + (1.0 - b1) * grad;
  switch (mode) {
    case AdamMode::adam:
      s.r = b2 * s.r + (1.0 - b2) * grad.cwiseAbs2();
      s.x.array() -= lr / (s.r.array().sqrt() + eps) * s.m.array();
      break;
    case AdamMode::amsgrad:
      s.r = b2 * s.r + (1.0 - b2) * grad.cwiseAbs2();
      s.m_max = s.m_max.cwiseMax(s.m);
      s.x.array() -= lr / (s.r.array().sqrt() + eps) * s.m_max.array();
      break;
    case AdamMode::adamax: {
      s.u = (b2 * s.u).cwiseMax((grad.cwiseAbs().array() + eps).matrix());
      const double correction = 1.0 - std::pow(b1, static_cast<double>(s.k + 1));
      s.x.array() -= lr / (correction * s.u.array()) * s.m.array();
      break;
    }
  }
  detail::end_step(s);
}

// Corrected step size for the sum-form moments at update k (1-based):
//   alpha * (1 - b1) / sqrt(1 - b2) * sqrt(1 - b2^k) / (1 - b1^k)
inline double custom_adam_step_size(double alpha, double b1, double b2, std::uint64_t k) {
  const double kk = static_cast<double>(k);
  return alpha * (1.0 - b1) / std::sqrt(1.0 - b2) * std::sqrt(1.0 - std::pow(b2, kk)) /
         (1.0 - std::pow(b1, kk));
}

// Sum-form moments m = b1 m + g, r = b2 r + g^2 with the bias corrections folded into the
// step size; equals bias-corrected Adam up to the placement of epsilon.
inline void custom_adam_step(OptimizerState& s, const Vector& grad) {
  const double lr = detail::begin_step(s, grad);
  const double b1 = s.hyper.beta1;
  const double b2 = s.hyper.beta2;
  s.m = b1 * s.m + grad;
  s.r = b2 * s.r + grad.cwiseAbs2();
  const double step = custom_adam_step_size(lr, b1, b2, s.k + 1);
  s.x.array() -= step * s.m.array() / (s.r.array().sqrt() + s.hyper.epsilon);
  detail::end_step(s);
}

// Rprop without weight backtracking: a sign change shrinks the step and zeroes the gradient
// for that coordinate on this update.
inline void rprop_step(OptimizerState& s, const Vector& grad) {
  detail::begin_step(s, grad);
  const auto& h = s.hyper;
  for (Eigen::Index j = 0; j < s.x.size(); ++j) {
    double g = grad(j);
    const double prod = g * s.prev_grad(j);
    if (prod > 0.0) {
      s.step_sizes(j) = std::min(s.step_sizes(j) * h.rprop_eta_plus, h.rprop_step_max);
    } else if (prod < 0.0) {
      s.step_sizes(j) = std::max(s.step_sizes(j) * h.rprop_eta_minus, h.rprop_step_min);
      g = 0.0;
    }
    const double sign = (g > 0.0) - (g < 0.0);
    s.x(j) -= s.step_sizes(j) * sign;
    s.prev_grad(j) = g;
  }
  detail::end_step(s);
}

// Plain SGD step plus a running mean of the iterates produced after update asgd_t0.
inline void asgd_step(OptimizerState& s, const Vector& grad) {
  const double lr = detail::begin_step(s, grad);
  s.x -= lr * grad;
  const std::uint64_t after = s.k + 1;
  if (after > s.hyper.asgd_t0) {
    const double count = static_cast<double>(after - s.hyper.asgd_t0);
    s.x_avg += (s.x - s.x_avg) / count;
  } else {
    s.x_avg = s.x;
  }
  detail::end_step(s);
}

inline void step(OptimizerState& s, const Vector& grad) {
  switch (s.kind) {
    case Algorithm::sgd: sgd_step(s, grad); break;
    case Algorithm::momentum: momentum_step(s, grad, false); break;
    case Algorithm::nesterov: momentum_step(s, grad, true); break;
    case Algorithm::asgd: asgd_step(s, grad); break;
    case Algorithm::rmsprop: rmsprop_step(s, grad, false); break;
    case Algorithm::rmsprop_mom: rmsprop_step(s, grad, true); break;
    case Algorithm::rprop: rprop_step(s, grad); break;
    case Algorithm::adadelta: adadelta_step(s, grad); break;
    case Algorithm::adagrad: adagrad_step(s, grad); break;
    case Algorithm::adam:
    case Algorithm::adam_inverse_sqrt:
    case Algorithm::adam_cosine: adam_family_step(s, grad, AdamMode::adam); break;
    case Algorithm::amsgrad: adam_family_step(s, grad, AdamMode::amsgrad); break;
    case Algorithm::adamax: adam_family_step(s, grad, AdamMode::adamax); break;
    case Algorithm::custom_adam: custom_adam_step(s, grad); break;
  }
}

// The iterate an experiment reports: the running average for asgd, x otherwise.
inline const Vector& reported_iterate(const OptimizerState& s) {
  return s.kind == Algorithm::asgd ? s.x_avg : s.x;
}

}  // namespace sagopt
