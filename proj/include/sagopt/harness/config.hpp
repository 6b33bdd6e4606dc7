#pragma once

#include "sagopt/mlmodels.hpp"
#include "sagopt/optimizers.hpp"
#include "sagopt/sag.hpp"
#include "sagopt/testfns.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace sagopt::harness {

using json = nlohmann::json;

enum class GradientMode { stochastic, minibatch, full };

inline std::string to_string(GradientMode g) {
  switch (g) {
    case GradientMode::stochastic: return "stochastic";
    case GradientMode::minibatch: return "minibatch";
    case GradientMode::full: return "full";
  }
  return "unknown";
}

inline GradientMode gradient_mode_from_string(const std::string& s) {
  if (s == "stochastic") return GradientMode::stochastic;
  if (s == "minibatch") return GradientMode::minibatch;
  if (s == "full") return GradientMode::full;
  throw ConfigError("unknown gradient mode '" + s + "'");
}

// Methods the runner knows beyond the plain optimizers: fg is gradient descent on the full
// gradient; the sag family keeps a gradient table.
enum class SagKind { none, sag, sag_sgd, sag_adam };

struct SagOptions {
  sag::TableInit init = sag::TableInit::zeros;
  bool reweight = false;
  bool exact_regularization = false;
  bool jit = false;
};

struct MethodConfig {
  std::string label;  // unique within an experiment; names output files
  std::string name;   // algorithm name
  SagKind sag_kind = SagKind::none;
  Algorithm algorithm = Algorithm::sgd;
  HyperParams hyper;
  SagOptions sag;
  GradientMode gradient = GradientMode::stochastic;
  Index batch_size = 1;
};

struct InitSpec {
  enum class Kind { zeros, explicit_point, uniform_box, model_default } kind = Kind::zeros;
  std::vector<double> point;
  double lo = -1.0;
  double hi = 1.0;
};

struct StabilizationSpec {
  std::size_t window = 50;
  double tol = 1e-6;
};

// A built problem plus whatever the runner needs to report on it.
struct ProblemInstance {
  std::shared_ptr<FiniteSumProblem> problem;
  std::shared_ptr<const ml::MlpProblem> mlp;  // set for mlp problems
  std::optional<ml::Dataset> validation;
  json metadata = json::object();
};

struct ExperimentConfig {
  std::string name = "experiment";
  json problem;
  std::vector<MethodConfig> methods;
  std::uint64_t iterations = 1000;
  std::optional<std::uint64_t> epochs;
  std::vector<std::uint64_t> seeds = {1};
  std::uint64_t record_every = 10;
  InitSpec init;
  StabilizationSpec stabilization;
  std::string output = "out";
  std::string format = "csv";
  std::shared_ptr<const ProblemInstance> instance;
};

// ---------------------------------------------------------------------------------------------

namespace detail {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

inline ml::Dataset load_dataset(const json& spec) {
  ml::CsvSchema schema;
  const auto task = get_or<std::string>(spec, "task", "classification");
  if (task == "classification") {
    schema.task = ml::Task::classification;
  } else if (task == "regression") {
    schema.task = ml::Task::regression;
  } else {
    throw ConfigError("unknown task '" + task + "'");
  }
  if (spec.contains("targets")) {
    schema.target_columns = spec.at("targets").get<std::vector<std::string>>();
  }
  if (spec.contains("features")) {
    schema.feature_columns = spec.at("features").get<std::vector<std::string>>();
  }
  return ml::load_csv(spec.at("dataset").get<std::string>(), schema);
}

// Gaussian features, labels from a random separating direction with 10% flips.
inline ml::LogisticProblem synthetic_logistic(Index n, Index p, std::uint64_t seed, double lambda) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto nn = static_cast<Eigen::Index>(n);
  const auto pp = static_cast<Eigen::Index>(p);
  Matrix a(nn, pp);
  Vector w(pp);
  for (Eigen::Index j = 0; j < pp; ++j) w(j) = normal(rng);
  Vector y(nn);
  for (Eigen::Index i = 0; i < nn; ++i) {
    for (Eigen::Index j = 0; j < pp; ++j) a(i, j) = normal(rng);
    y(i) = a.row(i).dot(w) >= 0.0 ? 1.0 : -1.0;
    if (unif(rng) < 0.1) y(i) = -y(i);
  }
  return ml::LogisticProblem(std::move(a), std::move(y), lambda);
}

}  // namespace detail

// Builds the problem described by a config's "problem" object. Types:
//   quadratic          {n, p, ratio, seed}            random strongly convex quadratic sum
//   scalar_quadratic   {centers, lambda}              f_i(x) = (x - c_i)^2 / 2
//   rosenbrock         {dim, variant, log_scale, delta, n_copies, noise, noise_seed}
//   rastrigin          {dim, a, log_scale, delta, n_copies, noise, noise_seed}
//   synthetic_logistic {n, p, seed, lambda}
//   least_squares | logistic | mlp
//                      {dataset, task, targets, features, split_seed, standardize, lambda,
//                       positive_class (logistic), hidden (mlp)}
inline ProblemInstance build_problem(const json& spec) {
  const auto type = spec.at("type").get<std::string>();
  ProblemInstance inst;
  inst.metadata["type"] = type;

  if (type == "quadratic") {
    detail::reject_unknown_keys(spec, {"type", "n", "p", "ratio", "seed"}, "problem");
    auto q = QuadraticSum::random_strongly_convex(
        detail::get_or<Index>(spec, "n", 20), detail::get_or<Index>(spec, "p", 5),
        detail::get_or<double>(spec, "ratio", 0.1), detail::get_or<std::uint64_t>(spec, "seed", 7));
    inst.metadata["mu"] = q.strong_convexity();
    inst.metadata["L"] = *q.lipschitz();
    inst.metadata["lambda"] = q.lambda();
    inst.problem = std::make_shared<QuadraticSum>(std::move(q));
    return inst;
  }
  if (type == "scalar_quadratic") {
    detail::reject_unknown_keys(spec, {"type", "centers", "lambda"}, "problem");
    inst.problem = std::make_shared<QuadraticSum>(QuadraticSum::scalar(
        spec.at("centers").get<std::vector<double>>(), detail::get_or<double>(spec, "lambda", 0.0)));
    return inst;
  }
  if (type == "rosenbrock" || type == "rastrigin") {
    detail::reject_unknown_keys(spec,
                                {"type", "dim", "variant", "a", "log_scale", "delta", "n_copies",
                                 "noise", "noise_seed"},
                                "problem");
    const auto dim = detail::get_or<Index>(spec, "dim", 2);
    testfns::TestFunction fn =
        type == "rastrigin"
            ? testfns::TestFunction::rastrigin(dim, detail::get_or<double>(spec, "a", 10.0))
            : testfns::TestFunction::rosenbrock(
                  dim, detail::get_or<std::string>(spec, "variant", "chained") != "vanilla");
    const auto copies = detail::get_or<Index>(spec, "n_copies", 1);
    const auto noise = detail::get_or<double>(spec, "noise", 0.0);
    const auto noise_seed = detail::get_or<std::uint64_t>(spec, "noise_seed", 0);
    if (detail::get_or<bool>(spec, "log_scale", false)) {
      const double delta = detail::get_or<double>(spec, "delta", testfns::kDefaultLogDelta);
      inst.metadata["log_delta"] = delta;
      inst.problem = std::make_shared<testfns::ReplicatedSum<testfns::LogScaleWrapper>>(
          testfns::LogScaleWrapper(fn, delta), copies, noise_seed, noise);
    } else {
      inst.problem = std::make_shared<testfns::ReplicatedSum<testfns::TestFunction>>(
          fn, copies, noise_seed, noise);
    }
    return inst;
  }
  if (type == "synthetic_logistic") {
    detail::reject_unknown_keys(spec, {"type", "n", "p", "seed", "lambda"}, "problem");
    inst.problem = std::make_shared<ml::LogisticProblem>(detail::synthetic_logistic(
        detail::get_or<Index>(spec, "n", 200), detail::get_or<Index>(spec, "p", 10),
        detail::get_or<std::uint64_t>(spec, "seed", 11), detail::get_or<double>(spec, "lambda", 0.0)));
    return inst;
  }
  if (type == "least_squares" || type == "logistic" || type == "mlp") {
    detail::reject_unknown_keys(spec,
                                {"type", "dataset", "task", "targets", "features", "split_seed",
                                 "standardize", "lambda", "positive_class", "hidden"},
                                "problem");
    ml::Dataset all = detail::load_dataset(spec);
    auto [train, val] = ml::split_80_20(all, detail::get_or<std::uint64_t>(spec, "split_seed", 0));
    const bool standardize = detail::get_or<bool>(spec, "standardize", true);
    if (standardize) ml::standardize(train, val, true);
    inst.metadata["standardize"] = standardize;
    inst.metadata["train_size"] = train.size();
    inst.metadata["val_size"] = val.size();
    const double lambda = detail::get_or<double>(spec, "lambda", 0.0);
    if (type == "mlp") {
      auto mlp = std::make_shared<ml::MlpProblem>(train, detail::get_or<Index>(spec, "hidden", 50),
                                                  lambda);
      inst.mlp = mlp;
      inst.problem = std::const_pointer_cast<ml::MlpProblem>(mlp);
    } else if (type == "logistic") {
      const int positive = detail::get_or<int>(spec, "positive_class", 0);
      inst.problem = std::make_shared<ml::LogisticProblem>(
          train.features, ml::one_vs_rest_labels(train, positive), lambda);
    } else {
      if (train.task != ml::Task::regression || train.targets.cols() != 1) {
        throw ConfigError("least_squares needs a single regression target");
      }
      inst.problem =
          std::make_shared<ml::LeastSquaresProblem>(train.features, train.targets.col(0), lambda);
    }
    inst.validation = std::move(val);
    return inst;
  }
  throw ConfigError("unknown problem type '" + type + "'");
}

// ---------------------------------------------------------------------------------------------

inline MethodConfig parse_method(const json& j, const ProblemInstance& inst) {
  detail::reject_unknown_keys(j,
                              {"name", "label", "alpha", "beta1", "beta2", "epsilon", "schedule",
                               "rprop", "asgd_t0", "sag", "gradient", "batch_size"},
                              "method");
  MethodConfig m;
  m.name = j.at("name").get<std::string>();
  m.label = detail::get_or<std::string>(j, "label", m.name);

  if (m.name == "fg") {
    m.algorithm = Algorithm::sgd;
    m.hyper = default_hyper(Algorithm::sgd);
    m.gradient = GradientMode::full;
  } else if (m.name == "sag" || m.name == "sag_sgd" || m.name == "sag_adam") {
    m.sag_kind = m.name == "sag" ? SagKind::sag : m.name == "sag_sgd" ? SagKind::sag_sgd : SagKind::sag_adam;
    m.hyper = HyperParams{};
    const auto lip = inst.problem->lipschitz();
    m.hyper.alpha = lip ? 1.0 / (16.0 * *lip) : 1e-3;
  } else if (auto a = algorithm_from_string(m.name)) {
    m.algorithm = *a;
    m.hyper = default_hyper(*a);
  } else {
    throw ConfigError("unknown method '" + m.name + "'");
  }

  m.hyper.alpha = detail::get_or<double>(j, "alpha", m.hyper.alpha);
  m.hyper.beta1 = detail::get_or<double>(j, "beta1", m.hyper.beta1);
  m.hyper.beta2 = detail::get_or<double>(j, "beta2", m.hyper.beta2);
  m.hyper.epsilon = detail::get_or<double>(j, "epsilon", m.hyper.epsilon);
  m.hyper.asgd_t0 = detail::get_or<std::uint64_t>(j, "asgd_t0", m.hyper.asgd_t0);
  if (j.contains("rprop")) {
    const auto& r = j.at("rprop");
    detail::reject_unknown_keys(r, {"eta_plus", "eta_minus", "step_min", "step_max"}, "rprop");
    m.hyper.rprop_eta_plus = detail::get_or<double>(r, "eta_plus", m.hyper.rprop_eta_plus);
    m.hyper.rprop_eta_minus = detail::get_or<double>(r, "eta_minus", m.hyper.rprop_eta_minus);
    m.hyper.rprop_step_min = detail::get_or<double>(r, "step_min", m.hyper.rprop_step_min);
    m.hyper.rprop_step_max = detail::get_or<double>(r, "step_max", m.hyper.rprop_step_max);
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    detail::reject_unknown_keys(s,
                                {"kind", "warmup_init_lr", "lr", "warmup_updates", "lr_min",
                                 "lr_max", "period_updates", "t_mul"},
                                "schedule");
    auto& sc = m.hyper.schedule;
    if (s.contains("kind")) sc.kind = schedule_kind_from_string(s.at("kind").get<std::string>());
    sc.warmup_init_lr = detail::get_or<double>(s, "warmup_init_lr", sc.warmup_init_lr);
    sc.lr = detail::get_or<double>(s, "lr", sc.lr);
    sc.warmup_updates = detail::get_or<std::uint64_t>(s, "warmup_updates", sc.warmup_updates);
    sc.lr_min = detail::get_or<double>(s, "lr_min", sc.lr_min);
    sc.lr_max = detail::get_or<double>(s, "lr_max", sc.lr_max);
    sc.period_updates = detail::get_or<std::uint64_t>(s, "period_updates", sc.period_updates);
    sc.t_mul = detail::get_or<double>(s, "t_mul", sc.t_mul);
  }
  if (!(m.hyper.schedule.lr > 0.0)) m.hyper.schedule.lr = m.hyper.alpha;
  if (!(m.hyper.schedule.lr_max > 0.0)) m.hyper.schedule.lr_max = m.hyper.schedule.lr;

  if (j.contains("sag")) {
    if (m.sag_kind == SagKind::none) throw ConfigError("'sag' options given for " + m.name);
    const auto& s = j.at("sag");
    detail::reject_unknown_keys(s, {"init", "reweight", "exact_regularization", "jit"}, "sag");
    m.sag.init = sag::table_init_from_string(detail::get_or<std::string>(s, "init", "zeros"));
    m.sag.reweight = detail::get_or<bool>(s, "reweight", false);
    m.sag.exact_regularization = detail::get_or<bool>(s, "exact_regularization", false);
    m.sag.jit = detail::get_or<bool>(s, "jit", false);
  }
  if (m.name != "fg" && j.contains("gradient")) {
    m.gradient = gradient_mode_from_string(j.at("gradient").get<std::string>());
  }
  m.batch_size = detail::get_or<Index>(j, "batch_size", 1);
  if (m.batch_size > 1 && m.gradient == GradientMode::stochastic) m.gradient = GradientMode::minibatch;
  if (m.sag_kind != SagKind::none && m.gradient == GradientMode::full) {
    throw ConfigError(m.name + " cannot use full gradients");
  }
  if (m.sag_kind != SagKind::none && m.batch_size > 1 && m.sag_kind != SagKind::sag) {
    throw ConfigError(m.name + " supports single-index sampling only");
  }
  validate(m.hyper);
  if (m.algorithm == Algorithm::custom_adam && m.sag_kind == SagKind::none && m.hyper.beta2 >= 1.0) {
    throw ConfigError("custom_adam needs beta2 < 1");
  }
  return m;
}

inline json method_to_json(const MethodConfig& m) {
  const auto& h = m.hyper;
  json j = {
      {"name", m.name},
      {"label", m.label},
      {"alpha", h.alpha},
      {"beta1", h.beta1},
      {"beta2", h.beta2},
      {"epsilon", h.epsilon},
      {"asgd_t0", h.asgd_t0},
      {"rprop",
       {{"eta_plus", h.rprop_eta_plus},
        {"eta_minus", h.rprop_eta_minus},
        {"step_min", h.rprop_step_min},
        {"step_max", h.rprop_step_max}}},
      {"schedule",
       {{"kind", to_string(h.schedule.kind)},
        {"warmup_init_lr", h.schedule.warmup_init_lr},
        {"lr", h.schedule.lr},
        {"warmup_updates", h.schedule.warmup_updates},
        {"lr_min", h.schedule.lr_min},
        {"lr_max", h.schedule.lr_max},
        {"period_updates", h.schedule.period_updates},
        {"t_mul", h.schedule.t_mul}}},
      {"gradient", to_string(m.gradient)},
      {"batch_size", m.batch_size},
  };
  if (m.sag_kind != SagKind::none) {
    j["sag"] = {{"init", sag::to_string(m.sag.init)},
                {"reweight", m.sag.reweight},
                {"exact_regularization", m.sag.exact_regularization},
                {"jit", m.sag.jit}};
  }
  return j;
}

inline json init_to_json(const InitSpec& s) {
  switch (s.kind) {
    case InitSpec::Kind::zeros: return {{"kind", "zeros"}};
    case InitSpec::Kind::explicit_point: return {{"kind", "point"}, {"x0", s.point}};
    case InitSpec::Kind::uniform_box: return {{"kind", "uniform"}, {"lo", s.lo}, {"hi", s.hi}};
    case InitSpec::Kind::model_default: return {{"kind", "model"}};
  }
  return nullptr;
}

inline InitSpec parse_init(const json& j, const ProblemInstance& inst) {
  InitSpec s;
  if (inst.mlp) s.kind = InitSpec::Kind::model_default;
  if (j.is_null()) return s;
  detail::reject_unknown_keys(j, {"kind", "x0", "lo", "hi"}, "init");
  const auto kind = detail::get_or<std::string>(j, "kind", j.contains("x0") ? "point" : "zeros");
  if (kind == "zeros") {
    s.kind = InitSpec::Kind::zeros;
  } else if (kind == "point") {
    s.kind = InitSpec::Kind::explicit_point;
    s.point = j.at("x0").get<std::vector<double>>();
    if (s.point.size() != inst.problem->dim()) throw ConfigError("init.x0 has the wrong dimension");
  } else if (kind == "uniform") {
    s.kind = InitSpec::Kind::uniform_box;
    s.lo = detail::get_or<double>(j, "lo", -1.0);
    s.hi = detail::get_or<double>(j, "hi", 1.0);
    if (!(s.lo < s.hi)) throw ConfigError("init: need lo < hi");
  } else if (kind == "model") {
    if (!inst.mlp) throw ConfigError("init kind 'model' needs an mlp problem");
    s.kind = InitSpec::Kind::model_default;
  } else {
    throw ConfigError("unknown init kind '" + kind + "'");
  }
  return s;
}

// Parses a config and resolves every default against the built problem.
inline ExperimentConfig parse_config(const json& j) {
  detail::reject_unknown_keys(j,
                              {"name", "problem", "methods", "iterations", "epochs", "seeds",
                               "record_every", "init", "stabilization", "output", "format"},
                              "config");
  ExperimentConfig c;
  c.name = detail::get_or<std::string>(j, "name", c.name);
  c.problem = j.at("problem");
  auto inst = std::make_shared<ProblemInstance>(build_problem(c.problem));
  c.instance = inst;
  if (!j.contains("methods") || j.at("methods").empty()) throw ConfigError("config lists no methods");
  std::set<std::string> labels;
  for (const auto& mj : j.at("methods")) {
    c.methods.push_back(parse_method(mj, *inst));
    if (!labels.insert(c.methods.back().label).second) {
      throw ConfigError("duplicate method label '" + c.methods.back().label + "'");
    }
  }
  if (j.contains("iterations") && j.contains("epochs")) {
    throw ConfigError("give either iterations or epochs, not both");
  }
  if (j.contains("epochs")) {
    c.epochs = j.at("epochs").get<std::uint64_t>();
    c.iterations = *c.epochs * inst->problem->size();
  } else {
    c.iterations = detail::get_or<std::uint64_t>(j, "iterations", c.iterations);
  }
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (c.seeds.empty()) throw ConfigError("config lists no seeds");
  c.record_every = detail::get_or<std::uint64_t>(j, "record_every", c.record_every);
  if (c.record_every == 0) throw ConfigError("record_every must be positive");
  c.init = parse_init(j.contains("init") ? j.at("init") : json(nullptr), *inst);
  if (j.contains("stabilization")) {
    const auto& s = j.at("stabilization");
    detail::reject_unknown_keys(s, {"window", "tol"}, "stabilization");
    c.stabilization.window = detail::get_or<std::size_t>(s, "window", c.stabilization.window);
    c.stabilization.tol = detail::get_or<double>(s, "tol", c.stabilization.tol);
  }
  c.output = detail::get_or<std::string>(j, "output", c.output);
  c.format = detail::get_or<std::string>(j, "format", c.format);
  if (c.format != "csv" && c.format != "json" && c.format != "both") {
    throw ConfigError("format must be csv, json or both");
  }
  return c;
}

// One epoch visits n components: n single-index steps, ceil(n / b) batch steps, or one
// full-gradient step.
inline std::uint64_t iterations_for(const ExperimentConfig& c, const MethodConfig& m) {
  if (!c.epochs) return c.iterations;
  const std::uint64_t n = c.instance->problem->size();
  switch (m.gradient) {
    case GradientMode::full: return *c.epochs;
    case GradientMode::minibatch: return *c.epochs * ((n + m.batch_size - 1) / m.batch_size);
    case GradientMode::stochastic: break;
  }
  return *c.epochs * n;
}

// Fully resolved config; everything that influences a trajectory appears here.
inline json config_to_json(const ExperimentConfig& c) {
  json methods = json::array();
  for (const auto& m : c.methods) methods.push_back(method_to_json(m));
  return {
      {"name", c.name},
      {"problem", c.problem},
      {"problem_metadata", c.instance ? c.instance->metadata : json::object()},
      {"methods", methods},
      {"iterations", c.iterations},
      {"epochs", c.epochs ? json(*c.epochs) : json(nullptr)},
      {"seeds", c.seeds},
      {"record_every", c.record_every},
      {"init", init_to_json(c.init)},
      {"stabilization", {{"window", c.stabilization.window}, {"tol", c.stabilization.tol}}},
  };
}

// FNV-1a over the canonical dump of the resolved config. Output location and format do not
// enter the hash.
inline std::string config_hash(const ExperimentConfig& c) {
  const std::string text = config_to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j);
}

}  // namespace sagopt::harness
