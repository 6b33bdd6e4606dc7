#pragma once

#include "sagopt/problems.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sagopt::ml {

// ---------------------------------------------------------------------------------------------
// Datasets

enum class Task { classification, regression };

struct Dataset {
  std::string name;
  Task task = Task::classification;
  Matrix features;                  // n x p
  std::vector<int> labels;          // classification: class index per row
  Matrix targets;                   // regression: n x outputs
  Index num_classes = 0;
  std::vector<std::string> feature_names;
  std::vector<std::string> target_names;
  std::uint64_t split_seed = 0;

  Index size() const { return static_cast<Index>(features.rows()); }
  Index num_features() const { return static_cast<Index>(features.cols()); }
  Index num_outputs() const {
    return task == Task::classification ? num_classes : static_cast<Index>(targets.cols());
  }
};

class CsvError : public std::runtime_error {
 public:
  CsvError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Header row names the columns. Targets are named explicitly; features are the listed
// columns, or every non-target column when the list is empty.
struct CsvSchema {
  std::vector<std::string> target_columns = {"target"};
  std::vector<std::string> feature_columns;
  Task task = Task::classification;
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                     : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

inline Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw CsvError("missing header row", 1);
  ++line_no;
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  std::vector<std::string> header;
  for (auto f : detail::split_fields(line)) header.emplace_back(detail::trim(f));
  auto column_of = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigError("schema error: column '" + name + "' not in " + path);
    return static_cast<std::size_t>(it - header.begin());
  };

  if (schema.target_columns.empty()) throw ConfigError("schema error: no target column declared");
  if (schema.task == Task::classification && schema.target_columns.size() != 1) {
    throw ConfigError("schema error: classification takes exactly one target column");
  }
  std::vector<std::size_t> target_idx;
  for (const auto& t : schema.target_columns) target_idx.push_back(column_of(t));
  std::vector<std::size_t> feature_idx;
  if (schema.feature_columns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (std::find(target_idx.begin(), target_idx.end(), c) == target_idx.end()) {
        feature_idx.push_back(c);
      }
    }
  } else {
    for (const auto& f : schema.feature_columns) feature_idx.push_back(column_of(f));
  }
  if (feature_idx.empty()) throw ConfigError("schema error: no feature columns");

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto fields = detail::split_fields(body);
    if (fields.size() != header.size()) {
      throw CsvError("expected " + std::to_string(header.size()) + " fields, found " +
                         std::to_string(fields.size()),
                     line_no);
    }
    std::vector<double> row(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto v = detail::parse_number(fields[c]);
      if (!v) {
        throw CsvError("non-numeric value '" + std::string(detail::trim(fields[c])) +
                           "' in column '" + header[c] + "'",
                       line_no);
      }
      row[c] = *v;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw CsvError("no data rows", line_no);

  Dataset ds;
  ds.name = path;
  ds.task = schema.task;
  const auto n = static_cast<Eigen::Index>(rows.size());
  ds.features.resize(n, static_cast<Eigen::Index>(feature_idx.size()));
  for (Eigen::Index r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < feature_idx.size(); ++c) {
      ds.features(r, static_cast<Eigen::Index>(c)) = rows[static_cast<std::size_t>(r)][feature_idx[c]];
    }
  }
  for (auto c : feature_idx) ds.feature_names.push_back(header[c]);
  for (auto c : target_idx) ds.target_names.push_back(header[c]);

  if (schema.task == Task::classification) {
    // Class indices follow the sorted distinct target values.
    std::map<double, int> classes;
    for (const auto& row : rows) classes.emplace(row[target_idx.front()], 0);
    int next = 0;
    for (auto& [value, idx] : classes) {
      if (value != std::floor(value)) throw ConfigError("classification target must be integral");
      idx = next++;
    }
    for (const auto& row : rows) ds.labels.push_back(classes.at(row[target_idx.front()]));
    ds.num_classes = classes.size();
  } else {
    ds.targets.resize(n, static_cast<Eigen::Index>(target_idx.size()));
    for (Eigen::Index r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < target_idx.size(); ++c) {
        ds.targets(r, static_cast<Eigen::Index>(c)) = rows[static_cast<std::size_t>(r)][target_idx[c]];
      }
    }
  }
  return ds;
}

inline Dataset subset(const Dataset& ds, std::span<const Index> rows) {
  Dataset out;
  out.name = ds.name;
  out.task = ds.task;
  out.num_classes = ds.num_classes;
  out.feature_names = ds.feature_names;
  out.target_names = ds.target_names;
  out.split_seed = ds.split_seed;
  const auto m = static_cast<Eigen::Index>(rows.size());
  out.features.resize(m, ds.features.cols());
  if (ds.task == Task::regression) out.targets.resize(m, ds.targets.cols());
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto src = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
    out.features.row(r) = ds.features.row(src);
    if (ds.task == Task::classification) {
      out.labels.push_back(ds.labels[static_cast<std::size_t>(src)]);
    } else {
      out.targets.row(r) = ds.targets.row(src);
    }
  }
  return out;
}

// Seeded shuffle, then the first floor(0.8 n) rows train and the rest validate.
inline std::pair<Dataset, Dataset> split_80_20(const Dataset& ds, std::uint64_t seed) {
  const Index n = ds.size();
  if (n < 5) throw ConfigError("split needs at least 5 rows");
  std::vector<Index> order(n);
  for (Index i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (Index i = n - 1; i > 0; --i) std::swap(order[i], order[bounded_draw(rng, i + 1)]);
  const Index train = n * 4 / 5;
  auto a = subset(ds, std::span<const Index>(order.data(), train));
  auto b = subset(ds, std::span<const Index>(order.data() + train, n - train));
  a.split_seed = b.split_seed = seed;
  return {std::move(a), std::move(b)};
}

// Per-column affine map fitted on one dataset (population variance). Constant columns keep
// scale 1.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer fit(const Matrix& m) {
    Standardizer s;
    const double n = static_cast<double>(m.rows());
    s.mean = m.colwise().mean().transpose();
    s.scale = Vector::Ones(m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double var = (m.col(c).array() - s.mean(c)).square().sum() / n;
      if (var > 0.0) s.scale(c) = std::sqrt(var);
    }
    return s;
  }

  Matrix apply(const Matrix& m) const {
    Matrix out = m;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out.col(c) = (m.col(c).array() - mean(c)) / scale(c);
    }
    return out;
  }
};

// Standardizes features (and regression targets when asked) using train-split statistics.
inline void standardize(Dataset& train, Dataset& val, bool targets_too) {
  const auto fs = Standardizer::fit(train.features);
  train.features = fs.apply(train.features);
  val.features = fs.apply(val.features);
  if (targets_too && train.task == Task::regression) {
    const auto ts = Standardizer::fit(train.targets);
    train.targets = ts.apply(train.targets);
    val.targets = ts.apply(val.targets);
  }
}

// ---------------------------------------------------------------------------------------------
// Linear models

struct ComponentEval {
  double loss = 0.0;
  Vector grad;
};

// log(1 + exp(t)) without overflow.
inline double softplus(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// (a^T theta - y)^2, plus (lambda / 2) |theta|^2.
inline ComponentEval least_squares_component(const Vector& theta, const Vector& a, double y,
                                             double lambda = 0.0) {
  require_dim(a, static_cast<Index>(theta.size()), "least_squares_component");
  const double resid = a.dot(theta) - y;
  ComponentEval e{resid * resid, 2.0 * resid * a};
  if (lambda > 0.0) {
    e.loss += 0.5 * lambda * theta.squaredNorm();
    e.grad += lambda * theta;
  }
  return e;
}

// log(1 + exp(-y a^T theta)) for y in {-1, +1}, plus (lambda / 2) |theta|^2.
inline ComponentEval logistic_component(const Vector& theta, const Vector& a, double y,
                                        double lambda = 0.0) {
  require_dim(a, static_cast<Index>(theta.size()), "logistic_component");
  if (y != 1.0 && y != -1.0) throw ContractViolation("logistic label must be -1 or +1");
  const double margin = y * a.dot(theta);
  ComponentEval e{softplus(-margin), (-y * sigmoid(-margin)) * a};
  if (lambda > 0.0) {
    e.loss += 0.5 * lambda * theta.squaredNorm();
    e.grad += lambda * theta;
  }
  return e;
}

class LeastSquaresProblem final : public FiniteSumProblem, public LinearStructure {
 public:
  LeastSquaresProblem(Matrix a, Vector y, double lambda = 0.0)
      : FiniteSumProblem(lambda), a_(std::move(a)), y_(std::move(y)) {
    if (a_.rows() != y_.size() || a_.rows() == 0) {
      throw ConfigError("least squares: feature rows and targets differ");
    }
    const Matrix h = (2.0 / static_cast<double>(a_.rows())) * a_.transpose() * a_ +
                     this->lambda() * Matrix::Identity(a_.cols(), a_.cols());
    Eigen::LDLT<Matrix> ldlt(h);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.vectorD().minCoeff() > 0.0) {
      minimizer_ = ldlt.solve((2.0 / static_cast<double>(a_.rows())) * a_.transpose() * y_);
      optimal_value_ = value(*minimizer_);
    }
  }

  Index size() const override { return static_cast<Index>(a_.rows()); }
  Index dim() const override { return static_cast<Index>(a_.cols()); }

  double loss_value(Index i, const Vector& x) const override {
    const double r = a_.row(static_cast<Eigen::Index>(i)).dot(x) - y_(static_cast<Eigen::Index>(i));
    return r * r;
  }
  void loss_gradient(Index i, const Vector& x, Vector& out) const override {
    const auto row = static_cast<Eigen::Index>(i);
    const double z = a_.row(row).dot(x);
    out = link_derivative(i, z) * a_.row(row).transpose();
  }

  const Matrix& features() const override { return a_; }
  double link_derivative(Index i, double z) const override {
    return 2.0 * (z - y_(static_cast<Eigen::Index>(i)));
  }
  const LinearStructure* linear_structure() const override { return this; }

  std::optional<Vector> minimizer() const override { return minimizer_; }
  std::optional<double> optimal_value() const override { return optimal_value_; }
  std::optional<double> lipschitz() const override {
    return 2.0 * a_.rowwise().squaredNorm().maxCoeff() + lambda();
  }

 private:
  Matrix a_;
  Vector y_;
  std::optional<Vector> minimizer_;
  std::optional<double> optimal_value_;
};

class LogisticProblem final : public FiniteSumProblem, public LinearStructure {
 public:
  LogisticProblem(Matrix a, Vector labels, double lambda = 0.0)
      : FiniteSumProblem(lambda), a_(std::move(a)), y_(std::move(labels)) {
    if (a_.rows() != y_.size() || a_.rows() == 0) {
      throw ConfigError("logistic: feature rows and labels differ");
    }
    for (Eigen::Index i = 0; i < y_.size(); ++i) {
      if (y_(i) != 1.0 && y_(i) != -1.0) throw ConfigError("logistic labels must be -1 or +1");
    }
  }

  Index size() const override { return static_cast<Index>(a_.rows()); }
  Index dim() const override { return static_cast<Index>(a_.cols()); }

  double loss_value(Index i, const Vector& x) const override {
    const auto row = static_cast<Eigen::Index>(i);
    return softplus(-y_(row) * a_.row(row).dot(x));
  }
  void loss_gradient(Index i, const Vector& x, Vector& out) const override {
    const auto row = static_cast<Eigen::Index>(i);
    const double z = a_.row(row).dot(x);
    out = link_derivative(i, z) * a_.row(row).transpose();
  }

  const Matrix& features() const override { return a_; }
  double link_derivative(Index i, double z) const override {
    const double y = y_(static_cast<Eigen::Index>(i));
    return -y * sigmoid(-y * z);
  }
  const LinearStructure* linear_structure() const override { return this; }

  std::optional<double> lipschitz() const override {
    return 0.25 * a_.rowwise().squaredNorm().maxCoeff() + lambda();
  }

 private:
  Matrix a_;
  Vector y_;
};

// +1 for rows of class `positive`, -1 otherwise.
inline Vector one_vs_rest_labels(const Dataset& ds, int positive) {
  if (ds.task != Task::classification) throw ConfigError("one-vs-rest needs a classification set");
  Vector y(static_cast<Eigen::Index>(ds.labels.size()));
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    y(static_cast<Eigen::Index>(i)) = ds.labels[i] == positive ? 1.0 : -1.0;
  }
  return y;
}

// ---------------------------------------------------------------------------------------------
// One-hidden-layer perceptron

inline constexpr double kLeakySlope = 0.01;

inline double leaky_relu(double z, double slope = kLeakySlope) { return z > 0.0 ? z : slope * z; }

struct MlpShape {
  Index inputs = 0;
  Index hidden = 50;
  Index outputs = 0;
  double leaky_slope = kLeakySlope;

  Index parameter_count() const { return hidden * inputs + hidden + outputs * hidden + outputs; }
};

enum class LossKind { cross_entropy, mse };

// Flat parameter layout, in order: W1 (hidden x inputs, column-major), b1 (hidden),
// W2 (outputs x hidden, column-major), b2 (outputs).
class MlpModel {
 public:
  using ConstMatrixMap = Eigen::Map<const Matrix>;
  using ConstVectorMap = Eigen::Map<const Vector>;

  explicit MlpModel(MlpShape shape) : shape_(shape), params_(Vector::Zero(
      static_cast<Eigen::Index>(shape.parameter_count()))) {
    if (shape.inputs == 0 || shape.hidden == 0 || shape.outputs == 0) {
      throw ConfigError("mlp: every layer width must be positive");
    }
  }

  static MlpModel unflatten(MlpShape shape, const Vector& flat) {
    MlpModel m(shape);
    require_dim(flat, shape.parameter_count(), "mlp parameters");
    m.params_ = flat;
    return m;
  }

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
  static MlpModel random(MlpShape shape, std::uint64_t seed) {
    MlpModel m(shape);
    std::mt19937_64 rng(seed);
    const double b1 = 1.0 / std::sqrt(static_cast<double>(shape.inputs));
    const double b2 = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
    const Index first = shape.hidden * shape.inputs + shape.hidden;
    for (Index j = 0; j < shape.parameter_count(); ++j) {
      const double bound = j < first ? b1 : b2;
      std::uniform_real_distribution<double> u(-bound, bound);
      m.params_(static_cast<Eigen::Index>(j)) = u(rng);
    }
    return m;
  }

  const MlpShape& shape() const { return shape_; }
  const Vector& flatten() const { return params_; }

  ConstMatrixMap w1() const { return w1_of(shape_, params_); }
  ConstVectorMap b1() const { return b1_of(shape_, params_); }
  ConstMatrixMap w2() const { return w2_of(shape_, params_); }
  ConstVectorMap b2() const { return b2_of(shape_, params_); }

  static ConstMatrixMap w1_of(const MlpShape& s, const Vector& p) {
    return {p.data(), static_cast<Eigen::Index>(s.hidden), static_cast<Eigen::Index>(s.inputs)};
  }
  static ConstVectorMap b1_of(const MlpShape& s, const Vector& p) {
    return {p.data() + s.hidden * s.inputs, static_cast<Eigen::Index>(s.hidden)};
  }
  static ConstMatrixMap w2_of(const MlpShape& s, const Vector& p) {
    return {p.data() + s.hidden * s.inputs + s.hidden, static_cast<Eigen::Index>(s.outputs),
            static_cast<Eigen::Index>(s.hidden)};
  }
  static ConstVectorMap b2_of(const MlpShape& s, const Vector& p) {
    return {p.data() + s.hidden * s.inputs + s.hidden + s.outputs * s.hidden,
            static_cast<Eigen::Index>(s.outputs)};
  }

 private:
  MlpShape shape_;
  Vector params_;
};

struct MlpTargets {
  std::span<const int> labels;  // cross_entropy
  const Matrix* values = nullptr;  // mse: batch x outputs
};

inline Vector mlp_forward(const MlpShape& shape, const Vector& params, const Vector& input) {
  const Vector pre = MlpModel::w1_of(shape, params) * input + MlpModel::b1_of(shape, params);
  const Vector h = pre.unaryExpr([&](double z) { return leaky_relu(z, shape.leaky_slope); });
  return MlpModel::w2_of(shape, params) * h + MlpModel::b2_of(shape, params);
}

// Mean loss over the batch rows and its gradient in the flat layout. Classification uses
// softmax + negative log-likelihood; regression uses the squared error averaged over outputs.
inline ComponentEval mlp_forward_backward(const MlpShape& shape, const Vector& params,
                                          const Matrix& batch, const MlpTargets& targets,
                                          LossKind loss_kind) {
  require_dim(params, shape.parameter_count(), "mlp parameters");
  if (batch.rows() == 0) throw ContractViolation("mlp: empty batch");
  if (static_cast<Index>(batch.cols()) != shape.inputs) {
    throw ContractViolation("mlp: batch has the wrong number of features");
  }
  const auto w1 = MlpModel::w1_of(shape, params);
  const auto b1 = MlpModel::b1_of(shape, params);
  const auto w2 = MlpModel::w2_of(shape, params);
  const auto b2 = MlpModel::b2_of(shape, params);
  const auto hid = static_cast<Eigen::Index>(shape.hidden);
  const auto out_dim = static_cast<Eigen::Index>(shape.outputs);
  const auto in_dim = static_cast<Eigen::Index>(shape.inputs);

  ComponentEval e{0.0, Vector::Zero(params.size())};
  Eigen::Map<Matrix> gw1(e.grad.data(), hid, in_dim);
  Eigen::Map<Vector> gb1(e.grad.data() + hid * in_dim, hid);
  Eigen::Map<Matrix> gw2(e.grad.data() + hid * in_dim + hid, out_dim, hid);
  Eigen::Map<Vector> gb2(e.grad.data() + hid * in_dim + hid + out_dim * hid, out_dim);

  const double inv_b = 1.0 / static_cast<double>(batch.rows());
  Vector pre(hid), h(hid), out(out_dim), dout(out_dim), dh(hid);
  for (Eigen::Index r = 0; r < batch.rows(); ++r) {
    const Vector input = batch.row(r).transpose();
    pre.noalias() = w1 * input;
    pre += b1;
    for (Eigen::Index j = 0; j < hid; ++j) h(j) = leaky_relu(pre(j), shape.leaky_slope);
    out.noalias() = w2 * h;
    out += b2;
    if (!out.allFinite()) throw DivergedError("mlp activations are not finite", 0);

    if (loss_kind == LossKind::cross_entropy) {
      const int label = targets.labels[static_cast<std::size_t>(r)];
      if (label < 0 || label >= out_dim) throw ContractViolation("mlp: label out of range");
      const double mx = out.maxCoeff();
      const Vector ex = (out.array() - mx).exp().matrix();
      const double z = ex.sum();
      e.loss += (std::log(z) + mx - out(label)) * inv_b;
      dout = ex / z;
      dout(label) -= 1.0;
    } else {
      const Vector diff = out - targets.values->row(r).transpose();
      e.loss += diff.squaredNorm() / static_cast<double>(out_dim) * inv_b;
      dout = (2.0 / static_cast<double>(out_dim)) * diff;
    }
    dout *= inv_b;
    gw2.noalias() += dout * h.transpose();
    gb2 += dout;
    dh.noalias() = w2.transpose() * dout;
    for (Eigen::Index j = 0; j < hid; ++j) dh(j) *= pre(j) > 0.0 ? 1.0 : shape.leaky_slope;
    gw1.noalias() += dh * input.transpose();
    gb1 += dh;
  }
  return e;
}

inline ComponentEval mlp_forward_backward(const MlpModel& model, const Matrix& batch,
                                          const MlpTargets& targets, LossKind loss_kind) {
  return mlp_forward_backward(model.shape(), model.flatten(), batch, targets, loss_kind);
}

// Each training row is one component; x is the flat parameter vector.
class MlpProblem final : public FiniteSumProblem {
 public:
  MlpProblem(Dataset train, Index hidden = 50, double lambda = 0.0)
      : FiniteSumProblem(lambda), data_(std::move(train)) {
    shape_.inputs = data_.num_features();
    shape_.hidden = hidden;
    shape_.outputs = data_.num_outputs();
    loss_kind_ = data_.task == Task::classification ? LossKind::cross_entropy : LossKind::mse;
    if (data_.size() == 0) throw ConfigError("mlp problem needs data");
  }

  Index size() const override { return data_.size(); }
  Index dim() const override { return shape_.parameter_count(); }
  const MlpShape& shape() const { return shape_; }
  const Dataset& data() const { return data_; }
  LossKind loss_kind() const { return loss_kind_; }

  double loss_value(Index i, const Vector& x) const override { return eval_row(i, x).loss; }
  void loss_gradient(Index i, const Vector& x, Vector& out) const override {
    out = eval_row(i, x).grad;
  }

  double mean_loss(const Vector& x) const override { return eval_all(x).loss; }
  void mean_loss_gradient(const Vector& x, Vector& out) const override { out = eval_all(x).grad; }

  // Accuracy (classification) or mean squared error (regression) on another split.
  double metric(const Dataset& ds, const Vector& x) const {
    double acc = 0.0;
    for (Index r = 0; r < ds.size(); ++r) {
      const Vector out = mlp_forward(shape_, x, ds.features.row(static_cast<Eigen::Index>(r)).transpose());
      if (ds.task == Task::classification) {
        Eigen::Index best = 0;
        out.maxCoeff(&best);
        acc += best == ds.labels[r] ? 1.0 : 0.0;
      } else {
        acc += (out - ds.targets.row(static_cast<Eigen::Index>(r)).transpose()).squaredNorm() /
               static_cast<double>(out.size());
      }
    }
    return acc / static_cast<double>(ds.size());
  }

 private:
  ComponentEval eval_row(Index i, const Vector& x) const {
    const auto row = static_cast<Eigen::Index>(i);
    const Matrix one = data_.features.row(row);
    if (loss_kind_ == LossKind::cross_entropy) {
      MlpTargets t{std::span<const int>(data_.labels.data() + i, 1), nullptr};
      return mlp_forward_backward(shape_, x, one, t, loss_kind_);
    }
    const Matrix target = data_.targets.row(row);
    MlpTargets t{{}, &target};
    return mlp_forward_backward(shape_, x, one, t, loss_kind_);
  }

  ComponentEval eval_all(const Vector& x) const {
    MlpTargets t{std::span<const int>(data_.labels), &data_.targets};
    return mlp_forward_backward(shape_, x, data_.features, t, loss_kind_);
  }

  Dataset data_;
  MlpShape shape_;
  LossKind loss_kind_ = LossKind::cross_entropy;
};

}  // namespace sagopt::ml
