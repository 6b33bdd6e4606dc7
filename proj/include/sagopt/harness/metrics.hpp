#pragma once

#include "sagopt/harness/runner.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sagopt::harness {

// Smallest recorded k such that the loss over the trailing window (the `window` recorded
// intervals ending at k, i.e. window + 1 rows) has range <= tol * (1 + |loss(k)|).
// nullopt means the record never stabilizes.
inline std::optional<std::uint64_t> stabilization_iteration(std::span<const TrajectoryRow> rows,
                                                            std::size_t window, double tol) {
  if (window == 0) throw ConfigError("stabilization window must be positive");
  if (window >= rows.size()) {
    throw ConfigError("stabilization window " + std::to_string(window) + " needs more than " +
                      std::to_string(rows.size()) + " recorded rows");
  }
  for (std::size_t j = window; j < rows.size(); ++j) {
    double lo = rows[j].loss;
    double hi = rows[j].loss;
    for (std::size_t q = j - window; q < j; ++q) {
      lo = std::min(lo, rows[q].loss);
      hi = std::max(hi, rows[q].loss);
    }
    if (hi - lo <= tol * (1.0 + std::abs(rows[j].loss))) return rows[j].k;
  }
  return std::nullopt;
}

inline std::optional<std::uint64_t> stabilization_iteration(const RunRecord& rec, std::size_t window,
                                                            double tol) {
  return stabilization_iteration(std::span<const TrajectoryRow>(rec.rows), window, tol);
}

// Distance to the minimizer at the last recorded row, or the last loss when x* is unknown.
inline double final_error(std::span<const TrajectoryRow> rows) {
  if (rows.empty()) return std::nan("");
  const auto& last = rows.back();
  return last.dist_to_opt ? *last.dist_to_opt : last.loss;
}

inline double final_error(const RunRecord& rec) {
  return final_error(std::span<const TrajectoryRow>(rec.rows));
}

enum class FitMode { linear, loglog };

inline std::string to_string(FitMode m) { return m == FitMode::linear ? "linear" : "loglog"; }

struct RateFit {
  FitMode mode = FitMode::linear;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
  bool truncated = false;  // range cut short where the suboptimality stopped being positive
  std::uint64_t k_last = 0;
};

// Least squares of log(value - f_star) against k (linear) or log k (loglog) over
// k_start <= k <= k_end. A non-positive suboptimality ends the range there.
inline RateFit rate_fit(std::span<const std::uint64_t> ks, std::span<const double> values,
                        std::uint64_t k_start, std::uint64_t k_end, double f_star,
                        FitMode mode = FitMode::linear) {
  if (ks.size() != values.size()) throw ContractViolation("rate_fit: ks and values differ in size");
  RateFit fit;
  fit.mode = mode;
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t q = 0; q < ks.size(); ++q) {
    if (ks[q] < k_start || ks[q] > k_end) continue;
    const double gap = values[q] - f_star;
    if (!(gap > 0.0)) {
      fit.truncated = true;
      break;
    }
    if (mode == FitMode::loglog && ks[q] == 0) continue;
    xs.push_back(mode == FitMode::linear ? static_cast<double>(ks[q])
                                         : std::log(static_cast<double>(ks[q])));
    ys.push_back(std::log(gap));
    fit.k_last = ks[q];
  }
  fit.points = xs.size();
  if (xs.size() < 2) throw ConfigError("rate_fit: fewer than two usable points in range");
  const double cnt = static_cast<double>(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t q = 0; q < xs.size(); ++q) {
    mx += xs[q];
    my += ys[q];
  }
  mx /= cnt;
  my /= cnt;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t q = 0; q < xs.size(); ++q) {
    sxx += (xs[q] - mx) * (xs[q] - mx);
    sxy += (xs[q] - mx) * (ys[q] - my);
    syy += (ys[q] - my) * (ys[q] - my);
  }
  if (sxx == 0.0) throw ConfigError("rate_fit: degenerate range");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

inline RateFit rate_fit(const RunRecord& rec, std::uint64_t k_start, std::uint64_t k_end,
                        double f_star, FitMode mode = FitMode::linear) {
  std::vector<std::uint64_t> ks;
  std::vector<double> vs;
  for (const auto& r : rec.rows) {
    ks.push_back(r.k);
    vs.push_back(r.loss);
  }
  return rate_fit(ks, vs, k_start, k_end, f_star, mode);
}

}  // namespace sagopt::harness
