#include "mgpms/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mgpms/error.hpp"

namespace mgpms::eval {

namespace {

void check_inputs(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw ShapeError("labels and scores differ in length");
  for (int l : labels)
    if (l != 0 && l != 1) throw DomainError("labels must be 0 or 1");
  for (double s : scores)
    if (!std::isfinite(s)) throw DomainError("scores must be finite");
}

std::vector<std::size_t> order_by_score(std::span<const double> scores, bool descending) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return idx;
}

}  // namespace

double auc(std::span<const int> labels, std::span<const double> scores) {
  check_inputs(labels, scores);
  const auto idx = order_by_score(scores, false);
  double wins = 0.0;
  double neg_below = 0.0;
  double pos = 0.0;
  for (std::size_t g = 0; g < idx.size();) {
    std::size_t e = g;
    double gp = 0.0, gn = 0.0;
    while (e < idx.size() && scores[idx[e]] == scores[idx[g]]) {
      (labels[idx[e]] == 1 ? gp : gn) += 1.0;
      ++e;
    }
    wins += gp * neg_below + 0.5 * gp * gn;
    neg_below += gn;
    pos += gp;
    g = e;
  }
  if (pos == 0.0 || neg_below == 0.0) throw DomainError("AUC needs both classes");
  return wins / (pos * neg_below);
}

double auprc(std::span<const int> labels, std::span<const double> scores) {
  check_inputs(labels, scores);
  const double positives = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0.0) throw DomainError("AUPRC needs at least one positive");
  const auto idx = order_by_score(scores, true);
  double tp = 0.0, seen = 0.0, area = 0.0;
  for (std::size_t g = 0; g < idx.size();) {
    std::size_t e = g;
    double gp = 0.0;
    while (e < idx.size() && scores[idx[e]] == scores[idx[g]]) {
      gp += labels[idx[e]] == 1 ? 1.0 : 0.0;
      ++e;
    }
    tp += gp;
    seen += static_cast<double>(e - g);
    area += (gp / positives) * (tp / seen);
    g = e;
  }
  return area;
}

LinearFit fit_linear(std::span<const double> x, std::span<const double> s) {
  if (x.size() != s.size()) throw ShapeError("x and s differ in length");
  if (x.size() < 2) throw DomainError("linear fit needs at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double ms = std::accumulate(s.begin(), s.end(), 0.0) / n;
  double sxx = 0.0, sxs = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxs += (x[i] - mx) * (s[i] - ms);
  }
  if (!(sxx > 0.0)) throw DomainError("linear fit needs non-constant x");
  const double slope = sxs / sxx;
  return {slope, ms - slope * mx};
}

TrajectoryMetrics trajectory_metrics(std::span<const double> x, std::span<const double> s) {
  const LinearFit f = fit_linear(x, s);
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = f.intercept + f.slope * x[i] - s[i];
    sse += r * r;
  }
  TrajectoryMetrics m;
  m.slope = f.slope;
  m.consistency = std::abs(f.slope);
  m.mse = sse / static_cast<double>(x.size());
  m.robustness = (1.0 - m.mse) / (1.0 + m.mse);
  return m;
}

MinMax MinMax::fit(const std::vector<std::vector<double>>& trajectories) {
  MinMax m{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& t : trajectories)
    for (double v : t) {
      m.lo = std::min(m.lo, v);
      m.hi = std::max(m.hi, v);
    }
  if (m.lo > m.hi) throw DomainError("no scores to normalize");
  return m;
}

double MinMax::apply(double v) const { return hi > lo ? (v - lo) / (hi - lo) : 0.0; }

std::vector<double> MinMax::apply(std::span<const double> v) const {
  std::vector<double> out;
  out.reserve(v.size());
  for (double x : v) out.push_back(apply(x));
  return out;
}

}  // namespace mgpms::eval
