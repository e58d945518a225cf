#include "xling/thresholding.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include "xling/error.hpp"

namespace xling {

RecallPoint recalled_accuracy(std::span<const PredictionRecord> records, double t) {
  if (records.empty()) throw DataError("recalled_accuracy: no records");
  RecallPoint point{t, std::nullopt, 0.0, 0};
  std::size_t correct = 0;
  for (const auto& r : records) {
    if (!r.gold) throw DataError("recalled_accuracy: record without gold label");
    if (!is_recalled(r, t)) continue;
    ++point.n_recalled;
    correct += r.vote->label == *r.gold;
  }
  point.recall = static_cast<double>(point.n_recalled) / static_cast<double>(records.size());
  if (point.n_recalled > 0) {
    point.accuracy = static_cast<double>(correct) / static_cast<double>(point.n_recalled);
  }
  return point;
}

ThresholdCurve threshold_curve(std::span<const PredictionRecord> records,
                               std::span<const double> grid) {
  if (grid.empty()) throw DataError("threshold grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw DataError("threshold grid must be strictly increasing");
  }
  ThresholdCurve curve;
  for (double t : grid) curve.points.push_back(recalled_accuracy(records, t));
  return curve;
}

double select_alpha(const ThresholdCurve& curve, std::size_t min_recalled) {
  if (curve.points.empty()) throw DataError("select_alpha: empty curve");
  // Recall is non-increasing along the grid, so the valid region is a prefix.
  std::size_t valid = 0;
  while (valid < curve.points.size() && curve.points[valid].n_recalled >= min_recalled &&
         curve.points[valid].n_recalled > 0) {
    ++valid;
  }
  if (valid < 3) return kFallbackAlpha;

  const auto& p = curve.points;
  double best_value = -INFINITY;
  double best_threshold = kFallbackAlpha;
  for (std::size_t i = 1; i + 1 < valid; ++i) {
    const double left = (*p[i].accuracy - *p[i - 1].accuracy) / (p[i].threshold - p[i - 1].threshold);
    const double right = (*p[i + 1].accuracy - *p[i].accuracy) / (p[i + 1].threshold - p[i].threshold);
    const double second = 2.0 * (right - left) / (p[i + 1].threshold - p[i - 1].threshold);
    if (second > best_value) {
      best_value = second;
      best_threshold = p[i].threshold;
    }
  }
  return best_threshold;
}

std::vector<double> default_threshold_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 9; ++i) grid.push_back(i / 10.0);
  for (double t : {0.95, 0.99, 0.995, 0.999}) grid.push_back(t);
  return grid;
}

std::size_t default_min_recalled(std::size_t n_records) {
  return std::max<std::size_t>(10, (n_records + 99) / 100);
}

void write_curve_csv(std::ostream& out, const ThresholdCurve& curve) {
  out << "threshold,accuracy,recall,n_recalled\n";
  const auto precision = out.precision();
  out << std::setprecision(10);
  for (const auto& p : curve.points) {
    out << p.threshold << ',';
    if (p.accuracy) out << *p.accuracy;
    out << ',' << p.recall << ',' << p.n_recalled << '\n';
  }
  out.precision(precision);
}

}  // namespace xling
