#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

namespace xling {

/// Unanimous voter decision: the shared argmax and the smallest voter
/// confidence at that class.
struct Vote {
  int label = 0;
  double min_confidence = 0.0;

  bool operator==(const Vote&) const = default;
};

struct PredictionRecord {
  std::optional<Vote> vote;  // empty when the voters disagree (abstain)
  std::optional<int> gold;

  bool operator==(const PredictionRecord&) const = default;
};

/// The decision policy's recall condition: unanimous and min confidence strictly above `alpha`.
inline bool is_recalled(const PredictionRecord& record, double alpha) {
  return record.vote && record.vote->min_confidence > alpha;
}

struct RecallPoint {
  double threshold = 0.0;
  std::optional<double> accuracy;  // undefined when nothing is recalled
  double recall = 0.0;
  std::size_t n_recalled = 0;
};

/// Accuracy and recall over the records recalled at threshold `t`.
RecallPoint recalled_accuracy(std::span<const PredictionRecord> records, double t);

struct ThresholdCurve {
  std::vector<RecallPoint> points;
};

/// Throws DataError unless `grid` is strictly increasing.
ThresholdCurve threshold_curve(std::span<const PredictionRecord> records,
                               std::span<const double> grid);

inline constexpr double kFallbackAlpha = 0.9;

/// Grid point with the largest discrete second derivative of accuracy over
/// the prefix of points recalling at least `min_recalled` records. Ties go
/// to the smaller threshold; fewer than three valid points fall back to 0.9.
double select_alpha(const ThresholdCurve& curve, std::size_t min_recalled);

/// 0.0, 0.1, ..., 0.9, 0.95, 0.99, 0.995, 0.999
std::vector<double> default_threshold_grid();

/// max(10, ceil(1% of n)).
std::size_t default_min_recalled(std::size_t n_records);

/// threshold,accuracy,recall,n_recalled with an empty accuracy cell when undefined.
void write_curve_csv(std::ostream& out, const ThresholdCurve& curve);

}  // namespace xling
